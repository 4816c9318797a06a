import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _brute import dense_acceptance, dense_averaged
from qquerylab.oracles import (
    BudgetExceeded,
    CircuitBuilder,
    EnumerationTooLarge,
    OracleError,
    ProductDistribution,
    TableBackend,
    TruthTable,
    UnresolvedSlot,
    acceptance,
    dump_circuit,
    oracle_averaged_acceptance,
    parse_circuit,
    random_product_distribution,
    random_query_circuit,
    run_circuit,
)
from qquerylab.qsim import HADAMARD, PAULI_X, make_rng

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_truth_table_must_be_total():
    with pytest.raises(OracleError):
        TruthTable((0, 1), {0: 1}, 2)


def test_truth_table_alphabet_bound():
    with pytest.raises(OracleError):
        TruthTable.from_list([0, 3], alphabet=2)


def test_distribution_rows_must_normalize():
    with pytest.raises(OracleError):
        ProductDistribution.from_rows([[0.5, 0.4]])


def test_enumeration_weights_sum_to_one():
    d = ProductDistribution.from_rows([[0.2, 0.8], [0.5, 0.5], [1.0, 0.0]])
    items = list(d.enumerate())
    assert len(items) == d.family_size() == 4
    assert sum(w for _, w in items) == pytest.approx(1.0)


def test_enumeration_cap():
    d = ProductDistribution.uniform(6, 4)
    with pytest.raises(EnumerationTooLarge):
        list(d.enumerate(cap=100))


def test_deutsch_style_parity():
    # H on X, query into a |-> response, H on X: reads out f(0) xor f(1)
    b = CircuitBuilder(("X", 2), ("Y", 2))
    b.u(PAULI_X, "Y").u(HADAMARD, "Y").u(HADAMARD, "X").call("O", "X", "Y").u(HADAMARD, "X")
    c = b.build(output=("X",))
    for f in ([0, 0], [0, 1], [1, 0], [1, 1]):
        assert acceptance(c, TableBackend(TruthTable.from_list(f, 2))) == pytest.approx(f[0] ^ f[1])


def test_unresolved_slot():
    c = CircuitBuilder(("X", 2), ("Y", 2)).call("G", "X", "Y").build()
    with pytest.raises(UnresolvedSlot):
        acceptance(c, TableBackend({"O": TruthTable.from_list([0, 1])}))


def test_budget_is_enforced():
    b = CircuitBuilder(("X", 2), ("Y", 2)).call("O", "X", "Y").call("O", "X", "Y")
    with pytest.raises(BudgetExceeded):
        b.build(budget=1)


def test_run_circuit_distribution_sums_to_one():
    rng = make_rng(5)
    c = random_query_circuit(3, 3, 2, rng)
    dist, _ = run_circuit(c, TableBackend(TruthTable.from_list([0, 2, 1], 3)))
    assert sum(dist.values()) == pytest.approx(1.0)


def test_independent_slots_are_averaged_separately():
    rng = make_rng(11)
    c = random_query_circuit(2, 2, 2, rng, slot=["F", "G"])
    d = ProductDistribution.from_rows([[0.3, 0.7], [0.6, 0.4]])
    shared = oracle_averaged_acceptance(c, d)
    split = oracle_averaged_acceptance(c, {s: d for s in c.slots})
    assert 0.0 <= split <= 1.0 and 0.0 <= shared <= 1.0
    if len(c.slots) == 1:
        assert split == pytest.approx(shared)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, q=st.integers(min_value=0, max_value=3))
def test_table_backend_matches_dense_reference(seed, q):
    rng = make_rng(seed)
    c = random_query_circuit(3, 4, q, rng)
    outs = [int(v) for v in rng.integers(4, size=3)]
    got = acceptance(c, TableBackend(TruthTable.from_list(outs, 4)))
    assert got == pytest.approx(dense_acceptance(c, outs), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, q=st.integers(min_value=1, max_value=2))
def test_averaged_acceptance_matches_dense_reference(seed, q):
    rng = make_rng(seed)
    c = random_query_circuit(2, 3, q, rng)
    d = random_product_distribution(2, 3, rng)
    rows = [d[x] for x in d.domain]
    assert oracle_averaged_acceptance(c, d) == pytest.approx(dense_averaged(c, rows), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, q=st.integers(min_value=0, max_value=3))
def test_circuit_text_round_trip(seed, q):
    rng = make_rng(seed)
    c = random_query_circuit(2, 2, q, rng)
    back = parse_circuit(dump_circuit(c))
    assert back == c
    assert back.key() == c.key()


def test_parse_reports_line_numbers():
    with pytest.raises(OracleError, match="line 2"):
        parse_circuit("REG X 2\nBOGUS\n")
