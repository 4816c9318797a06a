import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _brute import dense_averaged
from qquerylab.compressed import (
    U_CALLS_PER_QUERY,
    CStOBackend,
    bottom_index,
    compression_unitary_local,
    csto_equivalence,
    nonbottom_counts,
)
from qquerylab.oracles import (
    CircuitBuilder,
    OracleCall,
    ProductDistribution,
    TableBackend,
    TruthTable,
    acceptance,
    random_product_distribution,
    random_query_circuit,
    run_until,
)
from qquerylab.qsim import make_rng, random_distribution

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_bottom_is_the_last_level():
    d = ProductDistribution.uniform(2, 3)
    assert bottom_index(d) == 3
    u = compression_unitary_local(d[0])
    assert np.allclose(u[:3, 3], np.sqrt(np.full(3, 1 / 3)))


def test_point_mass_distribution_matches_fixed_table():
    rng = make_rng(2)
    c = random_query_circuit(3, 4, 3, rng)
    t = TruthTable.from_list([3, 0, 2], 4)
    got = acceptance(c, CStOBackend(ProductDistribution.point_masses(t)))
    assert got == pytest.approx(acceptance(c, TableBackend(t)), abs=1e-12)


def test_rejects_unnormalized_row():
    with pytest.raises(ValueError):
        compression_unitary_local([0.5, 0.2])


def test_one_query_costs_two_compressions():
    rng = make_rng(8)
    c = random_query_circuit(2, 2, 3, rng)
    backend = CStOBackend(ProductDistribution.uniform(2, 2))
    run_until(c, backend)
    assert backend.u_calls == U_CALLS_PER_QUERY * 3


@settings(max_examples=40, deadline=None)
@given(seed=seeds, m=st.integers(min_value=1, max_value=5))
def test_local_unitary_is_a_unitary_involution(seed, m):
    p = random_distribution(m, make_rng(seed), sparse=True)
    u = compression_unitary_local(p)
    assert np.allclose(u @ u, np.eye(m + 1), atol=1e-12)
    assert np.allclose(u.conj().T @ u, np.eye(m + 1), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, q=st.integers(min_value=1, max_value=3))
def test_compressed_matches_dense_average(seed, q):
    rng = make_rng(seed)
    c = random_query_circuit(2, 3, q, rng)
    d = random_product_distribution(2, 3, rng)
    p_comp, p_enum = csto_equivalence(c, d)
    assert p_comp == pytest.approx(p_enum, abs=1e-9)
    assert p_comp == pytest.approx(dense_averaged(c, [d[x] for x in d.domain]), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, q=st.integers(min_value=1, max_value=3))
def test_bank_records_at_most_one_point_per_query(seed, q):
    rng = make_rng(seed)
    c = random_query_circuit(3, 2, q, rng)
    d = random_product_distribution(3, 2, rng)
    backend = CStOBackend(d)
    final = run_until(c, backend)
    counts = nonbottom_counts(final, backend.bank_registers("O"), bottom_index(d))
    assert counts.max(initial=0) <= q


def test_single_query_on_a_fresh_bank():
    d = ProductDistribution.from_rows([[0.25, 0.75], [1.0, 0.0]])
    backend = CStOBackend(d)
    c = CircuitBuilder(("X", 2), ("Y", 2)).call("O", "X", "Y").build(output=("Y",))
    state = run_until(c, backend)
    # query on x=0 with y=0: response reads 1 with probability D_0(1)
    assert state.probabilities("Y")[1] == pytest.approx(0.75, abs=1e-12)
    assert state.norm() == pytest.approx(1.0)
    assert OracleCall("O", "X", "Y") in c.calls
