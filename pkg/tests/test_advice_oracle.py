import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _brute import dense_averaged
from qquerylab.advice_oracle import (
    AdviceSpec,
    AdvOBackend,
    AdvOSession,
    DatabaseSpace,
    PairDatabase,
    advice_bottom_counts,
    advice_equivalence,
    comp_x,
    comp_x_via_reflection,
    exact_reflection,
    manifold_defect,
    manifold_state,
    random_advice_spec,
    tilde_u_x,
)
from qquerylab.oracles import acceptance, random_query_circuit, run_until
from qquerylab.qsim import make_rng, trace_distance

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_manifold(spec, capacity, rng, room_for=None):
    """Random combination of |D>|S(|D|)>; with ``room_for`` only databases Comp_x can act on."""
    space = DatabaseSpace(spec.domain, spec.dim, capacity)
    amps = {}
    for db in space.databases:
        if room_for is not None and len(db) == capacity and db.lookup(room_for) is None:
            continue
        amps[(db.pairs, len(db))] = complex(rng.standard_normal(), rng.standard_normal())
    return manifold_state(spec, capacity, amps)


def test_database_space_size():
    # capacity 2, domain {0,1}, dim 2: 1 empty + 2*2 singletons + 4 pairs
    space = DatabaseSpace((0, 1), 2, 2)
    assert len(space) == 9
    assert space.databases[0].pairs == ()


def test_pair_database_stays_sorted():
    db = PairDatabase(((2, 0),), 3).insert(0, 1).insert(1, 1)
    assert db.pairs == ((0, 1), (1, 1), (2, 0))
    with pytest.raises(ValueError):
        db.insert(1, 0)
    with pytest.raises(ValueError):
        PairDatabase(((1, 0), (0, 0)), 2)


def test_induced_distribution_rows():
    rng = make_rng(1)
    spec = random_advice_spec(2, 3, rng)
    d = spec.induced_distribution()
    for x in spec.domain:
        assert np.allclose(d[x], np.abs(spec.unitaries[x] @ spec.psi) ** 2)


def test_spec_validation():
    with pytest.raises(ValueError):
        AdviceSpec(np.array([1.0, 1.0]), {0: np.eye(2)})
    with pytest.raises(ValueError):
        AdviceSpec(np.array([1.0, 0.0]), {0: np.eye(3)})


def test_empty_database_is_on_manifold():
    spec = random_advice_spec(2, 2, make_rng(4))
    s = manifold_state(spec, 2, {((), 0): 1.0})
    assert manifold_defect(s, spec) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert set(advice_bottom_counts(s)) == {0}


def test_comp_x_inserts_a_row_into_the_empty_database():
    spec = random_advice_spec(2, 2, make_rng(6))
    s = manifold_state(spec, 1, {((), 0): 1.0})
    out = comp_x(s, 0, spec)
    # the only component left has row 0 present and one bottom slot
    assert set(advice_bottom_counts(out)) == {1}


def test_reflection_mode_call_budget_in_a_circuit():
    rng = make_rng(5)
    spec = random_advice_spec(2, 2, rng)
    c = random_query_circuit(2, 2, 2, rng)
    b = AdvOBackend(spec, mode="reflection")
    p_refl = acceptance(c, b)
    p_dir = acceptance(c, AdvOBackend(spec))
    assert p_refl == pytest.approx(p_dir, abs=1e-9)
    assert b.reflection_calls and max(b.reflection_calls) <= 2


def test_mode_is_validated():
    with pytest.raises(ValueError):
        AdvOBackend(random_advice_spec(1, 2, make_rng(0)), mode="magic")


def test_session_repeats_its_answer():
    rng = make_rng(9)
    spec = random_advice_spec(2, 2, rng)
    sess = AdvOSession(spec, 2)
    for p, z, post in sess.branches(sess.initial, 1):
        again = sess.branches(post, 1)
        assert len(again) == 1 and again[0][1] == z
        assert again[0][0] == pytest.approx(1.0, abs=1e-9)


def test_session_first_answer_follows_induced_row():
    rng = make_rng(10)
    spec = random_advice_spec(2, 2, rng)
    sess = AdvOSession(spec, 1)
    got = {z: p for p, z, _ in sess.branches(sess.initial, 0)}
    row = spec.induced_distribution()[0]
    for z in range(2):
        assert got.get(z, 0.0) == pytest.approx(row[z], abs=1e-9)


def test_session_joint_answers_are_independent_rows():
    rng = make_rng(12)
    spec = random_advice_spec(2, 2, rng)
    sess = AdvOSession(spec, 2)
    d = spec.induced_distribution()
    for p0, z0, s0 in sess.branches(sess.initial, 0):
        for p1, z1, _ in sess.branches(s0, 1):
            assert p0 * p1 == pytest.approx(d[0][z0] * d[1][z1], abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, x=st.integers(min_value=0, max_value=1))
def test_comp_x_is_an_involution_on_the_manifold(seed, x):
    rng = make_rng(seed)
    spec = random_advice_spec(2, 2, rng)
    s = random_manifold(spec, 2, rng)
    once = comp_x(s, x, spec)
    assert once.norm() == pytest.approx(1.0, abs=1e-12)
    assert manifold_defect(once, spec)[0] == pytest.approx(0.0, abs=1e-9)
    assert trace_distance(comp_x(once, x, spec), s) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=seeds, x=st.integers(min_value=0, max_value=1))
def test_reflection_matches_direct_comp(seed, x):
    rng = make_rng(seed)
    spec = random_advice_spec(2, 2, rng)
    s = random_manifold(spec, 1, rng, room_for=x)
    refl = exact_reflection(spec.psi)
    via = comp_x_via_reflection(s, x, spec, refl)
    assert np.max(np.abs(via.amps - comp_x(s, x, spec).amps)) <= 1e-9
    assert refl.calls <= 2


@settings(max_examples=20, deadline=None)
@given(seed=seeds, x=st.integers(min_value=0, max_value=1))
def test_tilde_u_then_adjoint_is_identity(seed, x):
    rng = make_rng(seed)
    spec = random_advice_spec(2, 2, rng)
    s = random_manifold(spec, 2, rng)
    back = tilde_u_x(tilde_u_x(s, x, spec), x, spec, adjoint=True)
    assert np.allclose(back.amps, s.amps, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, q=st.integers(min_value=1, max_value=2))
def test_advice_oracle_matches_dense_average(seed, q):
    rng = make_rng(seed)
    spec = random_advice_spec(2, 2, rng, sparse=True)
    c = random_query_circuit(2, 2, q, rng)
    p_adv, p_enum = advice_equivalence(c, spec)
    d = spec.induced_distribution()
    assert p_adv == pytest.approx(p_enum, abs=1e-9)
    assert p_adv == pytest.approx(dense_averaged(c, [d[x] for x in d.domain]), abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(seed=seeds)
def test_queries_keep_the_state_on_the_manifold(seed):
    rng = make_rng(seed)
    spec = random_advice_spec(2, 2, rng)
    c = random_query_circuit(2, 2, 2, rng)
    final = run_until(c, AdvOBackend(spec, debug=True))
    assert final.norm() == pytest.approx(1.0, abs=1e-12)
