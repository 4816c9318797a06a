import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qquerylab.qsim import (
    HADAMARD,
    DensityMatrix,
    LayoutError,
    RegisterLayout,
    StateVector,
    ZeroWeight,
    apply_permutation,
    apply_unitary,
    dist_state,
    make_rng,
    measure_register,
    partial_trace,
    project_normalize,
    qft_matrix,
    random_state,
    random_unitary,
    statistical_distance,
    subsystem_swap,
    symmetrize,
    trace_distance,
    trace_distance_eig,
    unitary_from_first_column,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def two_reg():
    return RegisterLayout.of(("A", 2), ("B", 3))


def test_first_register_is_most_significant():
    lay = two_reg()
    s = StateVector.basis(lay, {"A": 1, "B": 2})
    assert np.argmax(np.abs(s.amps)) == 1 * 3 + 2


def test_hadamard_on_first_register():
    lay = two_reg()
    s = apply_unitary(StateVector.basis(lay), HADAMARD, "A")
    assert np.allclose(s.probabilities("A"), [0.5, 0.5])
    assert np.allclose(s.probabilities("B"), [1, 0, 0])


def test_non_unitary_is_rejected():
    with pytest.raises(ValueError):
        apply_unitary(StateVector.basis(two_reg()), np.ones((2, 2)), "A")


def test_wrong_shape_is_a_layout_error():
    with pytest.raises(LayoutError):
        apply_unitary(StateVector.basis(two_reg()), np.eye(3), "A")


def test_permutation_must_be_bijective():
    with pytest.raises(LayoutError):
        apply_permutation(StateVector.basis(two_reg()), [0, 0], "A")


def test_zero_weight_projection_raises():
    s = StateVector.basis(two_reg())
    with pytest.raises(ZeroWeight):
        project_normalize(s, "A", 1)


def test_measurement_collapses():
    rng = make_rng(3)
    s = apply_unitary(StateVector.basis(two_reg()), HADAMARD, "A")
    m, post, p = measure_register(s, "A", rng)
    assert p == pytest.approx(0.5)
    assert post.probabilities("A")[m] == pytest.approx(1.0)


def test_bell_state_reduced_is_maximally_mixed():
    lay = RegisterLayout.of(("A", 2), ("B", 2))
    bell = StateVector(lay, np.array([1, 0, 0, 1]) / math.sqrt(2))
    rho = partial_trace(bell, ["A"])
    assert np.allclose(rho.matrix, np.eye(2) / 2)


def test_trace_distance_orthogonal_and_equal():
    lay = RegisterLayout.of(("A", 2))
    a, b = StateVector.basis(lay, [0]), StateVector.basis(lay, [1])
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == pytest.approx(0.0)


def test_statistical_distance_support_rules():
    assert statistical_distance({0: 1.0}, {0: 0.5, 1: 0.5}, pad=True) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        statistical_distance({0: 1.0}, {1: 1.0})


def test_dist_state_amplitudes():
    s = dist_state([0.25, 0.75])
    assert np.allclose(np.abs(s.amps) ** 2, [0.25, 0.75])


def test_qft_maps_zero_to_uniform():
    assert np.allclose(qft_matrix(4)[:, 0], np.full(4, 0.5))


def test_symmetrize_two_product_states():
    lay = RegisterLayout.of(("A", 2), ("B", 2))
    rho = DensityMatrix.from_state(StateVector.basis(lay, [0, 1]))
    sym = symmetrize(rho, ["A", "B"])
    expect = np.zeros((4, 4))
    expect[1, 1] = expect[2, 2] = 0.5
    assert np.allclose(sym.matrix, expect)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_unitaries_preserve_norm(seed):
    rng = make_rng(seed)
    lay = RegisterLayout.of(("A", 3), ("B", 2), ("C", 2))
    s = random_state(lay, rng)
    out = apply_unitary(s, random_unitary(6, rng), ["A", "C"])
    assert out.norm() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_mixed_and_pure_evolution_agree(seed):
    rng = make_rng(seed)
    lay = RegisterLayout.of(("A", 2), ("B", 3))
    s = random_state(lay, rng)
    u = random_unitary(3, rng)
    pure = apply_unitary(s, u, "B")
    mixed = apply_unitary(DensityMatrix.from_state(s), u, "B")
    assert np.allclose(mixed.matrix, np.outer(pure.amps, pure.amps.conj()), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_partial_trace_is_a_state(seed):
    rng = make_rng(seed)
    lay = RegisterLayout.of(("A", 2), ("B", 3), ("C", 2))
    rho = partial_trace(random_state(lay, rng), ["C", "A"])
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rho.matrix, rho.matrix.conj().T)
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_trace_distance_routes_agree(seed):
    rng = make_rng(seed)
    lay = RegisterLayout.of(("A", 2), ("B", 2))
    a, b = random_state(lay, rng), random_state(lay, rng)
    assert trace_distance(a, b) == pytest.approx(trace_distance_eig(a, b), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_statistical_distance_is_a_metric(seed):
    rng = make_rng(seed)
    p, q, r = (rng.dirichlet(np.ones(4)) for _ in range(3))
    assert statistical_distance(p, q) == pytest.approx(statistical_distance(q, p))
    assert statistical_distance(p, r) <= statistical_distance(p, q) + statistical_distance(q, r) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_symmetrized_state_commutes_with_swaps(seed):
    rng = make_rng(seed)
    lay = RegisterLayout.of(("A", 2), ("B", 2), ("C", 2))
    rho = DensityMatrix.from_state(random_state(lay, rng))
    sym = symmetrize(rho, ["A", "B", "C"])
    for x, y in itertools.combinations("ABC", 2):
        assert np.allclose(subsystem_swap(sym, [x], [y]).matrix, sym.matrix, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(min_value=1, max_value=6))
def test_unitary_from_first_column(seed, n):
    rng = make_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    u = unitary_from_first_column(v)
    assert np.allclose(u.conj().T @ u, np.eye(n), atol=1e-12)
    assert np.allclose(u[:, 0], v / np.linalg.norm(v), atol=1e-12)


def test_same_seed_same_stream():
    assert np.array_equal(make_rng(42).integers(1000, size=10), make_rng(42).integers(1000, size=10))
