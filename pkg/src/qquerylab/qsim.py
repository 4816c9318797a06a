"""Dense statevector and density-matrix engine over named registers.

Registers are qudits of arbitrary size. The first-listed register is the most
significant digit of the flattened index, so a layout ``[("X", 2), ("Y", 3)]``
stores amplitude ``|x, y>`` at index ``3 * x + y``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

DEFAULT_DIM_CAP = 1 << 20
ATOL = 1e-9
EXACT_ATOL = 1e-12
ZERO_WEIGHT = 1e-12
MAX_SYMMETRIZE = 6


class QsimError(Exception):
    """Base class for simulation errors."""


class LayoutError(QsimError, ValueError):
    """Registers are unknown, duplicated, or do not match."""


class NotUnitary(QsimError, ValueError):
    """A matrix handed to apply_unitary is not unitary."""


class ZeroWeight(QsimError):
    """A post-selection hit a branch of (numerically) zero weight."""

    def __init__(self, register: str, value: int, weight: float):
        super().__init__(f"projection of {register!r} onto {value} has weight {weight:.3e}")
        self.register = register
        self.value = value
        self.weight = weight


# --------------------------------------------------------------------------- rng


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) seeded from a single integer."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child generators; the parent stream is not consumed."""
    return list(rng.spawn(n))


# ------------------------------------------------------------------------ layout


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple[tuple[str, int], ...]
    cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        regs = tuple((str(n), int(d)) for n, d in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise LayoutError(f"duplicate register names in {names}")
        for n, d in regs:
            if d < 2:
                raise LayoutError(f"register {n!r} has size {d} < 2")
        if self.dim > self.cap:
            raise LayoutError(f"layout dimension {self.dim} exceeds cap {self.cap}")

    @classmethod
    def of(cls, *pairs: tuple[str, int], cap: int = DEFAULT_DIM_CAP) -> "RegisterLayout":
        return cls(tuple(pairs), cap)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.registers)

    @property
    def dim(self) -> int:
        return int(math.prod(self.dims)) if self.registers else 1

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise LayoutError(f"unknown register {name!r}; layout has {self.names}") from None

    def size(self, name: str) -> int:
        return self.dims[self.index(name)]

    def axes(self, names: Sequence[str]) -> list[int]:
        axes = [self.index(n) for n in names]
        if len(set(axes)) != len(axes):
            raise LayoutError(f"repeated target registers {list(names)}")
        return axes

    def extend(self, other: "RegisterLayout | Iterable[tuple[str, int]]") -> "RegisterLayout":
        extra = other.registers if isinstance(other, RegisterLayout) else tuple(other)
        return RegisterLayout(self.registers + tuple(extra), max(self.cap, getattr(other, "cap", 0)))

    def sub(self, names: Sequence[str]) -> "RegisterLayout":
        return RegisterLayout(tuple((n, self.size(n)) for n in names), self.cap)

    def flat_index(self, values: Mapping[str, int] | Sequence[int]) -> int:
        if isinstance(values, Mapping):
            vals = [int(values.get(n, 0)) for n in self.names]
        else:
            vals = [int(v) for v in values]
        for v, (n, d) in zip(vals, self.registers):
            if not 0 <= v < d:
                raise LayoutError(f"value {v} out of range for register {n!r} of size {d}")
        return int(np.ravel_multi_index(vals, self.dims)) if self.registers else 0

    def unflatten(self, index: int) -> tuple[int, ...]:
        return tuple(int(v) for v in np.unravel_index(index, self.dims))


# ------------------------------------------------------------------ tensor kernels


def _apply_on_axes(tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract ``matrix`` (out x in over the given axes) into ``tensor``."""
    k = len(axes)
    shape = [tensor.shape[a] for a in axes]
    m = matrix.reshape(shape + shape)
    out = np.tensordot(m, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def _permute_on_axes(tensor: np.ndarray, perm: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply the basis permutation ``|i> -> |perm[i]>`` on the joint index of ``axes``."""
    shape = [tensor.shape[a] for a in axes]
    k = len(axes)
    t = np.moveaxis(tensor, list(axes), list(range(k)))
    rest = t.shape[k:]
    flat = t.reshape((int(np.prod(shape)),) + rest)
    out = np.empty_like(flat)
    out[perm] = flat
    return np.moveaxis(out.reshape(tuple(shape) + rest), list(range(k)), list(axes))


def _check_unitary(u: np.ndarray, atol: float = ATOL) -> None:
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise NotUnitary(f"matrix of shape {u.shape} is not square")
    err = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() if u.size else 0.0
    if err > atol:
        raise NotUnitary(f"matrix deviates from unitarity by {err:.3e}")


def is_unitary(u: np.ndarray, atol: float = ATOL) -> bool:
    try:
        _check_unitary(np.asarray(u, dtype=complex), atol)
    except NotUnitary:
        return False
    return True


# -------------------------------------------------------------------------- states


class StateVector:
    """Pure state over a RegisterLayout. Treat instances as immutable."""

    __slots__ = ("layout", "amps")

    def __init__(self, layout: RegisterLayout, amps, *, normalized: bool = True):
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if amps.shape[0] != layout.dim:
            raise LayoutError(f"{amps.shape[0]} amplitudes for layout of dimension {layout.dim}")
        if normalized:
            nrm = np.linalg.norm(amps)
            if abs(nrm - 1.0) > ATOL:
                raise QsimError(f"state norm {nrm:.12f} is not 1")
        self.layout = layout
        self.amps = amps
        amps.flags.writeable = False

    @classmethod
    def basis(cls, layout: RegisterLayout, values: Mapping[str, int] | Sequence[int] | None = None):
        amps = np.zeros(layout.dim, dtype=complex)
        amps[layout.flat_index(values or {})] = 1.0
        return cls(layout, amps)

    @classmethod
    def zeros(cls, layout: RegisterLayout) -> "StateVector":
        return cls.basis(layout)

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.layout.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def inner(self, other: "StateVector") -> complex:
        _same_layout(self.layout, other.layout)
        return complex(np.vdot(self.amps, other.amps))

    def kron(self, other: "StateVector") -> "StateVector":
        return StateVector(self.layout.extend(other.layout), np.kron(self.amps, other.amps))

    def probabilities(self, names: str | Sequence[str] | None = None) -> np.ndarray:
        """Born distribution of the named registers (joint array over their sizes)."""
        p = np.abs(self.tensor()) ** 2
        return _marginal(p, self.layout, names)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.layout, np.outer(self.amps, self.amps.conj()), check=False)

    def reduced(self, keep: Sequence[str]) -> "DensityMatrix":
        return partial_trace(self.density(), keep) if len(keep) < len(self.layout.names) else self.density()

    def __repr__(self):
        return f"StateVector({self.layout.registers}, norm={self.norm():.6f})"


class DensityMatrix:
    """Mixed state over a RegisterLayout. Treat instances as immutable."""

    __slots__ = ("layout", "matrix")

    def __init__(self, layout: RegisterLayout, matrix, *, check: bool = True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (layout.dim, layout.dim):
            raise LayoutError(f"matrix shape {matrix.shape} does not match dimension {layout.dim}")
        if check:
            if np.abs(matrix - matrix.conj().T).max() > ATOL:
                raise QsimError("density matrix is not Hermitian")
            tr = np.trace(matrix).real
            if abs(tr - 1.0) > ATOL:
                raise QsimError(f"density matrix trace {tr:.12f} is not 1")
            if np.linalg.eigvalsh(matrix).min() < -ATOL:
                raise QsimError("density matrix has a negative eigenvalue")
        self.layout = layout
        self.matrix = matrix
        matrix.flags.writeable = False

    @classmethod
    def maximally_mixed(cls, layout: RegisterLayout) -> "DensityMatrix":
        return cls(layout, np.eye(layout.dim) / layout.dim, check=False)

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return state.density()

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.layout.dims * 2)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def kron(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(self.layout.extend(other.layout), np.kron(self.matrix, other.matrix), check=False)

    def probabilities(self, names: str | Sequence[str] | None = None) -> np.ndarray:
        p = np.real(np.diagonal(self.matrix)).clip(min=0).reshape(self.layout.dims)
        return _marginal(p, self.layout, names)

    def __repr__(self):
        return f"DensityMatrix({self.layout.registers}, trace={self.trace():.6f})"


State = Union[StateVector, DensityMatrix]


def _same_layout(a: RegisterLayout, b: RegisterLayout) -> None:
    if a.registers != b.registers:
        raise LayoutError(f"layout mismatch: {a.registers} vs {b.registers}")


def _marginal(p: np.ndarray, layout: RegisterLayout, names) -> np.ndarray:
    if names is None:
        return p.reshape(-1)
    if isinstance(names, str):
        names = [names]
    axes = layout.axes(names)
    other = tuple(i for i in range(len(layout.dims)) if i not in axes)
    m = p.sum(axis=other) if other else p
    # sum keeps remaining axes in layout order; reorder to the requested order
    order = sorted(axes)
    return np.transpose(m, [order.index(a) for a in axes])


# ---------------------------------------------------------------------- operations


def apply_unitary(state: State, u, targets: str | Sequence[str], *, check: bool = True) -> State:
    """Apply ``u`` on ``targets`` (identity elsewhere); works on pure and mixed states."""
    if isinstance(targets, str):
        targets = [targets]
    u = np.asarray(u, dtype=complex)
    layout = state.layout
    axes = layout.axes(targets)
    tdim = int(math.prod(layout.dims[a] for a in axes))
    if u.shape != (tdim, tdim):
        raise LayoutError(f"unitary of shape {u.shape} on targets {list(targets)} of dimension {tdim}")
    if check:
        _check_unitary(u)
    if isinstance(state, StateVector):
        out = _apply_on_axes(state.tensor(), u, axes)
        return StateVector(layout, out.reshape(-1), normalized=False)
    n = len(layout.dims)
    t = _apply_on_axes(state.tensor(), u, axes)
    t = _apply_on_axes(t, u.conj(), [a + n for a in axes])
    return DensityMatrix(layout, t.reshape(layout.dim, layout.dim), check=False)


def apply_permutation(state: State, perm, targets: str | Sequence[str]) -> State:
    """Apply a classical reversible map given as an index permutation of the target space."""
    if isinstance(targets, str):
        targets = [targets]
    layout = state.layout
    axes = layout.axes(targets)
    perm = np.asarray(perm, dtype=np.int64)
    tdim = int(math.prod(layout.dims[a] for a in axes))
    if perm.shape != (tdim,) or not np.array_equal(np.sort(perm), np.arange(tdim)):
        raise LayoutError("not a permutation of the target space")
    if isinstance(state, StateVector):
        out = _permute_on_axes(state.tensor(), perm, axes)
        return StateVector(layout, out.reshape(-1), normalized=False)
    n = len(layout.dims)
    t = _permute_on_axes(state.tensor(), perm, axes)
    t = _permute_on_axes(t, perm, [a + n for a in axes])
    return DensityMatrix(layout, t.reshape(layout.dim, layout.dim), check=False)


def permutation_matrix(perm: Sequence[int]) -> np.ndarray:
    """Unitary with ``M|i> = |perm[i]>``."""
    perm = np.asarray(perm, dtype=np.int64)
    m = np.zeros((len(perm), len(perm)), dtype=complex)
    m[perm, np.arange(len(perm))] = 1.0
    return m


def measure_register(state: State, target: str, rng: np.random.Generator):
    """Projective measurement of one register in the computational basis.

    Returns
    -------
    (outcome, post_state, prob)
    """
    p = state.probabilities(target)
    p = p / p.sum()
    outcome = int(rng.choice(len(p), p=p))
    post, w = project_normalize(state, target, outcome)
    return outcome, post, w


def project(state: State, target: str, value: int) -> tuple[np.ndarray, float]:
    """Unnormalized projection; returns (array, weight)."""
    layout = state.layout
    ax = layout.index(target)
    if not 0 <= value < layout.dims[ax]:
        raise LayoutError(f"value {value} out of range for register {target!r}")
    t = np.array(state.tensor())
    idx = [slice(None)] * t.ndim
    mask = np.ones(layout.dims[ax], dtype=bool)
    mask[value] = False
    idx[ax] = mask
    t[tuple(idx)] = 0.0
    if isinstance(state, DensityMatrix):
        n = len(layout.dims)
        idx = [slice(None)] * t.ndim
        idx[ax + n] = mask
        t[tuple(idx)] = 0.0
        m = t.reshape(layout.dim, layout.dim)
        return m, float(np.trace(m).real)
    v = t.reshape(-1)
    return v, float(np.vdot(v, v).real)


def project_normalize(state: State, target: str, value: int):
    """Post-select ``target == value``; raises ZeroWeight on an impossible branch."""
    arr, w = project(state, target, value)
    if w < ZERO_WEIGHT:
        raise ZeroWeight(target, value, w)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(state.layout, arr / w, check=False), w
    return StateVector(state.layout, arr / math.sqrt(w)), w


def partial_trace(rho: DensityMatrix | StateVector, keep: Sequence[str]) -> DensityMatrix:
    """Reduced state on ``keep`` (in the given order)."""
    layout = rho.layout
    keep_axes = layout.axes(keep)
    drop = [i for i in range(len(layout.dims)) if i not in keep_axes]
    if isinstance(rho, StateVector):
        t = np.moveaxis(rho.tensor(), keep_axes + drop, list(range(len(layout.dims))))
        kd = int(math.prod(layout.dims[a] for a in keep_axes))
        m = t.reshape(kd, -1)
        return DensityMatrix(layout.sub(keep), m @ m.conj().T, check=False)
    n = len(layout.dims)
    letters = [chr(ord("a") + i) for i in range(n)]
    rows = list(letters)
    cols = [chr(ord("A") + i) for i in range(n)]
    for a in drop:
        cols[a] = rows[a]
    out = [rows[a] for a in keep_axes] + [cols[a] for a in keep_axes]
    spec = "".join(rows) + "".join(cols) + "->" + "".join(out)
    t = np.einsum(spec, rho.tensor())
    kd = int(math.prod(layout.dims[a] for a in keep_axes))
    return DensityMatrix(layout.sub(keep), t.reshape(kd, kd), check=False)


def _as_density(x: State) -> np.ndarray:
    return x.matrix if isinstance(x, DensityMatrix) else np.outer(x.amps, x.amps.conj())


def trace_distance(a: State, b: State) -> float:
    """(1/2)||a - b||_1 via the eigenvalues of the Hermitian difference."""
    _same_layout(a.layout, b.layout)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        # 1 - |<a|b>| from the phase-aligned difference keeps precision near equality
        ip = np.vdot(a.amps, b.amps)
        phase = ip / abs(ip) if abs(ip) > 0 else 1.0
        gap = 0.5 * float(np.vdot(d := a.amps * phase - b.amps, d).real)
        gap = min(1.0, max(0.0, gap))
        return float(math.sqrt(gap * (2.0 - gap)))
    ev = np.linalg.eigvalsh(_as_density(a) - _as_density(b))
    return float(min(1.0, 0.5 * np.abs(ev).sum()))


def trace_distance_eig(a: State, b: State) -> float:
    """Eigenvalue route for any pair, including pure states (used as a cross-check)."""
    _same_layout(a.layout, b.layout)
    ev = np.linalg.eigvalsh(_as_density(a) - _as_density(b))
    return float(0.5 * np.abs(ev).sum())


def phase_min_distance(a: StateVector, b: StateVector) -> float:
    """min over theta of ||a - e^{i theta} b|| = sqrt(2 - 2|<a|b>|)."""
    _same_layout(a.layout, b.layout)
    ip = np.vdot(a.amps, b.amps)
    phase = ip / abs(ip) if abs(ip) > 0 else 1.0
    return float(np.linalg.norm(a.amps * phase - b.amps))


Distribution = Union[Mapping, Sequence[float], np.ndarray]


def _dist_items(p: Distribution) -> dict:
    if isinstance(p, Mapping):
        return {k: float(v) for k, v in p.items()}
    return {i: float(v) for i, v in enumerate(np.asarray(p, dtype=float).reshape(-1))}


def statistical_distance(p: Distribution, q: Distribution, *, pad: bool = False) -> float:
    """(1/2) sum |p_x - q_x|. Supports must agree unless ``pad`` zero-fills them."""
    pd, qd = _dist_items(p), _dist_items(q)
    for name, d in (("p", pd), ("q", qd)):
        if abs(sum(d.values()) - 1.0) > ATOL:
            raise ValueError(f"{name} sums to {sum(d.values())}, not 1")
    if set(pd) != set(qd) and not pad:
        raise ValueError("distributions have different supports; pass pad=True to zero-fill")
    keys = set(pd) | set(qd)
    return 0.5 * sum(abs(pd.get(k, 0.0) - qd.get(k, 0.0)) for k in keys)


def dist_state(d: Distribution, *, name: str = "D", size: int | None = None) -> StateVector:
    """|D> = sum_z sqrt(Pr[z]) |z> on a single register."""
    items = _dist_items(d)
    if any(v < -ATOL for v in items.values()) or abs(sum(items.values()) - 1.0) > ATOL:
        raise ValueError("dist_state needs a normalized nonnegative distribution")
    n = max(2, size or (max(items) + 1 if items else 2))
    amps = np.zeros(n, dtype=complex)
    for k, v in items.items():
        amps[int(k)] = math.sqrt(max(v, 0.0))
    return StateVector(RegisterLayout.of((name, n)), amps)


def symmetrize(rho: DensityMatrix, subsystems: Sequence[Sequence[str] | str]) -> DensityMatrix:
    """Exact average of P(pi) rho P(pi)^dagger over all permutations of the subsystems.

    Each subsystem is a register name or a list of register names; all subsystems
    must have identical register size signatures.
    """
    groups = [[s] if isinstance(s, str) else list(s) for s in subsystems]
    n = len(groups)
    if n > MAX_SYMMETRIZE:
        raise ValueError(f"symmetrize supports at most {MAX_SYMMETRIZE} subsystems, got {n}")
    layout = rho.layout
    sig = [tuple(layout.size(r) for r in g) for g in groups]
    if len(set(sig)) > 1:
        raise LayoutError(f"subsystems have unequal dimensions {sig}")
    axes_groups = [layout.axes(g) for g in groups]
    nax = len(layout.dims)
    t = rho.tensor()
    acc = np.zeros_like(t)
    perms = list(itertools.permutations(range(n)))
    for pi in perms:
        order = list(range(2 * nax))
        # subsystem i moves to slot pi[i]
        for i, src in enumerate(axes_groups):
            dst = axes_groups[pi[i]]
            for s, d in zip(src, dst):
                order[d] = s
                order[d + nax] = s + nax
        acc += np.transpose(t, order)
    acc /= len(perms)
    return DensityMatrix(layout, acc.reshape(layout.dim, layout.dim), check=False)


def subsystem_swap(rho: DensityMatrix, first: Sequence[str], second: Sequence[str]) -> DensityMatrix:
    """Conjugate by the swap of two equally shaped subsystems."""
    layout = rho.layout
    a, b = layout.axes(list(first)), layout.axes(list(second))
    nax = len(layout.dims)
    order = list(range(2 * nax))
    for x, y in zip(a, b):
        order[x], order[y] = y, x
        order[x + nax], order[y + nax] = y + nax, x + nax
    t = np.transpose(rho.tensor(), order)
    return DensityMatrix(layout, t.reshape(layout.dim, layout.dim), check=False)


# ------------------------------------------------------------------------- random


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_state(layout: RegisterLayout, rng: np.random.Generator) -> StateVector:
    v = rng.standard_normal(layout.dim) + 1j * rng.standard_normal(layout.dim)
    return StateVector(layout, v / np.linalg.norm(v))


def random_distribution(n: int, rng: np.random.Generator, *, sparse: bool = False) -> np.ndarray:
    """Random probability vector of length ``n`` (optionally with random zeros)."""
    p = rng.exponential(size=n)
    if sparse and n > 1:
        keep = rng.random(n) < 0.6
        keep[rng.integers(n)] = True
        p = np.where(keep, p, 0.0)
    return p / p.sum()


def unitary_from_first_column(v: Sequence[complex]) -> np.ndarray:
    """A unitary whose first column is the normalized vector ``v`` (Householder)."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    n = len(v)
    phase = v[0] / abs(v[0]) if abs(v[0]) > 0 else 1.0
    e = np.zeros(n, dtype=complex)
    e[0] = 1.0
    w = v - phase * e
    if np.linalg.norm(w) < 1e-15:
        return phase * np.eye(n, dtype=complex)
    w = w / np.linalg.norm(w)
    h = np.eye(n, dtype=complex) - 2.0 * np.outer(w, w.conj())
    # h e0 = phase-adjusted v up to sign; fix the phase of the first column
    col = h[:, 0]
    k = np.argmax(np.abs(v))
    return h * (v[k] / col[k])


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def qft_matrix(n: int) -> np.ndarray:
    """Discrete Fourier transform on an n-level register (maps |0> to the uniform state)."""
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(2j * np.pi * j * k / n) / math.sqrt(n)
