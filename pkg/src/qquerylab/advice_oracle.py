"""Compressed oracle with advice.

The oracle row for x is distributed as the computational-basis measurement of
``U_x|psi>``. Instead of a dense bank, the oracle keeps

* a database register whose basis states are sorted lists of (x, y) pairs with
  at most one pair per x and at most ``capacity`` pairs, and
* an advice register of ``capacity`` slots, each holding either bottom or a copy
  of ``|psi>``; ``S(a)`` denotes bottom in the first ``a`` slots and ``psi`` in
  the remaining ones.

``comp_x`` swaps ``|D>|S(a)>`` (row x absent) with
``sum_z alpha_z |D + (x, z)>|S(a+1)>`` and is the identity on everything
orthogonal to those pairs. A query is, controlled on the query register,
``Comp_x^dag . Ut_x^dag . StdO . Ut_x . Comp_x``.

``comp_x_via_reflection`` realizes the same unitary with two calls to the
reflection ``I - 2|psi><psi|`` acting on a single copy register.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .oracles import (
    ENUMERATION_CAP,
    OracleBackend,
    OracleCall,
    OracleCircuit,
    ProductDistribution,
    acceptance,
    is_power_of_two,
    oracle_averaged_acceptance,
)
from .qsim import ATOL, HADAMARD, LayoutError, StateVector, _check_unitary

EMPTY = None
TINY = 1e-12


class AdviceExhausted(RuntimeError):
    """A row had to be created but no advice copy (or database slot) was left."""


class ManifoldViolation(AssertionError):
    """Debug check: the state left the span on which Comp_x is defined."""


class AncillaNotRestored(AssertionError):
    """Debug check: work registers of the reflection circuit were not returned to their start."""


# ------------------------------------------------------------------------- spec


@dataclass(frozen=True)
class AdviceSpec:
    """Advice state ``psi`` (dimension d) and per-input unitaries ``U_x``."""

    psi: np.ndarray
    unitaries: Mapping[int, np.ndarray]
    domain: tuple = field(default=())

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(psi) - 1.0) > ATOL:
            raise ValueError("advice state must be normalized")
        us = {}
        for x, u in self.unitaries.items():
            u = np.asarray(u, dtype=complex)
            if u.shape != (len(psi), len(psi)):
                raise ValueError(f"U_{x} has shape {u.shape}, advice dimension is {len(psi)}")
            _check_unitary(u)
            us[x] = u
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "unitaries", us)
        object.__setattr__(self, "domain", tuple(self.domain) if self.domain else tuple(sorted(us)))

    @property
    def dim(self) -> int:
        return len(self.psi)

    def row_distribution(self, x) -> np.ndarray:
        return np.abs(self.unitaries[x] @ self.psi) ** 2

    def induced_distribution(self) -> ProductDistribution:
        return ProductDistribution(
            {x: self.row_distribution(x) / self.row_distribution(x).sum() for x in self.domain}, self.dim, self.domain
        )


# --------------------------------------------------------------------- database


def _pairs_valid(pairs) -> bool:
    xs = [p[0] for p in pairs]
    return xs == sorted(xs) and len(set(xs)) == len(xs)


@dataclass(frozen=True)
class PairDatabase:
    """Sorted (x, y) pairs, at most one per x, stored in ``capacity`` slots."""

    pairs: tuple
    capacity: int

    def __post_init__(self):
        pairs = tuple((int(x), int(y)) for x, y in self.pairs)
        if not _pairs_valid(pairs):
            raise ValueError(f"pairs {pairs} are not sorted with distinct inputs")
        if len(pairs) > self.capacity:
            raise ValueError(f"{len(pairs)} pairs exceed capacity {self.capacity}")
        object.__setattr__(self, "pairs", pairs)

    def slots(self) -> tuple:
        """Fixed-capacity slot array, empty slots last."""
        return self.pairs + (EMPTY,) * (self.capacity - len(self.pairs))

    def lookup(self, x):
        for px, py in self.pairs:
            if px == x:
                return py
        return None

    def insert(self, x, y) -> "PairDatabase":
        """Sorted insertion (shifts later pairs one slot to the right)."""
        if self.lookup(x) is not None:
            raise ValueError(f"row {x} already present")
        return PairDatabase(tuple(sorted(self.pairs + ((x, y),))), self.capacity)

    def remove(self, x) -> "PairDatabase":
        return PairDatabase(tuple(p for p in self.pairs if p[0] != x), self.capacity)

    def __len__(self):
        return len(self.pairs)


class DatabaseSpace:
    """Enumeration of every valid database; the database register's basis.

    Index 0 is the empty database.
    """

    def __init__(self, domain: Sequence[int], dim: int, capacity: int):
        self.domain = tuple(domain)
        self.dim = dim
        self.capacity = capacity
        dbs = []
        for k in range(min(capacity, len(self.domain)) + 1):
            for xs in itertools.combinations(self.domain, k):
                for ys in itertools.product(range(dim), repeat=k):
                    dbs.append(PairDatabase(tuple(zip(xs, ys)), capacity))
        self.databases = dbs
        self.index = {db.pairs: i for i, db in enumerate(dbs)}
        self.sizes = np.array([len(db) for db in dbs])
        self._tables = {}

    def __len__(self):
        return len(self.databases)

    @property
    def register_size(self) -> int:
        return max(2, len(self.databases))

    def tables(self, x):
        """Index arrays for row x.

        free: databases without row x and room for one more pair
        ins:  ins[k, z] is the database free[k] with (x, z) inserted
        value: value[i] = D_i(x) or -1
        """
        if x not in self._tables:
            free, ins = [], []
            value = np.full(len(self.databases), -1, dtype=np.int64)
            for i, db in enumerate(self.databases):
                y = db.lookup(x)
                if y is not None:
                    value[i] = y
                elif len(db) < self.capacity:
                    free.append(i)
                    ins.append([self.index[db.insert(x, z).pairs] for z in range(self.dim)])
            self._tables[x] = (
                np.array(free, dtype=np.int64),
                np.array(ins, dtype=np.int64).reshape(len(free), self.dim),
                value,
            )
        return self._tables[x]


# --------------------------------------------------------------- advice register


def padded(psi: np.ndarray) -> np.ndarray:
    """psi as a vector on d+1 levels, bottom last."""
    return np.concatenate([np.asarray(psi, dtype=complex), [0.0]])


def bottom_vector(dim: int) -> np.ndarray:
    e = np.zeros(dim + 1, dtype=complex)
    e[dim] = 1.0
    return e


def advice_state(psi: np.ndarray, capacity: int, a: int) -> np.ndarray:
    """|S(a)>: bottom in the first ``a`` slots, psi in the rest."""
    d = len(psi)
    v = np.ones(1, dtype=complex)
    for i in range(capacity):
        v = np.kron(v, bottom_vector(d) if i < a else padded(psi))
    return v


def advice_basis_matrix(psi: np.ndarray, capacity: int) -> np.ndarray:
    """Rows a = 0..capacity hold |S(a)>."""
    return np.array([advice_state(psi, capacity, a) for a in range(capacity + 1)])


# ------------------------------------------------------------------ direct Comp_x


def comp_x_array(
    t: np.ndarray, x, space: DatabaseSpace, psi: np.ndarray, *, sab: np.ndarray | None = None, debug: bool = False
) -> np.ndarray:
    """Comp_x on an array of shape (R, len(space), (d+1)**capacity).

    ``R`` is a batch of untouched registers. Returns a new array.
    """
    q = space.capacity
    if sab is None:
        sab = advice_basis_matrix(psi, q)
    free, ins, value = space.tables(x)
    ndb = len(space)
    coeff = t[:, :ndb, :] @ sab.conj().T  # (R, ndb, q+1)
    absent = value < 0
    if debug:
        _assert_manifold(t, coeff)
    # b = 0 with row x absent, or no room for another pair
    full_rows = absent & (space.sizes >= q)
    exhausted = np.sum(np.abs(coeff[:, absent, q]) ** 2) + np.sum(np.abs(coeff[:, full_rows, :q]) ** 2)
    if exhausted > TINY:
        raise AdviceExhausted(f"creating row {x} needs an advice copy but none is left (weight {exhausted:.2e})")
    out = np.array(t)
    if len(free) == 0:
        return out
    alpha = np.asarray(psi, dtype=complex)
    ca = coeff[:, free, :q]  # (R, K, q)
    cb = np.einsum("z,rkza->rka", alpha.conj(), coeff[:, ins, 1:])
    delta = cb - ca
    out[:, free, :] += np.einsum("rka,as->rks", delta, sab[:q])
    # every D + (x, z) is distinct, so plain fancy assignment is safe
    upd = np.einsum("rka,z,as->rkzs", delta, alpha, sab[1:])
    out[:, ins.reshape(-1), :] -= upd.reshape(t.shape[0], -1, t.shape[2])
    return out


def _assert_manifold(t: np.ndarray, coeff: np.ndarray) -> None:
    total = float(np.sum(np.abs(t) ** 2))
    inside = float(np.sum(np.abs(coeff) ** 2))
    if total - inside > 1e-10:
        raise ManifoldViolation(f"weight {total - inside:.3e} outside span of |D>|S(a)>")


def tilde_u_array(t: np.ndarray, x, space: DatabaseSpace, u: np.ndarray) -> np.ndarray:
    """Rotate the y of row (x, y) by ``u``; identity where the row is absent."""
    free, ins, _ = space.tables(x)
    out = np.array(t)
    if len(free) == 0:
        return out
    block = t[:, ins, :]  # (R, K, d, S)
    out[:, ins, :] = np.einsum("wz,rkzs->rkws", u, block)
    return out


# ---------------------------------------------------------- reflection backend


class ReflectionBackend:
    """Black-box reflection acting on one copy register of ``d + 1`` levels.

    Counts calls so callers can audit the query budget.
    """

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.calls = 0

    def apply(self, tensor: np.ndarray, axis: int) -> np.ndarray:
        self.calls += 1
        return np.moveaxis(np.tensordot(self.matrix, tensor, axes=([1], [axis])), 0, axis)


def exact_reflection(psi) -> ReflectionBackend:
    """I - 2|psi><psi| on the copy register (bottom is fixed)."""
    if isinstance(psi, StateVector):
        psi = psi.amps
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if abs(np.linalg.norm(psi) - 1.0) > ATOL:
        raise ValueError("reflection needs a normalized state")
    v = padded(psi)
    return ReflectionBackend(np.eye(len(v), dtype=complex) - 2.0 * np.outer(v, v.conj()))


# --------------------------------------------------------- reflection Comp_x


class _ReflectionCircuit:
    """Permutations and axis bookkeeping for one (space, x) pair.

    Extended array axes: 0 batch, 1 database, 2..q+1 advice slots, then
    W (copy register), B (parking register for controlled reflections),
    anc (flag qubit), c (case qubit).
    """

    def __init__(self, space: DatabaseSpace, x):
        self.space = space
        self.x = x
        q, d = space.capacity, space.dim
        self.q, self.d = q, d
        self.bot = d
        self.ax_db = 1
        self.ax_s = list(range(2, 2 + q))
        self.ax_w = 2 + q
        self.ax_b = 3 + q
        self.ax_anc = 4 + q
        self.ax_c = 5 + q
        free, ins, value = space.tables(x)
        ndb = len(space)
        # c ^= [row x present]
        self.flag_perm = np.arange(ndb * 2)
        for i in range(ndb):
            if value[i] >= 0:
                self.flag_perm[2 * i] = 2 * i + 1
                self.flag_perm[2 * i + 1] = 2 * i
        # Ext_x on (DB, W): |D>|z> <-> |D + (x,z)>|bot>
        w = d + 1
        self.ext_perm = np.arange(ndb * w)
        for k, i in enumerate(free):
            for z in range(d):
                a, b = i * w + z, ins[k, z] * w + self.bot
                self.ext_perm[a], self.ext_perm[b] = b, a
        # advance-first on (S_1..S_q, W): |bot^a, s, rest>|bot> <-> |bot^(a+1), rest>|s>
        self.swap_perm = self._swap_first_perm()
        # swap(W, B)
        self.wb_perm = np.arange(w * w)
        for i in range(w):
            for j in range(w):
                self.wb_perm[i * w + j] = j * w + i

    def _swap_first_perm(self) -> np.ndarray:
        q, w, bot = self.q, self.d + 1, self.bot
        size = w ** (q + 1)
        perm = np.arange(size)
        for s in itertools.product(range(w), repeat=q):
            a = 0
            while a < q and s[a] == bot:
                a += 1
            if any(v == bot for v in s[a:]) or a == q:
                continue  # not well formed, or nothing left to hand out
            src = s + (bot,)
            dst = (bot,) * (a + 1) + s[a + 1 :] + (s[a],)
            i = int(np.ravel_multi_index(src, (w,) * (q + 1)))
            j = int(np.ravel_multi_index(dst, (w,) * (q + 1)))
            perm[i], perm[j] = j, i
        return perm


def _perm(t: np.ndarray, perm: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    from .qsim import _permute_on_axes

    return _permute_on_axes(t, perm, list(axes))


def _on_slice(t: np.ndarray, conds: Mapping[int, int], fn) -> np.ndarray:
    """Apply ``fn`` to the sub-array where each axis in ``conds`` equals its value."""
    idx = [slice(None)] * t.ndim
    for ax, v in conds.items():
        idx[ax] = slice(v, v + 1)
    idx = tuple(idx)
    t[idx] = fn(t[idx])  # callers always rebind, so updating in place is safe
    return t


def _h(t: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(HADAMARD, t, axes=([1], [axis])), 0, axis)


def _xflip(t: np.ndarray, axis: int) -> np.ndarray:
    return np.flip(t, axis=axis).copy()


def _projector_flip(t: np.ndarray, rc: _ReflectionCircuit, target: int, refl: ReflectionBackend, active) -> np.ndarray:
    """target ^= [W along psi], using one reflection call.

    ``active`` is a dict of axis conditions; outside it nothing happens. The
    reflection is applied unconditionally: where it must not act, W is parked in
    B (which holds bottom, a fixed point of the reflection).
    """
    t = _on_slice(t, active, lambda s: _h(s, target))

    def park_where(tt):
        # park W unless (active and target == 1)
        out = _perm(tt, rc.wb_perm, [rc.ax_w, rc.ax_b])
        return _on_slice(out, {**active, target: 1}, lambda s: _perm(s, rc.wb_perm, [rc.ax_w, rc.ax_b]))

    t = park_where(t)
    t = refl.apply(t, rc.ax_w)
    t = park_where(t)
    return _on_slice(t, active, lambda s: _h(s, target))


def comp_x_via_reflection_array(
    t: np.ndarray, x, space: DatabaseSpace, refl: ReflectionBackend, *, rc: _ReflectionCircuit | None = None,
    debug: bool = True,
) -> np.ndarray:
    """Comp_x built from two reflection calls; same input shape as ``comp_x_array``."""
    rc = rc or _ReflectionCircuit(space, x)
    q, w = space.capacity, space.dim + 1
    ndb = len(space)
    r = t.shape[0]
    core = t[:, :ndb, :].reshape((r, ndb) + (w,) * q)
    # attach W=bot, B=bot, anc=0, c=0
    e = np.zeros((r, ndb) + (w,) * q + (w, w, 2, 2), dtype=complex)
    e[..., rc.bot, rc.bot, 0, 0] = core
    calls0 = refl.calls

    # 1. case flag
    e = _perm(e, rc.flag_perm, [rc.ax_db, rc.ax_c])
    # 2. row absent: hand out the first psi copy, then file it under x
    c0 = e[(slice(None),) * rc.ax_c + (0,)]
    all_bot = c0[(slice(None), slice(None)) + (rc.bot,) * q]
    full = c0[:, space.sizes >= q]
    if np.sum(np.abs(all_bot) ** 2) + np.sum(np.abs(full) ** 2) > TINY:
        raise AdviceExhausted(f"creating row {x} needs an advice copy but none is left")
    e = _on_slice(e, {rc.ax_c: 0}, lambda s: _perm(s, rc.swap_perm, rc.ax_s + [rc.ax_w]))
    e = _on_slice(e, {rc.ax_c: 0}, lambda s: _perm(s, rc.ext_perm, [rc.ax_db, rc.ax_w]))
    # 3. row present: pull it into W, test it against psi, return the psi part to S
    e = _on_slice(e, {rc.ax_c: 1}, lambda s: _perm(s, rc.ext_perm, [rc.ax_db, rc.ax_w]))
    e = _projector_flip(e, rc, rc.ax_anc, refl, {rc.ax_c: 1})
    e = _on_slice(e, {rc.ax_c: 1, rc.ax_anc: 1}, lambda s: _perm(s, rc.swap_perm, rc.ax_s + [rc.ax_w]))
    e = _on_slice(e, {rc.ax_c: 1, rc.ax_w: rc.bot}, lambda s: _xflip(s, rc.ax_anc))
    e = _on_slice(e, {rc.ax_c: 1}, lambda s: _perm(s, rc.ext_perm, [rc.ax_db, rc.ax_w]))
    # 4. uncompute the case flag: c ^= 1 ^ [row x present and along psi]
    e = _xflip(e, rc.ax_c)
    e = _perm(e, rc.ext_perm, [rc.ax_db, rc.ax_w])
    e = _projector_flip(e, rc, rc.ax_c, refl, {})
    e = _perm(e, rc.ext_perm, [rc.ax_db, rc.ax_w])

    if refl.calls - calls0 > 2:
        raise AssertionError("reflection budget exceeded")
    out = e[..., rc.bot, rc.bot, 0, 0]
    if debug:
        leak = float(np.sum(np.abs(e) ** 2) - np.sum(np.abs(out) ** 2))
        if leak > 1e-10:
            raise AncillaNotRestored(f"weight {leak:.3e} left in work registers")
    res = np.zeros_like(t)
    res[:, :ndb, :] = out.reshape(r, ndb, -1)
    return res


# ------------------------------------------------------------------- backend


class AdvOBackend(OracleBackend):
    """Advice oracle with internal database and advice registers per slot.

    ``mode`` selects the Comp_x implementation: ``"direct"`` (closed form) or
    ``"reflection"`` (two reflection calls per Comp_x).
    """

    def __init__(
        self,
        spec: AdviceSpec | Mapping[str, AdviceSpec],
        capacity: int | None = None,
        *,
        mode: str = "direct",
        debug: bool = False,
        reflection: Callable[[np.ndarray], ReflectionBackend] = exact_reflection,
    ):
        if mode not in ("direct", "reflection"):
            raise ValueError(f"unknown mode {mode!r}")
        self.specs = spec
        self.capacity = capacity
        self.mode = mode
        self.debug = debug
        self.reflection_factory = reflection
        self.reflection_calls: list[int] = []
        self._spaces: dict = {}
        self._refl: dict = {}
        self._rc: dict = {}

    def spec(self, slot: str) -> AdviceSpec:
        return self.specs if isinstance(self.specs, AdviceSpec) else self.specs[slot]

    def supports(self, slot):
        return isinstance(self.specs, AdviceSpec) or slot in self.specs

    def cap(self, circuit: OracleCircuit) -> int:
        return max(1, self.capacity if self.capacity is not None else circuit.budget)

    def space(self, slot: str, capacity: int) -> DatabaseSpace:
        key = (slot, capacity)
        if key not in self._spaces:
            sp = self.spec(slot)
            self._spaces[key] = DatabaseSpace(sp.domain, sp.dim, capacity)
        return self._spaces[key]

    @staticmethod
    def db_name(slot):
        return f"{slot}.DB"

    @staticmethod
    def advice_names(slot, capacity):
        return [f"{slot}.S{i + 1}" for i in range(capacity)]

    def internal_registers(self, circuit):
        q = self.cap(circuit)
        if self.capacity is not None and self.capacity < circuit.budget:
            raise ValueError(f"capacity {self.capacity} below the circuit's budget {circuit.budget}")
        regs = []
        for slot in sorted(circuit.slots):
            sp = self.spec(slot)
            regs.append((self.db_name(slot), self.space(slot, q).register_size))
            regs += [(n, sp.dim + 1) for n in self.advice_names(slot, q)]
        return regs

    def initial_internal(self, circuit):
        q = self.cap(circuit)
        amps = np.ones(1, dtype=complex)
        for slot in sorted(circuit.slots):
            sp = self.spec(slot)
            db = np.zeros(self.space(slot, q).register_size, dtype=complex)
            db[0] = 1.0
            amps = np.kron(amps, np.kron(db, advice_state(sp.psi, q, 0)))
        return amps

    def _capacity_of(self, layout, slot) -> int:
        n = 0
        while f"{slot}.S{n + 1}" in layout:
            n += 1
        return n

    def query(self, state: StateVector, call: OracleCall, index: int) -> StateVector:
        slot = call.slot
        sp = self.spec(slot)
        layout = state.layout
        q = self._capacity_of(layout, slot)
        space = self.space(slot, q)
        rsize = layout.size(call.rreg)
        if not is_power_of_two(rsize) or rsize < sp.dim:
            raise LayoutError(f"response register of size {rsize} cannot hold outputs of size {sp.dim}")
        names = list(layout.names)
        own = [self.db_name(slot)] + self.advice_names(slot, q)
        rest = [n for n in names if n not in own and n not in (call.qreg, call.rreg)]
        order = [call.qreg, call.rreg] + rest + own
        axes = [names.index(n) for n in order]
        t = np.transpose(state.tensor(), axes)
        nx, ny = layout.size(call.qreg), rsize
        nr = int(np.prod([layout.size(n) for n in rest])) if rest else 1
        ndbreg = space.register_size
        sdim = (sp.dim + 1) ** q
        t = np.array(t.reshape(nx, ny * nr, ndbreg, sdim))
        sab = advice_basis_matrix(sp.psi, q)
        for x in sp.domain:
            if not 0 <= x < nx:
                raise LayoutError(f"domain point {x} does not fit query register {call.qreg!r}")
            sub = t[x]
            sub = self._comp(sub, slot, x, space, sp, sab)
            sub = tilde_u_array(sub, x, space, sp.unitaries[x])
            sub = self._stdo(sub, x, space, ny, nr)
            sub = tilde_u_array(sub, x, space, sp.unitaries[x].conj().T)
            sub = self._comp(sub, slot, x, space, sp, sab)  # Comp_x is an involution
            t[x] = sub
        shape = [layout.size(n) for n in order]
        t = np.transpose(t.reshape(shape), np.argsort(axes))
        return StateVector(layout, t.reshape(-1), normalized=False)

    def _comp(self, sub, slot, x, space, sp, sab):
        if self.mode == "direct":
            return comp_x_array(sub, x, space, sp.psi, sab=sab, debug=self.debug)
        key = (slot, space.capacity)
        if key not in self._refl:
            self._refl[key] = self.reflection_factory(sp.psi)
        if (key, x) not in self._rc:
            self._rc[(key, x)] = _ReflectionCircuit(space, x)
        refl = self._refl[key]
        before = refl.calls
        out = comp_x_via_reflection_array(sub, x, space, refl, rc=self._rc[(key, x)], debug=self.debug)
        self.reflection_calls.append(refl.calls - before)
        return out

    @staticmethod
    def _stdo(sub, x, space, ny, nr):
        """|y>|D> -> |y xor D(x)>|D> for databases holding row x."""
        _, _, value = space.tables(x)
        s = sub.reshape(ny, nr, sub.shape[1], sub.shape[2])
        out = np.array(s)
        ys = np.arange(ny)
        for i in np.flatnonzero(value >= 0):
            out[ys ^ value[i], :, i, :] = s[ys, :, i, :]
        return out.reshape(sub.shape)


# --------------------------------------------------------- state-level API


def _split(state: StateVector, slot: str):
    layout = state.layout
    q = 0
    while f"{slot}.S{q + 1}" in layout:
        q += 1
    own = [AdvOBackend.db_name(slot)] + AdvOBackend.advice_names(slot, q)
    names = list(layout.names)
    rest = [n for n in names if n not in own]
    axes = [names.index(n) for n in rest + own]
    return q, own, rest, axes


def _to_array(state: StateVector, slot: str):
    q, own, rest, axes = _split(state, slot)
    layout = state.layout
    nr = int(np.prod([layout.size(n) for n in rest])) if rest else 1
    t = np.transpose(state.tensor(), axes).reshape(nr, layout.size(own[0]), -1)
    return t, q, own, rest, axes


def _from_array(arr, state, own, rest, axes):
    layout = state.layout
    shape = [layout.size(n) for n in rest + own]
    t = np.transpose(arr.reshape(shape), np.argsort(axes))
    return StateVector(layout, t.reshape(-1), normalized=False)


def comp_x(state: StateVector, x, spec: AdviceSpec, slot: str = "O", *, debug: bool = True) -> StateVector:
    """Comp_x on a state carrying ``slot``'s database and advice registers."""
    t, q, own, rest, axes = _to_array(state, slot)
    space = DatabaseSpace(spec.domain, spec.dim, q)
    return _from_array(comp_x_array(t, x, space, spec.psi, debug=debug), state, own, rest, axes)


def comp_x_via_reflection(
    state: StateVector, x, spec: AdviceSpec, reflection: ReflectionBackend, slot: str = "O"
) -> StateVector:
    t, q, own, rest, axes = _to_array(state, slot)
    space = DatabaseSpace(spec.domain, spec.dim, q)
    return _from_array(comp_x_via_reflection_array(t, x, space, reflection), state, own, rest, axes)


def tilde_u_x(state: StateVector, x, spec: AdviceSpec, slot: str = "O", *, adjoint: bool = False) -> StateVector:
    t, q, own, rest, axes = _to_array(state, slot)
    space = DatabaseSpace(spec.domain, spec.dim, q)
    u = spec.unitaries[x]
    return _from_array(tilde_u_array(t, x, space, u.conj().T if adjoint else u), state, own, rest, axes)


def advo_query(state: StateVector, spec: AdviceSpec, qreg: str, rreg: str, slot: str = "O", **kw) -> StateVector:
    return AdvOBackend({slot: spec}, **kw).query(state, OracleCall(slot, qreg, rreg), 0)


def oracle_register_layout(spec: AdviceSpec, capacity: int, slot: str = "O"):
    """(name, size) pairs of the database and advice registers."""
    space = DatabaseSpace(spec.domain, spec.dim, capacity)
    return [(AdvOBackend.db_name(slot), space.register_size)] + [
        (n, spec.dim + 1) for n in AdvOBackend.advice_names(slot, capacity)
    ]


def manifold_state(
    spec: AdviceSpec, capacity: int, amplitudes: Mapping[tuple, complex], slot: str = "O"
) -> StateVector:
    """State sum c |D>|S(a)> from a map (pairs, a) -> amplitude (normalized here)."""
    from .qsim import RegisterLayout

    space = DatabaseSpace(spec.domain, spec.dim, capacity)
    layout = RegisterLayout(tuple(oracle_register_layout(spec, capacity, slot)))
    sab = advice_basis_matrix(spec.psi, capacity)
    arr = np.zeros((space.register_size, sab.shape[1]), dtype=complex)
    for (pairs, a), amp in amplitudes.items():
        arr[space.index[tuple(pairs)]] += amp * sab[a]
    arr /= np.linalg.norm(arr)
    return StateVector(layout, arr.reshape(-1))


def advice_bottom_counts(state: StateVector, slot: str = "O") -> np.ndarray:
    """Number of bottom slots in each positive-weight computational-basis branch of the advice register."""
    q, own, _, _ = _split(state, slot)
    p = state.probabilities(own[1:])
    bot = state.layout.size(own[1]) - 1
    return np.array([int(np.sum(np.array(ix) == bot)) for ix in np.argwhere(p > 1e-14)], dtype=int)


def manifold_defect(state: StateVector, spec: AdviceSpec, slot: str = "O") -> tuple[float, float]:
    """(weight outside span |D>|S(a)>, weight on pairs with a != |D|)."""
    t, q, own, _, _ = _to_array(state, slot)
    space = DatabaseSpace(spec.domain, spec.dim, q)
    sab = advice_basis_matrix(spec.psi, q)
    coeff = t[:, : len(space), :] @ sab.conj().T
    w = np.abs(coeff) ** 2
    total = float(np.sum(np.abs(t) ** 2))
    inside = float(w.sum())
    mismatch = sum(float(w[:, i, a].sum()) for i in range(len(space)) for a in range(q + 1) if a != space.sizes[i])
    return total - inside, mismatch


def advice_equivalence(c: OracleCircuit, spec: AdviceSpec, *, mode: str = "direct", debug: bool = False,
                       cap: int = ENUMERATION_CAP):
    """Return (acceptance against the advice oracle, exact average over O ~ induced D)."""
    p_adv = acceptance(c, AdvOBackend(spec, mode=mode, debug=debug))
    d = spec.induced_distribution()
    dd = {s: d for s in c.slots} if len(c.slots) > 1 else d
    return p_adv, oracle_averaged_acceptance(c, dd, cap)


def random_advice_spec(domain_size: int, dim: int, rng: np.random.Generator, *, sparse: bool = False) -> AdviceSpec:
    """Random advice state and Haar-random row unitaries."""
    from .qsim import random_unitary

    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    if sparse:
        v[rng.random(dim) < 0.3] = 0.0
        if not v.any():
            v[0] = 1.0
    psi = v / np.linalg.norm(v)
    return AdviceSpec(psi, {x: random_unitary(dim, rng) for x in range(domain_size)})


class AdvOSession:
    """Classical access to the advice oracle: query a basis value, measure the answer.

    The oracle's internal state is passed around explicitly so that callers can
    branch over measurement outcomes (exact evaluation) or sample them.
    """

    def __init__(self, spec: AdviceSpec, capacity: int, *, mode: str = "direct", debug: bool = False):
        from .oracles import next_power_of_two
        from .qsim import RegisterLayout

        self.spec = spec
        self.capacity = max(1, capacity)
        self.backend = AdvOBackend({"O": spec}, self.capacity, mode=mode, debug=debug)
        self.nx = max(spec.domain) + 1
        self.ny = next_power_of_two(spec.dim)
        regs = oracle_register_layout(spec, self.capacity)
        self.layout = RegisterLayout.of(("X", self.nx), ("Y", self.ny), *regs)
        db = np.zeros(regs[0][1], dtype=complex)
        db[0] = 1.0
        self.initial = np.kron(db, advice_state(spec.psi, self.capacity, 0))

    def branches(self, internal: np.ndarray, y: int) -> list[tuple[float, int, np.ndarray]]:
        """All (probability, answer, post-measurement internal state) for query ``y``."""
        if y not in self.spec.domain:
            raise LayoutError(f"query {y} outside the oracle domain")
        inp = np.zeros(self.nx * self.ny, dtype=complex)
        inp[y * self.ny] = 1.0
        state = StateVector(self.layout, np.kron(inp, internal), normalized=False)
        t = self.backend.query(state, OracleCall("O", "X", "Y"), 0).amps.reshape(self.nx, self.ny, -1)
        out = []
        for z in range(self.ny):
            v = t[y, z]
            p = float(np.vdot(v, v).real)
            if p > TINY:
                out.append((p, z, v / math.sqrt(p)))
        return out

    def sample(self, internal: np.ndarray, y: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        br = self.branches(internal, y)
        p = np.array([b[0] for b in br])
        i = int(rng.choice(len(br), p=p / p.sum()))
        return br[i][1], br[i][2]
