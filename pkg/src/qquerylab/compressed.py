"""Compressed oracle for non-uniform product distributions.

Each domain point x owns a bank register D_x over the output alphabet plus the
bottom symbol (stored as the last basis index ``alphabet``). A query applies,
controlled on the query register, U_x then CNOT(D_x -> Y) then U_x, where U_x
swaps |bot> with |D_x> = sum_z sqrt(D_x(z)) |z>.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .oracles import (
    OracleBackend,
    OracleCall,
    OracleCircuit,
    ProductDistribution,
    acceptance,
    is_power_of_two,
    oracle_averaged_acceptance,
)
from .qsim import ATOL, LayoutError, StateVector, _apply_on_axes, _check_unitary, _permute_on_axes


def bottom_index(d: ProductDistribution) -> int:
    """Basis index used for the bottom symbol in bank registers."""
    return d.alphabet


def compression_unitary_local(d_x) -> np.ndarray:
    """U_x = |D_x><bot| + |bot><D_x| + (I - |bot><bot| - |D_x><D_x|).

    ``d_x`` is a probability vector over the outputs; the returned matrix acts on
    ``len(d_x) + 1`` levels with bottom last.
    """
    p = np.asarray(d_x, dtype=float).reshape(-1)
    if (p < -ATOL).any() or abs(p.sum() - 1.0) > ATOL:
        raise ValueError("compression unitary needs a normalized distribution")
    m = len(p)
    dx = np.zeros(m + 1, dtype=complex)
    dx[:m] = np.sqrt(np.clip(p, 0.0, None))
    bot = np.zeros(m + 1, dtype=complex)
    bot[m] = 1.0
    u = (
        np.outer(dx, bot)
        + np.outer(bot, dx)
        + np.eye(m + 1)
        - np.outer(bot, bot)
        - np.outer(dx, dx.conj())
    )
    _check_unitary(u)
    return u


def bank_cnot_permutation(alphabet: int, rsize: int) -> np.ndarray:
    """Index permutation on (D_x, Y): |s, y> -> |s, y xor s> for outputs s, identity on bottom."""
    if not is_power_of_two(rsize) or alphabet > rsize:
        raise LayoutError(f"response register of size {rsize} cannot absorb outputs of alphabet {alphabet}")
    perm = np.arange((alphabet + 1) * rsize)
    ys = np.arange(rsize)
    for s in range(alphabet):
        perm[s * rsize + ys] = s * rsize + (ys ^ s)
    return perm


class CStOBackend(OracleBackend):
    """Compressed standard oracle, one independent bank per slot.

    A single distribution applies to every slot the circuit uses but each slot
    still gets its own bank (independent oracles); pass a mapping for distinct
    distributions.
    """

    def __init__(self, dists: ProductDistribution | Mapping[str, ProductDistribution]):
        self.dists = dists
        self._u: dict = {}
        self.u_calls = 0

    def dist(self, slot: str) -> ProductDistribution:
        if isinstance(self.dists, ProductDistribution):
            return self.dists
        return self.dists[slot]

    def supports(self, slot: str) -> bool:
        return isinstance(self.dists, ProductDistribution) or slot in self.dists

    @staticmethod
    def bank_name(slot: str, x) -> str:
        return f"{slot}.D{x}"

    def bank_registers(self, slot: str) -> list[str]:
        return [self.bank_name(slot, x) for x in self.dist(slot).domain]

    def internal_registers(self, circuit: OracleCircuit):
        regs = []
        for slot in sorted(circuit.slots):
            d = self.dist(slot)
            regs += [(self.bank_name(slot, x), d.alphabet + 1) for x in d.domain]
        return regs

    def initial_internal(self, circuit: OracleCircuit):
        amps = np.ones(1, dtype=complex)
        for slot in sorted(circuit.slots):
            d = self.dist(slot)
            for _ in d.domain:
                e = np.zeros(d.alphabet + 1, dtype=complex)
                e[d.alphabet] = 1.0
                amps = np.kron(amps, e)
        return amps

    def local_unitary(self, slot: str, x, dist: ProductDistribution | None = None) -> np.ndarray:
        d = dist or self.dist(slot)
        key = (slot, id(d), x)
        if key not in self._u:
            # keep d alive alongside the cached matrix so its id stays unique
            self._u[key] = (d, compression_unitary_local(d[x]))
        return self._u[key][1]

    # The two primitive steps of a query are exposed so hybrid experiments can
    # swap the compression unitary between calls.

    def compress(self, state: StateVector, slot: str, qreg: str, dist: ProductDistribution | None = None):
        """Apply U = sum_x |x><x| (x) U_x on (qreg, bank)."""
        d = dist or self.dist(slot)
        layout = state.layout
        t = np.array(state.tensor())
        qa = layout.index(qreg)
        for x in d.domain:
            if not 0 <= x < layout.dims[qa]:
                raise LayoutError(f"domain point {x} does not fit query register {qreg!r}")
            idx = [slice(None)] * t.ndim
            idx[qa] = slice(x, x + 1)
            ax = layout.index(self.bank_name(slot, x))
            t[tuple(idx)] = _apply_on_axes(t[tuple(idx)], self.local_unitary(slot, x, d), [ax])
        self.u_calls += 1
        return StateVector(layout, t.reshape(-1), normalized=False)

    def copy(self, state: StateVector, slot: str, qreg: str, rreg: str):
        """Apply sum_x |x><x| (x) CNOT(D_x -> Y)."""
        d = self.dist(slot)
        layout = state.layout
        t = np.array(state.tensor())
        qa, ra = layout.index(qreg), layout.index(rreg)
        perm = bank_cnot_permutation(d.alphabet, layout.dims[ra])
        for x in d.domain:
            idx = [slice(None)] * t.ndim
            idx[qa] = slice(x, x + 1)
            ax = layout.index(self.bank_name(slot, x))
            t[tuple(idx)] = _permute_on_axes(t[tuple(idx)], perm, [ax, ra])
        return StateVector(layout, t.reshape(-1), normalized=False)

    def query(self, state, call: OracleCall, index: int):
        state = self.compress(state, call.slot, call.qreg)
        state = self.copy(state, call.slot, call.qreg, call.rreg)
        return self.compress(state, call.slot, call.qreg)


U_CALLS_PER_QUERY = 2


def csto_query(state: StateVector, d: ProductDistribution, qreg: str, rreg: str, slot: str = "O") -> StateVector:
    """One compressed-oracle query on a state that already carries the bank of ``slot``."""
    return CStOBackend({slot: d}).query(state, OracleCall(slot, qreg, rreg), 0)


def csto_equivalence(c: OracleCircuit, d: ProductDistribution | Mapping[str, ProductDistribution]):
    """Return (acceptance against the compressed oracle, exact oracle-averaged acceptance).

    With a single distribution each slot is an independent oracle on both sides.
    """
    p_comp = acceptance(c, CStOBackend(d))
    if isinstance(d, ProductDistribution) and len(c.slots) > 1:
        d = {s: d for s in c.slots}
    return p_comp, oracle_averaged_acceptance(c, d)


def nonbottom_counts(state: StateVector, bank: Sequence[str], bottom: int | Sequence[int]) -> np.ndarray:
    """Number of non-bottom bank registers in each computational-basis branch of positive weight."""
    p = state.probabilities(list(bank))
    bots = [bottom] * len(bank) if isinstance(bottom, int) else list(bottom)
    idx = np.argwhere(p > 1e-14)
    return np.array([sum(int(v != b) for v, b in zip(row, bots)) for row in idx], dtype=int)
