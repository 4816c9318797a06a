"""Classical oracles, oracle-aided circuits and brute-force oracle averaging.

A circuit names oracle *slots*; a backend decides what a call to a slot does.
The same circuit therefore runs against a fixed truth table, the compressed
oracle, the advice oracle, or any other backend with identical semantics.

Circuit text format (one item per line, ``#`` starts a comment)::

    REG <name> <size>
    BUDGET <q>
    OUTPUT <reg>[,<reg>...]
    MATRIX <ref> <n> <re_00> <im_00> <re_01> ...   (floats in ``float.hex``)
    U <name> <target>[,<target>...] <ref>
    CALL <slot> <qreg> <rreg>

``REG``/``BUDGET``/``OUTPUT``/``MATRIX`` lines come first, gates follow in order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence, Union

import numpy as np

from .qsim import (
    ATOL,
    LayoutError,
    RegisterLayout,
    StateVector,
    apply_permutation,
    apply_unitary,
    random_distribution,
    random_unitary,
)

ENUMERATION_CAP = 4096


class OracleError(Exception):
    pass


class UnresolvedSlot(OracleError, KeyError):
    pass


class EnumerationTooLarge(OracleError, ValueError):
    pass


class BudgetExceeded(OracleError, ValueError):
    pass


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


# ---------------------------------------------------------------- tables and dists


@dataclass(frozen=True)
class TruthTable:
    """A total function on a finite domain with a declared output alphabet size."""

    domain: tuple
    outputs: Mapping[Hashable, int]
    alphabet: int

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))
        outs = dict(self.outputs)
        if set(outs) != set(self.domain):
            raise OracleError("truth table is not total on its domain")
        for x, y in outs.items():
            if not 0 <= int(y) < self.alphabet:
                raise OracleError(f"output {y} at {x!r} outside alphabet of size {self.alphabet}")
        object.__setattr__(self, "outputs", outs)

    def __call__(self, x):
        return self.outputs[x]

    def __hash__(self):
        return hash((self.domain, tuple(self.outputs[x] for x in self.domain), self.alphabet))

    def __eq__(self, other):
        return (
            isinstance(other, TruthTable)
            and self.domain == other.domain
            and self.alphabet == other.alphabet
            and all(self.outputs[x] == other.outputs[x] for x in self.domain)
        )

    @classmethod
    def from_list(cls, values: Sequence[int], alphabet: int | None = None) -> "TruthTable":
        alphabet = alphabet or max(2, max(values, default=0) + 1)
        return cls(tuple(range(len(values))), {i: int(v) for i, v in enumerate(values)}, alphabet)

    def as_tuple(self) -> tuple:
        return tuple(self.outputs[x] for x in self.domain)


@dataclass(frozen=True)
class ProductDistribution:
    """Independent output distributions D_x over a common alphabet ``range(alphabet)``.

    The bottom symbol is not an output: it is not part of ``range(alphabet)``.
    """

    probs: Mapping[Hashable, np.ndarray]
    alphabet: int
    domain: tuple = field(default=())

    def __post_init__(self):
        dom = tuple(self.domain) if self.domain else tuple(sorted(self.probs))
        rows = {}
        for x in dom:
            p = np.asarray(self.probs[x], dtype=float).reshape(-1)
            if p.shape != (self.alphabet,):
                raise OracleError(f"D_{x} has {p.shape[0]} entries, alphabet is {self.alphabet}")
            if (p < -ATOL).any() or abs(p.sum() - 1.0) > ATOL:
                raise OracleError(f"D_{x} is not a normalized distribution")
            p = np.clip(p, 0.0, None)
            p.flags.writeable = False
            rows[x] = p
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "probs", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "ProductDistribution":
        rows = [np.asarray(r, dtype=float) for r in rows]
        return cls({i: r for i, r in enumerate(rows)}, len(rows[0]), tuple(range(len(rows))))

    @classmethod
    def point_masses(cls, table: TruthTable) -> "ProductDistribution":
        rows = {}
        for x in table.domain:
            p = np.zeros(table.alphabet)
            p[table(x)] = 1.0
            rows[x] = p
        return cls(rows, table.alphabet, table.domain)

    @classmethod
    def uniform(cls, domain_size: int, alphabet: int) -> "ProductDistribution":
        return cls.from_rows([np.full(alphabet, 1.0 / alphabet)] * domain_size)

    def __getitem__(self, x) -> np.ndarray:
        return self.probs[x]

    def support(self, x) -> list[int]:
        return [int(z) for z in np.flatnonzero(self.probs[x] > 0)]

    def family_size(self) -> int:
        return int(math.prod(len(self.support(x)) for x in self.domain))

    def mix(self, other: "ProductDistribution", w: float) -> "ProductDistribution":
        """Row-wise mixture; note the product of mixtures is not the mixture of products."""
        return ProductDistribution(
            {x: w * self.probs[x] + (1 - w) * other.probs[x] for x in self.domain}, self.alphabet, self.domain
        )

    def enumerate(self, cap: int = ENUMERATION_CAP):
        """Yield (TruthTable, probability) over the whole support."""
        if self.family_size() > cap:
            raise EnumerationTooLarge(f"{self.family_size()} oracles exceed enumeration cap {cap}")
        supports = [self.support(x) for x in self.domain]
        for combo in itertools.product(*supports):
            w = math.prod(float(self.probs[x][z]) for x, z in zip(self.domain, combo))
            yield TruthTable(self.domain, dict(zip(self.domain, combo)), self.alphabet), w


def sample_oracle(d: ProductDistribution, rng: np.random.Generator) -> TruthTable:
    outs = {x: int(rng.choice(d.alphabet, p=d.probs[x])) for x in d.domain}
    return TruthTable(d.domain, outs, max(d.alphabet, 2))


# ------------------------------------------------------------------ query unitary


def xor_query_permutation(qsize: int, rsize: int, table: TruthTable) -> np.ndarray:
    """Index permutation of |x, y> -> |x, y xor F(x)> on a (qreg, rreg) pair."""
    if not is_power_of_two(rsize):
        raise LayoutError(f"response register size {rsize} is not a power of two")
    if table.alphabet > rsize:
        raise LayoutError(f"outputs of alphabet {table.alphabet} do not fit a size-{rsize} register")
    perm = np.arange(qsize * rsize)
    for x in table.domain:
        if not isinstance(x, (int, np.integer)) or not 0 <= x < qsize:
            raise LayoutError(f"domain point {x!r} does not fit a size-{qsize} query register")
        fx = table(x)
        ys = np.arange(rsize)
        perm[x * rsize + ys] = x * rsize + (ys ^ fx)
    return perm


def std_query(state: StateVector, table: TruthTable, qreg: str, rreg: str) -> StateVector:
    """Standard XOR oracle: |x, y> -> |x, y xor F(x)>."""
    perm = xor_query_permutation(state.layout.size(qreg), state.layout.size(rreg), table)
    return apply_permutation(state, perm, [qreg, rreg])


# ------------------------------------------------------------------------ circuits


@dataclass(frozen=True)
class UnitaryGate:
    name: str
    targets: tuple[str, ...]
    matrix: np.ndarray = field(compare=False)

    def __eq__(self, other):
        return (
            isinstance(other, UnitaryGate)
            and self.name == other.name
            and self.targets == other.targets
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None


@dataclass(frozen=True)
class OracleCall:
    slot: str
    qreg: str
    rreg: str


Gate = Union[UnitaryGate, OracleCall]


@dataclass(frozen=True)
class OracleCircuit:
    """Ordered gates over a register layout, with at most ``budget`` oracle calls.

    ``output`` names the registers read out at the end; acceptance means the first
    output register reads 1.
    """

    layout: RegisterLayout
    gates: tuple
    budget: int
    output: tuple[str, ...] = ()

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        out = tuple(self.output) or (self.layout.names[0],)
        object.__setattr__(self, "output", out)
        for r in out:
            self.layout.index(r)
        for g in gates:
            if isinstance(g, UnitaryGate):
                self.layout.axes(g.targets)
                dim = math.prod(self.layout.size(t) for t in g.targets)
                if g.matrix.shape != (dim, dim):
                    raise LayoutError(f"gate {g.name} has shape {g.matrix.shape}, targets need {dim}")
            elif isinstance(g, OracleCall):
                self.layout.axes([g.qreg, g.rreg])
            else:
                raise TypeError(f"unknown gate {g!r}")
        if self.num_calls > self.budget:
            raise BudgetExceeded(f"{self.num_calls} oracle calls exceed budget {self.budget}")

    @property
    def calls(self) -> list[OracleCall]:
        return [g for g in self.gates if isinstance(g, OracleCall)]

    @property
    def num_calls(self) -> int:
        return len(self.calls)

    @property
    def slots(self) -> set[str]:
        return {g.slot for g in self.calls}

    def to_text(self) -> str:
        return dump_circuit(self)

    def key(self) -> str:
        """Canonical text, usable as a hashable circuit description."""
        return dump_circuit(self)


class CircuitBuilder:
    """Small convenience for assembling circuits gate by gate."""

    def __init__(self, *registers: tuple[str, int]):
        self.layout = RegisterLayout(tuple(registers))
        self.gates: list[Gate] = []

    def u(self, matrix, *targets: str, name: str | None = None) -> "CircuitBuilder":
        m = np.asarray(matrix, dtype=complex)
        self.gates.append(UnitaryGate(name or f"g{len(self.gates)}", tuple(targets), m))
        return self

    def call(self, slot: str, qreg: str, rreg: str) -> "CircuitBuilder":
        self.gates.append(OracleCall(slot, qreg, rreg))
        return self

    def build(self, output: Sequence[str] = (), budget: int | None = None) -> OracleCircuit:
        n = sum(isinstance(g, OracleCall) for g in self.gates)
        return OracleCircuit(self.layout, tuple(self.gates), n if budget is None else budget, tuple(output))


# ------------------------------------------------------------------------ backends


class OracleBackend:
    """Resolves oracle-call gates. Subclasses may add internal registers."""

    def internal_registers(self, circuit: OracleCircuit) -> list[tuple[str, int]]:
        return []

    def initial_internal(self, circuit: OracleCircuit) -> np.ndarray | None:
        """Amplitudes over the internal registers; None means all-zero basis state."""
        return None

    def supports(self, slot: str) -> bool:
        raise NotImplementedError

    def query(self, state: StateVector, call: OracleCall, index: int) -> StateVector:
        raise NotImplementedError


class TableBackend(OracleBackend):
    """Standard XOR queries to fixed truth tables, one per slot (or one for all slots)."""

    def __init__(self, tables: TruthTable | Mapping[str, TruthTable]):
        self.tables = tables

    def table(self, slot: str) -> TruthTable:
        if isinstance(self.tables, TruthTable):
            return self.tables
        try:
            return self.tables[slot]
        except KeyError:
            raise UnresolvedSlot(slot) from None

    def supports(self, slot: str) -> bool:
        return isinstance(self.tables, TruthTable) or slot in self.tables

    def query(self, state, call, index):
        return std_query(state, self.table(call.slot), call.qreg, call.rreg)


class NullBackend(OracleBackend):
    """Backend for oracle-free circuits; any call is an error."""

    def supports(self, slot):
        return False

    def query(self, state, call, index):
        raise UnresolvedSlot(call.slot)


def initial_state(circuit: OracleCircuit, backend: OracleBackend) -> StateVector:
    extra = backend.internal_registers(circuit)
    layout = circuit.layout.extend(extra)
    base = np.zeros(circuit.layout.dim, dtype=complex)
    base[0] = 1.0
    internal = backend.initial_internal(circuit)
    if internal is None:
        internal = np.zeros(int(math.prod(d for _, d in extra)) if extra else 1, dtype=complex)
        internal[0] = 1.0
    return StateVector(layout, np.kron(base, internal))


def run_until(
    circuit: OracleCircuit, backend: OracleBackend, calls: int | None = None, state: StateVector | None = None
) -> StateVector:
    """Execute gates until just before oracle call number ``calls`` (0-based), or to the end."""
    for slot in circuit.slots:
        if not backend.supports(slot):
            raise UnresolvedSlot(slot)
    if state is None:
        state = initial_state(circuit, backend)
    k = 0
    for g in circuit.gates:
        if isinstance(g, OracleCall):
            if calls is not None and k == calls:
                return state
            state = backend.query(state, g, k)
            k += 1
        else:
            state = apply_unitary(state, g.matrix, g.targets, check=False)
    if calls is not None and calls >= k:
        raise OracleError(f"circuit makes only {k} calls, cannot stop before call {calls}")
    return state


def run_circuit(
    circuit: OracleCircuit, backend: OracleBackend, rng: np.random.Generator | None = None, *, sample: bool = False
):
    """Run ``circuit`` and return (output distribution, final state).

    The distribution is a dict from output tuples to probabilities, computed
    exactly from the final amplitudes. With ``sample=True`` a single outcome is
    drawn with ``rng`` and returned as a point mass.
    """
    final = run_until(circuit, backend)
    p = final.probabilities(list(circuit.output))
    dist = {}
    for idx in zip(*np.nonzero(p > 1e-15)):
        dist[tuple(int(i) for i in idx)] = float(p[idx])
    if sample:
        if rng is None:
            raise ValueError("sampling requires an rng")
        keys = sorted(dist)
        w = np.array([dist[k] for k in keys])
        pick = keys[int(rng.choice(len(keys), p=w / w.sum()))]
        dist = {pick: 1.0}
    return dist, final


def acceptance(circuit: OracleCircuit, backend: OracleBackend) -> float:
    """Probability that the first output register reads 1."""
    final = run_until(circuit, backend)
    p = final.probabilities(circuit.output[0])
    return float(p[1])


def _slot_distributions(circuit, d):
    if isinstance(d, ProductDistribution):
        return None, d
    return dict(d), None


def oracle_averaged_acceptance(
    circuit: OracleCircuit,
    d: ProductDistribution | Mapping[str, ProductDistribution],
    cap: int = ENUMERATION_CAP,
) -> float:
    """Exact sum over O ~ D of Pr_D[O] * Pr[circuit^O accepts].

    A single distribution binds every slot to the same oracle; a mapping gives
    independent oracles per slot.
    """
    per_slot, shared = _slot_distributions(circuit, d)
    if shared is not None:
        if shared.family_size() > cap:
            raise EnumerationTooLarge(f"{shared.family_size()} oracles exceed cap {cap}")
        return sum(w * acceptance(circuit, TableBackend(t)) for t, w in shared.enumerate(cap) if w > 0)
    slots = sorted(per_slot)
    total = math.prod(per_slot[s].family_size() for s in slots)
    if total > cap:
        raise EnumerationTooLarge(f"{total} oracle tuples exceed cap {cap}")
    acc = 0.0
    for combo in itertools.product(*(list(per_slot[s].enumerate(cap)) for s in slots)):
        w = math.prod(c[1] for c in combo)
        if w > 0:
            acc += w * acceptance(circuit, TableBackend({s: c[0] for s, c in zip(slots, combo)}))
    return acc


# --------------------------------------------------------------- text round trip


def _hex_floats(m: np.ndarray) -> str:
    parts = []
    for z in m.reshape(-1):
        parts.append(float(z.real).hex())
        parts.append(float(z.imag).hex())
    return " ".join(parts)


def dump_circuit(c: OracleCircuit) -> str:
    lines = [f"REG {n} {d}" for n, d in c.layout.registers]
    lines.append(f"BUDGET {c.budget}")
    lines.append("OUTPUT " + ",".join(c.output))
    refs: dict[int, str] = {}
    mats: list[tuple[str, np.ndarray]] = []
    gate_lines = []
    for g in c.gates:
        if isinstance(g, OracleCall):
            gate_lines.append(f"CALL {g.slot} {g.qreg} {g.rreg}")
            continue
        ref = None
        for r, m in mats:
            if m.shape == g.matrix.shape and np.array_equal(m, g.matrix):
                ref = r
                break
        if ref is None:
            ref = f"m{len(mats)}"
            mats.append((ref, g.matrix))
        gate_lines.append(f"U {g.name} {','.join(g.targets)} {ref}")
    for ref, m in mats:
        lines.append(f"MATRIX {ref} {m.shape[0]} {_hex_floats(m)}")
    return "\n".join(lines + gate_lines) + "\n"


def parse_circuit(text: str) -> OracleCircuit:
    regs, mats, gates = [], {}, []
    budget, output = None, ()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        try:
            if kind == "REG":
                regs.append((tok[1], int(tok[2])))
            elif kind == "BUDGET":
                budget = int(tok[1])
            elif kind == "OUTPUT":
                output = tuple(tok[1].split(","))
            elif kind == "MATRIX":
                n = int(tok[2])
                vals = [float.fromhex(v) for v in tok[3:]]
                if len(vals) != 2 * n * n:
                    raise ValueError(f"matrix {tok[1]} needs {2 * n * n} numbers")
                arr = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
                mats[tok[1]] = arr.reshape(n, n)
            elif kind == "U":
                gates.append(UnitaryGate(tok[1], tuple(tok[2].split(",")), mats[tok[3]]))
            elif kind == "CALL":
                gates.append(OracleCall(tok[1], tok[2], tok[3]))
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except (IndexError, KeyError, ValueError) as e:
            raise OracleError(f"line {lineno}: {e}") from None
    layout = RegisterLayout(tuple(regs))
    n_calls = sum(isinstance(g, OracleCall) for g in gates)
    return OracleCircuit(layout, tuple(gates), n_calls if budget is None else budget, output)


# ------------------------------------------------------------------ random corpus


def random_query_circuit(
    domain_size: int,
    alphabet: int,
    queries: int,
    rng: np.random.Generator,
    *,
    slot: str | Sequence[str] = "O",
    response_size: int | None = None,
) -> OracleCircuit:
    """Haar-random unitaries on (X, Y, A) interleaved with ``queries`` oracle calls.

    X holds the query, Y the response (a power of two covering the alphabet) and
    A is the one-qubit output register.
    """
    xs = max(2, domain_size)
    ys = response_size or max(2, next_power_of_two(alphabet))
    slots = [slot] if isinstance(slot, str) else list(slot)
    b = CircuitBuilder(("X", xs), ("Y", ys), ("A", 2))
    dim = xs * ys * 2
    for k in range(queries):
        b.u(random_unitary(dim, rng), "X", "Y", "A", name=f"r{k}")
        b.call(slots[int(rng.integers(len(slots)))] if len(slots) > 1 else slots[0], "X", "Y")
    b.u(random_unitary(dim, rng), "X", "Y", "A", name=f"r{queries}")
    return b.build(output=("A",), budget=queries)


def random_product_distribution(
    domain_size: int, alphabet: int, rng: np.random.Generator, *, sparse: bool = True
) -> ProductDistribution:
    return ProductDistribution.from_rows(
        [random_distribution(alphabet, rng, sparse=sparse) for _ in range(domain_size)]
    )
