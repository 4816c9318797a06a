"""Simulating a 4-message prover for a classical black-box reduction.

A cloner turns the prover's memory state after its first message into an
n-part state. The simulator stores that state, symmetrized over the n parts,
under the key (r, m) and answers every rewind of the last message by consuming
a fresh part. Consumed parts are measured once and then traced out; measuring
one part conditions the parts that remain.

Reductions are generators yielding ``First(r)``, ``Second(r, m, r2)`` or
``Coin(n)`` requests; their return value is the outcome of the interaction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .poq import PROVER, VERIFIER, Coin, ProtocolSpec, Prover, QuantumProver, _sample, drive, explore
from .qsim import DensityMatrix, RegisterLayout, partial_trace, project, symmetrize

MAX_COPIES = 4


class ClonerArityError(ValueError):
    pass


class DatabaseExhausted(RuntimeError):
    pass


class UnknownKey(KeyError):
    pass


class SubsystemReuse(AssertionError):
    pass


@dataclass(frozen=True)
class Abort:
    reason: str


@dataclass(frozen=True)
class First:
    r: int


@dataclass(frozen=True)
class Second:
    r: int
    m: int
    r2: int


# -------------------------------------------------------------------- cloners


def copies_layout(memory: RegisterLayout, n: int) -> RegisterLayout:
    return RegisterLayout(tuple((f"S{j}.{name}", d) for j in range(n) for name, d in zip(memory.names, memory.dims)))


def part_names(memory: RegisterLayout, j: int) -> list[str]:
    return [f"S{j}.{name}" for name in memory.names]


@dataclass(frozen=True)
class Cloner:
    """``fn(rho)`` maps a memory state to an n-part state on ``copies_layout(memory, n)``."""

    name: str
    n: int
    fn: Callable[[DensityMatrix], np.ndarray]

    def __call__(self, rho: DensityMatrix) -> DensityMatrix:
        out = np.asarray(self.fn(rho))
        lay = copies_layout(rho.layout, self.n)
        if out.shape != (lay.dim, lay.dim):
            raise ClonerArityError(f"cloner {self.name} returned shape {out.shape}, expected {self.n} parts")
        return DensityMatrix(lay, out, check=False)


def identity_cloner() -> Cloner:
    return Cloner("identity", 1, lambda rho: rho.matrix)


def ideal_cloner(n: int) -> Cloner:
    """rho -> rho^{(x) n}; a product state, not a physical map."""

    def fn(rho):
        m = np.ones((1, 1), dtype=complex)
        for _ in range(n):
            m = np.kron(m, rho.matrix)
        return m

    return Cloner(f"ideal{n}", n, fn)


def depolarized_cloner(n: int, eta: float) -> Cloner:
    """(eta rho + (1 - eta) I/d)^{(x) n}."""

    def fn(rho):
        d = rho.matrix.shape[0]
        s = eta * rho.matrix + (1 - eta) * np.eye(d) / d
        m = np.ones((1, 1), dtype=complex)
        for _ in range(n):
            m = np.kron(m, s)
        return m

    return Cloner(f"depolarized{n}({eta})", n, fn)


def classical_copier(n: int) -> Cloner:
    """Measure in the computational basis and broadcast: exact on classical states, broken otherwise."""

    def fn(rho):
        d = rho.matrix.shape[0]
        diag = np.real(np.diag(rho.matrix))
        out = np.zeros((d**n, d**n), dtype=complex)
        for i in range(d):
            k = sum(i * d**j for j in range(n))
            out[k, k] = diag[i]
        return out

    return Cloner(f"copier{n}", n, fn)


# ---------------------------------------------------------------- the prover P'


def _check_four(spec: ProtocolSpec):
    if spec.senders != (VERIFIER, PROVER, VERIFIER, PROVER):
        raise ValueError("the simulator handles 4-message protocols (V, P, V, P)")


def _final_round(prover: QuantumProver, rho: DensityMatrix, prefix: tuple):
    return prover.round_on_memory(rho, prefix)


def _relabel(rho: DensityMatrix, mapping: dict[str, str]) -> DensityMatrix:
    lay = RegisterLayout(tuple((mapping.get(n, n), d) for n, d in zip(rho.layout.names, rho.layout.dims)))
    return DensityMatrix(lay, rho.matrix, check=False)


def cloning_prover_round(spec: ProtocolSpec, prover: QuantumProver, cloner: Cloner, transcript: tuple, rng):
    """First prover message and the one part of the cloned state carried forward."""
    _check_four(spec)
    r = transcript[0]
    m = _sample(prover.distribution((r,)), rng)
    mem = prover.memory_state((r, m))
    parts = cloner(mem)
    t = int(rng.integers(cloner.n))
    keep = partial_trace(parts, part_names(mem.layout, t))
    return m, _relabel(keep, dict(zip(keep.layout.names, mem.layout.names)))


class CloningProver(Prover):
    """P': honest first message, then the last round on a uniformly chosen cloned part."""

    def __init__(self, spec: ProtocolSpec, prover: QuantumProver, cloner: Cloner):
        _check_four(spec)
        self.spec, self.prover, self.cloner = spec, prover, cloner
        self._parts: dict = {}

    def _part(self, r, m, t):
        key = (r, m)
        if key not in self._parts:
            mem = self.prover.memory_state(key)
            parts = self.cloner(mem)
            self._parts[key] = []
            for j in range(self.cloner.n):
                pj = partial_trace(parts, part_names(mem.layout, j))
                self._parts[key].append(_relabel(pj, dict(zip(pj.layout.names, mem.layout.names))))
        return self._parts[key][t]

    def distribution(self, prefix):
        if len(prefix) == 1:
            return self.prover.distribution(prefix)
        out_reg = self.prover.rounds[3].out
        dist: dict[int, float] = {}
        for t in range(self.cloner.n):
            p = _final_round(self.prover, self._part(prefix[0], prefix[1], t), tuple(prefix)).probabilities(out_reg)
            for k in np.flatnonzero(p > 1e-15):
                dist[int(k)] = dist.get(int(k), 0.0) + float(p[k]) / self.cloner.n
        return dist


# ---------------------------------------------------------------- clone database


@dataclass(frozen=True)
class Entry:
    rho: DensityMatrix  # state of the unused parts, in index order
    parts: tuple[int, ...]  # original indices of the parts still stored
    used: tuple[bool, ...]  # per original part


class CloneDatabase:
    """Immutable map key -> Entry; updates return new databases."""

    def __init__(self, entries: dict | None = None, log: tuple = ()):
        self.entries = dict(entries or {})
        self.log = log  # consumed (key, part) pairs in order

    def store(self, key, rho: DensityMatrix, n: int) -> "CloneDatabase":
        new = dict(self.entries)
        new[key] = Entry(rho, tuple(range(n)), (False,) * n)
        return CloneDatabase(new, self.log)

    def next_unused(self, key) -> int:
        if key not in self.entries:
            raise UnknownKey(key)
        e = self.entries[key]
        for j, u in enumerate(e.used):
            if not u:
                return j
        raise DatabaseExhausted(f"every part under {key} has been used")

    def consume(self, key, part: int, rest: DensityMatrix | None) -> "CloneDatabase":
        e = self.entries[key]
        if e.used[part] or (key, part) in self.log:
            raise SubsystemReuse(f"part {part} under {key} measured twice")
        used = tuple(u or j == part for j, u in enumerate(e.used))
        parts = tuple(p for p in e.parts if p != part)
        new = dict(self.entries)
        new[key] = Entry(rest, parts, used)
        return CloneDatabase(new, self.log + ((key, part),))


class Simulator:
    """Sim for one (spec, honest prover, cloner) triple."""

    def __init__(self, spec: ProtocolSpec, prover: QuantumProver, cloner: Cloner):
        _check_four(spec)
        if not 1 <= cloner.n <= MAX_COPIES:
            raise ClonerArityError(f"arity {cloner.n} outside 1..{MAX_COPIES}")
        self.spec, self.prover, self.cloner = spec, prover, cloner
        self.mem_layout = prover.layout.sub(list(prover.memory))
        self._stored: dict = {}

    def stored_state(self, r: int, m: int) -> DensityMatrix:
        """Symmetrized cloned state stored under key (r, m)."""
        if (r, m) not in self._stored:
            parts = self.cloner(self.prover.memory_state((r, m)))
            subs = [part_names(self.mem_layout, j) for j in range(self.cloner.n)]
            self._stored[(r, m)] = symmetrize(parts, subs) if self.cloner.n > 1 else parts
        return self._stored[(r, m)]

    def answer_branches(self, db: CloneDatabase, q: Second) -> list[tuple[float, object, CloneDatabase]]:
        """(prob, m2, next database) for every outcome of consuming the next unused part."""
        key = (q.r, q.m)
        try:
            j = db.next_unused(key)
        except (DatabaseExhausted, UnknownKey) as e:
            return [(1.0, Abort(type(e).__name__), db)]
        e = db.entries[key]
        rho = e.rho
        mine = part_names(self.mem_layout, j)
        rho = _relabel(rho, dict(zip(mine, self.mem_layout.names)))
        # put the consumed part first so the round action sees the memory layout in front
        order = list(self.mem_layout.names) + [n for n in rho.layout.names if n not in self.mem_layout.names]
        rho = partial_trace(rho, order)
        st = _final_round_joint(self.prover, rho, (q.r, q.m, q.r2))
        out_reg = self.prover.rounds[3].out
        p = st.probabilities(out_reg)
        others = [n for n in rho.layout.names if n not in self.mem_layout.names]
        branches = []
        for m2 in np.flatnonzero(p > 1e-15):
            arr, w = project(st, out_reg, int(m2))
            post = DensityMatrix(st.layout, arr / w, check=False)
            rest = partial_trace(post, others) if others else None
            branches.append((float(p[m2]), int(m2), db.consume(key, j, rest)))
        return branches

    def respond(self, req, db: CloneDatabase):
        if isinstance(req, Coin):
            return [(1.0 / req.n, k, db) for k in range(req.n)]
        if isinstance(req, First):
            out = []
            for m, p in self.prover.distribution((req.r,)).items():
                key = (req.r, m)
                nxt = db if key in db.entries else db.store(key, self.stored_state(req.r, m), self.cloner.n)
                out.append((p, m, nxt))
            return out
        if isinstance(req, Second):
            return self.answer_branches(db, req)
        raise TypeError(f"unknown request {req!r}")

    def respond_sample(self, req, db, rng):
        branches = self.respond(req, db)
        k = int(rng.choice(len(branches), p=np.array([b[0] for b in branches]) / sum(b[0] for b in branches)))
        return branches[k][1], branches[k][2]


def _final_round_joint(prover: QuantumProver, rho: DensityMatrix, prefix: tuple) -> DensityMatrix:
    """Last prover round on the memory registers of a joint state; other registers are spectators."""
    lay = prover.round_layout(3)
    extra = lay.sub(list(lay.names[len(prover.memory) :]))
    e = np.zeros((extra.dim, extra.dim), dtype=complex)
    e[0, 0] = 1.0
    full = DensityMatrix(rho.layout.extend(list(zip(extra.names, extra.dims))), np.kron(rho.matrix, e), check=False)
    return prover.rounds[3].action(full, prefix)


def _guard(make_gen: Callable[[], Iterator]) -> Callable[[], Iterator]:
    """Stop the reduction with the Abort outcome as soon as Sim aborts."""

    def gen():
        inner = make_gen()
        try:
            req = next(inner)
        except StopIteration as e:
            return e.value
        while True:
            a = yield req
            if isinstance(a, Abort):
                return a
            try:
                req = inner.send(a)
            except StopIteration as e:
                return e.value

    return gen


@dataclass
class SimReduction:
    """A classical reduction given as ``fn(spec)`` returning a request generator."""

    name: str
    fn: Callable[[ProtocolSpec], Iterator]


def run_sim(spec: ProtocolSpec, prover: QuantumProver, cloner: Cloner, reduction: SimReduction, rng):
    """One sampled interaction; returns (outcome, final database)."""
    sim = Simulator(spec, prover, cloner)
    final = {}

    def respond_sample(req, db, rng):
        a, nxt = sim.respond_sample(req, db, rng)
        final["db"] = nxt
        return a, nxt

    out = drive(_guard(lambda: reduction.fn(spec)), respond_sample, CloneDatabase(), rng)
    return out, final.get("db", CloneDatabase())


def sim_distribution(spec: ProtocolSpec, prover: QuantumProver, cloner: Cloner, reduction: SimReduction) -> dict:
    """Exact outcome distribution of the reduction interacting with Sim."""
    sim = Simulator(spec, prover, cloner)
    return explore(_guard(lambda: reduction.fn(spec)), sim.respond, CloneDatabase())


def sim_logs(spec, prover, cloner, reduction) -> list[tuple]:
    """Consumption logs of every branch (for single-use audits)."""
    sim = Simulator(spec, prover, cloner)
    logs = []

    def rec(answers, db):
        gen = _guard(lambda: reduction.fn(spec))()
        try:
            req = next(gen)
            for a in answers:
                req = gen.send(a)
        except StopIteration:
            logs.append(db.log)
            return
        for q, a, nxt in sim.respond(req, db):
            if q > 0:
                rec(answers + [a], nxt)

    rec([], CloneDatabase())
    return logs


# ------------------------------------------------------------ reduction corpus


def straight_line() -> SimReduction:
    """Plays the honest verifier once; the outcome is the transcript."""

    def fn(spec):
        r = yield Coin(spec.alphabets[0])
        m = yield First(r)
        r2 = yield Coin(spec.alphabets[2])
        m2 = yield Second(r, m, r2)
        return (r, m, r2, m2)

    return SimReduction("straight-line", fn)


def rewind_last(k: int, *, fixed_challenge: int | None = None) -> SimReduction:
    """One commitment, then k answers to fresh (or fixed) last challenges."""

    def fn(spec):
        r = yield Coin(spec.alphabets[0])
        m = yield First(r)
        outs = []
        for _ in range(k):
            r2 = fixed_challenge if fixed_challenge is not None else (yield Coin(spec.alphabets[2]))
            m2 = yield Second(r, m, r2)
            outs.append((r2, m2))
        return (r, m, tuple(outs))

    return SimReduction(f"rewind-x{k}" + ("" if fixed_challenge is None else f"-c{fixed_challenge}"), fn)


def repeated_first(k: int) -> SimReduction:
    """Asks the same first-message query k times, then answers one challenge under each key seen."""

    def fn(spec):
        r = yield Coin(spec.alphabets[0])
        ms = []
        for _ in range(k):
            ms.append((yield First(r)))
        outs = []
        for m in ms:
            r2 = yield Coin(spec.alphabets[2])
            outs.append((yield Second(r, m, r2)))
        return (r, tuple(ms), tuple(outs))

    return SimReduction(f"repeated-first-x{k}", fn)


def unknown_key() -> SimReduction:
    """Asks for a last message under a key it never obtained."""

    def fn(spec):
        m2 = yield Second(0, 0, 0)
        return m2

    return SimReduction("unknown-key", fn)


def sim_corpus(n: int) -> list[SimReduction]:
    return [straight_line()] + [rewind_last(k) for k in range(1, n + 1)] + [repeated_first(2)]


def honest_outcome_distribution(spec: ProtocolSpec, prover: Prover, reduction: SimReduction) -> dict:
    """The same reduction run against a live honest prover that restarts nothing.

    Only meaningful for reductions without rewinding; used as the reference for
    identity-cloner runs.
    """

    def respond(req, st):
        if isinstance(req, Coin):
            return [(1.0 / req.n, k, st) for k in range(req.n)]
        if isinstance(req, First):
            return [(p, m, st) for m, p in prover.distribution((req.r,)).items()]
        return [(p, m2, st) for m2, p in prover.distribution((req.r, req.m, req.r2)).items()]

    return explore(lambda: reduction.fn(spec), respond, None)


def is_exchangeable(dist: dict, index: Callable[[object], tuple], tol: float = 1e-9) -> bool:
    """Whether the distribution of ``index(outcome)`` is invariant under permuting its entries."""
    marg: dict = {}
    for o, p in dist.items():
        k = index(o)
        marg[k] = marg.get(k, 0.0) + p
    for k, p in marg.items():
        for perm in itertools.permutations(k):
            if abs(marg.get(tuple(perm), 0.0) - p) > tol:
                return False
    return True
