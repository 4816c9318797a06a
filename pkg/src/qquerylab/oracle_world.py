"""A toy oracle world and the classical prover built from breaking oracles.

The world holds a random permutation f, a random injective obfuscation map obf
of (code, r) pairs, the Eval oracle that runs obfuscated classical programs with
f-calls, a hash H and Check(x, y) = [H(x) = y].

Prover circuits are OracleCircuits over one register layout whose oracle calls
go to slot ``"f"``. A transcript tag v = ((C_1, s_1), ..., (C_t, s_t)) determines
the post-selected state |psi_v> obtained by running each C_j and projecting its
output register onto s_j. The breaking oracle answers (v, sigma, C) at round i
by measuring C|psi_v> and tagging the extended transcript with H.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .oracles import CircuitBuilder, OracleCircuit, TableBackend, TruthTable, run_until
from .poq import (
    PROVER,
    VERIFIER,
    ProtocolSpec,
    ProverRound,
    QuantumProver,
    _parity,
    _sample,
    _xor_perm,
    clawfree_soundness,
    hadamard_n,
    non_triviality_t,
)
from .qsim import HADAMARD, StateVector, ZeroWeight, permutation_matrix, project_normalize

MAX_PARAM = 4
BOTTOM = None


class InconsistentTranscript(ValueError):
    def __init__(self, step: int):
        super().__init__(f"transcript has zero weight at step {step}")
        self.step = step


@dataclass(frozen=True)
class WorldParams:
    lam_f: int = 3
    lam_o: int = 3
    lam_h: int = 3
    ell: int = 4

    def __post_init__(self):
        for k in ("lam_f", "lam_o", "lam_h", "ell"):
            v = getattr(self, k)
            if not 1 <= v <= MAX_PARAM:
                raise ValueError(f"{k}={v} outside 1..{MAX_PARAM}")

    @property
    def obf_bits(self) -> int:
        return 3 * self.lam_o


# ------------------------------------------------------------------- programs

# Classical programs with f-calls; op is ("f",), ("xor", k) or ("const", k).
PROGRAMS: tuple[tuple, ...] = (
    (),
    (("f",),),
    (("f",), ("f",)),
    (("xor", 1),),
    (("f",), ("xor", 1)),
    (("xor", 1), ("f",)),
    (("const", 0),),
    (("f",), ("f",), ("f",)),
    (("xor", 2),),
    (("f",), ("xor", 2)),
    (("xor", 2), ("f",)),
    (("f",), ("xor", 1), ("f",)),
    (("const", 1),),
    (("xor", 3),),
    (("f",), ("xor", 3)),
    (("xor", 3), ("f",)),
)


def run_program(program: Sequence[tuple], f: Callable[[int], int], z: int, mask: int) -> tuple[int, list[int]]:
    """Run a program on z; returns (output, f-query points in order)."""
    queries = []
    for op in program:
        if op[0] == "f":
            queries.append(z)
            z = f(z)
        elif op[0] == "xor":
            z = (z ^ op[1]) & mask
        else:
            z = op[1] & mask
    return z, queries


# --------------------------------------------------------------------- hashing


class LazyHash:
    """Random function onto ``bits``-bit strings, evaluated lazily from a seed."""

    def __init__(self, seed: int, bits: int):
        self.seed, self.bits = seed, bits
        self.memo: dict[bytes, int] = {}

    def __call__(self, key) -> int:
        raw = _key_bytes(key)
        if raw not in self.memo:
            h = hashlib.sha256(self.seed.to_bytes(8, "big") + raw).digest()
            self.memo[raw] = int.from_bytes(h[:8], "big") % (1 << self.bits)
        return self.memo[raw]


def _key_bytes(key) -> bytes:
    return repr(key).encode()


_DIGESTS: dict[int, tuple[OracleCircuit, str]] = {}


def describe(c: OracleCircuit) -> str:
    """Short stable description of a circuit (digest of its text format)."""
    hit = _DIGESTS.get(id(c))
    if hit is None or hit[0] is not c:
        hit = (c, hashlib.sha256(c.key().encode()).hexdigest()[:16])
        _DIGESTS[id(c)] = hit
    return hit[1]


def tag_key(v: Sequence[tuple[OracleCircuit, int]]) -> tuple:
    return tuple((describe(c), int(s)) for c, s in v)


# ----------------------------------------------------------------------- world


@dataclass
class World:
    params: WorldParams
    f: TruthTable
    obf: TruthTable
    H: LazyHash
    seed: int
    _obf_inv: dict = field(default_factory=dict, repr=False)
    _psi: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._obf_inv = {self.obf(k): k for k in self.obf.domain}

    @property
    def n(self) -> int:
        return 1 << self.params.lam_f

    def check(self, x, y) -> bool:
        return y is not None and self.H(x) == y

    def invert_obf(self, c_tilde: int) -> tuple[int, int] | None:
        k = self._obf_inv.get(c_tilde)
        if k is None:
            return None
        return divmod(k, 1 << self.params.lam_o)

    def obfuscate(self, code: int, r: int) -> int:
        side = 1 << self.params.lam_o
        if not (0 <= code < side and 0 <= r < side):
            raise ValueError(f"code {code} and randomness {r} must lie in 0..{side - 1}")
        return self.obf(code * side + r)

    def eval(self, c_tilde: int, z: int) -> int | None:
        """Eval(c~, z): bottom (None) outside Image(obf), else the program's output."""
        pair = self.invert_obf(c_tilde)
        if pair is None:
            return BOTTOM
        return run_program(PROGRAMS[pair[0]], self.f, z, self.n - 1)[0]

    def eval_table(self) -> TruthTable:
        """Eval as one classical table on c~ * 2^lam_f + z; bottom is the symbol 2^lam_f."""
        n = self.n
        outs = {}
        for c, z in itertools.product(range(1 << self.params.obf_bits), range(n)):
            e = self.eval(c, z)
            outs[c * n + z] = n if e is None else e
        return TruthTable(tuple(range(len(outs))), outs, 2 * n)

    def with_f(self, table: TruthTable) -> "World":
        """Same world with f replaced (for punctured or reprogrammed variants)."""
        return World(self.params, table, self.obf, self.H, self.seed)

    def backend(self) -> TableBackend:
        return TableBackend({"f": self.f})

    def dump(self) -> str:
        p = self.params
        lines = [f"params lam_f={p.lam_f} lam_o={p.lam_o} lam_h={p.lam_h} ell={p.ell}", f"seed {self.seed}"]
        lines.append("f " + " ".join(str(self.f(x)) for x in self.f.domain))
        lines.append("obf " + " ".join(str(self.obf(x)) for x in self.obf.domain))
        for raw in sorted(self.H.memo):
            lines.append(f"H {hashlib.sha256(raw).hexdigest()[:16]} {self.H.memo[raw]}")
        return "\n".join(lines) + "\n"


def sample_world(params: WorldParams, rng: np.random.Generator) -> World:
    n = 1 << params.lam_f
    f = TruthTable.from_list([int(v) for v in rng.permutation(n)], n)
    dom = 1 << (2 * params.lam_o)
    img = rng.choice(1 << params.obf_bits, size=dom, replace=False)
    obf = TruthTable.from_list([int(v) for v in img], 1 << params.obf_bits)
    seed = int(rng.integers(1 << 62))
    return World(params, f, obf, LazyHash(seed, params.lam_h), seed)


def eval_oracle(world: World, c_tilde: int, z: int) -> int | None:
    return world.eval(c_tilde, z)


# ------------------------------------------------------------ prover states


def build_psi_v(world: World, v: Sequence[tuple[OracleCircuit, int]], layout=None) -> StateVector:
    """|psi_v>: from |0>, run each C_j and project its output register onto s_j."""
    key = tag_key(v)
    if key in world._psi:
        return world._psi[key]
    if not v:
        if layout is None:
            raise ValueError("the empty transcript needs a register layout")
        return StateVector.basis(layout)
    c, s = v[-1]
    prev = build_psi_v(world, v[:-1], c.layout)
    state = run_until(c, world.backend(), state=prev)
    try:
        state, _ = project_normalize(state, c.output[0], s)
    except ZeroWeight:
        raise InconsistentTranscript(len(v)) from None
    world._psi[key] = state
    return state


def breaking_distribution(world: World, v, c: OracleCircuit) -> dict[int, float]:
    """Exact distribution of measuring C|psi_v> on C's output register."""
    state = run_until(c, world.backend(), state=build_psi_v(world, v, c.layout))
    p = state.probabilities(c.output[0])
    return {int(m): float(p[m]) for m in np.flatnonzero(p > 1e-15)}


class BreakingOracle:
    """The samplers P_1..P_ell with memoization: one fixed answer per query."""

    def __init__(self, world: World):
        self.world = world
        self.cache: dict = {}

    def __call__(self, v, sigma, c: OracleCircuit, i: int, rng) -> tuple[int, int] | None:
        if not 1 <= i <= self.world.params.ell:
            raise ValueError(f"round {i} outside 1..{self.world.params.ell}")
        q = (tag_key(v), sigma, describe(c), i)
        if q not in self.cache:
            self.cache[q] = breaking_sample(self.world, (v, sigma, c), i, rng)
        return self.cache[q]


def breaking_sample(world: World, query, i: int, rng) -> tuple[int, int] | None:
    """One draw from the breaking distribution at round i; None is bottom."""
    v, sigma, c = query
    if i > 1 and not world.check((tag_key(v), i - 1), sigma):
        return BOTTOM
    s = _sample(breaking_distribution(world, v, c), rng)
    ext = tuple(v) + ((c, s),)
    return s, world.H((tag_key(ext), i))


# ------------------------------------------------------ protocols over a world


@dataclass
class WorldProtocol:
    """A public-coin protocol whose honest prover runs ``circuit(prefix)`` at each of its rounds."""

    spec: ProtocolSpec
    circuit: Callable[[tuple], OracleCircuit]

    def prover(self, world: World) -> QuantumProver:
        first = self.circuit(self._sample_prefix())
        backend = world.backend()

        def round_for(j):
            def action(state, prefix):
                return run_until(self.circuit(tuple(prefix)), backend, state=state)

            return ProverRound(action, self._out(j), tuple(first.layout.names))

        rounds = {j: round_for(j) for j, s in enumerate(self.spec.senders) if s == PROVER}
        return QuantumProver(first.layout, rounds, memory=first.layout.names)

    def _sample_prefix(self) -> tuple:
        j = self.spec.senders.index(PROVER)
        return (0,) * j

    def _out(self, j) -> str:
        return self.circuit((0,) * j).output[0]


def world_clawfree_protocol(world: World) -> WorldProtocol:
    """The uniform-d 4-message claw protocol with the world's f as the permutation."""
    bits = world.params.lam_f
    n = 1 << bits
    f = world.f

    def predicate(t):
        s, y, c, a = t[0] + 1, t[1], t[2], t[3]
        if c == 0:
            b, x = a >> bits, a & (n - 1)
            return f(x ^ (b * s)) == y
        d, u = a >> 1, a & 1
        return d != 0 and u == _parity(d & s)

    c = 1 - Fraction(1, 2 * n)
    s = clawfree_soundness(bits)
    spec = ProtocolSpec(
        name=f"world-clawfree{bits}",
        senders=(VERIFIER, PROVER, VERIFIER, PROVER),
        alphabets=(n - 1, n, 2, 2 * n),
        predicate=predicate,
        completeness=c,
        soundness=s,
        t=non_triviality_t(c, s),
        params={"bits": bits},
    )
    regs = (("B", 2), ("X", n), ("Y", n), ("A", 2 * n))
    hn = hadamard_n(bits)
    to_a_hi = permutation_matrix(_xor_perm((2, 2 * n), lambda b: b * n, 1))
    to_a_lo = permutation_matrix(_xor_perm((n, 2 * n), lambda x: x, 1))
    to_a_d = permutation_matrix(_xor_perm((n, 2 * n), lambda x: 2 * x, 1))
    to_a_u = permutation_matrix(_xor_perm((2, 2 * n), lambda b: b, 1))
    cache: dict = {}

    def circuit(prefix):
        prefix = tuple(prefix)
        if len(prefix) == 1:
            key = ("commit", prefix[0] + 1)
        elif len(prefix) == 3:
            key = ("answer", prefix[2])
        else:
            raise ValueError(f"no prover round after {len(prefix)} messages")
        if key not in cache:
            b = CircuitBuilder(*regs)
            if key[0] == "commit":
                shift = permutation_matrix(_xor_perm((2, n), lambda bb, k=key[1]: bb * k, 1))
                b.u(HADAMARD, "B", name="h_b").u(hn, "X", name="h_x")
                b.u(shift, "B", "X", name="shift").call("f", "X", "Y").u(shift, "B", "X", name="unshift")
                cache[key] = b.build(("Y",))
            elif key[1] == 0:
                b.u(to_a_hi, "B", "A", name="copy_b").u(to_a_lo, "X", "A", name="copy_x")
                cache[key] = b.build(("A",))
            else:
                b.u(HADAMARD, "B", name="h_b").u(hn, "X", name="h_x")
                b.u(to_a_d, "X", "A", name="copy_d").u(to_a_u, "B", "A", name="copy_u")
                cache[key] = b.build(("A",))
        return cache[key]

    return WorldProtocol(spec, circuit)


# ----------------------------------------------------------- classical breaker


@dataclass
class BreakerRun:
    transcript: tuple
    accepted: bool
    chain: list  # (v, sigma) after each prover round
    aborted: bool = False


def classical_play(world: World, proto: WorldProtocol, rng, oracle: BreakingOracle | None = None) -> BreakerRun:
    """One classical run: every prover message comes from the breaking oracle.

    Round i asks for ((C_1, s_1, ..., C_{i-1}, s_{i-1}), sigma_{i-1}, C_i) and
    keeps the returned tag for the next round.
    """
    oracle = oracle or BreakingOracle(world)
    spec = proto.spec
    t: tuple = ()
    v: tuple = ()
    sigma = None
    chain = []
    i = 0
    for sender in spec.senders:
        if sender == VERIFIER:
            t += (_sample(spec.verifier_distribution(t), rng),)
            continue
        i += 1
        c = proto.circuit(t)
        out = oracle(v, sigma, c, i, rng)
        if out is BOTTOM:
            return BreakerRun(t, False, chain, aborted=True)
        s, sigma = out
        v = v + ((c, s),)
        chain.append((v, sigma))
        t += (s,)
    return BreakerRun(t, spec.accepts(t), chain)


@dataclass
class BreakerReport:
    acceptance: float
    sigma: float
    honest: float
    trials: int

    @property
    def gap(self) -> float:
        return self.acceptance - self.honest

    @property
    def holds(self) -> bool:
        return abs(self.gap) <= 3 * self.sigma + 1e-12


def honest_acceptance(world: World, proto: WorldProtocol) -> float:
    from .poq import acceptance_probability

    return acceptance_probability(proto.spec, proto.prover(world))


def classical_breaker(world: World, proto: WorldProtocol, trials: int, rng) -> BreakerReport:
    """Acceptance frequency of the classical breaker; a fresh oracle table per trial."""
    wins = sum(classical_play(world, proto, rng).accepted for _ in range(trials))
    p = wins / trials
    honest = honest_acceptance(world, proto)
    sigma = math.sqrt(max(honest * (1 - honest), 1e-300) / trials)
    return BreakerReport(p, sigma, honest, trials)


def replay_chain(world: World, circuits: Sequence[OracleCircuit], outputs: Sequence[int], sigmas: Sequence, rng):
    """Ask the breaking oracle round by round with the given tags.

    Round i uses sigmas[i-2] (the tag of round i-1, possibly corrupted); the
    answer is bottom whenever the tag does not check. Returns the list of answers.
    """
    v: tuple = ()
    answers = []
    for i, c in enumerate(circuits, start=1):
        sigma = sigmas[i - 2] if i > 1 else None
        answers.append(breaking_sample(world, (v, sigma, c), i, rng))
        v = v + ((c, outputs[i - 1]),)
    return answers


# ----------------------------------------------------------------------- find


def find_distribution(world: World, y: tuple) -> dict[tuple, float]:
    """Exact output distribution of Find on query symbol y.

    y is ("f", x) or ("Eval", c~, z). With probability 1/2 Find returns y;
    otherwise it runs the program behind c~ on z and returns one of its f-queries
    uniformly. Unparseable symbols and programs without f-queries return y.
    """
    out: dict[tuple, float] = {y: 0.5}
    qs = _tracked_queries(world, y)
    if not qs:
        out[y] += 0.5
        return out
    for x in qs:
        key = ("f", x)
        out[key] = out.get(key, 0.0) + 0.5 / len(qs)
    return out


def _tracked_queries(world: World, y: tuple) -> list[int]:
    if y[0] != "Eval":
        return []
    pair = world.invert_obf(y[1])
    if pair is None:
        return []
    return run_program(PROGRAMS[pair[0]], world.f, y[2], world.n - 1)[1]


def find_procedure(world: World, y: tuple, rng) -> tuple:
    if rng.random() < 0.5:
        return y
    qs = _tracked_queries(world, y)
    if not qs:
        return y
    return ("f", qs[int(rng.integers(len(qs)))])


def differs(world: World, other: World, sym: tuple) -> bool:
    """Whether the two worlds answer query symbol ``sym`` differently."""
    if sym[0] == "f":
        return world.f(sym[1]) != other.f(sym[1])
    return world.eval(sym[1], sym[2]) != other.eval(sym[1], sym[2])


def symbol_length(world: World, y: tuple) -> int:
    """|y| used by the Find bound: the number of f-queries behind y (at least 1)."""
    return max(1, len(_tracked_queries(world, y)))


def swap_f(world: World, a: int, b: int) -> World:
    """Variant with f(a) and f(b) exchanged (still a permutation)."""
    outs = {x: world.f(x) for x in world.f.domain}
    outs[a], outs[b] = outs[b], outs[a]
    return world.with_f(TruthTable(world.f.domain, outs, world.f.alphabet))
