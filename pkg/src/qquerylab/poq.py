"""Interactive proofs of quantumness at toy scale.

A protocol is a fixed schedule of verifier ("V") and prover ("P") messages over
small integer alphabets plus a predicate on complete transcripts. Every prover
exposes the same interface: the distribution of its next message given the
transcript so far. For a quantum prover this distribution comes from a purified
simulation post-selected on the prover's own earlier messages, which is also
what hardcoding, puzzle extraction and the meta-reduction need.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .advice_oracle import AdviceSpec, AdvOSession
from .oracles import BudgetExceeded
from .qsim import (
    HADAMARD,
    DensityMatrix,
    RegisterLayout,
    StateVector,
    ZeroWeight,
    apply_permutation,
    apply_unitary,
    measure_register,
    partial_trace,
    project_normalize,
    statistical_distance,
    unitary_from_first_column,
)

VERIFIER, PROVER = "V", "P"
REJECT = -1  # reply reserved for transcripts the honest prover never reaches
TIE_TOL = 1e-12

State = StateVector | DensityMatrix


class ScheduleMismatch(ValueError):
    pass


# ----------------------------------------------------------------------- specs


@dataclass(frozen=True)
class ProtocolSpec:
    """Message schedule, alphabets and verifier predicate.

    ``completeness``/``soundness`` are the declared values at this toy size and
    ``t`` the non-triviality parameter (c - s >= 1/t). ``classical_strategies``
    enumerates the classical prover class the soundness value refers to.
    """

    name: str
    senders: tuple
    alphabets: tuple
    predicate: Callable[[tuple], bool]
    public_coin: bool = True
    completeness: Fraction | None = None
    soundness: Fraction | None = None
    t: int | None = None
    verifier_message: Callable[[tuple], Mapping[int, float]] | None = None
    classical_strategies: Callable[[], Iterable["Prover"]] | None = None
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "senders", tuple(self.senders))
        object.__setattr__(self, "alphabets", tuple(int(a) for a in self.alphabets))
        if len(self.senders) != len(self.alphabets):
            raise ScheduleMismatch("one alphabet per message")
        for i, s in enumerate(self.senders):
            if s not in (VERIFIER, PROVER):
                raise ScheduleMismatch(f"unknown sender {s!r}")
            if i and s == self.senders[i - 1]:
                raise ScheduleMismatch("messages must alternate between verifier and prover")
        if not self.public_coin and self.verifier_message is None:
            raise ScheduleMismatch("a private-coin verifier needs a message sampler")

    @property
    def rounds(self) -> int:
        return len(self.senders)

    @property
    def prover_rounds(self) -> list[int]:
        return [i for i, s in enumerate(self.senders) if s == PROVER]

    def verifier_distribution(self, prefix: tuple) -> dict[int, float]:
        j = len(prefix)
        if self.senders[j] != VERIFIER:
            raise ScheduleMismatch(f"message {j} is sent by the prover")
        if self.verifier_message is not None:
            return dict(self.verifier_message(prefix))
        n = self.alphabets[j]
        return {m: 1.0 / n for m in range(n)}

    def accepts(self, transcript: Sequence[int]) -> bool:
        transcript = tuple(transcript)
        if len(transcript) != self.rounds:
            raise ScheduleMismatch(f"transcript has {len(transcript)} messages, protocol has {self.rounds}")
        if any(not 0 <= m < a for m, a in zip(transcript, self.alphabets)):
            return False
        return bool(self.predicate(transcript))

    def nontrivial(self) -> bool:
        if None in (self.completeness, self.soundness, self.t):
            return False
        return self.completeness - self.soundness >= Fraction(1, self.t)


@dataclass(frozen=True)
class Transcript:
    messages: tuple
    senders: tuple

    def to_text(self) -> str:
        return "".join(f"{i + 1} {s} {m}\n" for i, (s, m) in enumerate(zip(self.senders, self.messages)))

    @classmethod
    def from_text(cls, text: str) -> "Transcript":
        msgs, senders = [], []
        for i, line in enumerate(l for l in text.splitlines() if l.strip()):
            r, s, m = line.split()
            if int(r) != i + 1:
                raise ScheduleMismatch(f"line {i + 1} carries round {r}")
            senders.append(s)
            msgs.append(int(m))
        return cls(tuple(msgs), tuple(senders))


def non_triviality_t(c: Fraction, s: Fraction) -> int | None:
    """Smallest t with c - s >= 1/t, or None when c <= s."""
    gap = Fraction(c) - Fraction(s)
    return math.ceil(1 / gap) if gap > 0 else None


# --------------------------------------------------------------------- provers


class Prover:
    """Next-message distribution given the transcript so far."""

    def distribution(self, prefix: tuple) -> dict[int, float]:
        raise NotImplementedError

    def respond(self, prefix: tuple, rng: np.random.Generator) -> int:
        return _sample(self.distribution(prefix), rng)

    def session(self):
        """Fresh per-interaction responder (stateful for quantum provers)."""
        return self


def _sample(dist: Mapping[int, float], rng: np.random.Generator) -> int:
    keys = sorted(dist)
    p = np.array([dist[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


class ClassicalProver(Prover):
    """Deterministic (returns an int) or randomized (returns a mapping) responder."""

    def __init__(self, fn: Callable[[tuple], int | Mapping[int, float]], name: str = "classical"):
        self.fn = fn
        self.name = name

    def distribution(self, prefix):
        r = self.fn(tuple(prefix))
        if isinstance(r, Mapping):
            return dict(r)
        return {int(r): 1.0}

    def __repr__(self):
        return f"ClassicalProver({self.name})"


@dataclass
class ProverRound:
    """``action(state, prefix)`` prepares the message in register ``out``.

    ``fresh`` lists registers first touched in this round; the action may act on
    them and on the prover's memory registers only.
    """

    action: Callable[[State, tuple], State]
    out: str
    fresh: tuple = ()


class QuantumProver(Prover):
    """Purified quantum prover with one measured output register per round."""

    def __init__(
        self,
        layout: RegisterLayout,
        rounds: Mapping[int, ProverRound],
        memory: Sequence[str] = (),
        initial: StateVector | None = None,
    ):
        self.layout = layout
        self.rounds = dict(rounds)
        self.memory = tuple(memory)
        self.initial = initial if initial is not None else StateVector.basis(layout)
        self._post: dict[tuple, StateVector] = {}
        self._pre: dict[tuple, StateVector] = {}

    def _round(self, j: int) -> ProverRound:
        if j not in self.rounds:
            raise ScheduleMismatch(f"prover does not speak at message {j}")
        return self.rounds[j]

    def conditional_state(self, prefix: tuple) -> StateVector:
        """State after every prover message in ``prefix`` was produced and post-selected.

        Raises ZeroWeight for transcripts the prover never produces.
        """
        prefix = tuple(prefix)
        if prefix in self._post:
            return self._post[prefix]
        if not prefix:
            s = self.initial
        elif len(prefix) - 1 in self.rounds:
            pre = self.pre_measurement_state(prefix[:-1])
            s, _ = project_normalize(pre, self.rounds[len(prefix) - 1].out, prefix[-1])
        else:
            s = self.conditional_state(prefix[:-1])
        self._post[prefix] = s
        return s

    def pre_measurement_state(self, prefix: tuple) -> StateVector:
        prefix = tuple(prefix)
        if prefix not in self._pre:
            self._pre[prefix] = self._round(len(prefix)).action(self.conditional_state(prefix), prefix)
        return self._pre[prefix]

    def distribution(self, prefix):
        r = self._round(len(prefix))
        p = self.pre_measurement_state(prefix).probabilities(r.out)
        return {int(m): float(p[m]) for m in np.flatnonzero(p > 1e-15)}

    def memory_state(self, prefix: tuple) -> DensityMatrix:
        return partial_trace(self.conditional_state(prefix), self.memory)

    def round_layout(self, j: int) -> RegisterLayout:
        return self.layout.sub(list(self.memory) + [n for n in self._round(j).fresh if n not in self.memory])

    def round_on_memory(self, rho: State, prefix: tuple) -> State:
        """Run the round-``len(prefix)`` action on a memory state with fresh registers at |0>."""
        j = len(prefix)
        lay = self.round_layout(j)
        extra = lay.sub(list(lay.names[len(self.memory):]))
        if isinstance(rho, StateVector):
            full = StateVector(lay, np.kron(rho.amps, StateVector.basis(extra).amps))
        else:
            e = np.zeros((extra.dim, extra.dim), dtype=complex)
            e[0, 0] = 1.0
            full = DensityMatrix(lay, np.kron(rho.matrix, e), check=False)
        return self._round(j).action(full, prefix)

    def round_matrix(self, prefix: tuple) -> np.ndarray:
        """Matrix of the round action on (memory, fresh registers) for this prefix."""
        lay = self.round_layout(len(prefix))
        cols = []
        for k in range(lay.dim):
            e = np.zeros(lay.dim, dtype=complex)
            e[k] = 1.0
            cols.append(self._round(len(prefix)).action(StateVector(lay, e), tuple(prefix)).amps)
        return np.array(cols).T

    def session(self):
        return _LiveSession(self)


class _LiveSession:
    """One interaction with a live state, measured round by round."""

    def __init__(self, prover: QuantumProver):
        self.prover = prover
        self.state = prover.initial

    def respond(self, prefix, rng):
        r = self.prover._round(len(prefix))
        self.state = r.action(self.state, tuple(prefix))
        m, self.state, _ = measure_register(self.state, r.out, rng)
        return m


class ProductProver(Prover):
    """Independent provers on the coordinates of a mixed-radix message encoding."""

    def __init__(self, provers: Sequence[Prover], alphabets: Sequence[tuple]):
        self.provers = list(provers)
        self.alphabets = [tuple(a) for a in alphabets]  # per message: per-copy alphabet sizes

    def distribution(self, prefix):
        j = len(prefix)
        split = [decode(m, self.alphabets[i]) for i, m in enumerate(prefix)]
        out = {0: 1.0}
        for k, p in enumerate(self.provers):
            sub = tuple(s[k] for s in split)
            dk = p.distribution(sub)
            base = self.alphabets[j][k]
            out = {a * base + m: pa * pm for a, pa in out.items() for m, pm in dk.items()}
        return out


def encode(digits: Sequence[int], bases: Sequence[int]) -> int:
    """Mixed-radix encoding, first digit most significant."""
    v = 0
    for d, b in zip(digits, bases):
        v = v * b + int(d)
    return v


def decode(v: int, bases: Sequence[int]) -> tuple:
    out = []
    for b in reversed(bases):
        out.append(v % b)
        v //= b
    return tuple(reversed(out))


# ------------------------------------------------------------------ execution


def transcript_distribution(spec: ProtocolSpec, prover: Prover, length: int | None = None) -> dict[tuple, float]:
    """Exact distribution of the first ``length`` messages of an honest-verifier run."""
    n = spec.rounds if length is None else length
    out: dict[tuple, float] = {}

    def rec(prefix, p):
        if len(prefix) == n:
            out[prefix] = out.get(prefix, 0.0) + p
            return
        if spec.senders[len(prefix)] == VERIFIER:
            dist = spec.verifier_distribution(prefix)
        else:
            dist = prover.distribution(prefix)
        for m, q in dist.items():
            if q > 0:
                rec(prefix + (m,), p * q)

    rec((), 1.0)
    return out


def acceptance_probability(spec: ProtocolSpec, prover: Prover) -> float:
    return sum(p for t, p in transcript_distribution(spec, prover).items() if spec.accepts(t))


def run_protocol(spec: ProtocolSpec, prover: Prover, rng: np.random.Generator) -> tuple[Transcript, bool]:
    sess = prover.session()
    prefix: tuple = ()
    for j in range(spec.rounds):
        if spec.senders[j] == VERIFIER:
            m = _sample(spec.verifier_distribution(prefix), rng)
        else:
            m = sess.respond(prefix, rng)
        prefix += (m,)
    return Transcript(prefix, spec.senders), spec.accepts(prefix)


def estimate_acceptance(spec, prover, trials: int, rng) -> tuple[float, float]:
    """Monte Carlo acceptance and its binomial standard error."""
    hits = sum(run_protocol(spec, prover, rng)[1] for _ in range(trials))
    p = hits / trials
    return p, math.sqrt(max(p * (1 - p), 0.0) / trials)


def classical_soundness(spec: ProtocolSpec) -> tuple[float, Prover | None]:
    """Best exact acceptance over the protocol's declared classical strategy class."""
    if spec.classical_strategies is None:
        raise ValueError(f"{spec.name} declares no classical strategy class")
    best, arg = -1.0, None
    for s in spec.classical_strategies():
        p = acceptance_probability(spec, s)
        if p > best + TIE_TOL:
            best, arg = p, s
    return best, arg


# ---------------------------------------------------------------- toy protocols


def toy_permutation(bits: int) -> tuple[Callable[[int], int], Callable[[int], int]]:
    """The published toy permutation x -> 3x + 1 mod 2^bits and its inverse."""
    n = 1 << bits
    a = 3 % n if n > 2 else 1
    ainv = pow(a, -1, n) if n > 1 else 0
    return (lambda x: (a * x + 1) % n), (lambda y: (ainv * (y - 1)) % n)


def _xor_perm(dims: Sequence[int], fn: Callable[..., int], target: int) -> np.ndarray:
    """Permutation |v_0..v_k> -> same with v_target ^= fn(other values)."""
    perm = np.arange(int(np.prod(dims)))
    for idx in itertools.product(*(range(d) for d in dims)):
        v = list(idx)
        v[target] ^= fn(*[x for i, x in enumerate(idx) if i != target])
        perm[encode(idx, dims)] = encode(v, dims)
    return perm


def hadamard_n(bits: int) -> np.ndarray:
    h = np.ones((1, 1), dtype=complex)
    for _ in range(bits):
        h = np.kron(h, HADAMARD)
    return h


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def toy_owf_poq(bits: int) -> tuple[ProtocolSpec, QuantumProver]:
    """Two messages: the verifier sends y = f(x), the prover must return a preimage.

    The honest prover inverts f by brute force; the classical class is the set of
    constant responders.
    """
    if not 1 <= bits <= 4:
        raise ValueError("toy_owf_poq supports 1..4 bits")
    n = 1 << bits
    f, finv = toy_permutation(bits)

    def strategies():
        return [ClassicalProver(lambda p, x=x: x, name=f"const{x}") for x in range(n)]

    spec = ProtocolSpec(
        name=f"owf{bits}",
        senders=(VERIFIER, PROVER),
        alphabets=(n, n),
        predicate=lambda t: f(t[1]) == t[0],
        completeness=Fraction(1),
        soundness=Fraction(1, n),
        t=non_triviality_t(Fraction(1), Fraction(1, n)),
        classical_strategies=strategies,
        params={"bits": bits},
    )
    layout = RegisterLayout.of(("OUT", n))

    def answer(state, prefix):
        x = finv(prefix[0])
        return apply_permutation(state, np.arange(n) ^ x, "OUT")

    prover = QuantumProver(layout, {1: ProverRound(answer, "OUT", ("OUT",))})
    return spec, prover


def clawfree_soundness(bits: int) -> Fraction:
    """Best oblivious classical acceptance: a known preimage plus a blind guess of d.s."""
    n = 1 << bits
    return Fraction(1, 2) + Fraction(n, 4 * (n - 1))


def toy_clawfree_poq(bits: int, d_mode: str = "nonzero") -> tuple[ProtocolSpec, QuantumProver]:
    """Four messages over the pair f_b(x) = pi(x xor b.s).

    1. V sends a nonzero key s (encoded as s - 1).
    2. P commits an image y; its state is the claw (|0, x0> + |1, x0 ^ s>)/sqrt2.
    3. V sends a challenge bit c.
    4. c = 0: P returns a preimage b * 2^bits + x.
       c = 1: P returns 2d + u with d != 0 and u = d.s.

    ``d_mode="nonzero"`` picks d uniformly among nonzero strings and uncomputes x
    by brute force (completeness 1). ``d_mode="uniform"`` measures everything in
    the Hadamard basis, so d = 0 occurs and is rejected (completeness
    1 - 2^-(bits+1)).

    The classical class is the oblivious one: the prover never reads s.
    """
    if not 1 <= bits <= 3:
        raise ValueError("toy_clawfree_poq supports 1..3 bits")
    if d_mode not in ("nonzero", "uniform"):
        raise ValueError(f"unknown d_mode {d_mode!r}")
    n = 1 << bits
    pi, pinv = toy_permutation(bits)

    def predicate(t):
        s, y, c, a = t[0] + 1, t[1], t[2], t[3]
        if c == 0:
            b, x = a >> bits, a & (n - 1)
            return pi(x ^ (b * s)) == y
        d, u = a >> 1, a & 1
        return d != 0 and u == _parity(d & s)

    def strategies():
        for y, a0, a1 in itertools.product(range(n), range(2 * n), range(2 * n)):
            yield ClassicalProver(
                lambda p, y=y, a0=a0, a1=a1: y if len(p) == 1 else (a0 if p[2] == 0 else a1),
                name=f"oblivious(y={y},a0={a0},a1={a1})",
            )

    c = Fraction(1) if d_mode == "nonzero" else 1 - Fraction(1, 2 * n)
    s = clawfree_soundness(bits)
    spec = ProtocolSpec(
        name=f"clawfree{bits}-{d_mode}",
        senders=(VERIFIER, PROVER, VERIFIER, PROVER),
        alphabets=(n - 1, n, 2, 2 * n),
        predicate=predicate,
        completeness=c,
        soundness=s,
        t=non_triviality_t(c, s),
        classical_strategies=strategies,
        params={"bits": bits, "d_mode": d_mode},
    )

    regs = [("B", 2), ("X", n), ("Y", n)]
    if d_mode == "nonzero":
        regs.append(("D", n))
    regs.append(("A", 2 * n))
    layout = RegisterLayout.of(*regs)
    hn = hadamard_n(bits)

    def commit(state, prefix):
        key = prefix[0] + 1
        state = apply_unitary(state, HADAMARD, "B", check=False)
        state = apply_unitary(state, hn, "X", check=False)
        perm = _xor_perm((2, n, n), lambda b, x: pi(x ^ (b * key)), 2)
        return apply_permutation(state, perm, ["B", "X", "Y"])

    nonzero = np.zeros(n)
    nonzero[1:] = 1.0 / math.sqrt(n - 1)
    prep_d = unitary_from_first_column(nonzero)
    phase = np.diag([(-1.0) ** _parity(x & d) for x in range(n) for d in range(n)]).astype(complex)

    def answer(state, prefix):
        key, y, ch = prefix[0] + 1, prefix[1], prefix[2]
        if ch == 0:
            return apply_permutation(state, _xor_perm((2, n, 2 * n), lambda b, x: b * n + x, 2), ["B", "X", "A"])
        if d_mode == "uniform":
            state = apply_unitary(state, HADAMARD, "B", check=False)
            state = apply_unitary(state, hn, "X", check=False)
            return apply_permutation(state, _xor_perm((2, n, 2 * n), lambda b, x: 2 * x + b, 2), ["B", "X", "A"])
        state = apply_unitary(state, prep_d, "D", check=False)
        state = apply_unitary(state, phase, ["X", "D"], check=False)
        x0 = pinv(y)
        state = apply_permutation(state, _xor_perm((2, n), lambda b: x0 ^ (b * key), 1), ["B", "X"])
        state = apply_unitary(state, HADAMARD, "B", check=False)
        return apply_permutation(state, _xor_perm((n, 2, 2 * n), lambda d, b: 2 * d + b, 2), ["D", "B", "A"])

    fresh4 = ("D", "A") if d_mode == "nonzero" else ("A",)
    prover = QuantumProver(
        layout,
        {1: ProverRound(commit, "Y", ("Y",)), 3: ProverRound(answer, "A", fresh4)},
        memory=("B", "X"),
    )
    return spec, prover


def toy_three_message_poq() -> tuple[ProtocolSpec, QuantumProver]:
    """P, V, P toy used by the meta-reduction.

    The prover prepares (|0>_A|+>_B + |1>_A|1>_B)/sqrt2 and sends m1 = A. On
    challenge y = 1 it applies H to B; it then sends m3 = B. The verifier accepts
    iff m3 = 0 (y = 0) or m3 = m1 (y = 1). First message 0 accepts with 3/4,
    first message 1 with 1/4.
    """
    spec = ProtocolSpec(
        name="three-message",
        senders=(PROVER, VERIFIER, PROVER),
        alphabets=(2, 2, 2),
        predicate=lambda t: t[2] == 0 if t[1] == 0 else t[2] == t[0],
        completeness=Fraction(1, 2),
    )
    layout = RegisterLayout.of(("A", 2), ("B", 2), ("O", 2))
    v = np.array([1, 1, 0, math.sqrt(2)], dtype=complex) / 2.0
    prep = unitary_from_first_column(v)

    def first(state, prefix):
        return apply_unitary(state, prep, ["A", "B"], check=False)

    def third(state, prefix):
        if prefix[1] == 1:
            state = apply_unitary(state, HADAMARD, "B", check=False)
        return apply_permutation(state, _xor_perm((2, 2), lambda b: b, 1), ["B", "O"])

    prover = QuantumProver(
        layout,
        {0: ProverRound(first, "A", ("A", "B")), 2: ProverRound(third, "O", ("O",))},
        memory=("B",),
    )
    return spec, prover


# ------------------------------------------------------- hardcoded adversary


def _prover_prefixes(spec: ProtocolSpec) -> Iterator[tuple]:
    for j in spec.prover_rounds:
        yield from itertools.product(*(range(a) for a in spec.alphabets[:j]))


def hardcoding_distribution(spec: ProtocolSpec, prover: Prover) -> dict[tuple, dict[int, float]]:
    """Honest next-message distribution for every partial transcript ending before a prover message."""
    out = {}
    for prefix in _prover_prefixes(spec):
        try:
            out[prefix] = prover.distribution(prefix)
        except ZeroWeight:
            out[prefix] = {REJECT: 1.0}
    return out


class HardcodedProver(ClassicalProver):
    """Deterministic lookup table from partial transcripts to replies."""

    def __init__(self, table: Mapping[tuple, int]):
        self.table = dict(table)
        super().__init__(lambda p: self.table.get(tuple(p), REJECT), name="hardcoded")


def hardcode_classical_adversary(spec: ProtocolSpec, prover: Prover, rng: np.random.Generator) -> HardcodedProver:
    """Fix one honest reply per partial transcript, sampled from the conditional state."""
    dists = hardcoding_distribution(spec, prover)
    return HardcodedProver({prefix: _sample(d, rng) for prefix, d in dists.items()})


def enumerate_hardcodings(spec: ProtocolSpec, prover: Prover, cap: int = 4096) -> Iterator[tuple[float, HardcodedProver]]:
    """Every table with its probability (for exact averages at toy size)."""
    dists = hardcoding_distribution(spec, prover)
    keys = list(dists)
    options = [sorted(dists[k].items()) for k in keys]
    if math.prod(len(o) for o in options) > cap:
        raise ValueError("too many hardcodings to enumerate")
    for combo in itertools.product(*options):
        p = math.prod(q for _, q in combo)
        yield p, HardcodedProver({k: m for k, (m, _) in zip(keys, combo)})


# ------------------------------------------------------- one-way puzzles


class PuzzleSampler:
    """Draw j uniform in [rounds], run honestly to message j; puzzle = m_1..m_{j-1}, key = m_j."""

    def __init__(self, spec: ProtocolSpec, prover: Prover):
        if spec.rounds == 0:
            raise ValueError("puzzles need at least one message")
        self.spec = spec
        self.prover = prover

    def sample(self, rng: np.random.Generator) -> tuple[tuple, int]:
        j = int(rng.integers(1, self.spec.rounds + 1))
        sess = self.prover.session()
        prefix: tuple = ()
        for i in range(j):
            if self.spec.senders[i] == VERIFIER:
                prefix += (_sample(self.spec.verifier_distribution(prefix), rng),)
            else:
                prefix += (sess.respond(prefix, rng),)
        return prefix[:-1], prefix[-1]

    def joint_distribution(self) -> dict[tuple, float]:
        out: dict[tuple, float] = {}
        ell = self.spec.rounds
        for j in range(1, ell + 1):
            for t, p in transcript_distribution(self.spec, self.prover, j).items():
                k = (t[:-1], t[-1])
                out[k] = out.get(k, 0.0) + p / ell
        return out


class HonestKeySampler(Prover):
    """Samples m_j given m_1..m_{j-1} exactly as the honest interaction would, at every position."""

    def __init__(self, spec: ProtocolSpec, prover: Prover):
        self.spec, self.prover = spec, prover

    def distribution(self, prefix):
        if self.spec.senders[len(prefix)] == VERIFIER:
            return self.spec.verifier_distribution(prefix)
        return self.prover.distribution(prefix)


def _as_prover(a) -> Prover:
    return a if isinstance(a, Prover) else ClassicalProver(a, name="adversary")


def distributional_advantage(sampler: PuzzleSampler, adversary) -> float:
    """SD between (puzz, key) and (puzz, A(puzz)), exact by enumeration."""
    adv = _as_prover(adversary)
    joint = sampler.joint_distribution()
    puzz: dict[tuple, float] = {}
    for (pz, _), p in joint.items():
        puzz[pz] = puzz.get(pz, 0.0) + p
    alt: dict[tuple, float] = {}
    for pz, p in puzz.items():
        for k, q in adv.distribution(pz).items():
            alt[(pz, k)] = alt.get((pz, k), 0.0) + p * q
    return statistical_distance(joint, alt, pad=True)


class HybridProver(Prover):
    """Honest on messages with index < ``cut``, the adversary from there on."""

    def __init__(self, honest: Prover, adversary: Prover, cut: int):
        self.honest, self.adversary, self.cut = honest, adversary, cut

    def distribution(self, prefix):
        return (self.honest if len(prefix) < self.cut else self.adversary).distribution(prefix)


def hybrid_ladder(spec: ProtocolSpec, prover: Prover, adversary) -> tuple[list[float], list[float]]:
    """Completeness of hybrids P_0..P_rounds and the per-step SDs SD_1..SD_rounds.

    P_i answers its first i messages honestly and the rest with the adversary,
    so P_rounds is honest and P_0 is the adversary. SD_i compares (prefix, m_i)
    under the honest prefix with honest versus adversarial m_i.
    """
    adv = _as_prover(adversary)
    ell = spec.rounds
    comps = [acceptance_probability(spec, HybridProver(prover, adv, i)) for i in range(ell + 1)]
    sds = []
    for i in range(1, ell + 1):
        if spec.senders[i - 1] == VERIFIER:
            sds.append(0.0)
            continue
        pre = transcript_distribution(spec, prover, i - 1)
        a: dict = {}
        b: dict = {}
        for t, p in pre.items():
            for m, q in prover.distribution(t).items():
                a[t + (m,)] = a.get(t + (m,), 0.0) + p * q
            for m, q in adv.distribution(t).items():
                b[t + (m,)] = b.get(t + (m,), 0.0) + p * q
        sds.append(statistical_distance(a, b, pad=True))
    return comps, sds


def telescoping_holds(comps: Sequence[float], sds: Sequence[float], slack: float = 1e-9) -> bool:
    steps = all(abs(comps[i] - comps[i - 1]) <= sds[i - 1] + slack for i in range(1, len(comps)))
    return steps and comps[-1] - comps[0] <= sum(sds) + slack


# ---------------------------------------------------- reductions and replay


@dataclass(frozen=True)
class Coin:
    n: int


@dataclass(frozen=True)
class Query:
    y: int


@dataclass(frozen=True)
class Reduction:
    """A classical algorithm written as a generator of Coin/Query requests.

    ``fn(first_message)`` returns the generator; its return value is the outcome.
    """

    name: str
    budget: int
    fn: Callable


def explore(make_gen: Callable[[], Iterator], respond, state) -> dict:
    """Exact outcome distribution of a request/response generator.

    ``respond(request, state)`` lists (prob, answer, next_state). Generators
    cannot be copied, so each branch replays the generator from the start.
    """
    out: dict = {}

    def rec(answers, st, p):
        gen = make_gen()
        try:
            req = next(gen)
            for a in answers:
                req = gen.send(a)
        except StopIteration as e:
            out[e.value] = out.get(e.value, 0.0) + p
            return
        for q, a, nxt in respond(req, st):
            if q > 0:
                rec(answers + [a], nxt, p * q)

    rec([], state, 1.0)
    return out


def drive(make_gen: Callable[[], Iterator], respond_sample, state, rng):
    """Sampled run: ``respond_sample(request, state, rng)`` returns (answer, next_state)."""
    gen = make_gen()
    try:
        req = next(gen)
        while True:
            a, state = respond_sample(req, state, rng)
            req = gen.send(a)
    except StopIteration as e:
        return e.value


def best_first_message(spec: ProtocolSpec, prover: Prover) -> tuple[int, list[float]]:
    """Lexicographically smallest first message maximizing acceptance given it."""
    if spec.senders[0] != PROVER:
        raise ScheduleMismatch("the prover must speak first")
    first = prover.distribution(())
    values = []
    for m in range(spec.alphabets[0]):
        if first.get(m, 0.0) <= 1e-15:
            values.append(-1.0)
            continue
        rest = transcript_distribution(spec, _Conditioned(prover, m))
        values.append(sum(p for t, p in rest.items() if spec.accepts(t)))
    best = max(values)
    m_star = next(m for m, v in enumerate(values) if v >= best - TIE_TOL)
    return m_star, values


class _Conditioned(Prover):
    def __init__(self, prover: Prover, m1: int):
        self.prover, self.m1 = prover, m1

    def distribution(self, prefix):
        return {self.m1: 1.0} if not prefix else self.prover.distribution(prefix)


class MetaReduction3:
    """Simulate the best-first-message adversary for a 3-message protocol.

    Third-message queries (m*, y) are answered by the advice oracle with advice
    |psi_{m*}> (the prover's post-selected state on memory plus fresh round-3
    registers) and U_y the prover's round-3 action. The reported answer is the
    output register of the measured oracle value.
    """

    def __init__(self, spec: ProtocolSpec, prover: QuantumProver, *, mode: str = "direct", debug: bool = False):
        if spec.senders != (PROVER, VERIFIER, PROVER):
            raise ScheduleMismatch("the meta-reduction needs a (P, V, P) protocol")
        self.spec, self.prover, self.mode, self.debug = spec, prover, mode, debug
        self.m_star, self.values = best_first_message(spec, prover)
        lay = prover.round_layout(2)
        post = prover.conditional_state((self.m_star,))
        t = np.moveaxis(post.tensor(), prover.layout.axes(lay.names), list(range(len(lay.names))))
        t = t.reshape(lay.dim, -1)
        col = int(np.argmax(np.linalg.norm(t, axis=0)))
        psi = t[:, col]
        if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
            raise ValueError("round-3 registers are entangled with the rest of the prover")
        self.layout = lay
        self.out_axis = lay.index(prover.rounds[2].out)
        us = {y: prover.round_matrix((self.m_star, y)) for y in range(spec.alphabets[1])}
        self.advice = AdviceSpec(psi, us)

    def answer_of(self, z: int) -> int:
        return self.layout.unflatten(z)[self.out_axis]

    def _check_budget(self, red: Reduction, used: int):
        if used > red.budget:
            raise BudgetExceeded(f"reduction {red.name} exceeded its budget of {red.budget} queries")

    def exact(self, red: Reduction) -> dict:
        """Exact outcome distribution with queries answered by the advice oracle."""
        sess = AdvOSession(self.advice, red.budget, mode=self.mode, debug=self.debug)

        def respond(req, st):
            internal, used = st
            if isinstance(req, Coin):
                return [(1.0 / req.n, k, st) for k in range(req.n)]
            self._check_budget(red, used + 1)
            return [(p, self.answer_of(z), (v, used + 1)) for p, z, v in sess.branches(internal, req.y)]

        return explore(lambda: red.fn(self.m_star), respond, (sess.initial, 0))

    def exact_ideal(self, red: Reduction) -> dict:
        """Same reduction against the inefficient adversary: a fixed oracle O ~ D, averaged exactly."""
        d = self.advice.induced_distribution()
        out: dict = {}
        for table, w in d.enumerate():

            def respond(req, used, table=table):
                if isinstance(req, Coin):
                    return [(1.0 / req.n, k, used) for k in range(req.n)]
                self._check_budget(red, used + 1)
                return [(1.0, self.answer_of(table(req.y)), used + 1)]

            for k, p in explore(lambda: red.fn(self.m_star), respond, 0).items():
                out[k] = out.get(k, 0.0) + w * p
        return out

    def run(self, red: Reduction, rng: np.random.Generator):
        sess = AdvOSession(self.advice, red.budget, mode=self.mode, debug=self.debug)

        def respond(req, st, rng):
            internal, used = st
            if isinstance(req, Coin):
                return int(rng.integers(req.n)), st
            self._check_budget(red, used + 1)
            z, v = sess.sample(internal, req.y, rng)
            return self.answer_of(z), (v, used + 1)

        return drive(lambda: red.fn(self.m_star), respond, (sess.initial, 0), rng)


def meta_reduction_3round(spec: ProtocolSpec, prover: QuantumProver, **kw) -> MetaReduction3:
    return MetaReduction3(spec, prover, **kw)


def acceptance_of(outcomes: Mapping) -> float:
    return float(sum(p for k, p in outcomes.items() if k))


def reduction_corpus(spec: ProtocolSpec, max_rewinds: int = 3) -> list[Reduction]:
    """Straight-line, last-message rewinds and repeated-query reductions for a (P, V, P) protocol."""
    ny = spec.alphabets[1]

    def straight(m1):
        y = yield Coin(ny)
        m3 = yield Query(y)
        return int(spec.accepts((m1, y, m3)))

    def rewind(k):
        def fn(m1):
            ok = True
            for _ in range(k):
                y = yield Coin(ny)
                m3 = yield Query(y)
                ok = ok and spec.accepts((m1, y, m3))
            return int(ok)

        return fn

    def repeated(m1):
        y = yield Coin(ny)
        a = yield Query(y)
        b = yield Query(y)
        return int(a == b and spec.accepts((m1, y, a)))

    def silent(m1):
        return 1
        yield  # pragma: no cover

    out = [Reduction("zero-query", 1, silent), Reduction("straight-line", 1, straight)]
    out += [Reduction(f"rewind-x{k}", k, rewind(k)) for k in range(2, max_rewinds + 1)]
    out.append(Reduction("repeated-query", 2, repeated))
    return out


