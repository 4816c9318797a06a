"""Protocol and primitive transformations at toy scale.

* threshold parallel repetition of a public-coin protocol,
* collapsing the last three messages into one (challenge batch / response batch),
* signature tokens, one-shot signatures and lightning states cut out of an
  honest prover's run,
* weak minischemes and their threshold amplification, and
* a runner for the "produce n verifying copies" games.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .poq import (
    PROVER,
    VERIFIER,
    ProductProver,
    ProtocolSpec,
    Prover,
    QuantumProver,
    _sample,
    acceptance_probability,
    decode,
    encode,
    transcript_distribution,
)
from .qsim import DensityMatrix, StateVector, partial_trace, project_normalize

State = StateVector | DensityMatrix


class ThresholdOutOfRange(ValueError):
    pass


class ParameterViolation(ValueError):
    pass


class GameArityError(ValueError):
    pass


def binomial_tail(k: int, p, m: int):
    """Pr[Binomial(k, p) >= m]; exact when ``p`` is a Fraction."""
    m = max(m, 0)
    return sum(math.comb(k, j) * p**j * (1 - p) ** (k - j) for j in range(m, k + 1))


def poisson_binomial_tail(ps: Sequence[float], m: int) -> float:
    """Pr[sum of independent Bernoulli(p_i) >= m]."""
    dist = np.zeros(len(ps) + 1)
    dist[0] = 1.0
    for p in ps:
        dist[1:] = dist[1:] * (1 - p) + dist[:-1] * p
        dist[0] *= 1 - p
    return float(dist[max(m, 0):].sum())


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(1 << 20)


# -------------------------------------------------------- parallel repetition


def parallel_repeat(spec: ProtocolSpec, k: int, threshold: Fraction | None = None) -> ProtocolSpec:
    """k lockstep copies; accept iff at least ceil(threshold * k) copies accept.

    The threshold defaults to the midpoint (c + s) / 2. Declared completeness is
    the binomial tail of independent honest copies; declared soundness is the
    best product of per-copy classical strategies.
    """
    if not spec.public_coin:
        raise ValueError("parallel repetition needs a public-coin protocol")
    c, s = spec.completeness, spec.soundness
    if c is None or s is None:
        raise ValueError("declared completeness and soundness are required")
    thr = Fraction(threshold) if threshold is not None else (Fraction(c) + Fraction(s)) / 2
    if not Fraction(s) < thr < Fraction(c):
        raise ThresholdOutOfRange(f"threshold {thr} outside ({s}, {c})")
    need = math.ceil(thr * k)
    bases = [(a,) * k for a in spec.alphabets]

    def predicate(t):
        split = [decode(m, b) for m, b in zip(t, bases)]
        ok = sum(spec.accepts(tuple(sp[i] for sp in split)) for i in range(k))
        return ok >= need

    def strategies():
        base = list(spec.classical_strategies()) if spec.classical_strategies else []
        for combo in itertools.product(base, repeat=k):
            yield ProductProver(list(combo), bases)

    c_rep = binomial_tail(k, Fraction(c), need)
    s_rep = product_soundness(spec, k, need) if spec.classical_strategies else None
    return ProtocolSpec(
        name=f"{spec.name}^{k}",
        senders=spec.senders,
        alphabets=tuple(a**k for a in spec.alphabets),
        predicate=predicate,
        completeness=c_rep,
        soundness=_as_fraction(s_rep) if s_rep is not None else None,
        classical_strategies=strategies if spec.classical_strategies else None,
        params={"base": spec, "k": k, "threshold": thr, "need": need, "bases": bases},
    )


def product_soundness(spec: ProtocolSpec, k: int, need: int) -> float:
    """Best acceptance of a product of k strategies from the base classical class."""
    vals = sorted({round(acceptance_probability(spec, s), 15) for s in spec.classical_strategies()})
    return max(poisson_binomial_tail(list(c), need) for c in itertools.combinations_with_replacement(vals, k))


def repeated_prover(rep: ProtocolSpec, prover: Prover) -> ProductProver:
    """Independent honest copies running in lockstep."""
    k = rep.params["k"]
    return ProductProver([prover] * k, rep.params["bases"])


# -------------------------------------------------------------- round collapse


def _check_tail(spec: ProtocolSpec):
    if not spec.public_coin:
        raise ValueError("the construction needs a public-coin protocol")
    if spec.rounds < 4 or spec.rounds % 2 or spec.senders[-4:] != (VERIFIER, PROVER, VERIFIER, PROVER):
        raise ValueError("the construction needs an even number >= 4 of messages ending V, P, V, P")


@dataclass
class CollapseResult:
    spec: ProtocolSpec
    prover: Prover | None
    token: "WeakTokenScheme"


def round_collapse(spec: ProtocolSpec, prover: Prover, p_count: int, multi_responder: Prover | None = None) -> CollapseResult:
    """Replace the last (V r, P m, V r', P m') by (V (r, r'_1..r'_p), P (m, m'_1..m'_p)).

    The verifier accepts iff every continuation (r, m, r'_i, m'_i) accepts. An
    honest prover for the collapsed protocol exists only if a multi-response
    strategy is supplied; the token scheme cut from the same run is always
    returned as the other branch.
    """
    _check_tail(spec)
    if p_count < 1:
        raise ValueError("p_count must be positive")
    head = spec.rounds - 4
    ar, am, ar2, am2 = spec.alphabets[head:]
    vb = (ar,) + (ar2,) * p_count
    pb = (am,) + (am2,) * p_count

    def predicate(t):
        pre = tuple(t[:head])
        r, *rs = decode(t[head], vb)
        m, *ms = decode(t[head + 1], pb)
        return all(spec.accepts(pre + (r, m, ri, mi)) for ri, mi in zip(rs, ms))

    def strategies():
        for s in spec.classical_strategies():
            yield LiftedStrategy(s, head, vb, pb)

    new = ProtocolSpec(
        name=f"{spec.name}-collapsed{p_count}",
        senders=spec.senders[:head] + (VERIFIER, PROVER),
        alphabets=spec.alphabets[:head] + (math.prod(vb), math.prod(pb)),
        predicate=predicate,
        classical_strategies=strategies if spec.classical_strategies else None,
        params={"base": spec, "p_count": p_count, "head": head, "vb": vb, "pb": pb},
    )
    return CollapseResult(new, multi_responder, token_from_poq(spec, prover))


class LiftedStrategy(Prover):
    """A base-protocol prover answering every continuation of the batch separately."""

    def __init__(self, base: Prover, head: int, vb: tuple, pb: tuple):
        self.base, self.head, self.vb, self.pb = base, head, vb, pb

    def distribution(self, prefix):
        if len(prefix) < self.head + 1:
            return self.base.distribution(prefix)
        pre = tuple(prefix[: self.head])
        r, *rs = decode(prefix[self.head], self.vb)
        out = {}
        for m, pm in self.base.distribution(pre + (r,)).items():
            parts = [self.base.distribution(pre + (r, m, ri)) for ri in rs]
            for combo in itertools.product(*(sorted(p.items()) for p in parts)):
                key = encode([m] + [x for x, _ in combo], self.pb)
                out[key] = out.get(key, 0.0) + pm * math.prod(q for _, q in combo)
        return out


def cloning_responder(result: CollapseResult, prover: Prover) -> Prover:
    """Multi-responder backed by ideal clones of the honest post-commitment state.

    Each continuation is answered from its own copy, i.e. independently from the
    honest conditional distribution.
    """
    p = result.spec.params
    return LiftedStrategy(prover, p["head"], p["vb"], p["pb"])


# ------------------------------------------------------ tokens, OSS, lightning


@dataclass
class WeakTokenScheme:
    """Tokens cut from an honest run after message rounds - 2.

    Samp returns the public transcript pp and the prover's state; Sign runs the
    last prover round on challenge r; Ver is the original verifier.
    """

    spec: ProtocolSpec
    prover: QuantumProver

    def __post_init__(self):
        _check_tail(self.spec)
        self.cut = self.spec.rounds - 2

    def samp(self, rng) -> tuple[tuple, StateVector]:
        pp = self._run_to(self.cut, (), rng)
        return pp, self.prover.conditional_state(pp)

    def _run_to(self, j, prefix, rng):
        prefix = tuple(prefix)
        while len(prefix) < j:
            if self.spec.senders[len(prefix)] == VERIFIER:
                prefix += (_sample(self.spec.verifier_distribution(prefix), rng),)
            else:
                prefix += (_sample(self.prover.distribution(prefix), rng),)
        return prefix

    def sign_distribution(self, pp: tuple, state: State, r: int) -> dict[int, float]:
        out = self.prover.rounds[self.cut + 1].out
        st = self._final(pp, state, r)
        p = st.probabilities(out)
        return {int(m): float(p[m]) for m in np.flatnonzero(p > 1e-15)}

    def _final(self, pp, state, r):
        prefix = tuple(pp) + (r,)
        if isinstance(state, StateVector) and state.layout == self.prover.layout:
            return self.prover.rounds[self.cut + 1].action(state, prefix)
        return self.prover.round_on_memory(state, prefix)

    def sign(self, pp, state, r, rng) -> tuple[int, DensityMatrix]:
        """Signature and the post-measurement memory state (for reuse)."""
        out = self.prover.rounds[self.cut + 1].out
        st = self._final(pp, state, r)
        d = st.probabilities(out)
        sig = _sample({int(m): float(d[m]) for m in np.flatnonzero(d > 1e-15)}, rng)
        post, _ = project_normalize(st, out, sig)
        return sig, partial_trace(post, self.prover.memory)

    def ver(self, pp, r, sig) -> bool:
        return self.spec.accepts(tuple(pp) + (r, sig))

    def accept_probability(self, pp, state, r) -> float:
        return sum(p for m, p in self.sign_distribution(pp, state, r).items() if self.ver(pp, r, m))

    def correctness(self) -> float:
        """Exact Pr[Ver accepts] for a fresh token signed on a uniform challenge."""
        total = 0.0
        for pp, w in transcript_distribution(self.spec, self.prover, self.cut).items():
            st = self.prover.conditional_state(pp)
            rs = self.spec.verifier_distribution(pp)
            total += w * sum(q * self.accept_probability(pp, st, r) for r, q in rs.items())
        return total

    def double_sign_probability(self, pp, state, r1, r2) -> float:
        """Exact Pr[both signatures verify] when the post-measurement state is reused."""
        out = self.prover.rounds[self.cut + 1].out
        st = self._final(pp, state, r1)
        total = 0.0
        for sig, p in self.sign_distribution(pp, state, r1).items():
            if not self.ver(pp, r1, sig):
                continue
            post, _ = project_normalize(st, out, sig)
            rho = partial_trace(post, self.prover.memory)
            total += p * self.accept_probability(pp, rho, r2)
        return total

    def garbage_bound(self, pp) -> float:
        """Best acceptance over a uniform challenge of any fixed signature."""
        rs = self.spec.verifier_distribution(pp)
        return max(
            sum(q for r, q in rs.items() if self.ver(pp, r, sig)) for sig in range(self.spec.alphabets[self.cut + 1])
        )


@dataclass
class WeakOSS(WeakTokenScheme):
    """One-shot signatures from the same run: Setup publishes the messages before the commitment."""

    def setup(self, rng) -> tuple:
        return self._run_to(self.cut - 1, (), rng)

    def samp_with(self, pp: tuple, rng) -> tuple[int, StateVector]:
        full = self._run_to(self.cut, pp, rng)
        return full[-1], self.prover.conditional_state(full)

    def ver_oss(self, pp, s, r, sig) -> bool:
        return self.spec.accepts(tuple(pp) + (s, r, sig))


def token_from_poq(spec: ProtocolSpec, prover: QuantumProver, *, oss: bool = False) -> WeakTokenScheme:
    return (WeakOSS if oss else WeakTokenScheme)(spec, prover)


@dataclass
class WeakLightning:
    """Lightning from a 4-message protocol: pp is the first verifier message.

    Samp runs the honest commitment and keeps the prover's memory state as the
    banknote; Ver runs the last two messages of the protocol on that state.
    """

    spec: ProtocolSpec
    prover: QuantumProver

    def __post_init__(self):
        if self.spec.rounds != 4:
            raise ValueError("lightning extraction needs a 4-message protocol")
        _check_tail(self.spec)

    def setup(self, rng) -> int:
        return _sample(self.spec.verifier_distribution(()), rng)

    def samp(self, pp: int, rng) -> tuple[int, DensityMatrix]:
        s = _sample(self.prover.distribution((pp,)), rng)
        return s, self.prover.memory_state((pp, s))

    def _final(self, pp, s, rho, r):
        return self.prover.round_on_memory(rho, (pp, s, r))

    def accept_probability(self, pp, s, rho) -> float:
        out = self.prover.rounds[3].out
        total = 0.0
        for r, q in self.spec.verifier_distribution((pp, s)).items():
            p = self._final(pp, s, rho, r).probabilities(out)
            total += q * sum(float(p[m]) for m in range(len(p)) if self.spec.accepts((pp, s, r, m)))
        return total

    def ver(self, pp, s, rho, rng) -> tuple[bool, DensityMatrix]:
        """Destructive verification: returns the verdict and the memory state left behind."""
        out = self.prover.rounds[3].out
        r = _sample(self.spec.verifier_distribution((pp, s)), rng)
        st = self._final(pp, s, rho, r)
        p = st.probabilities(out)
        m = _sample({int(k): float(p[k]) for k in np.flatnonzero(p > 1e-15)}, rng)
        post, _ = project_normalize(st, out, m)
        return self.spec.accepts((pp, s, r, m)), partial_trace(post, self.prover.memory)

    def correctness(self) -> float:
        total = 0.0
        for (pp, s), w in transcript_distribution(self.spec, self.prover, 2).items():
            total += w * self.accept_probability(pp, s, self.prover.memory_state((pp, s)))
        return total

    def memory_layout(self):
        return self.prover.layout.sub(list(self.prover.memory))


def lightning_from_4round(spec: ProtocolSpec, prover: QuantumProver) -> WeakLightning:
    return WeakLightning(spec, prover)


# --------------------------------------------------------------- minischemes


@dataclass
class WeakMinischeme:
    """Serial s drawn from ``serials``; the state is determined by s via ``prepare``.

    ``accept_operator(s)`` is the POVM element of verification on one copy.
    """

    name: str
    lam: int
    n: int
    c: Fraction
    s: Fraction
    dim: int
    serials: Sequence[Any]
    prepare: Callable[[Any], np.ndarray]
    accept_operator: Callable[[Any], np.ndarray]
    params: dict = field(default_factory=dict)

    def samp(self, rng) -> tuple[Any, np.ndarray]:
        s = self.serials[int(rng.integers(len(self.serials)))]
        return s, self.prepare(s)

    def ver_probability(self, serial, rho) -> float:
        e = self.accept_operator(serial)
        rho = np.asarray(rho, dtype=complex)
        if rho.ndim == 1:
            return float(np.vdot(rho, e @ rho).real)
        return float(np.trace(e @ rho).real)

    def joint_probability(self, serial, copies) -> float:
        """Pr[every copy verifies]; ``copies`` is a list of per-copy states or one joint state."""
        if isinstance(copies, (list, tuple)):
            return math.prod(self.ver_probability(serial, c) for c in copies)
        rho = np.asarray(copies, dtype=complex)
        k = round(math.log(rho.shape[0], self.dim))
        e = np.ones((1, 1), dtype=complex)
        for _ in range(k):
            e = np.kron(e, self.accept_operator(serial))
        if rho.ndim == 1:
            return float(np.vdot(rho, e @ rho).real)
        return float(np.trace(e @ rho).real)

    def correctness(self) -> float:
        return float(np.mean([self.ver_probability(s, self.prepare(s)) for s in self.serials]))


def noisy_bit_scheme(c: float, *, lam: int = 3, n: int = 2, declared_s: Fraction = Fraction(1, 2)) -> WeakMinischeme:
    """Deliberately breakable scheme: |psi_s> = sqrt(c)|s> + sqrt(1-c)|1-s>, verified in the computational basis."""
    c = _as_fraction(c)

    def prepare(s):
        v = np.zeros(2, dtype=complex)
        v[s] = math.sqrt(c)
        v[1 - s] = math.sqrt(1 - c)
        return v

    def accept(s):
        e = np.zeros((2, 2), dtype=complex)
        e[s, s] = 1.0
        return e

    return WeakMinischeme("noisy-bit", lam, n, c, Fraction(declared_s), 2, (0, 1), prepare, accept)


def classical_string_scheme(bits: int, *, lam: int = 2, n: int = 2) -> WeakMinischeme:
    """|psi_s> = |s>: perfectly correct and trivially clonable."""
    dim = 1 << bits

    def prepare(s):
        v = np.zeros(dim, dtype=complex)
        v[s] = 1.0
        return v

    def accept(s):
        return np.outer(prepare(s), prepare(s).conj())

    return WeakMinischeme("classical-string", lam, n, Fraction(1), Fraction(1), dim, tuple(range(dim)), prepare, accept)


def conjugate_bit_scheme(*, lam: int = 2, n: int = 2) -> WeakMinischeme:
    """Serial (basis, bit); |psi> = H^basis |bit>; projective verification."""
    from .qsim import HADAMARD

    def prepare(s):
        b, x = s
        v = np.zeros(2, dtype=complex)
        v[x] = 1.0
        return HADAMARD @ v if b else v

    def accept(s):
        v = prepare(s)
        return np.outer(v, v.conj())

    serials = tuple(itertools.product((0, 1), (0, 1)))
    return WeakMinischeme("conjugate-bit", lam, n, Fraction(1), Fraction(0), 2, serials, prepare, accept)


@dataclass
class AmplifiedMinischeme:
    """ell = lam * t independent copies; accept iff at least ceil((c - 1/(2t)) ell) verify."""

    base: WeakMinischeme
    t: int

    def __post_init__(self):
        b = self.base
        if not (1 - b.s) > b.n * (1 - b.c) + Fraction(1, self.t):
            raise ParameterViolation(f"(1 - s) > n (1 - c) + 1/t fails for s={b.s}, c={b.c}, n={b.n}, t={self.t}")
        self.ell = b.lam * self.t
        self.threshold = Fraction(b.c) - Fraction(1, 2 * self.t)
        self.need = math.ceil(self.threshold * self.ell)
        self.n = b.n
        self.declared_s = 1 - Fraction(1, 2 * b.n * self.t)

    def samp(self, rng) -> tuple[tuple, list]:
        pairs = [self.base.samp(rng) for _ in range(self.ell)]
        return tuple(p[0] for p in pairs), [p[1] for p in pairs]

    def ver_probability(self, serial: tuple, copies: Sequence) -> float:
        """Pr[at least ``need`` of the ell (product) copies verify]."""
        ps = [self.base.ver_probability(s, c) for s, c in zip(serial, copies)]
        return poisson_binomial_tail(ps, self.need)

    def correctness(self):
        """Exact correctness: copies verify independently with probability c."""
        return binomial_tail(self.ell, Fraction(self.base.c), self.need)

    def hoeffding_bound(self) -> float:
        return 1.0 - math.exp(-2.0 * self.ell * (1.0 / (2 * self.t)) ** 2)

    def planted_bound(self) -> float:
        n, t, c = self.n, self.t, float(self.base.c)
        e = 1.0 / (2 * n * t)
        return (1 - e) * (1 - n * (1 + e - c))


def amplify_minischeme(scheme: WeakMinischeme, t: int) -> AmplifiedMinischeme:
    return AmplifiedMinischeme(scheme, t)


def measure_and_clone(scheme: WeakMinischeme):
    """Breaker for the noisy bit scheme: measure each copy, output n fresh states for the guess."""

    def breaker(serials, states, n, rng):
        outs = [[] for _ in range(n)]
        for st in states:
            p = np.abs(np.asarray(st)) ** 2
            g = int(rng.choice(len(p), p=p / p.sum()))
            for j in range(n):
                outs[j].append(scheme.prepare(g))
        return outs

    return breaker


@dataclass
class PlantedReport:
    success: float
    sigma: float
    bound: float
    breaker_success: float
    trials: int

    @property
    def holds(self) -> bool:
        return self.success >= self.bound - 3 * self.sigma


def planted_adversary(amp: AmplifiedMinischeme, breaker, trials: int, rng) -> PlantedReport:
    """Run the reduction that plants a base challenge at a random position i*.

    Each trial: draw the challenge (s, psi), i* uniform in [ell], the other
    ell - 1 copies from Samp, run the breaker on the amplified instance, keep the
    i*-th copy of each of its n outputs and verify them against s.
    """
    n, ell = amp.n, amp.ell
    wins = np.empty(trials)
    broke = np.empty(trials)
    for k in range(trials):
        s, psi = amp.base.samp(rng)
        istar = int(rng.integers(ell))
        serials, states = amp.samp(rng)
        serials = serials[:istar] + (s,) + serials[istar + 1 :]
        states = states[:istar] + [psi] + states[istar + 1 :]
        outs = breaker(serials, states, n, rng)
        p_plant = math.prod(amp.base.ver_probability(s, o[istar]) for o in outs)
        p_break = math.prod(amp.ver_probability(serials, o) for o in outs)
        wins[k] = rng.random() < p_plant
        broke[k] = rng.random() < p_break
    rate = float(wins.mean())
    return PlantedReport(rate, math.sqrt(rate * (1 - rate) / trials), amp.planted_bound(), float(broke.mean()), trials)


# ---------------------------------------------------------------- game runner


def run_unclonability_game(scheme, adversary, n: int, trials: int, rng) -> float:
    """Empirical Pr[all n outputs verify] for any of the scheme kinds."""
    wins = 0
    for _ in range(trials):
        if isinstance(scheme, WeakMinischeme):
            s, psi = scheme.samp(rng)
            out = adversary(s, psi, rng)
            if isinstance(out, (list, tuple)) and len(out) != n:
                raise GameArityError(f"adversary returned {len(out)} copies, game needs {n}")
            p = scheme.joint_probability(s, out)
        elif isinstance(scheme, WeakLightning):
            pp = scheme.setup(rng)
            s, rhos = adversary(pp, rng)
            if len(rhos) != n:
                raise GameArityError(f"adversary returned {len(rhos)} states, game needs {n}")
            p = math.prod(scheme.accept_probability(pp, s, r) for r in rhos)
        elif isinstance(scheme, WeakOSS):
            pp = scheme.setup(rng)
            rs = [_sample(scheme.spec.verifier_distribution(pp + (0,)), rng) for _ in range(n)]
            s, sigs = adversary(pp, rs, rng)
            if len(sigs) != n:
                raise GameArityError(f"adversary returned {len(sigs)} signatures, game needs {n}")
            p = float(all(scheme.ver_oss(pp, s, r, g) for r, g in zip(rs, sigs)))
        elif isinstance(scheme, WeakTokenScheme):
            pp, st = scheme.samp(rng)
            rs = [_sample(scheme.spec.verifier_distribution(pp), rng) for _ in range(n)]
            sigs = adversary(pp, st, rs, rng)
            if len(sigs) != n:
                raise GameArityError(f"adversary returned {len(sigs)} signatures, game needs {n}")
            p = float(all(scheme.ver(pp, r, g) for r, g in zip(rs, sigs)))
        else:
            raise TypeError(f"unknown scheme type {type(scheme).__name__}")
        wins += rng.random() < p
    return wins / trials


def reuse_signer(scheme: WeakTokenScheme):
    """Token adversary that signs every challenge from the state left by the previous signature."""

    def adversary(pp, state, rs, rng):
        sigs = []
        for r in rs:
            sig, state = scheme.sign(pp, state, r, rng)
            sigs.append(sig)
        return sigs

    return adversary
