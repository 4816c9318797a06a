"""One-way-to-hiding experiments for compression unitaries.

A compressed-oracle query is U . CNOT . U, so a circuit with k oracle calls makes
2k calls to the compression unitary U. Hybrids, the extractor and the bound all
count these U-calls: hybrid i answers the first i U-calls with U (built from D)
and the rest with U' (built from D').
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .compressed import U_CALLS_PER_QUERY, CStOBackend
from .oracles import (
    OracleBackend,
    OracleCall,
    OracleCircuit,
    OracleError,
    ProductDistribution,
    TruthTable,
    run_until,
)
from .qsim import EXACT_ATOL, StateVector, make_rng, statistical_distance, trace_distance

# absolute slack for float noise in delta (sqrt of rounding error in an overlap)
NUMERIC_SLACK = EXACT_ATOL

Dists = ProductDistribution | Mapping[str, ProductDistribution]


def _dist(d: Dists, slot: str) -> ProductDistribution:
    return d if isinstance(d, ProductDistribution) else d[slot]


class HybridBackend(CStOBackend):
    """Compressed oracle whose first ``crossover`` U-calls use D and the rest D'."""

    def __init__(self, d: Dists, d_prime: Dists, crossover: int):
        super().__init__(d)
        self.d_prime = d_prime
        self.crossover = crossover

    def _pick(self, slot, u_index):
        return _dist(self.dists, slot) if u_index < self.crossover else _dist(self.d_prime, slot)

    def query(self, state, call: OracleCall, index: int):
        first, second = U_CALLS_PER_QUERY * index, U_CALLS_PER_QUERY * index + 1
        state = self.compress(state, call.slot, call.qreg, self._pick(call.slot, first))
        state = self.copy(state, call.slot, call.qreg, call.rreg)
        return self.compress(state, call.slot, call.qreg, self._pick(call.slot, second))


def u_queries(c: OracleCircuit) -> int:
    return U_CALLS_PER_QUERY * c.num_calls


def final_state_distance(c: OracleCircuit, a: OracleBackend, b: OracleBackend) -> float:
    """Trace distance of the purified final states (oracle registers included)."""
    return trace_distance(run_until(c, a), run_until(c, b))


def hybrid_final_states(c: OracleCircuit, d: Dists, d_prime: Dists) -> list[StateVector]:
    """Final states of hybrids 0..2k; hybrid i answers the first i U-calls with D."""
    return [run_until(c, HybridBackend(d, d_prime, i)) for i in range(u_queries(c) + 1)]


def telescoping_gap(c: OracleCircuit, d: Dists, d_prime: Dists) -> tuple[float, float]:
    """(sum of neighbouring hybrid distances, distance between the end points)."""
    states = hybrid_final_states(c, d, d_prime)
    steps = sum(trace_distance(states[i], states[i - 1]) for i in range(1, len(states)))
    return steps, trace_distance(states[0], states[-1])


def _state_before_u_call(c: OracleCircuit, backend: CStOBackend, t: int) -> tuple[StateVector, OracleCall]:
    j = t // U_CALLS_PER_QUERY
    state = run_until(c, backend, j)
    call = c.calls[j]
    if t % U_CALLS_PER_QUERY == 1:
        state = backend.compress(state, call.slot, call.qreg)
        state = backend.copy(state, call.slot, call.qreg, call.rreg)
    return state, call


def extractor_distribution(c: OracleCircuit, backend: OracleBackend) -> dict[tuple, float]:
    """Exact output distribution of the extractor: {(x, slot): prob}.

    With a compressed-oracle backend the uniform index ranges over U-calls;
    otherwise over oracle calls.
    """
    if c.num_calls == 0:
        raise OracleError("extractor needs a circuit with at least one query")
    per_call = isinstance(backend, CStOBackend)
    n = u_queries(c) if per_call else c.num_calls
    out: dict[tuple, float] = {}
    for t in range(n):
        if per_call:
            state, call = _state_before_u_call(c, backend, t)
        else:
            state, call = run_until(c, backend, t), c.calls[t]
        p = state.probabilities(call.qreg)
        for x in np.flatnonzero(p > 1e-15):
            key = (int(x), call.slot)
            out[key] = out.get(key, 0.0) + float(p[x]) / n
    return out


def extractor_b(c: OracleCircuit, backend: OracleBackend, rng: np.random.Generator) -> tuple[int, str]:
    """Pick a uniform query index t, run to just before it, measure the query register."""
    if c.num_calls == 0:
        raise OracleError("extractor needs a circuit with at least one query")
    if isinstance(backend, CStOBackend):
        t = int(rng.integers(u_queries(c)))
        state, call = _state_before_u_call(c, backend, t)
    else:
        t = int(rng.integers(c.num_calls))
        state, call = run_until(c, backend, t), c.calls[t]
    p = state.probabilities(call.qreg)
    x = int(rng.choice(len(p), p=p / p.sum()))
    return x, call.slot


@dataclass
class OW2HReport:
    delta: float
    expected_sd: float
    bound: float
    trials: int
    seed: int
    holds: bool
    sigma: float = 0.0
    queries: int = 0

    def to_text(self) -> str:
        rows = []
        for k, v in asdict(self).items():
            rows.append(f"{k}={float(v).hex() if isinstance(v, float) else v}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OW2HReport":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        return cls(
            delta=float.fromhex(kv["delta"]),
            expected_sd=float.fromhex(kv["expected_sd"]),
            bound=float.fromhex(kv["bound"]),
            trials=int(kv["trials"]),
            seed=int(kv["seed"]),
            holds=kv["holds"] == "True",
            sigma=float.fromhex(kv["sigma"]),
            queries=int(kv["queries"]),
        )


def _sample_mean(values: dict[tuple, float], dist: dict[tuple, float], trials: int, rng) -> tuple[float, float]:
    keys = sorted(dist)
    w = np.array([dist[k] for k in keys])
    draws = rng.choice(len(keys), size=trials, p=w / w.sum())
    samples = np.array([values[keys[i]] for i in draws])
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0


def verify_ow2h(c: OracleCircuit, d: Dists, d_prime: Dists, trials: int = 10_000, seed: int = 0) -> OW2HReport:
    """Check E[SD(D_x, D'_x)] >= delta^2 / (16 q^2) with q the number of U-calls.

    delta is exact; the extractor is sampled ``trials`` times and scored with the
    exact statistical distance of the extracted row.
    """
    rng = make_rng(seed)
    delta = final_state_distance(c, CStOBackend(d), CStOBackend(d_prime))
    q = u_queries(c)
    if q == 0:
        return OW2HReport(delta, 0.0, 0.0, 0, seed, delta <= 1e-9, 0.0, 0)
    bound = delta**2 / (16 * q * q)
    dist = extractor_distribution(c, CStOBackend(d))
    sd = {
        (x, s): statistical_distance(_dist(d, s)[x], _dist(d_prime, s)[x]) if x in _dist(d, s).domain else 0.0
        for (x, s) in dist
    }
    mean, sigma = _sample_mean(sd, dist, trials, rng)
    return OW2HReport(delta, mean, bound, trials, seed, mean >= bound - 3 * sigma - NUMERIC_SLACK, sigma, q)


@dataclass
class OW2HClassicalReport:
    delta: float
    hit_prob: float
    bound: float
    trials: int
    seed: int
    holds: bool
    sigma: float = 0.0
    queries: int = 0


def verify_ow2h_classical(
    c: OracleCircuit,
    o: TruthTable | Mapping[str, TruthTable],
    o_prime: TruthTable | Mapping[str, TruthTable],
    trials: int = 10_000,
    seed: int = 0,
) -> OW2HClassicalReport:
    """Deterministic-oracle version: score is 1 when the extracted x has O(x) != O'(x)."""

    def pm(t):
        if isinstance(t, TruthTable):
            return ProductDistribution.point_masses(t)
        return {s: ProductDistribution.point_masses(v) for s, v in t.items()}

    def table(t, s):
        return t if isinstance(t, TruthTable) else t[s]

    rng = make_rng(seed)
    d, dp = pm(o), pm(o_prime)
    delta = final_state_distance(c, CStOBackend(d), CStOBackend(dp))
    q = u_queries(c)
    if q == 0:
        return OW2HClassicalReport(delta, 0.0, 0.0, 0, seed, delta <= 1e-9, 0.0, 0)
    bound = delta**2 / (16 * q * q)
    dist = extractor_distribution(c, CStOBackend(d))
    hit = {
        (x, s): float(x in table(o, s).domain and table(o, s)(x) != table(o_prime, s)(x)) for (x, s) in dist
    }
    mean, sigma = _sample_mean(hit, dist, trials, rng)
    return OW2HClassicalReport(delta, mean, bound, trials, seed, mean >= bound - 3 * sigma - NUMERIC_SLACK, sigma, q)


def verify_ow2h_multi(
    c: OracleCircuit, d: Mapping[str, ProductDistribution], d_prime: Mapping[str, ProductDistribution], **kw
) -> OW2HReport:
    """Several oracles at once; the extracted query is tagged with its slot."""
    return verify_ow2h(c, dict(d), dict(d_prime), **kw)
