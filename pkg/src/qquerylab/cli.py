"""Command-line experiment runner.

    qquerylab list
    qquerylab run --experiment NAME [--config FILE] --seed N --out FILE

Each experiment writes a CSV table (one row per instance, sorted) and a
``.meta`` sidecar. Rows carry ``exact_pass`` (checks at 1e-9, or exact
arithmetic) and ``stat_pass`` (Monte Carlo checks at 3 sigma); ``na`` marks a
check that does not apply. The exit status is 1 iff some exact check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import platform
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import __version__

EXACT_TOL = 1e-9


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------- config


class Config:
    """Flat key = value settings with typed, capped getters."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(values or {})
        self.used: dict[str, object] = {}

    @classmethod
    def parse(cls, text: str) -> "Config":
        values = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            values[k] = v
        return cls(values)

    def int(self, key: str, default: int, lo: int, hi: int) -> int:
        try:
            v = int(self.values.get(key, default))
        except ValueError:
            raise UsageError(f"{key} must be an integer") from None
        if not lo <= v <= hi:
            raise UsageError(f"{key}={v} outside the cap {lo}..{hi}")
        self.used[key] = v
        return v

    def float(self, key: str, default: float, lo: float, hi: float) -> float:
        try:
            v = float(self.values.get(key, default))
        except ValueError:
            raise UsageError(f"{key} must be a number") from None
        if not lo <= v <= hi:
            raise UsageError(f"{key}={v} outside the cap {lo}..{hi}")
        self.used[key] = v
        return v

    def choice(self, key: str, default: str, options: tuple[str, ...]) -> str:
        v = self.values.get(key, default)
        if v not in options:
            raise UsageError(f"{key}={v} not one of {', '.join(options)}")
        self.used[key] = v
        return v

    def unknown(self) -> list[str]:
        return sorted(set(self.values) - set(self.used))


# ----------------------------------------------------------------- formatting


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return "na"
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}" if v.denominator != 1 else str(v.numerator)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


@dataclass(frozen=True)
class Experiment:
    name: str
    operation: str
    checks: str
    kind: str  # exact | statistical | mixed
    columns: tuple[str, ...]
    run: Callable[[Config, np.random.Generator], list[dict]]


# ----------------------------------------------------------------- experiments


def _csto_equiv(cfg, rng):
    from .compressed import csto_equivalence
    from .oracles import random_product_distribution, random_query_circuit

    rows = []
    for i in range(cfg.int("instances", 20, 1, 1000)):
        n = int(rng.integers(1, cfg.int("domain_max", 3, 1, 3) + 1))
        m = int(rng.integers(1, cfg.int("alphabet_max", 3, 1, 3) + 1))
        q = int(rng.integers(0, cfg.int("q_max", 3, 0, 3) + 1))
        c = random_query_circuit(n, m, q, rng)
        d = random_product_distribution(n, m, rng)
        pc, pe = csto_equivalence(c, d)
        rows.append(dict(instance=i, domain=n, alphabet=m, queries=q, p_compressed=pc, p_enumerated=pe,
                         gap=abs(pc - pe), exact_pass=abs(pc - pe) <= EXACT_TOL, stat_pass=None))
    return rows


def _advo_equiv(cfg, rng):
    from .advice_oracle import advice_equivalence, random_advice_spec
    from .oracles import random_query_circuit

    reflect = cfg.int("reflection", 0, 0, 1)
    rows = []
    for i in range(cfg.int("instances", 10, 1, 500)):
        n = int(rng.integers(1, cfg.int("domain_max", 2, 1, 3) + 1))
        dim = int(rng.integers(1, cfg.int("dim_max", 4, 1, 4) + 1))
        q = int(rng.integers(0, cfg.int("q_max", 2, 0, 3) + 1))
        spec = random_advice_spec(n, dim, rng)
        c = random_query_circuit(n, dim, q, rng)
        pa, pe = advice_equivalence(c, spec)
        pr = advice_equivalence(c, spec, mode="reflection", debug=True)[0] if reflect else None
        ok = abs(pa - pe) <= EXACT_TOL and (pr is None or abs(pr - pa) <= EXACT_TOL)
        rows.append(dict(instance=i, domain=n, dim=dim, queries=q, p_advice=pa, p_enumerated=pe,
                         p_reflection=pr, gap=abs(pa - pe), exact_pass=ok, stat_pass=None))
    return rows


def _ow2h(cfg, rng):
    from .oracles import random_product_distribution, random_query_circuit
    from .ow2h import verify_ow2h

    same = cfg.int("same", 0, 0, 1)
    trials = cfg.int("trials", 10_000, 10, 10**6)
    rows = []
    for i in range(cfg.int("instances", 10, 1, 1000)):
        n = int(rng.integers(1, cfg.int("domain_max", 3, 1, 3) + 1))
        m = int(rng.integers(1, cfg.int("alphabet_max", 3, 1, 3) + 1))
        q = int(rng.integers(1, cfg.int("q_max", 3, 1, 3) + 1))
        c = random_query_circuit(n, m, q, rng)
        d = random_product_distribution(n, m, rng)
        dp = d if same else random_product_distribution(n, m, rng)
        r = verify_ow2h(c, d, dp, trials=trials, seed=int(rng.integers(1 << 31)))
        rows.append(dict(instance=i, u_queries=r.queries, delta=r.delta, expected_sd=r.expected_sd, bound=r.bound,
                         sigma=r.sigma, exact_pass=None, stat_pass=r.holds))
    return rows


def _ow2h_classical(cfg, rng):
    from .oracles import TruthTable, random_query_circuit
    from .ow2h import verify_ow2h_classical

    trials = cfg.int("trials", 10_000, 10, 10**6)
    rows = []
    for i in range(cfg.int("instances", 10, 1, 1000)):
        n = int(rng.integers(1, cfg.int("domain_max", 3, 1, 3) + 1))
        m = int(rng.integers(2, cfg.int("alphabet_max", 3, 2, 3) + 1))
        q = int(rng.integers(1, cfg.int("q_max", 3, 1, 3) + 1))
        c = random_query_circuit(n, m, q, rng)
        o = TruthTable.from_list([int(v) for v in rng.integers(m, size=n)], m)
        flip = [int(v) for v in o.as_tuple()]
        x = int(rng.integers(n))
        flip[x] = (flip[x] + 1 + int(rng.integers(m - 1))) % m
        r = verify_ow2h_classical(c, o, TruthTable.from_list(flip, m), trials=trials, seed=int(rng.integers(1 << 31)))
        rows.append(dict(instance=i, u_queries=r.queries, delta=r.delta, hit_prob=r.hit_prob, bound=r.bound,
                         sigma=r.sigma, exact_pass=None, stat_pass=r.holds))
    return rows


def _toy_protocols():
    from .poq import toy_clawfree_poq, toy_owf_poq, toy_three_message_poq

    return [toy_owf_poq(1), toy_owf_poq(2), toy_clawfree_poq(1, "uniform"), toy_clawfree_poq(2, "nonzero"),
            toy_three_message_poq()]


def _puzzle_extract(cfg, rng):
    from .poq import (
        HonestKeySampler,
        PuzzleSampler,
        classical_soundness,
        distributional_advantage,
        hardcode_classical_adversary,
        hybrid_ladder,
        telescoping_holds,
    )

    rows = []
    for spec, prover in _toy_protocols():
        advs = [("hardcoded", hardcode_classical_adversary(spec, prover, rng))]
        if spec.classical_strategies is not None:
            advs.append(("best-classical", classical_soundness(spec)[1]))
        for name, adv in advs:
            comps, sds = hybrid_ladder(spec, prover, adv)
            adv_sd = distributional_advantage(PuzzleSampler(spec, prover), HonestKeySampler(spec, adv))
            rows.append(dict(protocol=spec.name, adversary=name, honest=comps[-1], adversarial=comps[0],
                             gap=comps[-1] - comps[0], sum_sd=sum(sds), puzzle_sd=adv_sd,
                             exact_pass=telescoping_holds(comps, sds), stat_pass=None))
    return rows


def _meta3(cfg, rng):
    from .poq import acceptance_of, meta_reduction_3round, reduction_corpus, toy_three_message_poq

    mode = cfg.choice("mode", "direct", ("direct", "reflection"))
    spec, prover = toy_three_message_poq()
    meta = meta_reduction_3round(spec, prover, mode=mode)
    rows = []
    for red in reduction_corpus(spec, cfg.int("max_rewinds", 3, 1, 3)):
        sim = acceptance_of(meta.exact(red))
        hard = acceptance_of(meta.exact_ideal(red))
        rows.append(dict(reduction=red.name, m_star=meta.m_star, simulated=sim, hardcoded=hard,
                         gap=abs(sim - hard), exact_pass=abs(sim - hard) <= EXACT_TOL, stat_pass=None))
    return rows


def _collapse(cfg, rng):
    from .poq import acceptance_probability, classical_soundness, toy_clawfree_poq
    from .transforms import cloning_responder, round_collapse

    rows = []
    for bits in range(1, cfg.int("bits_max", 2, 1, 2) + 1):
        for mode in ("nonzero", "uniform"):
            spec, prover = toy_clawfree_poq(bits, mode)
            base = classical_soundness(spec)[0]
            for p in range(1, cfg.int("p_max", 2, 1, 3) + 1):
                res = round_collapse(spec, prover, p)
                coll = classical_soundness(res.spec)[0]
                clone = acceptance_probability(res.spec, cloning_responder(res, prover))
                expect = float(spec.completeness) ** p
                ok = coll <= base + EXACT_TOL and abs(clone - expect) <= EXACT_TOL
                rows.append(dict(protocol=spec.name, p=p, base_soundness=base, collapsed_soundness=coll,
                                 clone_acceptance=clone, expected_clone=expect, exact_pass=ok, stat_pass=None))
    return rows


def _repeat(cfg, rng):
    from .poq import classical_soundness, estimate_acceptance, toy_owf_poq
    from .transforms import parallel_repeat, repeated_prover

    spec, prover = toy_owf_poq(cfg.int("bits", 1, 1, 2))
    thr = Fraction(cfg.values.get("threshold", "3/4"))
    cfg.used["threshold"] = thr
    trials = cfg.int("trials", 2000, 10, 10**6)
    rows = []
    for k in range(1, cfg.int("k_max", 6, 1, 8) + 1):
        rep = parallel_repeat(spec, k, thr)
        est, se = estimate_acceptance(rep, repeated_prover(rep, prover), trials, rng)
        s_exh = classical_soundness(rep)[0]
        c_closed = float(rep.completeness)
        sigma = max(se, math.sqrt(c_closed * (1 - c_closed) / trials))
        rows.append(dict(k=k, need=rep.params["need"], threshold=thr, c_closed=c_closed, c_estimate=est,
                         sigma=sigma, s_exhaustive=s_exh, s_declared=float(rep.soundness),
                         exact_pass=s_exh < float(thr) and abs(s_exh - float(rep.soundness)) <= EXACT_TOL,
                         stat_pass=abs(est - c_closed) <= 3 * sigma + 1e-12))
    return rows


def _amplify(cfg, rng):
    from .transforms import amplify_minischeme, measure_and_clone, noisy_bit_scheme, planted_adversary

    c = cfg.float("c", 0.95, 0.5, 1.0)
    n = cfg.int("n", 2, 1, 4)
    t = cfg.int("t", 4, 1, 16)
    lam = cfg.int("lam", 3, 1, 8)
    trials = cfg.int("trials", 10_000, 10, 10**6)
    scheme = noisy_bit_scheme(c, lam=lam, n=n)
    amp = amplify_minischeme(scheme, t)
    rep = planted_adversary(amp, measure_and_clone(scheme), trials, rng)
    arith = amp.ell == lam * t and amp.threshold == Fraction(scheme.c) - Fraction(1, 2 * t)
    arith = arith and amp.need == math.ceil(amp.threshold * amp.ell)
    corr = float(amp.correctness())
    return [dict(c=float(scheme.c), n=n, t=t, lam=lam, ell=amp.ell, threshold=amp.threshold, need=amp.need,
                 correctness=corr, hoeffding=amp.hoeffding_bound(), planted_success=rep.success, sigma=rep.sigma,
                 planted_bound=rep.bound, breaker_success=rep.breaker_success,
                 exact_pass=arith and corr >= amp.hoeffding_bound() - EXACT_TOL, stat_pass=rep.holds)]


def _token(cfg, rng):
    from .poq import toy_clawfree_poq
    from .transforms import reuse_signer, run_unclonability_game, token_from_poq

    trials = cfg.int("trials", 500, 10, 10**5)
    rows = []
    for bits in range(1, cfg.int("bits_max", 2, 1, 2) + 1):
        for mode in ("nonzero", "uniform"):
            spec, prover = toy_clawfree_poq(bits, mode)
            tok = token_from_poq(spec, prover)
            corr = tok.correctness()
            pp, st = tok.samp(rng)
            double = tok.double_sign_probability(pp, st, 0, 1)
            reuse = run_unclonability_game(tok, reuse_signer(tok), 2, trials, rng)
            rows.append(dict(protocol=spec.name, correctness=corr, completeness=float(spec.completeness),
                             double_sign=double, reuse_game=reuse,
                             exact_pass=abs(corr - float(spec.completeness)) <= EXACT_TOL, stat_pass=None))
    return rows


def _lightning(cfg, rng):
    from .poq import toy_clawfree_poq
    from .transforms import lightning_from_4round

    rows = []
    for bits in range(1, cfg.int("bits_max", 2, 1, 2) + 1):
        for mode in ("nonzero", "uniform"):
            spec, prover = toy_clawfree_poq(bits, mode)
            lt = lightning_from_4round(spec, prover)
            corr = lt.correctness()
            pp = lt.setup(rng)
            s, rho = lt.samp(pp, rng)
            first = lt.accept_probability(pp, s, rho)
            ok, post = lt.ver(pp, s, rho, rng)
            second = lt.accept_probability(pp, s, post)
            rows.append(dict(protocol=spec.name, correctness=corr, completeness=float(spec.completeness),
                             first_verify=first, second_verify=second, first_outcome=ok,
                             exact_pass=abs(corr - float(spec.completeness)) <= EXACT_TOL, stat_pass=None))
    return rows


def _breaker(cfg, rng):
    from .oracle_world import (
        WorldParams,
        classical_breaker,
        classical_play,
        replay_chain,
        sample_world,
        world_clawfree_protocol,
    )

    params = WorldParams(cfg.int("lam_f", 3, 1, 4), cfg.int("lam_o", 3, 1, 4), cfg.int("lam_h", 3, 1, 4), 4)
    trials = cfg.int("trials", 10_000, 10, 10**6)
    world = sample_world(params, rng)
    proto = world_clawfree_protocol(world)
    rep = classical_breaker(world, proto, trials, rng)
    run = classical_play(world, proto, rng)
    (v1, s1) = run.chain[0]
    c2 = proto.circuit(run.transcript[:3])
    bottoms = 0
    for bit in range(params.lam_h):
        ans = replay_chain(world, [v1[0][0], c2], [v1[0][1], 0], [s1 ^ (1 << bit)], rng)
        bottoms += ans[1] is None
    return [dict(lam_f=params.lam_f, lam_o=params.lam_o, lam_h=params.lam_h, honest=rep.honest,
                 breaker=rep.acceptance, sigma=rep.sigma, gap=rep.gap, corruptions=params.lam_h,
                 corruption_bottoms=bottoms, exact_pass=bottoms == params.lam_h, stat_pass=rep.holds)]


def _find(cfg, rng):
    from .oracle_world import (
        PROGRAMS,
        WorldParams,
        _tracked_queries,
        differs,
        find_procedure,
        sample_world,
        swap_f,
        symbol_length,
    )

    params = WorldParams(cfg.int("lam_f", 3, 1, 4), cfg.int("lam_o", 3, 1, 4), 3, 4)
    trials = cfg.int("trials", 4000, 10, 10**6)
    world = sample_world(params, rng)
    rows = []
    for code in range(min(len(PROGRAMS), 1 << params.lam_o)):
        z = int(rng.integers(world.n))
        y = ("Eval", world.obfuscate(code, int(rng.integers(1 << params.lam_o))), z)
        qs = _tracked_queries(world, y)
        # reprogram f at the last point the program queries (or at z) so that y is a differing query
        target = qs[-1] if qs else z
        other = swap_f(world, target, (target + 1) % world.n)
        wins = sum(differs(world, other, find_procedure(world, y, rng)) for _ in range(trials))
        rate = wins / trials
        bound = 1.0 / (2 * symbol_length(world, y))
        sigma = math.sqrt(max(rate * (1 - rate), 1e-12) / trials)
        rows.append(dict(code=code, f_queries=len(qs), y_differs=differs(world, other, y), success=rate,
                         sigma=sigma, bound=bound, exact_pass=None,
                         stat_pass=(rate >= bound - 3 * sigma) if differs(world, other, y) else None))
    return rows


def _sim4(cfg, rng):
    from .poq import toy_clawfree_poq
    from .sim_reduction import (
        Abort,
        SubsystemReuse,
        honest_outcome_distribution,
        ideal_cloner,
        identity_cloner,
        rewind_last,
        sim_distribution,
        sim_logs,
        straight_line,
    )

    spec, prover = toy_clawfree_poq(1, cfg.choice("d_mode", "uniform", ("uniform", "nonzero")))
    rows = []
    ref = honest_outcome_distribution(spec, prover, straight_line())
    got = sim_distribution(spec, prover, identity_cloner(), straight_line())
    gap = max(abs(ref.get(k, 0.0) - got.get(k, 0.0)) for k in set(ref) | set(got))
    rows.append(dict(cloner="identity", n=1, reduction="straight-line", abort_prob=0.0, expected_abort=0,
                     single_use=True, identity_gap=gap, exact_pass=gap <= EXACT_TOL, stat_pass=None))
    for n in range(1, cfg.int("n_max", 3, 1, 4) + 1):
        for k in range(1, n + 2):
            red = rewind_last(k)
            try:
                logs = sim_logs(spec, prover, ideal_cloner(n), red)
                single = all(len(set(log)) == len(log) for log in logs)
            except SubsystemReuse:
                single = False
            d = sim_distribution(spec, prover, ideal_cloner(n), red)
            ab = sum(p for o, p in d.items() if isinstance(o, Abort))
            expect = 1 if k > n else 0
            rows.append(dict(cloner=f"ideal{n}", n=n, reduction=red.name, abort_prob=ab, expected_abort=expect,
                             single_use=single, identity_gap=None,
                             exact_pass=single and abs(ab - expect) <= EXACT_TOL, stat_pass=None))
    return rows


_COMMON = ("exact_pass", "stat_pass")

EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment("csto-equiv", "compressed.csto_equivalence", "compressed-oracle acceptance equals oracle-averaged acceptance",
                   "exact", ("instance", "domain", "alphabet", "queries", "p_compressed", "p_enumerated", "gap") + _COMMON,
                   _csto_equiv),
        Experiment("advo-equiv", "advice_oracle.advice_equivalence", "advice oracle perfectly simulates the induced distribution",
                   "exact", ("instance", "domain", "dim", "queries", "p_advice", "p_enumerated", "p_reflection", "gap") + _COMMON,
                   _advo_equiv),
        Experiment("ow2h", "ow2h.verify_ow2h", "one-way-to-hiding bound for compression unitaries",
                   "statistical", ("instance", "u_queries", "delta", "expected_sd", "bound", "sigma") + _COMMON, _ow2h),
        Experiment("ow2h-classical", "ow2h.verify_ow2h_classical", "one-way-to-hiding bound for differing truth tables",
                   "statistical", ("instance", "u_queries", "delta", "hit_prob", "bound", "sigma") + _COMMON,
                   _ow2h_classical),
        Experiment("puzzle-extract", "poq.hybrid_ladder", "completeness gap is bounded by the summed per-message distances",
                   "exact", ("protocol", "adversary", "honest", "adversarial", "gap", "sum_sd", "puzzle_sd") + _COMMON,
                   _puzzle_extract),
        Experiment("meta3", "poq.MetaReduction3", "3-message meta-reduction reproduces the hardcoded adversary",
                   "exact", ("reduction", "m_star", "simulated", "hardcoded", "gap") + _COMMON, _meta3),
        Experiment("collapse", "transforms.round_collapse", "collapsing the last rounds keeps classical soundness",
                   "exact", ("protocol", "p", "base_soundness", "collapsed_soundness", "clone_acceptance",
                             "expected_clone") + _COMMON, _collapse),
        Experiment("repeat", "transforms.parallel_repeat", "threshold parallel repetition",
                   "mixed", ("k", "need", "threshold", "c_closed", "c_estimate", "sigma", "s_exhaustive",
                             "s_declared") + _COMMON, _repeat),
        Experiment("amplify", "transforms.amplify_minischeme", "threshold amplification of weak minischemes",
                   "mixed", ("c", "n", "t", "lam", "ell", "threshold", "need", "correctness", "hoeffding",
                             "planted_success", "sigma", "planted_bound", "breaker_success") + _COMMON, _amplify),
        Experiment("token", "transforms.token_from_poq", "signature tokens from a proof of quantumness",
                   "exact", ("protocol", "correctness", "completeness", "double_sign", "reuse_game") + _COMMON, _token),
        Experiment("lightning", "transforms.lightning_from_4round", "lightning states from a 4-message protocol",
                   "exact", ("protocol", "correctness", "completeness", "first_verify", "second_verify",
                             "first_outcome") + _COMMON, _lightning),
        Experiment("breaker", "oracle_world.classical_breaker", "breaking oracles let a classical prover imitate the quantum one",
                   "mixed", ("lam_f", "lam_o", "lam_h", "honest", "breaker", "sigma", "gap", "corruptions",
                             "corruption_bottoms") + _COMMON, _breaker),
        Experiment("find", "oracle_world.find_procedure", "Find returns a differing query often enough",
                   "statistical", ("code", "f_queries", "y_differs", "success", "sigma", "bound") + _COMMON, _find),
        Experiment("sim4", "sim_reduction.Simulator", "clone-database simulator bookkeeping",
                   "exact", ("cloner", "n", "reduction", "abort_prob", "expected_abort", "single_use",
                             "identity_gap") + _COMMON, _sim4),
    ]
}


def list_experiments() -> list[Experiment]:
    return list(EXPERIMENTS.values())


def render_table(exp: Experiment, rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(exp.columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in exp.columns])
    return buf.getvalue()


def render_meta(exp: Experiment, cfg: Config, seed: int, rows: list[dict]) -> str:
    lines = [
        f"experiment={exp.name}",
        f"operation={exp.operation}",
        f"check={exp.kind}",
        f"seed={seed}",
        f"rows={len(rows)}",
        f"exact_failures={sum(r.get('exact_pass') is False for r in rows)}",
        f"stat_failures={sum(r.get('stat_pass') is False for r in rows)}",
        f"qquerylab={__version__}",
        f"numpy={np.__version__}",
        f"python={platform.python_version()}",
    ]
    lines += [f"config.{k}={fmt(cfg.used[k])}" for k in sorted(cfg.used)]
    return "\n".join(lines) + "\n"


def run_experiment(name: str, cfg: Config, seed: int) -> tuple[Experiment, list[dict]]:
    from .qsim import make_rng

    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; try 'qquerylab list'")
    exp = EXPERIMENTS[name]
    rows = exp.run(cfg, make_rng(seed))
    extra = cfg.unknown()
    if extra:
        raise UsageError(f"unknown config keys for {name}: {', '.join(extra)}")
    return exp, rows


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="qquerylab", description="Toy-scale quantum query experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the experiments")
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--experiment", required=True)
    run.add_argument("--config", help="flat key = value file")
    run.add_argument("--seed", required=True, type=int)
    run.add_argument("--out", required=True, help="CSV output path; metadata goes to <out>.meta")
    args = parser.parse_args(argv)

    if args.command == "list":
        for e in list_experiments():
            print(f"{e.name:15s} {e.kind:12s} {e.operation:36s} {e.checks}")
        return 0

    try:
        if not 0 <= args.seed < 1 << 64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        cfg = Config()
        if args.config:
            with open(args.config) as fh:
                cfg = Config.parse(fh.read())
        exp, rows = run_experiment(args.experiment, cfg, args.seed)
    except (UsageError, OSError) as e:
        print(f"qquerylab: {e}", file=sys.stderr)
        return 2
    with open(args.out, "w", newline="") as fh:
        fh.write(render_table(exp, rows))
    with open(args.out + ".meta", "w") as fh:
        fh.write(render_meta(exp, cfg, args.seed, rows))
    exact_fail = sum(r.get("exact_pass") is False for r in rows)
    stat_fail = sum(r.get("stat_pass") is False for r in rows)
    print(f"{exp.name}: {len(rows)} rows, {exact_fail} exact failures, {stat_fail} statistical failures")
    return 1 if exact_fail else 0


if __name__ == "__main__":
    sys.exit(main())
