import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qquerylab.poq import (
    acceptance_probability,
    classical_soundness,
    toy_clawfree_poq,
    toy_owf_poq,
    toy_three_message_poq,
)
from qquerylab.qsim import make_rng
from qquerylab.transforms import (
    GameArityError,
    ParameterViolation,
    ThresholdOutOfRange,
    WeakOSS,
    amplify_minischeme,
    binomial_tail,
    classical_string_scheme,
    cloning_responder,
    conjugate_bit_scheme,
    lightning_from_4round,
    measure_and_clone,
    noisy_bit_scheme,
    parallel_repeat,
    planted_adversary,
    poisson_binomial_tail,
    repeated_prover,
    reuse_signer,
    round_collapse,
    run_unclonability_game,
    token_from_poq,
)


def brute_tail(ps, m):
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(ps)):
        if sum(bits) >= m:
            total += math.prod(p if b else 1 - p for p, b in zip(ps, bits))
    return total


@settings(max_examples=60, deadline=None)
@given(
    ps=st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=8),
    m=st.integers(min_value=-1, max_value=9),
)
def test_poisson_binomial_tail_matches_enumeration(ps, m):
    assert poisson_binomial_tail(ps, m) == pytest.approx(brute_tail(ps, m), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(k=st.integers(min_value=1, max_value=8), num=st.integers(min_value=0, max_value=16), m=st.integers(0, 9))
def test_binomial_tail_is_exact_for_fractions(k, num, m):
    p = Fraction(num, 16)
    assert binomial_tail(k, p, m) == pytest.approx(brute_tail([float(p)] * k, m), abs=1e-12)
    assert isinstance(binomial_tail(k, p, m), (Fraction, int))


def test_threshold_must_separate_completeness_and_soundness():
    spec, _ = toy_owf_poq(1)
    with pytest.raises(ThresholdOutOfRange):
        parallel_repeat(spec, 2, Fraction(1, 2))
    with pytest.raises(ThresholdOutOfRange):
        parallel_repeat(spec, 2, Fraction(1))


@pytest.mark.parametrize("k,s_rep", [(2, Fraction(1, 4)), (4, Fraction(5, 16)), (6, Fraction(7, 64))])
def test_repeated_owf_soundness(k, s_rep):
    spec, prover = toy_owf_poq(1)
    rep = parallel_repeat(spec, k)
    assert rep.params["need"] == math.ceil(Fraction(3, 4) * k)
    assert rep.soundness == s_rep
    assert classical_soundness(rep)[0] == pytest.approx(float(s_rep), abs=1e-12)
    assert acceptance_probability(rep, repeated_prover(rep, prover)) == pytest.approx(1.0)


def test_repeated_completeness_is_the_binomial_tail():
    spec, prover = toy_clawfree_poq(2, "uniform")
    rep = parallel_repeat(spec, 2, Fraction(27, 32))
    honest = acceptance_probability(rep, repeated_prover(rep, prover))
    assert honest == pytest.approx(float(binomial_tail(2, Fraction(7, 8), 2)), abs=1e-9)
    assert rep.completeness == Fraction(49, 64)


@pytest.mark.parametrize("p_count", [1, 2, 3])
def test_collapse_with_clones_gives_completeness_power(p_count):
    spec, prover = toy_clawfree_poq(2, "uniform")
    res = round_collapse(spec, prover, p_count)
    got = acceptance_probability(res.spec, cloning_responder(res, prover))
    assert got == pytest.approx((7 / 8) ** p_count, abs=1e-9)
    assert res.spec.rounds == 2


def test_collapsed_classical_soundness_stays_below_base():
    spec, prover = toy_clawfree_poq(2)
    res = round_collapse(spec, prover, 2)
    assert classical_soundness(res.spec)[0] <= float(spec.soundness) + 1e-12


def test_collapse_needs_four_message_tail():
    spec, prover = toy_three_message_poq()
    with pytest.raises(ValueError):
        round_collapse(spec, prover, 1)


@pytest.mark.parametrize("mode,c", [("nonzero", 1.0), ("uniform", 7 / 8)])
def test_token_and_lightning_correctness(mode, c):
    spec, prover = toy_clawfree_poq(2, mode)
    assert token_from_poq(spec, prover).correctness() == pytest.approx(c, abs=1e-9)
    assert lightning_from_4round(spec, prover).correctness() == pytest.approx(c, abs=1e-9)


def test_reused_token_double_sign():
    # after a c=0 signature the claw has collapsed, so c=1 needs d != 0 (3/4) and a fair-coin parity (1/2)
    spec, prover = toy_clawfree_poq(2, "uniform")
    tok = token_from_poq(spec, prover)
    pp, state = (0, 1), prover.conditional_state((0, 1))
    assert tok.double_sign_probability(pp, state, 0, 1) == pytest.approx(3 / 8, abs=1e-9)
    # the other order leaves a Hadamard-basis state; only d = 1 also passes the preimage check at key 1
    assert tok.double_sign_probability(pp, state, 1, 0) == pytest.approx(1 / 4, abs=1e-9)
    assert tok.garbage_bound(pp) == pytest.approx(0.5)


def test_reuse_signer_in_the_token_game():
    spec, prover = toy_clawfree_poq(2, "nonzero")
    tok = token_from_poq(spec, prover)
    rate = run_unclonability_game(tok, reuse_signer(tok), 2, 400, make_rng(3))
    assert rate < 0.9


def test_oss_variant_publishes_the_key_first():
    spec, prover = toy_clawfree_poq(2, "nonzero")
    oss = token_from_poq(spec, prover, oss=True)
    assert isinstance(oss, WeakOSS)
    rng = make_rng(4)
    pp = oss.setup(rng)
    assert len(pp) == 1
    s, state = oss.samp_with(pp, rng)
    sig, _ = oss.sign(pp + (s,), state, 0, rng)
    assert oss.ver_oss(pp, s, 0, sig)


def test_lightning_verification_passes_and_consumes():
    spec, prover = toy_clawfree_poq(2, "nonzero")
    light = lightning_from_4round(spec, prover)
    rng = make_rng(5)
    pp = light.setup(rng)
    s, rho = light.samp(pp, rng)
    assert light.accept_probability(pp, s, rho) == pytest.approx(1.0, abs=1e-9)
    ok, left = light.ver(pp, s, rho, rng)
    assert ok and left.trace() == pytest.approx(1.0)


def test_amplified_parameters():
    amp = amplify_minischeme(noisy_bit_scheme(0.95, lam=3, n=2), 4)
    assert amp.ell == 12
    assert amp.threshold == Fraction(19, 20) - Fraction(1, 8)
    assert amp.need == 10
    assert float(amp.correctness()) == pytest.approx(brute_tail([0.95] * 12, 10), abs=1e-12)
    assert float(amp.correctness()) >= amp.hoeffding_bound()


def test_amplification_precondition():
    with pytest.raises(ParameterViolation):
        amplify_minischeme(noisy_bit_scheme(0.8, lam=3, n=2), 4)


def test_planted_reduction_meets_bound():
    amp = amplify_minischeme(noisy_bit_scheme(0.95, lam=3, n=2), 4)
    rep = planted_adversary(amp, measure_and_clone(amp.base), 2000, make_rng(6))
    # c^(n+1) + (1-c)^(n+1) for a measured-and-recloned bit
    assert rep.success == pytest.approx(0.95**3 + 0.05**3, abs=4 * rep.sigma)
    assert rep.holds


def test_minischeme_correctness():
    assert classical_string_scheme(2).correctness() == pytest.approx(1.0)
    assert conjugate_bit_scheme().correctness() == pytest.approx(1.0)
    assert noisy_bit_scheme(0.9).correctness() == pytest.approx(0.9)


def test_classical_strings_clone_perfectly():
    sch = classical_string_scheme(2)
    rate = run_unclonability_game(sch, lambda s, psi, rng: [psi, psi], 2, 200, make_rng(7))
    assert rate == 1.0


def test_conjugate_bits_resist_measure_and_clone():
    sch = conjugate_bit_scheme()

    def adv(s, psi, rng):
        p = np.abs(psi) ** 2
        g = int(rng.choice(2, p=p / p.sum()))
        v = np.zeros(2, dtype=complex)
        v[g] = 1
        return [v, v]

    rate = run_unclonability_game(sch, adv, 2, 4000, make_rng(8))
    # computational serials always pass; Hadamard serials pass with (1/2)^2
    assert rate == pytest.approx(0.5 * 1 + 0.5 * 0.25, abs=0.03)


def test_game_arity_is_checked():
    sch = classical_string_scheme(1)
    with pytest.raises(GameArityError):
        run_unclonability_game(sch, lambda s, psi, rng: [psi], 2, 1, make_rng(0))
