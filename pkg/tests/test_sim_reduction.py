import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qquerylab.poq import Coin, acceptance_probability, toy_clawfree_poq
from qquerylab.qsim import DensityMatrix, RegisterLayout, make_rng
from qquerylab.sim_reduction import (
    Abort,
    CloneDatabase,
    Cloner,
    ClonerArityError,
    CloningProver,
    DatabaseExhausted,
    First,
    Second,
    SimReduction,
    Simulator,
    SubsystemReuse,
    UnknownKey,
    classical_copier,
    depolarized_cloner,
    honest_outcome_distribution,
    ideal_cloner,
    identity_cloner,
    is_exchangeable,
    repeated_first,
    rewind_last,
    run_sim,
    sim_corpus,
    sim_distribution,
    sim_logs,
    straight_line,
    unknown_key,
)


@pytest.fixture(scope="module")
def toy():
    return toy_clawfree_poq(1, "uniform")


def aborted(dist):
    return sum(p for o, p in dist.items() if isinstance(o, Abort))


def test_identity_cloner_reproduces_the_honest_run(toy):
    spec, prover = toy
    sim = sim_distribution(spec, prover, identity_cloner(), straight_line())
    ref = honest_outcome_distribution(spec, prover, straight_line())
    assert set(sim) == set(ref)
    assert max(abs(sim[k] - ref[k]) for k in ref) <= 1e-9


def test_cloning_prover_with_identity_is_honest(toy):
    spec, prover = toy
    assert acceptance_probability(spec, CloningProver(spec, prover, identity_cloner())) == pytest.approx(0.75)


def test_classical_copier_breaks_the_claw(toy):
    # the c=0 answer survives the measurement, the c=1 answer drops to 1/4
    spec, prover = toy
    got = acceptance_probability(spec, CloningProver(spec, prover, classical_copier(2)))
    assert got == pytest.approx(0.625, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_abort_only_after_n_rewinds(toy, n):
    spec, prover = toy
    cl = ideal_cloner(n)
    for k in range(1, n + 2):
        dist = sim_distribution(spec, prover, cl, rewind_last(k))
        assert aborted(dist) == pytest.approx(1.0 if k > n else 0.0)
        if k > n:
            assert Abort("DatabaseExhausted") in dist


def test_unknown_key_aborts(toy):
    spec, prover = toy
    assert sim_distribution(spec, prover, ideal_cloner(2), unknown_key()) == {Abort("UnknownKey"): 1.0}


def test_every_part_is_used_once(toy):
    spec, prover = toy
    for red in sim_corpus(3):
        for log in sim_logs(spec, prover, ideal_cloner(3), red):
            assert len(log) == len(set(log))


def test_database_rejects_reuse():
    rho = DensityMatrix.maximally_mixed(RegisterLayout.of(("S1.B", 2)))
    db = CloneDatabase().store("k", rho, 2)
    db2 = db.consume("k", 0, rho)
    assert db.entries["k"].used == (False, False)
    assert db2.next_unused("k") == 1
    with pytest.raises(SubsystemReuse):
        db2.consume("k", 0, rho)
    with pytest.raises(DatabaseExhausted):
        db2.consume("k", 1, None).next_unused("k")
    with pytest.raises(UnknownKey):
        db.next_unused("other")


def test_ideal_clones_answer_independently(toy):
    spec, prover = toy
    dist = sim_distribution(spec, prover, ideal_cloner(2), rewind_last(2))
    expect = {}
    for r, m, r2a, r2b in itertools.product(range(spec.alphabets[0]), range(spec.alphabets[1]), range(2), range(2)):
        pm = prover.distribution((r,)).get(m, 0.0) / spec.alphabets[0]
        if pm == 0:
            continue
        da, db = prover.distribution((r, m, r2a)), prover.distribution((r, m, r2b))
        for (a, pa), (b, pb) in itertools.product(da.items(), db.items()):
            key = (r, m, ((r2a, a), (r2b, b)))
            expect[key] = expect.get(key, 0.0) + pm * 0.25 * pa * pb
    assert set(dist) == {k for k, v in expect.items() if v > 1e-15}
    assert max(abs(dist[k] - expect[k]) for k in dist) <= 1e-9


def test_fixed_challenge_answers_are_exchangeable(toy):
    spec, prover = toy
    for cl in (ideal_cloner(3), depolarized_cloner(3, 0.7)):
        dist = sim_distribution(spec, prover, cl, rewind_last(3, fixed_challenge=1))
        assert is_exchangeable(dist, lambda o: tuple(m2 for _, m2 in o[2]))


def test_repeated_first_message_reuses_the_key(toy):
    spec, prover = toy
    dist = sim_distribution(spec, prover, ideal_cloner(2), repeated_first(2))
    assert aborted(dist) == pytest.approx(0.0)
    assert sum(dist.values()) == pytest.approx(1.0)


def test_cloner_arity_is_checked(toy):
    spec, prover = toy
    bad = Cloner("wrong", 2, lambda rho: rho.matrix)
    with pytest.raises(ClonerArityError):
        Simulator(spec, prover, bad).stored_state(0, 0)
    with pytest.raises(ClonerArityError):
        Simulator(spec, prover, ideal_cloner(5))


def test_simulator_needs_four_messages():
    from qquerylab.poq import toy_owf_poq

    spec, prover = toy_owf_poq(1)
    with pytest.raises(ValueError):
        Simulator(spec, prover, identity_cloner())


def test_sampled_runs_follow_the_exact_distribution(toy):
    spec, prover = toy
    exact = sim_distribution(spec, prover, ideal_cloner(2), rewind_last(2))
    rng = make_rng(0)
    n = 3000
    counts = Counter(run_sim(spec, prover, ideal_cloner(2), rewind_last(2), rng)[0] for _ in range(n))
    for k, p in exact.items():
        assert abs(counts[k] / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-9


def test_sampled_run_reports_the_final_database(toy):
    spec, prover = toy
    out, db = run_sim(spec, prover, ideal_cloner(2), rewind_last(2), make_rng(1))
    assert not isinstance(out, Abort)
    assert len(db.log) == 2 and len(set(db.log)) == 2


def test_coin_only_reduction_needs_no_prover(toy):
    spec, prover = toy

    def fn(spec):
        a = yield Coin(4)
        return a

    dist = sim_distribution(spec, prover, identity_cloner(), SimReduction("coin", fn))
    assert dist == pytest.approx({0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25})


@settings(max_examples=20, deadline=None)
@given(eta=st.floats(min_value=0, max_value=1), n=st.integers(1, 3))
def test_stored_state_is_a_symmetric_state(toy, eta, n):
    spec, prover = toy
    sim = Simulator(spec, prover, depolarized_cloner(n, eta))
    rho = sim.stored_state(0, 0)
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12


@settings(max_examples=15, deadline=None)
@given(eta=st.floats(min_value=0, max_value=1), k=st.integers(1, 3))
def test_outcome_distributions_are_normalized(toy, eta, k):
    spec, prover = toy
    dist = sim_distribution(spec, prover, depolarized_cloner(2, eta), rewind_last(k))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
    assert aborted(dist) == pytest.approx(1.0 if k > 2 else 0.0)
