import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgossip import experiments
from qgossip.experiments import (
    AUDIT_CHECKS,
    ExperimentConfig,
    InitSpecError,
    TrialStats,
    audit_qa_trajectory,
    loglog_slope,
    parse_init,
    qa_level_descent,
    qa_worst_init,
    qc_worst_init,
    run_ensemble,
    sweep,
    transition_frequencies,
    uniform_init,
)
from qgossip.lyapunov import decompose_sum
from qgossip.protocol_qa import UnsupportedTopologyError

from oracles import qa_exact_time, qc_exact_time


def within_3se(stats, exact):
    return stats.failures == 0 and abs(stats.mean - float(exact)) < 3 * stats.se


# initial states


def test_worst_case_inits():
    assert qc_worst_init(4) == (1, 1, 0, 0)
    assert qc_worst_init(5) == (1, 1, 0, 0, 0)
    assert qc_worst_init(2) == (1, 0)
    assert qa_worst_init(4) == (2, 1, 1, 0)
    assert qa_worst_init(2) == (2, 0)
    x = qa_worst_init(6)
    assert x == (2, 1, 1, 1, 1, 0) and decompose_sum(sum(x), 6) == (1, 0)


def test_uniform_init_is_inclusive_and_seeded():
    draws = [v for s in range(200) for v in uniform_init(10, -5, 5, s)]
    assert min(draws) == -5 and max(draws) == 5
    assert uniform_init(10, -5, 5, 3) == uniform_init(10, -5, 5, 3)
    with pytest.raises(InitSpecError):
        uniform_init(3, 2, 1, 0)


def test_parse_init_forms():
    assert parse_init("2,1,0") == (2, 1, 0)
    assert parse_init("2 1 0") == (2, 1, 0)
    assert parse_init("-3,4") == (-3, 4)
    assert parse_init("x1:4:3") == (1, 1, 1, 0)
    assert parse_init("halfsplit:6") == qc_worst_init(6)
    assert parse_init("qaworst:5") == qa_worst_init(5)
    assert parse_init("uniform:4:-5:5:7") == uniform_init(4, -5, 5, 7)


@pytest.mark.parametrize("spec, n", [("", None), ("1,a", None), ("x1:4", None), ("x1:4:4", None), ("1,0", 3), ("foo:3", None)])
def test_parse_init_errors(spec, n):
    with pytest.raises(InitSpecError):
        parse_init(spec, n)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("qx", "complete:3", "1,0,0")
    with pytest.raises(ValueError):
        ExperimentConfig("qc", "complete:3", "1,0,0", trials=0)
    with pytest.raises(UnsupportedTopologyError):
        ExperimentConfig("qa", "ring:3", "1,0,0").resolve()


# statistics


@given(st.lists(st.one_of(st.none(), st.integers(0, 10**6)), min_size=1, max_size=60), st.integers(0, 60))
@settings(max_examples=200, deadline=None)
def test_stats_merge_is_exact_and_matches_numpy(values, cut):
    whole, left, right = TrialStats(), TrialStats(), TrialStats()
    for k, v in enumerate(values):
        whole.add(v)
        (left if k < cut else right).add(v)
    merged = left.merge(right)
    assert merged == whole
    assert right.merge(left) == whole
    ok = [v for v in values if v is not None]
    assert whole.failures == len(values) - len(ok)
    if len(ok) >= 2:
        assert whole.mean == pytest.approx(np.mean(ok), rel=1e-12)
        assert whole.variance == pytest.approx(np.var(ok, ddof=1), rel=1e-9, abs=1e-9)
    if not ok:
        assert math.isnan(whole.mean)


def test_two_node_qc_is_always_one_step():
    stats = run_ensemble(ExperimentConfig("qc", "complete:2", "1,0", trials=300, seed=4))
    assert (stats.mean, stats.variance, stats.min, stats.max) == (1.0, 0.0, 1, 1)


def test_ensemble_is_reproducible_and_worker_independent():
    config = ExperimentConfig("qa", "complete:5", "qaworst:5", trials=200, seed=12)
    one = run_ensemble(config)
    assert run_ensemble(config) == one
    assert run_ensemble(config, workers=3) == one


def test_split_halves_merge_to_the_full_run():
    config = ExperimentConfig("qc", "complete:5", "halfsplit:5", trials=300, seed=2)
    full = run_ensemble(config)
    halves = experiments._trial_block(config, 0, 137).merge(experiments._trial_block(config, 137, 300))
    assert halves == full and halves.mean == full.mean


def test_max_steps_counts_failures():
    # the worst start needs a generation and a consumption, so one step never suffices
    stats = run_ensemble(ExperimentConfig("qa", "complete:6", "qaworst:6", trials=50, seed=0, max_steps=1))
    assert stats.failures == 50 and math.isnan(stats.mean)


# simulation against brute-force enumeration


@pytest.mark.parametrize(
    "alg, x0, exact",
    [
        ("qc", (1, 1, 0, 0), qc_exact_time((1, 1, 0, 0))),
        ("qc", (2, 0, 1), qc_exact_time((2, 0, 1))),
        ("qa", (3, 0, 0), qa_exact_time((3, 0, 0))),
        ("qa", (2, 0), 4),
    ],
)
def test_ensemble_mean_matches_enumeration(alg, x0, exact):
    stats = run_ensemble(ExperimentConfig(alg, f"complete:{len(x0)}", ",".join(map(str, x0)), trials=4000, seed=5))
    assert within_3se(stats, exact), (stats.mean, stats.se, float(exact))


def test_step_policy_is_slower_but_converges():
    adopt = run_ensemble(ExperimentConfig("qc", "complete:4", "6,0,0,0", trials=500, seed=1))
    step = run_ensemble(ExperimentConfig("qc", "complete:4", "6,0,0,0", trials=500, seed=1, policy="step"))
    assert step.failures == 0 and step.mean > adopt.mean


# sweeps


def test_sweep_rows_and_bounds():
    rows = sweep("qc", [3, 4], trials=200, seed=0)
    assert [r.n for r in rows] == [3, 4]
    assert [r.bound for r in rows] == [6.0, 12.0]
    qa_rows = sweep("qa", [4], trials=100, seed=0)
    assert qa_rows[0].bound == 144.0
    with pytest.raises(ValueError):
        sweep("qc", [4, 3], trials=10)


def test_loglog_slope_recovers_power():
    ns = [4, 8, 16, 32]
    assert loglog_slope(ns, [3 * n**2 for n in ns]) == pytest.approx(2.0)


def test_transition_frequencies():
    freq = transition_frequencies(4, 2, 20_000, seed=3)
    p = Fraction(4, 12)
    for key in ("up", "down"):
        assert abs(freq[key] - p) < 4 * math.sqrt(p * (1 - p) / 20_000)
    assert freq["up"] + freq["down"] + freq["stay"] == pytest.approx(1.0)


# audits


def test_audit_clean_on_random_trajectories():
    rng = np.random.Generator(np.random.Philox(21))
    for t in range(40):
        n = int(rng.integers(2, 9))
        x0 = tuple(int(v) for v in rng.integers(-5, 5, size=n, endpoint=True))
        audit = audit_qa_trajectory(x0, t, tail=20)
        assert audit.steps is not None
        assert audit.total_violations == 0, audit.violations
        assert set(audit.violations) <= set(AUDIT_CHECKS)


def test_audit_counts_decrements():
    audit = audit_qa_trajectory((2, 1, 1, 0), 3)
    assert audit.v_initial == 2 and audit.decrements == 1


def test_tracker_mode_in_ensembles():
    stats = run_ensemble(ExperimentConfig("qa", "complete:4", "uniform:4:-5:5:1", trials=50, seed=0, tracker=True))
    plain = run_ensemble(ExperimentConfig("qa", "complete:4", "uniform:4:-5:5:1", trials=50, seed=0))
    assert stats.violations == 0 and stats.total == plain.total


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_level_descent_from_worst_start(n):
    assert qa_level_descent(n, seed=n) == (2, 1, 0)
