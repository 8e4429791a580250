"""The e-fold core: CI of the running mean, stopping rule, run loop."""

import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from efold.core import (
    EfoldConfig,
    ci_of_mean,
    energy_fraction,
    result_to_dict,
    run_efold,
    should_stop,
)
from efold.errors import EfoldError
from efold.folding import PartitionPlan


# ---------------------------------------------------------------------------
# ci_of_mean


def test_ci_width_spec_value():
    # [0.2, 0.4, 0.6] at 0.95: width = 2 * t(0.975, 2) * 0.2 / sqrt(3).
    mean, lower, upper, width = ci_of_mean([0.2, 0.4, 0.6], 0.95)
    assert mean == pytest.approx(0.4, abs=1e-15)
    assert width == pytest.approx(0.99365, abs=1e-4)
    assert upper - lower == pytest.approx(width, abs=1e-15)
    assert (lower + upper) / 2 == pytest.approx(mean, abs=1e-12)


def test_ci_identical_scores_zero_width():
    mean, lower, upper, width = ci_of_mean([0.37] * 6, 0.95)
    assert width == 0.0
    assert lower == upper == mean == 0.37


def test_ci_matches_textbook_formula():
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(50):
        n = int(rng.integers(2, 12))
        xs = rng.random(n).tolist()
        mean, lower, upper, width = ci_of_mean(xs, 0.99)
        m = statistics.mean(xs)
        half = sps.t.ppf(0.995, n - 1) * statistics.stdev(xs) / math.sqrt(n)
        assert mean == pytest.approx(m, abs=1e-12)
        assert width == pytest.approx(2 * half, rel=1e-9)
        assert lower == pytest.approx(m - half, rel=1e-9, abs=1e-12)
        assert upper == pytest.approx(m + half, rel=1e-9, abs=1e-12)


def test_ci_needs_two_scores():
    with pytest.raises(EfoldError, match="EFOLD-E005"):
        ci_of_mean([0.5], 0.95)


def test_ci_monte_carlo_coverage_sanity():
    # Smaller cousin of the acceptance check: 95% CI over n=5 normal samples.
    rng = np.random.Generator(np.random.PCG64(11))
    t = sps.t.ppf(0.975, 4)
    hits = 0
    trials = 10_000
    samples = rng.normal(0.0, 1.0, size=(trials, 5))
    means = samples.mean(axis=1)
    halves = t * samples.std(axis=1, ddof=1) / math.sqrt(5)
    hits = int(np.count_nonzero((means - halves <= 0.0) & (0.0 <= means + halves)))
    assert 0.92 <= hits / trials <= 0.98


# ---------------------------------------------------------------------------
# should_stop


def test_should_stop_hand_cases():
    assert should_stop([0.10, 0.05], alpha=0.001) is False
    assert should_stop([0.050, 0.049], alpha=0.001) is True


def test_should_stop_zero_width():
    assert should_stop([0.3, 0.0], alpha=0.001) is True
    assert should_stop([0.0, 0.0], alpha=1e-9) is True


def test_should_stop_uses_last_two_widths():
    assert should_stop([9.9, 0.050, 0.049], alpha=0.001) is True
    assert should_stop([0.050, 0.049, 0.3], alpha=0.001) is False


def test_should_stop_validation():
    with pytest.raises(EfoldError, match="EFOLD-E005"):
        should_stop([0.1], alpha=0.001)
    with pytest.raises(EfoldError, match="EFOLD-E005"):
        should_stop([0.1, 0.2], alpha=0.0)


@settings(max_examples=300, deadline=None)
@given(
    widths=st.lists(st.floats(0.0, 10.0), min_size=2, max_size=6),
    a1=st.floats(1e-6, 10.0),
    a2=st.floats(1e-6, 10.0),
)
def test_should_stop_alpha_monotone(widths, a1, a2):
    lo, hi = sorted((a1, a2))
    if should_stop(widths, lo):
        assert should_stop(widths, hi)


# ---------------------------------------------------------------------------
# run_efold


def scripted(scores):
    return lambda fold: scores[fold]


def test_run_constant_scores_stops_at_first_check():
    res = run_efold(scripted([0.5] * 10), None, EfoldConfig(k_max=10))
    assert res.stop_fold == 3  # max(e_min, 3) with the defaults
    assert res.stopped_early
    assert res.criterion_fired_at == 3
    assert res.final_mean == 0.5
    assert energy_fraction(res) == pytest.approx(0.3)


def test_run_respects_larger_e_min():
    res = run_efold(scripted([0.5] * 10), None, EfoldConfig(e_min=6, k_max=10))
    assert res.stop_fold == 6


def test_run_derived_spec_sequence():
    # Stop fold independently derived by replaying ci_of_mean/should_stop
    # with statistics.stdev + scipy's t quantile (see oracle in test body).
    scores = [0.30, 0.31, 0.30, 0.29, 0.30, 0.31, 0.30, 0.30, 0.29, 0.30]
    res = run_efold(scripted(scores), None, EfoldConfig(k_max=10))
    assert res.stop_fold == 4
    assert res.final_mean == pytest.approx(0.3, abs=1e-15)

    widths = {}
    stop = None
    for n in range(2, 11):
        pre = scores[:n]
        widths[n] = 2 * sps.t.ppf(0.975, n - 1) * statistics.stdev(pre) / math.sqrt(n)
        if n >= 3 and (widths[n] == 0 or abs(widths[n - 1] - widths[n]) <= 0.001 / widths[n]):
            stop = n
            break
    assert res.stop_fold == stop


def test_run_exhausts_k_when_criterion_never_fires():
    # Wildly oscillating scores at a tiny alpha never stabilize.
    scores = [0.1, 0.9, 0.1, 0.9, 0.1]
    res = run_efold(scripted(scores), None, EfoldConfig(alpha=1e-12, k_max=5))
    assert res.stop_fold == 5
    assert not res.stopped_early
    assert res.criterion_fired_at is None
    assert energy_fraction(res) == 1.0


def test_run_huge_alpha_stops_immediately():
    res = run_efold(scripted([0.1, 0.9, 0.2, 0.8]), None, EfoldConfig(alpha=1e12, k_max=4))
    assert res.stop_fold == 3


def test_run_trace_contents():
    scores = [0.2, 0.4, 0.6, 0.8]
    res = run_efold(scripted(scores), None, EfoldConfig(alpha=1e-12, k_max=4))
    assert res.trace.folds == [2, 3, 4]
    for i, n in enumerate(res.trace.folds):
        mean, lower, upper, width = ci_of_mean(scores[:n], 0.95)
        assert res.trace.means[i] == mean
        assert res.trace.lowers[i] == lower
        assert res.trace.uppers[i] == upper
        assert res.trace.widths[i] == width
    assert res.scores == scores


def test_run_custom_fold_order():
    scores = [0.0, 0.25, 0.5, 0.75]
    res = run_efold(scripted(scores), None, EfoldConfig(alpha=1e-12, k_max=4),
                    fold_order=[3, 2, 1, 0])
    assert res.fold_order == (3, 2, 1, 0)
    assert res.scores == [0.75, 0.5, 0.25, 0.0]
    with pytest.raises(EfoldError, match="permutation"):
        run_efold(scripted(scores), None, EfoldConfig(k_max=4), fold_order=[0, 0, 1, 2])


def test_run_plan_k_must_match():
    plan = PartitionPlan(k=3, seed=0, assignment=np.zeros(9, dtype=np.int32))
    with pytest.raises(EfoldError, match="EFOLD-E005"):
        run_efold(scripted([0.5] * 4), plan, EfoldConfig(k_max=4))


def test_run_wraps_scorer_failures_with_fold():
    def boom(fold):
        if fold == 1:
            raise ValueError("nan score")
        return 0.5

    with pytest.raises(EfoldError, match="fold 1"):
        run_efold(boom, None, EfoldConfig(k_max=4))

    def efold_boom(fold):
        raise EfoldError("E008", "no evaluable users")

    with pytest.raises(EfoldError, match="EFOLD-E008.*fold 0"):
        run_efold(efold_boom, None, EfoldConfig(k_max=4))


def test_config_validation():
    with pytest.raises(EfoldError, match="alpha"):
        EfoldConfig(alpha=0.0)
    with pytest.raises(EfoldError, match="confidence"):
        EfoldConfig(confidence_level=1.0)
    with pytest.raises(EfoldError, match="e_min"):
        EfoldConfig(e_min=1)
    with pytest.raises(EfoldError, match="e_min"):
        EfoldConfig(e_min=11, k_max=10)
    with pytest.raises(EfoldError, match="k_max"):
        EfoldConfig(k_max=1)


def test_result_to_dict_schema():
    scores = [0.2, 0.4, 0.6, 0.8]
    config = EfoldConfig(alpha=1e-12, k_max=4)
    res = run_efold(scripted(scores), None, config)
    payload = result_to_dict(res, config, dataset="d", algorithm="a")
    assert payload["algorithm"] == "a" and payload["dataset"] == "d"
    assert payload["k"] == 4 and payload["stop_fold"] == 4
    assert payload["fold_order"] == [0, 1, 2, 3]
    assert payload["scores"] == scores
    assert payload["means"][0] == scores[0]
    assert payload["ci_lower"][0] is None and payload["widths"][0] is None
    assert len(payload["means"]) == len(payload["widths"]) == 4
    assert payload["energy_fraction"] == 1.0
    # Serialize cleanly to JSON.
    import json

    json.dumps(payload)


def test_energy_fraction_paper_value():
    # e = 4.15 mean folds at k = 10 -> 41.5% of the energy.
    assert 4.15 / 10 == pytest.approx(0.415)
