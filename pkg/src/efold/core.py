"""Early-stopped cross-validation: running mean, CI trace, stopping rule.

After each executed fold the mean of the scores so far and its Student-t
confidence interval are updated; folding halts at the first fold n (>= the
configured minimum) where the CI-width sequence satisfies
|c_{n-1} - c_n| <= alpha / c_n. Folds after the stop are never executed,
which is where the energy saving comes from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EfoldError
from .folding import PartitionPlan
from .stats import student_t_two_sided


@dataclass(frozen=True)
class EfoldConfig:
    """Knobs of the stopping rule.

    ``alpha`` trades energy saving (large) against accuracy (small) and lives
    on the scale of the metric at hand; the default suits NDCG-like scores
    in [0, 1] but should be calibrated per dataset (see the CLI alpha sweep).
    """

    alpha: float = 0.001
    confidence_level: float = 0.95
    e_min: int = 3
    k_max: int = 10

    def __post_init__(self):
        if self.alpha <= 0:
            raise EfoldError("E005", f"alpha must be > 0, got {self.alpha}")
        if not 0.0 < self.confidence_level < 1.0:
            raise EfoldError(
                "E005", f"confidence level must lie in (0, 1), got {self.confidence_level}"
            )
        if self.k_max < 2:
            raise EfoldError("E005", f"k_max must be >= 2, got {self.k_max}")
        if not 2 <= self.e_min <= self.k_max:
            raise EfoldError(
                "E005", f"e_min must lie in [2, k_max], got {self.e_min} with k_max {self.k_max}"
            )

    def t_table(self) -> np.ndarray:
        """t_by_n[n] = two-sided critical value for n scores (df = n - 1)."""
        table = np.full(self.k_max + 1, np.nan)
        for n in range(2, self.k_max + 1):
            table[n] = student_t_two_sided(self.confidence_level, n - 1)
        return table


@dataclass
class CITrace:
    """Per-fold CI of the running mean, recorded from the second fold on."""

    folds: list[int] = field(default_factory=list)  # n = 2, 3, ...
    means: list[float] = field(default_factory=list)
    lowers: list[float] = field(default_factory=list)
    uppers: list[float] = field(default_factory=list)
    widths: list[float] = field(default_factory=list)

    def append(self, n: int, mean: float, lower: float, upper: float, width: float):
        self.folds.append(n)
        self.means.append(mean)
        self.lowers.append(lower)
        self.uppers.append(upper)
        self.widths.append(width)


@dataclass
class EfoldResult:
    scores: list[float]  # executed folds, in execution order
    fold_order: tuple[int, ...]  # the full intended order (len k_max)
    stop_fold: int  # e = number of folds actually executed
    final_mean: float
    trace: CITrace
    stopped_early: bool  # e < k_max
    k_max: int
    criterion_fired_at: Optional[int]  # fold where the rule first fired, if it did


def ci_of_mean(
    scores: Sequence[float], confidence_level: float = 0.95
) -> tuple[float, float, float, float]:
    """Mean and two-sided Student-t CI: returns (mean, lower, upper, width).

    Welford accumulation keeps the width exactly zero for identical scores.
    """
    n = len(scores)
    if n < 2:
        raise EfoldError("E005", f"CI undefined for {n} score(s); need at least 2")
    mean = 0.0
    m2 = 0.0
    for i, x in enumerate(scores, start=1):
        x = float(x)
        delta = x - mean
        mean = mean + delta / i
        m2 = m2 + delta * (x - mean)
    var = m2 / (n - 1)
    se = sqrt(var / n)
    half = student_t_two_sided(confidence_level, n - 1) * se
    return mean, mean - half, mean + half, 2.0 * half


def should_stop(widths: Sequence[float], alpha: float) -> bool:
    """Width criterion on the last two CI widths; a zero width always stops."""
    if alpha <= 0:
        raise EfoldError("E005", f"alpha must be > 0, got {alpha}")
    if len(widths) < 2:
        raise EfoldError("E005", "stopping criterion needs at least two CI widths")
    c_n = float(widths[-1])
    if c_n == 0.0:
        return True
    return abs(float(widths[-2]) - c_n) <= alpha / c_n


def run_efold(
    fold_scorer: Callable[[int], object],
    plan: Optional[PartitionPlan],
    config: EfoldConfig,
    fold_order: Optional[Sequence[int]] = None,
) -> EfoldResult:
    """Execute folds in order, stopping as soon as the criterion allows.

    ``fold_scorer(fold_index)`` returns the fold's score (a FoldScore or a
    plain float). ``plan`` is optional for scripted/replayed runs; when given
    its k must match config.k_max.
    """
    k = config.k_max
    if plan is not None and plan.k != k:
        raise EfoldError("E005", f"plan has k={plan.k} but config.k_max={k}")
    if fold_order is None:
        fold_order = tuple(range(k))
    else:
        fold_order = tuple(int(f) for f in fold_order)
        if sorted(fold_order) != list(range(k)):
            raise EfoldError("E005", f"fold order must be a permutation of 0..{k - 1}")

    scores: list[float] = []
    trace = CITrace()
    fired_at: Optional[int] = None
    first_check = max(config.e_min, 3)

    for n, fold in enumerate(fold_order, start=1):
        try:
            result = fold_scorer(fold)
        except EfoldError as exc:
            raise EfoldError(exc.code, f"fold {fold}: {exc.message}") from exc
        except Exception as exc:
            raise EfoldError("E005", f"fold {fold}: scorer failed: {exc}") from exc
        value = float(getattr(result, "value", result))
        scores.append(value)
        if n >= 2:
            mean, lower, upper, width = ci_of_mean(scores, config.confidence_level)
            trace.append(n, mean, lower, upper, width)
            if n >= first_check and should_stop(trace.widths, config.alpha):
                fired_at = n
                break

    e = len(scores)
    final_mean = trace.means[-1] if trace.means else scores[0]
    return EfoldResult(
        scores=scores,
        fold_order=fold_order,
        stop_fold=e,
        final_mean=final_mean,
        trace=trace,
        stopped_early=e < k,
        k_max=k,
        criterion_fired_at=fired_at,
    )


def energy_fraction(result: EfoldResult) -> float:
    """Share of full k-CV compute actually spent: executed folds over k."""
    return result.stop_fold / result.k_max


def result_to_dict(
    result: EfoldResult,
    config: EfoldConfig,
    dataset: Optional[str] = None,
    algorithm: Optional[str] = None,
) -> dict:
    """JSON-ready view of a run; CI arrays carry null at fold 1."""
    e = result.stop_fold
    means = [result.scores[0]] + result.trace.means
    return {
        "algorithm": algorithm,
        "dataset": dataset,
        "k": result.k_max,
        "alpha": config.alpha,
        "confidence_level": config.confidence_level,
        "e_min": config.e_min,
        "fold_order": list(result.fold_order),
        "scores": list(result.scores),
        "means": means[:e],
        "ci_lower": [None] + result.trace.lowers,
        "ci_upper": [None] + result.trace.uppers,
        "widths": [None] + result.trace.widths,
        "stop_fold": e,
        "stopped_early": result.stopped_early,
        "criterion_fired_at": result.criterion_fired_at,
        "energy_fraction": energy_fraction(result),
    }
