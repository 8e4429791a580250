"""Permutation simulation: replay cached fold scores under shuffled fold orders.

Once the k per-fold scores of a (dataset, algorithm) pair are cached, early
stopping can be simulated for any fold order without retraining a model. The
report compares the early-stopped mean against the full k-fold mean via the
percentage difference d(x, y) = |x - y| / ((x + y) / 2) * 100, tracks stopping
points and energy fractions, and checks whether algorithm rankings survive.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._backend import get_kernels
from .core import CITrace, EfoldConfig, EfoldResult, should_stop
from .errors import EfoldError


@dataclass
class ScoreSequence:
    """The k fold scores of one (dataset, algorithm) pair, canonical order."""

    dataset: str
    algorithm: str
    k: int
    scores: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1 or len(self.scores) != self.k:
            raise EfoldError(
                "E005",
                f"score sequence for {self.dataset}/{self.algorithm} has "
                f"{self.scores.size} value(s), expected k={self.k}",
            )
        if np.any(self.scores < 0.0) or np.any(self.scores > 1.0):
            raise EfoldError(
                "E005",
                f"score sequence for {self.dataset}/{self.algorithm} has values "
                "outside [0, 1]",
            )


@dataclass
class PermutationSet:
    k: int
    n_perms: int
    seed: int
    perms: np.ndarray  # (n_perms, k) int64


def sample_permutations(k: int, n_perms: int = 5000, seed: int = 0) -> PermutationSet:
    """Distinct uniformly sampled fold orders (rejection of duplicates)."""
    if k < 1:
        raise EfoldError("E005", f"k must be >= 1, got {k}")
    if n_perms < 1:
        raise EfoldError("E005", f"n_perms must be >= 1, got {n_perms}")
    if n_perms > math.factorial(k):
        raise EfoldError(
            "E005", f"cannot draw {n_perms} distinct permutations of {k} folds (k! = {math.factorial(k)})"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    seen: set[tuple[int, ...]] = set()
    rows = []
    while len(rows) < n_perms:
        perm = rng.permutation(k)
        key = tuple(int(v) for v in perm)
        if key in seen:
            continue
        seen.add(key)
        rows.append(perm)
    return PermutationSet(k=k, n_perms=n_perms, seed=seed, perms=np.array(rows, dtype=np.int64))


def percentage_diff(x: float, y: float) -> float:
    """d(x, y) = |x - y| / ((x + y) / 2) * 100; d(0, 0) = 0 by convention."""
    x = float(x)
    y = float(y)
    if x < 0.0 or y < 0.0:
        raise EfoldError("E005", f"percentage difference needs non-negative inputs, got {x}, {y}")
    if x == 0.0 and y == 0.0:
        return 0.0
    # |x - y| / ((x + y) / 2) * 100, written against the sum so the average
    # cannot underflow to zero for subnormal inputs.
    return abs(x - y) / (x + y) * 200.0


def _criterion_fired_at(
    stop: int, k: int, widths_row: np.ndarray, config: EfoldConfig
) -> Optional[int]:
    """Fold where the rule fired; None when the run exhausted k without firing."""
    if stop < k:
        return stop
    if k >= max(config.e_min, 3) and should_stop(
        [float(widths_row[k - 2]), float(widths_row[k - 1])], config.alpha
    ):
        return k
    return None


def simulate_one(
    seq: ScoreSequence,
    perm: Sequence[int],
    config: EfoldConfig,
    backend: Optional[str] = None,
) -> EfoldResult:
    """Replay one fold order; exact twin of run_efold on a scripted scorer."""
    perm = np.asarray(perm, dtype=np.int64)
    if len(perm) != seq.k or sorted(int(p) for p in perm) != list(range(seq.k)):
        raise EfoldError("E005", f"perm must be a permutation of 0..{seq.k - 1}")
    if config.k_max != seq.k:
        raise EfoldError("E005", f"config.k_max={config.k_max} does not match sequence k={seq.k}")
    kern = get_kernels(backend)
    stop_folds, means, widths = kern.replay_batch(
        seq.scores, perm.reshape(1, -1), config.t_table(), config.alpha, config.e_min
    )
    e = int(stop_folds[0])
    trace = CITrace()
    for n in range(2, e + 1):
        mean = float(means[0, n - 1])
        width = float(widths[0, n - 1])
        half = width / 2.0
        trace.append(n, mean, mean - half, mean + half, width)
    executed = [float(seq.scores[perm[i]]) for i in range(e)]
    return EfoldResult(
        scores=executed,
        fold_order=tuple(int(p) for p in perm),
        stop_fold=e,
        final_mean=float(means[0, e - 1]),
        trace=trace,
        stopped_early=e < seq.k,
        k_max=seq.k,
        criterion_fired_at=_criterion_fired_at(e, seq.k, widths[0], config),
    )


@dataclass(frozen=True)
class SimRow:
    """One permutation of one (dataset, algorithm) cell — a raw CSV row."""

    dataset: str
    algorithm: str
    perm_index: int
    stop_fold: int
    efold_mean: float
    kcv_mean: float
    percent_diff: float
    energy_fraction: float


@dataclass(frozen=True)
class CellSummary:
    dataset: str
    algorithm: str
    n_perms: int
    kcv_mean: float
    mean_efold_mean: float
    mean_percent_diff: float
    std_percent_diff: float
    mean_stop_fold: float
    std_stop_fold: float
    min_stop_fold: int
    max_stop_fold: int
    mean_energy_fraction: float

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "algorithm": self.algorithm,
            "n_perms": self.n_perms,
            "kcv_mean": self.kcv_mean,
            "mean_efold_mean": self.mean_efold_mean,
            "mean_percent_diff": self.mean_percent_diff,
            "std_percent_diff": self.std_percent_diff,
            "mean_stop_fold": self.mean_stop_fold,
            "std_stop_fold": self.std_stop_fold,
            "min_stop_fold": self.min_stop_fold,
            "max_stop_fold": self.max_stop_fold,
            "mean_energy_fraction": self.mean_energy_fraction,
        }


@dataclass
class SimulationReport:
    k: int
    alpha: float
    confidence_level: float
    e_min: int
    n_perms: int
    perm_seed: int
    cells: list[CellSummary]
    rows: list[SimRow]
    overall_mean_percent_diff: float
    overall_mean_stop_fold: float
    overall_mean_energy_fraction: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "confidence_level": self.confidence_level,
            "e_min": self.e_min,
            "n_perms": self.n_perms,
            "perm_seed": self.perm_seed,
            "overall": {
                "mean_percent_diff": self.overall_mean_percent_diff,
                "mean_stop_fold": self.overall_mean_stop_fold,
                "mean_energy_fraction": self.overall_mean_energy_fraction,
            },
            "cells": [c.to_dict() for c in self.cells],
        }


def _std(values: np.ndarray) -> float:
    """Sample standard deviation; 0.0 for a single observation."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def simulate_all(
    seqs: Sequence[ScoreSequence],
    perms: PermutationSet,
    config: EfoldConfig,
    backend: Optional[str] = None,
) -> SimulationReport:
    """Replay every sequence under every permutation and aggregate.

    The full k-CV mean is computed once from the canonical order, so it is
    identical under every permutation by construction. Per-cell and overall
    mean energy fractions are defined as mean(stop_fold) / k exactly.
    """
    if not seqs:
        raise EfoldError("E003", "no score sequences to simulate")
    for seq in seqs:
        if seq.k != perms.k:
            raise EfoldError(
                "E005",
                f"sequence {seq.dataset}/{seq.algorithm} has k={seq.k}, "
                f"permutations have k={perms.k}",
            )
    if config.k_max != perms.k:
        raise EfoldError("E005", f"config.k_max={config.k_max} does not match permutation k={perms.k}")

    kern = get_kernels(backend)
    t_by_n = config.t_table()
    ordered = sorted(seqs, key=lambda s: (s.dataset, s.algorithm))
    seen_cells = set()
    for seq in ordered:
        cell = (seq.dataset, seq.algorithm)
        if cell in seen_cells:
            raise EfoldError("E005", f"duplicate score sequence for {cell[0]}/{cell[1]}")
        seen_cells.add(cell)

    rows: list[SimRow] = []
    cells: list[CellSummary] = []
    all_pd: list[np.ndarray] = []
    all_stop: list[np.ndarray] = []
    for seq in ordered:
        stop_folds, means, _ = kern.replay_batch(
            seq.scores, perms.perms, t_by_n, config.alpha, config.e_min
        )
        efold_means = means[np.arange(perms.n_perms), stop_folds - 1]
        kcv_mean = float(np.mean(seq.scores))
        pdiffs = np.array([percentage_diff(m, kcv_mean) for m in efold_means])
        for p in range(perms.n_perms):
            stop = int(stop_folds[p])
            rows.append(
                SimRow(
                    dataset=seq.dataset,
                    algorithm=seq.algorithm,
                    perm_index=p,
                    stop_fold=stop,
                    efold_mean=float(efold_means[p]),
                    kcv_mean=kcv_mean,
                    percent_diff=float(pdiffs[p]),
                    energy_fraction=stop / perms.k,
                )
            )
        stop_f8 = stop_folds.astype(np.float64)
        mean_stop = float(np.mean(stop_f8))
        cells.append(
            CellSummary(
                dataset=seq.dataset,
                algorithm=seq.algorithm,
                n_perms=perms.n_perms,
                kcv_mean=kcv_mean,
                mean_efold_mean=float(np.mean(efold_means)),
                mean_percent_diff=float(np.mean(pdiffs)),
                std_percent_diff=_std(pdiffs),
                mean_stop_fold=mean_stop,
                std_stop_fold=_std(stop_f8),
                min_stop_fold=int(stop_folds.min()),
                max_stop_fold=int(stop_folds.max()),
                mean_energy_fraction=mean_stop / perms.k,
            )
        )
        all_pd.append(pdiffs)
        all_stop.append(stop_f8)

    overall_pd = float(np.mean(np.concatenate(all_pd)))
    overall_stop = float(np.mean(np.concatenate(all_stop)))
    return SimulationReport(
        k=perms.k,
        alpha=config.alpha,
        confidence_level=config.confidence_level,
        e_min=config.e_min,
        n_perms=perms.n_perms,
        perm_seed=perms.seed,
        cells=cells,
        rows=rows,
        overall_mean_percent_diff=overall_pd,
        overall_mean_stop_fold=overall_stop,
        overall_mean_energy_fraction=overall_stop / perms.k,
    )


def rank_algorithms(means: dict[str, float]) -> dict[str, int]:
    """Rank 1 = highest mean; exact ties broken by ascending algorithm name."""
    if not means:
        raise EfoldError("E005", "cannot rank an empty set of algorithms")
    order = sorted(means, key=lambda a: (-means[a], a))
    return {algo: rank for rank, algo in enumerate(order, start=1)}


def kendall_tau(x: dict[str, float], y: dict[str, float]) -> float:
    """Kendall tau-a between two rankings keyed by algorithm (lower = better).

    Tied pairs contribute zero; a single algorithm yields 1.0 (vacuous
    agreement).
    """
    if set(x) != set(y):
        raise EfoldError("E005", "rankings cover different algorithm sets")
    algos = sorted(x)
    m = len(algos)
    if m < 2:
        return 1.0
    total = 0
    for i in range(m):
        for j in range(i + 1, m):
            dx = x[algos[i]] - x[algos[j]]
            dy = y[algos[i]] - y[algos[j]]
            if dx * dy > 0:
                total += 1
            elif dx * dy < 0:
                total -= 1
    return total / (m * (m - 1) / 2)


@dataclass
class DatasetRanking:
    dataset: str
    algorithms: list[str]  # sorted
    kcv_means: dict[str, float]
    kcv_ranks: dict[str, int]
    ecv_mean_ranks: dict[str, float]  # mean over permutations of per-perm ranks
    ecv_rank_of_mean: dict[str, int]  # rank of the mean e-fold score (Fig 4 alt)
    exact_order_fraction: float
    kendall_tau: float

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "algorithms": self.algorithms,
            "kcv_means": self.kcv_means,
            "kcv_ranks": self.kcv_ranks,
            "ecv_mean_ranks": self.ecv_mean_ranks,
            "ecv_rank_of_mean": self.ecv_rank_of_mean,
            "exact_order_fraction": self.exact_order_fraction,
            "kendall_tau": self.kendall_tau,
        }


@dataclass
class RankingReport:
    per_dataset: list[DatasetRanking]

    def to_dict(self) -> dict:
        return {"per_dataset": [d.to_dict() for d in self.per_dataset]}


def build_ranking(report: SimulationReport) -> RankingReport:
    """Ranking consistency of e-fold CV against full k-CV, per dataset.

    e-CV rankings are computed per permutation and averaged per algorithm;
    the rank of the mean e-fold score is emitted alongside because the two
    aggregations can disagree when permutations swap close algorithms.
    """
    by_dataset: dict[str, dict[str, dict[int, float]]] = {}
    kcv: dict[str, dict[str, float]] = {}
    for row in report.rows:
        by_dataset.setdefault(row.dataset, {}).setdefault(row.algorithm, {})[
            row.perm_index
        ] = row.efold_mean
        kcv.setdefault(row.dataset, {})[row.algorithm] = row.kcv_mean

    per_dataset = []
    for dataset in sorted(by_dataset):
        algos = sorted(by_dataset[dataset])
        kcv_means = {a: kcv[dataset][a] for a in algos}
        kcv_ranks = rank_algorithms(kcv_means)
        rank_sums = {a: 0.0 for a in algos}
        exact = 0
        for p in range(report.n_perms):
            perm_ranks = rank_algorithms({a: by_dataset[dataset][a][p] for a in algos})
            for a in algos:
                rank_sums[a] += perm_ranks[a]
            if perm_ranks == kcv_ranks:
                exact += 1
        mean_ranks = {a: rank_sums[a] / report.n_perms for a in algos}
        mean_efold = {
            a: float(np.mean([by_dataset[dataset][a][p] for p in range(report.n_perms)]))
            for a in algos
        }
        per_dataset.append(
            DatasetRanking(
                dataset=dataset,
                algorithms=algos,
                kcv_means=kcv_means,
                kcv_ranks=kcv_ranks,
                ecv_mean_ranks=mean_ranks,
                ecv_rank_of_mean=rank_algorithms(mean_efold),
                exact_order_fraction=exact / report.n_perms,
                kendall_tau=kendall_tau(
                    {a: float(r) for a, r in kcv_ranks.items()}, mean_ranks
                ),
            )
        )
    return RankingReport(per_dataset=per_dataset)


RAW_HEADER = [
    "dataset",
    "algorithm",
    "perm_index",
    "stop_fold",
    "efold_mean",
    "kcv_mean",
    "percent_diff",
    "energy_fraction",
]


def write_raw_csv(report: SimulationReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_HEADER)
        for row in report.rows:
            writer.writerow(
                [
                    row.dataset,
                    row.algorithm,
                    row.perm_index,
                    row.stop_fold,
                    repr(row.efold_mean),
                    repr(row.kcv_mean),
                    repr(row.percent_diff),
                    repr(row.energy_fraction),
                ]
            )


def _write_matrix(
    path: Path, datasets: list[str], algorithms: list[str], value
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset"] + algorithms)
        for ds in datasets:
            writer.writerow([ds] + [value(ds, a) for a in algorithms])


def write_matrices(report: SimulationReport, ranking: RankingReport, out_dir: Path) -> None:
    """Per-figure CSV matrices: percent diff, stop points, mean ranks."""
    cells = {(c.dataset, c.algorithm): c for c in report.cells}
    datasets = sorted({c.dataset for c in report.cells})
    algorithms = sorted({c.algorithm for c in report.cells})

    def cell_value(attr):
        def get(ds, algo):
            c = cells.get((ds, algo))
            return repr(getattr(c, attr)) if c is not None else ""

        return get

    _write_matrix(
        out_dir / "percent_diff_matrix.csv", datasets, algorithms, cell_value("mean_percent_diff")
    )
    _write_matrix(
        out_dir / "stop_fold_matrix.csv", datasets, algorithms, cell_value("mean_stop_fold")
    )
    ranks = {d.dataset: d.ecv_mean_ranks for d in ranking.per_dataset}

    def rank_value(ds, algo):
        value = ranks.get(ds, {}).get(algo)
        return repr(value) if value is not None else ""

    _write_matrix(out_dir / "mean_rank_matrix.csv", datasets, algorithms, rank_value)
