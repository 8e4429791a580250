"""Append-only CSV cache of per-fold scores.

Plain CSV so externally computed scores (e.g. deep models run elsewhere) can
be merged by concatenation. One row per (dataset, algorithm, fold); the
simulator consumes complete k-row groups as ScoreSequence objects.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import EfoldError
from .simulate import ScoreSequence

CACHE_HEADER = ["dataset", "algorithm", "fold_index", "metric", "value", "seed", "k"]


@dataclass(frozen=True)
class CacheRow:
    dataset: str
    algorithm: str
    fold_index: int
    metric: str
    value: float
    seed: int
    k: int

    def key(self) -> tuple:
        # Uniqueness contract: one value per fold of a (dataset, algorithm)
        # run at a given seed and k.
        return (self.dataset, self.algorithm, self.fold_index, self.seed, self.k)


class ScoreCache:
    """CSV-backed score table; loads eagerly, appends serially."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.rows: list[CacheRow] = []
        self._keys: set[tuple] = set()
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                return  # empty file behaves like a fresh cache
            if header != CACHE_HEADER:
                raise EfoldError(
                    "E002",
                    f"{self.path}: bad cache header {header!r}, expected {CACHE_HEADER!r}",
                )
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(CACHE_HEADER):
                    raise EfoldError(
                        "E002", f"{self.path}:{lineno}: expected {len(CACHE_HEADER)} fields, got {len(rec)}"
                    )
                try:
                    row = CacheRow(
                        dataset=rec[0],
                        algorithm=rec[1],
                        fold_index=int(rec[2]),
                        metric=rec[3],
                        value=float(rec[4]),
                        seed=int(rec[5]),
                        k=int(rec[6]),
                    )
                except ValueError as exc:
                    raise EfoldError("E002", f"{self.path}:{lineno}: {exc}") from exc
                self._admit(row, f"{self.path}:{lineno}")

    def _admit(self, row: CacheRow, where: str) -> None:
        if not 0.0 <= row.value <= 1.0:
            raise EfoldError("E005", f"{where}: score {row.value} outside [0, 1]")
        if not 0 <= row.fold_index < row.k:
            raise EfoldError(
                "E005", f"{where}: fold_index {row.fold_index} outside [0, {row.k})"
            )
        if row.key() in self._keys:
            raise EfoldError(
                "E002",
                f"{where}: duplicate cache entry for "
                f"{row.dataset}/{row.algorithm} fold {row.fold_index} (seed {row.seed}, k {row.k})",
            )
        self._keys.add(row.key())
        self.rows.append(row)

    def has(self, dataset: str, algorithm: str, fold_index: int, seed: int, k: int) -> bool:
        return (dataset, algorithm, fold_index, seed, k) in self._keys

    def append(self, rows: Iterable[CacheRow]) -> int:
        """Validate and persist new rows; returns how many were written."""
        rows = list(rows)
        for row in rows:
            self._admit(row, "new row")
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if fresh:
                writer.writerow(CACHE_HEADER)
            for row in rows:
                writer.writerow(
                    [
                        row.dataset,
                        row.algorithm,
                        row.fold_index,
                        row.metric,
                        repr(row.value),
                        row.seed,
                        row.k,
                    ]
                )
        return len(rows)


def sequences_from_cache(
    cache: ScoreCache,
    k: int,
    seed: int,
    metric: Optional[str] = None,
    datasets: Optional[list[str]] = None,
    algorithms: Optional[list[str]] = None,
) -> list[ScoreSequence]:
    """Assemble complete k-fold sequences; incomplete cells are an error.

    Scores come out in canonical fold order (index 0..k-1). Missing folds are
    reported per (dataset, algorithm) cell so partial evaluate runs are easy
    to finish.
    """
    relevant = [r for r in cache.rows if r.seed == seed and r.k == k]
    if metric is None:
        metrics = sorted({r.metric for r in relevant})
        if len(metrics) > 1:
            raise EfoldError(
                "E005", f"cache holds several metrics {metrics}; pass the one to simulate"
            )
        metric = metrics[0] if metrics else None
    relevant = [r for r in relevant if metric is None or r.metric == metric]
    if datasets is not None:
        relevant = [r for r in relevant if r.dataset in set(datasets)]
    if algorithms is not None:
        relevant = [r for r in relevant if r.algorithm in set(algorithms)]
    if not relevant:
        raise EfoldError(
            "E003", f"no cached scores for seed {seed}, k {k}" + (f", metric {metric}" if metric else "")
        )

    cells: dict[tuple[str, str], dict[int, float]] = {}
    for row in relevant:
        cells.setdefault((row.dataset, row.algorithm), {})[row.fold_index] = row.value

    missing_msgs = []
    for (dataset, algorithm), folds in sorted(cells.items()):
        absent = [f for f in range(k) if f not in folds]
        if absent:
            missing_msgs.append(f"{dataset}/{algorithm} missing folds {absent}")
    if missing_msgs:
        raise EfoldError("E006", "incomplete score cache: " + "; ".join(missing_msgs))

    sequences = []
    for (dataset, algorithm), folds in sorted(cells.items()):
        scores = np.array([folds[f] for f in range(k)], dtype=np.float64)
        sequences.append(
            ScoreSequence(dataset=dataset, algorithm=algorithm, k=k, scores=scores, seed=seed)
        )
    return sequences
