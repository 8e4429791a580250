"""User-stratified partitioning and train/test fold materialization.

Every user's interactions are spread as evenly as possible over the k
partitions: a seeded shuffle dealt round-robin from a random offset for
users with >= k interactions, and a uniform without-replacement choice of
partitions for sparser users. PCG64 is the generator so plans reproduce
across platforms for a fixed (dataset, k, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import EfoldError


@dataclass
class PartitionPlan:
    k: int
    seed: Optional[int]
    assignment: np.ndarray  # partition index per interaction position

    def partition_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


@dataclass
class DatasetView:
    """A slice of a parent dataset that keeps the parent's dense index space."""

    parent: Dataset
    positions: np.ndarray
    users: np.ndarray = field(init=False)
    items: np.ndarray = field(init=False)

    def __post_init__(self):
        self.users = self.parent.users[self.positions]
        self.items = self.parent.items[self.positions]

    @property
    def catalog(self) -> Dataset:
        return self.parent

    @property
    def n_interactions(self) -> int:
        return len(self.positions)

    def __len__(self) -> int:
        return len(self.positions)

    def to_dataset(self) -> Dataset:
        return self.parent.subset(self.positions)


@dataclass
class FoldSplit:
    fold_index: int
    train: DatasetView
    test: DatasetView


def make_partition_plan(ds: Dataset, k: int = 10, seed: int = 0) -> PartitionPlan:
    """Assign every interaction to one of k partitions, stratified per user."""
    if k < 2:
        raise EfoldError("E005", f"k must be >= 2, got {k}")
    if len(ds) == 0:
        raise EfoldError("E003", "cannot partition an empty dataset")

    rng = np.random.Generator(np.random.PCG64(seed))
    assignment = np.full(len(ds), -1, dtype=np.int32)

    # Group interaction positions by user, file order preserved within a user.
    order = np.argsort(ds.users, kind="stable")
    bounds = np.searchsorted(ds.users[order], np.arange(ds.n_users + 1))
    for u in range(ds.n_users):
        positions = order[bounds[u] : bounds[u + 1]]
        m = len(positions)
        if m == 0:
            continue
        if m >= k:
            perm = rng.permutation(m)
            offset = int(rng.integers(k))
            assignment[positions[perm]] = (offset + np.arange(m)) % k
        else:
            assignment[positions] = rng.choice(k, size=m, replace=False)
    return PartitionPlan(k=k, seed=seed, assignment=assignment)


def materialize_fold(ds: Dataset, plan: PartitionPlan, fold_index: int) -> FoldSplit:
    """Test view = exactly partition ``fold_index``; train view = everything else."""
    if len(plan.assignment) != len(ds):
        raise EfoldError(
            "E005",
            f"plan covers {len(plan.assignment)} interactions, dataset has {len(ds)}",
        )
    if not 0 <= fold_index < plan.k:
        raise EfoldError(
            "E005", f"fold index {fold_index} out of range [0, {plan.k})"
        )
    test_mask = plan.assignment == fold_index
    return FoldSplit(
        fold_index=fold_index,
        train=DatasetView(ds, np.flatnonzero(~test_mask)),
        test=DatasetView(ds, np.flatnonzero(test_mask)),
    )


def save_plan(plan: PartitionPlan, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interaction_index", "partition"])
        for i, p in enumerate(plan.assignment):
            writer.writerow([i, int(p)])


def load_plan(path: str, k: Optional[int] = None) -> PartitionPlan:
    """Read a plan CSV. ``k`` defaults to max(partition) + 1 when not given."""
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise EfoldError("E001", f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["interaction_index", "partition"]:
            raise EfoldError("E002", f"{path}: bad plan header {header}")
        parts: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise EfoldError("E002", f"{path} line {lineno}: expected 2 fields")
            try:
                idx, part = int(row[0]), int(row[1])
            except ValueError as exc:
                raise EfoldError("E002", f"{path} line {lineno}: non-integer field") from exc
            if idx != len(parts):
                raise EfoldError(
                    "E002", f"{path} line {lineno}: rows must be ordered by interaction_index"
                )
            parts.append(part)
    if not parts:
        raise EfoldError("E003", f"{path}: empty plan")
    assignment = np.asarray(parts, dtype=np.int32)
    if k is None:
        k = int(assignment.max()) + 1
    if assignment.min() < 0 or assignment.max() >= k:
        raise EfoldError("E002", f"{path}: partition indices outside [0, {k})")
    return PartitionPlan(k=k, seed=None, assignment=assignment)
