"""Baseline recommenders and the bridge for externally trained ones.

Popularity and item-based kNN (plain cosine over binary interaction
vectors) are trained natively. Anything heavier enters through an
external score table: per-fold, per-user ranked lists computed elsewhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .data import Dataset
from .errors import EfoldError
from .folding import DatasetView, PartitionPlan

EXTERNAL_HEADER = ["algorithm", "fold_index", "user_id", "rank", "item_id", "score"]


@dataclass
class PopModel:
    """Ranks items by global interaction count."""

    item_counts: np.ndarray

    @property
    def n_items(self) -> int:
        return len(self.item_counts)

    def rank(self, train_items: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        scores = self.item_counts.astype(np.float64)
        scores[np.asarray(train_items, dtype=np.int64)] = -np.inf
        order = np.argsort(-scores, kind="stable")
        order = order[scores[order] != -np.inf]
        return order if n is None else order[:n]


@dataclass
class ItemKnnModel:
    """Item-kNN with cosine similarity over binary item vectors.

    ``nbr_*`` is the per-item top-s neighbor CSR (descending similarity,
    ascending index among ties). ``in_*`` is its transpose: row j lists the
    items that keep j among their neighbors, in ascending item order; this
    is the layout the scoring scatter iterates.
    """

    n_items: int
    s: int
    nbr_indptr: np.ndarray
    nbr_indices: np.ndarray
    nbr_sims: np.ndarray
    in_indptr: np.ndarray
    in_indices: np.ndarray
    in_sims: np.ndarray

    def neighbors(self, item: int) -> tuple[np.ndarray, np.ndarray]:
        row = slice(self.nbr_indptr[item], self.nbr_indptr[item + 1])
        return self.nbr_indices[row], self.nbr_sims[row]

    def scores_for(self, train_items: np.ndarray) -> np.ndarray:
        """Similarity-sum score of every item given a user's train items."""
        scores = np.zeros(self.n_items)
        for j in np.sort(np.asarray(train_items, dtype=np.int64)):
            row = slice(self.in_indptr[j], self.in_indptr[j + 1])
            scores[self.in_indices[row]] += self.in_sims[row]
        return scores

    def rank(self, train_items: np.ndarray, n: Optional[int] = None) -> np.ndarray:
        scores = self.scores_for(train_items)
        scores[np.asarray(train_items, dtype=np.int64)] = -np.inf
        order = np.argsort(-scores, kind="stable")
        order = order[scores[order] != -np.inf]
        return order if n is None else order[:n]


def pop_train(train: DatasetView | Dataset) -> PopModel:
    if len(train) == 0:
        raise EfoldError("E003", "cannot train on an empty split")
    counts = np.bincount(train.items, minlength=train.catalog.n_items)
    return PopModel(item_counts=counts.astype(np.int64))


def itemknn_train(train: DatasetView | Dataset, s: int = 100) -> ItemKnnModel:
    """Cosine similarity sim(i,j) = |U_i & U_j| / sqrt(|U_i| |U_j|), top-s per item."""
    if len(train) == 0:
        raise EfoldError("E003", "cannot train on an empty split")
    if not train.catalog.implicit:
        raise EfoldError("E005", "item-kNN expects an implicit (deduplicated) dataset")
    if s < 1:
        raise EfoldError("E005", f"neighborhood size must be >= 1, got {s}")
    n_users = train.catalog.n_users
    n_items = train.catalog.n_items

    matrix = sp.csr_matrix(
        (np.ones(len(train)), (train.users, train.items)),
        shape=(n_users, n_items),
    )
    cooc = (matrix.T @ matrix).tocoo()
    counts = np.bincount(train.items, minlength=n_items).astype(np.float64)

    row, col, co = cooc.row, cooc.col, cooc.data
    off_diag = row != col
    row, col, co = row[off_diag], col[off_diag], co[off_diag]
    sims = co / np.sqrt(counts[row] * counts[col])

    # Per row: order by similarity descending, item index ascending, keep top s.
    order = np.lexsort((col, -sims, row))
    row, col, sims = row[order], col[order], sims[order]
    starts = np.searchsorted(row, np.arange(n_items + 1))
    keep = np.zeros(len(row), dtype=bool)
    for i in range(n_items):
        a, b = starts[i], starts[i + 1]
        keep[a : min(b, a + s)] = True
    row, col, sims = row[keep], col[keep], sims[keep]

    nbr_indptr = np.searchsorted(row, np.arange(n_items + 1)).astype(np.int64)
    nbr_indices = col.astype(np.int64)
    nbr_sims = sims.astype(np.float64)

    # Transpose for scoring: group kept entries by neighbor item j.
    t_order = np.lexsort((row, col))
    t_row, t_col, t_sims = col[t_order], row[t_order], sims[t_order]
    in_indptr = np.searchsorted(t_row, np.arange(n_items + 1)).astype(np.int64)

    return ItemKnnModel(
        n_items=n_items,
        s=s,
        nbr_indptr=nbr_indptr,
        nbr_indices=nbr_indices,
        nbr_sims=nbr_sims,
        in_indptr=in_indptr,
        in_indices=t_col.astype(np.int64),
        in_sims=t_sims.astype(np.float64),
    )


def itemknn_score(model: ItemKnnModel, user_train_items: np.ndarray) -> np.ndarray:
    """Full ranking for one user: similarity-sum scores, train items excluded."""
    return model.rank(user_train_items)


@dataclass
class ExternalScoreTable:
    """Per-(fold, user) ranked lists loaded from a score file."""

    algorithm: str
    entries: dict  # (fold_index, user_id) -> list[(item_id, score)]
    folds: set
    min_list_len: int

    def metric_ready(self, n: int) -> bool:
        return self.min_list_len >= n

    def ranking(self, fold_index: int, user_id: str) -> list:
        key = (fold_index, user_id)
        if key not in self.entries:
            raise EfoldError(
                "E007",
                f"{self.algorithm}: no external scores for fold {fold_index}, user {user_id!r}",
            )
        return self.entries[key]

    def ranker(self, fold_index: int, catalog: Dataset) -> Callable:
        """Adapter for evaluate_fold: maps stored ids to dense indices."""
        if fold_index not in self.folds:
            raise EfoldError(
                "E007", f"{self.algorithm}: external scores missing fold {fold_index}"
            )

        def rank_fn(user_index: int, train_items: np.ndarray) -> np.ndarray:
            user_id = catalog.user_ids[user_index]
            listed = self.ranking(fold_index, user_id)
            indices = []
            for item_id, _score in listed:
                idx = catalog.item_index.get(item_id)
                if idx is None:
                    raise EfoldError(
                        "E007",
                        f"{self.algorithm}: unknown item {item_id!r} for fold "
                        f"{fold_index}, user {user_id!r}",
                    )
                indices.append(idx)
            return np.asarray(indices, dtype=np.int64)

        return rank_fn


def load_external_scores(
    path: str,
    expected_algorithm: Optional[str] = None,
    k: Optional[int] = None,
    dataset: Optional[Dataset] = None,
    plan: Optional[PartitionPlan] = None,
) -> ExternalScoreTable:
    """Parse and validate an external score CSV.

    Format: header ``algorithm,fold_index,user_id,rank,item_id,score``; rows
    grouped per (fold, user) with 1-based contiguous ranks and non-increasing
    scores. When ``dataset`` and ``plan`` are given, every listed item is
    checked against the user's training items for that fold (no leakage).
    """
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise EfoldError("E001", f"cannot open {path}: {exc}") from exc

    entries: dict = {}
    algorithm = expected_algorithm
    current_key = None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EXTERNAL_HEADER:
            raise EfoldError(
                "E007", f"{path}: expected header {','.join(EXTERNAL_HEADER)}, got {header}"
            )
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != 6:
                raise EfoldError("E007", f"{path} line {lineno}: expected 6 fields")
            algo, fold_s, user_id, rank_s, item_id, score_s = fields
            if algorithm is None:
                algorithm = algo
            elif algo != algorithm:
                raise EfoldError(
                    "E007", f"{path} line {lineno}: algorithm {algo!r}, expected {algorithm!r}"
                )
            try:
                fold = int(fold_s)
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as exc:
                raise EfoldError("E007", f"{path} line {lineno}: malformed numeric field") from exc
            if k is not None and not 0 <= fold < k:
                raise EfoldError(
                    "E007", f"{path} line {lineno}: fold {fold} outside [0, {k})"
                )
            key = (fold, user_id)
            if key != current_key:
                if key in entries:
                    raise EfoldError(
                        "E007",
                        f"{path} line {lineno}: rows for fold {fold}, user {user_id!r} not grouped",
                    )
                entries[key] = []
                current_key = key
            group = entries[key]
            if rank != len(group) + 1:
                raise EfoldError(
                    "E007",
                    f"{path} line {lineno}: rank {rank}, expected {len(group) + 1}",
                )
            if group and score > group[-1][1]:
                raise EfoldError(
                    "E007", f"{path} line {lineno}: scores must be non-increasing"
                )
            group.append((item_id, score))

    if not entries:
        raise EfoldError("E007", f"{path}: no score rows")
    table = ExternalScoreTable(
        algorithm=algorithm,
        entries=entries,
        folds={fold for fold, _ in entries},
        min_list_len=min(len(v) for v in entries.values()),
    )
    if dataset is not None and plan is not None:
        _check_leakage(table, dataset, plan, path)
    return table


def _check_leakage(
    table: ExternalScoreTable, dataset: Dataset, plan: PartitionPlan, path: str
) -> None:
    pair_fold: dict = {}
    for pos in range(len(dataset)):
        pair_fold[(int(dataset.users[pos]), int(dataset.items[pos]))] = int(
            plan.assignment[pos]
        )
    offenders = []
    for (fold, user_id), listed in table.entries.items():
        u = dataset.user_index.get(user_id)
        if u is None:
            continue  # unknown users surface at evaluation time
        for item_id, _score in listed:
            i = dataset.item_index.get(item_id)
            if i is None:
                continue
            assigned = pair_fold.get((u, i))
            if assigned is not None and assigned != fold:
                offenders.append((fold, user_id, item_id))
    if offenders:
        shown = ", ".join(f"(fold {f}, user {u!r}, item {i!r})" for f, u, i in offenders[:5])
        more = f" and {len(offenders) - 5} more" if len(offenders) > 5 else ""
        raise EfoldError(
            "E007", f"{path}: ranked lists contain training items: {shown}{more}"
        )
