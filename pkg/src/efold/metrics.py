"""Top-n ranking evaluation with NDCG@n (binary relevance).

Rankings are dense item-index arrays ordered by descending score, ties
broken by ascending index, and never contain the user's training items.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from ._backend import get_kernels
from .errors import EfoldError
from .folding import FoldSplit
from .models import ExternalScoreTable, ItemKnnModel, PopModel

logger = logging.getLogger("efold.metrics")

Scorer = Union[PopModel, ItemKnnModel, ExternalScoreTable, Callable]


@dataclass(frozen=True)
class FoldScore:
    fold_index: int
    metric_name: str
    value: float
    n_evaluated_users: int


def discount_weights(n: int) -> np.ndarray:
    """Rank discounts 1/log2(rank+1) for 1-based ranks 1..n."""
    return np.array([1.0 / math.log2(rank + 1) for rank in range(1, n + 1)])


def ndcg_at_n(ranked: Sequence, relevant: set, n: int = 10) -> float:
    """Normalized DCG over the top n of ``ranked`` against a binary relevant set."""
    if n < 1:
        raise EfoldError("E005", f"cutoff n must be >= 1, got {n}")
    if not relevant:
        raise EfoldError("E005", "relevant set must be non-empty (skip such users)")
    dcg = 0.0
    for rank, item in enumerate(ranked[:n], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(rank + 1)
    idcg = 0.0
    for rank in range(1, min(len(relevant), n) + 1):
        idcg += 1.0 / math.log2(rank + 1)
    return dcg / idcg


def user_item_csr(
    users: np.ndarray, items: np.ndarray, n_users: int
) -> tuple[np.ndarray, np.ndarray]:
    """CSR over dense user ids; item lists sorted ascending within each user."""
    order = np.lexsort((items, users))
    sorted_users = users[order]
    indptr = np.searchsorted(sorted_users, np.arange(n_users + 1)).astype(np.int64)
    return indptr, items[order].astype(np.int64)


def evaluate_fold(
    scorer: Scorer, split: FoldSplit, n: int = 10, backend: str | None = None
) -> FoldScore:
    """Mean NDCG@n over users that appear in both train and test of the split.

    ``scorer`` is a trained PopModel / ItemKnnModel, an ExternalScoreTable,
    or any callable ``(user_index, train_item_indices) -> ranked item
    indices`` (train items pre-excluded by the callable).
    """
    catalog = split.train.catalog
    n_users = catalog.n_users
    n_items = catalog.n_items
    train_indptr, train_items = user_item_csr(split.train.users, split.train.items, n_users)
    test_indptr, test_items = user_item_csr(split.test.users, split.test.items, n_users)

    has_train = np.diff(train_indptr) > 0
    has_test = np.diff(test_indptr) > 0
    eval_users = np.flatnonzero(has_train & has_test).astype(np.int64)
    n_skipped = int(np.count_nonzero(has_test & ~has_train))
    if n_skipped:
        logger.info(
            "fold %d: skipping %d test users with no training history",
            split.fold_index,
            n_skipped,
        )
    if len(eval_users) == 0:
        raise EfoldError("E008", f"fold {split.fold_index}: no evaluable users")

    if isinstance(scorer, (PopModel, ItemKnnModel)):
        kernels = get_kernels(backend)
        discounts = discount_weights(n)
        if isinstance(scorer, PopModel):
            mode = 0
            item_counts = scorer.item_counts.astype(np.float64)
            in_indptr = np.zeros(n_items + 1, dtype=np.int64)
            in_indices = np.zeros(0, dtype=np.int64)
            in_sims = np.zeros(0, dtype=np.float64)
        else:
            mode = 1
            item_counts = np.zeros(0, dtype=np.float64)
            in_indptr = scorer.in_indptr
            in_indices = scorer.in_indices
            in_sims = scorer.in_sims
        per_user = kernels.evaluate_users(
            mode,
            item_counts,
            in_indptr,
            in_indices,
            in_sims,
            train_indptr,
            train_items,
            test_indptr,
            test_items,
            eval_users,
            n_items,
            n,
            discounts,
        )
    else:
        if isinstance(scorer, ExternalScoreTable):
            rank_fn = scorer.ranker(split.fold_index, catalog)
        elif callable(scorer):
            rank_fn = scorer
        else:
            raise EfoldError("E005", f"unsupported scorer type {type(scorer).__name__}")
        per_user = np.empty(len(eval_users))
        for pos, u in enumerate(eval_users):
            tr = train_items[train_indptr[u] : train_indptr[u + 1]]
            te = test_items[test_indptr[u] : test_indptr[u + 1]]
            ranked = np.asarray(rank_fn(int(u), tr))
            _check_ranking(ranked, tr, n, n_items, int(u))
            per_user[pos] = ndcg_at_n(ranked.tolist(), set(te.tolist()), n)

    value = float(np.mean(per_user))
    return FoldScore(split.fold_index, f"ndcg@{n}", value, len(eval_users))


def _check_ranking(
    ranked: np.ndarray, train: np.ndarray, n: int, n_items: int, user: int
) -> None:
    n_candidates = n_items - len(train)
    if len(ranked) < min(n, n_candidates):
        raise EfoldError(
            "E005",
            f"user {user}: ranking has {len(ranked)} items, need {min(n, n_candidates)}",
        )
    if len(np.unique(ranked)) != len(ranked):
        raise EfoldError("E005", f"user {user}: ranking contains duplicate items")
    if len(ranked) and (ranked.min() < 0 or ranked.max() >= n_items):
        raise EfoldError("E005", f"user {user}: ranking contains unknown item indices")
    if np.isin(ranked, train).any():
        raise EfoldError("E005", f"user {user}: ranking contains training items")
