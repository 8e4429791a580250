"""Pure-numpy kernels: the fallback path when numba is unavailable or disabled.

Semantics here are the reference; the numba twins in ``_kernels_numba``
replicate the exact floating-point operation order so both backends return
bit-identical results (see tests/test_backends.py).
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def replay_batch(
    scores: np.ndarray,
    perms: np.ndarray,
    t_by_n: np.ndarray,
    alpha: float,
    e_min: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Early-stop replay of a fold-score sequence under many fold orders.

    scores : (k,) canonical per-fold scores
    perms  : (P, k) fold orders
    t_by_n : (k+1,) two-sided t critical values, t_by_n[n] for n scores
    returns (stop_folds (P,), means (P, k), widths (P, k)); means[p, j] is the
    running mean after j+1 folds, widths[p, j] the CI width (NaN where the run
    already stopped or the width is undefined, i.e. j = 0).
    """
    k = len(scores)
    n_perms = len(perms)
    permuted = scores[perms]
    means = np.full((n_perms, k), np.nan)
    widths = np.full((n_perms, k), np.nan)
    stop_folds = np.full(n_perms, k, dtype=np.int64)

    mean = np.zeros(n_perms)
    m2 = np.zeros(n_perms)
    active = np.ones(n_perms, dtype=bool)
    first_check = max(e_min, 3)
    for n in range(1, k + 1):
        x = permuted[:, n - 1]
        delta = x - mean
        mean_next = mean + delta / n
        m2_next = m2 + delta * (x - mean_next)
        mean = np.where(active, mean_next, mean)
        m2 = np.where(active, m2_next, m2)
        means[active, n - 1] = mean[active]
        if n >= 2:
            var = m2 / (n - 1)
            se = np.sqrt(var / n)
            half = t_by_n[n] * se
            w = 2.0 * half
            widths[active, n - 1] = w[active]
            if n >= first_check:
                c_n = widths[:, n - 1]
                c_prev = widths[:, n - 2]
                with np.errstate(divide="ignore", invalid="ignore"):
                    threshold = np.where(c_n > 0.0, alpha / np.where(c_n > 0.0, c_n, 1.0), np.inf)
                    fired = (c_n == 0.0) | (np.abs(c_prev - c_n) <= threshold)
                fired &= active
                stop_folds[fired] = n
                active &= ~fired
        if not active.any():
            break
    return stop_folds, means, widths


def _user_slice(indptr: np.ndarray, values: np.ndarray, u: int) -> np.ndarray:
    return values[indptr[u] : indptr[u + 1]]


def evaluate_users(
    mode: int,
    item_counts: np.ndarray,
    in_indptr: np.ndarray,
    in_indices: np.ndarray,
    in_sims: np.ndarray,
    train_indptr: np.ndarray,
    train_items: np.ndarray,
    test_indptr: np.ndarray,
    test_items: np.ndarray,
    eval_users: np.ndarray,
    n_items: int,
    n: int,
    discounts: np.ndarray,
) -> np.ndarray:
    """NDCG@n per evaluated user.

    mode 0 ranks by global item popularity, mode 1 by item-kNN similarity
    scatter (in_* is the incoming-neighbor CSR: row j lists the items that
    keep j among their neighbors). Ranking is full-catalog minus the user's
    train items, descending score with ascending-index tie break.
    """
    out = np.empty(len(eval_users))
    for pos, u in enumerate(eval_users):
        tr = _user_slice(train_indptr, train_items, u)
        te = _user_slice(test_indptr, test_items, u)
        if mode == 0:
            scores = item_counts.copy()
        else:
            scores = np.zeros(n_items)
            for j in tr:
                row = slice(in_indptr[j], in_indptr[j + 1])
                scores[in_indices[row]] += in_sims[row]
        scores[tr] = -np.inf
        top = np.argsort(-scores, kind="stable")[:n]
        top = top[scores[top] != -np.inf]

        dcg = 0.0
        for rank, item in enumerate(top):
            hit = np.searchsorted(te, item)
            if hit < len(te) and te[hit] == item:
                dcg += discounts[rank]
        idcg = 0.0
        for rank in range(min(len(te), n)):
            idcg += discounts[rank]
        out[pos] = dcg / idcg
    return out
