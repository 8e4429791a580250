"""Numba-jitted kernels: the default backend for the hot inner loops.

Must stay operation-for-operation in sync with ``_kernels_numpy`` so both
backends agree bitwise. No fastmath: reassociation would break that.
"""

from __future__ import annotations

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def _replay_batch_jit(scores, perms, t_by_n, alpha, e_min):
    k = scores.shape[0]
    n_perms = perms.shape[0]
    means = np.full((n_perms, k), np.nan)
    widths = np.full((n_perms, k), np.nan)
    stop_folds = np.full(n_perms, k, dtype=np.int64)
    first_check = max(e_min, 3)

    for p in range(n_perms):
        mean = 0.0
        m2 = 0.0
        for n in range(1, k + 1):
            x = scores[perms[p, n - 1]]
            delta = x - mean
            mean = mean + delta / n
            m2 = m2 + delta * (x - mean)
            means[p, n - 1] = mean
            if n >= 2:
                var = m2 / (n - 1)
                se = np.sqrt(var / n)
                half = t_by_n[n] * se
                w = 2.0 * half
                widths[p, n - 1] = w
                if n >= first_check:
                    c_n = w
                    c_prev = widths[p, n - 2]
                    if c_n == 0.0 or abs(c_prev - c_n) <= alpha / c_n:
                        stop_folds[p] = n
                        break
    return stop_folds, means, widths


def replay_batch(scores, perms, t_by_n, alpha, e_min):
    return _replay_batch_jit(
        np.ascontiguousarray(scores, dtype=np.float64),
        np.ascontiguousarray(perms, dtype=np.int64),
        np.ascontiguousarray(t_by_n, dtype=np.float64),
        float(alpha),
        int(e_min),
    )


@njit(cache=True)
def _evaluate_users_jit(
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
):
    out = np.empty(len(eval_users))
    scratch = np.zeros(n_items)
    excluded = np.zeros(n_items, dtype=np.bool_)
    top_items = np.empty(n, dtype=np.int64)
    top_scores = np.empty(n)

    for pos in range(len(eval_users)):
        u = eval_users[pos]
        tr = train_items[train_indptr[u] : train_indptr[u + 1]]
        te = test_items[test_indptr[u] : test_indptr[u + 1]]

        if mode == 0:
            scores = item_counts
        else:
            scratch[:] = 0.0
            for jj in range(len(tr)):
                j = tr[jj]
                for a in range(in_indptr[j], in_indptr[j + 1]):
                    scratch[in_indices[a]] += in_sims[a]
            scores = scratch
        for jj in range(len(tr)):
            excluded[tr[jj]] = True

        # Top-n by descending score, ascending item index among ties:
        # strict '>' comparisons keep the earlier-seen (lower) index ahead.
        count = 0
        for item in range(n_items):
            if excluded[item]:
                continue
            s = scores[item]
            if count < n:
                q = count
                while q > 0 and top_scores[q - 1] < s:
                    top_scores[q] = top_scores[q - 1]
                    top_items[q] = top_items[q - 1]
                    q -= 1
                top_scores[q] = s
                top_items[q] = item
                count += 1
            elif s > top_scores[n - 1]:
                q = n - 1
                while q > 0 and top_scores[q - 1] < s:
                    top_scores[q] = top_scores[q - 1]
                    top_items[q] = top_items[q - 1]
                    q -= 1
                top_scores[q] = s
                top_items[q] = item

        dcg = 0.0
        for rank in range(count):
            item = top_items[rank]
            hit = np.searchsorted(te, item)
            if hit < len(te) and te[hit] == item:
                dcg += discounts[rank]
        idcg = 0.0
        for rank in range(min(len(te), n)):
            idcg += discounts[rank]
        out[pos] = dcg / idcg

        for jj in range(len(tr)):
            excluded[tr[jj]] = False
    return out


def evaluate_users(
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
):
    return _evaluate_users_jit(
        int(mode),
        np.ascontiguousarray(item_counts, dtype=np.float64),
        np.ascontiguousarray(in_indptr, dtype=np.int64),
        np.ascontiguousarray(in_indices, dtype=np.int64),
        np.ascontiguousarray(in_sims, dtype=np.float64),
        np.ascontiguousarray(train_indptr, dtype=np.int64),
        np.ascontiguousarray(train_items, dtype=np.int64),
        np.ascontiguousarray(test_indptr, dtype=np.int64),
        np.ascontiguousarray(test_items, dtype=np.int64),
        np.ascontiguousarray(eval_users, dtype=np.int64),
        int(n_items),
        int(n),
        np.ascontiguousarray(discounts, dtype=np.float64),
    )
