"""Timing comparison of the numba kernels against the pure-numpy fallback.

Runs the two hot paths — permutation replay and per-user NDCG evaluation —
on synthetic workloads with both backends, checks that the outputs agree
bitwise, and prints a small table.

    python3 benchmarks/bench_backends.py [--perms 5000] [--users 2000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from efold._backend import get_kernels
from efold.core import EfoldConfig
from efold.metrics import discount_weights, user_item_csr


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def replay_workload(n_perms: int, k: int = 10, seed: int = 0):
    rng = np.random.default_rng(seed)
    scores = rng.uniform(0.0, 1.0, size=k)
    perms = np.array([rng.permutation(k) for _ in range(n_perms)], dtype=np.int64)
    config = EfoldConfig(k_max=k)
    t_by_n = config.t_table()

    def run(kern):
        return kern.replay_batch(scores, perms, t_by_n, config.alpha, config.e_min)

    return run


def evaluate_workload(n_users: int, n_items: int = 1200, seed: int = 0):
    rng = np.random.default_rng(seed)
    # ~30 interactions per user, split 90/10 into train/test.
    users, items = [], []
    for u in range(n_users):
        owned = rng.choice(n_items, size=30, replace=False)
        users.extend([u] * len(owned))
        items.extend(owned)
    users = np.array(users, dtype=np.int64)
    items = np.array(items, dtype=np.int64)
    is_test = rng.uniform(size=len(users)) < 0.1

    train_indptr, train_items = user_item_csr(users[~is_test], items[~is_test], n_users)
    test_indptr, test_items = user_item_csr(users[is_test], items[is_test], n_users)
    eval_users = np.flatnonzero(
        (np.diff(train_indptr) > 0) & (np.diff(test_indptr) > 0)
    ).astype(np.int64)

    counts = np.bincount(items[~is_test], minlength=n_items).astype(np.float64)
    empty_i = np.zeros(n_items + 1, dtype=np.int64)
    empty_v = np.zeros(0, dtype=np.int64)
    empty_f = np.zeros(0, dtype=np.float64)
    discounts = discount_weights(10)

    def run(kern):
        return kern.evaluate_users(
            0, counts, empty_i, empty_v, empty_f,
            train_indptr, train_items, test_indptr, test_items,
            eval_users, n_items, 10, discounts,
        )

    return run


def bench(label: str, run, repeats: int) -> None:
    numba = get_kernels("numba")
    numpy_ = get_kernels("numpy")
    run(numba)  # JIT warm-up outside the timed region

    got_nb = run(numba)
    got_np = run(numpy_)
    if not isinstance(got_nb, tuple):
        got_nb, got_np = (got_nb,), (got_np,)
    for a, b in zip(got_nb, got_np):
        np.testing.assert_array_equal(a, b)

    t_nb = best_of(lambda: run(numba), repeats)
    t_np = best_of(lambda: run(numpy_), repeats)
    print(f"{label:<38} {t_nb * 1e3:>10.2f} {t_np * 1e3:>10.2f} {t_np / t_nb:>9.1f}x")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--perms", type=int, default=5000)
    parser.add_argument("--users", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"{'workload':<38} {'numba ms':>10} {'numpy ms':>10} {'speedup':>10}")
    bench(
        f"replay_batch ({args.perms} perms, k=10)",
        replay_workload(args.perms),
        args.repeats,
    )
    bench(
        f"evaluate_users (pop, {args.users} users)",
        evaluate_workload(args.users),
        args.repeats,
    )


if __name__ == "__main__":
    main()
