"""Shared fixtures: synthetic interaction data and MovieLens-100K discovery."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from efold.data import Dataset, Interaction

# MovieLens-100K cannot be fetched inside the offline test environment; the
# acceptance tests that need it look for a local copy here or via env var.
ML100K_CANDIDATES = [
    Path(__file__).resolve().parent.parent / "data" / "ml-100k" / "u.data",
    Path("/root/data/ml-100k/u.data"),
]

ML100K_SKIP_REASON = (
    "MovieLens-100K not available (offline sandbox). Place u.data at "
    "data/ml-100k/u.data or set EFOLD_ML100K=/path/to/u.data to enable."
)


def find_ml100k() -> Path | None:
    env = os.environ.get("EFOLD_ML100K")
    candidates = ([Path(env)] if env else []) + ML100K_CANDIDATES
    for path in candidates:
        if path.is_file():
            return path
    return None


@pytest.fixture(scope="session")
def ml100k_path():
    path = find_ml100k()
    if path is None:
        pytest.skip(ML100K_SKIP_REASON)
    return path


def write_synthetic_tsv(path: Path, n_users: int = 120, n_items: int = 60, seed: int = 7) -> int:
    """Two-cluster interaction file where item-kNN should beat popularity.

    Users alternate between two item clusters with a small shared popular
    head, so per-user neighborhoods are informative while raw popularity is
    not. Dense enough to survive 5-core pruning.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    half = n_items // 2
    head = np.arange(0, n_items, 7)
    lines = []
    ts = 100000
    for u in range(n_users):
        cluster = np.arange(half) if u % 2 == 0 else np.arange(half, n_items)
        n_inter = int(rng.integers(12, 26))
        pool = np.unique(
            np.concatenate(
                [
                    rng.choice(cluster, size=min(n_inter, len(cluster)), replace=False),
                    rng.choice(head, size=3, replace=False),
                ]
            )
        )
        for it in pool:
            lines.append(f"u{u}\ti{it}\t{rng.integers(1, 6)}\t{ts}")
            ts += 1
    rng.shuffle(lines)
    path.write_text("\n".join(lines) + "\n")
    return len(lines)


@pytest.fixture()
def synthetic_tsv(tmp_path):
    path = tmp_path / "raw.tsv"
    write_synthetic_tsv(path)
    return path


def implicit_dataset(pairs: list[tuple[str, str]]) -> Dataset:
    """Dataset from explicit (user, item) pairs, implicit semantics."""
    return Dataset.from_interactions(
        [Interaction(u, i) for u, i in pairs], implicit=True
    )


def random_implicit_dataset(rng: np.random.Generator, n_users=8, n_items=8, max_inter=40) -> Dataset:
    n = int(rng.integers(1, max_inter + 1))
    seen = set()
    pairs = []
    for _ in range(n):
        u = int(rng.integers(n_users))
        i = int(rng.integers(n_items))
        if (u, i) in seen:
            continue
        seen.add((u, i))
        pairs.append((f"u{u}", f"i{i}"))
    if not pairs:
        pairs = [("u0", "i0")]
    return implicit_dataset(pairs)
