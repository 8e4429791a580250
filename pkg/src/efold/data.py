"""Interaction data: loading, implicit conversion, k-core pruning, statistics.

A :class:`Dataset` keeps interactions as parallel numpy arrays over dense
user/item indices (assigned in first-seen order) so the downstream folding
and evaluation code can stay vectorized. Raw string ids are kept around for
anything user-facing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import EfoldError

_NO_TS = np.int64(-(2**62))  # sentinel for "no timestamp"


@dataclass(frozen=True)
class Interaction:
    """One user-item feedback record."""

    user_id: str
    item_id: str
    rating: float = 1.0
    timestamp: Optional[int] = None


@dataclass(frozen=True)
class TableFormat:
    """Column layout of a delimited interaction file.

    ``delimiter`` may be multi-character (e.g. ``::``). ``rating_col`` and
    ``timestamp_col`` are optional; a missing rating defaults to 1.
    """

    delimiter: str = "\t"
    user_col: int = 0
    item_col: int = 1
    rating_col: Optional[int] = 2
    timestamp_col: Optional[int] = 3
    skip_header: bool = False


@dataclass(frozen=True)
class DatasetStats:
    n_users: int
    n_items: int
    n_interactions: int
    density_percent: float

    def to_dict(self) -> dict:
        return {
            "users": self.n_users,
            "items": self.n_items,
            "interactions": self.n_interactions,
            "density_percent": self.density_percent,
        }


def density_percent(n_users: int, n_items: int, n_interactions: int) -> float:
    """Interactions over the user-item grid, in percent."""
    if n_users <= 0 or n_items <= 0:
        raise EfoldError("E003", "density undefined for zero users or items")
    return n_interactions / (n_users * n_items) * 100.0


class Dataset:
    """Indexed collection of interactions.

    Construct via :meth:`from_interactions` or :func:`load_interactions`;
    the constructor trusts its arguments.
    """

    def __init__(
        self,
        users: np.ndarray,
        items: np.ndarray,
        ratings: np.ndarray,
        timestamps: np.ndarray,
        user_ids: list[str],
        item_ids: list[str],
        implicit: bool = False,
    ):
        self.users = users
        self.items = items
        self.ratings = ratings
        self.timestamps = timestamps
        self.user_ids = user_ids
        self.item_ids = item_ids
        self.user_index = {u: i for i, u in enumerate(user_ids)}
        self.item_index = {it: i for i, it in enumerate(item_ids)}
        self.implicit = implicit

    @classmethod
    def from_interactions(
        cls, interactions: Iterable[Interaction], implicit: bool = False
    ) -> "Dataset":
        users, items, ratings, stamps = [], [], [], []
        user_ids: list[str] = []
        item_ids: list[str] = []
        uidx: dict[str, int] = {}
        iidx: dict[str, int] = {}
        for pos, rec in enumerate(interactions):
            if not rec.user_id or not rec.item_id:
                raise EfoldError(
                    "E002", f"interaction {pos}: empty user or item id"
                )
            u = uidx.get(rec.user_id)
            if u is None:
                u = uidx[rec.user_id] = len(user_ids)
                user_ids.append(rec.user_id)
            i = iidx.get(rec.item_id)
            if i is None:
                i = iidx[rec.item_id] = len(item_ids)
                item_ids.append(rec.item_id)
            users.append(u)
            items.append(i)
            ratings.append(rec.rating)
            stamps.append(_NO_TS if rec.timestamp is None else rec.timestamp)
        ds = cls(
            np.asarray(users, dtype=np.int32),
            np.asarray(items, dtype=np.int32),
            np.asarray(ratings, dtype=np.float64),
            np.asarray(stamps, dtype=np.int64),
            user_ids,
            item_ids,
            implicit=implicit,
        )
        if implicit:
            ds._check_implicit()
        return ds

    def _check_implicit(self) -> None:
        if len(self) and not np.all(self.ratings == 1.0):
            raise EfoldError("E002", "implicit dataset contains ratings != 1")
        pairs = self.users.astype(np.int64) * len(self.item_ids) + self.items
        if len(np.unique(pairs)) != len(pairs):
            raise EfoldError("E002", "implicit dataset contains duplicate (user, item) pairs")

    # -- basic accessors ----------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_interactions(self) -> int:
        return len(self.users)

    @property
    def catalog(self) -> "Dataset":
        return self

    def __len__(self) -> int:
        return len(self.users)

    def interaction(self, i: int) -> Interaction:
        ts = int(self.timestamps[i])
        return Interaction(
            self.user_ids[self.users[i]],
            self.item_ids[self.items[i]],
            float(self.ratings[i]),
            None if ts == _NO_TS else ts,
        )

    def __iter__(self) -> Iterator[Interaction]:
        return (self.interaction(i) for i in range(len(self)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.implicit == other.implicit
            and self.user_ids == other.user_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def subset(self, positions: np.ndarray) -> "Dataset":
        """New dataset from the selected interaction positions (indices rebuilt)."""
        return Dataset.from_interactions(
            (self.interaction(int(i)) for i in np.atleast_1d(positions)),
            implicit=self.implicit,
        )


def load_interactions(path: str, fmt: TableFormat = TableFormat()) -> Dataset:
    """Parse a delimited interaction file into a Dataset.

    Raises EfoldError naming the 1-based line number on any malformed row.
    """
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise EfoldError("E001", f"cannot open {path}: {exc}") from exc

    needed = max(
        fmt.user_col,
        fmt.item_col,
        fmt.rating_col if fmt.rating_col is not None else 0,
        fmt.timestamp_col if fmt.timestamp_col is not None else 0,
    )
    records: list[Interaction] = []
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and fmt.skip_header:
                continue
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split(fmt.delimiter)
            if len(fields) <= needed:
                raise EfoldError(
                    "E002",
                    f"{path} line {lineno}: expected at least {needed + 1} fields, got {len(fields)}",
                )
            rating = 1.0
            if fmt.rating_col is not None and fields[fmt.rating_col] != "":
                try:
                    rating = float(fields[fmt.rating_col])
                except ValueError as exc:
                    raise EfoldError(
                        "E002", f"{path} line {lineno}: non-numeric rating {fields[fmt.rating_col]!r}"
                    ) from exc
            timestamp = None
            if fmt.timestamp_col is not None and fields[fmt.timestamp_col] != "":
                try:
                    timestamp = int(fields[fmt.timestamp_col])
                except ValueError as exc:
                    raise EfoldError(
                        "E002",
                        f"{path} line {lineno}: non-integer timestamp {fields[fmt.timestamp_col]!r}",
                    ) from exc
            user = fields[fmt.user_col]
            item = fields[fmt.item_col]
            if not user or not item:
                raise EfoldError("E002", f"{path} line {lineno}: empty user or item id")
            records.append(Interaction(user, item, rating, timestamp))
    if not records:
        raise EfoldError("E003", f"no interactions in {path}")
    return Dataset.from_interactions(records, implicit=False)


def to_implicit(ds: Dataset) -> Dataset:
    """Convert presence of a rating to positive feedback of value 1.

    Duplicate (user, item) pairs collapse to a single record sitting at the
    pair's first occurrence and carrying the earliest known timestamp.
    """
    first_pos: dict[tuple[int, int], int] = {}
    best_ts: dict[tuple[int, int], np.int64] = {}
    for pos in range(len(ds)):
        key = (int(ds.users[pos]), int(ds.items[pos]))
        ts = ds.timestamps[pos]
        if key not in first_pos:
            first_pos[key] = pos
            best_ts[key] = ts
        elif ts != _NO_TS and (best_ts[key] == _NO_TS or ts < best_ts[key]):
            best_ts[key] = ts

    records = []
    for key, pos in first_pos.items():
        ts = best_ts[key]
        records.append(
            Interaction(
                ds.user_ids[key[0]],
                ds.item_ids[key[1]],
                1.0,
                None if ts == _NO_TS else int(ts),
            )
        )
    return Dataset.from_interactions(records, implicit=True)


def prune_kcore(ds: Dataset, core: int = 5) -> Dataset:
    """Iteratively drop users and items with fewer than ``core`` interactions.

    Alternating sweeps until a fixed point; the result is the unique maximal
    sub-dataset where every remaining user and item has >= core interactions.
    """
    if core < 1:
        raise EfoldError("E005", f"core must be >= 1, got {core}")
    keep = np.ones(len(ds), dtype=bool)
    while True:
        users = ds.users[keep]
        items = ds.items[keep]
        if len(users) == 0:
            raise EfoldError("E004", "dataset vanished under k-core pruning")
        u_counts = np.bincount(users, minlength=ds.n_users)
        i_counts = np.bincount(items, minlength=ds.n_items)
        bad = (u_counts[ds.users] < core) | (i_counts[ds.items] < core)
        bad &= keep
        if not bad.any():
            break
        keep &= ~bad
    if keep.all():
        return ds
    return ds.subset(np.flatnonzero(keep))


def compute_stats(ds: Dataset) -> DatasetStats:
    return DatasetStats(
        ds.n_users,
        ds.n_items,
        ds.n_interactions,
        density_percent(ds.n_users, ds.n_items, ds.n_interactions),
    )


def write_canonical(ds: Dataset, path: str) -> None:
    """Emit tab-separated ``user item rating timestamp`` rows (timestamp may be empty)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(ds)):
            ts = int(ds.timestamps[i])
            ts_field = "" if ts == _NO_TS else str(ts)
            fh.write(
                f"{ds.user_ids[ds.users[i]]}\t{ds.item_ids[ds.items[i]]}\t"
                f"{ds.ratings[i]:g}\t{ts_field}\n"
            )
