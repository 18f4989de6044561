"""Interaction-log ingestion, ID remapping, splitting, and batch sampling.

Datasets are immutable once built.  Negative sampling is global-uniform over
the item set without filtering observed pairs (approximate sampling: false
negatives are permitted), so a sampled "negative" can coincide with a
positive; that is the accepted convention here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SplitError

TRAIN, VAL, TEST = 0, 1, 2


@dataclass(frozen=True)
class InteractionDataset:
    """Remapped user/item interaction log, optionally split."""

    n_users: int
    n_items: int
    users: np.ndarray            # per-interaction user index
    items: np.ndarray            # per-interaction item index
    user_ids: tuple              # index -> raw user id
    item_ids: tuple              # index -> raw item id
    duplicates_dropped: int = 0
    split_labels: np.ndarray | None = None  # TRAIN / VAL / TEST per interaction
    # built at split time, index = user
    train_items_by_user: tuple = field(default=(), repr=False)
    val_items_by_user: tuple = field(default=(), repr=False)
    test_items_by_user: tuple = field(default=(), repr=False)

    @property
    def n_interactions(self) -> int:
        return len(self.users)

    def split_indices(self, label: int) -> np.ndarray:
        if self.split_labels is None:
            raise SplitError("dataset has not been split")
        return np.flatnonzero(self.split_labels == label)

    def relevant_items(self, split: str) -> tuple:
        if split == "val":
            return self.val_items_by_user
        if split == "test":
            return self.test_items_by_user
        raise ValueError(f"unknown split {split!r} (expected 'val' or 'test')")


@dataclass(frozen=True)
class TripletBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray


@dataclass(frozen=True)
class SetBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray  # shape (batch, k)


@dataclass(frozen=True)
class PairBatch:
    users: np.ndarray
    pos_items: np.ndarray


def load_interactions(path, fmt: str = "tsv_pairs") -> InteractionDataset:
    """Parse a TSV interaction log into a dataset with dense 0-based indices.

    ``tsv_pairs`` lines are ``user<TAB>item``; ``tsv_rated`` lines carry a
    rating column (ignored: feedback is treated as implicit) and an optional
    timestamp.  ``#``-prefixed lines are comments.  Raw IDs are remapped in
    first-seen order; exact duplicate pairs are dropped and counted.
    """
    if fmt not in ("tsv_pairs", "tsv_rated"):
        raise ValueError(f"unknown format {fmt!r}")
    n_fields = 2 if fmt == "tsv_pairs" else (3, 4)

    user_map: dict = {}
    item_map: dict = {}
    seen = set()
    users, items = [], []
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if fmt == "tsv_pairs" and len(fields) != n_fields:
                raise ParseError(
                    f"expected 2 tab-separated fields, got {len(fields)}",
                    lineno)
            if fmt == "tsv_rated" and len(fields) not in n_fields:
                raise ParseError(
                    f"expected 3 or 4 tab-separated fields, got {len(fields)}",
                    lineno)
            raw_u, raw_i = fields[0], fields[1]
            u = user_map.setdefault(raw_u, len(user_map))
            i = item_map.setdefault(raw_i, len(item_map))
            if (u, i) in seen:
                duplicates += 1
                continue
            seen.add((u, i))
            users.append(u)
            items.append(i)

    return InteractionDataset(
        n_users=len(user_map),
        n_items=len(item_map),
        users=np.asarray(users, dtype=np.int64),
        items=np.asarray(items, dtype=np.int64),
        user_ids=tuple(user_map),
        item_ids=tuple(item_map),
        duplicates_dropped=duplicates,
    )


def _items_by_user(n_users, users, items, mask) -> tuple:
    per_user = [[] for _ in range(n_users)]
    for u, i in zip(users[mask], items[mask]):
        per_user[u].append(i)
    return tuple(np.asarray(sorted(lst), dtype=np.int64) for lst in per_user)


def split(ds: InteractionDataset, ratios=(0.8, 0.1, 0.1),
          seed: int = 0) -> InteractionDataset:
    """Random train/val/test assignment, deterministic per seed.

    Train takes floor(r0*N) interactions, val floor(r1*N), test the rest.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got sum={sum(ratios)}")

    n = ds.n_interactions
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(
            f"{n} interactions cannot fill nonempty splits at ratios {ratios}")

    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int8)
    labels[order[:n_train]] = TRAIN
    labels[order[n_train:n_train + n_val]] = VAL
    labels[order[n_train + n_val:]] = TEST

    return InteractionDataset(
        n_users=ds.n_users,
        n_items=ds.n_items,
        users=ds.users,
        items=ds.items,
        user_ids=ds.user_ids,
        item_ids=ds.item_ids,
        duplicates_dropped=ds.duplicates_dropped,
        split_labels=labels,
        train_items_by_user=_items_by_user(
            ds.n_users, ds.users, ds.items, labels == TRAIN),
        val_items_by_user=_items_by_user(
            ds.n_users, ds.users, ds.items, labels == VAL),
        test_items_by_user=_items_by_user(
            ds.n_users, ds.users, ds.items, labels == TEST),
    )


class BatchSampler:
    """Draws training batches from the train split.

    Holds a private seeded generator, so a sampler is not shareable across
    threads; create one per worker.
    """

    def __init__(self, ds: InteractionDataset, seed: int):
        train = ds.split_indices(TRAIN)
        if len(train) == 0:
            raise SplitError("train split is empty")
        self._users = ds.users[train]
        self._items = ds.items[train]
        self._n_items = ds.n_items
        self._rng = np.random.default_rng(seed)

    def _positives(self, batch_size: int):
        idx = self._rng.integers(0, len(self._users), size=batch_size)
        return self._users[idx], self._items[idx]

    def triplets(self, batch_size: int) -> TripletBatch:
        users, pos = self._positives(batch_size)
        neg = self._rng.integers(0, self._n_items, size=batch_size)
        return TripletBatch(users, pos, neg)

    def set_batch(self, batch_size: int, k: int) -> SetBatch:
        if k < 1:
            raise ValueError("k must be >= 1")
        users, pos = self._positives(batch_size)
        neg = self._rng.integers(0, self._n_items, size=(batch_size, k))
        return SetBatch(users, pos, neg)

    def pairs(self, batch_size: int) -> PairBatch:
        users, pos = self._positives(batch_size)
        return PairBatch(users, pos)


def sample_triplets(ds, batch_size: int, seed: int) -> TripletBatch:
    """One batch of (user, interacted item, uniformly sampled item)."""
    return BatchSampler(ds, seed).triplets(batch_size)


def sample_set_batch(ds, batch_size: int, k: int, seed: int) -> SetBatch:
    """One batch of (user, interacted item, k uniformly sampled items)."""
    return BatchSampler(ds, seed).set_batch(batch_size, k)


def sample_pairs(ds, batch_size: int, seed: int) -> PairBatch:
    """One batch of observed (user, item) pairs."""
    return BatchSampler(ds, seed).pairs(batch_size)


def make_block_dataset(n_users: int = 500, n_items: int = 500,
                       n_blocks: int = 10, p_in: float = 0.3,
                       p_out: float = 0.01, seed: int = 0) -> InteractionDataset:
    """Synthetic implicit-feedback log with block community structure.

    Users and items are partitioned into ``n_blocks`` contiguous groups; a
    user interacts with items of its own group with probability ``p_in`` and
    with any other item with probability ``p_out``.
    """
    rng = np.random.default_rng(seed)
    u_block = (np.arange(n_users) * n_blocks) // n_users
    i_block = (np.arange(n_items) * n_blocks) // n_items
    probs = np.where(u_block[:, None] == i_block[None, :], p_in, p_out)
    hits = rng.random((n_users, n_items)) < probs
    users, items = np.nonzero(hits)
    return InteractionDataset(
        n_users=n_users,
        n_items=n_items,
        users=users.astype(np.int64),
        items=items.astype(np.int64),
        user_ids=tuple(f"u{j}" for j in range(n_users)),
        item_ids=tuple(f"i{j}" for j in range(n_items)),
    )


def write_tsv(ds: InteractionDataset, path) -> None:
    """Write a dataset back out as a ``tsv_pairs`` file."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in zip(ds.users, ds.items):
            fh.write(f"{ds.user_ids[u]}\t{ds.item_ids[i]}\n")
