"""Embedding-table factorization model and its dot-product scorer."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class EmbeddingModel:
    """User and item embedding tables of a matrix-factorization model."""

    user_table: np.ndarray  # n_users x d
    item_table: np.ndarray  # n_items x d

    @property
    def d(self) -> int:
        return self.user_table.shape[1]

    @property
    def n_users(self) -> int:
        return self.user_table.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_table.shape[0]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.user_table.copy(), self.item_table.copy())


def init_model(n_users: int, n_items: int, d: int, seed: int) -> EmbeddingModel:
    """Tables with i.i.d. standard-normal entries, deterministic per seed."""
    if n_users < 1 or n_items < 1 or d < 1:
        raise ConfigError(
            f"model dimensions must be >= 1, got ({n_users}, {n_items}, {d})")
    rng = np.random.default_rng(seed)
    user = rng.standard_normal((n_users, d))
    item = rng.standard_normal((n_items, d))
    return EmbeddingModel(user, item)


def score(model: EmbeddingModel, u: int, i: int) -> float:
    """Dot product of one user row with one item row."""
    if not (0 <= u < model.n_users):
        raise IndexError(f"user index {u} out of range [0, {model.n_users})")
    if not (0 <= i < model.n_items):
        raise IndexError(f"item index {i} out of range [0, {model.n_items})")
    return float(model.user_table[u] @ model.item_table[i])


def score_all_items(model: EmbeddingModel, u: int) -> np.ndarray:
    """Scores of every item for one user (length n_items)."""
    if not (0 <= u < model.n_users):
        raise IndexError(f"user index {u} out of range [0, {model.n_users})")
    return model.item_table @ model.user_table[u]


def normalized_rows(table: np.ndarray):
    """Rows scaled to unit L2 norm.

    Zero rows are left as zero instead of erroring; the returned flag is True
    when any were present so callers can log the degeneracy.
    """
    table = np.asarray(table, dtype=np.float64)
    norms = np.linalg.norm(table, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return table / safe[:, None], bool(zero.any())


def save_checkpoint(model: EmbeddingModel, path, seed: int, epoch: int) -> None:
    """One JSON header line followed by row-major little-endian float64 U, I."""
    header = {"n": model.n_users, "m": model.n_items, "d": model.d,
              "seed": seed, "epoch": epoch}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(model.user_table, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.item_table, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (model, header dict)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        n, m, d = header["n"], header["m"], header["d"]
        user = np.frombuffer(fh.read(n * d * 8), dtype="<f8").reshape(n, d)
        item = np.frombuffer(fh.read(m * d * 8), dtype="<f8").reshape(m, d)
    model = EmbeddingModel(user.astype(np.float64), item.astype(np.float64))
    return model, header
