"""Top-k ranking metrics and full-table spectral measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import EvalError
from .model import EmbeddingModel, normalized_rows


@dataclass(frozen=True)
class MetricReport:
    recall_at_k: float
    ndcg_at_k: float
    k: int
    users_evaluated: int


def evaluate(model: EmbeddingModel, ds, split: str, k: int = 20) -> MetricReport:
    """Recall@k and NDCG@k over users with a nonempty relevant set.

    For each user the full item catalogue is ranked (score descending, ties
    broken by ascending item index) with the user's train items masked out.
    With k' = min(k, |relevant|): recall counts hits in the top ``k`` against
    a denominator of k', and NDCG uses binary gains with IDCG over the best
    k' positions, so both metrics can reach 1 regardless of |relevant|.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = ds.relevant_items(split)
    eval_users = [u for u in range(ds.n_users) if len(relevant[u])]
    if not eval_users:
        raise EvalError(f"split {split!r} has no users with relevant items")

    scores = model.user_table[eval_users] @ model.item_table.T
    for row, u in enumerate(eval_users):
        scores[row, ds.train_items_by_user[u]] = -np.inf

    # stable sort on negated scores keeps ascending item index among ties
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]

    discounts = 1.0 / np.log2(np.arange(1, k + 1) + 1.0)
    idcg_prefix = np.cumsum(discounts)

    recall_sum = 0.0
    ndcg_sum = 0.0
    for row, u in enumerate(eval_users):
        rel = relevant[u]
        hits = np.isin(top[row], rel)
        k_prime = min(k, len(rel))
        recall_sum += hits.sum() / k_prime
        ndcg_sum += discounts[hits].sum() / idcg_prefix[k_prime - 1]

    n = len(eval_users)
    return MetricReport(recall_at_k=recall_sum / n, ndcg_at_k=ndcg_sum / n,
                        k=k, users_evaluated=n)


def full_table_srank(model: EmbeddingModel):
    """Stable rank of the row-normalized user and item tables.

    Uses the tolerant power iteration so trajectory logging survives tables
    whose top singular pair has (nearly) tied values.
    """
    unit_u, _ = normalized_rows(model.user_table)
    unit_i, _ = normalized_rows(model.item_table)
    su, _ = linalg.top_singular_tolerant(unit_u)
    si, _ = linalg.top_singular_tolerant(unit_i)
    return su.stable_rank, si.stable_rank
