"""Training objectives and their analytic gradients.

Sign conventions: every loss here is minimized.  The pairwise ranking loss is
the negative log-likelihood -ln sigmoid(margin); the set-wise softmax loss is
the negative log of the positive's softmax probability; the stable-rank
regularizer is reported as a positive value in (0, 1] and the composite
warm-start objective subtracts it (the trainer maximizes stable rank).

Alignment, uniformity, and the stable-rank regularizer operate on
row-normalized embeddings; their gradients flow through the normalization
map, so the returned gradients are with respect to the raw stored rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DegenerateBatch, UndefinedAngle
from .model import EmbeddingModel, normalized_rows


LOSS_KINDS = ("bpr", "ssm", "directau", "align", "warmstart")


@dataclass(frozen=True)
class LossSpec:
    """Tagged choice of training objective and its hyperparameters.

    ``k`` is the negative-sample count for the set-wise softmax loss,
    ``gamma`` the alignment/uniformity trade-off, ``gamma_sr`` the
    stable-rank weight of the warm-start objective.
    """

    kind: str
    k: int = 20
    gamma: float = 1.0
    gamma_sr: float = 0.1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.gamma_sr <= 0:
            raise ValueError("gamma_sr must be positive")


@dataclass(frozen=True)
class LossValue:
    """Scalar objective plus its logged components."""

    total: float
    components: dict = field(default_factory=dict)
    flags: tuple = ()


@dataclass(frozen=True)
class RowGradients:
    """Gradients restricted to the embedding rows a batch touched."""

    user_idx: np.ndarray
    user_grad: np.ndarray
    item_idx: np.ndarray
    item_grad: np.ndarray


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _merge_rows(d, contribs):
    """Sum per-row gradient contributions onto unique row indices."""
    pairs = [(np.asarray(i), np.asarray(g)) for i, g in contribs if len(i)]
    if not pairs:
        return np.empty(0, dtype=np.int64), np.empty((0, d))
    idx = np.concatenate([i for i, _ in pairs])
    grads = np.vstack([g for _, g in pairs])
    uniq, inv = np.unique(idx, return_inverse=True)
    out = np.zeros((len(uniq), d))
    np.add.at(out, inv, grads)
    return uniq, out


def _chain_normalization(raw, unit, grad_unit):
    """Pull a gradient w.r.t. unit rows back through row normalization."""
    norms = np.linalg.norm(raw, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    radial = np.sum(unit * grad_unit, axis=1)
    grad = (grad_unit - radial[:, None] * unit) / safe[:, None]
    grad[zero] = 0.0
    return grad


# ---------------------------------------------------------------------------
# pairwise and set-wise ranking losses (raw, unnormalized scores)
# ---------------------------------------------------------------------------

def bpr_loss_grad(model: EmbeddingModel, batch):
    """Mean -ln sigmoid(score(u,i) - score(u,i')) over a triplet batch."""
    if len(batch.users) == 0:
        raise DegenerateBatch("empty triplet batch")
    u = model.user_table[batch.users]
    ip = model.item_table[batch.pos_items]
    ineg = model.item_table[batch.neg_items]
    b = len(batch.users)

    margin = np.einsum("bd,bd->b", u, ip) - np.einsum("bd,bd->b", u, ineg)
    loss = float(np.mean(np.logaddexp(0.0, -margin)))
    coef = -_sigmoid(-margin) / b  # d(loss)/d(margin) per example

    user_idx, user_grad = _merge_rows(model.d, [
        (batch.users, coef[:, None] * (ip - ineg)),
    ])
    item_idx, item_grad = _merge_rows(model.d, [
        (batch.pos_items, coef[:, None] * u),
        (batch.neg_items, -coef[:, None] * u),
    ])
    value = LossValue(total=loss, components={"rank_margin": loss})
    return value, RowGradients(user_idx, user_grad, item_idx, item_grad)


def ssm_loss_grad(model: EmbeddingModel, batch):
    """Mean sampled-softmax loss over one positive and k sampled negatives."""
    if len(batch.users) == 0:
        raise DegenerateBatch("empty set batch")
    neg = np.asarray(batch.neg_items)
    if neg.ndim != 2:
        raise ValueError("set batch negatives must have shape (batch, k)")
    u = model.user_table[batch.users]
    ip = model.item_table[batch.pos_items]
    ineg = model.item_table[neg]  # (b, k, d)
    b, k = neg.shape

    s_pos = np.einsum("bd,bd->b", u, ip)
    s_neg = np.einsum("bd,bkd->bk", u, ineg)
    logits = np.concatenate([s_pos[:, None], s_neg], axis=1)
    mx = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - mx)
    z = ex.sum(axis=1)
    loss = float(np.mean(np.log(z) + mx[:, 0] - s_pos))
    p = ex / z[:, None]

    coef_pos = (p[:, 0] - 1.0) / b
    coef_neg = p[:, 1:] / b
    grad_u = coef_pos[:, None] * ip + np.einsum("bk,bkd->bd", coef_neg, ineg)
    user_idx, user_grad = _merge_rows(model.d, [(batch.users, grad_u)])
    item_idx, item_grad = _merge_rows(model.d, [
        (batch.pos_items, coef_pos[:, None] * u),
        (neg.ravel(), (coef_neg[:, :, None] * u[:, None, :]).reshape(b * k, -1)),
    ])
    value = LossValue(total=loss, components={"rank_margin": loss})
    return value, RowGradients(user_idx, user_grad, item_idx, item_grad)


# ---------------------------------------------------------------------------
# alignment / uniformity family (row-normalized embeddings)
# ---------------------------------------------------------------------------

def _align_parts(model, batch):
    """Alignment value plus gradients accumulated on unique touched rows."""
    b = len(batch.users)
    uniq_u, inv_u = np.unique(batch.users, return_inverse=True)
    uniq_i, inv_i = np.unique(batch.pos_items, return_inverse=True)
    raw_u = model.user_table[uniq_u]
    raw_i = model.item_table[uniq_i]
    unit_u, _ = normalized_rows(raw_u)
    unit_i, _ = normalized_rows(raw_i)

    diff = unit_u[inv_u] - unit_i[inv_i]
    value = float(np.mean(np.sum(diff * diff, axis=1)))

    per_ex = 2.0 * diff / b
    g_unit_u = np.zeros_like(unit_u)
    np.add.at(g_unit_u, inv_u, per_ex)
    g_unit_i = np.zeros_like(unit_i)
    np.add.at(g_unit_i, inv_i, -per_ex)
    grad_u = _chain_normalization(raw_u, unit_u, g_unit_u)
    grad_i = _chain_normalization(raw_i, unit_i, g_unit_i)
    return value, (uniq_u, grad_u), (uniq_i, grad_i)


def align_loss_grad(model: EmbeddingModel, batch):
    """Mean squared distance between normalized embeddings of observed pairs."""
    if len(batch.users) == 0:
        raise DegenerateBatch("empty pair batch")
    value, (uniq_u, grad_u), (uniq_i, grad_i) = _align_parts(model, batch)
    lv = LossValue(total=value, components={"align": value})
    return lv, RowGradients(uniq_u, grad_u, uniq_i, grad_i)


def uniformity_value_grad(rows):
    """log-sum-exp dispersion of the given rows, treated as free variables.

    ``rows`` are used exactly as passed (callers wanting the training-time
    convention should normalize first or use :func:`uniform_loss_grad`).
    Sums over unordered distinct pairs; needs at least two rows.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DegenerateBatch("uniformity needs at least 2 rows")
    d2 = linalg.pairwise_sq_dists(rows)
    w = np.exp(-2.0 * d2)
    np.fill_diagonal(w, 0.0)
    s = w.sum() / 2.0
    value = float(np.log(s))
    deg = w.sum(axis=1)
    grad = (-4.0 / s) * (deg[:, None] * rows - w @ rows)
    return value, grad


def uniform_loss_grad(table):
    """Uniformity of row-normalized rows, gradient w.r.t. the raw rows."""
    table = np.asarray(table, dtype=np.float64)
    unit, _ = normalized_rows(table)
    value, grad_unit = uniformity_value_grad(unit)
    return value, _chain_normalization(table, unit, grad_unit)


def srank_value_grad(table, seed: int = 0):
    """Stable rank of the rows as passed, with its analytic gradient.

    The gradient is 2 (A - srank(A) sigma1 psi1 omega1^T) / sigma1^2 with the
    top triple taken from the seeded power iteration; at a (measure-zero)
    tied top singular value this is a subgradient, so slow convergence of the
    iteration is tolerated and its last iterate used.
    """
    table = np.asarray(table, dtype=np.float64)
    summary, _ = linalg.top_singular_tolerant(table, seed=seed)
    s1 = summary.sigma1
    srank = summary.stable_rank
    rank1 = np.outer(summary.left_vec, summary.right_vec)
    grad = 2.0 * (table - srank * s1 * rank1) / (s1 * s1)
    return srank, grad


def srank_reg_loss_grad(table, seed: int = 0):
    """Scaled stable rank srank(A_hat) / max(rows, cols) on normalized rows.

    Always in (0, 1].  The returned gradient is the gradient of the loss
    itself; a trainer that wants to *raise* stable rank applies it with a
    negative weight.
    """
    table = np.asarray(table, dtype=np.float64)
    unit, _ = normalized_rows(table)
    scale = float(max(table.shape))
    srank, grad_unit = srank_value_grad(unit, seed=seed)
    value = srank / scale
    grad = _chain_normalization(table, unit, grad_unit / scale)
    return value, grad


def directau_loss_grad(model: EmbeddingModel, batch, gamma: float):
    """Alignment plus gamma-weighted uniformity of batch users and items.

    Uniformity is computed over the batch's unique user rows and unique item
    rows; a side with fewer than two distinct rows is skipped and flagged.
    """
    if len(batch.users) == 0:
        raise DegenerateBatch("empty pair batch")
    align, (uniq_u, grad_u), (uniq_i, grad_i) = _align_parts(model, batch)
    components = {"align": align}
    flags = []
    total = align

    for name, uniq, grads, table in (
            ("uniform_user", uniq_u, grad_u, model.user_table),
            ("uniform_item", uniq_i, grad_i, model.item_table)):
        if len(uniq) < 2:
            flags.append(f"{name}_skipped")
            continue
        val, g = uniform_loss_grad(table[uniq])
        components[name] = val
        total += gamma * val
        grads += gamma * g

    lv = LossValue(total=float(total), components=components,
                   flags=tuple(flags))
    return lv, RowGradients(uniq_u, grad_u, uniq_i, grad_i)


def warmstart_loss_grad(model: EmbeddingModel, batch, gamma_sr: float):
    """Alignment minus gamma_sr times the stable-rank terms of the batch rows.

    Minimizing this raises the stable rank of the touched user and item rows
    while aligning observed pairs; it stands in for negative sampling during
    the warm-start phase.
    """
    if len(batch.users) == 0:
        raise DegenerateBatch("empty pair batch")
    align, (uniq_u, grad_u), (uniq_i, grad_i) = _align_parts(model, batch)
    components = {"align": align}
    total = align

    for name, uniq, grads, table in (
            ("srank_user", uniq_u, grad_u, model.user_table),
            ("srank_item", uniq_i, grad_i, model.item_table)):
        val, g = srank_reg_loss_grad(table[uniq])
        components[name] = val
        total -= gamma_sr * val
        grads -= gamma_sr * g

    lv = LossValue(total=float(total), components=components)
    return lv, RowGradients(uniq_u, grad_u, uniq_i, grad_i)


# ---------------------------------------------------------------------------
# gradient geometry
# ---------------------------------------------------------------------------

def uniformity_gradient_per_user(table, u: int):
    """Uniformity gradient restricted to one row of the table as given."""
    _, grad = uniformity_value_grad(table)
    return grad[u]


def srank_gradient_per_user(table, u: int, seed: int = 0):
    """Stable-rank gradient restricted to one row of the table as given."""
    _, grad = srank_value_grad(table, seed=seed)
    return grad[u]


_ANGLE_EPS = 1e-12


def gradient_angle(table, u: int, seed: int = 0) -> float:
    """Angle (degrees) between the uniformity gradient and the *ascent*
    direction of stable rank for one row; raises UndefinedAngle when either
    gradient vanishes."""
    g_uni = uniformity_gradient_per_user(table, u)
    g_sr = srank_gradient_per_user(table, u, seed=seed)
    return _angle_between(g_uni, -g_sr)


def _angle_between(g_uni, neg_g_sr) -> float:
    nu = np.linalg.norm(g_uni)
    ns = np.linalg.norm(neg_g_sr)
    if nu < _ANGLE_EPS or ns < _ANGLE_EPS:
        raise UndefinedAngle("a gradient vanished; the angle is undefined")
    cosang = float(np.clip(g_uni @ neg_g_sr / (nu * ns), -1.0, 1.0))
    return float(np.degrees(np.arccos(cosang)))


def angles_from_gradients(uni_grads, sr_grads):
    """Per-row angle statistics between precomputed gradient tables.

    Returns (mean_degrees, skipped_count) over the rows where both gradients
    are nonzero; raises UndefinedAngle when every row is undefined.
    """
    nu = np.linalg.norm(uni_grads, axis=1)
    ns = np.linalg.norm(sr_grads, axis=1)
    ok = (nu >= _ANGLE_EPS) & (ns >= _ANGLE_EPS)
    if not ok.any():
        raise UndefinedAngle("all per-row gradient angles are undefined")
    dots = np.sum(uni_grads[ok] * (-sr_grads[ok]), axis=1)
    cosang = np.clip(dots / (nu[ok] * ns[ok]), -1.0, 1.0)
    mean_deg = float(np.mean(np.degrees(np.arccos(cosang))))
    return mean_deg, int(np.sum(~ok))


def mean_gradient_angle(table, seed: int = 0):
    """Mean angle over all rows, skipping undefined ones."""
    table = np.asarray(table, dtype=np.float64)
    _, all_uni = uniformity_value_grad(table)
    _, all_sr = srank_value_grad(table, seed=seed)
    return angles_from_gradients(all_uni, all_sr)
