"""Executable checks of the rank dynamics induced by the loss family.

Each experiment returns a :class:`DynamicsTrace` (one row per step, columns
documented on the producing function) that can be written as CSV.  The
alignment collapse is simulated exactly as derived: unnormalized squared
distance to a single shared item, where the recurrence
u^(t+1) = u^(t) - 2 eta (u^(t) - i) has the closed form
U^(t) = (1-2eta)^t U^(0) + (1 - (1-2eta)^t) 1 i^T.  The uniformity and toy
experiments run projected gradient descent: rows are renormalized to the
unit sphere after every step, matching the unit-row assumption of the
dispersion analysis.

Singular values inside these small simulations come from the dense SVD
oracle, never from power iteration, so they stay exact arbitrarily close to
tied spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, losses
from .errors import ConfigError, UndefinedAngle
from .model import normalized_rows


@dataclass(frozen=True)
class DynamicsTrace:
    """Per-step simulation record: one named column per measured quantity."""

    columns: tuple
    rows: np.ndarray  # shape (steps, len(columns))
    meta: dict

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        header = ",".join(self.columns)
        np.savetxt(path, self.rows, delimiter=",", header=header, comments="")


def _top_two(a):
    sigmas = np.linalg.svd(a, compute_uv=False)
    s1 = float(sigmas[0])
    s2 = float(sigmas[1]) if len(sigmas) > 1 else 0.0
    return s1, s2


def _srank_exact(a) -> float:
    sigmas = np.linalg.svd(a, compute_uv=False)
    return float(np.sum(sigmas ** 2) / sigmas[0] ** 2)


def _srank_grad_exact(a):
    """Stable-rank gradient from the dense SVD (exact at near-tied spectra,
    where the power-iteration subgradient direction is too noisy for these
    small simulations to settle)."""
    psi, sigmas, omega_t = np.linalg.svd(a, full_matrices=False)
    s1 = sigmas[0]
    srank = float(np.sum(sigmas ** 2) / s1 ** 2)
    grad = 2.0 * (a - srank * s1 * np.outer(psi[:, 0], omega_t[0])) / (s1 * s1)
    return srank, grad


# ---------------------------------------------------------------------------
# alignment collapse (exact dynamics)
# ---------------------------------------------------------------------------

def simulate_alignment_collapse(r: int, d: int, eta: float, steps: int,
                                seed: int = 0) -> DynamicsTrace:
    """Exact gradient descent of r user rows toward one shared item.

    Columns: step, sigma1, sigma2, stable_rank, delta_ali_empirical,
    delta_ali_predicted, closed_form_dev.  ``delta_ali_empirical`` is
    (sigma1_0/sigma2_0) / (sigma1_t/sigma2_t); the prediction is the
    geometric-series ratio in terms of sigma1_0, sqrt(r) ||i|| and
    (1-2 eta)^t; ``closed_form_dev`` is the max-abs gap between the iterated
    recurrence and the closed form.
    """
    if not 0.0 < eta <= 0.5:
        raise ConfigError(f"eta must lie in (0, 0.5], got {eta}")
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal((r, d))
    item = rng.standard_normal(d)
    item_norm = float(np.linalg.norm(item))

    s1_0, s2_0 = _top_two(u0)
    ratio0 = s1_0 / s2_0

    u = u0.copy()
    ones_item = np.outer(np.ones(r), item)
    shrink = 1.0 - 2.0 * eta

    records = []
    for t in range(steps + 1):
        s1, s2 = _top_two(u)
        srank = _srank_exact(u)
        delta_emp = ratio0 / (s1 / s2) if s2 > 0 else 0.0
        decay = shrink ** t
        denom = (1.0 - decay) * np.sqrt(r) * item_norm + s1_0 * decay
        delta_pred = s1_0 * decay / denom
        closed = decay * u0 + (1.0 - decay) * ones_item
        dev = float(np.max(np.abs(u - closed)))
        records.append((t, s1, s2, srank, delta_emp, delta_pred, dev))
        u = shrink * u + 2.0 * eta * ones_item

    return DynamicsTrace(
        columns=("step", "sigma1", "sigma2", "stable_rank",
                 "delta_ali_empirical", "delta_ali_predicted",
                 "closed_form_dev"),
        rows=np.asarray(records, dtype=np.float64),
        meta={"r": r, "d": d, "eta": eta, "seed": seed,
              "item_norm": item_norm, "sigma1_0": s1_0, "sigma2_0": s2_0})


# ---------------------------------------------------------------------------
# uniformity recovery from the rank-2 angular grid
# ---------------------------------------------------------------------------

def angular_grid(r: int, d: int, epsilon: float, theta0: float) -> np.ndarray:
    """r unit rows at angles theta0 + j*epsilon in the first two dimensions."""
    if d < 2:
        raise ConfigError("the angular grid needs d >= 2")
    angles = theta0 + np.arange(r) * epsilon
    rows = np.zeros((r, d))
    rows[:, 0] = np.cos(angles)
    rows[:, 1] = np.sin(angles)
    return rows


def pairwise_dists(a) -> np.ndarray:
    """Pairwise L2 row distances (the delta-U matrix of the dispersion
    analysis, using chord lengths between unit rows)."""
    return np.sqrt(linalg.pairwise_sq_dists(a))


def simulate_uniformity_recovery(r: int, d: int, epsilon: float, eta: float,
                                 steps: int, seed: int = 0) -> DynamicsTrace:
    """Projected gradient descent on uniformity from a collapsed grid.

    Columns: step, sigma1, sigma2, stable_rank, sigma1_delta, sigma2_delta,
    kappa_u, kappa_delta, switch_condition, delta_uni_empirical,
    delta_uni_pred_nd, delta_uni_pred_rd.  The two predictions use
    alpha = eta * 4 e^-4 * sqrt(n d) with n taken as the row count (as in the
    theorem statement) and as the batch size (as in its derivation); they
    coincide here and neither is asserted as exact.
    """
    if not 0.0 <= epsilon <= 0.1:
        raise ConfigError(f"epsilon must lie in [0, 0.1] rad, got {epsilon}")
    rng = np.random.default_rng(seed)
    u = angular_grid(r, d, epsilon, theta0=float(rng.uniform(0.0, 2 * np.pi)))

    alpha_nd = eta * 4.0 * np.exp(-4.0) * np.sqrt(u.shape[0] * d)
    alpha_rd = eta * 4.0 * np.exp(-4.0) * np.sqrt(r * d)

    records = []
    prev_ratio = None
    for t in range(steps + 1):
        s1, s2 = _top_two(u)
        srank = _srank_exact(u)
        delta = pairwise_dists(u)
        sd1, sd2 = _top_two(delta)
        kappa_u = s1 / s2 if s2 > 0 else np.inf
        kappa_d = sd1 / sd2 if sd2 > 0 else np.inf
        switch = float(kappa_u > kappa_d)
        ratio = s1 / s2 if s2 > 0 else np.inf
        emp = prev_ratio / ratio if (prev_ratio is not None
                                     and np.isfinite(prev_ratio)
                                     and np.isfinite(ratio)) else np.nan
        prev_ratio = ratio

        def pred(alpha):
            return (s1 * (alpha * sd2 + s1)) / (s2 * (alpha * sd1 + s1)) \
                if s2 > 0 else np.nan

        records.append((t, s1, s2, srank, sd1, sd2, kappa_u, kappa_d, switch,
                        emp, pred(alpha_nd), pred(alpha_rd)))

        if epsilon > 0.0:
            _, grad = losses.uniformity_value_grad(u)
            u, _ = normalized_rows(u - eta * grad)

    return DynamicsTrace(
        columns=("step", "sigma1", "sigma2", "stable_rank", "sigma1_delta",
                 "sigma2_delta", "kappa_u", "kappa_delta", "switch_condition",
                 "delta_uni_empirical", "delta_uni_pred_nd",
                 "delta_uni_pred_rd"),
        rows=np.asarray(records, dtype=np.float64),
        meta={"r": r, "d": d, "epsilon": epsilon, "eta": eta, "seed": seed,
              "alpha_nd": alpha_nd, "alpha_rd": alpha_rd})


# ---------------------------------------------------------------------------
# gradient-angle experiment
# ---------------------------------------------------------------------------

def tight_cluster(n: int, d: int, theta_deg: float, seed: int) -> np.ndarray:
    """n unit rows whose pairwise angles stay within theta_deg degrees."""
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(d)
    base /= np.linalg.norm(base)
    half = np.tan(np.radians(theta_deg / 2.0))
    offsets = rng.standard_normal((n, d))
    offsets -= (offsets @ base)[:, None] * base
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    radii = rng.uniform(0.0, half, size=n)
    rows = base[None, :] + radii[:, None] * offsets
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def gradient_angle_experiment(n: int = 1000, d: int = 32,
                              theta_deg: float = 1.0, steps: int = 100,
                              eta: float = 2.0, seed: int = 0) -> DynamicsTrace:
    """Mean angle between the uniformity and stable-rank-ascent gradients
    along a uniformity descent that starts from a tightly aligned cluster.

    Columns: step, mean_rho_deg, undefined_count.  Rows whose angle is
    undefined (a vanished gradient) are skipped and counted.
    """
    if n < 2 or d < 2:
        raise ConfigError("need at least 2 users in at least 2 dimensions")
    u = tight_cluster(n, d, theta_deg, seed)

    records = []
    for t in range(steps + 1):
        _, uni_grad = losses.uniformity_value_grad(u)
        _, sr_grad = losses.srank_value_grad(u)
        try:
            mean_deg, skipped = losses.angles_from_gradients(uni_grad, sr_grad)
        except UndefinedAngle:
            mean_deg, skipped = np.nan, n
        records.append((t, mean_deg, skipped))
        u, _ = normalized_rows(u - eta * uni_grad)

    return DynamicsTrace(
        columns=("step", "mean_rho_deg", "undefined_count"),
        rows=np.asarray(records, dtype=np.float64),
        meta={"n": n, "d": d, "theta_deg": theta_deg, "steps": steps,
              "eta": eta, "seed": seed})


# ---------------------------------------------------------------------------
# three vectors on the unit circle
# ---------------------------------------------------------------------------

def toy_circle_experiment(loss: str, steps: int = 800, seed: int = 0,
                          eta: float = 0.05,
                          eta_decay: float = 0.01) -> DynamicsTrace:
    """Optimize three unit vectors in 2-D by uniformity or stable rank.

    Columns: step, angle12, angle13, angle23 (degrees).  Steps follow the
    normalized gradient direction so the two objectives move at the same
    angular speed and their early trajectories are comparable; the step
    shrinks geometrically (eta_t = eta*(1-eta_decay)^t), which the
    stable-rank objective needs to settle onto its stationary configuration
    because its (sub)gradient does not vanish smoothly at the tied-spectrum
    optimum.
    """
    if loss not in ("uniformity", "srank"):
        raise ConfigError(f"loss must be 'uniformity' or 'srank', got {loss!r}")
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2 * np.pi, size=3)
    u = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    def pair_angles(rows):
        g = np.clip(rows @ rows.T, -1.0, 1.0)
        return (np.degrees(np.arccos(g[0, 1])),
                np.degrees(np.arccos(g[0, 2])),
                np.degrees(np.arccos(g[1, 2])))

    records = []
    step_size = eta
    for t in range(steps + 1):
        records.append((t,) + pair_angles(u))
        if loss == "uniformity":
            _, grad = losses.uniformity_value_grad(u)
        else:
            # ascend stable rank: descend its negative
            _, grad = _srank_grad_exact(u)
            grad = -grad
        norm = np.linalg.norm(grad)
        if norm > 1e-30:
            u, _ = normalized_rows(u - step_size * (grad / norm))
        step_size *= (1.0 - eta_decay)

    return DynamicsTrace(
        columns=("step", "angle12", "angle13", "angle23"),
        rows=np.asarray(records, dtype=np.float64),
        meta={"loss": loss, "steps": steps, "seed": seed, "eta": eta,
              "eta_decay": eta_decay, "final_rows": u})


def srank_of_circle_angles(phis) -> float:
    """Stable rank of three unit vectors given by their circle angles."""
    u = np.stack([np.cos(phis), np.sin(phis)], axis=1)
    return _srank_exact(u)


# ---------------------------------------------------------------------------
# Eckart-Young identity
# ---------------------------------------------------------------------------

def eckart_young_check(e, d_keep: int):
    """Rank-d truncation error vs the tail sum of squared singular values.

    Returns (truncation_error_sq, tail_sum, factorization_dev): the first two
    are equal by the best-rank-d approximation theorem; the third is the
    max-abs gap between the split-factor product (Psi_d Sigma_d^1/2)
    (Sigma_d^1/2 Omega_d)^T and the truncated matrix.
    """
    e = np.asarray(e, dtype=np.float64)
    psi, sigmas, omega = linalg.svd_oracle(e)
    if not 1 <= d_keep <= min(e.shape):
        raise ConfigError(f"d must lie in [1, {min(e.shape)}], got {d_keep}")
    truncated = psi[:, :d_keep] @ np.diag(sigmas[:d_keep]) @ omega[:, :d_keep].T
    error_sq = float(np.sum((e - truncated) ** 2))
    tail_sum = float(np.sum(sigmas[d_keep:] ** 2))

    root = np.sqrt(sigmas[:d_keep])
    u_d = psi[:, :d_keep] * root[None, :]
    v_d = omega[:, :d_keep] * root[None, :]
    factorization_dev = float(np.max(np.abs(u_d @ v_d.T - truncated)))
    return error_sq, tail_sum, factorization_dev
