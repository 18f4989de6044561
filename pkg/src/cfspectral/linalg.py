"""Dense real-matrix primitives: norms, top singular triple, SVD oracle.

All routines work on 2-D float64 numpy arrays.  The power iteration runs on
the column Gram matrix A^T A, which is d x d for the tall embedding tables
this package cares about (d << n), so one top-singular solve costs O(n d^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DegenerateMatrix, OracleSizeExceeded

SVD_ORACLE_MAX_DIM = 256


@dataclass(frozen=True)
class SpectralSummary:
    """Top singular triple of a matrix plus the derived stable rank."""

    sigma1: float
    frob_sq: float
    stable_rank: float
    left_vec: np.ndarray   # psi_1, unit, length = rows
    right_vec: np.ndarray  # omega_1, unit, length = cols
    iterations: int


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if a.size == 0:
        raise DegenerateMatrix("empty matrix")
    return a


def frobenius_sq(a) -> float:
    """Sum of squared entries, ||A||_F^2."""
    a = _as_matrix(a)
    return float(np.sum(a * a))


# Residual stop for (near-)tied top singular values: once ||Bv - lam v|| is
# this small relative to lam, every direction in the top cluster carries the
# same sigma to well past the tolerances used downstream, so the iterate can
# be accepted even though the vector itself never settles.
_NEAR_TIE_RESIDUAL = 5e-7


def _summarize(a, v, fro_sq, iterations) -> SpectralSummary:
    right = v.copy()
    left = a @ right
    left_norm = np.linalg.norm(left)
    if left_norm == 0.0:  # only possible for pathological near-zero matrices
        raise DegenerateMatrix("top right singular vector maps to zero")
    sigma1 = float(left_norm)  # ||A omega_1|| for a unit omega_1
    return SpectralSummary(
        sigma1=sigma1,
        frob_sq=fro_sq,
        stable_rank=fro_sq / (sigma1 * sigma1),
        left_vec=left / left_norm,
        right_vec=right,
        iterations=iterations,
    )


# Rayleigh-quotient refinement is an O(cols^3) solve; worth it only for the
# Gram sizes this package actually meets (embedding dimension, not n).
_REFINE_MAX_COLS = 256


def _rayleigh_refine(gram, v, lam):
    """Up to two inverse-iteration steps; cubic convergence of the top pair.

    The shifted solve is intentionally allowed to be ill-conditioned: blowing
    up along the dominant eigendirection is what makes inverse iteration
    work.  Non-finite results (exactly singular shift) keep the input pair.
    """
    eye = np.eye(gram.shape[0])
    for _ in range(2):
        try:
            with np.errstate(all="ignore"):
                y = np.linalg.solve(gram - lam * eye, v)
        except np.linalg.LinAlgError:
            break
        norm_y = np.linalg.norm(y)
        if not np.isfinite(norm_y) or norm_y == 0.0:
            break
        y /= norm_y
        lam_new = float(y @ gram @ y)
        if not np.isfinite(lam_new) or lam_new <= 0.0:
            break
        v, lam = y, lam_new
    return v, lam


def top_singular_tolerant(a, tol: float = 1e-10, max_iter: int = 1000,
                          seed: int = 0):
    """Power iteration that reports instead of raising on slow convergence.

    Returns (summary, converged).  Iterates v <- A^T A v; stops when the
    relative change of the Rayleigh quotient drops below ``tol`` or when the
    eigen-residual indicates a (near-)tied top pair, in which case the
    current iterate is the documented subgradient choice.  Converged
    iterates on small Gram matrices get a Rayleigh-quotient polish so the
    singular *vectors* are accurate enough for gradient formulas even when
    the spectral gap is small.
    """
    a = _as_matrix(a)
    if tol <= 0:
        raise ValueError("tol must be positive")
    fro_sq = float(np.sum(a * a))
    if fro_sq == 0.0:
        raise DegenerateMatrix("all-zero matrix has no top singular triple")

    gram = a.T @ a
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)

    lam = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w = gram @ v
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # start vector fell in the nullspace; redraw deterministically
            v = rng.standard_normal(a.shape[1])
            v /= np.linalg.norm(v)
            continue
        lam_new = float(v @ w)
        residual = np.linalg.norm(w - lam_new * v)
        v = w / norm_w
        if residual <= _NEAR_TIE_RESIDUAL * lam_new:
            lam = lam_new
            converged = True
            break
        if lam > 0.0 and abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            converged = True
            break
        lam = lam_new

    if converged and gram.shape[0] <= _REFINE_MAX_COLS:
        v, lam = _rayleigh_refine(gram, v, lam)

    return _summarize(a, v, fro_sq, iterations), converged


def top_singular(a, tol: float = 1e-10, max_iter: int = 1000,
                 seed: int = 0) -> SpectralSummary:
    """Top singular triple (sigma1, psi1, omega1) via seeded power iteration.

    Deterministic for a fixed seed.  Raises ConvergenceFailure (carrying the
    last iterate) if ``max_iter`` sweeps are exhausted.
    """
    summary, converged = top_singular_tolerant(a, tol=tol, max_iter=max_iter,
                                               seed=seed)
    if not converged:
        raise ConvergenceFailure(
            f"power iteration did not converge in {max_iter} iterations",
            last_sigma=summary.sigma1, last_vec=summary.right_vec)
    return summary


def svd_oracle(a):
    """Full SVD (Psi, sigmas, Omega) with A = Psi diag(sigmas) Omega^T.

    Exact LAPACK decomposition; intended as the test oracle for the iterative
    routines and restricted to matrices of at most 256 x 256.
    """
    a = _as_matrix(a)
    if max(a.shape) > SVD_ORACLE_MAX_DIM:
        raise OracleSizeExceeded(
            f"svd_oracle supports at most {SVD_ORACLE_MAX_DIM} rows/cols, "
            f"got {a.shape}")
    psi, sigmas, omega_t = np.linalg.svd(a, full_matrices=False)
    return psi, sigmas, omega_t.T


def stable_rank(a, tol: float = 1e-10, max_iter: int = 1000,
                seed: int = 0) -> float:
    """Stable rank ||A||_F^2 / sigma1^2, a continuous rank surrogate."""
    return top_singular(a, tol=tol, max_iter=max_iter, seed=seed).stable_rank


def pairwise_sq_dists(a) -> np.ndarray:
    """n x n matrix of squared L2 distances between the rows of A."""
    a = _as_matrix(a)
    sq = np.sum(a * a, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (a @ a.T)
    np.maximum(d, 0.0, out=d)  # Gram expansion can go slightly negative
    np.fill_diagonal(d, 0.0)
    return 0.5 * (d + d.T)
