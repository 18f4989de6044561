#!/usr/bin/env python3
"""Regenerate the frozen regression baselines under tests/fixtures/.

The gradient-angle baselines are computed twice: through the analytic
gradients and through an independent central finite-difference oracle on the
loss values themselves (the FD uniformity evaluation reuses the unchanged
pair terms, which keeps the oracle exact while making the sweep tractable).
Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cfspectral import losses, theory  # noqa: E402

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"

ANGLE_PARAMS = dict(n=1000, d=32, theta_deg=1.0, steps=100, eta=2.0)
ANGLE_SEEDS = (0, 1, 2)
FD_H = 1e-6


def uniformity_fd_grad(rows, h=FD_H):
    """Central differences of log sum_pairs exp(-2||x_j - x_k||^2).

    Only the pair terms touching the perturbed row change, so the sweep
    updates one row's contribution instead of re-evaluating all pairs.
    """
    n, d = rows.shape
    d2 = np.sum((rows[:, None, :] - rows[None, :, :]) ** 2, axis=2)
    w = np.exp(-2.0 * d2)
    np.fill_diagonal(w, 0.0)
    s_total = w.sum() / 2.0

    grad = np.zeros_like(rows)
    for j in range(n):
        others = np.delete(np.arange(n), j)
        base_terms = w[j, others].sum()
        for c in range(d):
            vals = []
            for sign in (1.0, -1.0):
                row = rows[j].copy()
                row[c] += sign * h
                diffs = rows[others] - row
                terms = np.exp(-2.0 * np.sum(diffs * diffs, axis=1)).sum()
                vals.append(np.log(s_total - base_terms + terms))
            grad[j, c] = (vals[0] - vals[1]) / (2.0 * h)
    return grad


def srank_fd_grad(rows, h=FD_H):
    """Central differences of ||A||_F^2 / sigma1(A)^2 via the dense SVD."""
    def srank(a):
        sig = np.linalg.svd(a, compute_uv=False)
        return float(np.sum(sig ** 2) / sig[0] ** 2)

    n, d = rows.shape
    grad = np.zeros_like(rows)
    for j in range(n):
        for c in range(d):
            hi = rows.copy()
            hi[j, c] += h
            lo = rows.copy()
            lo[j, c] -= h
            grad[j, c] = (srank(hi) - srank(lo)) / (2.0 * h)
    return grad


def gradient_angle_fixture():
    per_seed = {}
    for seed in ANGLE_SEEDS:
        trace = theory.gradient_angle_experiment(seed=seed, **ANGLE_PARAMS)
        rho = trace.column("mean_rho_deg")
        quarter = len(rho) // 4

        rows = theory.tight_cluster(ANGLE_PARAMS["n"], ANGLE_PARAMS["d"],
                                    ANGLE_PARAMS["theta_deg"], seed)
        print(f"seed {seed}: running finite-difference oracle "
              f"({rows.shape[0]} x {rows.shape[1]} sweep)...")
        fd_uni = uniformity_fd_grad(rows)
        fd_sr = srank_fd_grad(rows)
        rho0_fd, skipped = losses.angles_from_gradients(fd_uni, fd_sr)
        assert skipped == 0

        per_seed[str(seed)] = {
            "step0_rho_fd": rho0_fd,
            "step0_rho_analytic": float(rho[0]),
            "early_mean": float(rho[:quarter].mean()),
            "late_mean": float(rho[-quarter:].mean()),
        }
        print(f"  rho0 analytic={rho[0]:.6f} fd={rho0_fd:.6f} "
              f"early={per_seed[str(seed)]['early_mean']:.6f} "
              f"late={per_seed[str(seed)]['late_mean']:.6f}")
    return {"params": ANGLE_PARAMS, "fd_step": FD_H, "seeds": per_seed}


def toy_circle_fixture():
    steps = 800
    seeds = (0, 1, 2)
    out = {"params": {"steps": steps, "eta": 0.05, "eta_decay": 0.01},
           "seeds": {}}
    for seed in seeds:
        uni = theory.toy_circle_experiment("uniformity", steps=steps, seed=seed)
        sr = theory.toy_circle_experiment("srank", steps=steps, seed=seed)
        early = slice(0, steps // 10 + 1)
        dev = float(np.max(np.abs(uni.rows[early, 1:] - sr.rows[early, 1:])))
        out["seeds"][str(seed)] = {"early_max_angle_dev_deg": dev}
        print(f"toy circle seed {seed}: early max angle deviation {dev:.4f} deg")
    return out


def theorem2_fixture():
    trace = theory.simulate_uniformity_recovery(r=16, d=2, epsilon=0.01,
                                                eta=0.1, steps=0, seed=0)
    out = {
        "r": 16, "d": 2, "epsilon": 0.01,
        "kappa_u0": float(trace.column("kappa_u")[0]),
        "kappa_delta0": float(trace.column("kappa_delta")[0]),
    }
    print(f"theorem2: kappa_u0={out['kappa_u0']:.6f} "
          f"kappa_delta0={out['kappa_delta0']:.6f}")
    return out


def main(argv):
    FIXTURES.mkdir(parents=True, exist_ok=True)
    builders = {
        "gradient_angles.json": gradient_angle_fixture,
        "toy_circle.json": toy_circle_fixture,
        "theorem2.json": theorem2_fixture,
    }
    wanted = argv or [name.removesuffix(".json") for name in builders]
    for name, build in builders.items():
        if name.removesuffix(".json") not in wanted:
            continue
        path = FIXTURES / name
        path.write_text(json.dumps(build(), indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main(sys.argv[1:])
