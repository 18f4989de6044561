"""Figure builders for the three artifact families."""

from __future__ import annotations

import json
import pathlib

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class InputError(Exception):
    """An input file is malformed or lacks a required field."""


def _run_label(path) -> str:
    """Human label for a run file: its directory name, else the file stem."""
    path = pathlib.Path(path)
    return path.parent.name if path.parent.name not in ("", ".") \
        else path.stem


def _read_metrics(path):
    epochs, sranks = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise InputError(f"{path}: malformed JSON on line {lineno}: "
                                 f"{err.msg}") from err
            for field in ("epoch", "srank_user"):
                if field not in record:
                    raise InputError(
                        f"{path}: line {lineno} is missing field {field!r}")
            epochs.append(record["epoch"])
            sranks.append(record["srank_user"])
    if not epochs:
        raise InputError(f"{path}: no epoch records")
    return np.asarray(epochs, dtype=float), np.asarray(sranks, dtype=float)


def plot_trajectories(metrics_files, out_image) -> None:
    """Stable-rank trajectories, one curve per run.

    A dashed horizontal line marks each run's final stable rank.
    """
    if not metrics_files:
        raise InputError("no metrics files given")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in metrics_files:
        epochs, sranks = _read_metrics(path)
        (line,) = ax.plot(epochs, sranks, label=_run_label(path))
        ax.axhline(sranks[-1], linestyle="--", linewidth=1.0,
                   color=line.get_color(), alpha=0.7)
    ax.set_xlabel("epoch")
    ax.set_ylabel("stable rank (user table)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)


def _read_angle_trace(path):
    if not pathlib.Path(path).read_text().strip():
        raise InputError(f"{path}: empty trace")
    try:
        raw = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError, IndexError) as err:
        raise InputError(f"{path}: unreadable CSV: {err}") from err
    if raw.size == 0 or raw.dtype.names is None:
        raise InputError(f"{path}: empty trace")
    for field in ("step", "mean_rho_deg"):
        if field not in raw.dtype.names:
            raise InputError(f"{path}: missing column {field!r}")
    return np.atleast_1d(raw["step"]), np.atleast_1d(raw["mean_rho_deg"])


def plot_angles(trace_files, out_image) -> None:
    """Gradient-angle curve with a cross-seed spread band.

    With several traces the mean over seeds is drawn and the band spans one
    standard deviation; a single trace is drawn bare.
    """
    if not trace_files:
        raise InputError("no trace files given")
    steps_ref = None
    curves = []
    for path in trace_files:
        steps, rho = _read_angle_trace(path)
        if steps_ref is None:
            steps_ref = steps
        elif len(steps) != len(steps_ref):
            raise InputError(f"{path}: trace length {len(steps)} does not "
                             f"match the first trace ({len(steps_ref)})")
        curves.append(rho)

    curves = np.vstack(curves)
    fig, ax = plt.subplots(figsize=(6, 4))
    mean = curves.mean(axis=0)
    ax.plot(steps_ref, mean, label=f"mean of {len(curves)} seed(s)")
    if len(curves) > 1:
        std = curves.std(axis=0)
        ax.fill_between(steps_ref, mean - std, mean + std, alpha=0.3,
                        label="seed spread (1 std)")
    ax.set_xlabel("gradient descent step")
    ax.set_ylabel("mean angle between gradients (deg)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)


def _read_summary(path):
    try:
        record = json.loads(pathlib.Path(path).read_text())
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: malformed JSON: {err.msg}") from err
    for field in ("test_ndcg20", "total_wall_seconds"):
        if field not in record:
            raise InputError(f"{path}: missing field {field!r}")
    return record


def plot_ablation(summary_files, out_image) -> None:
    """Quality-versus-runtime scatter: one dot per run summary."""
    if not summary_files:
        raise InputError("no summary files given")
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in summary_files:
        record = _read_summary(path)
        label = _run_label(path)
        ax.scatter(record["total_wall_seconds"], record["test_ndcg20"],
                   label=label)
        ax.annotate(label, (record["total_wall_seconds"],
                            record["test_ndcg20"]),
                    textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("training wall time (s, forward+backward)")
    ax.set_ylabel("test NDCG@20")
    fig.tight_layout()
    fig.savefig(out_image)
    plt.close(fig)
