"""SGD training loop with warm-start phase switching and early stopping.

The warm-start strategy trains on alignment plus stable-rank regularization
until validation NDCG@20 stalls for ``warm_patience`` consecutive
evaluations, then switches (once) to the configured main loss; a fresh
patience counter then drives final early stopping.  The best-validation
model snapshot is returned.

A note on the emitted JSONL: every field of an epoch record is a pure
function of (dataset, config, seed) except the measured forward+backward
wall time, so ``wall_seconds`` is serialized as null to keep metrics.jsonl
byte-reproducible; measured timings stay on the in-memory records and in the
run summary.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import losses
from .data import BatchSampler, InteractionDataset, TRAIN
from .errors import ConfigError, NumericError
from .evaluation import evaluate, full_table_srank
from .losses import LossSpec
from .model import EmbeddingModel, init_model

WARM_START = "warm_start"
MAIN = "main"

# batch-size defaults: pairwise/set-wise losses vs the quadratic-cost family
PAIRWISE_BATCH = 16384
DIRECTAU_BATCH = 4096


@dataclass(frozen=True)
class TrainConfig:
    loss_spec: LossSpec
    warm_start: bool = False
    lr: float = 0.01
    weight_decay: float = 0.0
    batch_size: int | None = None
    max_epochs: int = 400
    patience: int = 20
    warm_patience: int = 20
    eval_every: int = 1
    seed: int = 0
    gamma_sr: float = 0.1
    d: int = 64
    eval_k: int = 20
    optimizer: str = "sgd"  # reserved for future adaptive variants

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.patience < 1 or self.warm_patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.gamma_sr <= 0:
            raise ConfigError("gamma_sr must be positive")
        if self.optimizer != "sgd":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")

    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        if self.loss_spec.kind in ("directau", "align"):
            return DIRECTAU_BATCH
        return PAIRWISE_BATCH


@dataclass
class PhaseController:
    """Patience-driven state machine for the warm-start switch and stopping."""

    patience: int
    phase: str = MAIN
    best_val: float = -math.inf
    epochs_since_improve: int = 0
    switch_epoch: int | None = None


def phase_signal(controller: PhaseController, val_metric: float) -> bool:
    """Feed one validation value; True when patience has run out.

    Strict improvement resets the counter and raises ``best_val``; anything
    else increments it.  The controller is updated in place.
    """
    if not math.isfinite(val_metric):
        raise NumericError(f"validation metric is not finite: {val_metric}")
    if val_metric > controller.best_val:
        controller.best_val = val_metric
        controller.epochs_since_improve = 0
        return False
    controller.epochs_since_improve += 1
    return controller.epochs_since_improve >= controller.patience


@dataclass
class EpochMetrics:
    epoch: int
    phase: str
    loss_total: float
    loss_align: float | None
    loss_uniform: float | None
    loss_srank: float | None
    val_recall20: float | None
    val_ndcg20: float | None
    srank_user: float
    srank_item: float
    wall_seconds: float

    def to_json_line(self) -> str:
        record = {
            "epoch": self.epoch,
            "phase": self.phase,
            "loss_total": self.loss_total,
            "loss_align": self.loss_align,
            "loss_uniform": self.loss_uniform,
            "loss_srank": self.loss_srank,
            "val_recall20": self.val_recall20,
            "val_ndcg20": self.val_ndcg20,
            "srank_user": self.srank_user,
            "srank_item": self.srank_item,
            "wall_seconds": None,  # measured time is not reproducible
        }
        return json.dumps(record)


@dataclass
class TrainResult:
    model: EmbeddingModel  # best-validation snapshot
    metrics: list
    controller: PhaseController
    best_val_ndcg: float
    best_epoch: int
    epochs_run: int
    warm_epochs: int
    main_epochs: int
    early_stopped: bool
    total_wall_seconds: float


def optimizer_step(model: EmbeddingModel, grads: losses.RowGradients,
                   lr: float, weight_decay: float) -> EmbeddingModel:
    """Plain SGD with L2 decay on exactly the rows the batch touched."""
    if not (np.isfinite(grads.user_grad).all()
            and np.isfinite(grads.item_grad).all()):
        raise NumericError("non-finite gradient; aborting the epoch")
    if len(grads.user_idx):
        rows = model.user_table[grads.user_idx]
        model.user_table[grads.user_idx] = \
            rows - lr * (grads.user_grad + weight_decay * rows)
    if len(grads.item_idx):
        rows = model.item_table[grads.item_idx]
        model.item_table[grads.item_idx] = \
            rows - lr * (grads.item_grad + weight_decay * rows)
    return model


def _loss_step(model, sampler, spec: LossSpec, phase: str, gamma_sr: float,
               batch_size: int):
    if phase == WARM_START:
        batch = sampler.pairs(batch_size)
        return losses.warmstart_loss_grad(model, batch, gamma_sr)
    if spec.kind == "bpr":
        return losses.bpr_loss_grad(model, sampler.triplets(batch_size))
    if spec.kind == "ssm":
        return losses.ssm_loss_grad(model, sampler.set_batch(batch_size, spec.k))
    if spec.kind == "directau":
        return losses.directau_loss_grad(model, sampler.pairs(batch_size),
                                         spec.gamma)
    if spec.kind == "align":
        return losses.align_loss_grad(model, sampler.pairs(batch_size))
    if spec.kind == "warmstart":
        return losses.warmstart_loss_grad(model, sampler.pairs(batch_size),
                                          spec.gamma_sr)
    raise ConfigError(f"unknown loss kind {spec.kind!r}")


def _component_means(values):
    """Averaged loss components mapped onto the fixed JSONL fields."""
    def mean_of(*names):
        sums, count = 0.0, 0
        for lv in values:
            present = [lv.components[n] for n in names if n in lv.components]
            if present:
                sums += sum(present)
                count += 1
        return sums / count if count else None

    total = sum(lv.total for lv in values) / len(values)
    return (total,
            mean_of("align"),
            mean_of("uniform_user", "uniform_item"),
            mean_of("srank_user", "srank_item"))


def run_training(ds: InteractionDataset, config: TrainConfig) -> TrainResult:
    """Train embedding tables on the dataset's train split.

    Deterministic for fixed (dataset, config, seed) in every emitted value
    except measured wall time.
    """
    seed_seq = np.random.SeedSequence(config.seed)
    model_seed, sampler_seed = seed_seq.spawn(2)
    model = init_model(ds.n_users, ds.n_items, config.d, seed=model_seed)
    sampler = BatchSampler(ds, seed=sampler_seed)

    batch_size = config.resolved_batch_size()
    n_train = len(ds.split_indices(TRAIN))
    steps_per_epoch = max(1, math.ceil(n_train / batch_size))

    phase = WARM_START if config.warm_start else MAIN
    controller = PhaseController(
        patience=config.warm_patience if config.warm_start else config.patience,
        phase=phase)

    best_model = model.copy()
    best_val = -math.inf
    best_epoch = 0
    warm_epochs = 0
    main_epochs = 0
    early_stopped = False
    total_wall = 0.0
    metrics: list[EpochMetrics] = []
    last_recall = None
    last_ndcg = None

    for epoch in range(1, config.max_epochs + 1):
        epoch_phase = controller.phase
        if epoch_phase == WARM_START:
            warm_epochs += 1
        else:
            main_epochs += 1

        epoch_values = []
        epoch_wall = 0.0
        for _ in range(steps_per_epoch):
            t0 = time.perf_counter()
            value, grads = _loss_step(model, sampler, config.loss_spec,
                                      epoch_phase, config.gamma_sr,
                                      batch_size)
            epoch_wall += time.perf_counter() - t0
            optimizer_step(model, grads, config.lr, config.weight_decay)
            epoch_values.append(value)
        total_wall += epoch_wall

        srank_user, srank_item = full_table_srank(model)
        stop_now = False
        if epoch % config.eval_every == 0:
            report = evaluate(model, ds, "val", k=config.eval_k)
            last_recall, last_ndcg = report.recall_at_k, report.ndcg_at_k
            if report.ndcg_at_k > best_val:
                best_val = report.ndcg_at_k
                best_epoch = epoch
                best_model = model.copy()
            exhausted = phase_signal(controller, report.ndcg_at_k)
            if exhausted and controller.phase == WARM_START:
                controller.phase = MAIN
                controller.switch_epoch = epoch
                controller.best_val = -math.inf
                controller.epochs_since_improve = 0
                controller.patience = config.patience
            elif exhausted:
                early_stopped = True
                stop_now = True

        total, align_c, uniform_c, srank_c = _component_means(epoch_values)
        metrics.append(EpochMetrics(
            epoch=epoch,
            phase=epoch_phase,
            loss_total=total,
            loss_align=align_c,
            loss_uniform=uniform_c,
            loss_srank=srank_c,
            val_recall20=last_recall,
            val_ndcg20=last_ndcg,
            srank_user=srank_user,
            srank_item=srank_item,
            wall_seconds=epoch_wall,
        ))
        if stop_now:
            break

    if best_val == -math.inf:  # no evaluation ever ran
        best_model = model.copy()
        best_val = math.nan
        best_epoch = len(metrics)

    return TrainResult(
        model=best_model,
        metrics=metrics,
        controller=controller,
        best_val_ndcg=best_val,
        best_epoch=best_epoch,
        epochs_run=len(metrics),
        warm_epochs=warm_epochs,
        main_epochs=main_epochs,
        early_stopped=early_stopped,
        total_wall_seconds=total_wall,
    )


def write_metrics_jsonl(metrics, path) -> None:
    """One JSON object per epoch; byte-identical across reruns."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(m.to_json_line() + "\n")


def write_timings_jsonl(metrics, path) -> None:
    """Measured per-epoch forward+backward seconds (not reproducible)."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(json.dumps({"epoch": m.epoch,
                                 "wall_seconds": m.wall_seconds}) + "\n")
