"""Command-line entry point: train, theory experiments, checkpoint eval.

Exit codes: 0 success, 1 runtime error (I/O, shape mismatch, numerics),
2 usage error (bad flags or out-of-range values).

``train`` writes into --out: metrics.jsonl (one epoch record per line,
byte-reproducible for fixed flags+seed), checkpoint.bin (best-validation
model), summary.json (test metrics, final stable ranks, switch epoch, wall
time), and timings.jsonl (measured per-epoch forward+backward seconds, the
one output that is not reproducible).
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np

from . import data, evaluation, theory, trainer
from .errors import CfSpectralError, ConfigError, ParseError
from .losses import LossSpec
from .model import load_checkpoint, save_checkpoint


def _add_config_flag(parser):
    parser.add_argument("--config", type=pathlib.Path, default=None,
                        help="key=value file; explicit flags override it")


def _walk_actions(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                yield from _walk_actions(sub)
        else:
            yield action


def _apply_config_file(parser, argv):
    """Load --config defaults, then reparse so command-line flags win."""
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None) is None:
        return parser.parse_args(argv)
    overrides = {}
    for lineno, line in enumerate(pre.config.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"{pre.config}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    known = {action.dest: action for action in _walk_actions(parser)}
    for key, value in overrides.items():
        if key not in known:
            parser.error(f"{pre.config}: unknown config key {key!r}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            overrides[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            overrides[key] = action.type(value)
    parser.set_defaults(**overrides)
    return parser.parse_args(argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfspectral",
        description="Matrix-factorization trainer with spectral diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train embedding tables")
    p_train.add_argument("--data", type=pathlib.Path, required=True)
    p_train.add_argument("--format", choices=("tsv_pairs", "tsv_rated"),
                         default="tsv_pairs")
    p_train.add_argument("--loss", choices=("bpr", "ssm", "directau", "align"),
                         required=True)
    p_train.add_argument("--warm-start", action="store_true")
    p_train.add_argument("--gamma", type=float, default=1.0,
                         help="alignment/uniformity trade-off")
    p_train.add_argument("--gamma-sr", type=float, default=0.1,
                         help="stable-rank weight of the warm-start phase")
    p_train.add_argument("--k", type=int, default=20,
                         help="negative samples per example for ssm")
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--wd", type=float, default=0.0)
    p_train.add_argument("--epochs", type=int, default=400)
    p_train.add_argument("--patience", type=int, default=20)
    p_train.add_argument("--warm-patience", type=int, default=20)
    p_train.add_argument("--batch-size", type=int, default=None)
    p_train.add_argument("--d", type=int, default=64)
    p_train.add_argument("--eval-every", type=int, default=1)
    p_train.add_argument("--eval-k", type=int, default=20)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--split-seed", type=int, default=0)
    p_train.add_argument("--out", type=pathlib.Path, default=pathlib.Path("run"))
    _add_config_flag(p_train)

    p_theory = sub.add_parser("theory", help="rank-dynamics experiments")
    t_sub = p_theory.add_subparsers(dest="experiment", required=True)

    t_align = t_sub.add_parser("align", help="alignment rank collapse")
    t_align.add_argument("--r", type=int, default=50)
    t_align.add_argument("--d", type=int, default=16)
    t_align.add_argument("--eta", type=float, default=0.1)
    t_align.add_argument("--steps", type=int, default=500)

    t_uni = t_sub.add_parser("uniform", help="uniformity rank recovery")
    t_uni.add_argument("--r", type=int, default=16)
    t_uni.add_argument("--d", type=int, default=2)
    t_uni.add_argument("--epsilon", type=float, default=0.01)
    t_uni.add_argument("--eta", type=float, default=0.1)
    t_uni.add_argument("--steps", type=int, default=50)

    t_ang = t_sub.add_parser("angles", help="uniformity vs stable-rank angles")
    t_ang.add_argument("--n", type=int, default=1000)
    t_ang.add_argument("--d", type=int, default=32)
    t_ang.add_argument("--theta", type=float, default=1.0)
    t_ang.add_argument("--steps", type=int, default=100)
    t_ang.add_argument("--eta", type=float, default=2.0)
    t_ang.add_argument("--seeds", type=int, default=1,
                       help="number of consecutive seeds to run")

    t_circ = t_sub.add_parser("circle", help="three vectors on the circle")
    t_circ.add_argument("--loss-kind", choices=("uniformity", "srank"),
                        default="uniformity")
    t_circ.add_argument("--steps", type=int, default=800)
    t_circ.add_argument("--eta", type=float, default=0.05)
    t_circ.add_argument("--eta-decay", type=float, default=0.01)

    t_eck = t_sub.add_parser("eckart", help="truncation-error identity check")
    t_eck.add_argument("--rows", type=int, default=6)
    t_eck.add_argument("--cols", type=int, default=5)
    t_eck.add_argument("--rank-d", type=int, default=3)

    for sp in (t_align, t_uni, t_ang, t_circ, t_eck):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=pathlib.Path, default=pathlib.Path("run"))

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", type=pathlib.Path, required=True)
    p_eval.add_argument("--data", type=pathlib.Path, required=True)
    p_eval.add_argument("--format", choices=("tsv_pairs", "tsv_rated"),
                        default="tsv_pairs")
    p_eval.add_argument("--split", choices=("val", "test"), default="test")
    p_eval.add_argument("--k", type=int, default=20)
    p_eval.add_argument("--split-seed", type=int, default=0)

    return parser


def _load_split(path, fmt, split_seed):
    ds = data.load_interactions(path, fmt)
    return data.split(ds, seed=split_seed)


def cmd_train(args) -> int:
    ds = _load_split(args.data, args.format, args.split_seed)
    spec = LossSpec(args.loss, k=args.k, gamma=args.gamma,
                    gamma_sr=args.gamma_sr)
    config = trainer.TrainConfig(
        loss_spec=spec, warm_start=args.warm_start, lr=args.lr,
        weight_decay=args.wd, batch_size=args.batch_size,
        max_epochs=args.epochs, patience=args.patience,
        warm_patience=args.warm_patience, eval_every=args.eval_every,
        seed=args.seed, gamma_sr=args.gamma_sr, d=args.d, eval_k=args.eval_k)

    result = trainer.run_training(ds, config)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    trainer.write_metrics_jsonl(result.metrics, out / "metrics.jsonl")
    trainer.write_timings_jsonl(result.metrics, out / "timings.jsonl")
    save_checkpoint(result.model, out / "checkpoint.bin", seed=args.seed,
                    epoch=result.best_epoch)

    report = evaluation.evaluate(result.model, ds, "test", k=args.eval_k)
    srank_user, srank_item = evaluation.full_table_srank(result.model)
    summary = {
        "loss": args.loss,
        "warm_start": args.warm_start,
        "seed": args.seed,
        "test_recall20": report.recall_at_k,
        "test_ndcg20": report.ndcg_at_k,
        "srank_user": srank_user,
        "srank_item": srank_item,
        "switch_epoch": result.controller.switch_epoch,
        "best_val_ndcg20": result.best_val_ndcg,
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
        "warm_epochs": result.warm_epochs,
        "main_epochs": result.main_epochs,
        "early_stopped": result.early_stopped,
        "total_wall_seconds": result.total_wall_seconds,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({"out": str(out), "test_ndcg20": report.ndcg_at_k,
                      "test_recall20": report.recall_at_k}))
    return 0


def cmd_theory(args, parser) -> int:
    traces_dir = args.out / "traces"

    if args.experiment == "align":
        if not 0.0 < args.eta < 0.5:
            parser.error(f"--eta must lie in (0, 0.5), got {args.eta}")
        trace = theory.simulate_alignment_collapse(
            r=args.r, d=args.d, eta=args.eta, steps=args.steps, seed=args.seed)
        traces_dir.mkdir(parents=True, exist_ok=True)
        trace.to_csv(traces_dir / "align.csv")
        print(json.dumps({"trace": str(traces_dir / "align.csv"),
                          "final_stable_rank": trace.column("stable_rank")[-1]}))
        return 0

    if args.experiment == "uniform":
        trace = theory.simulate_uniformity_recovery(
            r=args.r, d=args.d, epsilon=args.epsilon, eta=args.eta,
            steps=args.steps, seed=args.seed)
        traces_dir.mkdir(parents=True, exist_ok=True)
        trace.to_csv(traces_dir / "uniform.csv")
        print(json.dumps({"trace": str(traces_dir / "uniform.csv"),
                          "final_stable_rank": trace.column("stable_rank")[-1]}))
        return 0

    if args.experiment == "angles":
        traces_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for seed in range(args.seed, args.seed + args.seeds):
            trace = theory.gradient_angle_experiment(
                n=args.n, d=args.d, theta_deg=args.theta, steps=args.steps,
                eta=args.eta, seed=seed)
            path = traces_dir / f"angles_seed{seed}.csv"
            trace.to_csv(path)
            written.append(str(path))
        print(json.dumps({"traces": written}))
        return 0

    if args.experiment == "circle":
        trace = theory.toy_circle_experiment(
            args.loss_kind, steps=args.steps, seed=args.seed, eta=args.eta,
            eta_decay=args.eta_decay)
        traces_dir.mkdir(parents=True, exist_ok=True)
        path = traces_dir / f"circle_{args.loss_kind}.csv"
        trace.to_csv(path)
        print(json.dumps({"trace": str(path)}))
        return 0

    if args.experiment == "eckart":
        rng = np.random.default_rng(args.seed)
        e = rng.standard_normal((args.rows, args.cols))
        err_sq, tail, factor_dev = theory.eckart_young_check(e, args.rank_d)
        report = {
            "rows": args.rows, "cols": args.cols, "rank_d": args.rank_d,
            "truncation_error_sq": err_sq, "tail_sum": tail,
            "identity_gap": abs(err_sq - tail),
            "factorization_dev": factor_dev,
            "identity_holds": bool(abs(err_sq - tail) < 1e-8),
        }
        print(json.dumps(report))
        return 0

    parser.error(f"unknown theory experiment {args.experiment!r}")
    return 2


def cmd_eval(args) -> int:
    model, header = load_checkpoint(args.checkpoint)
    ds = _load_split(args.data, args.format, args.split_seed)
    if (model.n_users, model.n_items) != (ds.n_users, ds.n_items):
        print(f"checkpoint shape ({model.n_users}, {model.n_items}, "
              f"d={model.d}) does not match dataset "
              f"({ds.n_users}, {ds.n_items})", file=sys.stderr)
        return 1
    report = evaluation.evaluate(model, ds, args.split, k=args.k)
    print(json.dumps({
        "split": args.split,
        "k": report.k,
        f"recall{report.k}": report.recall_at_k,
        f"ndcg{report.k}": report.ndcg_at_k,
        "users_evaluated": report.users_evaluated,
        "checkpoint_epoch": header.get("epoch"),
    }))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config_file(parser, argv)
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "theory":
            return cmd_theory(args, parser)
        if args.command == "eval":
            return cmd_eval(args)
    except ConfigError as err:
        parser.error(str(err))  # exits 2
    except (OSError, ParseError, CfSpectralError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
