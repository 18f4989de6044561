"""cfplots command line: render engine artifacts into image files.

Exit codes: 0 success, 1 bad input (message names the offending file and
field or line), 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from .render import InputError, plot_ablation, plot_angles, plot_trajectories


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfplots", description="Render cfspectral run artifacts")
    sub = parser.add_subparsers(dest="command", required=True)

    p_traj = sub.add_parser("trajectories",
                            help="stable-rank curves from metrics.jsonl files")
    p_traj.add_argument("--out", required=True,
                        help="output image (.png or .svg)")
    p_traj.add_argument("inputs", nargs="+", help="metrics.jsonl files")

    p_ang = sub.add_parser("angles",
                           help="gradient-angle curves from trace CSVs")
    p_ang.add_argument("--out", required=True)
    p_ang.add_argument("inputs", nargs="+", help="angle trace CSVs")

    p_abl = sub.add_parser("ablation",
                           help="NDCG-vs-runtime scatter from summary.json files")
    p_abl.add_argument("--out", required=True)
    p_abl.add_argument("inputs", nargs="+", help="summary.json files")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    renderers = {
        "trajectories": plot_trajectories,
        "angles": plot_angles,
        "ablation": plot_ablation,
    }
    try:
        renderers[args.command](args.inputs, args.out)
    except (InputError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
