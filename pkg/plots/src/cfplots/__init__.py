"""Render cfspectral run artifacts into figures.

This package reads only the engine's documented on-disk formats and never
imports the engine itself:

* ``metrics.jsonl`` - one JSON object per epoch with at least ``epoch`` and
  ``srank_user`` fields (stable-rank trajectory plots);
* angle-trace CSVs with ``step`` and ``mean_rho_deg`` columns (gradient-angle
  plots, optionally several seeds for a spread band);
* ``summary.json`` files with ``test_ndcg20`` and ``total_wall_seconds``
  (quality-vs-runtime scatter).

Output format (PNG or SVG) is selected by the output file extension.
"""

from .render import (InputError, plot_ablation, plot_angles,
                     plot_trajectories)

__all__ = ["InputError", "plot_trajectories", "plot_angles", "plot_ablation"]
__version__ = "0.1.0"
