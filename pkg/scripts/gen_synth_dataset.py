#!/usr/bin/env python3
"""Regenerate the bundled synthetic interaction log at data/synth_blocks.tsv.

500 users x 500 items in 64 matched blocks (p_in=0.8, p_out=0.004, seed=0):
the community structure needs more latent directions than a collapsed
embedding table can carry, which is what the desk-scale comparisons exercise.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cfspectral import data  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "synth_blocks.tsv"


def main():
    ds = data.make_block_dataset(n_users=500, n_items=500, n_blocks=64,
                                 p_in=0.8, p_out=0.004, seed=0)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    data.write_tsv(ds, OUT)
    print(f"wrote {OUT} ({ds.n_interactions} interactions, "
          f"{ds.n_users} users x {ds.n_items} items)")


if __name__ == "__main__":
    main()
