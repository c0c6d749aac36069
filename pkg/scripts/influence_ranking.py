#!/usr/bin/env python3
"""Rank hidden channels of a model by worst-case causal influence.

For each channel of the chosen layer, computes the maximum output deviation
achievable by zeroing that channel (exact, via branch-and-bound), then
prints the ranking.

Usage: python3 scripts/influence_ranking.py [--model fixtures/gcn_10.json]
"""

from __future__ import annotations

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from jitswt import Box, load_model, rank_channels  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default=str(ROOT / "fixtures" / "ffn_2_4_2.json"))
    ap.add_argument("--layer", type=int, default=0, help="index of the layer whose outputs get cut")
    ap.add_argument("--lo", type=float, default=-1.0)
    ap.add_argument("--hi", type=float, default=1.0)
    args = ap.parse_args()

    model = load_model(pathlib.Path(args.model).read_text())
    n = model.input_dim
    domain = Box((args.lo,) * n, (args.hi,) * n)

    ranking = rank_channels(model, args.layer, domain)
    print(f"{'rank':<6}{'channel':>8}{'influence':>14}")
    for pos, (channel, value) in enumerate(ranking, start=1):
        print(f"{pos:<6}{channel:>8}{value:>14.6f}")


if __name__ == "__main__":
    main()
