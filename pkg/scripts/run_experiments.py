#!/usr/bin/env python3
"""Run the placement and migration studies and write one CSV per experiment.

    python3 scripts/run_experiments.py --out results/
    python3 scripts/run_experiments.py success_rate capacity --trials 50
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

from edgesim.cli import run_experiment
from edgesim.experiments import EXPERIMENTS
from edgesim.scenario import load_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", metavar="NAME", help=f"any of {', '.join(EXPERIMENTS)} (default: all)")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--trials", type=int, help="override the per-experiment default")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--scenario", type=Path)
    args = ap.parse_args()

    unknown = set(args.names) - set(EXPERIMENTS)
    if unknown:
        ap.error(f"unknown experiments {sorted(unknown)}")
    sc = load_scenario(args.scenario) if args.scenario else None
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.names or EXPERIMENTS:
        t0 = time.perf_counter()
        text = run_experiment(name, sc, args.trials, args.seed)
        path = args.out / f"{name}.csv"
        path.write_text(text)
        print(f"{name}: {path} ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
