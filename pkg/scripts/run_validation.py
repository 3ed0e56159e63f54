#!/usr/bin/env python3
"""Simulate every validation case against its closed form and write the comparison CSV."""
from __future__ import annotations

import argparse
from dataclasses import replace
from pathlib import Path

from edgesim import experiments as ex


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results/validation.csv"))
    ap.add_argument("--arrivals", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=100)
    args = ap.parse_args()

    runs = [(c, (0.3, 0.5, 0.7, 0.9)) for c in ex.STANDARD_CASES]
    for c in ex.GPU_CASES:
        for d in ("gpu", "gpu_sequential", "gpu_synchronized"):
            runs.append((replace(c, discipline=d, name=f"{c.name}_{d}"), (0.3, 0.5, 0.7)))
    rows = []
    for i, (case, rhos) in enumerate(runs):
        got = ex.validate_case(case, rhos, args.seed + 10 * i, args.arrivals)
        worst = max(r["rel_err"] for r in got)
        print(f"{case.name:28s} worst rel_err {worst:.3%}", flush=True)
        rows += got
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(ex.rows_to_csv(rows, ex.VALIDATE_COLUMNS))


if __name__ == "__main__":
    main()
