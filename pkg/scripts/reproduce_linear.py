"""Few-shot curves for the linear synthetic benchmark.

Runs every method over the n2 grid, writes the results CSV and two log-log
SVG charts (held-out MSE and excess risk), and prints the median table.

    python3 scripts/reproduce_linear.py --out-dir results
"""

import argparse
from pathlib import Path

import numpy as np

from shared_subspace.harness.config import load_config
from shared_subspace.harness.output import emit_csv, emit_plot, summarise
from shared_subspace.harness.sweep import run_sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "paper_linear.json")
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--seeds", type=int, help="override the seed count")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    overrides = {"seeds": args.seeds} if args.seeds else None
    cfg = load_config(args.config, overrides)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(cfg, workers=args.workers)
    emit_csv(rows, out / "linear.csv")
    for field in ("target_mse", "excess_risk"):
        emit_plot(rows, "n2", field, "method", out / f"linear_{field}.svg", log_x=True, log_y=True,
                  title=f"{field} vs n2 ({cfg.seeds} seeds)")

    table = summarise(rows, "n2", "target_mse", "method")
    grid = [int(x) for x, *_ in next(iter(table.values()))]
    print("median target_mse")
    print(f"{'method':<12}" + "".join(f"{n:>12d}" for n in grid))
    for method, pts in table.items():
        print(f"{method:<12}" + "".join(f"{med:>12.4e}" for _, _, med, _ in pts))
    ols = {x: med for x, _, med, _ in table["ols"]} if "ols" in table else None
    if ols:
        print("\nrelative to ols (negative = better)")
        for method, pts in table.items():
            print(f"{method:<12}" + "".join(f"{med / ols[x] - 1:>12.2%}" for x, _, med, _ in pts))
    print(f"\nwrote {out / 'linear.csv'} ({len(rows)} rows), median sin_theta "
          f"{np.median([r.sin_theta for r in rows]):.4f}")


if __name__ == "__main__":
    main()
