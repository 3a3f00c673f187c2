"""Penalty-strength sweep for the joint estimator.

Scales one penalty by {0, 1, 100} times the noise-level rule while the other
stays at the rule, and reports median held-out MSE per grid point.

    python3 scripts/lambda_sweep.py --out-dir results
"""

import argparse
from pathlib import Path

from shared_subspace.harness.config import load_config
from shared_subspace.harness.output import emit_csv, emit_plot, summarise
from shared_subspace.harness.sweep import run_sweep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "lambda_sweep.json")
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config, {"seeds": args.seeds} if args.seeds else None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(cfg, workers=args.workers)
    emit_csv(rows, out / "lambda_sweep.csv")
    emit_plot(rows, "n2", "target_mse", "method", out / "lambda_sweep.svg", log_x=True, log_y=True,
              title="joint estimator, penalty sweep")

    table = summarise(rows, "n2", "target_mse", "method")
    grid = [int(x) for x, *_ in next(iter(table.values()))]
    print(f"{'grid point':<28}" + "".join(f"{n:>12d}" for n in grid))
    for label, pts in table.items():
        print(f"{label:<28}" + "".join(f"{med:>12.4e}" for _, _, med, _ in pts))


if __name__ == "__main__":
    main()
