"""Davis-Kahan check per seed plus log-log rate fits.

Reports how often the perturbation bound holds, the slope of median
sin-theta against E, and the slope of median excess risk against n2.

    python3 scripts/rate_audit.py --out results/audit.json
"""

import argparse
from pathlib import Path

from shared_subspace.harness.audit import run_audit
from shared_subspace.harness.config import load_config
from shared_subspace.serialize import dump_json

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "paper_linear.json")
    ap.add_argument("--out", default="results/audit.json")
    ap.add_argument("--E-grid", default="50,100,200,500,999", help="comma-separated source counts")
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    overrides = {"audit_E_grid": [int(v) for v in args.E_grid.split(",")]}
    if args.seeds:
        overrides["seeds"] = args.seeds
    cfg = load_config(args.config, overrides)
    report = run_audit(cfg, workers=args.workers)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    dump_json(report, args.out)

    dk = report["davis_kahan"]
    print(f"Davis-Kahan at E={dk['E']}: holds {dk['holds']}, violated {dk['violated']}, "
          f"not applicable {dk['not_applicable']} (median sin_theta {dk['median_sin_theta']:.4f})")
    for key, xname in (("sin_theta_vs_E", "E"), ("excess_risk_vs_n2", "n2")):
        part = report[key]
        pairs = ", ".join(f"{x}:{m:.3e}" for x, m in zip(part[xname], part["median"]))
        print(f"{key}: slope {part['slope']:.3f} (theory {part['theory_slope']}) [{pairs}]")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
