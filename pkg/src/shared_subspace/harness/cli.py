"""Command line entry point.

Subcommands: ``gen``, ``fit-source``, ``finetune``, ``sweep``, ``audit``.
Config-driven subcommands accept ``--config FILE`` plus ``--key=value``
overrides for any ExperimentConfig field; ``--seed`` aliases master_seed.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..finetune import FinetuneConfig, solve_finetune
from ..model import read_environment_csv, write_environment_csv
from ..serialize import dump_json
from ..spectral import SourceFit, fit_sources
from .audit import run_audit
from .config import FIELDS, build_config, load_config
from .output import emit_csv, emit_plot
from .sweep import make_ground_truth, make_sources, make_target, run_sweep, target_sample

log = logging.getLogger("shared_subspace")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _split_overrides(extra):
    overrides = {}
    for tok in extra:
        if not tok.startswith("--"):
            raise ConfigError(tok, "unexpected argument")
        body = tok[2:]
        if "=" not in body:
            raise ConfigError(body, "overrides must be written --key=value")
        key, value = body.split("=", 1)
        key = key.replace("-", "_")
        if key not in FIELDS:
            raise ConfigError(key, "unknown flag")
        overrides[key] = value
    return overrides


def _config(args, extra):
    overrides = _split_overrides(extra)
    if getattr(args, "seed", None) is not None:
        overrides["master_seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    return build_config({}, overrides)


def cmd_gen(args, extra):
    cfg = _config(args, extra)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gt = make_ground_truth(cfg, args.replicate)
    envs = make_sources(cfg, args.replicate, gt)
    width = max(4, len(str(cfg.E - 1)))
    for env in envs:
        write_environment_csv(env, out / f"source_{env.env_index:0{width}d}.csv")
    n2 = args.n2 if args.n2 is not None else cfg.n2_grid[0]
    target = make_target(cfg, args.replicate, gt)
    write_environment_csv(target_sample(cfg, args.replicate, target, n2, "target_train"), out / "target.csv")
    dump_json(
        {
            "config": cfg.to_dict(),
            "replicate": args.replicate,
            "singular_value_sign": "absolute value of the Gaussian draw",
            "rotation": gt.rotation,
            "source_true_params": np.array([e.true_param for e in envs]),
            "target_true_param": target.true_param,
        },
        out / "truth.json",
    )
    print(f"wrote {len(envs)} source environments and target.csv (n2={n2}) to {out}")


def cmd_fit_source(args, extra):
    if extra:
        raise ConfigError(extra[0], "unknown flag")
    data = Path(args.data)
    files = sorted(data.glob("source_*.csv")) if data.is_dir() else [data]
    if not files:
        raise FileNotFoundError(f"no source_*.csv files in {data}")
    envs = [read_environment_csv(f, env_index=i) for i, f in enumerate(files)]
    fit = fit_sources(envs, args.k, keep_params=args.include_params)
    fit.save(args.out, include_params=args.include_params)
    print(f"fit {len(envs)} environments; eigenvalues {np.array2string(fit.eigenvalues, precision=4)}")


def cmd_finetune(args, extra):
    if extra:
        raise ConfigError(extra[0], "unknown flag")
    fit = SourceFit.load(args.fit)
    target = read_environment_csv(args.target)
    if target.d != fit.d:
        raise ValueError(f"dimension mismatch: source fit has d={fit.d}, target has d={target.d}")
    if args.rule:
        cfg = FinetuneConfig(lambda_rule="paper_rule", sigma_for_rule=args.sigma, sigma_x_min_eig=args.sigma_x_min_eig)
    else:
        cfg = FinetuneConfig(lambda1=args.lambda1, lambda2=args.lambda2)
    sol = solve_finetune(target, fit.r1_hat, fit.mean_param, cfg)
    sol.save(args.out)
    print(f"lambda1={sol.lambda1_used:.6g} lambda2={sol.lambda2_used:.6g} objective={sol.objective_value:.6g}")


def cmd_sweep(args, extra):
    cfg = _config(args, extra)
    out = Path(args.out or cfg.output_path)
    rows = run_sweep(cfg, workers=args.workers)
    emit_csv(rows, out)
    print(f"wrote {len(rows)} rows to {out}")
    if args.plot:
        emit_plot(rows, "n2", args.plot_y, "method", args.plot, log_x=args.log, log_y=args.log)
        print(f"wrote plot to {args.plot}")


def cmd_audit(args, extra):
    cfg = _config(args, extra)
    report = run_audit(cfg, workers=args.workers)
    dump_json(report, args.out)
    dk = report["davis_kahan"]
    print(
        f"Davis-Kahan holds {dk['holds']}/{cfg.seeds} (n/a {dk['not_applicable']}); "
        f"sin-theta slope {report['sin_theta_vs_E']['slope']:.3f}; "
        f"excess-risk slope {report['excess_risk_vs_n2']['slope']:.3f}"
    )


def build_parser():
    parser = _Parser(prog="shared-subspace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p):
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--seed", type=int, help="alias for master_seed")
        return p

    p = with_config(sub.add_parser("gen", help="write synthetic datasets to CSV"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n2", type=int, help="target sample size (default: first of n2_grid)")
    p.add_argument("--replicate", type=int, default=0, help="seed index within the master seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit-source", help="source environments -> SourceFit JSON")
    p.add_argument("--data", required=True, help="directory of source_*.csv files, or one CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-params", action="store_true", help="store per-environment estimates")
    p.set_defaults(func=cmd_fit_source)

    p = sub.add_parser("finetune", help="SourceFit + target CSV -> FinetuneSolution JSON")
    p.add_argument("--fit", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--rule", action="store_true", help="choose both lambdas by the noise-level rule")
    p.add_argument("--sigma", type=float, default=0.0, help="noise level for --rule")
    p.add_argument("--sigma-x-min-eig", type=float, help="smallest input-covariance eigenvalue for --rule")
    p.set_defaults(func=cmd_finetune)

    p = with_config(sub.add_parser("sweep", help="config -> results CSV"))
    p.add_argument("--out", help="results CSV (default: output_path)")
    p.add_argument("--plot", help="also write an SVG of median y vs n2")
    p.add_argument("--plot-y", default="target_mse")
    p.add_argument("--log", action="store_true", help="log-log axes")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = with_config(sub.add_parser("audit", help="Davis-Kahan and rate-scaling report"))
    p.add_argument("--out", default="audit.json")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        args.func(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
