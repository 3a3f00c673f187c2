"""End-to-end acceptance criteria.

Each criterion prints one ``CRITERION n: PASS|FAIL`` line with the measured
quantities, then asserts. Run standalone with ``python3 tests/test_acceptance.py``
or through pytest with ``pytest tests/test_acceptance.py -s``.
"""

import functools
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import conjugate_gradient_minimiser  # noqa: E402
from shared_subspace.errors import SingularSystemError  # noqa: E402
from shared_subspace.finetune import FinetuneConfig, finetune_objective, solve_finetune  # noqa: E402
from shared_subspace.harness.audit import run_audit  # noqa: E402
from shared_subspace.harness.config import load_config  # noqa: E402
from shared_subspace.harness.sweep import run_sweep  # noqa: E402
from shared_subspace.model import (  # noqa: E402
    EnvironmentDataset,
    MetaDistribution,
    generate_environment,
    haar_orthogonal,
    sample_ground_truth,
)
from shared_subspace.spectral import fit_sources  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
BENCH_CONFIG = ROOT / "configs" / "paper_linear.json"
LAMBDA_CONFIG = ROOT / "configs" / "lambda_sweep.json"
N2_GRID = [20, 50, 100, 200, 500, 1000, 2000]

pytestmark = [pytest.mark.slow, pytest.mark.acceptance]


def _line(n, ok, detail):
    return f"CRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}"


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _medians(rows, method):
    by_n2 = {}
    for r in rows:
        if r.method == method:
            by_n2.setdefault(r.n2, []).append(r.target_mse)
    return {n2: float(np.median(v)) for n2, v in sorted(by_n2.items())}


def _inversions(values):
    return sum(b > a for a, b in zip(values, values[1:]))


@functools.lru_cache(maxsize=None)
def bench_sweep():
    cfg = load_config(BENCH_CONFIG)
    return _timed(lambda: run_sweep(cfg))


@functools.lru_cache(maxsize=None)
def lambda_sweep():
    cfg = load_config(LAMBDA_CONFIG)
    return _timed(lambda: run_sweep(cfg))


@functools.lru_cache(maxsize=None)
def bench_audit():
    cfg = load_config(BENCH_CONFIG, {"audit_E_grid": [50, 200, 999]})
    return _timed(lambda: run_audit(cfg))


# --- criteria ----------------------------------------------------------------


def criterion_1():
    """Closed form vs. an iterative minimiser on 100 random instances."""
    g = np.random.default_rng(20240601)
    lams = [0.0, 1e-4, 1.0, 1e4]
    d, k = 10, 6
    t0 = time.perf_counter()
    worst_grad = worst_obj = 0.0
    errors_as_specified = 0
    checked = 0
    while checked < 100:
        n2 = int(g.choice([5, 40, 2000]))
        l1, l2 = float(g.choice(lams)), float(g.choice(lams))
        X = g.standard_normal((n2, d))
        y = X @ g.standard_normal(d) * 3 + 0.1 * g.standard_normal(n2)
        target = EnvironmentDataset(X, y)
        r1 = haar_orthogonal(d, k, g)
        mean = 6 * g.standard_normal(d)
        if l1 == l2 == 0 and n2 < d:
            # unpenalised and underdetermined: must raise instead of guessing
            try:
                solve_finetune(target, r1, mean, FinetuneConfig(l1, l2))
            except SingularSystemError:
                errors_as_specified += 1
                continue
            return False, "unpenalised underdetermined instance did not raise", 0.0
        sol = solve_finetune(target, r1, mean, FinetuneConfig(l1, l2))
        ref = conjugate_gradient_minimiser(target, r1, mean, l1, l2)
        worst_grad = max(worst_grad, sol.gradient_norm)
        worst_obj = max(worst_obj, abs(sol.objective_value - finetune_objective(ref, target, r1, mean, l1, l2)))
        checked += 1
    runtime = time.perf_counter() - t0
    ok = worst_grad <= 1e-6 and worst_obj <= 1e-8 and runtime < 10
    detail = (
        f"100 instances, max grad norm {worst_grad:.2e} (<=1e-6), max |obj - CG obj| {worst_obj:.2e} (<=1e-8), "
        f"{errors_as_specified} singular draws raised as required, {runtime:.1f}s (<10s)"
    )
    return ok, detail


def criterion_2():
    """Noiseless sources give exact per-environment estimates."""
    worst_rel = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for l11, l22 in [(0.1, 3.0), (0.0, 0.0)]:
            meta = MetaDistribution.isotropic(10, 6, 6.0, l11, l22, 0.0)
            gt = sample_ground_truth(meta, np.random.default_rng(11))
            g = np.random.default_rng(12)
            envs = [generate_environment(gt, 10 + 10 * (e % 5), e, g) for e in range(50)]
            fit = fit_sources(envs, 6)
            truth = np.array([e.true_param for e in envs])
            rel = np.linalg.norm(fit.per_env_params - truth, axis=1) / np.linalg.norm(truth, axis=1)
            worst_rel = max(worst_rel, float(rel.max()))
    scale = float(np.linalg.norm(truth, axis=1).max() ** 2)
    cov_norm = float(np.linalg.norm(fit.sample_cov, 2))
    ok = worst_rel <= 1e-10 and cov_norm <= 1e-18 * scale
    detail = (
        f"max relative estimate error {worst_rel:.2e} (<=1e-10, n1 in 10..50); "
        f"zero-variance ||Sigma_hat|| {cov_norm:.2e} (<= {1e-18 * scale:.2e})"
    )
    return ok, detail


def criterion_3():
    """Subspace recovery, Davis-Kahan, and the sin-theta rate in E."""
    report, runtime = bench_audit()
    dk = report["davis_kahan"]
    st = report["sin_theta_vs_E"]
    med = st["median"]
    decreasing = all(b < a for a, b in zip(med, med[1:]))
    ok = (
        dk["median_sin_theta"] <= 0.15
        and dk["holds"] == 20
        and decreasing
        and -0.9 <= st["slope"] <= -0.25
        and runtime < 120
    )
    detail = (
        f"median sin_theta {dk['median_sin_theta']:.4f} (<=0.15), DK holds {dk['holds']}/20, "
        f"median sin_theta at E={st['E']}: {[f'{m:.4f}' for m in med]}, slope {st['slope']:.3f} in [-0.9,-0.25], "
        f"audit {runtime:.1f}s (<120s)"
    )
    return ok, detail


def criterion_4():
    """Ordinal reproduction of the few-shot curves."""
    rows, runtime = bench_sweep()
    meds = {m: _medians(rows, m) for m in ("joint", "reg1_only", "reg2_only", "ols")}
    inv = {m: _inversions([v[n] for n in N2_GRID]) for m, v in meds.items()}
    a = all(i <= 1 for i in inv.values())
    b = all(meds["joint"][n] <= meds["ols"][n] for n in (20, 50))
    gap = abs(meds["joint"][2000] - meds["ols"][2000]) / meds["ols"][2000]
    c = gap <= 0.10
    ok = a and b and c and runtime < 180
    detail = (
        f"(a) inversions {inv} (<=1 each): {'ok' if a else 'no'}; "
        f"(b) joint vs ols median at n2=20: {meds['joint'][20]:.5e} vs {meds['ols'][20]:.5e}, "
        f"n2=50: {meds['joint'][50]:.5e} vs {meds['ols'][50]:.5e}: {'ok' if b else 'no'}; "
        f"(c) n2=2000 relative gap {gap:.2%} (<=10%): {'ok' if c else 'no'}; sweep {runtime:.1f}s (<180s)"
    )
    return ok, detail


def criterion_5():
    """Both zero and oversized penalties hurt in the expected regime."""
    rows, runtime = lambda_sweep()
    m = {label: _medians(rows, f"joint[{label}]") for label in (
        "l1=0;l2=rule", "l1=rule;l2=rule", "l1=100*rule;l2=rule", "l1=rule;l2=0", "l1=rule;l2=100*rule")}
    rule = m["l1=rule;l2=rule"]
    checks = {
        "l1=0 @20": m["l1=0;l2=rule"][20] >= rule[20],
        "l1=100*rule @2000": m["l1=100*rule;l2=rule"][2000] >= rule[2000],
        "l2=0 @20": m["l1=rule;l2=0"][20] >= rule[20],
        "l2=100*rule @2000": m["l1=rule;l2=100*rule"][2000] >= rule[2000],
    }
    ok = all(checks.values()) and runtime < 120
    detail = (
        f"rule median @20 {rule[20]:.5e}, @2000 {rule[2000]:.5e}; "
        f"l1=0 @20 {m['l1=0;l2=rule'][20]:.5e}, l2=0 @20 {m['l1=rule;l2=0'][20]:.5e}, "
        f"l1=100*rule @2000 {m['l1=100*rule;l2=rule'][2000]:.5e}, l2=100*rule @2000 {m['l1=rule;l2=100*rule'][2000]:.5e}; "
        f"checks {checks}; sweep {runtime:.1f}s (<120s)"
    )
    return ok, detail


def criterion_6():
    """Excess risk of the rule-regularised estimator decays like 1/n2."""
    report, runtime = bench_audit()
    er = report["excess_risk_vs_n2"]
    ok = -1.3 <= er["slope"] <= -0.7 and runtime < 180
    detail = (
        f"median excess risk {[f'{v:.3e}' for v in er['median']]} over n2={er['n2']}, "
        f"log-log slope {er['slope']:.3f} in [-1.3,-0.7]; audit {runtime:.1f}s (<180s)"
    )
    return ok, detail


def criterion_7():
    """All property-marked invariant tests pass."""
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-m", "property", "-q", "-p", "no:cacheprovider", str(ROOT / "tests")],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    runtime = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and runtime < 120
    return ok, f"property suite: {summary}; {runtime:.1f}s (<120s)"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7]


@pytest.mark.parametrize("n", range(1, 8))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n - 1]()
    _report(capsys, n, ok, detail)


if __name__ == "__main__":
    failed = 0
    for i, fn in enumerate(CRITERIA, start=1):
        ok, detail = fn()
        failed += not ok
        print(_line(i, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
