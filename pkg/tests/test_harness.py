import csv
import json
import re
from pathlib import Path

import numpy as np
import pytest

from shared_subspace.errors import ConfigError
from shared_subspace.harness.cli import main
from shared_subspace.harness.config import ExperimentConfig, build_config, load_config
from shared_subspace.harness.output import emit_csv, emit_plot, read_csv, summarise
from shared_subspace.harness.sweep import ROW_FIELDS, ResultRow, run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BENCH_CONFIG = CONFIGS / "paper_linear.json"


def small_cfg(**kw):
    base = dict(E=60, n1=20, seeds=3, n2_grid=[20, 200], methods=["joint", "ols"], test_rows=500, master_seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def row(method="joint", seed=0, n2=20, mse=1.0):
    return ResultRow(method, seed, 999, 50, n2, 10, 6, 0.01, 0.1, 0.1, mse, mse / 2, 0.02, 0.03, "true", 0.0)


@pytest.fixture(scope="module")
def bench_rows():
    cfg = load_config(BENCH_CONFIG, {"methods": "joint,ols", "n2_grid": "20,50,100,500,2000"})
    return run_sweep(cfg, workers=1)


# --- config ------------------------------------------------------------------


def test_benchmark_config_values():
    cfg = load_config(BENCH_CONFIG)
    assert (cfg.d, cfg.k, cfg.E, cfg.n1, cfg.sigma) == (10, 6, 999, 50, 0.01)
    assert max(cfg.n2_grid) == 2000
    meta = cfg.meta()
    np.testing.assert_array_equal(meta.theta_star, np.full(6, 6.0))
    np.testing.assert_array_equal(meta.lambda11, np.full(6, 0.1))
    np.testing.assert_array_equal(meta.lambda22, np.full(4, 3.0))


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"n2_grid": [20, 0]}, "n2_grid"),
        ({"seeds": 0}, "seeds"),
        ({"methods": []}, "methods"),
        ({"methods": ["joint", "lasso"]}, "methods"),
        ({"k": 11}, "k"),
    ],
)
def test_config_validation_names_key(overrides, key):
    with pytest.raises(ConfigError) as info:
        build_config(overrides)
    assert info.value.key == key
    assert key in str(info.value)


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"d": 10, "bogus": 1}))
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path)


def test_string_overrides_are_coerced():
    cfg = build_config({}, {"n2_grid": "20,50", "sigma": "0.5", "fixed_ground_truth": "true"})
    assert cfg.n2_grid == [20, 50] and cfg.sigma == 0.5 and cfg.fixed_ground_truth is True


def test_lambda_grid_labels():
    cfg = load_config(CONFIGS / "lambda_sweep.json")
    labels = [p[0] for p in cfg.lambda_points()]
    assert labels == ["l1=0;l2=rule", "l1=rule;l2=rule", "l1=100*rule;l2=rule", "l1=rule;l2=0", "l1=rule;l2=100*rule"]


# --- CSV -----------------------------------------------------------------------


def test_csv_empty_is_header_only(tmp_path):
    path = emit_csv([], tmp_path / "r.csv")
    assert path.read_bytes() == (",".join(ROW_FIELDS) + "\n").encode()


def test_csv_one_row(tmp_path):
    path = emit_csv([row(mse=0.1)], tmp_path / "r.csv")
    lines = path.read_bytes().split(b"\n")
    assert len(lines) == 3 and lines[-1] == b""
    assert b"0.10000000000000001" in lines[1]
    assert b"\r" not in path.read_bytes()


def test_csv_unwritable_path_names_path(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OSError, match="blocker"):
        emit_csv([row()], blocker / "r.csv")


def test_csv_creates_parent_dirs(tmp_path):
    assert emit_csv([row()], tmp_path / "a" / "b" / "r.csv").exists()


def test_benchmark_sweep_csv_round_trip(bench_rows, tmp_path):
    assert len(bench_rows) == 200
    path = emit_csv(bench_rows, tmp_path / "r.csv")
    text = path.read_text(encoding="utf-8")
    assert text.count("\n") == 201
    with path.open(newline="") as fh:
        parsed = list(csv.reader(fh, strict=True))
    assert parsed[0] == ROW_FIELDS and all(len(r) == len(ROW_FIELDS) for r in parsed)
    back = read_csv(path)
    assert [r.sort_key() for r in back] == sorted(r.sort_key() for r in bench_rows)
    assert all(a == b for a, b in zip(back, bench_rows))


def test_benchmark_sweep_rows_are_complete(bench_rows):
    assert {r.method for r in bench_rows} == {"joint", "ols"}
    for r in bench_rows:
        assert r.dk_holds == "true"
        assert r.target_mse > 0 and r.excess_risk >= 0
        if r.method == "ols":
            assert r.lambda1 == r.lambda2 == 0


@pytest.mark.slow
def test_joint_beats_ols_at_smallest_n2_under_seed_resampling(bench_rows):
    n2 = min(r.n2 for r in bench_rows)
    joint = {r.seed: r.target_mse for r in bench_rows if r.method == "joint" and r.n2 == n2}
    ols = {r.seed: r.target_mse for r in bench_rows if r.method == "ols" and r.n2 == n2}
    seeds = np.array(sorted(joint))
    g = np.random.default_rng(0)
    wins = 0
    for _ in range(2000):
        pick = g.choice(seeds, size=seeds.size)
        wins += np.median([joint[s] for s in pick]) <= np.median([ols[s] for s in pick])
    assert wins / 2000 >= 0.8, f"joint median <= ols median in {wins / 2000:.1%} of resamples"


# --- SVG -----------------------------------------------------------------------


def polylines(svg):
    return re.findall(r'<polyline class="series" data-group="([^"]*)" points="([^"]*)"', svg)


def test_svg_single_group_two_points(tmp_path):
    rows = [row(n2=20, mse=2.0), row(n2=50, mse=1.0)]
    svg = emit_plot(rows, "n2", "target_mse", "method", tmp_path / "p.svg").read_text()
    lines = polylines(svg)
    assert len(lines) == 1 and len(lines[0][1].split()) == 2
    assert svg.startswith("<svg") and "http" not in svg.replace('xmlns="http://www.w3.org/2000/svg"', "")


def test_svg_benchmark_series(bench_rows, tmp_path):
    svg = emit_plot(bench_rows, "n2", "target_mse", "method", tmp_path / "p.svg", log_x=True, log_y=True).read_text()
    assert sorted(g for g, _ in polylines(svg)) == ["joint", "ols"]
    assert re.findall(r'class="legend"[^>]*>([^<]*)<', svg) == ["joint", "ols"]
    for _, pts in polylines(svg):
        xs = [float(p.split(",")[0]) for p in pts.split()]
        assert xs == sorted(xs) and len(xs) == 5


def test_svg_flat_line_zero_band(tmp_path):
    rows = [row(seed=s, n2=n, mse=0.5) for s in range(3) for n in (20, 50, 100)]
    svg = emit_plot(rows, "n2", "target_mse", "method", tmp_path / "p.svg").read_text()
    (_, pts), = polylines(svg)
    assert len({p.split(",")[1] for p in pts.split()}) == 1
    band = re.search(r'<polygon class="band" points="([^"]*)"', svg).group(1).split()
    assert len({p.split(",")[1] for p in band}) == 1


def test_svg_unknown_field(tmp_path):
    with pytest.raises(ValueError, match="bogus"):
        emit_plot([row()], "n2", "bogus", "method", tmp_path / "p.svg")


def test_summarise_quartiles():
    rows = [row(seed=s, mse=float(s)) for s in range(5)]
    (x, q25, med, q75), = summarise(rows, "n2", "target_mse", "method")["joint"]
    assert (x, q25, med, q75) == (20.0, 1.0, 2.0, 3.0)


# --- sweep semantics -----------------------------------------------------------


def test_noiseless_joint_equals_ols():
    cfg = small_cfg(sigma=0.0, seeds=1, n2_grid=[10])
    rows = {r.method: r for r in run_sweep(cfg, workers=1)}
    assert rows["joint"].lambda1 == rows["joint"].lambda2 == 0
    assert rows["joint"].target_mse == rows["ols"].target_mse
    assert rows["joint"].excess_risk == rows["ols"].excess_risk


def test_rows_sorted_and_counted():
    cfg = small_cfg(methods=["ols", "joint", "reg1_only"])
    rows = run_sweep(cfg, workers=1)
    assert len(rows) == 3 * 3 * 2
    assert [r.sort_key() for r in rows] == sorted(r.sort_key() for r in rows)


def test_failed_cell_is_recorded(monkeypatch):
    import shared_subspace.harness.sweep as sweep

    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("forced")

    monkeypatch.setattr(sweep, "solve_finetune", boom)
    rows = run_sweep(small_cfg(seeds=1), workers=1)
    joint = [r for r in rows if r.method == "joint"]
    ols = [r for r in rows if r.method == "ols"]
    assert all(r.dk_holds == "error:LinAlgError" and np.isnan(r.target_mse) for r in joint)
    assert all(not np.isnan(r.target_mse) for r in ols)


@pytest.mark.property
def test_byte_identical_rerun(tmp_path):
    a = emit_csv(run_sweep(small_cfg(), workers=1), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_sweep(small_cfg(), workers=1), tmp_path / "b.csv").read_bytes()
    assert a == b


@pytest.mark.property
def test_schedule_independence(tmp_path):
    a = emit_csv(run_sweep(small_cfg(), workers=1), tmp_path / "a.csv").read_bytes()
    b = emit_csv(run_sweep(small_cfg(), workers=3), tmp_path / "b.csv").read_bytes()
    assert a == b


@pytest.mark.property
def test_seed_isolation():
    few = run_sweep(small_cfg(seeds=20, n2_grid=[20], E=30), workers=1)
    more = run_sweep(small_cfg(seeds=21, n2_grid=[20], E=30), workers=1)
    assert [r for r in more if r.seed < 20] == few
    assert len(more) - len(few) == 2


def test_master_seed_changes_results():
    a = run_sweep(small_cfg(seeds=1), workers=1)
    b = run_sweep(small_cfg(seeds=1, master_seed=6), workers=1)
    assert a[0].target_mse != b[0].target_mse


def test_fixed_ground_truth_shares_rotation():
    from shared_subspace.harness.sweep import make_ground_truth

    cfg = small_cfg(fixed_ground_truth=True)
    np.testing.assert_array_equal(make_ground_truth(cfg, 0).rotation, make_ground_truth(cfg, 1).rotation)
    cfg = small_cfg()
    assert not np.array_equal(make_ground_truth(cfg, 0).rotation, make_ground_truth(cfg, 1).rotation)


# --- CLI -----------------------------------------------------------------------


@pytest.mark.slow
def test_cli_sweep_benchmark_config(tmp_path, capsys):
    out = tmp_path / "res.csv"
    code = main(["sweep", "--config", str(BENCH_CONFIG), "--out", str(out), "--plot", str(tmp_path / "p.svg"), "--log"])
    assert code == 0
    assert len(read_csv(out)) == 4 * 20 * 7
    assert (tmp_path / "p.svg").exists()


def test_cli_bad_n2_grid(tmp_path, capsys):
    code = main(["sweep", "--config", str(BENCH_CONFIG), "--n2_grid=[20,0]", "--out", str(tmp_path / "r.csv")])
    assert code == 1
    assert "n2_grid" in capsys.readouterr().err


def test_cli_unknown_flag(tmp_path, capsys):
    code = main(["sweep", "--config", str(BENCH_CONFIG), "--n3=5"])
    assert code == 1
    assert "n3" in capsys.readouterr().err


def test_cli_malformed_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"sigma": "loud"}))
    assert main(["sweep", "--config", str(path)]) == 1
    assert "sigma" in capsys.readouterr().err


def test_cli_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    args = ["--E=30", "--n1=20", "--master_seed=3"]
    assert main(["gen", "--out", str(data), "--n2", "40", *args]) == 0
    assert len(list(data.glob("source_*.csv"))) == 30
    assert main(["fit-source", "--data", str(data), "--k", "6", "--out", str(tmp_path / "fit.json")]) == 0
    code = main(
        ["finetune", "--fit", str(tmp_path / "fit.json"), "--target", str(data / "target.csv"),
         "--out", str(tmp_path / "sol.json"), "--rule", "--sigma", "0.01"]
    )
    assert code == 0
    sol = json.loads((tmp_path / "sol.json").read_text())
    truth = json.loads((data / "truth.json").read_text())
    err = np.linalg.norm(np.array(sol["theta_hat"]) - np.array(truth["target_true_param"]))
    assert err < 0.1 and sol["lambda1_used"] > 0


def test_cli_finetune_dimension_mismatch(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen", "--out", str(data), "--E=20", "--n1=20"]) == 0
    assert main(["fit-source", "--data", str(data), "--k", "6", "--out", str(tmp_path / "fit.json")]) == 0
    small = tmp_path / "small"
    assert main(["gen", "--out", str(small), "--E=5", "--n1=20", "--d=8", "--k=4"]) == 0
    code = main(["finetune", "--fit", str(tmp_path / "fit.json"), "--target", str(small / "target.csv"),
                 "--out", str(tmp_path / "sol.json")])
    assert code == 2
    assert "dimension" in capsys.readouterr().err


def test_cli_audit(tmp_path, capsys):
    out = tmp_path / "audit.json"
    code = main(["audit", "--out", str(out), "--E=200", "--n1=20", "--seeds=3", "--audit_E_grid=[50,100,200]",
                 "--n2_grid=[20,200]", "--test_rows=500"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["davis_kahan"]["holds"] + report["davis_kahan"]["not_applicable"] == 3
    assert report["sin_theta_vs_E"]["E"] == [50, 100, 200]
