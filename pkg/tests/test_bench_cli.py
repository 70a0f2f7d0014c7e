import json
import os

import numpy as np
import pytest

from amisde.bench import (
    CSV_HEADER,
    ExperimentConfig,
    counterexample_densities,
    fit_late_slope,
    run_counterexample,
    run_experiment,
    run_timing,
    write_rows,
)
from amisde.cli import main
from amisde.errors import ConfigurationError


def tiny_config(tmp_path, **overrides):
    raw = {
        "experiment": "smoke",
        "problem": {"kind": "example71", "dim": 2, "target": [1.0, 1.0], "num_steps": 10},
        "scheme": {"kind": "discard_optimized"},
        "adaptation": {"kind": "path_integral", "basis": {"kind": "constant"}},
        "schedule": {"iterations": 4, "batch_size": 3},
        "seeds": {"base": 0, "count": 3},
    }
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return str(path)


def read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


def test_csv_header_is_frozen():
    assert CSV_HEADER == (
        "experiment,scheme,run,iteration,total_samples,psi_hat,ess_hat,j_hat,"
        "adapt_ns,generate_ns,reweight_ns"
    )


def test_cmd_run_writes_csv(tmp_path):
    cfg = tiny_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    lines = read_lines(out / "smoke.csv")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 3 * 4  # runs x iterations


def test_reruns_reproduce_estimate_columns_byte_identically(tmp_path):
    cfg = tiny_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--out", str(out2)]) == 0

    def estimate_cols(path):
        rows = []
        for line in read_lines(path)[1:]:
            parts = line.split(",")
            rows.append(",".join(parts[:8]))  # all but the *_ns columns
        return rows

    assert estimate_cols(out1 / "smoke.csv") == estimate_cols(out2 / "smoke.csv")


def test_unknown_config_key_rejected(tmp_path):
    cfg = tiny_config(tmp_path, typo_key=1)
    assert main(["run", "--config", cfg]) == 2


def test_unknown_nested_key_rejected(tmp_path):
    cfg = tiny_config(tmp_path, scheme={"kind": "flat", "alpha": 2})
    assert main(["run", "--config", cfg]) == 2


def test_invalid_json_rejected(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == 2


def test_missing_config_file_rejected(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_seeds_list_matches_num_runs(tmp_path):
    cfg = ExperimentConfig.from_json_file(tiny_config(tmp_path))
    assert cfg.num_runs == len(cfg.seeds) == 3


def test_seed_override_flags(tmp_path):
    cfg = tiny_config(tmp_path)
    out = tmp_path / "c"
    assert main(["run", "--config", cfg, "--out", str(out), "--seeds", "5,6"]) == 0
    lines = read_lines(out / "smoke.csv")
    assert len(lines) == 1 + 2 * 4


def test_nonmixing_ess_never_exceeds_batch_size(tmp_path):
    cfg = tiny_config(
        tmp_path,
        scheme={"kind": "nonmixing"},
        schedule={"iterations": 6, "batch_size": 7},
    )
    config = ExperimentConfig.from_json_file(cfg)
    rows, _ = run_experiment(config)
    assert all(row.ess_hat <= 7 + 1e-9 for row in rows)
    assert all(1.0 - 1e-9 <= row.ess_hat for row in rows)


def test_threaded_runs_reproduce_sequential_rows(tmp_path):
    config = ExperimentConfig.from_json_file(tiny_config(tmp_path))
    rows1, _ = run_experiment(config, threads=1)
    rows2, _ = run_experiment(config, threads=2)
    strip = lambda r: ",".join(r.to_csv().split(",")[:8])
    assert [strip(r) for r in rows1] == [strip(r) for r in rows2]


def test_flat_single_iteration_recovers_psi():
    config = ExperimentConfig.from_dict(
        {
            "experiment": "flat_k1",
            "problem": {"kind": "example71"},
            "scheme": {"kind": "flat"},
            "adaptation": {"kind": "none"},
            "schedule": {"iterations": 1, "batch_size": 2000},
            "seeds": {"base": 0, "count": 20},
            "retain_paths": False,
        }
    )
    rows, _ = run_experiment(config)
    assert len(rows) == 20
    from amisde import gaussian_target_psi

    psi = gaussian_target_psi()
    estimates = np.array([r.psi_hat for r in rows])
    se = estimates.std(ddof=1) / np.sqrt(len(estimates))
    assert abs(estimates.mean() - psi) < 3 * se


def test_fit_late_slope_on_linear_curve():
    totals = np.arange(1, 101)
    curve = 0.37 * totals + 4.0
    assert fit_late_slope(totals, curve) == pytest.approx(0.37, rel=1e-9)


def test_counterexample_outputs(tmp_path):
    summary = run_counterexample(str(tmp_path), runs=8, iterations=30)
    assert 0.0 <= summary["fraction_below"] <= 1.0
    assert summary["psi_reference"] == pytest.approx(1 / np.sqrt(2), rel=1e-12)
    lines = read_lines(tmp_path / "counterexample.csv")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + 8 * 30
    dens = read_lines(tmp_path / "counterexample_densities.csv")
    assert dens[0] == "u,x,hq_over_pu,pu,hq"
    with open(tmp_path / "counterexample_summary.json") as fh:
        assert json.load(fh)["fraction_below"] == summary["fraction_below"]


def test_counterexample_density_closed_forms():
    rows = counterexample_densities(us=(0.0,), lo=-2.0, hi=2.0, n=11)
    for u, x, hq_over_pu, pu, hq in rows:
        # at u = 0 the ratio curve coincides with h q pointwise
        assert hq_over_pu * pu == pytest.approx(hq, rel=1e-12)
        assert hq_over_pu == pytest.approx(np.exp(-0.5 * x * x), rel=1e-12)


def test_counterexample_density_area_is_psi():
    rows = counterexample_densities(us=(1.0,), lo=-8.0, hi=8.0, n=4001)
    x = np.array([r[1] for r in rows])
    hq = np.array([r[4] for r in rows])
    area = np.trapezoid(hq, x)
    assert area == pytest.approx(1 / np.sqrt(2), abs=1e-6)


def test_fig2_flat_variant_behind_flag(tmp_path):
    from amisde.bench import run_fig2

    summary = run_fig2(str(tmp_path), runs=2, iterations=10, include_flat=True)
    assert "flat" in summary["schemes"]
    default = run_fig2(str(tmp_path / "d"), runs=2, iterations=10)
    assert "flat" not in default["schemes"]


def test_timing_structure_fast(tmp_path):
    payload = run_timing(str(tmp_path), runs=1)
    assert set(payload["seconds"]) == {"balance", "discard_optimized"}
    for cells in payload["seconds"].values():
        assert set(cells) == {"10", "25", "50", "100", "200"}
        assert all(v > 0 for v in cells.values())
    assert all(all(v) for v in (payload["psi_finite"]["balance"].values(),))


def test_forced_constant_adaptation_config(tmp_path):
    cfg = tiny_config(
        tmp_path,
        adaptation={"kind": "forced_constant", "values": [[0.5, 0.5]]},
        scheme={"kind": "flat"},
    )
    config = ExperimentConfig.from_json_file(cfg)
    rows, _ = run_experiment(config)
    assert len(rows) == 12
    assert all(np.isfinite(r.psi_hat) for r in rows)


def test_write_rows_golden_format(tmp_path):
    config = ExperimentConfig.from_json_file(tiny_config(tmp_path))
    rows, _ = run_experiment(config)
    out = tmp_path / "golden.csv"
    write_rows(str(out), rows)
    lines = read_lines(out)
    assert lines[0] == CSV_HEADER
    first = lines[1].split(",")
    assert first[0] == "smoke"
    assert first[1] == "discard_optimized"
    assert first[2] == "0" and first[3] == "1"
    float(first[5]), float(first[6]), float(first[7])
    int(first[8]), int(first[9]), int(first[10])
