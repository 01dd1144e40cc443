import json

import numpy as np
import pandas as pd
import pytest

from mtebounds.cli import run


@pytest.fixture(scope="module")
def design_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "h.csv"
    assert run(["simulate", "--n", "3000", "--seed", "5", "--out", str(path)]) == 0
    return path


def test_check_counterexample_b(capsys):
    assert run(["check", "--counterexample", "b"]) == 0
    printed = float(capsys.readouterr().out.strip())
    assert printed == pytest.approx(-1 / 60, abs=1e-12)
    assert str(printed).startswith("-0.01666")


def test_check_counterexample_c(capsys, tmp_path):
    assert run(["check", "--counterexample", "c", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.split() == ["1.0", "0.5"]
    saved = json.loads((tmp_path / "check.json").read_text())
    assert saved["index_sufficiency_violated"] is True
    assert (tmp_path / "manifest.json").exists()


def test_true_and_observed_curves_coincide_without_error(tmp_path):
    data = tmp_path / "r1.csv"
    assert run(["simulate", "--dgp", "threshold", "--r", "1.0", "--n", "1000", "--seed", "7", "--out", str(data)]) == 0
    out = tmp_path / "est"
    assert run(["estimate", "--data", str(data), "--d-col", "d", "--out", str(out)]) == 0
    curves = pd.read_csv(out / "curves.csv")
    assert len(curves) == 3 * 19
    assert np.array_equal(curves.f_hat.to_numpy(), curves.theta_hat.to_numpy())


def test_band_width_column(design_csv, tmp_path):
    assert run(["bounds", "--data", str(design_csv), "--c", "1.2", "--grid-quantiles", "19", "--out", str(tmp_path)]) == 0
    band = pd.read_csv(tmp_path / "bounds.csv")
    est = tmp_path / "est"
    run(["estimate", "--data", str(design_csv), "--out", str(est)])
    f_hat = pd.read_csv(est / "curves.csv").f_hat.to_numpy()
    expected = (1.44 - 1) / 1.2 * np.abs(f_hat)
    np.testing.assert_allclose(band.width.to_numpy(), expected, rtol=1e-12)
    np.testing.assert_allclose(band.upper - band.lower, expected, rtol=1e-12)


def test_bounds_extras(design_csv, tmp_path, capsys):
    argv = ["bounds", "--data", str(design_csv), "--d-col", "d", "--c", "1.1,1.15", "--theta2", "--te", "ATE",
            "--group", "1", "--effect-range", "-1", "1", "--out", str(tmp_path)]
    assert run(argv) == 0
    band = pd.read_csv(tmp_path / "bounds.csv")
    assert {"theta_hat", "theta2_lower", "theta2_upper"} <= set(band.columns)
    assert len(band) == 2 * 3 * 19
    # the scaled-family envelope sits inside the outer band
    assert np.all(band.theta2_lower >= band.lower - 1e-12)
    assert np.all(band.theta2_upper <= band.upper + 1e-12)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["te_bounds"]) == 2
    assert "max_plausible_c" in summary


def test_bootstrap_output(design_csv, tmp_path):
    argv = ["bounds", "--data", str(design_csv), "--c", "1.2", "--boot", "20", "--grid-quantiles", "3", "--out", str(tmp_path)]
    assert run(argv) == 0
    boot = pd.read_csv(tmp_path / "bootstrap.csv")
    assert set(boot.curve) == {"f_hat", "lower", "upper"}
    assert len(boot) == 3 * 3 * 3


def test_late_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 4000
    z = rng.integers(0, 2, size=n)
    t = (rng.uniform(size=n) < 0.3 + 0.4 * z).astype(int)
    y = 0.5 * t + rng.normal(size=n)
    pd.DataFrame({"y": y, "t": t, "z": z, "x": 0}).to_csv(tmp_path / "b.csv", index=False)
    assert run(["late", "--data", str(tmp_path / "b.csv"), "--c", "1.25", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "late.json").read_text())
    wald = report["wald"]
    lo, hi = sorted([wald / 1.25, wald * 1.25])
    np.testing.assert_allclose(report["band"], [lo, hi], rtol=1e-12)


@pytest.mark.parametrize("argv", [
    ["estimate", "--bogus"],
    ["frobnicate"],
    [],
    ["bounds", "--data", "{data}", "--c", "0.9", "--out", "{out}"],
    ["bounds", "--data", "{data}", "--c", "abc", "--out", "{out}"],
    ["estimate", "--data", "{missing}", "--out", "{out}"],
    ["estimate", "--data", "{data}", "--z-col", "nope", "--out", "{out}"],
])
def test_validation_exit_code(argv, design_csv, tmp_path, capsys):
    argv = [a.format(data=design_csv, missing=tmp_path / "none.csv", out=tmp_path) for a in argv]
    assert run(argv) == 2


def test_numerical_failure_exit_code(tmp_path, capsys):
    n = 50
    z = np.linspace(0, 1, n)
    pd.DataFrame({"y": z, "t": 1, "z": z, "x": 0}).to_csv(tmp_path / "flat.csv", index=False)
    assert run(["estimate", "--data", str(tmp_path / "flat.csv"), "--trim", "none", "--out", str(tmp_path)]) == 3
    assert "error:" in capsys.readouterr().err


def test_rejection_exit_code(design_csv, tmp_path, capsys):
    flipped = pd.read_csv(design_csv)
    flipped["y"] = -flipped["y"]
    other = tmp_path / "flipped.csv"
    flipped.to_csv(other, index=False)
    argv = ["bounds", "--data", str(design_csv), "--c", "1.05", "--also", str(other), "--out", str(tmp_path)]
    assert run(argv) == 4
    assert json.loads((tmp_path / "rejection.json").read_text())["rejected"] is True
    # intersecting with itself leaves the band unchanged
    out2 = tmp_path / "same"
    assert run(argv[:5] + ["--also", str(design_csv), "--out", str(out2)]) == 0
    inter = pd.read_csv(out2 / "intersection.csv")
    band = pd.read_csv(out2 / "bounds.csv")
    np.testing.assert_array_equal(inter.lower, band.lower)


def test_manifest_contents(design_csv, tmp_path):
    run(["estimate", "--data", str(design_csv), "--out", str(tmp_path)])
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["subcommand"] == "estimate"
    assert man["input"]["rows"] == 3000 or man["input"]["steps"][0]["rows_in"] == 3000
    assert man["options"]["degree_ps"] == 2 and "version" in man


def outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_repeat_runs_are_byte_identical(design_csv, tmp_path):
    argv = ["bounds", "--data", str(design_csv), "--c", "1.2", "--theta2", "--boot", "10", "--seed", "3",
            "--grid-quantiles", "5", "--out", str(tmp_path)]
    assert run(argv) == 0
    first = outputs(tmp_path)
    assert run(argv) == 0
    assert outputs(tmp_path) == first
    assert set(first) == {"bounds.csv", "bootstrap.csv", "manifest.json"}


def test_mc_independent_of_workers(tmp_path):
    base = ["mc", "--reps", "12", "--n", "800", "--seed", "9", "--out", str(tmp_path)]
    assert run(base + ["--workers", "1"]) == 0
    serial = outputs(tmp_path)
    assert run(base + ["--workers", "2"]) == 0
    assert outputs(tmp_path) == serial
