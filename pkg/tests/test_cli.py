import csv
from importlib import resources
import io
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from xduct import calib, cli

SUBCOMMANDS = ["m2o-efficiency", "m2m-scatter", "plan", "coverage", "schedule", "fit-flux", "fit-snr",
               "fit-noise", "fit-qubit", "chain"]


def schema(name):
    return json.loads((resources.files("xduct") / "schemas" / f"{name}.json").read_text())


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv, schema_name=None):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    doc = json.loads(out)
    if schema_name:
        jsonschema.validate(doc, schema(schema_name))
    return doc


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help_exits_zero(capsys, sub):
    code, out, _ = run(capsys, sub, "--help")
    assert code == 0
    for flag in ("--out", "--format", "--seed"):
        assert flag in out


def test_top_level_help(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    for sub in SUBCOMMANDS:
        assert sub in out


def test_m2o_efficiency_0dbm(capsys):
    doc = run_json(capsys, "m2o-efficiency", "--card", "reference_device.json", "--power-dbm", "0",
                   schema_name="m2o_efficiency")
    assert doc["eta_eo"] == pytest.approx(1.3e-4, rel=0.15)


def test_m2o_power_watts(capsys):
    a = run_json(capsys, "m2o-efficiency", "--power-w", "0.01")
    b = run_json(capsys, "m2o-efficiency", "--power-dbm", "10")
    assert a["eta_eo"] == pytest.approx(b["eta_eo"], rel=1e-12)


def test_m2o_power_sweep_csv(capsys):
    code, out, _ = run(capsys, "m2o-efficiency", "--sweep-power-dbm", "-10:10:5", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["power_dbm"]) for r in rows] == [-10, -5, 0, 5, 10]
    eta = [float(r["eta_eo"]) for r in rows]
    assert eta == sorted(eta)


def test_m2o_spectrum(capsys, tmp_path):
    out = tmp_path / "spec.csv"
    code, _, _ = run(capsys, "m2o-efficiency", "--sweep", "-100e6:100e6:1e6", "--format", "csv",
                     "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["detuning_hz", "mag2"]
    assert len(rows) == 201
    doc = run_json(capsys, "m2o-efficiency", "--sweep", "-100e6:100e6:1e6", schema_name="m2o_spectrum")
    assert doc["bandwidth_3db_hz"] > 0


def test_m2m_scatter_csv(capsys):
    code, out, _ = run(capsys, "m2m-scatter", "--sweep", "-1e6:1e6:5e5", "--eps-frac", "0.5")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["omega_hz", "s_ba_mag2", "s_bb_gain_max", "s_bb_gain_min", "stable"]
    assert [float(r["omega_hz"]) for r in rows] == [-1e6, -5e5, 0, 5e5, 1e6]
    assert all(r["stable"] == "1" for r in rows)


def test_m2m_scatter_unit_cooperativity(capsys, card):
    doc = run_json(capsys, "m2m-scatter", "--format", "json", schema_name="m2m_scatter")
    assert doc["rows"][0][1] == pytest.approx((102 / 177) * (565 / 758), rel=1e-10)


def test_m2m_unstable_exit_2(capsys):
    code, _, err = run(capsys, "m2m-scatter", "--eps-frac", "1.5")
    assert code == 2


def test_m2m_pump_map_flagged(capsys):
    doc = run_json(capsys, "m2m-scatter", "--format", "json", "--pump-map-c", "1e5", "--pump-power-w", "1e-3")
    assert "uncalibrated" in doc["params"]["g_source"]


def test_plan(capsys):
    doc = run_json(capsys, "plan", "--target-hz", "7.339e9", "--comb", "comb.json", "--m2o", "m2o.json",
                   schema_name="plan")
    assert doc["feasible"]
    assert abs(doc["f_pump_conv_hz"] - 1.70e9) <= 38e6
    assert doc["f_pump_amp_hz"] == 2 * doc["f_idler_hz"]


def test_plan_negative_target(capsys):
    code, _, err = run(capsys, "plan", "--target-hz", "-1")
    assert code == 1
    assert "target" in err


def test_plan_infeasible_is_data(capsys):
    doc = run_json(capsys, "plan", "--target-hz", "7.24e9", schema_name="plan")
    assert doc["feasible"] is False
    assert doc["f_pump_conv_hz"] is None


def test_coverage(capsys):
    doc = run_json(capsys, "coverage", "--band", "5.0e9:8.5e9", schema_name="coverage")
    assert 0 < doc["fraction"] < 1
    signal_only = run_json(capsys, "coverage", "--band", "7.301e9:7.377e9", "--signal-only")
    assert abs(signal_only["fraction"] - 0.78) <= 0.03


@pytest.mark.parametrize("band", ["8e9:7e9", "nonsense", "1:2:3"])
def test_coverage_bad_band(capsys, band):
    assert run(capsys, "coverage", "--band", band)[0] == 1


def test_schedule_csv(capsys):
    code, out, _ = run(capsys, "schedule", "--kind", "qubit-readout", "--delay-us", "10")
    assert code == 0
    rows = {r["channel"]: r for r in csv.DictReader(io.StringIO(out))}
    drive_end = float(rows["qubit_drive"]["start_s"]) + float(rows["qubit_drive"]["duration_s"])
    assert float(rows["laser"]["start_s"]) - drive_end == pytest.approx(10e-6, abs=1e-15)
    run_json(capsys, "schedule", "--format", "json", schema_name="schedule")


def test_schedule_period_too_short(capsys):
    assert run(capsys, "schedule", "--period-us", "3")[0] == 1


def test_fit_flux(capsys, tmp_path):
    b = np.linspace(0, 4, 9)
    data = write_csv(tmp_path / "flux.csv", ["b_mT", "f_hz"], zip(b, 5.669e9 * (1 - 9.92e-4 * b**2)))
    curve = tmp_path / "curve.csv"
    doc = run_json(capsys, "fit-flux", "--data", data, "--curve-out", str(curve), schema_name="fit_flux")
    assert doc["k_per_mT2"] == pytest.approx(9.92e-4, rel=1e-10)
    rows = list(csv.DictReader(curve.open()))
    assert list(rows[0]) == ["b_mT", "delta_f_hz"]
    assert float(rows[-1]["delta_f_hz"]) == pytest.approx(-90e6, rel=0.01)


def test_fit_flux_missing_column(capsys, tmp_path):
    data = write_csv(tmp_path / "bad.csv", ["b", "f"], [(0, 1), (1, 2)])
    assert run(capsys, "fit-flux", "--data", data)[0] == 1


def test_missing_file(capsys, tmp_path):
    assert run(capsys, "fit-flux", "--data", str(tmp_path / "nope.csv"))[0] == 1


def test_fit_snr(capsys, tmp_path):
    g_db = np.linspace(0, 30, 16)
    g = 10 ** (g_db / 10)
    snr_db = 10 * np.log10(g * 11.4 / (0.3 * g + 10.9))
    data = write_csv(tmp_path / "snr.csv", ["gain_db", "delta_snr_db"], zip(g_db, snr_db))
    doc = run_json(capsys, "fit-snr", "--data", data, schema_name="fit_snr")
    assert doc["params"]["p"] == pytest.approx(0.30, abs=1e-6)
    assert doc["n_add_bound"]["exact"] == pytest.approx(1.375, rel=1e-6)
    assert doc["asymptote"]["db"] == pytest.approx(15.8, abs=0.05)


def test_fit_noise_quanta(capsys, tmp_path):
    n_ex = np.linspace(0, 20, 6)
    data = write_csv(tmp_path / "vts.csv", ["n_ex", "s_out"], zip(n_ex, 50 * (n_ex + 12)))
    doc = run_json(capsys, "fit-noise", "--data", data, schema_name="fit_noise")
    assert doc["params"]["gain"] == pytest.approx(50, rel=1e-9)
    assert doc["params"]["n_amp"] == pytest.approx(12, rel=1e-9)


def test_fit_noise_temperatures(capsys, tmp_path):
    from xduct.params import bose_occupancy

    temps = np.array([0.05, 0.5, 1.0, 2.0, 3.0])
    s_out = 50 * (bose_occupancy(temps, 5.669e9) + 12)
    data = write_csv(tmp_path / "vts.csv", ["temperature_k", "s_out"], zip(temps, s_out))
    doc = run_json(capsys, "fit-noise", "--data", data, "--frequency-hz", "5.669e9")
    assert doc["params"]["n_amp"] == pytest.approx(12, rel=1e-9)
    assert run(capsys, "fit-noise", "--data", data)[0] == 1


def _t1_csv(tmp_path, noise=0.0):
    t = np.linspace(0, 5 * 30.9e-6, 50)
    y = calib.exp_decay(t, 30.9e-6, 1.0, 0.0) + np.random.default_rng(0).normal(0, noise, t.size)
    return write_csv(tmp_path / "t1.csv", ["time_s", "population"], zip(t, y))


def test_fit_qubit(capsys, tmp_path):
    doc = run_json(capsys, "fit-qubit", "--kind", "t1", "--data", _t1_csv(tmp_path), schema_name="fit_qubit")
    assert doc["params"]["t1"] == pytest.approx(30.9e-6, rel=1e-8)


def test_fit_qubit_constant_trace_exit_2(capsys, tmp_path):
    data = write_csv(tmp_path / "flat.csv", ["time_s", "population"], [(i * 1e-6, 0.4) for i in range(20)])
    assert run(capsys, "fit-qubit", "--kind", "t1", "--data", data)[0] == 2


def test_bootstrap_seeded_determinism(capsys, tmp_path):
    data = _t1_csv(tmp_path, noise=0.02)
    args = ("fit-qubit", "--kind", "t1", "--data", data, "--bootstrap", "30", "--seed", "7")
    first = run(capsys, *args)[1]
    second = run(capsys, *args)[1]
    assert first == second
    doc = json.loads(first)
    jsonschema.validate(doc, schema("fit_qubit"))
    assert doc["bootstrap"]["stderr"]["t1"] == pytest.approx(doc["stderr"]["t1"], rel=0.5)


def test_chain(capsys):
    doc = run_json(capsys, "chain", "--eta-mo", "1.3e-3", "--eta-mm", "0.5", "--n-add-mm", "1.3",
                   "--n-add-mo", "3.1", schema_name="chain")
    assert doc["eta"] == pytest.approx(6.5e-4)
    assert "model extension" in doc["added_noise"]["model"]
    assert run(capsys, "chain", "--eta-mo", "1.3e-3", "--eta-mm", "0", "--n-add-mm", "1",
               "--n-add-mo", "1")[0] == 1


@pytest.mark.parametrize("sweep", ["1:0:1", "0:1:0", "0:1:-1", "a:b:c", "0:1"])
def test_bad_sweep(capsys, sweep):
    assert run(capsys, "m2m-scatter", "--sweep", sweep)[0] == 1


def test_usage_errors_exit_1(capsys):
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "plan")[0] == 1
    assert run(capsys, "plan", "--target-hz", "7e9", "-t")[0] == 1
    assert run(capsys, "m2o-efficiency", "--format", "xml")[0] == 1


def test_parse_sweep_grid():
    np.testing.assert_allclose(cli.parse_sweep("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(cli.parse_sweep("-1e6:1e6:1e6"), [-1e6, 0, 1e6])


def test_worker_count_preserves_order(capsys, monkeypatch):
    args = ("m2m-scatter", "--sweep", "-2e6:2e6:1e5", "--eps-frac", "0.3")
    monkeypatch.setenv("XDUCT_NUM_WORKERS", "1")
    serial = run(capsys, *args)[1]
    monkeypatch.setenv("XDUCT_NUM_WORKERS", "8")
    parallel = run(capsys, *args)[1]
    assert serial == parallel


def test_console_script_byte_identical(tmp_path):
    cmd = [sys.executable, "-m", "xduct.cli", "coverage", "--band", "5.0e9:8.5e9"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and a
