import csv
import json
import math
import os

import numpy as np
import pytest

from lossy_cavity import SystemParams, compute_omega
from lossy_cavity.cli import ScenarioConfig, main, read_config_file, sweep_tau


def read_table(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main([*args, "--out-dir", str(out)])
    return code, out


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_analytic_base_case(tmp_path):
    code, out = run(tmp_path, "analytic", "--horizon", "15")
    assert code == 0
    pops = read_table(out / "populations.csv")
    cum = read_table(out / "cumulative.csv")
    assert set(pops) == {"kt", "p_a", "p_b", "p_c"}
    for col in ("p_ext", "p_abs", "p_spo"):
        assert np.all(np.diff(cum[col]) >= 0)
        assert np.all((cum[col] >= 0) & (cum[col] <= 1))
    s = summary(out)
    assert abs(cum["p_ext"][-1] - s["p_ext_inf"]) < 1e-4
    assert s["budget_total"] == pytest.approx(1.0, abs=1e-6)


def test_analytic_header_echoes_config(tmp_path):
    _, out = run(tmp_path, "analytic", "--gamma-over-kappa", "0.25")
    text = (out / "populations.csv").read_bytes()
    assert b"\r\n" not in text
    head = [ln for ln in text.decode().splitlines() if ln.startswith("#")]
    assert any("gamma_over_kappa" in ln and "0.25" in ln for ln in head)


def test_analytic_uncoupled(tmp_path):
    code, out = run(tmp_path, "analytic", "--two-g-over-kappa", "0")
    assert code == 0
    pops = read_table(out / "populations.csv")
    cum = read_table(out / "cumulative.csv")
    assert np.all(pops["p_b"] == 0.0) and np.all(cum["p_ext"] == 0.0)


def test_analytic_truncated(tmp_path):
    code, out = run(tmp_path, "analytic", "--mode", "truncated", "--tau", "half-rabi")
    assert code == 0
    tr = read_table(out / "truncated.csv")
    assert summary(out)["p_ext_inf"] == pytest.approx(0.8314355368262331, abs=1e-10)
    assert tr["p_ext_bar"][-1] == pytest.approx(0.8314355368262331, abs=1e-4)


def test_bad_config_names_field(tmp_path, capsys):
    code, _ = run(tmp_path, "analytic", "--horizon", "-1")
    assert code == 1
    assert "horizon" in capsys.readouterr().err
    code, _ = run(tmp_path, "analytic", "--kappa1-over-kappa", "nan")
    assert code == 1
    assert "kappa1_over_kappa" in capsys.readouterr().err


def test_trajectories_need_seed_and_n(tmp_path):
    assert run(tmp_path, "trajectories", "--n", "10")[0] == 1
    assert run(tmp_path, "trajectories", "--seed", "1")[0] == 1
    assert run(tmp_path, "trajectories", "--n", "0", "--seed", "1")[0] == 1


def test_trajectories_rerun_identical(tmp_path):
    args = ("trajectories", "--n", "3000", "--seed", "42", "--grid-points", "200")
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, "--threads", "4", name="b")
    for f in ("ensemble.csv", "clicks.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_single_trajectory_run(tmp_path):
    code, out = run(tmp_path, "trajectories", "--n", "1", "--seed", "3")
    assert code == 0
    ens = read_table(out / "ensemble.csv")
    assert np.all(np.isin(ens["p_c"], [0.0, 1.0]))
    assert summary(out)["n_trajectories"] == 1


def test_clicks_table(tmp_path):
    _, out = run(tmp_path, "trajectories", "--n", "5000", "--seed", "8", "--detector-t", "0.5")
    clicks = read_table(out / "clicks.csv")
    assert np.allclose(clicks["kt_hi"] - clicks["kt_lo"], 0.5)
    total = clicks["n_ext"].sum() + clicks["n_abs"].sum() + clicks["n_spo"].sum()
    counts = summary(out)["channel_counts"]
    assert total == counts["extraction"] + counts["absorption"] + counts["spontaneous"]


def test_oracle_base_case(tmp_path):
    code, out = run(tmp_path, "oracle")
    assert code == 0
    table = read_table(out / "oracle_vs_analytic.csv")
    assert np.max(table["max_abs_dev"]) < 1e-8
    assert np.max(table["trace_drift"]) < 1e-12


def test_oracle_trivial_exponentials(tmp_path):
    code, out = run(tmp_path, "oracle", "--two-g-over-kappa", "0", "--gamma-over-kappa", "0")
    assert code == 0
    assert summary(out)["max_abs_dev"] < 1e-14


def test_oracle_coarse_step_order(tmp_path):
    h = 1 / (20 * SystemParams.from_ratios(10, 0.1, 0.9, 0.5).max_rate)
    devs = []
    for i, step in enumerate((h, h / 2)):
        run(tmp_path, "oracle", "--step", repr(step), "--horizon", "4", "--grid-points", "41",
            name=f"s{i}")
        devs.append(summary(tmp_path / f"s{i}")["max_abs_dev"])
    assert math.log2(devs[0] / devs[1]) == pytest.approx(4.0, abs=0.3)


def test_oracle_step_above_ceiling(tmp_path):
    assert run(tmp_path, "oracle", "--step", "0.1")[0] == 1


def test_oracle_step_cap(tmp_path):
    assert run(tmp_path, "oracle", "--horizon", "1e7")[0] == 2


def test_pulse_rabi_nodes(tmp_path):
    code, out = run(tmp_path, "pulse", "--gamma-over-kappa", "0", "--delta-over-kappa", "0",
                    "--kappa1-over-kappa", "1", "--horizon", "7")
    assert code == 0
    env = read_table(out / "envelope.csv")
    assert summary(out)["normalization"] == pytest.approx(1.0, abs=1e-6)
    omega = summary(out)["omega_abs"]
    period = 2 * math.pi / omega
    for k in range(1, 4):
        i = np.argmin(np.abs(env["kt"] - k * period))
        assert env["epsilon"][i] < 0.05 * env["epsilon"].max()


def test_pulse_detector_column(tmp_path):
    code, out = run(tmp_path, "pulse", "--eta", "0.5", "--detector-t", "0.01")
    assert code == 0
    env = read_table(out / "envelope.csv")
    p = summary(out)["p_ext_inf"]
    np.testing.assert_allclose(env["click_prob"], 0.5 * p * env["epsilon"] ** 2 * 0.01, rtol=1e-12)
    assert run(tmp_path, "pulse", "--eta", "1.5", name="bad")[0] == 1


def test_pulse_needs_output_mirror(tmp_path, capsys):
    assert run(tmp_path, "pulse", "--kappa1-over-kappa", "0")[0] == 1
    assert "no extracted mode" in capsys.readouterr().err


def test_pulse_spatial_profile(tmp_path):
    code, out = run(tmp_path, "pulse", "--mode", "truncated", "--tau", "2.2", "--observe-time", "20",
                    "--compare-gamma0", "true")
    assert code == 0
    env = read_table(out / "envelope.csv")
    assert set(env) == {"kz_c", "kt_r", "epsilon_scaled", "epsilon_scaled_gamma0"}
    np.testing.assert_allclose(env["kz_c"] + env["kt_r"], 20.0)
    assert summary(out)["p_ext_inf_gamma0"] > summary(out)["p_ext_inf"]


def test_sweep_tau(tmp_path):
    code, out = run(tmp_path, "sweep-tau", "--tau-stop", "3", "--tau-points", "601")
    assert code == 0
    sw = read_table(out / "sweep.csv")
    assert np.max(np.abs(sw["total"] - 1)) < 1e-8
    assert sw["p_ext_bar_inf"][0] == 0.0 and sw["alpha_tau_sq"][0] == 1.0
    half = math.pi / abs(compute_omega(SystemParams.from_ratios(10, 0.1, 0.9, 0.5)))
    step = sw["ktau"][1] - sw["ktau"][0]
    y = sw["p_ext_bar_inf"]
    peaks = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])) + 1
    # peaks sit just past odd multiples of half the Rabi period
    for j, i in enumerate(peaks[:3]):
        assert abs(sw["ktau"][i] - (2 * j + 1) * half) <= 0.05 * half + step


def test_sweep_large_tau_limit():
    from lossy_cavity.analytic import asymptotic_budget
    p = SystemParams.from_ratios(10, 0.1, 0.9, 0.5)
    rows = sweep_tau(p, [40.0])
    ext, ab, spo = asymptotic_budget(p)
    assert rows["p_ext_bar_inf"][0] == pytest.approx(ext, abs=1e-10)
    assert rows["p_spo_tau"][0] == pytest.approx(spo, abs=1e-10)


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "case.cfg"
    cfg.write_text("# a comment\nmode = truncated\ntau = full-rabi\nhorizon = 5\n")
    assert read_config_file(str(cfg))["tau"] == "full-rabi"
    code, out = run(tmp_path, "analytic", "--config", str(cfg), "--horizon", "6")
    assert code == 0
    s = summary(out)
    assert s["config"]["horizon"] in ("6", "6.0")
    assert s["tau"] == pytest.approx(2 * math.pi / abs(compute_omega(SystemParams.from_ratios(10, 0.1, 0.9, 0.5))))


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "analytic", "--config", str(tmp_path / "absent.cfg"))[0] == 1


def test_time_grid_resolves_rabi_period():
    cfg = ScenarioConfig(two_g_over_kappa=400.0, horizon=10.0)
    t = cfg.time_grid()
    period = 2 * math.pi / abs(compute_omega(cfg.params()))
    assert np.max(np.diff(t)) <= period / 40 + 1e-15
