import json

import numpy as np
import pytest

from bandchain.cli import EXIT_CAP, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from bandchain.output import colormap, emit_csv, heatmap, line_plot, read_csv
from bandchain.runs import (
    ComparisonReport,
    ConfigError,
    RunConfig,
    compare_trajectories,
    fig7_properties,
    preset_config,
    run_exact,
    wavefront_speed,
)

SMALL_SPEC = {"kind": "pec_cavity", "atom_positions": [-0.2, 0.15], "mode_count": 3,
              "harmonic_rule": "all", "coupling_normalization": 0.1}


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# -- output -----------------------------------------------------------------------

def test_csv_roundtrip_exact(tmp_path, rng):
    vals = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-20, 20, (5, 3))
    recs = [{"time": a, "pop1": b, "energy": c} for a, b, c in vals]
    emit_csv(recs, tmp_path / "x.csv")
    back = read_csv(tmp_path / "x.csv")
    np.testing.assert_array_equal(back["time"], vals[:, 0])
    np.testing.assert_array_equal(back["energy"], vals[:, 2])
    header = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert header == "time [1/omega_a1],pop1 [1],energy [hbar*omega_a1]"


def test_empty_trajectory_writes_header_only(tmp_path):
    emit_csv([], tmp_path / "e.csv", ["time", "pop1"])
    assert (tmp_path / "e.csv").read_text() == "time [1/omega_a1],pop1 [1]\n"
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "f.csv")


def test_csv_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        emit_csv([{"time": 0.0}], blocker / "x.csv")


def test_line_plot_rejects_nan(tmp_path):
    with pytest.raises(ValueError, match="index \\(2,\\)"):
        line_plot({"a": ([0, 1, 2], [0.0, 1.0, np.nan])}, tmp_path / "p.svg")


def test_plots_are_self_contained_svg(tmp_path):
    line_plot({"a": ([0, 1, 2], [0.0, 1.0, 0.5]), "b": ([0, 1, 2], [1.0, 0.0, 0.5])}, tmp_path / "p.svg",
              ylabel="population", title="t")
    text = (tmp_path / "p.svg").read_text()
    assert text.startswith("<svg") and "population" in text and "t/(2pi/omega_a1)" in text
    assert "href" not in text
    heatmap([0, 0.5, 1], [0, 1], np.arange(6.0).reshape(2, 3), tmp_path / "h.svg")
    assert (tmp_path / "h.svg").read_text().count("<rect") > 6
    with pytest.raises(ValueError):
        heatmap([0, 1], [0, 1], np.zeros((3, 3)), tmp_path / "bad.svg")


def test_colormap_luminance_is_monotone():
    def lum(hexcol):
        r, g, b = (int(hexcol[i:i + 2], 16) for i in (1, 3, 5))
        return 0.2126 * r + 0.7152 * g + 0.0722 * b
    values = [lum(colormap(v)) for v in np.linspace(0, 1, 101)]
    assert all(b >= a for a, b in zip(values, values[1:]))


# -- config and runs ----------------------------------------------------------------

def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"spec": SMALL_SPEC, "bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"spec": SMALL_SPEC, "mode": "nope"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"spec": SMALL_SPEC, "dt": -1.0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"mode": "compare", "spec": SMALL_SPEC, "runs": [{}]})


def test_resolved_defaults(small_two_atom_spec):
    cfg = RunConfig.from_dict({"spec": SMALL_SPEC, "periods": 2.0})
    res = cfg.resolved(small_two_atom_spec)
    assert res.nf == 6
    assert res.dt == pytest.approx(2 * np.pi / 600)
    assert res.steps == 1200


def test_exact_csv_is_deterministic(tmp_path):
    cfg = RunConfig.from_dict({"spec": SMALL_SPEC, "nf": 3, "steps": 50, "stride": 10, "dt": 0.02,
                               "initial_state": "psi2"})
    a = run_exact(cfg, tmp_path / "a")
    run_exact(cfg, tmp_path / "b")
    assert (tmp_path / "a/timeseries.csv").read_bytes() == (tmp_path / "b/timeseries.csv").read_bytes()
    assert a.columns == ["time", "time_periods", "pop1", "pop2", "gg", "ge", "eg", "ee", "energy", "norm", "top_fock"]
    man = json.loads((tmp_path / "a/manifest.json").read_text())
    assert man["config"]["nf"] == 3 and man["config"]["steps"] == 50 and "wall_time_s" in man


def test_three_atom_csv_has_eight_columns(tmp_path):
    spec = {"kind": "pec_cavity", "atom_positions": [0.0, 0.25, -0.375], "mode_count": 2,
            "harmonic_rule": "all", "coupling_normalization": 0.25, "anchor": [0, 0]}
    res = run_exact(RunConfig.from_dict({"spec": spec, "hamiltonian": "dicke", "nf": 2, "steps": 4, "dt": 0.01}),
                    tmp_path)
    assert len(res.columns) == 8
    data = read_csv(tmp_path / "timeseries.csv")
    assert data["pop1"][0] == data["pop2"][0] == data["pop3"][0] == 1.0


def test_compare_rejects_mismatched_grids():
    a = [{"time": 0.0, "pop1": 0.1}, {"time": 1.0, "pop1": 0.2}]
    b = [{"time": 0.0, "pop1": 0.1}, {"time": 2.0, "pop1": 0.2}]
    with pytest.raises(ConfigError):
        compare_trajectories(a, b, ["pop1"], 1e-6)
    with pytest.raises(ConfigError):
        compare_trajectories(a, a[:1], ["pop1"], 1e-6)


def test_comparison_report():
    a = [{"time": 0.0, "pop1": 0.1}, {"time": 1.0, "pop1": 0.2}]
    b = [{"time": 0.0, "pop1": 0.1}, {"time": 1.0, "pop1": 0.2 + 3e-7}]
    rep = compare_trajectories(a, b, ["pop1"], 1e-6)
    assert isinstance(rep, ComparisonReport) and rep.passed
    assert rep.max_abs["pop1"] == pytest.approx(3e-7)
    assert rep.rms["pop1"] == pytest.approx(3e-7 / np.sqrt(2))
    assert not compare_trajectories(a, b, ["pop1"], 1e-7).passed


def test_presets_are_complete():
    for name in ("fig4", "fig5", "fig7-psi1", "fig7-psi2", "fig7-psi3"):
        cfg = preset_config(name)
        assert cfg.spec is not None
    fig7 = preset_config("fig7-psi2")
    assert fig7.nf == 8 and fig7.periods == 5.0 and fig7.truncation.chi_max == 128
    with pytest.raises(ConfigError):
        preset_config("fig9")


def test_wavefront_speed():
    c = 1 / np.pi
    times = np.linspace(0, 2, 201)
    x = np.linspace(-0.5, 0.5, 51)
    # front leaving x=0 at speed c
    cmap = (np.abs(x)[None, :] <= c * times[:, None]).astype(float)
    speed, frac = wavefront_speed(times, x, cmap, [0.0])
    assert speed == pytest.approx(c, rel=0.05)
    assert frac == 1.0
    fast = (np.abs(x)[None, :] <= 3 * c * times[:, None]).astype(float)
    assert wavefront_speed(times, x, fast, [0.0])[0] > 2.5 * c
    instant = np.ones_like(cmap)
    assert wavefront_speed(times, x, instant, [0.0])[0] == np.inf


def test_fig7_properties_flag_asymmetry():
    recs = [{"time_periods": t, "pop1": 0.5, "pop2": 0.5 + 1e-3 * t, "S1": 0.1, "S12": 0.1, "ge": 0.5, "eg": 0.5}
            for t in np.linspace(0, 5, 51)]
    times = np.linspace(0, 10, 11)
    x = np.linspace(-0.5, 0.5, 11)
    cmap = np.zeros((11, 11))
    checks = {c.name: c for c in fig7_properties(recs, times, x, cmap, [-0.25, 0.25], "psi2")}
    assert not checks["symmetric_populations"].passed
    assert checks["entropy_bound"].passed
    assert checks["revival"].passed and checks["revival"].value == pytest.approx(1.0)


# -- command line -------------------------------------------------------------------

def test_cli_transform(tmp_path):
    cfg = _write(tmp_path, {"spec": SMALL_SPEC})
    assert main(["transform", "--config", cfg, "--out", str(tmp_path / "t"), "--quiet"]) == EXIT_OK
    for name in ("M_D.csv", "M_B.csv", "Q.csv", "transform_report.json", "manifest.json"):
        assert (tmp_path / "t" / name).exists()
    rep = json.loads((tmp_path / "t/transform_report.json").read_text())
    assert rep["passed"] and rep["orthogonality_residual"] <= 1e-12


def test_cli_exact_and_mps(tmp_path):
    cfg = _write(tmp_path, {"spec": SMALL_SPEC, "initial_state": "psi1", "stride": 5})
    out = tmp_path / "e"
    assert main(["exact", "--config", cfg, "--out", str(out), "--nf", "3", "--dt", "0.02",
                 "--steps", "20", "--quiet"]) == EXIT_OK
    assert len(read_csv(out / "timeseries.csv")["time"]) == 5
    out = tmp_path / "m"
    assert main(["mps", "--config", cfg, "--out", str(out), "--nf", "3", "--dt", "0.02", "--steps", "20",
                 "--chi-max", "4", "--cutoff", "1e-8", "--quiet"]) == EXIT_OK
    data = read_csv(out / "timeseries.csv")
    assert data["max_bond"].max() <= 4
    assert (out / "correlation.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["truncation"] == {"chi_max": 4, "cutoff": 1e-8}
    assert "schedule" in man and "max_bond" in man


def test_cli_compare_pass_and_fail(tmp_path):
    doc = {"spec": SMALL_SPEC, "initial_state": "psi1", "nf": 3, "dt": 0.02, "steps": 60, "stride": 10,
           "labels": ["exact", "tebd"], "runs": [{"mode": "exact"}, {"mode": "mps"}], "tolerance": 1e-3}
    assert main(["compare", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "c"), "--quiet"]) == EXIT_OK
    rep = json.loads((tmp_path / "c/comparison.json").read_text())
    assert rep["passed"] and set(rep["max_abs"]) == {"pop1", "pop2"}
    doc["tolerance"] = 1e-12
    assert main(["compare", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "d"), "--quiet"]) == EXIT_FAIL


def test_cli_exit_codes(tmp_path):
    assert main(["exact", "--config", _write(tmp_path, {"spec": SMALL_SPEC, "bogus": 1}), "--quiet"]) == EXIT_CONFIG
    assert main(["exact", "--config", str(tmp_path / "missing.json"), "--quiet"]) == EXIT_CONFIG
    assert main(["exact", "--quiet"]) == EXIT_CONFIG
    bad_state = _write(tmp_path, {"spec": SMALL_SPEC, "initial_state": "psi9"})
    assert main(["exact", "--config", bad_state, "--out", str(tmp_path / "x"), "--quiet"]) == EXIT_CONFIG
    bad_spec = _write(tmp_path, {"spec": {"kind": "pec_cavity", "atom_positions": [0.9], "mode_count": 2}})
    assert main(["exact", "--config", bad_spec, "--quiet"]) == EXIT_CONFIG
    big = _write(tmp_path, {"spec": {"kind": "random", "atom_count": 2, "mode_count": 12}, "nf": 6})
    assert main(["exact", "--config", big, "--out", str(tmp_path / "y"), "--quiet"]) == EXIT_CAP


def test_cli_seed_drives_random_spec(tmp_path):
    cfg = _write(tmp_path, {"spec": {"kind": "random", "atom_count": 2, "mode_count": 5}})
    for seed, name in ((1, "a"), (1, "b"), (2, "c")):
        assert main(["transform", "--config", cfg, "--seed", str(seed), "--out", str(tmp_path / name), "--quiet"]) == 0
    md = {n: (tmp_path / n / "M_D.csv").read_bytes() for n in "abc"}
    assert md["a"] == md["b"] != md["c"]


def test_cli_repro_fig4(tmp_path):
    assert main(["repro", "fig4", "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["passed"] and rep["metrics"]["xi_relative_error"] <= 1e-8
    assert (tmp_path / "chain_coefficients.svg").exists()


def test_cli_rejects_unknown_preset(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["repro", "fig9"])
    assert exc.value.code == 2
