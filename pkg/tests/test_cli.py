import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.cli import build_parser, main

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "configs" / "scenarios"


def write_config(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def small_scenario(**overrides):
    payload = {
        "name": "small",
        "system": {"kind": "three_level"},
        "bath": {"kind": "lorentzian", "g": 0.1, "omega_m": 1.0, "kappa": 0.1},
        "methods": ["BRE", "aLgG(+)"],
        "initial_state": {"kind": "level", "level": 2},
        "grid": {"t_end": 10.0, "n_steps": 10},
        "outputs": {"complex_population_levels": [1]},
    }
    payload.update(overrides)
    return payload


def two_level_scenario(**overrides):
    payload = {
        "name": "golden",
        "system": {
            "kind": "inline",
            "hamiltonian": [[0.0, 0.0], [0.0, 1.0]],
            "coupling_ops": [[[0.0, 1.0], [1.0, 0.0]]],
        },
        "bath": {"kind": "lorentzian", "g": 0.001, "omega_m": 1.0, "kappa": 0.1},
        "methods": ["aLgG"],
        "initial_state": {"kind": "level", "level": 1},
        "grid": {"t_end": 10.0, "n_steps": 10},
        "exact": {"n_max": 2},
    }
    payload.update(overrides)
    return payload


def test_parser_requires_known_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["plot", "--config", "x.json"])


def test_spectra_columns(tmp_path):
    code = main(["spectra", "--config", str(SCENARIO_DIR / "fig4.json"), "--out-dir", str(tmp_path)])
    assert code == 0
    frame = pd.read_csv(tmp_path / "fig4_spectra.csv")
    assert list(frame.columns) == ["omega_eV", "J_11", "J_12", "J_22", "lambda_11", "lambda_12", "lambda_22"]
    assert len(frame) == 601
    markers = pd.read_csv(tmp_path / "fig4_transitions.csv")
    assert list(markers.columns) == ["index", "bra_level", "ket_level", "frequency_eV"]


def test_run_writes_trajectories_and_diagnostics(tmp_path, capsys):
    code = main(["run", "--config", write_config(tmp_path, small_scenario()), "--out-dir", str(tmp_path / "out")])
    assert code == 0
    out = tmp_path / "out"
    for name in (
        "small_BRE_trajectory.csv",
        "small_aLgG_plus_trajectory.csv",
        "small_diagnostics.csv",
        "small_step_diagnostics.csv",
        "small_BRE_phase_level1.csv",
    ):
        assert (out / name).exists(), name
    diagnostics = pd.read_csv(out / "small_diagnostics.csv")
    assert list(diagnostics["method"]) == ["BRE", "aLgG(+)"]
    assert "✅ Wrote" in capsys.readouterr().out


def test_run_with_sweep_stacks_values(tmp_path):
    scenario = small_scenario(methods=["aLaG"], sweep={"parameter": "g_over_kappa", "values": [0.1, 0.5]})
    assert main(["run", "--config", write_config(tmp_path, scenario), "--out-dir", str(tmp_path)]) == 0
    frame = pd.read_csv(tmp_path / "small_aLaG_trajectory.csv")
    assert sorted(frame["g_over_kappa"].unique()) == [0.1, 0.5]
    assert len(frame) == 22


def test_compare_writes_deviation_against_exact(tmp_path):
    assert main(["compare", "--config", write_config(tmp_path, two_level_scenario()), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "golden_Exact_trajectory.csv").exists()
    deviation = pd.read_csv(tmp_path / "golden_deviation.csv")
    assert set(deviation["method"]) == {"aLgG"}
    assert (deviation["deviation"] >= 0).all()
    diagnostics = pd.read_csv(tmp_path / "golden_diagnostics.csv").set_index("method")
    assert diagnostics.loc["Exact", "n_max"] == 2
    assert diagnostics.loc["aLgG", "time_averaged_deviation"] >= 0


def test_build_writes_master_equations(tmp_path):
    code = main(["build", "--config", str(SCENARIO_DIR / "tableI.json"), "--out-dir", str(tmp_path)])
    assert code == 0
    payload = json.loads((tmp_path / "tableI_build.json").read_text(encoding="utf-8"))
    assert set(payload["methods"]) == {"BRE", "aLaG", "aLgG"}
    eigen = pd.read_csv(tmp_path / "tableI_kossakowski_eigenvalues.csv")
    assert set(eigen["method"]) == {"BRE", "aLaG", "aLgG"}
    assert (eigen.groupby("method")["normalized"].max() == 1.0).all()


def test_invalid_config_returns_error_code(tmp_path, capsys):
    code = main(["run", "--config", write_config(tmp_path, small_scenario(methods=[])), "--out-dir", str(tmp_path)])
    assert code == 1
    assert "❌ Error" in capsys.readouterr().out


@pytest.mark.slow
def test_ensemble_report_is_reproducible(tmp_path):
    ensemble = {
        "name": "tiny",
        "seed": 7,
        "n_systems": 2,
        "n_levels": 2,
        "n_channels": 1,
        "n_modes": 1,
        "strength_factors": [1.0],
        "methods": ["Exact", "BRE"],
        "horizon": 50.0,
        "n_steps": 10,
    }
    path = write_config(tmp_path, ensemble)
    reports = []
    for run, threads in (("a", "1"), ("b", "2")):
        out = tmp_path / run
        assert main(["ensemble", "--config", path, "--out-dir", str(out), "--threads", threads, "--no-progress"]) == 0
        reports.append((out / "tiny_report.json").read_bytes())
        assert (out / "tiny_aggregates.csv").exists()
    assert reports[0] == reports[1]


@pytest.mark.slow
def test_lifetime_scenario_follows_spectral_density(tmp_path):
    assert main(["compare", "--config", str(SCENARIO_DIR / "fig3.json"), "--out-dir", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "fig3_lifetimes.csv")
    lifetimes = table.pivot(index="sweep_value", columns="method", values="lifetime_inv_eV")
    reference = table.groupby("sweep_value")["reference_inv_eV"].first()
    # 1 / (2 pi J(w_M + delta)) with 2 pi J(w_M) = 4 g^2 / kappa = 1e-3 eV
    np.testing.assert_allclose(reference.to_numpy(), [2000.0, 5000.0, 10000.0, 17000.0], rtol=1e-9)
    assert np.all(np.isfinite(lifetimes.to_numpy()))
    assert np.all(np.abs(lifetimes["aLgG"] / lifetimes["Exact"] - 1.0) < 0.15)
    for method in ("Exact", "aLgG"):
        ratio = lifetimes[method] / reference
        assert ratio.max() / ratio.min() <= 1.2, method
    # cluster-frequency rates stay pinned at the cluster mean w_M
    np.testing.assert_allclose(lifetimes["dLdG"].to_numpy(), 1000.0, rtol=0.2)


def test_methods_config_drives_prescriptions(tmp_path):
    methods_yaml = tmp_path / "methods.yaml"
    methods_yaml.write_text(
        "methods:\n"
        "  - name: aLgG\n"
        "    tag: aLgG\n"
        "    repair: true\n"
        "    ensemble: false\n",
        encoding="utf-8",
    )
    scenario = small_scenario(methods=["aLgG"])
    code = main(
        ["build", "--config", write_config(tmp_path, scenario), "--out-dir", str(tmp_path),
         "--methods-config", str(methods_yaml)]
    )
    assert code == 0
    payload = json.loads((tmp_path / "small_build.json").read_text(encoding="utf-8"))
    assert payload["methods"]["aLgG"]["prescription"]["repaired"] is True
    assert min(payload["methods"]["aLgG"]["kossakowski_eigenvalues"]) >= -1e-12
