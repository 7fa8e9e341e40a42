import numpy as np
import pytest

from src.bath import Lorentzian
from src.builder import kossakowski_spectrum
from src.errors import ConfigError, ExactUnavailable, NonHermitianInput
from src.evaluator import EXACT_LABEL, NumericSettings, ScenarioEvaluator
from src.method_registry import MethodRegistry
from src.metrics import complex_population
from src.operators import hermiticity_defect
from src.propagator import TimeGrid
from src.scenario import ExactConfig, IntegratorConfig
from src.system_model import SystemSpec, detuned_three_level


def test_numeric_settings_overrides():
    settings = NumericSettings.from_settings(
        {"psd_tol": 1e-10, "integrator": {"local_tol": 1e-8}, "exact": {"n_max": 4}},
        integrator=IntegratorConfig(max_refinement=3),
        exact=ExactConfig(n_max=5),
    )
    assert settings.psd_tol == 1e-10
    assert settings.local_tol == 1e-8
    assert settings.max_refinement == 3
    assert settings.n_max == 5
    assert settings.dimension_cap == NumericSettings().dimension_cap
    assert set(settings.integrator_kwargs()) == {"local_tol", "max_refinement", "dense_cap"}


def test_bloch_redfield_breaks_positivity(three_level, lorentzian, superposition_state):
    evaluator = ScenarioEvaluator(three_level, lorentzian)
    result = evaluator.evaluate("BRE", superposition_state, TimeGrid(t_end=100.0, n_steps=400))
    pops = result.trajectory.populations()
    assert result.status == "success"
    assert np.min(pops[:, 0]) < -0.01
    assert np.max(pops[:, 1] + pops[:, 2]) > 1.001
    assert np.max(np.abs(result.trajectory.trace - 1.0)) < 1e-8
    summary = result.summary()
    assert summary["min_eig"] < 0
    assert summary["delta_herm_defect"] < 1e-12


def test_repaired_method_keeps_positivity(three_level, lorentzian, superposition_state):
    evaluator = ScenarioEvaluator(three_level, lorentzian)
    result = evaluator.evaluate("aLgG(+)", superposition_state, TimeGrid(t_end=100.0, n_steps=200))
    assert np.min(result.trajectory.min_eig) >= -1e-8


def test_master_equations_are_cached(three_level, lorentzian):
    evaluator = ScenarioEvaluator(three_level, lorentzian)
    assert evaluator.master_equation("aLaG") is evaluator.master_equation("aLaG")


def test_exact_on_lorentzian_reports_truncation(lorentzian):
    system = SystemSpec(hamiltonian=np.diag([0.0, 1.0]), coupling_ops=(np.array([[0.0, 1.0], [1.0, 0.0]]),))
    bath = Lorentzian(g=0.001, omega_m=1.0, kappa=0.1)
    evaluator = ScenarioEvaluator(system, bath, NumericSettings(n_max=2))
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    result = evaluator.evaluate(EXACT_LABEL, rho0, TimeGrid(t_end=10.0, n_steps=10))
    assert result.extra["n_max"] == 2
    assert result.trajectory.dim == 2
    assert result.master_equation is None


def test_exact_can_be_disabled_for_lorentzian(three_level, lorentzian):
    evaluator = ScenarioEvaluator(three_level, lorentzian, allow_lorentzian_exact=False)
    with pytest.raises(ExactUnavailable):
        evaluator.exact_model()


def test_evaluate_all_collects_errors():
    evaluator = ScenarioEvaluator(detuned_three_level(1.0, 0.1), Lorentzian(0.1, 1.0, 0.1))
    rho0 = np.diag([0.0, 0.0, 1.0]).astype(complex)
    grid = TimeGrid(t_end=10.0, n_steps=10)
    results = evaluator.evaluate_all(["gLgG", "gLgG(+)"], rho0, grid, catch_errors=True)
    assert results["gLgG"].status == "success"
    assert results["gLgG(+)"].status == "error"
    assert results["gLgG(+)"].error
    with pytest.raises(NonHermitianInput):
        evaluator.evaluate_all(["gLgG(+)"], rho0, grid)


def test_geometric_shift_breaks_populations_between_detuned_levels(superposition_state):
    evaluator = ScenarioEvaluator(detuned_three_level(1.0, 0.1), Lorentzian(0.1, 1.0, 0.1))
    result = evaluator.evaluate("gLgG", superposition_state, TimeGrid(t_end=400.0, n_steps=800))
    traj = result.trajectory.in_basis(evaluator.table.basis)
    assert hermiticity_defect(result.master_equation.delta) > 1e-4
    assert np.max(np.abs(complex_population(traj, 1).phase)) > np.pi
    assert np.min(traj.populations()[:, 2]) < -0.01


def test_registry_supplies_tag_and_repair(tmp_path, three_level, lorentzian):
    path = tmp_path / "methods.yaml"
    path.write_text(
        "methods:\n"
        "  - name: Reference\n"
        "    tag: Exact\n"
        "  - name: projected\n"
        "    tag: BRE\n"
        "    repair: true\n",
        encoding="utf-8",
    )
    evaluator = ScenarioEvaluator(three_level, lorentzian, registry=MethodRegistry(path))
    assert evaluator.prescription("Reference") is None
    me = evaluator.master_equation("projected")
    assert me.prescription.label == "BRE(+)"
    assert kossakowski_spectrum(me).values[0] >= -1e-12
    with pytest.raises(ConfigError):
        evaluator.master_equation("BRE")
    with pytest.raises(ConfigError):
        evaluator.master_equation("Reference")
