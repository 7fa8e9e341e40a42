import json
from pathlib import Path

import numpy as np
import pytest

from src.builder import Prescription, build_prescription, kossakowski_spectrum
from src.ensemble import (
    CellResult,
    EnsembleReport,
    InstanceResult,
    eigenvalue_stats,
    gen_instance,
    instance_for_index,
    normalize_eigenvalues,
    run_ensemble,
    time_horizon,
)
from src.errors import DegenerateNormalization
from src.scenario import EnsembleConfig, HistogramConfig, load_ensemble_config
from src.system_model import enumerate_transitions
from src.utils.rng import RngStream, splitmix64, substream_seed

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "configs" / "scenarios"


def test_splitmix64_reference_output():
    state, out = splitmix64(0)
    assert state == 0x9E3779B97F4A7C15
    assert out == 0xE220A8397B1DCDAF


def test_rng_stream_is_reproducible():
    a, b = RngStream(42), RngStream(42)
    draws = [a.random() for _ in range(100)]
    assert draws == [b.random() for _ in range(100)]
    assert all(0.0 <= x < 1.0 for x in draws)
    assert a.position == 100
    assert RngStream(43).random() != draws[0]


def test_uniform_stays_in_half_open_range():
    rng = RngStream(7)
    values = rng.uniforms(0.2, 0.5, 1000)
    assert min(values) >= 0.2
    assert max(values) < 0.5


def test_substreams_differ_by_index():
    assert substream_seed(1234321, 0) != substream_seed(1234321, 1)


def test_generated_instance_ranges():
    inst = gen_instance(RngStream(substream_seed(1234321, 5)))
    energies = np.real(np.diag(inst.system.hamiltonian))
    assert np.all((energies >= 0.1) & (energies < 5.0))
    assert np.all((inst.network.kappas >= 0.2) & (inst.network.kappas < 0.5))
    assert np.all((inst.network.couplings >= 0.0) & (inst.network.couplings < 1e-3))
    assert inst.network.couplings.shape == (2, 2)
    assert len(inst.system.coupling_ops) == 2
    for a_op in inst.system.coupling_ops:
        np.testing.assert_allclose(np.diag(a_op), 0.0)
        np.testing.assert_allclose(a_op, a_op.T)
    assert np.linalg.norm(inst.psi0) == pytest.approx(1.0)
    assert np.trace(inst.rho0).real == pytest.approx(1.0)


def test_instance_for_index_is_deterministic():
    a = instance_for_index(99, 3)
    b = instance_for_index(99, 3)
    np.testing.assert_array_equal(a.system.hamiltonian, b.system.hamiltonian)
    np.testing.assert_array_equal(a.network.couplings, b.network.couplings)
    np.testing.assert_array_equal(a.psi0, b.psi0)


def test_time_horizon_is_clamped(random_instances):
    for inst in random_instances[:10]:
        horizon = time_horizon(inst.system, inst.network)
        assert 1e2 <= horizon <= 1e5


def test_normalize_eigenvalues():
    np.testing.assert_allclose(normalize_eigenvalues([0.5, -0.1, 1.0]), [-0.1, 0.5, 1.0])
    with pytest.raises(DegenerateNormalization):
        normalize_eigenvalues([-1.0, 0.0])


def hand_built_report():
    config = {"methods": ["Exact", "BRE", "aLgG(+)"], "strength_factors": [1.0]}
    instances = [
        InstanceResult(
            index=0,
            seed=1,
            horizon=100.0,
            cells=[
                CellResult(1.0, "BRE", 1e-2, False, eigenvalues=[-0.01, 0.5, 1.0]),
                CellResult(1.0, "aLgG(+)", None, True, eigenvalues=[0.0, 0.2, 1.0]),
            ],
        ),
        InstanceResult(
            index=1,
            seed=2,
            horizon=100.0,
            cells=[
                CellResult(1.0, "BRE", 1e-4, False, eigenvalues=[-0.001, 0.3, 2.0]),
                CellResult(1.0, "aLgG(+)", 1e-3, False, eigenvalues=[0.0, 0.1, 1.0]),
            ],
        ),
        InstanceResult(index=2, seed=3, horizon=100.0, skipped={"1.0": "TruncationUnconverged: n_max"}),
    ]
    return EnsembleReport(config=config, instances=instances)


def test_aggregates_count_every_instance():
    agg = hand_built_report().aggregates().set_index("method")
    assert agg.loc["BRE", "geo_mean_deviation"] == pytest.approx(1e-3)
    assert agg.loc["BRE", "log10_std"] == pytest.approx(1.0)
    assert agg.loc["aLgG(+)", "n_aggregated"] == 1
    assert agg.loc["aLgG(+)", "n_diverged"] == 1
    assert agg.loc["aLgG(+)", "n_skipped"] == 1
    for method in ("BRE", "aLgG(+)"):
        row = agg.loc[method]
        assert row["n_aggregated"] + row["n_diverged"] + row["n_skipped"] == 3


def test_single_value_has_null_spread_in_json():
    payload = json.loads(hand_built_report().to_json())
    rows = {row["method"]: row for row in payload["aggregates"]}
    assert rows["aLgG(+)"]["log10_std"] is None
    assert rows["aLgG(+)"]["geo_mean_deviation"] == pytest.approx(1e-3)
    assert "Exact" not in rows


def test_eigenvalue_stats_histograms():
    stats = eigenvalue_stats(hand_built_report(), hist=HistogramConfig(log10_min=-4.0, log10_max=0.0, bins_per_decade=1))
    summary = stats.summary.set_index("method")
    assert summary.loc["BRE", "n_instances"] == 2
    assert summary.loc["BRE", "median_negative_ratio"] == pytest.approx((0.01 + 0.0005) / 2)
    negative = stats.histograms.query("method == 'BRE' and rank == 1 and side == 'negative'")
    assert negative["count"].sum() == 2
    assert len(negative) == 4


def small_config(**overrides):
    values = dict(
        name="small",
        seed=2024,
        n_systems=3,
        n_levels=2,
        n_channels=1,
        n_modes=1,
        strength_factors=[1.0, 100.0],
        methods=["Exact", "BRE", "aLgG(+)"],
        horizon=50.0,
        n_steps=10,
    )
    values.update(overrides)
    return EnsembleConfig(**values)


@pytest.mark.slow
def test_small_ensemble_accounts_for_every_instance():
    report = run_ensemble(small_config(), progress=False)
    agg = report.aggregates()
    assert len(agg) == 4
    totals = agg["n_aggregated"] + agg["n_diverged"] + agg["n_skipped"]
    assert (totals == 3).all()
    assert [inst.index for inst in report.instances] == [0, 1, 2]


@pytest.mark.slow
def test_ensemble_report_independent_of_thread_count():
    cfg = small_config(n_systems=2, strength_factors=[1.0])
    single = run_ensemble(cfg, threads=1, progress=False).to_json()
    parallel = run_ensemble(cfg, threads=2, progress=False).to_json()
    assert single == parallel


@pytest.mark.slow
def test_kossakowski_negative_ratios_over_baseline_ensemble():
    seed = EnsembleConfig().seed
    methods = ["BRE", "aLaG", "aLgG"]
    instances = []
    for index in range(200):
        inst = instance_for_index(seed, index)
        table = enumerate_transitions(inst.system)
        cells = []
        for label in methods:
            me = build_prescription(table, inst.network, Prescription.parse(label))
            cells.append(CellResult(1.0, label, None, False, eigenvalues=kossakowski_spectrum(me).values.tolist()))
        instances.append(InstanceResult(index=index, seed=substream_seed(seed, index), horizon=0.0, cells=cells))
    report = EnsembleReport(config={"methods": methods, "strength_factors": [1.0]}, instances=instances)
    summary = eigenvalue_stats(report).summary.set_index("method")
    assert (summary["n_instances"] + summary["n_flagged"] == 200).all()
    assert summary.loc["BRE", "median_negative_ratio"] >= 1e-1
    assert summary.loc["aLaG", "median_negative_ratio"] >= 3e-2
    assert summary.loc["aLgG", "median_negative_ratio"] <= 1e-2


@pytest.fixture(scope="module")
def deviation_report():
    cfg = load_ensemble_config(SCENARIO_DIR / "fig6.json")
    return run_ensemble(cfg, threads=4, progress=False)


def geo_means(report, method):
    agg = report.aggregates()
    rows = agg[agg["method"] == method].sort_values("factor")
    return rows["factor"].to_numpy(), rows["geo_mean_deviation"].to_numpy(dtype=float)


@pytest.mark.slow
def test_deviation_grows_with_bath_strength(deviation_report):
    for method in deviation_report.methods:
        _, values = geo_means(deviation_report, method)
        values = values[np.isfinite(values)]
        drops = np.count_nonzero(np.diff(values) < 0)
        assert drops <= 1, method


@pytest.mark.slow
def test_repaired_methods_plateau_at_weak_coupling(deviation_report):
    for method in ("BRE(+)", "aLaG(+)"):
        _, values = geo_means(deviation_report, method)
        assert np.all((values[:2] >= 0.03) & (values[:2] <= 0.3)), method


@pytest.mark.slow
def test_repair_barely_moves_geometric_rates(deviation_report):
    _, plain = geo_means(deviation_report, "aLgG")
    _, repaired = geo_means(deviation_report, "aLgG(+)")
    both = np.isfinite(plain) & np.isfinite(repaired)
    assert np.any(both)
    ratio = repaired[both] / plain[both]
    assert np.all((ratio <= 3.0) & (ratio >= 1.0 / 3.0))


@pytest.mark.slow
def test_log_dispersion_near_a_quarter_decade(deviation_report):
    spread = deviation_report.aggregates()["log10_std"].to_numpy(dtype=float)
    spread = spread[np.isfinite(spread)]
    assert np.count_nonzero(np.abs(spread - 0.25) <= 0.15) >= 0.5 * len(spread)


@pytest.mark.slow
def test_divergence_count_non_decreasing_in_strength(deviation_report):
    for method in ("BRE", "aLaG"):
        counts = [
            sum(1 for c in deviation_report.cells(method, factor) if c is not None and c.diverged)
            for factor in sorted(deviation_report.factors)
        ]
        assert counts == sorted(counts), method
