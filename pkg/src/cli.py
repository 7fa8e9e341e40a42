"""Command-line entry point: scenario configs in, CSV/JSON results out."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from src.bath import Scaled, SpectralModel
from src.builder import kossakowski_spectrum, rate_tensors, repair_distance
from src.ensemble import Instance, instance_for_index, run_ensemble
from src.errors import ConfigError, LindbladForgeError
from src.evaluator import EXACT_LABEL, MethodResult, NumericSettings, ScenarioEvaluator
from src.method_registry import MethodRegistry
from src.metrics import complex_population, deviation, fit_lifetime
from src.metrics_logger import MetricsLogger
from src.propagator import TimeGrid
from src.report_generator import ReportGenerator, lifetime_table
from src.scenario import EnsembleConfig, ScenarioConfig, load_ensemble_config, load_scenario
from src.system_model import SystemSpec, TransitionTable, enumerate_transitions
from src.utils.json_utils import decode_matrix, dumps_deterministic
from src.utils.timing import Stopwatch

logger = logging.getLogger(__name__)

COMMANDS = ("run", "compare", "ensemble", "spectra", "build")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lindblad-forge",
        description="Build and compare Lindblad master equations from system-bath models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Bloch-Redfield positivity breakdown with a coupling sweep
  python evaluate.py run --config configs/scenarios/fig1.json

  # Lifetimes against the exact pseudomode benchmark
  python evaluate.py compare --config configs/scenarios/fig3.json --out-dir data/runs/fig3

  # Random ensemble with 8 worker threads and a different seed
  python evaluate.py ensemble --config configs/scenarios/fig6.json --threads 8 --seed 42

  # Spectral density and Lamb shift on a grid
  python evaluate.py spectra --config configs/scenarios/fig4.json

  # Master equations and Kossakowski eigenvalues of one random instance
  python evaluate.py build --config configs/scenarios/tableI.json
        """,
    )
    parser.add_argument("command", choices=COMMANDS, help="What to do with the scenario")
    parser.add_argument("--config", required=True, help="Path to scenario (or ensemble) JSON")
    parser.add_argument("--out-dir", default=None, help="Output directory (default: settings output_dir)")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for ensembles")
    parser.add_argument("--seed", type=int, default=None, help="Override the random seed of the config")
    parser.add_argument("--settings", default=None, help="Path to settings YAML (default: configs/settings.yaml)")
    parser.add_argument("--methods-config", default=None, help="Path to methods YAML (default: configs/methods.yaml)")
    parser.add_argument("--no-progress", action="store_true", help="Disable the progress bar")
    return parser


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# ----------------------------------------------------------------------
# Scenario helpers
# ----------------------------------------------------------------------

def _random_instance(cfg: ScenarioConfig, seed: Optional[int]) -> Instance:
    rnd = cfg.system.random
    return instance_for_index(
        rnd.seed if seed is None else seed, rnd.index, rnd.n_levels, rnd.n_channels, rnd.n_modes
    )


def build_models(
    cfg: ScenarioConfig, sweep_value: Optional[float] = None, seed: Optional[int] = None
) -> Tuple[SystemSpec, SpectralModel, Optional[Instance]]:
    """System, bath and (for random scenarios) the generated instance."""
    parameter = cfg.sweep.parameter if cfg.sweep is not None and sweep_value is not None else None
    factor = sweep_value if parameter == "factor" else None
    if cfg.system.kind == "random":
        instance = _random_instance(cfg, seed)
        scale = cfg.bath.factor if factor is None else factor
        bath = instance.network if scale == 1.0 else Scaled(instance.network, scale)
        return instance.system, bath, instance
    system = cfg.system.build(delta=sweep_value if parameter == "delta" else None)
    if parameter == "g":
        bath = cfg.bath.build(g=sweep_value)
    elif parameter == "g_over_kappa":
        bath = cfg.bath.build(g=sweep_value * cfg.bath.kappa)
    else:
        bath = cfg.bath.build(factor=factor)
    return system, bath, None


def initial_state(cfg: ScenarioConfig, table: TransitionTable, instance: Optional[Instance]) -> np.ndarray:
    state_cfg = cfg.initial_state
    dim = table.dim
    if state_cfg.kind == "random":
        if instance is None:
            raise ConfigError("random initial states need a random system")
        return instance.rho0
    if state_cfg.kind == "level":
        if state_cfg.level >= dim:
            raise ConfigError(f"level {state_cfg.level} out of range for dimension {dim}")
        rho = np.zeros((dim, dim), dtype=complex)
        rho[state_cfg.level, state_cfg.level] = 1.0
    elif state_cfg.kind == "pure":
        psi = state_cfg.state_vector()
        if psi.shape != (dim,):
            raise ConfigError(f"{len(psi)} amplitudes given for dimension {dim}")
        rho = np.outer(psi, np.conj(psi))
    else:
        rho = decode_matrix(state_cfg.density)
        if rho.shape != (dim, dim):
            raise ConfigError(f"density matrix {rho.shape} does not match dimension {dim}")
    if state_cfg.basis == "eigen":
        rho = table.from_eigenbasis(rho)
    return rho


def _settings_for(settings: Dict[str, Any], cfg) -> NumericSettings:
    return NumericSettings.from_settings(settings, cfg.integrator, cfg.exact)


def _resolve_methods(names: List[str], registry: MethodRegistry, cluster_width: Optional[float] = None) -> List[str]:
    """Method names with "all" expanded; cluster methods are left out of "all" without a width."""
    methods = registry.get_methods_by_names(names)
    if "all" in names and cluster_width is None:
        methods = [m for m in methods if not m.get("needs_cluster_width")]
    return [m["name"] for m in methods]


def _sweep_values(cfg: ScenarioConfig) -> List[Optional[float]]:
    return list(cfg.sweep.values) if cfg.sweep is not None else [None]


def _key(method: str, value: Optional[float]) -> str:
    return method if value is None else f"{method}@{value!r}"


def _reference_lifetime(table: TransitionTable, bath: SpectralModel, level: int) -> float:
    """1 / Gamma_jj(w_j) for the transition |0><level|."""
    rates = rate_tensors(table, bath)
    for t in table.transitions:
        if t.bra_level == 0 and t.ket_level == level:
            rate = float(np.real(rates.gamma_i[t.index, t.index]))
            return 1.0 / rate if rate > 0 else float("inf")
    return float("nan")


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def _propagate_scenario(
    cfg: ScenarioConfig,
    methods: List[str],
    settings: NumericSettings,
    out: MetricsLogger,
    seed: Optional[int],
    compare: bool,
    registry: Optional[MethodRegistry] = None,
) -> List[Path]:
    if cfg.grid is None:
        raise ConfigError(f"Scenario '{cfg.name}' has no time grid")
    grid = TimeGrid(t_end=cfg.grid.t_end, n_steps=cfg.grid.n_steps, t_start=cfg.grid.t_start)
    sweep_column = cfg.sweep.parameter if cfg.sweep is not None else None

    trajectories, sweep_of, deviations, rows = {}, {}, {}, []
    phases = {level: {} for level in cfg.outputs.complex_population_levels}
    lifetimes: Dict[str, Dict[float, float]] = {}
    reference: Dict[float, float] = {}

    for value in _sweep_values(cfg):
        system, bath, instance = build_models(cfg, value, seed)
        evaluator = ScenarioEvaluator(
            system, bath, settings,
            cluster_width=cfg.cluster_width,
            secular_cutoff=cfg.secular_cutoff,
            allow_lorentzian_exact=cfg.exact.allow_lorentzian,
            registry=registry,
        )
        if compare:
            evaluator.exact_model()
        rho0 = initial_state(cfg, evaluator.table, instance)
        results: Dict[str, MethodResult] = evaluator.evaluate_all(methods, rho0, grid)
        sweep_key = 0.0 if value is None else value
        if cfg.lifetime is not None:
            reference[sweep_key] = _reference_lifetime(evaluator.table, bath, cfg.lifetime.level)

        for method, result in results.items():
            traj = result.trajectory
            if cfg.outputs.basis == "eigen":
                traj = traj.in_basis(evaluator.table.basis)
            key = _key(method, value)
            trajectories[key] = traj
            sweep_of[key] = value
            row = result.summary()
            if sweep_column is not None:
                row[sweep_column] = value
            if compare and method != EXACT_LABEL and not result.diverged:
                dev = deviation(results[EXACT_LABEL].trajectory, result.trajectory)
                deviations[key] = dev
                row["time_averaged_deviation"] = dev.time_average
            for level in phases:
                phases[level][key] = complex_population(traj, level)
            if cfg.lifetime is not None:
                tau = fit_lifetime(traj, cfg.lifetime.level, tuple(cfg.lifetime.window))
                lifetimes.setdefault(method, {})[sweep_key] = tau
                row["lifetime_inv_eV"] = tau
            rows.append(row)
            print(f"   ✓ {key}: {result.status} in {result.runtime_s:.2f}s")

    written = out.log_trajectories(trajectories, cfg.outputs.observables, sweep_column, sweep_of)
    written.append(out.log_diagnostics(rows))
    written.append(out.log_step_diagnostics(trajectories))
    if deviations:
        written.append(out.log_deviations(deviations))
    for level, pops in phases.items():
        written.extend(out.log_complex_populations(pops, level))
    if cfg.lifetime is not None:
        written.append(out.log_table(lifetime_table(lifetimes, reference), "lifetimes"))
    return [p for p in written if p is not None]


def cmd_run(cfg: ScenarioConfig, methods: List[str], settings: NumericSettings,
            out: MetricsLogger, seed: Optional[int] = None, registry: Optional[MethodRegistry] = None) -> List[Path]:
    """One trajectory CSV per method (and sweep value) plus diagnostics."""
    return _propagate_scenario(cfg, methods, settings, out, seed, compare=False, registry=registry)


def cmd_compare(cfg: ScenarioConfig, methods: List[str], settings: NumericSettings,
                out: MetricsLogger, seed: Optional[int] = None, registry: Optional[MethodRegistry] = None) -> List[Path]:
    """Per-method trajectories plus deviation-vs-Exact series."""
    if EXACT_LABEL not in methods:
        methods = [EXACT_LABEL] + methods
    return _propagate_scenario(cfg, methods, settings, out, seed, compare=True, registry=registry)


def cmd_ensemble(cfg: EnsembleConfig, settings: NumericSettings, out_dir: Path,
                 threads: int, progress: bool = True, registry: Optional[MethodRegistry] = None) -> List[Path]:
    report = run_ensemble(cfg, settings=settings, threads=threads, progress=progress, registry=registry)
    reporter = ReportGenerator(out_dir, prefix=cfg.name)
    written = reporter.generate_report(report, hist=cfg.histogram)
    aggregates = report.aggregates()
    if not aggregates.empty:
        print("\n📊 Geometric-mean deviation by strength factor:")
        print(aggregates.pivot(index="factor", columns="method", values="geo_mean_deviation").to_string())
    return written


def cmd_spectra(cfg: ScenarioConfig, out: MetricsLogger, seed: Optional[int] = None) -> List[Path]:
    """J and lambda on a frequency grid plus transition-frequency markers."""
    if cfg.spectra is None:
        raise ConfigError(f"Scenario '{cfg.name}' has no 'spectra' section")
    system, bath, _ = build_models(cfg, seed=seed)
    omegas = np.linspace(cfg.spectra.omega_min, cfg.spectra.omega_max, cfg.spectra.n_points)
    j, lam = bath.evaluate_grid(omegas)
    data = {"omega_eV": omegas}
    n = bath.n_channels
    for a in range(n):
        for b in range(a, n):
            data[f"J_{a + 1}{b + 1}"] = np.real(j[:, a, b])
    for a in range(n):
        for b in range(a, n):
            data[f"lambda_{a + 1}{b + 1}"] = np.real(lam[:, a, b])
    table = enumerate_transitions(system)
    markers = pd.DataFrame(
        {
            "index": [t.index for t in table.transitions],
            "bra_level": [t.bra_level for t in table.transitions],
            "ket_level": [t.ket_level for t in table.transitions],
            "frequency_eV": table.frequencies,
        }
    )
    return [out.log_table(pd.DataFrame(data), "spectra"), out.log_table(markers, "transitions")]


def cmd_build(cfg: ScenarioConfig, methods: List[str], settings: NumericSettings,
              out: MetricsLogger, seed: Optional[int] = None, registry: Optional[MethodRegistry] = None) -> List[Path]:
    """Master equations as JSON plus the Kossakowski eigenvalue table."""
    system, bath, _ = build_models(cfg, seed=seed)
    evaluator = ScenarioEvaluator(
        system, bath, settings, cluster_width=cfg.cluster_width, secular_cutoff=cfg.secular_cutoff, registry=registry
    )
    payload, rows = {}, []
    for method in methods:
        if evaluator.prescription(method) is None:
            continue
        me = evaluator.master_equation(method)
        spectrum = kossakowski_spectrum(me)
        entry = me.to_dict()
        entry["significant_eigenvalues"] = spectrum.significant.tolist()
        entry["negative_ratio"] = spectrum.negative_ratio
        entry["repair_distance"] = repair_distance(me)
        payload[method] = entry
        top = spectrum.values[-1] if len(spectrum.values) else float("nan")
        for rank, value in enumerate(spectrum.values, start=1):
            rows.append(
                {
                    "method": method,
                    "rank": rank,
                    "eigenvalue_eV": value,
                    "normalized": value / top if top > 0 else float("nan"),
                    "significant": rank <= 2 or rank > len(spectrum.values) - 2,
                }
            )
    json_path = out.output_dir / f"{cfg.output_prefix}_build.json"
    json_path.write_text(dumps_deterministic({"scenario": cfg.name, "methods": payload}) + "\n", encoding="utf-8")
    out.written.append(json_path)
    return [json_path, out.log_table(pd.DataFrame(rows), "kossakowski_eigenvalues")]


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = config.load_settings(args.settings)
    _setup_logging(settings.get("logging_level", "INFO"))

    out_dir = Path(args.out_dir or settings["output_dir"])
    print(f"📋 Loading {args.command} configuration from {args.config}...")
    try:
        with Stopwatch() as timer:
            if args.command == "ensemble":
                cfg = load_ensemble_config(args.config)
                if args.seed is not None:
                    cfg = cfg.model_copy(update={"seed": args.seed})
                threads = args.threads or int(settings.get("concurrency", 1))
                registry = MethodRegistry(args.methods_config or config.METHODS_PATH)
                names = registry.ensemble_methods() if "all" in cfg.methods else _resolve_methods(cfg.methods, registry)
                cfg = cfg.model_copy(update={"methods": names})
                print(f"🚀 Running {cfg.n_systems} instance(s) x {len(cfg.strength_factors)} factor(s) on {threads} thread(s)")
                written = cmd_ensemble(cfg, _settings_for(settings, cfg), out_dir, threads, not args.no_progress, registry)
            else:
                cfg = load_scenario(args.config)
                out = MetricsLogger(out_dir, prefix=cfg.output_prefix)
                if args.command == "spectra":
                    written = cmd_spectra(cfg, out, args.seed)
                else:
                    registry = MethodRegistry(args.methods_config or config.METHODS_PATH)
                    methods = _resolve_methods(cfg.methods, registry, cfg.cluster_width)
                    print(f"✅ Methods: {methods}")
                    numeric = _settings_for(settings, cfg)
                    command = {"run": cmd_run, "compare": cmd_compare, "build": cmd_build}[args.command]
                    written = command(cfg, methods, numeric, out, args.seed, registry)
    except LindbladForgeError as exc:
        print(f"❌ Error: {exc}")
        return 1

    print(f"\n✅ Wrote {len(written)} file(s) to {out_dir} in {timer.elapsed_s:.1f}s")
    for path in written:
        print(f"   📁 {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
