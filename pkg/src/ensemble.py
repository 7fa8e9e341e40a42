"""Random ensemble: reproducible instances, parallel execution, aggregate statistics.

Instance i draws from its own stream seeded with splitmix64(seed ^ i), so the
report does not depend on how instances are scheduled across workers.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.bath import PseudomodeNetwork, Scaled, rates_on_grid
from src.builder import kossakowski_spectrum, repair_distance
from src.errors import DegenerateNormalization, LindbladForgeError, NonPositiveValue
from src.evaluator import EXACT_LABEL, NumericSettings, ScenarioEvaluator
from src.method_registry import MethodRegistry
from src.metrics import deviation, geo_mean_log
from src.propagator import TimeGrid
from src.scenario import EnsembleConfig, HistogramConfig
from src.system_model import SystemSpec, enumerate_transitions
from src.utils.json_utils import dumps_deterministic
from src.utils.rng import RngStream, substream_seed

logger = logging.getLogger(__name__)

SYSTEM_ENERGY_RANGE = (0.1, 5.0)
MODE_ENERGY_RANGE = (0.3, 2.0)
MODE_COUPLING_RANGE = (0.0, 1.0)
MODE_RATE_RANGE = (0.2, 0.5)
OPERATOR_ENTRY_RANGE = (0.0, 1.0)
SYSTEM_MODE_COUPLING_RANGE = (0.0, 1e-3)


class Instance(NamedTuple):
    system: SystemSpec
    network: PseudomodeNetwork
    psi0: np.ndarray

    @property
    def rho0(self) -> np.ndarray:
        return np.outer(self.psi0, np.conj(self.psi0))


def _symmetric_from_upper(diagonal: np.ndarray, upper: Sequence[float]) -> np.ndarray:
    n = len(diagonal)
    out = np.diag(np.asarray(diagonal, dtype=float))
    rows, cols = np.triu_indices(n, k=1)
    out[rows, cols] = upper
    out[cols, rows] = upper
    return out


def gen_instance(rng: RngStream, n_levels: int = 3, n_channels: int = 2, n_modes: int = 2) -> Instance:
    """One random system, pseudomode network and pure initial state.

    Draw order: system energies, mode energies, mode couplings (upper triangle),
    mode loss rates, coupling operators (upper triangles, row-major), system-mode
    couplings (row-major), state amplitudes, state phases.
    """
    n_upper_levels = n_levels * (n_levels - 1) // 2
    n_upper_modes = n_modes * (n_modes - 1) // 2

    energies = rng.uniforms(*SYSTEM_ENERGY_RANGE, n_levels)
    mode_energies = rng.uniforms(*MODE_ENERGY_RANGE, n_modes)
    mode_couplings = rng.uniforms(*MODE_COUPLING_RANGE, n_upper_modes)
    kappas = rng.uniforms(*MODE_RATE_RANGE, n_modes)
    coupling_ops = tuple(
        _symmetric_from_upper(np.zeros(n_levels), rng.uniforms(*OPERATOR_ENTRY_RANGE, n_upper_levels))
        for _ in range(n_channels)
    )
    g = np.array(rng.uniforms(*SYSTEM_MODE_COUPLING_RANGE, n_channels * n_modes)).reshape(n_channels, n_modes)
    amplitudes = np.array(rng.uniforms(0.0, 1.0, n_levels))
    phases = np.array(rng.uniforms(0.0, 2.0 * np.pi, n_levels))

    psi0 = amplitudes * np.exp(1j * phases)
    psi0 = psi0 / np.linalg.norm(psi0)
    system = SystemSpec(hamiltonian=np.diag(energies), coupling_ops=coupling_ops)
    network = PseudomodeNetwork(
        omega=_symmetric_from_upper(np.asarray(mode_energies), mode_couplings),
        kappas=np.asarray(kappas),
        couplings=g,
    )
    return Instance(system=system, network=network, psi0=psi0)


def instance_for_index(seed: int, index: int, n_levels: int = 3, n_channels: int = 2, n_modes: int = 2) -> Instance:
    return gen_instance(RngStream(substream_seed(seed, index)), n_levels, n_channels, n_modes)


def time_horizon(system: SystemSpec, network: PseudomodeNetwork, clamp=(1e2, 1e5)) -> float:
    """T = 10 / (2 pi J_11(w_min)) at the smallest positive transition frequency, clamped."""
    lo, hi = clamp
    table = enumerate_transitions(system)
    positive = table.frequencies[table.frequencies > 0]
    if positive.size == 0:
        return hi
    gam, _ = rates_on_grid(network, np.array([positive.min()]))
    rate = float(np.real(gam[0, 0, 0]))
    if rate <= 0:
        return hi
    return float(np.clip(10.0 / rate, lo, hi))


@dataclass
class CellResult:
    factor: float
    method: str
    deviation: Optional[float]
    diverged: bool
    eigenvalues: List[float] = field(default_factory=list)
    repair_distance: Optional[float] = None
    delta_herm_defect: Optional[float] = None
    kossakowski_defect: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "factor": self.factor,
            "method": self.method,
            "deviation": self.deviation,
            "diverged": self.diverged,
            "eigenvalues": self.eigenvalues,
            "repair_distance": self.repair_distance,
            "delta_herm_defect": self.delta_herm_defect,
            "kossakowski_defect": self.kossakowski_defect,
        }


@dataclass
class InstanceResult:
    index: int
    seed: int
    horizon: float
    cells: List[CellResult] = field(default_factory=list)
    skipped: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "seed": self.seed,
            "horizon": self.horizon,
            "skipped": dict(self.skipped),
            "cells": [c.to_dict() for c in self.cells],
        }


@dataclass
class EnsembleReport:
    config: Dict[str, Any]
    instances: List[InstanceResult]

    @property
    def methods(self) -> List[str]:
        return [m for m in self.config["methods"] if m != EXACT_LABEL]

    @property
    def factors(self) -> List[float]:
        return list(self.config["strength_factors"])

    def cells(self, method: str, factor: float) -> List[Optional[CellResult]]:
        """One entry per instance, None where the instance was skipped for this factor."""
        out = []
        for inst in self.instances:
            match = [c for c in inst.cells if c.method == method and c.factor == factor]
            out.append(match[0] if match else None)
        return out

    def aggregates(self) -> pd.DataFrame:
        """Geometric-mean deviation per (factor, method) over non-divergent instances."""
        rows = []
        for factor in self.factors:
            for method in self.methods:
                cells = self.cells(method, factor)
                values = [c.deviation for c in cells if c is not None and not c.diverged
                          and c.deviation is not None and np.isfinite(c.deviation) and c.deviation > 0]
                n_skipped = sum(1 for c in cells if c is None)
                n_diverged = len(cells) - n_skipped - len(values)
                try:
                    geo, log_std = geo_mean_log(values)
                except NonPositiveValue:
                    geo, log_std = None, None
                rows.append(
                    {
                        "factor": factor,
                        "method": method,
                        "geo_mean_deviation": geo,
                        "log10_std": log_std,
                        "n_aggregated": len(values),
                        "n_diverged": n_diverged,
                        "n_skipped": n_skipped,
                    }
                )
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "instances": [inst.to_dict() for inst in self.instances],
            "aggregates": self.aggregates().to_dict(orient="records"),
        }

    def to_json(self) -> str:
        return dumps_deterministic(self.to_dict())


def run_instance(
    cfg: EnsembleConfig, index: int, settings: NumericSettings, registry: Optional[MethodRegistry] = None
) -> InstanceResult:
    seed = substream_seed(cfg.seed, index)
    instance = gen_instance(RngStream(seed), cfg.n_levels, cfg.n_channels, cfg.n_modes)
    horizon = cfg.horizon or time_horizon(instance.system, instance.network, cfg.horizon_clamp)
    grid = TimeGrid(t_end=horizon, n_steps=cfg.n_steps)
    result = InstanceResult(index=index, seed=seed, horizon=horizon)
    for factor in cfg.strength_factors:
        evaluator = ScenarioEvaluator(instance.system, Scaled(instance.network, factor), settings, registry=registry)
        try:
            exact = evaluator.evaluate(EXACT_LABEL, instance.rho0, grid).trajectory
        except LindbladForgeError as exc:
            logger.warning("Instance %d, factor %g: exact run skipped (%s)", index, factor, exc)
            result.skipped[repr(float(factor))] = f"{type(exc).__name__}: {exc}"
            continue
        for method in cfg.methods:
            if evaluator.prescription(method) is None:
                continue
            outcome = evaluator.evaluate(method, instance.rho0, grid)
            me = outcome.master_equation
            dev = None
            if not outcome.diverged and not exact.diverged:
                dev = deviation(exact, outcome.trajectory).time_average
            result.cells.append(
                CellResult(
                    factor=factor,
                    method=method,
                    deviation=dev,
                    diverged=outcome.diverged or exact.diverged,
                    eigenvalues=kossakowski_spectrum(me).values.tolist(),
                    repair_distance=repair_distance(me),
                    delta_herm_defect=me.delta_defect,
                    kossakowski_defect=me.kossakowski_defect,
                )
            )
    return result


def run_ensemble(
    cfg: EnsembleConfig,
    settings: Optional[NumericSettings] = None,
    threads: int = 1,
    progress: bool = True,
    registry: Optional[MethodRegistry] = None,
) -> EnsembleReport:
    """Run every instance (in parallel when threads > 1) and reduce in index order."""
    settings = settings or NumericSettings.from_settings({}, cfg.integrator, cfg.exact)
    results: List[Optional[InstanceResult]] = [None] * cfg.n_systems
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = {pool.submit(run_instance, cfg, i, settings, registry): i for i in range(cfg.n_systems)}
        for future in tqdm(as_completed(futures), total=len(futures), desc="Instances", disable=not progress):
            results[futures[future]] = future.result()
    return EnsembleReport(config=cfg.model_dump(mode="json"), instances=list(results))


# ----------------------------------------------------------------------
# Kossakowski eigenvalue statistics
# ----------------------------------------------------------------------

def normalize_eigenvalues(values: Sequence[float]) -> np.ndarray:
    """Ascending eigenvalues divided by the largest (positive) one."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0 or arr[-1] <= 0:
        raise DegenerateNormalization("Largest Kossakowski eigenvalue is not positive")
    return arr / arr[-1]


@dataclass
class EigenvalueStats:
    histograms: pd.DataFrame
    summary: pd.DataFrame


def _log_edges(hist: HistogramConfig) -> np.ndarray:
    n_bins = int(round((hist.log10_max - hist.log10_min) * hist.bins_per_decade))
    return np.linspace(hist.log10_min, hist.log10_max, n_bins + 1)


def eigenvalue_stats(
    report: EnsembleReport,
    factor: Optional[float] = None,
    hist: Optional[HistogramConfig] = None,
) -> EigenvalueStats:
    """Signed-log histograms of normalized eigenvalues per method and rank.

    Rank 1 is the most negative eigenvalue. Negative values are binned by
    log10|x| on the "negative" side; values below the lowest edge are
    dropped from the histogram but kept in the summary.
    """
    hist = hist or HistogramConfig()
    factor = report.factors[0] if factor is None else factor
    edges = _log_edges(hist)
    hist_rows, summary_rows = [], []
    for method in report.methods:
        normalized, flagged = [], 0
        for cell in report.cells(method, factor):
            if cell is None or not cell.eigenvalues:
                continue
            try:
                normalized.append(normalize_eigenvalues(cell.eigenvalues))
            except DegenerateNormalization:
                flagged += 1
        ratios = [abs(v[0]) for v in normalized]
        summary_rows.append(
            {
                "method": method,
                "factor": factor,
                "n_instances": len(normalized),
                "n_flagged": flagged,
                "median_negative_ratio": float(np.median(ratios)) if ratios else None,
                "median_min_normalized": float(np.median([v[0] for v in normalized])) if normalized else None,
            }
        )
        if not normalized:
            continue
        n_ranks = min(len(v) for v in normalized)
        for rank in range(n_ranks):
            column = np.array([v[rank] for v in normalized])
            for side, values in (("negative", -column[column < 0]), ("positive", column[column > 0])):
                counts, _ = np.histogram(np.log10(values), bins=edges)
                for lo, hi, count in zip(edges[:-1], edges[1:], counts):
                    hist_rows.append(
                        {
                            "method": method,
                            "rank": rank + 1,
                            "side": side,
                            "bin_lo_log10": float(lo),
                            "bin_hi_log10": float(hi),
                            "count": int(count),
                        }
                    )
    return EigenvalueStats(histograms=pd.DataFrame(hist_rows), summary=pd.DataFrame(summary_rows))
