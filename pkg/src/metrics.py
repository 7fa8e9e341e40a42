"""Deviation measures, geometric-mean statistics and state diagnostics."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from src.errors import DimensionMismatch, GridMismatch, NonPositiveValue
from src.operators import as_matrix, dagger
from src.propagator import TimeGrid, Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeviationSeries:
    grid: TimeGrid
    values: np.ndarray
    time_average: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t_inv_eV": self.grid.times, "deviation": self.values})


@dataclass(frozen=True)
class Diagnostics:
    hermiticity_defect: float
    min_population: float
    min_eigenvalue: float
    trace_error: float

    def to_dict(self) -> dict:
        return {
            "hermiticity_defect": self.hermiticity_defect,
            "min_population": self.min_population,
            "min_eigenvalue": self.min_eigenvalue,
            "trace_error": self.trace_error,
        }


@dataclass(frozen=True)
class ComplexPopulation:
    times: np.ndarray
    modulus: np.ndarray
    phase: np.ndarray
    real: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t_inv_eV": self.times, "modulus": self.modulus, "phase": self.phase, "real": self.real}
        )


def time_average(grid: TimeGrid, values: np.ndarray) -> float:
    """Trapezoidal mean over the grid."""
    return float(trapezoid(values, grid.times) / (grid.t_end - grid.t_start))


def deviation(traj_a: Trajectory, traj_b: Trajectory) -> DeviationSeries:
    """Per-step ||rho_a(t) - rho_b(t)||_F and its time average."""
    if traj_a.grid != traj_b.grid:
        raise GridMismatch(f"Grids differ: {traj_a.grid} vs {traj_b.grid}")
    if traj_a.states.shape != traj_b.states.shape:
        raise DimensionMismatch(
            f"State shapes differ: {traj_a.states.shape} vs {traj_b.states.shape}"
        )
    values = np.linalg.norm(traj_a.states - traj_b.states, axis=(1, 2))
    return DeviationSeries(grid=traj_a.grid, values=values, time_average=time_average(traj_a.grid, values))


def geo_mean_log(values) -> Tuple[float, Optional[float]]:
    """Geometric mean and standard deviation of log10 values (None for a single value)."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise NonPositiveValue("No values to average")
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise NonPositiveValue(f"All values must be positive and finite, got min {np.min(arr)}")
    geo = float(np.exp(np.mean(np.log(arr))))
    if arr.size == 1:
        return geo, None
    return geo, float(np.std(np.log10(arr)))


def diagnose(m) -> Diagnostics:
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"Square matrix expected, got {arr.shape}")
    hermitian_part = 0.5 * (arr + dagger(arr))
    return Diagnostics(
        hermiticity_defect=float(np.linalg.norm(arr - dagger(arr))),
        min_population=float(np.min(np.real(np.diag(arr)))),
        min_eigenvalue=float(np.linalg.eigvalsh(hermitian_part)[0]),
        trace_error=float(abs(np.trace(arr) - 1.0)),
    )


def fit_lifetime(traj: Trajectory, level: int, window: Tuple[float, float] = (0.05, 0.5)) -> float:
    """Lifetime from a log-linear fit of rho_ll while it lies in window * rho_ll(0).

    Returns nan when fewer than two points fall in the window.
    """
    pop = np.real(traj.element(level, level))
    initial = pop[0]
    lo, hi = window[0] * initial, window[1] * initial
    mask = np.isfinite(pop) & (pop >= lo) & (pop <= hi)
    if initial <= 0 or np.count_nonzero(mask) < 2:
        logger.warning("Level %d never decays through [%.3g, %.3g]; no lifetime fitted", level, lo, hi)
        return float("nan")
    slope, _ = np.polyfit(traj.grid.times[mask], np.log(pop[mask]), 1)
    if slope >= 0:
        return float("inf")
    return float(-1.0 / slope)


def complex_population(traj: Trajectory, level: int) -> ComplexPopulation:
    """Modulus, unwrapped phase and real part of rho_ll(t)."""
    values = traj.element(level, level)
    return ComplexPopulation(
        times=traj.grid.times,
        modulus=np.abs(values),
        phase=np.unwrap(np.angle(values)),
        real=np.real(values),
    )
