"""Time evolution of density matrices and the exact pseudomode benchmark.

`integrate` covers each output interval with 2^k classical RK4 substeps. The
substep count is doubled until two successive levels agree to `local_tol`
(Richardson estimate) and the level then stays for the rest of the trajectory.
For small generators the 2^k-step propagator of one interval is formed once as
a matrix polynomial and reused, which keeps long horizons affordable.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.bath import PseudomodeNetwork
from src.errors import (
    DimensionCap,
    DimensionMismatch,
    InvalidInitialState,
    MaxRefinement,
    TruncationUnconverged,
    TruncationWarning,
)
from src.operators import (
    LindbladGenerator,
    Superoperator,
    as_matrix,
    dagger,
    hermiticity_defect,
    min_eigenvalue,
    partial_trace,
    unvec,
    vec,
)
from src.system_model import SystemSpec

logger = logging.getLogger(__name__)

DEFAULT_LOCAL_TOL = 1e-9
DEFAULT_MAX_REFINEMENT = 8
DEFAULT_DENSE_CAP = 2304
DEFAULT_DIVERGENCE_NORM = 1e6
RICHARDSON_RK4 = 15.0
STABILITY_TARGET = 0.5


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(t_end=self.t_end, n_steps=self.n_steps * factor, t_start=self.t_start)

    def to_dict(self) -> Dict[str, float]:
        return {"t_start": self.t_start, "t_end": self.t_end, "n_steps": self.n_steps}


@dataclass
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    trace: np.ndarray
    min_eig: np.ndarray
    herm_defect: np.ndarray
    monitor: Optional[np.ndarray] = None
    diverged: bool = False
    diverged_at: Optional[int] = None
    refinement_level: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def element(self, n: int, m: int) -> np.ndarray:
        return self.states[:, n, m]

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("kii->ki", self.states))

    def in_basis(self, basis: np.ndarray) -> "Trajectory":
        """States rotated to `basis` (columns are the new basis vectors)."""
        rotated = np.einsum("ab,kbc,cd->kad", dagger(basis), self.states, basis)
        return Trajectory(
            grid=self.grid,
            states=rotated,
            trace=self.trace,
            min_eig=self.min_eig,
            herm_defect=self.herm_defect,
            monitor=self.monitor,
            diverged=self.diverged,
            diverged_at=self.diverged_at,
            refinement_level=self.refinement_level,
            metadata=dict(self.metadata),
        )

    def diagnostics_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "t_inv_eV": self.grid.times,
                "trace_re": np.real(self.trace),
                "trace_im": np.imag(self.trace),
                "min_eig": self.min_eig,
                "herm_defect": self.herm_defect,
            }
        )
        if self.monitor is not None:
            frame["monitor"] = self.monitor
        return frame

    def to_frame(self, observables: Optional[Sequence[Tuple[int, int]]] = None) -> pd.DataFrame:
        """Columns t_inv_eV, re/im of each observable rho_nm, trace, min_eig."""
        if observables is None:
            observables = [(n, n) for n in range(self.dim)]
        data = {"t_inv_eV": self.grid.times}
        for n, m in observables:
            values = self.element(n, m)
            data[f"re_rho_{n}{m}"] = np.real(values)
            data[f"im_rho_{n}{m}"] = np.imag(values)
        data["trace"] = np.real(self.trace)
        data["min_eig"] = self.min_eig
        return pd.DataFrame(data)


def _check_initial_state(rho0: np.ndarray, dim: int, check_psd: bool) -> np.ndarray:
    rho = as_matrix(rho0)
    if rho.shape != (dim, dim):
        raise DimensionMismatch(f"Initial state is {rho.shape}, generator acts on {dim}x{dim}")
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise InvalidInitialState(f"Initial state has trace {np.trace(rho):.6g}")
    if check_psd:
        if hermiticity_defect(rho) > 1e-10:
            raise InvalidInitialState("Initial state is not Hermitian")
        if min_eigenvalue(rho) < -1e-10:
            raise InvalidInitialState("Initial state is not positive semidefinite")
    return rho


def _square_up(step: np.ndarray, level: int) -> np.ndarray:
    out = step
    for _ in range(level):
        out = out @ out
    return out


class _DensePropagator:
    """Per-interval propagators Phi_k = (RK4 step of dt/2^k)^(2^k), cached by k."""

    def __init__(self, generator: Superoperator, dt: float):
        self.generator = generator
        self.dt = dt
        self._cache: Dict[int, np.ndarray] = {}

    def interval(self, level: int) -> np.ndarray:
        if level not in self._cache:
            step = self.generator.rk4_step_matrix(self.dt / 2**level)
            self._cache[level] = _square_up(step, level)
            logger.debug("Built interval propagator at level %d", level)
        return self._cache[level]

    def advance(self, state: np.ndarray, level: int) -> np.ndarray:
        return unvec(self.interval(level) @ vec(state), self.generator.dim)


class _ExplicitPropagator:
    """RK4 substeps applied directly; used when L^2 x L^2 matrices are too large."""

    def __init__(self, generator: Superoperator, dt: float):
        self.generator = generator
        self.dt = dt

    def advance(self, state: np.ndarray, level: int) -> np.ndarray:
        h = self.dt / 2**level
        apply = self.generator.apply
        rho = state
        for _ in range(2**level):
            k1 = apply(rho)
            k2 = apply(rho + 0.5 * h * k1)
            k3 = apply(rho + 0.5 * h * k2)
            k4 = apply(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return rho


def initial_level(generator: Superoperator, dt: float) -> int:
    """Smallest k with spectral_bound * dt / 2^k <= 0.5."""
    bound = generator.spectral_bound * dt
    if bound <= STABILITY_TARGET:
        return 0
    return int(math.ceil(math.log2(bound / STABILITY_TARGET)))


def _refine_step(
    propagator, state: np.ndarray, level: int, start_level: int, local_tol: float,
    max_refinement: int, divergence_norm: float,
) -> Tuple[np.ndarray, int]:
    while True:
        coarse = propagator.advance(state, level)
        fine = propagator.advance(state, level + 1)
        if not np.all(np.isfinite(fine)):
            raise MaxRefinement("State became non-finite")
        if np.linalg.norm(fine) > divergence_norm:
            raise MaxRefinement(f"State norm exceeded {divergence_norm:.1e}")
        error = np.linalg.norm(fine - coarse) / RICHARDSON_RK4
        if error <= local_tol:
            return fine, level
        if level - start_level >= max_refinement:
            raise MaxRefinement(
                f"Local error {error:.2e} above {local_tol:.1e} after {max_refinement} refinements"
            )
        level += 1
        logger.debug("Refining to level %d (error %.2e)", level, error)


def integrate(
    generator: Superoperator,
    rho0: np.ndarray,
    grid: TimeGrid,
    local_tol: float = DEFAULT_LOCAL_TOL,
    max_refinement: int = DEFAULT_MAX_REFINEMENT,
    dense_cap: int = DEFAULT_DENSE_CAP,
    divergence_norm: float = DEFAULT_DIVERGENCE_NORM,
    check_psd: bool = True,
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    monitor: Optional[Callable[[np.ndarray], float]] = None,
) -> Trajectory:
    """Propagate rho0 over `grid`; divergence sets `Trajectory.diverged` instead of raising.

    `transform` maps each full state to the recorded one (e.g. a partial trace);
    `monitor` records one real number per step from the full state.
    """
    dim = generator.dim
    rho = _check_initial_state(rho0, dim, check_psd)
    dt = grid.dt
    if dim * dim <= dense_cap:
        propagator = _DensePropagator(generator, dt)
    else:
        propagator = _ExplicitPropagator(generator, dt)
    level = initial_level(generator, dt)
    start_level = level

    recorded = transform(rho) if transform is not None else rho
    out_dim = recorded.shape[0]
    n_out = grid.n_steps + 1
    states = np.full((n_out, out_dim, out_dim), np.nan, dtype=complex)
    monitor_values = np.full(n_out, np.nan) if monitor is not None else None
    states[0] = recorded
    if monitor_values is not None:
        monitor_values[0] = monitor(rho)

    diverged_at = None
    for step in range(1, n_out):
        try:
            rho, level = _refine_step(
                propagator, rho, level, start_level, local_tol, max_refinement, divergence_norm
            )
        except MaxRefinement as exc:
            diverged_at = step
            logger.warning("Divergence at step %d (t=%.4g): %s", step, grid.times[step], exc)
            break
        states[step] = transform(rho) if transform is not None else rho
        if monitor_values is not None:
            monitor_values[step] = monitor(rho)

    trace, min_eig, defect = _state_diagnostics(states)
    return Trajectory(
        grid=grid,
        states=states,
        trace=trace,
        min_eig=min_eig,
        herm_defect=defect,
        monitor=monitor_values,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        refinement_level=level,
    )


def _state_diagnostics(states: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    trace = np.einsum("kii->k", states)
    hermitian_part = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    finite = np.all(np.isfinite(states), axis=(1, 2))
    min_eig = np.full(len(states), np.nan)
    if np.any(finite):
        min_eig[finite] = np.linalg.eigvalsh(hermitian_part[finite])[:, 0]
    defect = np.linalg.norm(states - np.conj(np.swapaxes(states, 1, 2)), axis=(1, 2))
    return trace, min_eig, defect


# ----------------------------------------------------------------------
# Exact benchmark: system coupled to a lossy pseudomode network
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExactModel:
    system: SystemSpec
    network: PseudomodeNetwork
    n_max: int = 3

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be at least 1, got {self.n_max}")
        if self.system.n_channels != self.network.n_channels:
            raise DimensionMismatch(
                f"System has {self.system.n_channels} coupling operators, "
                f"network couples {self.network.n_channels} channels"
            )

    @property
    def mode_dim(self) -> int:
        return (self.n_max + 1) ** self.network.n_modes

    @property
    def dim(self) -> int:
        return self.system.dim * self.mode_dim

    def with_n_max(self, n_max: int) -> "ExactModel":
        return ExactModel(system=self.system, network=self.network, n_max=n_max)


def annihilation_ops(n_modes: int, n_max: int) -> List[np.ndarray]:
    """a_b on the truncated Fock space of all modes, mode 0 most significant."""
    single = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)
    eye = np.eye(n_max + 1, dtype=complex)
    ops = []
    for beta in range(n_modes):
        op = np.ones((1, 1), dtype=complex)
        for gamma_idx in range(n_modes):
            op = np.kron(op, single if gamma_idx == beta else eye)
        ops.append(op)
    return ops


def highest_layer_mask(n_modes: int, n_max: int) -> np.ndarray:
    """True for mode basis states where some mode sits in Fock level n_max."""
    levels = np.indices((n_max + 1,) * n_modes).reshape(n_modes, -1)
    return np.any(levels == n_max, axis=0)


def build_exact(model: ExactModel, dimension_cap: int = 4096) -> LindbladGenerator:
    """System + modes generator with counter-rotating couplings A_a g_ab (a_b^dagger + a_b)."""
    if model.dim > dimension_cap:
        raise DimensionCap(f"Composite dimension {model.dim} exceeds cap {dimension_cap}")
    net = model.network
    modes = annihilation_ops(net.n_modes, model.n_max)
    eye_s = np.eye(model.system.dim, dtype=complex)
    eye_m = np.eye(model.mode_dim, dtype=complex)

    h_modes = np.zeros((model.mode_dim, model.mode_dim), dtype=complex)
    for beta in range(net.n_modes):
        for gam in range(net.n_modes):
            if net.omega[beta, gam] != 0.0:
                h_modes += net.omega[beta, gam] * dagger(modes[beta]) @ modes[gam]
    hamiltonian = np.kron(model.system.hamiltonian, eye_m) + np.kron(eye_s, h_modes)
    for alpha, a_op in enumerate(model.system.coupling_ops):
        for beta in range(net.n_modes):
            g = net.couplings[alpha, beta]
            if g != 0.0:
                hamiltonian += g * np.kron(a_op, modes[beta] + dagger(modes[beta]))
    jumps = [(net.kappas[beta], np.kron(eye_s, modes[beta])) for beta in range(net.n_modes)]
    return LindbladGenerator(hamiltonian, jumps)


def exact_trajectory(
    model: ExactModel,
    rho0_system: np.ndarray,
    grid: TimeGrid,
    truncation_tol: float = 1e-6,
    max_retries: int = 2,
    dimension_cap: int = 4096,
    **integrate_kwargs,
) -> Trajectory:
    """Reduced system trajectory with the modes starting in vacuum.

    The highest Fock layer is monitored; if it carries more than
    `truncation_tol` population the run is repeated with n_max + 1.
    """
    current = model
    attempt = 0
    while True:
        generator = build_exact(current, dimension_cap)
        vacuum = np.zeros((current.mode_dim, current.mode_dim), dtype=complex)
        vacuum[0, 0] = 1.0
        rho0 = np.kron(as_matrix(rho0_system), vacuum)
        dims = [current.system.dim, current.mode_dim]
        mask = np.kron(np.ones(current.system.dim, dtype=bool),
                       highest_layer_mask(current.network.n_modes, current.n_max))

        traj = integrate(
            generator,
            rho0,
            grid,
            transform=lambda rho, dims=dims: partial_trace(rho, dims, 0),
            monitor=lambda rho, mask=mask: float(np.real(np.diagonal(rho)[mask].sum())),
            **integrate_kwargs,
        )
        traj.metadata["n_max"] = current.n_max
        top = np.nanmax(traj.monitor) if np.any(np.isfinite(traj.monitor)) else np.inf
        if top < truncation_tol:
            return traj
        message = (
            f"Highest Fock layer population {top:.2e} >= {truncation_tol:.1e} "
            f"at n_max={current.n_max}"
        )
        if attempt == max_retries:
            raise TruncationUnconverged(message)
        warnings.warn(message + "; retrying with n_max+1", TruncationWarning, stacklevel=2)
        logger.warning("%s; retrying with n_max=%d", message, current.n_max + 1)
        current = current.with_n_max(current.n_max + 1)
        attempt += 1
