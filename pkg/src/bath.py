"""Bath models: matrix-valued spectral density J(w) and Lamb-shift integral lambda(w).

Zero temperature throughout. Decay rates are gamma(w) = 2 pi J(w); lambda is the
principal-value transform P int J(w')/(w - w') dw'.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from src.errors import DimensionMismatch, ExactUnavailable, NonPositiveValue, SingularResolvent
from src.utils.json_utils import decode_matrix, encode_matrix

logger = logging.getLogger(__name__)

# (h - w) is treated as singular above this condition number
RESOLVENT_COND_LIMIT = 1e12


class SpectralModel(ABC):
    """Base class for every bath family."""

    kind: str = ""

    @property
    @abstractmethod
    def n_channels(self) -> int:
        ...

    @abstractmethod
    def evaluate_grid(self, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """J and lambda at each frequency, stacked as (K, M, M) arrays."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        ...

    def evaluate(self, omega: float) -> "BathEval":
        j, lam = self.evaluate_grid(np.array([float(omega)]))
        return BathEval(J=j[0], lam=lam[0], at_frequency=float(omega))


@dataclass(frozen=True)
class BathEval:
    J: np.ndarray
    lam: np.ndarray
    at_frequency: float

    @property
    def gamma(self) -> np.ndarray:
        return 2.0 * np.pi * self.J


class Lorentzian(SpectralModel):
    """Single-channel Lorentzian peak of width kappa at w_M with coupling g."""

    kind = "lorentzian"

    def __init__(self, g: float, omega_m: float, kappa: float):
        if kappa <= 0:
            raise NonPositiveValue(f"Lorentzian width must be positive, got kappa={kappa}")
        self.g = float(g)
        self.omega_m = float(omega_m)
        self.kappa = float(kappa)

    @property
    def n_channels(self) -> int:
        return 1

    def evaluate_grid(self, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        w = np.asarray(omegas, dtype=float)
        detuning = w - self.omega_m
        half = 0.5 * self.kappa
        denom = detuning**2 + half**2
        j = self.g**2 / np.pi * half / denom
        lam = self.g**2 * detuning / denom
        return j.reshape(-1, 1, 1).astype(complex), lam.reshape(-1, 1, 1).astype(complex)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "g": self.g, "omega_m": self.omega_m, "kappa": self.kappa}

    def __repr__(self) -> str:
        return f"Lorentzian(g={self.g}, omega_m={self.omega_m}, kappa={self.kappa})"


class PseudomodeNetwork(SpectralModel):
    """N coupled lossy modes: h = Omega - i diag(kappa)/2, couplings g (M x N).

    J(w) = g Im[(h - w)^-1] g^T / pi and lambda(w) = -g Re[(h - w)^-1] g^T.
    """

    kind = "network"

    def __init__(self, omega: np.ndarray, kappas: np.ndarray, couplings: np.ndarray):
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
        couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
        n_modes = omega.shape[0]
        if omega.shape != (n_modes, n_modes):
            raise DimensionMismatch(f"Mode matrix must be square, got {omega.shape}")
        if not np.allclose(omega, omega.T, atol=1e-12):
            raise DimensionMismatch("Mode matrix Omega must be symmetric")
        if kappas.shape != (n_modes,):
            raise DimensionMismatch(f"Expected {n_modes} mode rates, got {kappas.shape}")
        if couplings.shape[1] != n_modes:
            raise DimensionMismatch(
                f"Couplings must be M x {n_modes}, got {couplings.shape}"
            )
        if np.any(kappas <= 0):
            raise NonPositiveValue(f"Mode loss rates must be positive, got {kappas}")
        self.omega = omega
        self.kappas = kappas
        self.couplings = couplings

    @property
    def n_channels(self) -> int:
        return self.couplings.shape[0]

    @property
    def n_modes(self) -> int:
        return self.omega.shape[0]

    @property
    def h_matrix(self) -> np.ndarray:
        return self.omega - 0.5j * np.diag(self.kappas)

    def _resolvent_products(self, w: np.ndarray) -> np.ndarray:
        """C(w) = g (h - w)^-1 g^T for every w."""
        h = self.h_matrix
        g = self.couplings.astype(complex)
        mu, vecs = np.linalg.eig(h)
        if np.linalg.cond(vecs) < 1e8:
            left = g @ vecs
            right = np.linalg.solve(vecs, g.T)
            denom = mu[None, :] - w[:, None]
            if np.any(np.abs(denom) < 1.0 / RESOLVENT_COND_LIMIT):
                raise SingularResolvent("h - w is singular on the requested grid")
            return np.einsum("an,kn,nb->kab", left, 1.0 / denom, right)
        # nearly defective h: solve point by point
        eye = np.eye(self.n_modes)
        out = np.empty((len(w), self.n_channels, self.n_channels), dtype=complex)
        for k, wk in enumerate(w):
            shifted = h - wk * eye
            if np.linalg.cond(shifted) > RESOLVENT_COND_LIMIT:
                raise SingularResolvent(f"h - w is singular at w={wk}")
            out[k] = g @ np.linalg.solve(shifted, g.T)
        return out

    def evaluate_grid(self, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        c = self._resolvent_products(w)
        # g real, so g Im(R) g^T = Im(g R g^T)
        j = c.imag / np.pi
        lam = -c.real
        j = 0.5 * (j + np.swapaxes(j, 1, 2))
        lam = 0.5 * (lam + np.swapaxes(lam, 1, 2))
        return j.astype(complex), lam.astype(complex)

    def scaled(self, factor: float) -> "PseudomodeNetwork":
        """Same modes with couplings multiplied by sqrt(factor)."""
        return PseudomodeNetwork(self.omega, self.kappas, self.couplings * np.sqrt(factor))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.kind,
            "omega": self.omega.tolist(),
            "kappas": self.kappas.tolist(),
            "couplings": self.couplings.tolist(),
        }

    def __repr__(self) -> str:
        return f"PseudomodeNetwork(N={self.n_modes}, M={self.n_channels})"


class Scaled(SpectralModel):
    """`base` with J and lambda multiplied by `factor`."""

    kind = "scaled"

    def __init__(self, base: SpectralModel, factor: float):
        if factor <= 0:
            raise NonPositiveValue(f"Strength factor must be positive, got {factor}")
        self.base = base
        self.factor = float(factor)

    @property
    def n_channels(self) -> int:
        return self.base.n_channels

    def evaluate_grid(self, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        j, lam = self.base.evaluate_grid(omegas)
        return self.factor * j, self.factor * lam

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "factor": self.factor, "base": self.base.to_dict()}

    def __repr__(self) -> str:
        return f"Scaled({self.base!r}, factor={self.factor})"


def model_from_dict(data: Dict[str, Any]) -> SpectralModel:
    kind = data.get("type")
    if kind == Lorentzian.kind:
        return Lorentzian(g=data["g"], omega_m=data["omega_m"], kappa=data["kappa"])
    if kind == PseudomodeNetwork.kind:
        return PseudomodeNetwork(
            omega=np.real(decode_matrix(data["omega"])),
            kappas=data["kappas"],
            couplings=np.real(decode_matrix(data["couplings"])),
        )
    if kind == Scaled.kind:
        return Scaled(model_from_dict(data["base"]), data["factor"])
    raise ValueError(f"Unknown spectral model type: {kind!r}")


def eval_J(model: SpectralModel, omega: float) -> np.ndarray:
    return model.evaluate(omega).J


def eval_lambda(model: SpectralModel, omega: float) -> np.ndarray:
    return model.evaluate(omega).lam


def gamma(model: SpectralModel, omega: float) -> np.ndarray:
    return model.evaluate(omega).gamma


def rates_on_grid(model: SpectralModel, omegas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """gamma = 2 pi J and lambda stacked over `omegas`."""
    j, lam = model.evaluate_grid(np.asarray(omegas, dtype=float))
    return 2.0 * np.pi * j, lam


def lorentzian_to_network(model: Lorentzian) -> PseudomodeNetwork:
    """The single lossy mode with the same J and lambda."""
    return PseudomodeNetwork(
        omega=np.array([[model.omega_m]]),
        kappas=np.array([model.kappa]),
        couplings=np.array([[model.g]]),
    )


def as_network(model: SpectralModel) -> PseudomodeNetwork:
    """Pseudomode network realizing `model` exactly, or ExactUnavailable."""
    if isinstance(model, PseudomodeNetwork):
        return model
    if isinstance(model, Lorentzian):
        return lorentzian_to_network(model)
    if isinstance(model, Scaled):
        return as_network(model.base).scaled(model.factor)
    raise ExactUnavailable(f"No pseudomode representation for {model!r}")


# ----------------------------------------------------------------------
# Kramers-Kronig check
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class KKGrid:
    lower: float
    upper: float
    n_points: int = 200_001
    window_fraction: float = 1e-3

    @property
    def window_half_width(self) -> float:
        return 0.5 * self.window_fraction * (self.upper - self.lower)


def default_kk_grid(model: SpectralModel, omega: Optional[float] = None) -> KKGrid:
    if isinstance(model, Scaled):
        return default_kk_grid(model.base, omega)
    if isinstance(model, Lorentzian):
        lower = model.omega_m - 50.0 * model.kappa
        upper = model.omega_m + 50.0 * model.kappa
    elif isinstance(model, PseudomodeNetwork):
        mode_energies = np.linalg.eigvalsh(model.omega)
        spread = 50.0 * float(np.max(model.kappas))
        lower = float(mode_energies[0]) - spread
        upper = float(mode_energies[-1]) + spread
    else:
        raise ValueError(f"No default grid for {model!r}")
    if omega is not None:
        margin = 0.1 * (upper - lower)
        lower = min(lower, omega - margin)
        upper = max(upper, omega + margin)
    return KKGrid(lower=lower, upper=upper)


def kk_check(model: SpectralModel, omega: float, grid: Optional[KKGrid] = None) -> np.ndarray:
    """Principal-value quadrature of int J(w')/(w - w') dw' on a finite grid.

    The pole is subtracted analytically; inside the symmetric pole window the
    regular integrand is replaced by its limit -J'(w).
    """
    grid = grid or default_kk_grid(model, omega)
    if not grid.lower < omega < grid.upper:
        raise ValueError(f"omega={omega} outside quadrature range [{grid.lower}, {grid.upper}]")
    x = np.linspace(grid.lower, grid.upper, grid.n_points)
    j_grid, _ = model.evaluate_grid(x)
    j_here = eval_J(model, omega)
    half = grid.window_half_width
    step = 1e-2 * half
    j_plus, j_minus = eval_J(model, omega + step), eval_J(model, omega - step)
    slope = (j_plus - j_minus) / (2.0 * step)

    distance = omega - x
    inside = np.abs(distance) < half
    safe = np.where(inside, 1.0, distance)
    integrand = (j_grid - j_here[None]) / safe[:, None, None]
    integrand[inside] = -slope
    regular = trapezoid(integrand, x, axis=0)
    pole = j_here * np.log((omega - grid.lower) / (grid.upper - omega))
    return regular + pole
