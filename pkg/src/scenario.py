"""Scenario and ensemble configuration schemas.

All energies are in eV and all times in 1/eV (hbar = 1). Matrices are nested
lists of reals or {"re": [...], "im": [...]} objects. Unknown keys are
rejected.
"""

from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.bath import Lorentzian, PseudomodeNetwork, Scaled, SpectralModel
from src.builder import Prescription
from src.errors import ConfigError
from src.method_registry import EXACT_LABEL
from src.system_model import SystemSpec, detuned_three_level, three_level_system
from src.utils.json_utils import decode_matrix, load_json_safe

ALL_METHODS = "all"
DEFAULT_ENSEMBLE_METHODS = ["Exact", "BRE", "BRE(+)", "aLaG", "aLaG(+)", "aLgG", "aLgG(+)"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RandomInstanceConfig(StrictModel):
    seed: int = 1234321
    index: int = Field(default=0, ge=0)
    n_levels: int = Field(default=3, ge=2)
    n_channels: int = Field(default=2, ge=1)
    n_modes: int = Field(default=2, ge=1)


class SystemConfig(StrictModel):
    kind: Literal["inline", "three_level", "detuned_three_level", "random"] = "inline"
    hamiltonian: Optional[Any] = None
    coupling_ops: Optional[List[Any]] = None
    omega1: float = 0.75
    omega2: float = 1.35
    omega_m: float = 1.0
    delta: float = 0.1
    d: float = 1.0
    random: Optional[RandomInstanceConfig] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "SystemConfig":
        if self.kind == "inline" and (self.hamiltonian is None or not self.coupling_ops):
            raise ValueError("inline systems need 'hamiltonian' and 'coupling_ops'")
        if self.kind == "random" and self.random is None:
            self.random = RandomInstanceConfig()
        return self

    def build(self, delta: Optional[float] = None) -> SystemSpec:
        if self.kind == "inline":
            return SystemSpec(
                hamiltonian=decode_matrix(self.hamiltonian),
                coupling_ops=tuple(decode_matrix(a) for a in self.coupling_ops),
            )
        if self.kind == "three_level":
            return three_level_system(self.omega1, self.omega2, self.d)
        if self.kind == "detuned_three_level":
            return detuned_three_level(self.omega_m, self.delta if delta is None else delta, self.d)
        raise ConfigError("random systems are built together with their bath")


class BathConfig(StrictModel):
    kind: Literal["lorentzian", "network", "random"] = "lorentzian"
    g: float = 0.1
    omega_m: float = 1.0
    kappa: float = Field(default=0.1, gt=0)
    g_over_kappa: Optional[float] = None
    omega: Optional[List[List[float]]] = None
    kappas: Optional[List[float]] = None
    couplings: Optional[List[List[float]]] = None
    factor: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_kind(self) -> "BathConfig":
        if self.kind == "network" and (self.omega is None or self.kappas is None or self.couplings is None):
            raise ValueError("network baths need 'omega', 'kappas' and 'couplings'")
        return self

    def coupling(self) -> float:
        return self.g_over_kappa * self.kappa if self.g_over_kappa is not None else self.g

    def build(self, g: Optional[float] = None, factor: Optional[float] = None) -> SpectralModel:
        if self.kind == "lorentzian":
            model: SpectralModel = Lorentzian(
                g=self.coupling() if g is None else g, omega_m=self.omega_m, kappa=self.kappa
            )
        elif self.kind == "network":
            model = PseudomodeNetwork(
                omega=np.array(self.omega), kappas=np.array(self.kappas), couplings=np.array(self.couplings)
            )
        else:
            raise ConfigError("random baths are built together with their system")
        scale = self.factor if factor is None else factor
        return model if scale == 1.0 else Scaled(model, scale)


class InitialStateConfig(StrictModel):
    kind: Literal["pure", "level", "density", "random"] = "level"
    amplitudes: Optional[List[Union[float, Tuple[float, float]]]] = None
    level: int = Field(default=0, ge=0)
    density: Optional[Any] = None
    basis: Literal["eigen", "original"] = "eigen"

    @model_validator(mode="after")
    def _check_kind(self) -> "InitialStateConfig":
        if self.kind == "pure" and not self.amplitudes:
            raise ValueError("pure initial states need 'amplitudes'")
        if self.kind == "density" and self.density is None:
            raise ValueError("density initial states need 'density'")
        return self

    def state_vector(self) -> np.ndarray:
        amps = np.array(
            [complex(a[0], a[1]) if isinstance(a, (tuple, list)) else complex(a) for a in self.amplitudes]
        )
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ConfigError("initial amplitudes are all zero")
        return amps / norm


class GridConfig(StrictModel):
    t_end: float = Field(gt=0)
    n_steps: int = Field(gt=0)
    t_start: float = 0.0


class SweepConfig(StrictModel):
    parameter: Literal["g", "g_over_kappa", "delta", "factor"]
    values: List[float] = Field(min_length=1)


class SpectraConfig(StrictModel):
    omega_min: float = 0.0
    omega_max: float = 2.0
    n_points: int = Field(default=401, gt=0)

    @model_validator(mode="after")
    def _check_range(self) -> "SpectraConfig":
        if not self.omega_max > self.omega_min:
            raise ValueError("omega_max must exceed omega_min")
        return self


class OutputsConfig(StrictModel):
    prefix: Optional[str] = None
    observables: Optional[List[Tuple[int, int]]] = None
    basis: Literal["eigen", "original"] = "eigen"
    complex_population_levels: List[int] = Field(default_factory=list)


class IntegratorConfig(StrictModel):
    local_tol: Optional[float] = Field(default=None, gt=0)
    max_refinement: Optional[int] = Field(default=None, ge=0)


class ExactConfig(StrictModel):
    n_max: Optional[int] = Field(default=None, ge=1)
    dimension_cap: Optional[int] = Field(default=None, ge=1)
    max_retries: Optional[int] = Field(default=None, ge=0)
    truncation_tol: Optional[float] = Field(default=None, gt=0)
    allow_lorentzian: bool = True


class LifetimeConfig(StrictModel):
    level: int = Field(default=2, ge=0)
    window: Tuple[float, float] = (0.05, 0.5)


def _prescriptions(labels: List[str]) -> List[Prescription]:
    return [Prescription.parse(label, cluster_width=1.0) for label in labels if label not in (EXACT_LABEL, ALL_METHODS)]


def _validate_labels(labels: List[str]) -> List[str]:
    _prescriptions(labels)
    return labels


def _needs_clusters(labels: List[str]) -> bool:
    return any(p.tag.needs_clusters for p in _prescriptions(labels))


class ScenarioConfig(StrictModel):
    name: str
    description: Optional[str] = None
    system: SystemConfig
    bath: BathConfig = Field(default_factory=BathConfig)
    methods: List[str] = Field(min_length=1)
    cluster_width: Optional[float] = Field(default=None, gt=0)
    secular_cutoff: Optional[float] = Field(default=None, gt=0)
    initial_state: InitialStateConfig = Field(default_factory=InitialStateConfig)
    grid: Optional[GridConfig] = None
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)
    sweep: Optional[SweepConfig] = None
    spectra: Optional[SpectraConfig] = None
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    exact: ExactConfig = Field(default_factory=ExactConfig)
    lifetime: Optional[LifetimeConfig] = None

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: List[str]) -> List[str]:
        return _validate_labels(value)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ScenarioConfig":
        if _needs_clusters(self.methods) and self.cluster_width is None:
            raise ValueError("dLdG / dLgG methods need 'cluster_width'")
        if (self.system.kind == "random") != (self.bath.kind == "random"):
            raise ValueError("random systems and random baths must be used together")
        if self.sweep is not None and self.sweep.parameter == "delta" and self.system.kind != "detuned_three_level":
            raise ValueError("delta sweeps need a detuned_three_level system")
        if self.sweep is not None and self.sweep.parameter in ("g", "g_over_kappa") and self.bath.kind != "lorentzian":
            raise ValueError("coupling sweeps need a lorentzian bath")
        return self

    @property
    def output_prefix(self) -> str:
        return self.outputs.prefix or self.name


class HistogramConfig(StrictModel):
    log10_min: float = -8.0
    log10_max: float = 0.0
    bins_per_decade: int = Field(default=4, gt=0)


class EnsembleConfig(StrictModel):
    name: str = "ensemble"
    description: Optional[str] = None
    seed: int = 1234321
    n_systems: int = Field(default=200, ge=1)
    n_levels: int = Field(default=3, ge=2)
    n_channels: int = Field(default=2, ge=1)
    n_modes: int = Field(default=2, ge=1)
    strength_factors: List[float] = Field(default_factory=lambda: np.logspace(0.0, 4.0, 7).tolist(), min_length=1)
    methods: List[str] = Field(default_factory=lambda: list(DEFAULT_ENSEMBLE_METHODS), min_length=1)
    n_steps: int = Field(default=200, gt=0)
    horizon: Optional[float] = Field(default=None, gt=0)
    horizon_clamp: Tuple[float, float] = (1e2, 1e5)
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    exact: ExactConfig = Field(default_factory=ExactConfig)
    histogram: HistogramConfig = Field(default_factory=HistogramConfig)

    @field_validator("strength_factors")
    @classmethod
    def _positive_factors(cls, value: List[float]) -> List[float]:
        if any(f <= 0 for f in value):
            raise ValueError("strength factors must be positive")
        return value

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, value: List[str]) -> List[str]:
        if _needs_clusters(value):
            raise ValueError("cluster-based methods are not supported in ensembles")
        return value


def _load(path: Union[str, Path], model):
    ok, data, error = load_json_safe(path)
    if not ok:
        raise ConfigError(f"Cannot read {path}: {error}")
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration {path}:\n{exc}") from exc


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    return _load(path, ScenarioConfig)


def load_ensemble_config(path: Union[str, Path]) -> EnsembleConfig:
    return _load(path, EnsembleConfig)
