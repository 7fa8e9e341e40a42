"""Evaluator core: runs comparison methods on one system + bath and collects results."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.bath import Lorentzian, SpectralModel, as_network
from src.builder import MasterEquation, Prescription, PrescriptionTag, build_bre, build_prescription, to_liouvillian
from src.errors import ConfigError, ExactUnavailable, LindbladForgeError
from src.method_registry import EXACT_LABEL, MethodRegistry
from src.operators import Superoperator
from src.propagator import ExactModel, TimeGrid, Trajectory, exact_trajectory, integrate
from src.system_model import SystemSpec, TransitionTable, enumerate_transitions
from src.utils.timing import Stopwatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NumericSettings:
    """Tolerances and limits shared by every run."""

    element_tol: float = 1e-12
    hermiticity_tol: float = 1e-9
    psd_tol: float = 1e-12
    local_tol: float = 1e-9
    max_refinement: int = 8
    dense_cap: int = 2304
    n_max: int = 3
    dimension_cap: int = 4096
    max_retries: int = 2
    truncation_tol: float = 1e-6

    @classmethod
    def from_settings(cls, settings: Dict[str, Any], integrator=None, exact=None) -> "NumericSettings":
        """Build from settings.yaml contents, with per-scenario overrides on top."""
        integ = dict(settings.get("integrator", {}) or {})
        ex = dict(settings.get("exact", {}) or {})
        for source, target in ((integrator, integ), (exact, ex)):
            if source is not None:
                target.update({k: v for k, v in source.model_dump().items() if v is not None})
        defaults = cls()
        return cls(
            element_tol=float(settings.get("element_tol", defaults.element_tol)),
            hermiticity_tol=float(settings.get("hermiticity_tol", defaults.hermiticity_tol)),
            psd_tol=float(settings.get("psd_tol", defaults.psd_tol)),
            local_tol=float(integ.get("local_tol", defaults.local_tol)),
            max_refinement=int(integ.get("max_refinement", defaults.max_refinement)),
            dense_cap=int(integ.get("dense_cap", defaults.dense_cap)),
            n_max=int(ex.get("n_max", defaults.n_max)),
            dimension_cap=int(ex.get("dimension_cap", defaults.dimension_cap)),
            max_retries=int(ex.get("max_retries", defaults.max_retries)),
            truncation_tol=float(ex.get("truncation_tol", defaults.truncation_tol)),
        )

    def integrator_kwargs(self) -> Dict[str, Any]:
        return {
            "local_tol": self.local_tol,
            "max_refinement": self.max_refinement,
            "dense_cap": self.dense_cap,
        }


@dataclass
class MethodResult:
    method: str
    trajectory: Optional[Trajectory] = None
    master_equation: Optional[MasterEquation] = None
    runtime_s: float = 0.0
    status: str = "success"
    error: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.trajectory is not None and self.trajectory.diverged

    def summary(self) -> Dict[str, Any]:
        row = {
            "method": self.method,
            "status": self.status,
            "error": self.error,
            "runtime_s": self.runtime_s,
            "diverged": self.diverged,
        }
        if self.trajectory is not None:
            traj = self.trajectory
            finite = np.isfinite(traj.min_eig)
            row["min_eig"] = float(np.min(traj.min_eig[finite])) if np.any(finite) else float("nan")
            row["max_trace_error"] = float(np.nanmax(np.abs(traj.trace - 1.0)))
            row["max_herm_defect"] = float(np.nanmax(traj.herm_defect))
            row["refinement_level"] = traj.refinement_level
        if self.master_equation is not None:
            row["delta_herm_defect"] = self.master_equation.delta_defect
            row["kossakowski_defect"] = self.master_equation.kossakowski_defect
        row.update(self.extra)
        return row


class ScenarioEvaluator:
    """Builds generators for one system + bath and propagates them.

    With a `registry`, method names are looked up in it (tag, repair and
    cluster-width flags come from the method definition); without one they
    are parsed as prescription labels.
    """

    def __init__(
        self,
        system: SystemSpec,
        bath: SpectralModel,
        settings: Optional[NumericSettings] = None,
        cluster_width: Optional[float] = None,
        secular_cutoff: Optional[float] = None,
        allow_lorentzian_exact: bool = True,
        registry: Optional[MethodRegistry] = None,
    ):
        self.system = system
        self.bath = bath
        self.settings = settings or NumericSettings()
        self.cluster_width = cluster_width
        self.secular_cutoff = secular_cutoff
        self.allow_lorentzian_exact = allow_lorentzian_exact
        self.registry = registry
        self.table: TransitionTable = enumerate_transitions(system, element_tol=self.settings.element_tol)
        self._equations: Dict[str, MasterEquation] = {}

    def prescription(self, label: str) -> Optional[Prescription]:
        """Prescription for `label`; None for the exact benchmark."""
        if self.registry is not None:
            return self.registry.resolve(label, self.cluster_width, self.secular_cutoff)
        if label == EXACT_LABEL:
            return None
        return Prescription.parse(label, cluster_width=self.cluster_width, secular_cutoff=self.secular_cutoff)

    def master_equation(self, label: str) -> MasterEquation:
        if label not in self._equations:
            p = self.prescription(label)
            if p is None:
                raise ConfigError(f"{label} has no master equation")
            self._equations[label] = build_prescription(self.table, self.bath, p)
        return self._equations[label]

    def build_generator(self, label: str) -> Tuple[Superoperator, MasterEquation]:
        """Generator for `label`; the plain BRE is built from its Redfield form directly."""
        me = self.master_equation(label)
        p = me.prescription
        if p.tag is PrescriptionTag.BRE and not p.repaired and p.secular_cutoff is None:
            return build_bre(self.table, self.bath), me
        return to_liouvillian(me), me

    def exact_model(self) -> ExactModel:
        if isinstance(_base_model(self.bath), Lorentzian) and not self.allow_lorentzian_exact:
            raise ExactUnavailable("Exact benchmark disabled for Lorentzian baths")
        return ExactModel(system=self.system, network=as_network(self.bath), n_max=self.settings.n_max)

    def evaluate(self, label: str, rho0: np.ndarray, grid: TimeGrid) -> MethodResult:
        """Propagate `rho0` with one method; numeric divergence is flagged, not raised."""
        result = MethodResult(method=label)
        with Stopwatch() as timer:
            if self.prescription(label) is None:
                result.trajectory = exact_trajectory(
                    self.exact_model(),
                    rho0,
                    grid,
                    truncation_tol=self.settings.truncation_tol,
                    max_retries=self.settings.max_retries,
                    dimension_cap=self.settings.dimension_cap,
                    **self.settings.integrator_kwargs(),
                )
                result.extra["n_max"] = result.trajectory.metadata.get("n_max")
            else:
                generator, me = self.build_generator(label)
                result.master_equation = me
                result.trajectory = integrate(
                    generator, rho0, grid, **self.settings.integrator_kwargs()
                )
        result.runtime_s = timer.elapsed_s
        if result.diverged:
            result.status = "diverged"
        logger.info("%s finished in %.2fs (%s)", label, result.runtime_s, result.status)
        return result

    def evaluate_all(
        self, labels: List[str], rho0: np.ndarray, grid: TimeGrid, catch_errors: bool = False
    ) -> Dict[str, MethodResult]:
        results = {}
        for label in labels:
            try:
                results[label] = self.evaluate(label, rho0, grid)
            except LindbladForgeError as exc:
                if not catch_errors:
                    raise
                logger.warning("%s failed: %s", label, exc)
                results[label] = MethodResult(method=label, status="error", error=str(exc))
        return results


def _base_model(model: SpectralModel) -> SpectralModel:
    while hasattr(model, "base"):
        model = model.base
    return model
