"""Master-equation builders: Bloch-Redfield, its Lindblad-like form, mean prescriptions, (+) repair.

Notation, for transitions i, j with X_ij = sigma_i^dagger sigma_j:

* Gamma_ij(w) = sum_ab (A_a)_i^* gamma_ab(w) (A_b)_j, Lambda_ij(w) likewise with lambda.
* A MasterEquation holds shift coefficients d_ij and a Kossakowski matrix K_ij and
  generates  -i[H + Delta, rho] + sum_ij (K_ij/2)(-{X_ij, rho} + 2 sigma_j rho sigma_i^dagger)
  with Delta = sum_ij d_ij X_ij.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.bath import SpectralModel, rates_on_grid
from src.errors import ConfigError, DimensionMismatch, NonHermitianInput, NonHermitianKossakowski, NotPSD
from src.operators import (
    HERMITICITY_TOL,
    PSD_TOL,
    LindbladGenerator,
    Superoperator,
    dagger,
    herm_eig,
    hermiticity_defect,
    is_hermitian,
    nearest_psd,
    sandwich_sum,
    spost,
    spre,
)
from src.system_model import TransitionTable, cluster_frequencies
from src.utils.json_utils import encode_matrix

logger = logging.getLogger(__name__)


class PrescriptionTag(str, Enum):
    BRE = "BRE"
    GLGG = "gLgG"
    ALGG = "aLgG"
    ALAG = "aLaG"
    DLDG = "dLdG"
    DLGG = "dLgG"

    @property
    def needs_clusters(self) -> bool:
        return self in (PrescriptionTag.DLDG, PrescriptionTag.DLGG)


REPAIR_SUFFIX = "(+)"


@dataclass(frozen=True)
class Prescription:
    tag: PrescriptionTag
    repaired: bool = False
    cluster_width: Optional[float] = None
    secular_cutoff: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "tag", PrescriptionTag(self.tag))
        if self.tag.needs_clusters and (self.cluster_width is None or self.cluster_width <= 0):
            raise ConfigError(f"{self.tag.value} requires a positive cluster_width")

    @property
    def label(self) -> str:
        return self.tag.value + (REPAIR_SUFFIX if self.repaired else "")

    @classmethod
    def parse(
        cls,
        label: str,
        cluster_width: Optional[float] = None,
        secular_cutoff: Optional[float] = None,
    ) -> "Prescription":
        """Parse labels such as "aLgG", "BRE(+)"."""
        text = label.strip()
        repaired = text.endswith(REPAIR_SUFFIX)
        if repaired:
            text = text[: -len(REPAIR_SUFFIX)]
        try:
            tag = PrescriptionTag(text)
        except ValueError:
            raise ConfigError(f"Unknown prescription label: {label!r}") from None
        width = cluster_width if tag.needs_clusters else None
        return cls(tag=tag, repaired=repaired, cluster_width=width, secular_cutoff=secular_cutoff)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "tag": self.tag.value,
            "repaired": self.repaired,
            "cluster_width": self.cluster_width,
            "secular_cutoff": self.secular_cutoff,
        }


@dataclass(frozen=True)
class RateTensors:
    """Gamma_ij and Lambda_ij evaluated at the frequency of the row (w_i) and column (w_j)."""

    gamma_i: np.ndarray
    gamma_j: np.ndarray
    lamb_i: np.ndarray
    lamb_j: np.ndarray


@dataclass(frozen=True)
class MasterEquation:
    shift_coefficients: np.ndarray
    kossakowski: np.ndarray
    table: TransitionTable
    prescription: Prescription
    kossakowski_defect: float = 0.0

    @cached_property
    def delta(self) -> np.ndarray:
        """Energy shift Delta = sum_ij d_ij sigma_i^dagger sigma_j (original basis)."""
        return pair_operator(self.shift_coefficients, self.table)

    @property
    def delta_defect(self) -> float:
        return hermiticity_defect(self.delta)

    @property
    def label(self) -> str:
        return self.prescription.label

    def to_dict(self) -> Dict[str, Any]:
        return {
            "prescription": self.prescription.to_dict(),
            "delta": encode_matrix(self.delta),
            "delta_hermiticity_defect": self.delta_defect,
            "kossakowski": encode_matrix(self.kossakowski),
            "kossakowski_defect": self.kossakowski_defect,
            "kossakowski_eigenvalues": kossakowski_spectrum(self).values.tolist(),
            "table": self.table.to_dict(),
        }


@dataclass(frozen=True)
class KossakowskiSpectrum:
    values: np.ndarray

    @property
    def significant(self) -> np.ndarray:
        """The two most negative and the two largest eigenvalues."""
        if len(self.values) <= 4:
            return self.values.copy()
        return np.concatenate([self.values[:2], self.values[-2:]])

    @property
    def negative_ratio(self) -> float:
        """|lambda_min| / lambda_max."""
        top = self.values[-1] if len(self.values) else 0.0
        if top <= 0:
            return float("nan")
        return float(abs(self.values[0]) / top)


def pair_operator(coeffs: np.ndarray, table: TransitionTable) -> np.ndarray:
    """sum_ij c_ij sigma_i^dagger sigma_j."""
    sigma = table.sigma_ops
    if len(table) == 0:
        return np.zeros((table.dim, table.dim), dtype=complex)
    return np.einsum("ij,iba,jbc->ac", coeffs, np.conj(sigma), sigma)


def rate_tensors(
    table: TransitionTable,
    bath: SpectralModel,
    frequencies: Optional[np.ndarray] = None,
) -> RateTensors:
    """Gamma and Lambda tensors; `frequencies` overrides the per-transition w_j."""
    if table.n_channels != bath.n_channels:
        raise DimensionMismatch(
            f"System has {table.n_channels} coupling operators, bath has {bath.n_channels} channels"
        )
    n = len(table)
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return RateTensors(empty, empty, empty, empty)
    freqs = table.frequencies if frequencies is None else np.asarray(frequencies, dtype=float)
    elements = table.elements
    gam, lam = rates_on_grid(bath, freqs)
    # full[k, i, j] = Gamma_ij(w_k)
    gamma_full = np.einsum("ia,kab,jb->kij", np.conj(elements), gam, elements)
    lamb_full = np.einsum("ia,kab,jb->kij", np.conj(elements), lam, elements)
    return RateTensors(
        gamma_i=np.einsum("iij->ij", gamma_full),
        gamma_j=np.einsum("jij->ij", gamma_full),
        lamb_i=np.einsum("iij->ij", lamb_full),
        lamb_j=np.einsum("jij->ij", lamb_full),
    )


def build_bre(table: TransitionTable, bath: SpectralModel) -> Superoperator:
    """Bloch-Redfield generator with Lambda at w_j on the left and at w_i on the right."""
    rates = rate_tensors(table, bath)
    h = table.hamiltonian
    mat = -1j * (spre(h) - spost(h))
    if len(table) == 0:
        return Superoperator(mat)
    left = pair_operator(-1j * rates.lamb_j - 0.5 * rates.gamma_j, table)
    right = pair_operator(1j * rates.lamb_i - 0.5 * rates.gamma_i, table)
    jump = 1j * (rates.lamb_j - rates.lamb_i) + 0.5 * (rates.gamma_j + rates.gamma_i)
    sigma = table.sigma_ops
    mat = mat + spre(left) + spost(right)
    mat = mat + sandwich_sum(jump, sigma, np.conj(np.swapaxes(sigma, 1, 2)))
    return Superoperator(mat)


def _hermitianize(k: np.ndarray) -> Tuple[np.ndarray, float]:
    return 0.5 * (k + dagger(k)), hermiticity_defect(k)


def bre_lindblad_form(table: TransitionTable, bath: SpectralModel) -> MasterEquation:
    """The Bloch-Redfield equation rewritten as shift + Kossakowski terms."""
    rates = rate_tensors(table, bath)
    k_raw = 0.5 * (rates.gamma_i + rates.gamma_j) + 1j * (rates.lamb_j - rates.lamb_i)
    shift = 0.5 * (rates.lamb_i + rates.lamb_j) - 0.25j * (rates.gamma_j - rates.gamma_i)
    kossakowski, defect = _hermitianize(k_raw)
    return MasterEquation(
        shift_coefficients=shift,
        kossakowski=kossakowski,
        table=table,
        prescription=Prescription(PrescriptionTag.BRE),
        kossakowski_defect=defect,
    )


def _principal_sqrt(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    # -0.0 imaginary parts would select the lower side of the branch cut
    return np.sqrt(z.real + 1j * (z.imag + 0.0))


def _geometric(at_i: np.ndarray, at_j: np.ndarray) -> np.ndarray:
    return _principal_sqrt(at_i) * _principal_sqrt(at_j)


def _arithmetic(at_i: np.ndarray, at_j: np.ndarray) -> np.ndarray:
    return 0.5 * (at_i + at_j)


def secular_mask(table: TransitionTable, cutoff: float) -> np.ndarray:
    freqs = table.frequencies
    return np.abs(freqs[:, None] - freqs[None, :]) <= cutoff


def build_prescription(table: TransitionTable, bath: SpectralModel, p: Prescription) -> MasterEquation:
    """Mean-based prescription `p`, followed by secularization and (+) repair if requested."""
    if p.tag is PrescriptionTag.BRE:
        me = bre_lindblad_form(table, bath)
        me = replace(me, prescription=replace(p, repaired=False))
    else:
        rates = rate_tensors(table, bath)
        if p.tag.needs_clusters:
            cluster_rates = rate_tensors(table, bath, cluster_frequencies(table, p.cluster_width))
        if p.tag is PrescriptionTag.GLGG:
            shift = _geometric(rates.lamb_i, rates.lamb_j)
            k_raw = _geometric(rates.gamma_i, rates.gamma_j)
        elif p.tag is PrescriptionTag.ALGG:
            shift = _arithmetic(rates.lamb_i, rates.lamb_j)
            k_raw = _geometric(rates.gamma_i, rates.gamma_j)
        elif p.tag is PrescriptionTag.ALAG:
            shift = _arithmetic(rates.lamb_i, rates.lamb_j)
            k_raw = _arithmetic(rates.gamma_i, rates.gamma_j)
        elif p.tag is PrescriptionTag.DLDG:
            shift = _arithmetic(cluster_rates.lamb_i, cluster_rates.lamb_j)
            k_raw = _geometric(cluster_rates.gamma_i, cluster_rates.gamma_j)
        else:
            shift = _arithmetic(cluster_rates.lamb_i, cluster_rates.lamb_j)
            k_raw = _geometric(rates.gamma_i, rates.gamma_j)
        kossakowski, defect = _hermitianize(k_raw)
        me = MasterEquation(
            shift_coefficients=shift,
            kossakowski=kossakowski,
            table=table,
            prescription=replace(p, repaired=False),
            kossakowski_defect=defect,
        )
    logger.debug("%s: Kossakowski Hermiticity defect %.3e", p.label, me.kossakowski_defect)
    if p.secular_cutoff is not None:
        me = secularize(me, p.secular_cutoff)
    if p.repaired:
        me = repair_positive(me)
    return me


def secularize(me: MasterEquation, cutoff: float) -> MasterEquation:
    """Drop pair terms with |w_i - w_j| > cutoff from both K and the shift."""
    mask = secular_mask(me.table, cutoff)
    return replace(
        me,
        shift_coefficients=np.where(mask, me.shift_coefficients, 0.0),
        kossakowski=np.where(mask, me.kossakowski, 0.0),
        prescription=replace(me.prescription, secular_cutoff=cutoff),
    )


def repair_positive(me: MasterEquation, hermiticity_tol: float = HERMITICITY_TOL) -> MasterEquation:
    """Replace K by its nearest positive semidefinite matrix."""
    if not is_hermitian(me.kossakowski, hermiticity_tol):
        raise NonHermitianKossakowski(
            f"{me.label}: Kossakowski defect {hermiticity_defect(me.kossakowski):.3e}"
        )
    if not is_hermitian(me.delta, hermiticity_tol):
        raise NonHermitianInput(
            f"{me.label}: energy shift is not Hermitian (defect {me.delta_defect:.3e}); "
            "use an arithmetic-mean shift before repairing"
        )
    repaired = nearest_psd(me.kossakowski, hermiticity_tol)
    return replace(me, kossakowski=repaired, prescription=replace(me.prescription, repaired=True))


def repair_distance(me: MasterEquation) -> float:
    """||K - K_+||_F / ||K||_F."""
    norm = float(np.linalg.norm(me.kossakowski))
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(me.kossakowski - nearest_psd(me.kossakowski))) / norm


def to_liouvillian(me: MasterEquation) -> Superoperator:
    """Dense generator; a non-Hermitian Delta enters the commutator unchanged."""
    h = me.table.hamiltonian + me.delta
    mat = -1j * (spre(h) - spost(h))
    if len(me.table) == 0:
        return Superoperator(mat)
    anti = pair_operator(me.kossakowski, me.table)
    sigma = me.table.sigma_ops
    mat = mat - 0.5 * (spre(anti) + spost(anti))
    mat = mat + sandwich_sum(me.kossakowski, sigma, np.conj(np.swapaxes(sigma, 1, 2)))
    return Superoperator(mat)


def collapse_operators(me: MasterEquation, psd_tol: float = PSD_TOL) -> List[Tuple[float, np.ndarray]]:
    """(rate, L_k) with K = U diag(rate) U^dagger and L_k = sum_j conj(U_jk) sigma_j."""
    if len(me.table) == 0:
        return []
    eig = herm_eig(me.kossakowski)
    scale = max(float(np.linalg.norm(me.kossakowski)), np.finfo(float).tiny)
    if eig.values[0] < -psd_tol * scale:
        raise NotPSD(f"{me.label}: Kossakowski eigenvalue {eig.values[0]:.3e} < 0")
    sigma = me.table.sigma_ops
    ops = []
    for k, rate in enumerate(eig.values):
        if rate <= psd_tol * scale:
            continue
        ops.append((float(rate), np.einsum("j,jab->ab", np.conj(eig.vectors[:, k]), sigma)))
    return ops


def lindblad_generator(me: MasterEquation) -> LindbladGenerator:
    """Collapse-operator form; requires Hermitian Delta and PSD K."""
    if not is_hermitian(me.delta):
        raise NonHermitianInput(f"{me.label}: energy shift is not Hermitian")
    h = me.table.hamiltonian + 0.5 * (me.delta + dagger(me.delta))
    return LindbladGenerator(h, collapse_operators(me))


def kossakowski_spectrum(me: MasterEquation) -> KossakowskiSpectrum:
    if len(me.table) == 0:
        return KossakowskiSpectrum(values=np.zeros(0))
    return KossakowskiSpectrum(values=herm_eig(me.kossakowski).values)
