"""System model: Hamiltonian + coupling operators -> eigenbasis transition table.

A transition sigma_j = |n_j><m_j| (eigenstates of H) has frequency
w_j = E_m - E_n and elements (A_a)_j = <n_j|A_a|m_j>. Operators handed to the
rest of the package are expressed in the original basis of the SystemSpec,
sigma_j = V |n><m| V^dagger.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DimensionMismatch, NonHermitianInput
from src.operators import as_matrix, dagger, hermiticity_defect, herm_eig
from src.utils.json_utils import decode_matrix, encode_matrix

logger = logging.getLogger(__name__)

SPEC_HERMITICITY_TOL = 1e-10
DEFAULT_ELEMENT_TOL = 1e-12
DEFAULT_DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class SystemSpec:
    """H (eV) and the M coupling operators of H_sb = sum_a A_a B_a."""

    hamiltonian: np.ndarray
    coupling_ops: Tuple[np.ndarray, ...]

    def __post_init__(self):
        h = as_matrix(self.hamiltonian)
        if h.shape[0] != h.shape[1]:
            raise DimensionMismatch(f"Hamiltonian must be square, got {h.shape}")
        ops = tuple(as_matrix(a) for a in self.coupling_ops)
        if not ops:
            raise DimensionMismatch("At least one coupling operator is required")
        for idx, op in enumerate(ops):
            if op.shape != h.shape:
                raise DimensionMismatch(
                    f"Coupling operator {idx} has shape {op.shape}, Hamiltonian {h.shape}"
                )
        for name, mat in [("hamiltonian", h)] + [(f"coupling_ops[{i}]", a) for i, a in enumerate(ops)]:
            defect = hermiticity_defect(mat)
            if defect > SPEC_HERMITICITY_TOL * max(1.0, np.linalg.norm(mat)):
                raise NonHermitianInput(f"{name} is not Hermitian (defect {defect:.3e})")
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "coupling_ops", ops)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.coupling_ops)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hamiltonian": encode_matrix(self.hamiltonian),
            "coupling_ops": [encode_matrix(a) for a in self.coupling_ops],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SystemSpec":
        return cls(
            hamiltonian=decode_matrix(data["hamiltonian"]),
            coupling_ops=tuple(decode_matrix(a) for a in data["coupling_ops"]),
        )


@dataclass(frozen=True)
class Transition:
    index: int
    bra_level: int
    ket_level: int
    frequency: float
    elements: np.ndarray

    @property
    def is_diagonal(self) -> bool:
        return self.bra_level == self.ket_level


@dataclass(frozen=True)
class TransitionTable:
    transitions: Tuple[Transition, ...]
    eigen_energies: np.ndarray
    basis: np.ndarray
    n_channels: int

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def dim(self) -> int:
        return len(self.eigen_energies)

    @cached_property
    def frequencies(self) -> np.ndarray:
        return np.array([t.frequency for t in self.transitions], dtype=float)

    @cached_property
    def elements(self) -> np.ndarray:
        """T x M matrix of (A_a)_j."""
        if not self.transitions:
            return np.zeros((0, self.n_channels), dtype=complex)
        return np.array([t.elements for t in self.transitions], dtype=complex)

    @cached_property
    def sigma_ops(self) -> np.ndarray:
        """Stack (T, L, L) of transition operators in the original basis."""
        v = self.basis
        ops = np.zeros((len(self), self.dim, self.dim), dtype=complex)
        for j, t in enumerate(self.transitions):
            ops[j] = np.outer(v[:, t.bra_level], np.conj(v[:, t.ket_level]))
        return ops

    @cached_property
    def hamiltonian(self) -> np.ndarray:
        return (self.basis * self.eigen_energies) @ dagger(self.basis)

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return dagger(self.basis) @ as_matrix(op) @ self.basis

    def from_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.basis @ as_matrix(op) @ dagger(self.basis)

    def reconstruct(self, channel: int) -> np.ndarray:
        """sum_j (A_a)_j sigma_j, in the original basis."""
        if not self.transitions:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return np.einsum("j,jab->ab", self.elements[:, channel], self.sigma_ops)

    def conjugate_index(self, j: int) -> Optional[int]:
        t = self.transitions[j]
        return self._pair_lookup.get((t.ket_level, t.bra_level))

    @cached_property
    def _pair_lookup(self) -> Dict[Tuple[int, int], int]:
        return {(t.bra_level, t.ket_level): t.index for t in self.transitions}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eigen_energies": self.eigen_energies.tolist(),
            "transitions": [
                {
                    "index": t.index,
                    "bra_level": t.bra_level,
                    "ket_level": t.ket_level,
                    "frequency": t.frequency,
                    "elements": encode_matrix(t.elements),
                }
                for t in self.transitions
            ],
        }


@dataclass(frozen=True)
class TransitionCluster:
    members: Tuple[int, ...]
    mean_frequency: float


def _fix_degenerate_blocks(values: np.ndarray, vectors: np.ndarray, tol: float) -> np.ndarray:
    """Canonical basis inside each block of (near) equal eigenvalues.

    The block projector is applied to unit vectors e_0, e_1, ... in order and
    Gram-Schmidt keeps the first independent images.
    """
    dim = len(values)
    fixed = vectors.copy()
    start = 0
    while start < dim:
        stop = start + 1
        while stop < dim and values[stop] - values[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            projector = block @ dagger(block)
            chosen: List[np.ndarray] = []
            for k in range(dim):
                candidate = projector[:, k].copy()
                for prev in chosen:
                    candidate -= (np.conj(prev) @ candidate) * prev
                norm = np.linalg.norm(candidate)
                if norm > 1e-8:
                    chosen.append(candidate / norm)
                if len(chosen) == stop - start:
                    break
            fixed[:, start:stop] = np.column_stack(chosen)
            logger.debug("Canonicalized degenerate block %d:%d", start, stop)
        start = stop
    return fixed


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    # largest-modulus component of each column made real positive
    out = vectors.copy()
    for k in range(out.shape[1]):
        pivot = out[np.argmax(np.round(np.abs(out[:, k]), 12)), k]
        out[:, k] *= np.conj(pivot) / abs(pivot)
    return out


def diagonalize_system(
    spec: SystemSpec, degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
) -> Tuple[np.ndarray, np.ndarray]:
    """Ascending eigen-energies and the unitary basis with H = V diag(E) V^dagger."""
    eig = herm_eig(spec.hamiltonian)
    vectors = _fix_degenerate_blocks(eig.values, eig.vectors, degeneracy_tol)
    return eig.values, _fix_phases(vectors)


def enumerate_transitions(
    spec: SystemSpec,
    eigdata: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    element_tol: float = DEFAULT_ELEMENT_TOL,
) -> TransitionTable:
    """Every (n, m) pair with a coupling element above `element_tol`, row-major."""
    energies, basis = eigdata if eigdata is not None else diagonalize_system(spec)
    if basis.shape != spec.hamiltonian.shape:
        raise DimensionMismatch(f"Basis {basis.shape} does not match system dim {spec.dim}")
    eig_ops = np.array([dagger(basis) @ a @ basis for a in spec.coupling_ops])
    transitions: List[Transition] = []
    for n in range(spec.dim):
        for m in range(spec.dim):
            elements = eig_ops[:, n, m].copy()
            if np.max(np.abs(elements)) <= element_tol:
                continue
            transitions.append(
                Transition(
                    index=len(transitions),
                    bra_level=n,
                    ket_level=m,
                    frequency=float(energies[m] - energies[n]),
                    elements=elements,
                )
            )
    logger.debug("Enumerated %d transitions for L=%d, M=%d", len(transitions), spec.dim, spec.n_channels)
    return TransitionTable(
        transitions=tuple(transitions),
        eigen_energies=np.asarray(energies, dtype=float),
        basis=np.asarray(basis, dtype=complex),
        n_channels=spec.n_channels,
    )


def cluster_transitions(table: TransitionTable, cluster_width: float) -> List[TransitionCluster]:
    """Single-linkage clusters of transition frequencies, ordered by frequency."""
    if cluster_width < 0:
        raise ValueError(f"cluster_width must be >= 0, got {cluster_width}")
    freqs = table.frequencies
    order = np.argsort(freqs, kind="stable")
    clusters: List[TransitionCluster] = []
    current: List[int] = []
    for idx in order:
        if current and freqs[idx] - freqs[current[-1]] > cluster_width:
            clusters.append(_make_cluster(current, freqs))
            current = []
        current.append(int(idx))
    if current:
        clusters.append(_make_cluster(current, freqs))
    return clusters


def _make_cluster(members: Sequence[int], freqs: np.ndarray) -> TransitionCluster:
    return TransitionCluster(members=tuple(members), mean_frequency=float(np.mean(freqs[list(members)])))


def cluster_frequencies(table: TransitionTable, cluster_width: float) -> np.ndarray:
    """Per-transition cluster mean frequency w-bar."""
    out = table.frequencies.copy()
    for cluster in cluster_transitions(table, cluster_width):
        out[list(cluster.members)] = cluster.mean_frequency
    return out


def three_level_system(omega1: float = 0.75, omega2: float = 1.35, d: float = 1.0) -> SystemSpec:
    """Ground state |0> coupled to |1> and |2> through d(s1 + s1^dag + s2 + s2^dag)."""
    h = np.diag([0.0, omega1, omega2]).astype(complex)
    coupling = np.zeros((3, 3), dtype=complex)
    coupling[0, 1] = coupling[1, 0] = d
    coupling[0, 2] = coupling[2, 0] = d
    return SystemSpec(hamiltonian=h, coupling_ops=(coupling,))


def detuned_three_level(omega_m: float = 1.0, delta: float = 0.1, d: float = 1.0) -> SystemSpec:
    """Three-level system with w1 = w_M - delta and w2 = w_M + delta."""
    return three_level_system(omega_m - delta, omega_m + delta, d)
