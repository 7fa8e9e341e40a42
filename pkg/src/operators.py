"""Dense complex-matrix utilities: Hermitian eigensolves, superoperators, partial traces.

Conventions used throughout the package:

* hbar = 1. Energies and rates are in eV, times in 1/eV (1/eV ~ 0.658 fs).
* Density matrices are vectorized by stacking columns, so that
  vec(A X B) = (B^T kron A) vec(X).
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from src.errors import DimensionMismatch, NonHermitianInput

HERMITICITY_TOL = 1e-9
PSD_TOL = 1e-12


@dataclass(frozen=True)
class HermitianEig:
    """Eigen-decomposition M = V diag(values) V^dagger with ascending values."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        raise DimensionMismatch(f"Expected a 2-D matrix, got shape {arr.shape}")
    return arr


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def hermiticity_defect(m) -> float:
    """Frobenius norm of M - M^dagger."""
    arr = as_matrix(m)
    return float(np.linalg.norm(arr - dagger(arr)))


def is_hermitian(m, rel_tol: float = HERMITICITY_TOL) -> bool:
    arr = as_matrix(m)
    scale = np.linalg.norm(arr)
    return hermiticity_defect(arr) <= rel_tol * scale


def herm_eig(m, rel_tol: float = HERMITICITY_TOL) -> HermitianEig:
    """Ascending eigen-decomposition of a Hermitian matrix.

    Raises NonHermitianInput when ||M - M^dagger||_F > rel_tol * ||M||_F;
    callers that expect non-Hermitian input should use `hermiticity_defect`.
    """
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"Matrix must be square, got {arr.shape}")
    if not is_hermitian(arr, rel_tol):
        raise NonHermitianInput(
            f"Hermiticity defect {hermiticity_defect(arr):.3e} exceeds "
            f"{rel_tol:.1e} relative tolerance"
        )
    hermitian = 0.5 * (arr + dagger(arr))
    try:
        values, vectors = np.linalg.eigh(hermitian)
    except np.linalg.LinAlgError:
        # divide-and-conquer failed to converge; fall back to the MRRR driver
        values, vectors = scipy.linalg.eigh(hermitian, driver="evr")
    return HermitianEig(values=values, vectors=vectors)


def nearest_psd(m, rel_tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Closest positive semidefinite matrix in the Frobenius norm.

    Negative eigenvalues are replaced by zero in the eigenbasis of M
    (Higham 1988 for the Hermitian case).
    """
    eig = herm_eig(m, rel_tol)
    clamped = np.clip(eig.values, 0.0, None)
    out = (eig.vectors * clamped) @ dagger(eig.vectors)
    return 0.5 * (out + dagger(out))


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of the Hermitian part of M."""
    arr = as_matrix(m)
    return float(np.linalg.eigvalsh(0.5 * (arr + dagger(arr)))[0])


def partial_trace(rho, subsystem_dims: Sequence[int], keep_index: int) -> np.ndarray:
    """Trace out every subsystem except `keep_index`."""
    arr = as_matrix(rho)
    dims = [int(d) for d in subsystem_dims]
    total = int(np.prod(dims))
    if arr.shape != (total, total):
        raise DimensionMismatch(
            f"Subsystem dims {dims} give {total}, matrix is {arr.shape}"
        )
    if not 0 <= keep_index < len(dims):
        raise DimensionMismatch(f"keep_index {keep_index} out of range for {dims}")
    before = int(np.prod(dims[:keep_index]))
    kept = dims[keep_index]
    after = int(np.prod(dims[keep_index + 1:]))
    tensor = arr.reshape(before, kept, after, before, kept, after)
    return np.einsum("ijkilk->jl", tensor)


def frobenius_distance(a, b) -> float:
    a_arr, b_arr = as_matrix(a), as_matrix(b)
    if a_arr.shape != b_arr.shape:
        raise DimensionMismatch(f"Shapes differ: {a_arr.shape} vs {b_arr.shape}")
    return float(np.linalg.norm(a_arr - b_arr))


# ----------------------------------------------------------------------
# Vectorization and superoperators
# ----------------------------------------------------------------------

def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape(dim, dim, order="F")


def spre(a: np.ndarray) -> np.ndarray:
    """Matrix of X -> A X."""
    a = as_matrix(a)
    return np.kron(np.eye(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    """Matrix of X -> X B."""
    b = as_matrix(b)
    return np.kron(b.T, np.eye(b.shape[0]))


def sprepost(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of X -> A X B."""
    return np.kron(as_matrix(b).T, as_matrix(a))


def sandwich_sum(coeffs: np.ndarray, left_ops: np.ndarray, right_ops: np.ndarray) -> np.ndarray:
    """Matrix of X -> sum_ij c_ij L_j X R_i.

    `left_ops` and `right_ops` are stacks of shape (T, L, L).
    """
    # kron(R_i^T, L_j)[(a,c),(b,d)] = R_i[b,a] L_j[c,d]
    tensor = np.einsum("ij,iba,jcd->acbd", coeffs, right_ops, left_ops)
    dim = left_ops.shape[1]
    return tensor.reshape(dim * dim, dim * dim)


class Superoperator:
    """Linear generator acting on density matrices of dimension `dim`."""

    def __init__(self, matrix: np.ndarray):
        mat = np.asarray(matrix, dtype=complex)
        n = mat.shape[0]
        dim = int(round(np.sqrt(n)))
        if mat.shape != (n, n) or dim * dim != n:
            raise DimensionMismatch(f"Superoperator matrix must be L^2 x L^2, got {mat.shape}")
        self._matrix = mat
        self.dim = dim

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    @cached_property
    def spectral_bound(self) -> float:
        """Upper bound on the spectral radius (induced 1-norm)."""
        return float(np.linalg.norm(self.matrix, 1))

    def rk4_step_matrix(self, h: float) -> np.ndarray:
        """The classical RK4 update for dX/dt = L X as a matrix polynomial in hL."""
        hl = h * self.matrix
        eye = np.eye(hl.shape[0], dtype=complex)
        # Horner form of I + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24
        poly = eye + hl / 4.0
        poly = eye + hl @ poly / 3.0
        poly = eye + hl @ poly / 2.0
        return eye + hl @ poly


class LindbladGenerator(Superoperator):
    """Generator -i[H, X] + sum_k rate_k (J_k X J_k^dagger - 1/2 {J_k^dagger J_k, X}).

    Applied with matrix products, so composite spaces never need the dense
    L^2 x L^2 matrix unless `matrix` is requested.
    """

    def __init__(self, hamiltonian: np.ndarray, jumps: Iterable[Tuple[float, np.ndarray]] = ()):
        self.hamiltonian = as_matrix(hamiltonian)
        self.dim = self.hamiltonian.shape[0]
        self.jumps: List[Tuple[float, np.ndarray]] = [
            (float(rate), as_matrix(op)) for rate, op in jumps
        ]
        anti = np.zeros_like(self.hamiltonian)
        for rate, op in self.jumps:
            anti += rate * dagger(op) @ op
        # -i H_eff X + i X H_eff^dagger carries both the commutator and the anticommutator
        self._h_eff = self.hamiltonian - 0.5j * anti

    @cached_property
    def _dense(self) -> np.ndarray:
        h_eff = self._h_eff
        mat = -1j * spre(h_eff) + 1j * spost(dagger(h_eff))
        for rate, op in self.jumps:
            mat = mat + rate * sprepost(op, dagger(op))
        return mat

    @property
    def matrix(self) -> np.ndarray:
        return self._dense

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self._h_eff @ rho) + 1j * (rho @ dagger(self._h_eff))
        for rate, op in self.jumps:
            out += rate * (op @ rho @ dagger(op))
        return out

    @cached_property
    def spectral_bound(self) -> float:
        bound = 2.0 * np.linalg.norm(self.hamiltonian, 2)
        for rate, op in self.jumps:
            bound += 2.0 * abs(rate) * np.linalg.norm(op, 2) ** 2
        return float(bound)
