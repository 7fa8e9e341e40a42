import numpy as np
import pytest
from scipy.linalg import expm

from src.errors import DimensionMismatch, NonHermitianInput
from src.operators import (
    LindbladGenerator,
    Superoperator,
    frobenius_distance,
    herm_eig,
    hermiticity_defect,
    nearest_psd,
    partial_trace,
    sandwich_sum,
    spost,
    spre,
    sprepost,
    unvec,
    vec,
)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def random_density(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_herm_eig_ascending_and_reconstructs(rng):
    m = random_hermitian(rng, 5)
    eig = herm_eig(m)
    assert np.all(np.diff(eig.values) >= 0)
    np.testing.assert_allclose(eig.reconstruct(), m, atol=1e-12)


def test_herm_eig_rejects_non_hermitian():
    with pytest.raises(NonHermitianInput):
        herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_herm_eig_rejects_rectangular():
    with pytest.raises(DimensionMismatch):
        herm_eig(np.zeros((2, 3)))


def test_nearest_psd_clamps_negative_eigenvalues():
    np.testing.assert_allclose(nearest_psd(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]), atol=1e-15)


def test_nearest_psd_matches_eigen_clamp_oracle(rng):
    for _ in range(100):
        m = random_hermitian(rng, 4)
        values, vectors = np.linalg.eigh(m)
        oracle = vectors @ np.diag(np.maximum(values, 0.0)) @ vectors.conj().T
        assert frobenius_distance(nearest_psd(m), oracle) <= 1e-12 * max(1.0, np.linalg.norm(m))


def test_nearest_psd_leaves_psd_matrix_unchanged(rng):
    rho = random_density(rng, 4)
    np.testing.assert_allclose(nearest_psd(rho), rho, atol=1e-14)


def test_partial_trace_of_product_state(rng):
    a, b = random_density(rng, 3), random_density(rng, 2)
    joint = np.kron(a, b)
    np.testing.assert_allclose(partial_trace(joint, [3, 2], 0), a, atol=1e-14)
    np.testing.assert_allclose(partial_trace(joint, [3, 2], 1), b, atol=1e-14)


def test_partial_trace_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        partial_trace(np.eye(6), [2, 2], 0)


def test_superoperator_conventions(rng):
    a, x, b = (random_hermitian(rng, 3) + 1j * random_hermitian(rng, 3) for _ in range(3))
    np.testing.assert_allclose(unvec(spre(a) @ vec(x), 3), a @ x, atol=1e-12)
    np.testing.assert_allclose(unvec(spost(b) @ vec(x), 3), x @ b, atol=1e-12)
    np.testing.assert_allclose(unvec(sprepost(a, b) @ vec(x), 3), a @ x @ b, atol=1e-12)


def test_sandwich_sum_matches_explicit_sum(rng):
    n_ops, dim = 3, 2
    coeffs = rng.normal(size=(n_ops, n_ops)) + 1j * rng.normal(size=(n_ops, n_ops))
    left = rng.normal(size=(n_ops, dim, dim)) + 1j * rng.normal(size=(n_ops, dim, dim))
    right = rng.normal(size=(n_ops, dim, dim)) + 1j * rng.normal(size=(n_ops, dim, dim))
    x = rng.normal(size=(dim, dim)) + 0j
    expected = sum(coeffs[i, j] * left[j] @ x @ right[i] for i in range(n_ops) for j in range(n_ops))
    np.testing.assert_allclose(unvec(sandwich_sum(coeffs, left, right) @ vec(x), dim), expected, atol=1e-12)


def test_lindblad_generator_dense_matches_apply_and_preserves_trace(rng):
    h = random_hermitian(rng, 3)
    jump = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    gen = LindbladGenerator(h, [(0.3, jump)])
    rho = random_density(rng, 3)
    np.testing.assert_allclose(gen.apply(rho), unvec(gen.matrix @ vec(rho), 3), atol=1e-12)
    assert abs(np.trace(gen.apply(rho))) < 1e-12
    assert hermiticity_defect(gen.apply(rho)) < 1e-12


def test_rk4_step_matrix_close_to_exponential(rng):
    gen = LindbladGenerator(random_hermitian(rng, 2), [(0.5, np.array([[0.0, 1.0], [0.0, 0.0]]))])
    h = 1e-3
    np.testing.assert_allclose(gen.rk4_step_matrix(h), expm(h * gen.matrix), atol=1e-11)


def test_superoperator_requires_square_of_square():
    with pytest.raises(DimensionMismatch):
        Superoperator(np.zeros((3, 3)))
