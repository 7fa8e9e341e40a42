import numpy as np
import pytest

from src.bath import (
    KKGrid,
    Lorentzian,
    PseudomodeNetwork,
    Scaled,
    SpectralModel,
    as_network,
    eval_J,
    eval_lambda,
    gamma,
    kk_check,
    lorentzian_to_network,
    model_from_dict,
)
from src.errors import DimensionMismatch, ExactUnavailable, NonPositiveValue


class FlatBath(SpectralModel):
    kind = "flat"

    @property
    def n_channels(self) -> int:
        return 1

    def evaluate_grid(self, omegas):
        shape = (len(np.atleast_1d(omegas)), 1, 1)
        return np.ones(shape, dtype=complex), np.zeros(shape, dtype=complex)

    def to_dict(self):
        return {"type": self.kind}


def test_lorentzian_peak_and_shift_zero_crossing(lorentzian):
    g, kappa = lorentzian.g, lorentzian.kappa
    assert gamma(lorentzian, 1.0)[0, 0].real == pytest.approx(4 * g**2 / kappa, rel=1e-12)
    assert abs(eval_lambda(lorentzian, 1.0)[0, 0]) < 1e-15
    assert eval_lambda(lorentzian, 1.2)[0, 0].real == pytest.approx(-eval_lambda(lorentzian, 0.8)[0, 0].real)


def test_lorentzian_width_must_be_positive():
    with pytest.raises(NonPositiveValue):
        Lorentzian(g=0.1, omega_m=1.0, kappa=0.0)


def test_single_mode_network_matches_lorentzian(lorentzian):
    network = lorentzian_to_network(lorentzian)
    omegas = np.linspace(-1.0, 3.0, 41)
    j_l, lam_l = lorentzian.evaluate_grid(omegas)
    j_n, lam_n = network.evaluate_grid(omegas)
    np.testing.assert_allclose(j_n, j_l, rtol=1e-10, atol=1e-15)
    np.testing.assert_allclose(lam_n, lam_l, rtol=1e-10, atol=1e-15)


def test_network_spectral_density_is_symmetric_psd(random_instance):
    j, lam = random_instance.network.evaluate_grid(np.linspace(0.0, 3.0, 31))
    np.testing.assert_allclose(j, np.swapaxes(j, 1, 2), atol=1e-18)
    np.testing.assert_allclose(lam, np.swapaxes(lam, 1, 2), atol=1e-18)
    scale = np.max(np.abs(j))
    for jk in j:
        assert np.linalg.eigvalsh(jk.real)[0] >= -1e-10 * scale


def test_network_shape_validation():
    with pytest.raises(DimensionMismatch):
        PseudomodeNetwork(omega=np.eye(2), kappas=[0.1], couplings=np.ones((1, 2)))
    with pytest.raises(DimensionMismatch):
        PseudomodeNetwork(omega=np.eye(2), kappas=[0.1, 0.1], couplings=np.ones((1, 3)))
    with pytest.raises(NonPositiveValue):
        PseudomodeNetwork(omega=np.eye(2), kappas=[0.1, 0.0], couplings=np.ones((1, 2)))


def test_scaling_multiplies_spectral_density(lorentzian):
    scaled = Scaled(lorentzian, 4.0)
    assert eval_J(scaled, 0.9)[0, 0] == pytest.approx(4.0 * eval_J(lorentzian, 0.9)[0, 0])
    network = as_network(scaled)
    np.testing.assert_allclose(network.couplings, [[0.2]])
    assert eval_J(network, 0.9)[0, 0].real == pytest.approx(eval_J(scaled, 0.9)[0, 0].real, rel=1e-10)


def test_as_network_requires_pseudomode_form():
    with pytest.raises(ExactUnavailable):
        as_network(FlatBath())


def test_model_dict_round_trip(random_instance):
    model = Scaled(random_instance.network, 10.0)
    restored = model_from_dict(model.to_dict())
    np.testing.assert_allclose(eval_J(restored, 1.1), eval_J(model, 1.1), rtol=1e-12)


@pytest.mark.parametrize("omega", [0.75, 1.0, 1.35])
def test_kramers_kronig_lorentzian(lorentzian, omega):
    expected = eval_lambda(lorentzian, omega)[0, 0].real
    got = kk_check(lorentzian, omega)[0, 0].real
    assert abs(got - expected) <= 1e-2 * max(abs(expected), lorentzian.g**2)


def test_kramers_kronig_network(random_instance):
    network = random_instance.network
    for omega in (0.8, 1.5):
        expected = eval_lambda(network, omega).real
        got = kk_check(network, omega).real
        assert np.linalg.norm(got - expected) <= 1e-2 * np.linalg.norm(expected)


def test_kk_check_rejects_frequency_outside_grid(lorentzian):
    with pytest.raises(ValueError):
        kk_check(lorentzian, 5.0, KKGrid(lower=0.0, upper=2.0))
