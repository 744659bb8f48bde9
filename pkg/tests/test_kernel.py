import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from snvtraffic.errors import ConfigError, DomainError
from snvtraffic.kernel import FAMILIES, KernelSpec, kernel_value, kernel_weights, n_look_ahead


def test_concave_values():
    assert kernel_value(KernelSpec(0.1), 0.0) == pytest.approx(15.0, rel=1e-14)
    assert kernel_value(KernelSpec(0.1), 0.1) == 0.0
    assert kernel_value(KernelSpec(0.2), 0.1) == pytest.approx(5.625, rel=1e-14)


def test_kernel_value_domain():
    with pytest.raises(DomainError):
        kernel_value(KernelSpec(0.1), 0.11)
    with pytest.raises(DomainError):
        kernel_value(KernelSpec(0.1), -1e-9)


def test_spec_validation():
    with pytest.raises(ConfigError):
        KernelSpec(0.0)
    with pytest.raises(ConfigError):
        KernelSpec(0.1, "gaussian")


def test_weights_hand_case():
    # antiderivative 1500 (0.01 x - x^3 / 3) of the eta = 0.1 concave kernel
    F = lambda x: 1500.0 * (0.01 * x - x**3 / 3.0)
    w = kernel_weights(KernelSpec(0.1), 0.05)
    assert w.n_eta == 2
    np.testing.assert_allclose(w.gamma, [F(0.05) - F(0.0), F(0.1) - F(0.05)], rtol=1e-13)
    np.testing.assert_allclose(w.gamma, [0.6875, 0.3125], rtol=1e-13)


def test_single_cell_window():
    w = kernel_weights(KernelSpec(0.1), 0.1)
    assert w.n_eta == 1
    assert w.gamma0 == pytest.approx(1.0, abs=1e-14)


def test_dx_larger_than_eta_rejected():
    with pytest.raises(ConfigError):
        kernel_weights(KernelSpec(0.1), 0.2)


def test_floor_guard():
    assert n_look_ahead(0.3, 0.1) == 3
    assert n_look_ahead(0.2, 0.003) == 66


@pytest.mark.parametrize("family", FAMILIES)
def test_family_is_an_admissible_kernel(family):
    spec = KernelSpec(0.37, family)
    x = np.linspace(0.0, spec.eta, 2001)
    w = spec.value(x)
    assert np.all(w >= 0)
    assert np.all(np.diff(w) <= 1e-12)
    mass, _ = quad(lambda s: kernel_value(spec, s), 0.0, spec.eta, epsabs=1e-14)
    assert mass == pytest.approx(1.0, abs=1e-12)
    assert spec.w0 == pytest.approx(w.max())
    slopes = np.abs(np.diff(w) / np.diff(x))
    assert slopes.max() <= spec.derivative_sup * (1 + 1e-9)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("eta,dx", [(0.1, 0.01), (0.2, 0.05), (1.0, 0.125), (0.3, 0.1)])
def test_weights_sum_to_one_when_dx_divides_eta(family, eta, dx):
    assert kernel_weights(KernelSpec(eta, family), dx).total == pytest.approx(1.0, abs=1e-12)


def test_remainder_interval_is_dropped():
    w = kernel_weights(KernelSpec(0.1), 0.03)
    assert w.n_eta == 3
    assert w.total < 1.0
    assert w.total == pytest.approx(KernelSpec(0.1).mass(0.0, 0.09), rel=1e-13)


def test_weights_match_adaptive_quadrature(rng):
    for _ in range(100):
        family = FAMILIES[rng.integers(len(FAMILIES))]
        eta = rng.uniform(0.05, 2.0)
        dx = eta / rng.uniform(1.0, 80.0)
        spec = KernelSpec(eta, family)
        w = kernel_weights(spec, dx)
        k = int(rng.integers(w.n_eta))
        ref, _ = quad(lambda s: kernel_value(spec, s), k * dx, min((k + 1) * dx, eta), epsabs=1e-15, epsrel=1e-13)
        assert abs(w.gamma[k] - ref) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(
    family=st.sampled_from(FAMILIES),
    eta=st.floats(0.01, 5.0),
    ratio=st.floats(1.0, 200.0),
)
def test_weight_invariants(family, eta, ratio):
    spec = KernelSpec(eta, family)
    dx = eta / ratio
    w = kernel_weights(spec, dx)
    assert w.n_eta == math.floor(eta / dx + 1e-9)
    assert np.all(w.gamma >= 0)
    assert np.all(np.diff(w.gamma) <= 1e-15)
    assert w.total <= 1.0 + 1e-12
    assert np.all(w.gamma <= spec.w0 * dx * (1 + 1e-12))


def test_weights_are_read_only():
    w = kernel_weights(KernelSpec(0.1), 0.01)
    with pytest.raises(ValueError):
        w.gamma[0] = 1.0
