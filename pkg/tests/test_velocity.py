import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snvtraffic.errors import ConfigError, DomainError
from snvtraffic.velocity import (
    StochasticVelocity,
    VelocityModel,
    expected_velocity,
    limited_velocity,
    limited_velocity_derivative,
    velocity_variance,
)

LIN = VelocityModel("linear")
QUAD = VelocityModel("quadratic")


def literal_moments(v, tau):
    """Moment formulas written out directly, without the stable rearrangement."""
    hi = (tau + v) ** 2 - max(0.0, v - tau) ** 2
    mean = hi / (4 * tau)
    second = ((tau + v) ** 3 - max(0.0, v - tau) ** 3) / (6 * tau)
    return mean, second - mean**2


def test_limiter_examples():
    sv = StochasticVelocity(LIN, 0.5)
    assert limited_velocity(sv, 0.9, -0.2) == 0.0
    assert limited_velocity(sv, 0.5, 0.3) == pytest.approx(0.8, abs=1e-15)
    assert limited_velocity(sv, 0.37, 0.0) == LIN(0.37)


def test_derivative_examples():
    sv = StochasticVelocity(LIN, 0.5)
    assert limited_velocity_derivative(sv, 0.95, -0.2) == 0.0
    assert limited_velocity_derivative(sv, 0.5, 0.3) == -1.0
    assert limited_velocity_derivative(StochasticVelocity(QUAD, 0.5), 0.5, 0.0) == pytest.approx(-1.0)
    # kink itself: v + eps == 0 takes the zero branch
    assert limited_velocity_derivative(sv, 0.5, -0.5) == 0.0


def test_domain_errors():
    sv = StochasticVelocity(LIN, 0.5)
    with pytest.raises(DomainError):
        limited_velocity(sv, 1.2, 0.0)
    with pytest.raises(DomainError):
        limited_velocity(sv, -0.1, 0.0)
    with pytest.raises(DomainError):
        limited_velocity(sv, 0.5, 0.6)
    with pytest.raises(DomainError):
        expected_velocity(sv, 1.5)


def test_tau_must_stay_below_vmax():
    with pytest.raises(ConfigError, match="tau must be strictly less than v_max"):
        StochasticVelocity(LIN, 1.0)
    with pytest.raises(ConfigError):
        StochasticVelocity(LIN, -0.1)


def test_closed_form_derivative_sup():
    assert LIN.derivative_sup == 1.0
    assert QUAD.derivative_sup == 2.0
    assert VelocityModel("quadratic", 2.0, 4.0).derivative_sup == 1.0


def test_moment_examples():
    sv = StochasticVelocity(QUAD, 0.8)
    assert expected_velocity(sv, 1.0) == pytest.approx(0.2, abs=1e-15)
    assert velocity_variance(sv, 1.0) == pytest.approx(0.512 / 4.8 - 0.04, abs=1e-15)
    rho = np.sqrt(0.1)  # v = 0.9 >= tau
    assert expected_velocity(sv, rho) == pytest.approx(0.9, abs=1e-15)
    assert velocity_variance(sv, rho) == pytest.approx(0.64 / 3, abs=1e-15)


def test_moments_without_noise():
    sv = StochasticVelocity(QUAD, 0.0)
    rho = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(expected_velocity(sv, rho), QUAD(rho))
    np.testing.assert_array_equal(velocity_variance(sv, rho), 0.0)


def test_stable_form_matches_literal_formula():
    for tau in (0.05, 0.3, 0.8, 0.99):
        sv = StochasticVelocity(QUAD, tau)
        for rho in np.linspace(0, 1, 41):
            m, var = literal_moments(float(QUAD(rho)), tau)
            assert expected_velocity(sv, rho) == pytest.approx(m, abs=1e-13)
            assert velocity_variance(sv, rho) == pytest.approx(var, abs=1e-12)


def test_moments_against_monte_carlo(rng):
    fails = []
    for _ in range(50):
        base = [LIN, QUAD][rng.integers(2)]
        tau = rng.uniform(0.01, 0.99)
        rho = rng.uniform(0, 1)
        sv = StochasticVelocity(base, tau)
        draws = sv.limited(rho, rng.uniform(-tau, tau, 10**6))
        n = draws.size
        mean = draws.mean()
        var = draws.var(ddof=1)
        se_mean = draws.std() / np.sqrt(n)
        m4 = np.mean((draws - mean) ** 4)
        se_var = np.sqrt(max(m4 - var**2, 0.0) / n)
        if abs(mean - expected_velocity(sv, rho)) > 4 * se_mean + 1e-15:
            fails.append(("mean", base.family, tau, rho))
        if abs(var - velocity_variance(sv, rho)) > 4 * se_var + 1e-15:
            fails.append(("var", base.family, tau, rho))
    assert not fails


def test_mean_increase_and_variance_cap():
    rho = np.linspace(0, 1, 101)
    for base in (LIN, QUAD):
        for tau in (0.1, 0.5, 0.8):
            sv = StochasticVelocity(base, tau)
            assert np.all(expected_velocity(sv, rho) >= base(rho))
            var = velocity_variance(sv, rho)
            assert np.all(var >= 0)
            assert np.all(var <= tau**2 / 3 + 1e-12)
            inactive = base(rho) >= tau
            np.testing.assert_array_equal(expected_velocity(sv, rho)[inactive], base(rho)[inactive])
            # strict increase once the limiter can fire, away from the rounding-sensitive threshold
            active = base(rho) < tau - 1e-9
            assert np.all(expected_velocity(sv, rho)[active] > base(rho)[active])


@settings(max_examples=300, deadline=None)
@given(
    family=st.sampled_from(["linear", "quadratic"]),
    tau=st.floats(0.0, 0.99),
    rho=st.floats(0.0, 1.0),
    u1=st.floats(-1.0, 1.0),
    u2=st.floats(-1.0, 1.0),
)
def test_limiter_is_one_lipschitz_in_eps(family, tau, rho, u1, u2):
    sv = StochasticVelocity(VelocityModel(family), tau)
    e1, e2 = tau * u1, tau * u2
    d = abs(limited_velocity(sv, rho, e1) - limited_velocity(sv, rho, e2))
    assert d <= abs(e1 - e2) + 1e-15


@settings(max_examples=300, deadline=None)
@given(
    family=st.sampled_from(["linear", "quadratic"]),
    tau=st.floats(0.0, 0.99),
    r1=st.floats(0.0, 1.0),
    r2=st.floats(0.0, 1.0),
    u=st.floats(-1.0, 1.0),
)
def test_limiter_monotone_and_bounded(family, tau, r1, r2, u):
    sv = StochasticVelocity(VelocityModel(family), tau)
    lo, hi = sorted((r1, r2))
    eps = tau * u
    a, b = limited_velocity(sv, lo, eps), limited_velocity(sv, hi, eps)
    assert a >= b
    assert 0.0 <= b <= a <= 1.0 + tau
    assert abs(limited_velocity_derivative(sv, lo, eps)) <= sv.base.derivative_sup


def test_bound_chain_is_attained():
    sv = StochasticVelocity(LIN, 0.4)
    assert limited_velocity(sv, 0.0, 0.4) == pytest.approx(1.4)
    assert sv.norm_bound == pytest.approx(1.4)


def test_custom_law_validation():
    v = lambda r: 1.0 - r**3
    dv = lambda r: -3.0 * r**2
    model = VelocityModel.custom(v, dv, 3.0, 1.0, 1.0)
    assert model(0.5) == pytest.approx(0.875)
    assert model.inverse(0.875) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConfigError):
        VelocityModel.custom(lambda r: r, lambda r: np.ones_like(r), 1.0, 0.0 + 1.0, 1.0)
    with pytest.raises(ConfigError):
        VelocityModel.custom(v, dv, 1.0, 1.0, 1.0)


def test_activation_density():
    assert StochasticVelocity(QUAD, 0.8).activation_density() == pytest.approx(np.sqrt(0.2), abs=1e-15)
    assert StochasticVelocity(LIN, 0.25).activation_density() == pytest.approx(0.75)
