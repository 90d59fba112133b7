import numpy as np
import pytest
from hypothesis import given, strategies as st

from captrade.inflation import (
    CpiBasket,
    average_inflation_rate,
    basket_from_firms,
    net_zero_price,
    policy_cpi_adjustment,
)
from captrade.model import FirmParams, ValidationError


def firm(**kw):
    base = dict(a=10.0, b=0.5, kappa=2.0, delta=1.0, gamma=1.0, sigma=0.3, h=1.0, eta=1.0)
    base.update(kw)
    return FirmParams(**base).validate()


def test_single_firm_basket():
    bk = basket_from_firms([firm()], [1.0])
    assert bk.pi_b == 6.0
    assert bk.omega_bar == 0.25
    assert policy_cpi_adjustment(bk, 4.0) == 1.0


def test_identical_firms_match_one_firm():
    one = basket_from_firms([firm()], [1.0])
    three = basket_from_firms([firm()] * 3, [0.2, 0.3, 0.5])
    assert three.pi_b == pytest.approx(one.pi_b, rel=1e-15)
    assert three.omega_bar == pytest.approx(one.omega_bar, rel=1e-15)


def test_pass_through_routes():
    bk = CpiBasket(omega_eff=0.01)
    assert average_inflation_rate(bk, 1.0, 5.0) * 100 == 1.0
    net_zero = CpiBasket().with_omega_eff_percent(0.0075)
    assert average_inflation_rate(net_zero, 880.0, 25.0) == pytest.approx(0.066, rel=1e-12)
    structural = basket_from_firms([firm()], [1.0])
    I = average_inflation_rate(structural, 8.0, 2.0)
    assert I == pytest.approx(structural.omega_bar * 8.0 / (2.0 * structural.pi_b), rel=1e-15)
    # The calibrated route reproduces the structural one when set to the same number.
    calibrated = CpiBasket(omega_eff=structural.pass_through(2.0))
    assert average_inflation_rate(calibrated, 8.0, 2.0) == pytest.approx(I, rel=1e-15)


def test_pass_through_needs_inputs():
    with pytest.raises(ValidationError):
        CpiBasket().pass_through(1.0)
    with pytest.raises(ValidationError):
        average_inflation_rate(CpiBasket(omega_eff=0.01), 1.0, 0.0)
    with pytest.raises(ValidationError):
        policy_cpi_adjustment(CpiBasket(omega_eff=0.01), 1.0)


def test_net_zero_price_example():
    assert net_zero_price(1.5e9, 1.5e8, 1.875e6) == 880.0
    with pytest.raises(ValidationError):
        net_zero_price(1.0, 1.0, 0.0)


@pytest.mark.parametrize("weights", [[0.5, 0.6], [1.0, 0.0], [0.5], [-0.5, 1.5], [0.3, 0.3, 0.3]])
def test_bad_weights(weights):
    with pytest.raises(ValidationError):
        basket_from_firms([firm(), firm(a=12.0)], weights)


@given(st.floats(0.05, 0.95), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_basket_is_weighted_average(w, b1, b2):
    f1, f2 = firm(b=b1), firm(b=b2, a=14.0)
    bk = basket_from_firms([f1, f2], [w, 1 - w])
    s1 = basket_from_firms([f1], [1.0])
    s2 = basket_from_firms([f2], [1.0])
    assert bk.pi_b == pytest.approx(w * s1.pi_b + (1 - w) * s2.pi_b, rel=1e-12)
    assert bk.omega_bar == pytest.approx(w * s1.omega_bar + (1 - w) * s2.omega_bar, rel=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.1, 10.0))
def test_cpi_adjustment_is_linear(p1, p2, c):
    bk = basket_from_firms([firm()], [1.0])
    assert policy_cpi_adjustment(bk, p1 + c * p2) == pytest.approx(
        policy_cpi_adjustment(bk, p1) + c * policy_cpi_adjustment(bk, p2), rel=1e-9, abs=1e-9
    )
    arr = policy_cpi_adjustment(bk, np.array([p1, p2]))
    assert arr.shape == (2,)


@given(st.floats(1e6, 1e10), st.floats(1e5, 1e9), st.floats(1e3, 1e8), st.floats(0.1, 10.0))
def test_net_zero_price_homogeneity(mu, H, phi, c):
    p = net_zero_price(mu, H, phi)
    assert phi * p == pytest.approx(mu + H, rel=1e-12)
    assert net_zero_price(c * mu, c * H, c * phi) == pytest.approx(p, rel=1e-12)
