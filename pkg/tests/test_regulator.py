import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from captrade import equilibrium as eq
from captrade import regulator as reg
from captrade.model import ValidationError, derive_aggregates
from captrade.oracle import grid_minimize_s
from captrade.scenario import preset_scenario

from _factories import quadratic_spec, random_economy


@pytest.fixture(scope="module")
def preset():
    return preset_scenario()


def test_penalty_examples(preset):
    spec = preset.regulator
    assert spec.iota == pytest.approx(7.5e-5, rel=1e-15)
    assert spec.nu == 0.02
    assert reg.social_cost(spec, 880.0).s_mu == 0.0
    assert reg.social_cost(spec, 0.0).s_mu == pytest.approx(2.7225e15, rel=1e-15)
    zero = replace(spec, ell=reg.Quadratic(0.0), varphi=reg.Quadratic(0.0))
    c = reg.social_cost(zero, 500.0)
    assert c.s_mu == 0.0 and c.s_pi == 0.0
    assert c.total == c.firm == pytest.approx(spec.quadratic_weight * 500.0**2, rel=1e-15)
    # Inflation argument is measured in %/y.
    assert spec.inflation_argument(880.0) == pytest.approx(4.6, rel=1e-12)


def test_piecewise_linear_penalty():
    p = reg.PiecewiseLinear((0.0, 2.0), (-1.0, 1.0, 3.0))
    assert p.value(-3.0) == 3.0
    assert p.value(1.0) == 1.0
    assert p.value(4.0) == 2.0 + 6.0
    assert p.right_derivative(0.0) == 1.0 and p.left_derivative(0.0) == -1.0
    assert p.right_derivative(2.0) == 3.0 and p.left_derivative(2.0) == 1.0
    with pytest.raises(ValidationError):
        reg.PiecewiseLinear((0.0,), (1.0, -1.0))
    with pytest.raises(ValidationError):
        reg.PiecewiseLinear((1.0, 0.0), (0.0, 1.0, 2.0))
    with pytest.raises(ValidationError):
        reg.PiecewiseLinear((0.0,), (1.0,))
    with pytest.raises(ValidationError):
        reg.Quadratic(-1.0)


def test_solution_at_preset(preset):
    sol = reg.minimize_social_cost(preset.regulator)
    assert sol.method == "closed-form"
    assert sol.routes_agree
    assert 850 <= sol.P_star <= 900
    mu, pi_hat, i = reg.equilibrium_outcomes(preset.regulator, sol.P_star)
    assert mu == sol.mu_star_T
    assert i == pytest.approx(7.5e-5 * sol.P_star, rel=1e-15)
    assert pi_hat == pytest.approx(preset.regulator.pi_b * (1 + 25.0 * i), rel=1e-15)


def test_equilibrium_outcomes_at_net_zero(preset):
    mu, _, i = reg.equilibrium_outcomes(preset.regulator, 880.0)
    assert mu == 0.0
    assert i == pytest.approx(0.066, rel=1e-12)
    assert reg.equilibrium_outcomes(replace(preset.regulator, pi_b=None), 880.0)[1] is None


def _random_spec(seed):
    rng = np.random.default_rng(seed)
    eco = random_economy(rng)
    agg = derive_aggregates(eco)
    a = 0.5 * eco.N * eco.T * (agg.phi_bar + 1 / (2 * eco.lam * eco.T))
    # Weights scaled so that each term can dominate.
    y_mu = a / agg.phi_bar**2 * 10 ** rng.uniform(-3, 3)
    iota = 10 ** rng.uniform(-4, -1)
    y_pi = a / (100 * iota) ** 2 * 10 ** rng.uniform(-3, 3)
    return quadratic_spec(eco, y_mu, y_pi, iota, theta=rng.uniform(-0.5, 0.5) * agg.mu_bar_b, nu=rng.uniform(0, 0.05))


@pytest.mark.parametrize("seed", range(100))
def test_three_routes_agree(seed):
    spec = _random_spec(seed)
    cf = reg.closed_form_price(spec)
    bis = reg.bisect_price(spec)
    hi = 4.0 * max(spec.net_zero_price, abs(cf), 1.0)
    gm = grid_minimize_s(spec, -hi, hi, 2001)
    assert not gm.at_boundary
    scale = max(abs(cf), 1e-3 * spec.net_zero_price)
    assert abs(bis - cf) <= 1e-9 * scale
    assert abs(gm.x - cf) <= 1e-6 * scale


def test_absolute_emission_penalty_hits_net_zero(preset):
    spec = replace(preset.regulator, ell=reg.PiecewiseLinear((0.0,), (-1e6, 1e6)), varphi=reg.Quadratic(0.0))
    sol = reg.minimize_social_cost(spec)
    assert sol.method == "bisection"
    assert sol.P_closed_form is None
    assert sol.P_star == pytest.approx(880.0, rel=1e-12)


def test_large_emission_weight_tends_to_net_zero(preset):
    prev = None
    for y in (1e-3, 1e-1, 1e1, 1e3):
        p = reg.closed_form_price(reg.with_weights(preset.regulator, y_mu=y, y_pi=0.0))
        gap = abs(p - 880.0)
        if prev is not None:
            assert gap < prev
        prev = gap
    assert prev < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_allocation_round_trip(seed):
    spec = _random_spec(seed)
    rng = np.random.default_rng(seed)
    eco = random_economy(rng)
    spec = quadratic_spec(eco, spec.ell.weight, spec.varphi.weight, spec.iota, spec.theta, spec.nu)
    sol = reg.minimize_social_cost(spec)
    P = eq.initial_price(derive_aggregates(eco), sol.M_bar_star_0, eco.T, eco.lam)
    assert abs(P - sol.P_star) <= 1e-9 * max(abs(sol.P_star), 1.0)


def test_zero_price_round_trip(preset):
    spec = replace(preset.regulator, theta=1.65e9, varphi=reg.Quadratic(0.0))
    sol = reg.minimize_social_cost(spec)
    assert sol.P_star == 0.0
    assert sol.M_bar_star_0 == pytest.approx(1.65e9 * 25.0, rel=1e-15)


def test_optimal_allocation_freezes_the_price():
    scen = preset_scenario(N=3, preset={"name": "eu-netzero-2050", "N": 3, "sigma": 5e7, "s_loading": 0.4})
    spec = scen.regulator
    sol = reg.minimize_social_cost(spec)
    A = reg.optimal_allocation(spec, sol.P_star, scen.economy)
    ens = eq.simulate(scen.economy, A, 200, 200, 0)
    assert ens.P0 == pytest.approx(sol.P_star, rel=1e-9)
    assert np.max(ens.price_qv) <= 1e-6 * sol.P_star**2
    with pytest.raises(ValidationError):
        reg.optimal_allocation(spec, sol.P_star, preset_scenario(N=2).economy)


def test_ratio_surface(preset):
    spec = preset.regulator
    grid_mu = [spec.ell.weight * f for f in reg.SURFACE_FACTORS]
    grid_pi = [spec.varphi.weight * f for f in reg.SURFACE_FACTORS]
    rows = reg.sweep_ratio_surface(spec, grid_mu, grid_pi)
    assert len(rows) == 25
    for r in rows:
        assert 0.0 <= r["ratio"] <= 1.0
    null = reg.sweep_ratio_surface(spec, [0.0], [0.0])
    assert null[0]["ratio"] is None and null[0]["p_star"] == 0.0
    with pytest.raises(ValidationError):
        reg.sweep_ratio_surface(spec, [-1.0], [1.0])


def test_cost_curves_are_convex_and_respond_to_y_mu(preset):
    spec = preset.regulator
    x = np.linspace(0.0, 1000.0, 1001)
    rows = reg.sweep_cost_curves(spec, x, ["ymu/10", "ypi*1e5"])
    assert set(rows[0]) == {"x", "s_reference", "s_ymu/10", "s_ypi*1e5"}
    for key in ("s_reference", "s_ymu/10", "s_ypi*1e5"):
        s = np.array([r[key] for r in rows])
        assert np.all(np.diff(s, 2) >= -1e-9 * np.max(np.abs(s)))
    ref = x[np.argmin([r["s_reference"] for r in rows])]
    low = x[np.argmin([r["s_ymu/10"] for r in rows])]
    assert low < ref


def test_parse_variation(preset):
    spec = preset.regulator
    assert reg.parse_variation("ymu/10", spec).ell.weight == pytest.approx(1e-4, rel=1e-15)
    assert reg.parse_variation(" ypi * 1e5 ", spec).varphi.weight == pytest.approx(7.5e16, rel=1e-15)
    for bad in ("ymu^2", "foo/3", "ymu/0", "ymu/-2"):
        with pytest.raises(ValidationError):
            reg.parse_variation(bad, spec)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_comparative_statics(seed):
    spec = _random_spec(seed)
    p = reg.closed_form_price(spec)
    gap_mu = spec.emission_gap / spec.phi_bar - p
    gap_pi = spec.nu - spec.iota * p
    assume(abs(gap_mu) > 1e-6 * max(abs(p), 1.0) and abs(gap_pi) > 1e-6 * spec.nu)
    bump = 1.0 + 1e-3
    d_mu = reg.closed_form_price(reg.with_weights(spec, y_mu=spec.ell.weight * bump)) - p
    d_pi = reg.closed_form_price(reg.with_weights(spec, y_pi=spec.varphi.weight * bump)) - p
    assert (d_mu >= 0) == (gap_mu > 0)
    assert (d_pi >= 0) == (gap_pi > 0)


def _random_piecewise(rng, scale):
    k = int(rng.integers(1, 4))
    b = np.sort(rng.normal(0, scale, k))
    s = np.sort(rng.normal(0, 1, k + 1)) * 10 ** rng.uniform(0, 3)
    return reg.PiecewiseLinear(tuple(b), tuple(s))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bisection_finds_the_subgradient_zero(seed):
    rng = np.random.default_rng(seed)
    base = _random_spec(seed)
    spec = replace(
        base,
        ell=_random_piecewise(rng, base.emission_gap) if rng.random() < 0.7 else base.ell,
        varphi=_random_piecewise(rng, 5.0) if rng.random() < 0.7 else base.varphi,
    )
    spec = replace(spec, ell=_scale_piecewise(spec.ell, spec.quadratic_weight / spec.phi_bar * max(spec.net_zero_price, 1.0)))
    p = reg.bisect_price(spec)
    h = 1e-9 * max(abs(p), 1.0)
    assert reg.right_derivative(spec, p) >= 0
    assert reg.right_derivative(spec, p - h) < 0
    s_star = reg.social_cost(spec, p).total
    probe = p + np.linspace(-1, 1, 41) * max(abs(p), 1.0)
    assert np.all(reg.social_cost(spec, probe).total >= s_star - 1e-12 * abs(s_star))


def _scale_piecewise(pen, c):
    if isinstance(pen, reg.PiecewiseLinear):
        return reg.PiecewiseLinear(pen.breakpoints, tuple(c * s for s in pen.slopes))
    return pen


def test_non_convex_penalty_is_rejected(preset):
    bad = reg.External(lambda z: -z**2, lambda z: -2 * z)
    with pytest.raises(ValidationError) as err:
        reg.minimize_social_cost(replace(preset.regulator, ell=bad))
    assert "ell" in err.value.field
    with pytest.raises(ValidationError):
        reg.closed_form_price(replace(preset.regulator, ell=bad))


def test_external_penalty_matches_quadratic(preset):
    q = preset.regulator
    ext = replace(q, varphi=reg.External(lambda z: q.varphi.weight * z**2, lambda z: 2 * q.varphi.weight * z))
    assert reg.minimize_social_cost(ext).P_star == pytest.approx(reg.closed_form_price(q), rel=1e-9)


def test_bracket_error(preset):
    spec = replace(preset.regulator, nu=10.0, ell=reg.Quadratic(0.0))
    with pytest.raises(reg.BracketError) as err:
        reg.bisect_price(spec, max_doublings=2)
    lo, hi = err.value.bracket
    assert lo < hi
    assert reg.bisect_price(spec) == pytest.approx(reg.closed_form_price(spec), rel=1e-9)


def test_spec_validation(preset):
    for kw in (dict(N=0), dict(T=0.0), dict(lam=-1.0), dict(phi_bar=math.nan), dict(nu=math.inf), dict(pi_b=0.0)):
        with pytest.raises(ValidationError):
            replace(preset.regulator, **kw).validate()
