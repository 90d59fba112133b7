"""The regulator's allocation problem.

With a constant equilibrium price x the regulator's cost, up to constants, is

    s(x) = x^2 N T / 2 (phi_bar + 1 / (2 lam T)) + ell(mu_bar_b + H_bar - phi_bar x - theta)
           + varphi(100 (iota x - nu)),

where iota is the annual inflation (fraction/y) per EUR/t and the inflation
penalty reads its argument in %/y.  s is strictly convex and coercive; its
minimiser P* is found in closed form for quadratic penalties and by bisection
on the right derivative otherwise.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .equilibrium import AllocationProgram, allocation_for_price
from .inflation import PERCENT, CpiBasket, net_zero_price
from .model import EconomyParams, ValidationError, derive_aggregates


class BracketError(RuntimeError):
    """No sign change of s'_+ was found while expanding the search bracket."""

    def __init__(self, lo: float, hi: float, message: str):
        self.bracket = (lo, hi)
        super().__init__(f"{message} (last bracket [{lo!r}, {hi!r}])")


# ---------------------------------------------------------------- penalties


@dataclass(frozen=True)
class Quadratic:
    """y z^2."""

    weight: float

    def __post_init__(self):
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValidationError("penalty.weight", f"must be finite and >= 0, got {self.weight!r}")

    def value(self, z):
        return self.weight * np.square(z)

    def right_derivative(self, z):
        return 2.0 * self.weight * np.asarray(z, dtype=float)

    left_derivative = right_derivative


@dataclass(frozen=True)
class PiecewiseLinear:
    """Convex piecewise-linear penalty through the origin.

    ``slopes[k]`` applies between ``breakpoints[k-1]`` and ``breakpoints[k]``;
    the absolute value y|z| is ``PiecewiseLinear((0.0,), (-y, y))``.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(v) for v in self.breakpoints)
        s = tuple(float(v) for v in self.slopes)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "slopes", s)
        if len(s) != len(b) + 1:
            raise ValidationError("penalty.slopes", "need one more slope than breakpoints")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValidationError("penalty.breakpoints", "must be strictly increasing")
        if any(y < x for x, y in zip(s, s[1:])):
            raise ValidationError("penalty.slopes", "must be non-decreasing (convexity)")

    def value(self, z):
        z = np.asarray(z, dtype=float)
        out = self.slopes[0] * z
        for k, bk in enumerate(self.breakpoints):
            out = out + (self.slopes[k + 1] - self.slopes[k]) * np.maximum(z - bk, 0.0)
        return out

    def right_derivative(self, z):
        idx = np.searchsorted(self.breakpoints, np.asarray(z, dtype=float), side="right")
        return np.asarray(self.slopes)[idx]

    def left_derivative(self, z):
        idx = np.searchsorted(self.breakpoints, np.asarray(z, dtype=float), side="left")
        return np.asarray(self.slopes)[idx]


@dataclass(frozen=True)
class External:
    """User-supplied convex penalty.

    ``value`` and ``right_derivative`` must accept arrays.  Without an explicit
    ``left_derivative`` the right derivative is used, which is exact wherever
    the penalty is differentiable.
    """

    value_fn: Callable
    right_derivative_fn: Callable
    left_derivative_fn: Callable | None = None

    def value(self, z):
        return np.asarray(self.value_fn(np.asarray(z, dtype=float)), dtype=float)

    def right_derivative(self, z):
        return np.asarray(self.right_derivative_fn(np.asarray(z, dtype=float)), dtype=float)

    def left_derivative(self, z):
        fn = self.left_derivative_fn or self.right_derivative_fn
        return np.asarray(fn(np.asarray(z, dtype=float)), dtype=float)


Penalty = Quadratic | PiecewiseLinear | External


def check_convex(penalty, lo: float, hi: float, n: int = 513, name: str = "penalty") -> None:
    """Raise if the right derivative decreases anywhere on a uniform sample of [lo, hi]."""
    z = np.linspace(lo, hi, n)
    d = np.asarray(penalty.right_derivative(z), dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValidationError(name, "right derivative is not finite on the sampled range")
    drop = np.diff(d)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(d))))
    if np.any(drop < -tol):
        k = int(np.argmin(drop))
        raise ValidationError(name, f"not convex: right derivative decreases near z={z[k]!r}")


# ---------------------------------------------------------------- spec


@dataclass(frozen=True)
class RegulatorSpec:
    """Everything the social cost depends on.

    iota: inflation pass-through, fraction/y per EUR/t.  theta: target emission
    rate, t/y per firm.  nu: acceptable inflation, fraction/y.  pi_b is only
    needed to report the terminal CPI level.
    """

    N: int
    T: float
    lam: float
    mu_bar_b: float
    H_bar: float
    phi_bar: float
    iota: float
    ell: Penalty
    varphi: Penalty
    theta: float = 0.0
    nu: float = 0.02
    pi_b: float | None = None

    def validate(self) -> "RegulatorSpec":
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError("regulator.N", f"must be a positive integer, got {self.N!r}")
        for name in ("T", "lam", "phi_bar"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValidationError(f"regulator.{name}", f"must be positive, got {v!r}")
        for name in ("mu_bar_b", "H_bar", "iota", "theta", "nu"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"regulator.{name}", "must be finite")
        if self.pi_b is not None and not self.pi_b > 0:
            raise ValidationError("regulator.pi_b", "must be positive")
        return self

    @classmethod
    def from_economy(
        cls,
        economy: EconomyParams,
        basket: CpiBasket,
        ell: Penalty,
        varphi: Penalty,
        theta: float = 0.0,
        nu: float = 0.02,
    ) -> "RegulatorSpec":
        agg = derive_aggregates(economy)
        return cls(
            N=economy.N, T=economy.T, lam=economy.lam, mu_bar_b=agg.mu_bar_b, H_bar=agg.H_bar,
            phi_bar=agg.phi_bar, iota=basket.pass_through(economy.T), ell=ell, varphi=varphi,
            theta=theta, nu=nu, pi_b=basket.pi_b,
        ).validate()

    @property
    def quadratic_weight(self) -> float:
        """Coefficient a of the firm-cost term a x^2."""
        return 0.5 * self.N * self.T * (self.phi_bar + 1.0 / (2.0 * self.lam * self.T))

    @property
    def emission_gap(self) -> float:
        return self.mu_bar_b + self.H_bar - self.theta

    @property
    def net_zero_price(self) -> float:
        return net_zero_price(self.mu_bar_b, self.H_bar, self.phi_bar)

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.ell, Quadratic) and isinstance(self.varphi, Quadratic)

    def emission_argument(self, x):
        return self.emission_gap - self.phi_bar * np.asarray(x, dtype=float)

    def inflation_argument(self, x):
        """Deviation of policy inflation from nu, in %/y."""
        return PERCENT * (self.iota * np.asarray(x, dtype=float) - self.nu)


# ---------------------------------------------------------------- social cost


@dataclass(frozen=True)
class SocialCost:
    total: np.ndarray | float
    firm: np.ndarray | float
    s_mu: np.ndarray | float
    s_pi: np.ndarray | float


def _scalar(v):
    v = np.asarray(v, dtype=float)
    return v if v.ndim else float(v)


def social_cost(spec: RegulatorSpec, x) -> SocialCost:
    x = np.asarray(x, dtype=float)
    firm = spec.quadratic_weight * x * x
    s_mu = spec.ell.value(spec.emission_argument(x))
    s_pi = spec.varphi.value(spec.inflation_argument(x))
    return SocialCost(_scalar(firm + s_mu + s_pi), _scalar(firm), _scalar(s_mu), _scalar(s_pi))


def right_derivative(spec: RegulatorSpec, x):
    """s'_+(x).  The emission argument decreases in x, so ell enters through its left derivative."""
    x = np.asarray(x, dtype=float)
    d = 2.0 * spec.quadratic_weight * x
    d = d - spec.phi_bar * spec.ell.left_derivative(spec.emission_argument(x))
    z_pi = spec.inflation_argument(x)
    if spec.iota >= 0:
        d = d + PERCENT * spec.iota * spec.varphi.right_derivative(z_pi)
    else:
        d = d + PERCENT * spec.iota * spec.varphi.left_derivative(z_pi)
    return _scalar(d)


def closed_form_price(spec: RegulatorSpec) -> float:
    """Minimiser of s for quadratic penalties (weights y_mu and y_pi)."""
    if not spec.is_quadratic:
        raise ValidationError("regulator", "closed form needs quadratic penalties")
    y_mu, y_pi = spec.ell.weight, spec.varphi.weight
    iota_pct = PERCENT * spec.iota
    nu_pct = PERCENT * spec.nu
    num = spec.phi_bar * spec.emission_gap * y_mu + y_pi * iota_pct * nu_pct
    den = spec.quadratic_weight + spec.phi_bar**2 * y_mu + iota_pct**2 * y_pi
    return num / den


def bisect_price(spec: RegulatorSpec, max_doublings: int = 60, max_iter: int = 400) -> float:
    """inf{x : s'_+(x) >= 0} by bisection on an automatically expanded bracket."""
    nz = spec.net_zero_price
    lo, hi = 0.0, 2.0 * nz if nz > 0 else 1.0
    for _ in range(max_doublings):
        if right_derivative(spec, hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(lo, hi, "s'_+ stays negative")
    width = hi - lo
    for _ in range(max_doublings):
        if right_derivative(spec, lo) < 0:
            break
        hi, lo = lo, lo - width
        width *= 2.0
    else:
        raise BracketError(lo, hi, "s'_+ stays non-negative")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if right_derivative(spec, mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RegulatorSolution:
    P_star: float
    M_bar_star_0: float
    mu_star_T: float
    pi_hat_T: float | None
    i_star_T: float
    s_at_star: float
    s_mu: float
    s_pi: float
    firm_cost: float
    method: str
    P_bisection: float
    P_closed_form: float | None = None

    @property
    def routes_agree(self) -> bool:
        if self.P_closed_form is None:
            return True
        scale = max(abs(self.P_closed_form), 1e-300)
        return abs(self.P_bisection - self.P_closed_form) <= 1e-9 * scale


def equilibrium_outcomes(spec: RegulatorSpec, P_star: float) -> tuple[float, float | None, float]:
    """(terminal average emission rate, terminal CPI level, policy inflation rate) at a constant price."""
    mu_star = spec.mu_bar_b + spec.H_bar - spec.phi_bar * P_star
    i_star = spec.iota * P_star
    pi_hat = None if spec.pi_b is None else spec.pi_b * (1.0 + spec.T * i_star)
    return mu_star, pi_hat, i_star


def minimize_social_cost(spec: RegulatorSpec) -> RegulatorSolution:
    spec.validate()
    nz = spec.net_zero_price
    span = 4.0 * max(abs(nz), 1.0)
    check_convex(spec.ell, *sorted((spec.emission_argument(-span), spec.emission_argument(span))), name="regulator.ell")
    check_convex(spec.varphi, *sorted((spec.inflation_argument(-span), spec.inflation_argument(span))), name="regulator.varphi")
    p_bis = bisect_price(spec)
    p_cf = closed_form_price(spec) if spec.is_quadratic else None
    p = p_cf if p_cf is not None else p_bis
    cost = social_cost(spec, p)
    mu_star, pi_hat, i_star = equilibrium_outcomes(spec, p)
    return RegulatorSolution(
        P_star=p,
        M_bar_star_0=(spec.mu_bar_b + spec.H_bar) * spec.T - p * (1.0 / (2.0 * spec.lam) + spec.phi_bar * spec.T),
        mu_star_T=mu_star,
        pi_hat_T=pi_hat,
        i_star_T=i_star,
        s_at_star=cost.total,
        s_mu=cost.s_mu,
        s_pi=cost.s_pi,
        firm_cost=cost.firm,
        method="closed-form" if p_cf is not None else "bisection",
        P_bisection=p_bis,
        P_closed_form=p_cf,
    )


def optimal_allocation(spec: RegulatorSpec, P_star: float, economy: EconomyParams) -> AllocationProgram:
    """Allocation inducing the constant price P_star.

    Every firm expects the same total M_bar_star_0, and its allocation is revised
    one-for-one with its own emission shock, so the average allocation
    martingale moves with W_bar and the price never moves.
    """
    agg = derive_aggregates(economy)
    if economy.N != spec.N:
        raise ValidationError("regulator.N", f"spec has N={spec.N}, economy has {economy.N} firms")
    M_bar = allocation_for_price(agg, P_star, economy.T, economy.lam)
    return AllocationProgram.shock_neutralising(economy, np.full(economy.N, M_bar))


# ---------------------------------------------------------------- sweeps

SURFACE_FACTORS = (1 / 50, 1 / 7, 1.0, 7.0, 50.0)


def with_weights(spec: RegulatorSpec, y_mu: float | None = None, y_pi: float | None = None) -> RegulatorSpec:
    if not spec.is_quadratic:
        raise ValidationError("regulator", "weight sweeps need quadratic penalties")
    return replace(
        spec,
        ell=Quadratic(spec.ell.weight if y_mu is None else float(y_mu)),
        varphi=Quadratic(spec.varphi.weight if y_pi is None else float(y_pi)),
    )


def sweep_ratio_surface(spec: RegulatorSpec, y_mu_grid: Iterable[float], y_pi_grid: Iterable[float]) -> list[dict]:
    """Rows (y_mu, y_pi, p_star, s_mu, s_pi, ratio); ratio is None when both penalty costs vanish."""
    y_pi_grid = list(y_pi_grid)
    rows = []
    for y_mu in y_mu_grid:
        for y_pi in y_pi_grid:
            if y_mu < 0 or y_pi < 0:
                raise ValidationError("sweep", "penalty weights must be non-negative")
            sub = with_weights(spec, y_mu, y_pi)
            p = closed_form_price(sub)
            c = social_cost(sub, p)
            denom = c.s_mu + c.s_pi
            ratio = c.s_pi / denom if denom > 0 else None
            rows.append({"y_mu": float(y_mu), "y_pi": float(y_pi), "p_star": p, "s_mu": c.s_mu, "s_pi": c.s_pi, "ratio": ratio})
    return rows


_VARIATION = re.compile(r"^\s*(ymu|ypi)\s*([*/])\s*([0-9.eE+-]+)\s*$")


def parse_variation(token: str, spec: RegulatorSpec) -> RegulatorSpec:
    """Apply a weight variation such as ``ymu/10`` or ``ypi*1e5``."""
    m = _VARIATION.match(token)
    if not m:
        raise ValidationError("curves", f"cannot parse variation {token!r}; expected e.g. 'ymu/10' or 'ypi*1e5'")
    which, op, num = m.groups()
    factor = float(num)
    if not factor > 0:
        raise ValidationError("curves", f"factor must be positive in {token!r}")
    if op == "/":
        factor = 1.0 / factor
    if which == "ymu":
        return with_weights(spec, y_mu=spec.ell.weight * factor)
    return with_weights(spec, y_pi=spec.varphi.weight * factor)


def sweep_cost_curves(
    spec: RegulatorSpec, x_grid: Sequence[float], variations: Mapping[str, RegulatorSpec] | Sequence[str]
) -> list[dict]:
    """Rows (x, s_reference, s_<variant>...) of the social cost on ``x_grid``."""
    if not isinstance(variations, Mapping):
        variations = {tok: parse_variation(tok, spec) for tok in variations}
    x = np.asarray(x_grid, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("curves.x_grid", "must be finite")
    curves = {"s_reference": np.atleast_1d(social_cost(spec, x).total)}
    for name, sub in variations.items():
        curves[f"s_{name}"] = np.atleast_1d(social_cost(sub, x).total)
    return [{"x": float(xi), **{k: float(v[j]) for k, v in curves.items()}} for j, xi in enumerate(x)]
