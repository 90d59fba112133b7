"""Consumer price index of regulated goods and carbon-price-driven inflation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import FirmParams, ValidationError

PERCENT = 100.0


@dataclass(frozen=True)
class CpiBasket:
    """Basket weights with the two routes from permit price to inflation.

    ``omega_bar`` is the structural CPI change per EUR/t of permit price and
    ``pi_b`` the BAU index level; together they give an annual inflation rate
    omega_bar P / (T pi_b).  ``omega_eff`` (fraction per year per EUR/t) is a
    calibrated pass-through that, when set, replaces the structural route.
    """

    weights: tuple[float, ...] = (1.0,)
    pi_b: float | None = None
    omega_bar: float | None = None
    omega_eff: float | None = None

    def pass_through(self, T: float) -> float:
        """Annual inflation (fraction/y) per EUR/t of permit price."""
        if self.omega_eff is not None:
            return self.omega_eff
        if self.omega_bar is None or self.pi_b is None:
            raise ValidationError("basket", "need either omega_eff or both omega_bar and pi_b")
        if self.pi_b <= 0:
            raise ValidationError("basket.pi_b", "must be positive")
        return self.omega_bar / (T * self.pi_b)

    def with_omega_eff_percent(self, value: float) -> "CpiBasket":
        return replace(self, omega_eff=float(value) / PERCENT)


def _check_weights(weights: Sequence[float], n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValidationError("basket.weights", f"expected {n} weights, got {w.size}")
    if np.any(w <= 0) or np.any(w > 1) or (n > 1 and np.any(w >= 1)):
        raise ValidationError("basket.weights", "each weight must lie in (0, 1)")
    if abs(math.fsum(w) - 1.0) > 1e-12:
        raise ValidationError("basket.weights", f"weights must sum to 1, got {math.fsum(w)!r}")
    return w


def basket_from_firms(firms: Sequence[FirmParams], weights: Sequence[float]) -> CpiBasket:
    for i, f in enumerate(firms):
        f.validate(i)
    w = _check_weights(weights, len(firms))
    pi_b = math.fsum(wi * (f.a - f.b * f.q_tilde) for wi, f in zip(w, firms))
    omega_bar = math.fsum(wi * f.b * f.gamma / (f.delta + 2.0 * f.b) for wi, f in zip(w, firms))
    return CpiBasket(tuple(float(x) for x in w), pi_b, omega_bar, None)


def policy_cpi_adjustment(basket: CpiBasket, P_T):
    """CPI change against BAU caused by the terminal permit price."""
    if basket.omega_bar is None:
        raise ValidationError("basket.omega_bar", "structural pass-through not available")
    out = basket.omega_bar * np.asarray(P_T, dtype=float)
    return out if out.ndim else float(out)


def average_inflation_rate(basket: CpiBasket, P0: float, T: float) -> float:
    """Expected average policy-driven inflation over [0, T], fraction per year."""
    if T <= 0:
        raise ValidationError("T", "must be positive")
    return basket.pass_through(T) * P0


def net_zero_price(mu_bar_b: float, H_bar: float, phi_bar: float) -> float:
    """Initial permit price that brings the expected average emission drift to zero."""
    if not phi_bar > 0:
        raise ValidationError("phi_bar", f"must be positive, got {phi_bar!r}")
    return (mu_bar_b + H_bar) / phi_bar
