"""Domain types, derived aggregates and closed-form calibration recipes.

Units are fixed across the package: tonnes of CO2 (t), euros, years.
Inflation is a fraction per year internally; percent only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """Invalid model input. ``field`` holds a dotted path to the offending value."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(name, f"must be a finite positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class FirmParams:
    """Per-firm constants.

    a, b: inverse demand S(q) = a - b q.  kappa, delta: production cost
    kappa (q - q~) + delta/2 (q - q~)^2.  gamma: emission intensity.
    sigma: emission volatility.  h, eta: abatement cost h alpha + alpha^2/(2 eta).
    s_loading: loading of the firm's shock on the common noise factor.
    """

    a: float
    b: float
    kappa: float
    delta: float
    gamma: float
    sigma: float
    h: float
    eta: float
    s_loading: float = 0.0

    def validate(self, index: int | None = None) -> "FirmParams":
        prefix = "firm" if index is None else f"firms[{index}]"
        for name in ("b", "delta", "gamma", "h", "eta"):
            _positive(getattr(self, name), f"{prefix}.{name}")
        # sigma = 0 is accepted: noiseless scenarios are used as verification limits.
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise ValidationError(f"{prefix}.sigma", f"must be >= 0, got {self.sigma!r}")
        if not (0 < self.kappa < self.a):
            raise ValidationError(
                f"{prefix}.kappa", f"need 0 < kappa < a, got kappa={self.kappa!r}, a={self.a!r}"
            )
        if not abs(self.s_loading) <= 1:
            raise ValidationError(f"{prefix}.s_loading", f"must lie in [-1, 1], got {self.s_loading!r}")
        return self

    @property
    def q_tilde(self) -> float:
        return (self.a - self.kappa) / (2.0 * self.b)

    @property
    def mu(self) -> float:
        """BAU emission drift gamma * q~."""
        return self.gamma * self.q_tilde

    @property
    def psi(self) -> float:
        return self.gamma**2 / (self.delta + 2.0 * self.b)

    @property
    def noise_weights(self) -> tuple[float, float]:
        """(common, idiosyncratic) weights of W^i on the independent factors."""
        s = self.s_loading
        return s, math.sqrt(max(0.0, 1.0 - s * s))


@dataclass(frozen=True)
class EconomyParams:
    firms: tuple[FirmParams, ...]
    T: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "firms", tuple(self.firms))

    @property
    def N(self) -> int:
        return len(self.firms)

    def validate(self) -> "EconomyParams":
        if len(self.firms) < 1:
            raise ValidationError("firms", "at least one firm is required")
        for i, firm in enumerate(self.firms):
            firm.validate(i)
        _positive(self.T, "economy.T")
        _positive(self.lam, "economy.lambda")
        return self

    def noise_matrix(self) -> np.ndarray:
        """Rows w_i with W^i = w_i . (W~0, W~1, ..., W~N)."""
        w = np.zeros((self.N, self.N + 1))
        for i, firm in enumerate(self.firms):
            common, idio = firm.noise_weights
            w[i, 0] = common
            w[i, i + 1] = idio
        return w

    def sigmas(self) -> np.ndarray:
        return np.array([f.sigma for f in self.firms])


@dataclass(frozen=True)
class Aggregates:
    mu: np.ndarray
    psi: np.ndarray
    mu_bar_b: float
    psi_bar: float
    eta_bar: float
    H_bar: float
    phi_bar: float
    rho: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.mu)


def derive_aggregates(economy: EconomyParams) -> Aggregates:
    economy.validate()
    firms = economy.firms
    mu = np.array([f.mu for f in firms])
    psi = np.array([f.psi for f in firms])
    eta = np.array([f.eta for f in firms])
    he = np.array([f.h * f.eta for f in firms])
    s = np.array([f.s_loading for f in firms])
    rho = np.outer(s, s)
    np.fill_diagonal(rho, 1.0)
    psi_bar = math.fsum(psi) / len(firms)
    eta_bar = math.fsum(eta) / len(firms)
    return Aggregates(
        mu=mu,
        psi=psi,
        mu_bar_b=math.fsum(mu) / len(firms),
        psi_bar=psi_bar,
        eta_bar=eta_bar,
        H_bar=math.fsum(he) / len(firms),
        phi_bar=eta_bar + psi_bar,
        rho=rho,
    )


@dataclass(frozen=True)
class CalibrationInputs:
    tax_level: float = 40.0
    cumulative_reduction: float = 0.05
    baseline_emissions: float = 1.5e9
    max_emission_discrepancy: float = 1e7
    gdp: float = 1.5e13
    inflation_gdp_elasticity: float = 1e-3
    inflation_per_price: float = 0.0075
    horizon: float = 25.0

    def validate(self) -> "CalibrationInputs":
        for name in self.__dataclass_fields__:
            _positive(getattr(self, name), f"calibration.{name}")
        return self


def calibrate_phi(tax_level: float, cumulative_reduction: float, baseline_emissions: float) -> float:
    """Price responsiveness of emissions, t/(EUR y), from a tax-response estimate."""
    tax_level = _positive(tax_level, "tax_level")
    cumulative_reduction = _positive(cumulative_reduction, "cumulative_reduction")
    baseline_emissions = _positive(baseline_emissions, "baseline_emissions")
    return cumulative_reduction * baseline_emissions / tax_level


# Anchor: a tolerated discrepancy of 1e7 t maps to 1.25e-6 EUR/t^2.
_LAMBDA_ANCHOR = 1.25e-6
_DISCREPANCY_ANCHOR = 1e7


def calibrate_lambda(max_emission_discrepancy: float) -> float:
    """Terminal penalty weight, inversely proportional to the tolerated discrepancy."""
    d = _positive(max_emission_discrepancy, "max_emission_discrepancy")
    return _LAMBDA_ANCHOR * (_DISCREPANCY_ANCHOR / d)


def calibrate_y_pi(gdp: float, inflation_gdp_elasticity: float) -> float:
    """Inflation penalty weight so that its marginal cost 2 y (i - nu) equals elasticity * GDP."""
    gdp = _positive(gdp, "gdp")
    e = _positive(inflation_gdp_elasticity, "inflation_gdp_elasticity")
    return 0.5 * e * gdp


def representative_firm(
    mu_bar_b: float,
    H_bar: float,
    phi_bar: float,
    *,
    abatement_share: float = 0.5,
    sigma: float | None = None,
    s_loading: float = 0.0,
) -> FirmParams:
    """A firm whose own aggregates reproduce (mu_bar_b, H_bar, phi_bar).

    Only the aggregates enter prices and costs up to constants, so the split of
    phi_bar between abatement (eta) and production (psi) is a free choice.
    """
    if not 0 < abatement_share < 1:
        raise ValidationError("abatement_share", "must lie in (0, 1)")
    eta = abatement_share * phi_bar
    psi = phi_bar - eta
    gamma = 1.0
    q_tilde = mu_bar_b / gamma
    b = delta = gamma**2 / (3.0 * psi)
    kappa = 2.0 * b * q_tilde
    a = kappa + 2.0 * b * q_tilde
    if sigma is None:
        sigma = 0.03 * mu_bar_b
    return FirmParams(
        a=a, b=b, kappa=kappa, delta=delta, gamma=gamma, sigma=sigma,
        h=H_bar / eta, eta=eta, s_loading=s_loading,
    ).validate()


def economy_from_sequence(firms: Sequence[FirmParams], T: float, lam: float) -> EconomyParams:
    return EconomyParams(tuple(firms), T, lam).validate()
