"""Firm-level optimal compliance: production, abatement and permit trading.

Given a martingale permit price, the optimal production and abatement rates
are affine in the current price.  Only the *cumulative* trade is pinned down;
the trade rate implemented here is the canonical adapted representative that
spreads the remaining expected trade evenly over the remaining time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import FirmParams, ValidationError


class SignWarning(UserWarning):
    """An optimal control left its economically meaningful sign region."""


def laissez_faire_quantity(a: float, b: float, kappa: float) -> float:
    if b <= 0:
        raise ValidationError("b", f"must be positive, got {b!r}")
    if not 0 < kappa < a:
        raise ValidationError("kappa", f"need 0 < kappa < a for a positive BAU quantity, got kappa={kappa!r}, a={a!r}")
    return (a - kappa) / (2.0 * b)


def optimal_production(firm: FirmParams, P):
    q = firm.q_tilde - firm.gamma / (firm.delta + 2.0 * firm.b) * np.asarray(P, dtype=float)
    if np.any(q < 0):
        warnings.warn("optimal production is negative at this price", SignWarning, stacklevel=2)
    return q if q.ndim else float(q)


def optimal_abatement(firm: FirmParams, P):
    alpha = firm.eta * (np.asarray(P, dtype=float) - firm.h)
    if np.any(alpha < 0):
        warnings.warn("optimal abatement is negative (price below abatement threshold h)", SignWarning, stacklevel=2)
    return alpha if alpha.ndim else float(alpha)


def initial_cumulative_trade(firm: FirmParams, P0, M0, T: float, lam: float):
    """Expected total trade over [0, T] seen at time 0."""
    return (
        -(1.0 / (2.0 * lam) + (firm.eta + firm.psi) * T) * P0
        + T * (firm.h * firm.eta + firm.mu)
        - M0
    )


def initial_trade_rate(firm: FirmParams, P0: float, M0_i: float, T: float, lam: float) -> float:
    alpha0 = firm.eta * (P0 - firm.h)
    return firm.mu - alpha0 - (1.0 / (2.0 * lam * T) + firm.psi) * P0 - M0_i / T


@dataclass(frozen=True)
class FirmControls:
    """Coefficients of the optimal feedback controls of one firm.

    q(P) = q_intercept + q_slope P and alpha(P) = alpha_intercept + alpha_slope P.
    Trade increments: d beta = -(1/(2 lam (T-t)) + trade_price_loading) dP
    + (sigma dW - dM) / (T - t).
    """

    q_intercept: float
    q_slope: float
    alpha_intercept: float
    alpha_slope: float
    beta0: float
    trade_price_loading: float
    lam: float
    T: float

    def production(self, P):
        return self.q_intercept + self.q_slope * np.asarray(P, dtype=float)

    def abatement(self, P):
        return self.alpha_intercept + self.alpha_slope * np.asarray(P, dtype=float)

    def price_coefficient(self, t):
        """Coefficient of dP in d beta at time t < T."""
        return -(1.0 / (2.0 * self.lam * (self.T - t)) + self.trade_price_loading)


def firm_controls(firm: FirmParams, P0: float, M0: float, T: float, lam: float) -> FirmControls:
    return FirmControls(
        q_intercept=firm.q_tilde,
        q_slope=-firm.gamma / (firm.delta + 2.0 * firm.b),
        alpha_intercept=-firm.eta * firm.h,
        alpha_slope=firm.eta,
        beta0=initial_trade_rate(firm, P0, M0, T, lam),
        trade_price_loading=firm.eta + firm.psi,
        lam=lam,
        T=T,
    )


def _grid(n_nodes: int, T: float) -> np.ndarray:
    if n_nodes < 2:
        raise ValidationError("grid", "need at least two grid nodes")
    return np.linspace(0.0, T, n_nodes)


def cumulative_trade_path(firm: FirmParams, price_path, shock_path, allocation_path, T: float, lam: float):
    """Expected cumulative trade B and trade rate beta along given paths.

    All three inputs are level paths on the same uniform grid of ``n + 1``
    nodes over [0, T] (leading axes are paths): the price P, the firm's shock
    sigma W^i, and its allocation martingale M^i.  Returns ``(B, beta)`` with
    B of shape (..., n + 1) and the piecewise-constant rate beta of shape
    (..., n).  Along the grid, sum(beta) dt equals B at node n - 1; the final
    increment of B falls after the last trading decision.
    """
    P = np.asarray(price_path, dtype=float)
    S = np.asarray(shock_path, dtype=float)
    M = np.asarray(allocation_path, dtype=float)
    if not (P.shape == S.shape == M.shape):
        raise ValidationError("grid", f"path shapes differ: {P.shape}, {S.shape}, {M.shape}")
    t = _grid(P.shape[-1], T)
    dP = np.diff(P, axis=-1)
    # Coefficient at the step's right end keeps E_k[X_T] = -P_k / (2 lam) exact on the grid.
    coeff = 1.0 / (2.0 * lam) + (firm.eta + firm.psi) * (T - t[1:])
    dB = -coeff * dP + np.diff(S, axis=-1) - np.diff(M, axis=-1)
    B0 = np.asarray(initial_cumulative_trade(firm, P[..., 0], M[..., 0], T, lam))
    B = np.cumsum(np.concatenate([B0[..., None], dB], axis=-1), axis=-1)
    beta = trade_rate_from_cumulative(B, T)
    return B, beta


def trade_rate_from_cumulative(B, T: float):
    """Adapted rate trading the remaining expected amount evenly over the remaining time.

    beta_k = (B_k - sum_{j<k} beta_j dt) / (T - t_k), which reduces to
    beta_0 = B_0 / T and beta_{k+1} = beta_k + (B_{k+1} - B_k) / (T - t_{k+1}).
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[-1] - 1
    t = _grid(n + 1, T)
    dB = np.diff(B[..., :n], axis=-1)
    increments = dB / (T - t[1:n])
    beta = np.concatenate([B[..., :1] / T, increments], axis=-1)
    return np.cumsum(beta, axis=-1)


@dataclass(frozen=True)
class IntegrabilityReport:
    value: float
    tail_exponent: float
    status: str

    @property
    def passes(self) -> bool:
        return self.status == "finite"


def check_trade_integrability(sigma_B, T: float, bands: int = 4, min_exponent: float = 0.5) -> IntegrabilityReport:
    """Discrete check of int_0^T sigma_B(t)^2 / (T - t) dt < inf.

    ``sigma_B`` holds the per-step volatility of B on a uniform grid of
    ``len(sigma_B)`` steps.  The kernel is integrated exactly over each step up
    to the last node T - dt.  The tail is summarised by the contributions of
    dyadic bands of remaining time [2^m dt, 2^(m+1) dt); for a volatility
    decaying like (T - t)^(p/2) the band mass grows like 2^(m p).  A fitted
    exponent below ``min_exponent`` means the sum keeps growing like log(T/dt)
    under refinement and is flagged ``borderline``.
    """
    sig2 = np.asarray(sigma_B, dtype=float) ** 2
    n = sig2.size
    dt = T / n
    remaining = T - dt * np.arange(n + 1)
    weights = np.log(remaining[:-2] / remaining[1:-1])
    contrib = sig2[: n - 1] * weights
    value = math.fsum(contrib)
    if value == 0.0:
        return IntegrabilityReport(0.0, math.inf, "finite")
    right = np.arange(n - 1, 0, -1)  # remaining time after each step, in units of dt
    masses = []
    for m in range(bands):
        sel = (right >= 2**m) & (right < 2 ** (m + 1))
        masses.append(math.fsum(contrib[sel]))
    masses = np.array(masses)
    if np.all(masses <= 0):
        return IntegrabilityReport(value, math.inf, "finite")
    pos = masses > 0
    m_idx = np.arange(bands)[pos]
    if m_idx.size < 2:
        exponent = math.inf
    else:
        exponent = float(np.polyfit(m_idx, np.log2(masses[pos]), 1)[0])
    status = "finite" if exponent >= min_exponent else "borderline"
    return IntegrabilityReport(value, exponent, status)


@dataclass
class FirmPath:
    """Discretised state of one firm over an ensemble of paths.

    Level paths (P, E, X, M, B) have n + 1 nodes; rate controls (q, alpha,
    beta) and the shock increments are piecewise constant on the n steps.
    """

    t: np.ndarray
    P: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    E: np.ndarray
    X: np.ndarray
    M: np.ndarray
    B: np.ndarray
    shock_increments: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def build_firm_path(firm: FirmParams, t, P, shock_increments, M, T: float, lam: float) -> FirmPath:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    dS = np.atleast_2d(np.asarray(shock_increments, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    dt = T / dS.shape[-1]
    shock = np.concatenate([np.zeros(dS.shape[:-1] + (1,)), np.cumsum(dS, axis=-1)], axis=-1)
    B, beta = cumulative_trade_path(firm, P, shock, M, T, lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SignWarning)
        q = optimal_production(firm, P[..., :-1])
        alpha = optimal_abatement(firm, P[..., :-1])
    dE = (firm.gamma * q - alpha) * dt + dS
    E = np.concatenate([np.zeros(dE.shape[:-1] + (1,)), np.cumsum(dE, axis=-1)], axis=-1)
    dX = -dE + beta * dt + np.diff(M, axis=-1)
    X = np.concatenate([M[..., :1], M[..., :1] + np.cumsum(dX, axis=-1)], axis=-1)
    return FirmPath(np.asarray(t), P, q, alpha, beta, E, X, M, B, dS)


def objective_terms(firm: FirmParams, dt: float, P, q, alpha, beta, shock_increments, M, lam: float):
    """Per-path running cost and terminal penalty of one firm (left-endpoint quadrature)."""
    P_left = P[..., :-1]
    revenue = (firm.a - firm.b * q) * q
    dq = q - firm.q_tilde
    cost = firm.kappa * dq + 0.5 * firm.delta * dq**2
    abate = firm.h * alpha + alpha**2 / (2.0 * firm.eta)
    running = np.sum(-revenue + cost + abate + beta * P_left, axis=-1) * dt
    E_T = np.sum(firm.gamma * q - alpha, axis=-1) * dt + np.sum(shock_increments, axis=-1)
    X_T = M[..., -1] - E_T + np.sum(beta, axis=-1) * dt
    return running, lam * X_T**2


@dataclass(frozen=True)
class ObjectiveEstimate:
    mean: float
    se: float
    running: float
    terminal: float
    samples: np.ndarray


def evaluate_firm_objective(firm: FirmParams, path: FirmPath, lam: float, q=None, alpha=None, beta=None) -> ObjectiveEstimate:
    """Monte Carlo estimate of the firm's total cost for the given controls.

    Controls default to those stored on ``path``; replacements must match the
    path's step grid.  Noise and allocation are taken from ``path``.
    """
    shape = path.shock_increments.shape
    controls = {}
    for name, arr in (("q", q), ("alpha", alpha), ("beta", beta)):
        arr = getattr(path, name) if arr is None else np.asarray(arr, dtype=float)
        try:
            controls[name] = np.broadcast_to(arr, shape)
        except ValueError:
            raise ValidationError("grid", f"{name} has shape {arr.shape}, expected {shape}") from None
    q, alpha, beta = controls["q"], controls["alpha"], controls["beta"]
    running, terminal = objective_terms(firm, path.dt, path.P, q, alpha, beta, path.shock_increments, path.M, lam)
    total = running + terminal
    n = total.size
    se = float(np.std(total, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return ObjectiveEstimate(float(np.mean(total)), se, float(np.mean(running)), float(np.mean(terminal)), total)
