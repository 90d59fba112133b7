"""Equilibrium permit price, its sensitivities, and Monte Carlo simulation of the economy."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import firm as firm_mod
from .model import Aggregates, EconomyParams, ValidationError, derive_aggregates
from .rng import block_normals


def price_volatility_f(lam: float, phi_bar: float, T: float, t):
    """Price loading 2 lam / (1 + 2 lam phi_bar (T - t)) on the net shock W_bar - M_bar."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ValidationError("t", f"time must lie in [0, T={T}]")
    f = 2.0 * lam / (1.0 + 2.0 * lam * phi_bar * (T - t_arr))
    return f if f.ndim else float(f)


def initial_price(agg: Aggregates, M_bar_0: float, T: float, lam: float) -> float:
    f0 = price_volatility_f(lam, agg.phi_bar, T, 0.0)
    return f0 * ((agg.H_bar + agg.mu_bar_b) * T - M_bar_0)


def allocation_for_price(agg: Aggregates, P0: float, T: float, lam: float) -> float:
    """Expected average cumulative allocation whose equilibrium starts at ``P0``."""
    return (agg.H_bar + agg.mu_bar_b) * T - P0 * (1.0 / (2.0 * lam) + agg.phi_bar * T)


def allocation_sensitivity(lam: float, phi_bar: float, T: float) -> float:
    k = 2.0 * lam * phi_bar * T
    return k / (1.0 + k)


def price_sensitivity(lam: float, phi_bar: float, T: float) -> float:
    """-dP0/dM_bar_0, in (EUR/t) per tonne of expected allocation."""
    return 2.0 * lam / (1.0 + 2.0 * lam * phi_bar * T)


def expected_terminal_emissions(agg: Aggregates, M_bar_0: float, T: float, lam: float) -> float:
    """Expected controlled emissions per firm and per year, E[E_T] / (N T)."""
    w = allocation_sensitivity(lam, agg.phi_bar, T)
    return (1.0 - w) * (agg.mu_bar_b + agg.H_bar) + w * M_bar_0 / T


@dataclass(frozen=True)
class AllocationProgram:
    """Expected cumulative allocations and the volatility of their revision.

    ``loadings[k, i, j]`` is the loading of dM^i on the independent factor
    W~j (j = 0 common, j = i + 1 idiosyncratic to firm i) on the k-th time
    piece; pieces are separated by ``breakpoints``.
    """

    M0: np.ndarray
    loadings: np.ndarray
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        M0 = np.atleast_1d(np.asarray(self.M0, dtype=float))
        L = np.asarray(self.loadings, dtype=float)
        if L.ndim == 2:
            L = L[None]
        N = M0.size
        if L.shape[1:] != (N, N + 1):
            raise ValidationError("allocation.loadings", f"expected shape (K, {N}, {N + 1}), got {L.shape}")
        if len(self.breakpoints) != L.shape[0] - 1:
            raise ValidationError("allocation.breakpoints", "need one breakpoint fewer than loading pieces")
        if list(self.breakpoints) != sorted(self.breakpoints):
            raise ValidationError("allocation.breakpoints", "must be increasing")
        if not np.all(np.isfinite(L)) or not np.all(np.isfinite(M0)):
            raise ValidationError("allocation", "values must be finite")
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "loadings", L)
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

    @property
    def N(self) -> int:
        return self.M0.size

    @property
    def M_bar_0(self) -> float:
        return math.fsum(self.M0) / self.N

    @property
    def is_constant(self) -> bool:
        return self.loadings.shape[0] == 1

    def loadings_at(self, t) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(t, dtype=float), side="right")
        return self.loadings[idx]

    @classmethod
    def deterministic(cls, M0: Sequence[float]) -> "AllocationProgram":
        M0 = np.atleast_1d(np.asarray(M0, dtype=float))
        return cls(M0, np.zeros((1, M0.size, M0.size + 1)))

    @classmethod
    def shock_neutralising(cls, economy: EconomyParams, M0: Sequence[float]) -> "AllocationProgram":
        """Allocation revised one-for-one with each firm's emission shock, dM^i = sigma_i dW^i."""
        L = economy.sigmas()[:, None] * economy.noise_matrix()
        return cls(np.broadcast_to(np.asarray(M0, dtype=float), (economy.N,)).copy(), L)

    def with_M_bar_0(self, M_bar_0: float) -> "AllocationProgram":
        return AllocationProgram(self.M0 - self.M_bar_0 + M_bar_0, self.loadings, self.breakpoints)


@dataclass(frozen=True)
class EquilibriumSolution:
    P0: float
    lam: float
    phi_bar: float
    T: float
    controls: tuple[firm_mod.FirmControls, ...]

    def f(self, t):
        return price_volatility_f(self.lam, self.phi_bar, self.T, t)


def solve_equilibrium(economy: EconomyParams, allocation: AllocationProgram) -> EquilibriumSolution:
    agg = derive_aggregates(economy)
    if allocation.N != economy.N:
        raise ValidationError("allocation.M0", f"expected {economy.N} firms, got {allocation.N}")
    P0 = initial_price(agg, allocation.M_bar_0, economy.T, economy.lam)
    controls = tuple(
        firm_mod.firm_controls(f, P0, m0, economy.T, economy.lam) for f, m0 in zip(economy.firms, allocation.M0)
    )
    return EquilibriumSolution(P0, economy.lam, agg.phi_bar, economy.T, controls)


class _Kahan:
    """Elementwise compensated running sum."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._c = np.zeros(shape)

    def add(self, x):
        y = x - self._c
        t = self.total + y
        self._c = (t - self.total) - y
        self.total = t


@dataclass
class PathEnsemble:
    seed: int
    n_paths: int
    steps: int
    T: float
    t: np.ndarray
    P0: float
    N: int
    antithetic: bool
    mean_P: np.ndarray
    se_P: np.ndarray
    mean_E: np.ndarray
    se_E: np.ndarray
    clearing_residual: np.ndarray
    gross_trade: np.ndarray
    P_T: np.ndarray
    price_qv: np.ndarray
    E_T: np.ndarray
    X_T: np.ndarray
    cost: np.ndarray
    traded: np.ndarray
    B_T: np.ndarray
    checkpoints: np.ndarray
    emission_scale: float
    integrability: list = field(default_factory=list)
    firm_paths: list | None = None
    noise: np.ndarray | None = None

    def martingale_zscores(self) -> np.ndarray:
        idx = self.checkpoints
        se = self.se_P[idx]
        dev = self.mean_P[idx] - self.P0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev == 0, 0.0, np.inf))
        return z

    def clearing_relative(self) -> float:
        """max_t max_paths |sum_i beta_i| over the largest gross trade sum_i |beta_i|.

        The denominator is floored at the aggregate BAU emission rate so that
        economies with no net trade (a single firm) are not measured against
        rounding noise.
        """
        scale = max(float(np.max(self.gross_trade)), self.emission_scale)
        resid = float(np.max(self.clearing_residual))
        if scale == 0.0:
            return 0.0 if resid == 0.0 else math.inf
        return resid / scale

    def emissions_per_firm_year(self) -> tuple[float, float]:
        per_path = self.E_T.sum(axis=1) / (self.N * self.T)
        se = float(np.std(per_path, ddof=1) / math.sqrt(per_path.size)) if per_path.size > 1 else math.nan
        return float(np.mean(per_path)), se

    def total_cost(self) -> np.ndarray:
        return self.cost.sum(axis=1)

    def table(self) -> list[dict]:
        rows = []
        for k in range(self.steps + 1):
            rows.append(
                {
                    "t": self.t[k],
                    "mean_P": self.mean_P[k],
                    "se_P": self.se_P[k],
                    "mean_E": self.mean_E[k],
                    "se_E": self.se_E[k],
                    "clearing_residual": self.clearing_residual[k],
                }
            )
        return rows

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        cols = ["t", "mean_P", "se_P", "mean_E", "se_E", "clearing_residual"]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in self.table():
            writer.writerow([format_number(row[c]) for c in cols])
        return buf.getvalue() if fh is None else ""


def format_number(x: float) -> str:
    """Shortest scientific form with at least 12 significant digits that round-trips exactly."""
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    for digits in range(11, 17):
        text = f"{x:.{digits}e}"
        if float(text) == x:
            return text
    return f"{x:.16e}"


def _node_se(s1, s2, n):
    if n < 2:
        return np.full_like(s1, np.nan)
    var = np.maximum(s2 - s1 * s1 / n, 0.0) / (n - 1)
    return np.sqrt(var / n)


def simulate(
    economy: EconomyParams,
    allocation: AllocationProgram,
    grid_steps: int = 2000,
    n_paths: int = 10_000,
    seed: int = 0,
    *,
    antithetic: bool = False,
    keep_paths: bool = False,
    chunk_size: int = 256,
    n_checkpoints: int = 10,
    f_scale: float = 1.0,
    path_offset: int = 0,
) -> PathEnsemble:
    """Simulate the equilibrium economy under ``allocation``.

    Price increments use the loading f at each step's right end, which is
    deterministic and keeps every firm's discrete first-order condition exact;
    aggregate trades then clear up to rounding.  ``f_scale`` perturbs that
    loading and exists only to let verification runs inject a known fault.
    ``path_offset`` selects the global path indices [offset, offset + n_paths),
    so an ensemble can be produced in independent slices.
    """
    economy.validate()
    if allocation.N != economy.N:
        raise ValidationError("allocation.M0", f"expected {economy.N} firms, got {allocation.N}")
    if int(grid_steps) < 2:
        raise ValidationError("simulation.steps", "need at least 2 steps")
    if int(n_paths) < 1:
        raise ValidationError("simulation.paths", "need at least one path")
    if antithetic and (path_offset % 2 or chunk_size % 2):
        raise ValidationError("simulation.antithetic", "path offset and chunk size must be even")
    n = int(grid_steps)
    agg = derive_aggregates(economy)
    T, lam, N = economy.T, economy.lam, economy.N
    t = np.linspace(0.0, T, n + 1)
    dt = T / n
    sqdt = math.sqrt(dt)
    P0 = initial_price(agg, allocation.M_bar_0, T, lam)
    f_right = price_volatility_f(lam, agg.phi_bar, T, t[1:]) * f_scale

    shock_load = economy.sigmas()[:, None] * economy.noise_matrix()  # (N, N+1)
    L_steps = allocation.loadings_at(t[:-1])  # (n, N, N+1)
    net_steps = shock_load[None] - L_steps
    z_steps = net_steps.mean(axis=1)  # (n, N+1)
    const = allocation.is_constant
    if const:
        L_c, net_c, z_c = L_steps[0], net_steps[0], z_steps[0]

    firms = economy.firms
    coeff = np.array([1.0 / (2.0 * lam) + (f.eta + f.psi) * (T - t[1:]) for f in firms])  # (N, n)
    B0 = np.array([firm_mod.initial_cumulative_trade(f, P0, m0, T, lam) for f, m0 in zip(firms, allocation.M0)])

    integrability = []
    for i in range(N):
        sig_B = -coeff[i][:, None] * f_right[:, None] * z_steps + net_steps[:, i, :]
        integrability.append(firm_mod.check_trade_integrability(np.linalg.norm(sig_B, axis=1), T))

    sP, sP2 = _Kahan(n + 1), _Kahan(n + 1)
    sE, sE2 = _Kahan(n + 1), _Kahan(n + 1)
    clearing = np.zeros(n)
    gross = np.zeros(n)
    P_T = np.empty(n_paths)
    qv = np.empty(n_paths)
    E_T = np.empty((n_paths, N))
    X_T = np.empty((n_paths, N))
    cost = np.empty((n_paths, N))
    traded = np.empty((n_paths, N))
    B_T = np.empty((n_paths, N))
    kept: list[list] = [[] for _ in range(N)]
    kept_noise = []

    for start in range(0, n_paths, chunk_size):
        stop = min(start + chunk_size, n_paths)
        dW = block_normals(seed, range(path_offset + start, path_offset + stop), n, N + 1, antithetic) * sqdt
        if const:
            dS_all = dW @ shock_load.T
            dM_all = dW @ L_c.T
            dG_all = dW @ net_c.T
            dZ = dW @ z_c
        else:
            dS_all = np.einsum("cnj,ij->cni", dW, shock_load)
            dM_all = np.einsum("cnj,nij->cni", dW, L_steps)
            dG_all = np.einsum("cnj,nij->cni", dW, net_steps)
            dZ = np.einsum("cnj,nj->cn", dW, z_steps)
        dP = f_right * dZ
        P = np.concatenate([np.full((stop - start, 1), P0), P0 + np.cumsum(dP, axis=1)], axis=1)
        P_T[start:stop] = P[:, -1]
        qv[start:stop] = np.sum(dP * dP, axis=1)
        sP.add(P.sum(axis=0))
        sP2.add((P * P).sum(axis=0))

        beta_sum = np.zeros((stop - start, n))
        beta_abs = np.zeros((stop - start, n))
        E_tot = np.zeros((stop - start, n + 1))
        for i, fp in enumerate(firms):
            dB = -coeff[i] * dP + dG_all[..., i]
            B = np.cumsum(np.concatenate([np.full((stop - start, 1), B0[i]), dB], axis=1), axis=1)
            beta = firm_mod.trade_rate_from_cumulative(B, T)
            q = fp.q_tilde - fp.gamma / (fp.delta + 2.0 * fp.b) * P[:, :-1]
            alpha = fp.eta * (P[:, :-1] - fp.h)
            dS = dS_all[..., i]
            dE = (fp.gamma * q - alpha) * dt + dS
            E = np.concatenate([np.zeros((stop - start, 1)), np.cumsum(dE, axis=1)], axis=1)
            M = np.concatenate(
                [np.full((stop - start, 1), allocation.M0[i]), allocation.M0[i] + np.cumsum(dM_all[..., i], axis=1)],
                axis=1,
            )
            running, terminal = firm_mod.objective_terms(fp, dt, P, q, alpha, beta, dS, M, lam)
            E_T[start:stop, i] = E[:, -1]
            X_T[start:stop, i] = M[:, -1] - E[:, -1] + beta.sum(axis=1) * dt
            cost[start:stop, i] = running + terminal
            traded[start:stop, i] = beta.sum(axis=1) * dt
            B_T[start:stop, i] = B[:, -1]
            beta_sum += beta
            beta_abs += np.abs(beta)
            E_tot += E
            if keep_paths:
                dX = -dE + beta * dt + np.diff(M, axis=1)
                X = np.concatenate([M[:, :1], M[:, :1] + np.cumsum(dX, axis=1)], axis=1)
                kept[i].append((P, q, alpha, beta, E, X, M, B, dS))
        clearing = np.maximum(clearing, np.max(np.abs(beta_sum), axis=0))
        gross = np.maximum(gross, np.max(beta_abs, axis=0))
        sE.add(E_tot.sum(axis=0))
        sE2.add((E_tot * E_tot).sum(axis=0))
        if keep_paths:
            kept_noise.append(dW)

    firm_paths = None
    noise = None
    if keep_paths:
        firm_paths = []
        for i in range(N):
            parts = [np.concatenate(arrs, axis=0) for arrs in zip(*kept[i])]
            firm_paths.append(firm_mod.FirmPath(t, *parts))
        noise = np.concatenate(kept_noise, axis=0)

    checkpoints = np.unique(np.round(np.linspace(0, n, n_checkpoints + 1)[1:]).astype(int))
    return PathEnsemble(
        seed=int(seed),
        n_paths=int(n_paths),
        steps=n,
        T=T,
        t=t,
        P0=P0,
        N=N,
        antithetic=antithetic,
        mean_P=sP.total / n_paths,
        se_P=_node_se(sP.total, sP2.total, n_paths),
        mean_E=sE.total / n_paths,
        se_E=_node_se(sE.total, sE2.total, n_paths),
        clearing_residual=np.append(clearing, clearing[-1]),
        gross_trade=np.append(gross, gross[-1]),
        P_T=P_T,
        price_qv=qv,
        E_T=E_T,
        X_T=X_T,
        cost=cost,
        traded=traded,
        B_T=B_T,
        checkpoints=checkpoints,
        emission_scale=abs(math.fsum(f.mu + f.h * f.eta for f in firms)),
        integrability=integrability,
        firm_paths=firm_paths,
        noise=noise,
    )
