"""Brute-force checks of the closed forms.

Each check returns a :class:`VerificationReport` with its residuals and the
tolerances they were compared against.  Tolerances are fixed arguments; no
check adapts them to the data.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import firm as firm_mod
from .equilibrium import AllocationProgram, PathEnsemble, simulate
from .model import EconomyParams, ValidationError
from .regulator import RegulatorSpec, minimize_social_cost, optimal_allocation, social_cost


@dataclass
class VerificationReport:
    name: str
    passed: bool
    residuals: dict
    tolerances: dict
    runtime: float
    scenario_hash: str = ""
    details: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- FOC battery

_DIRECTIONS = ("q", "alpha", "beta")


def _control_scales(f, P0: float) -> dict:
    return {
        "q": max(abs(f.q_tilde), 1.0),
        "alpha": max(f.eta * (abs(P0) + f.h), 1.0),
        "beta": max(abs(f.mu) + f.eta * f.h, 1.0),
    }


def _objective(f, fp, lam, controls):
    return firm_mod.objective_terms(
        f, fp.dt, fp.P, controls["q"], controls["alpha"], controls["beta"], fp.shock_increments, fp.M, lam
    )


def _pair_mean(x: np.ndarray, antithetic: bool) -> np.ndarray:
    return 0.5 * (x[0::2] + x[1::2]) if antithetic else x


def foc_check(
    economy: EconomyParams,
    allocation: AllocationProgram,
    n_paths: int = 2000,
    bump_size: float = 1e-3,
    *,
    steps: int = 500,
    seed: int = 0,
    chunk_paths: int = 500,
    control_scale: dict | None = None,
    tol: float = 1e-4,
    z_tol: float = 4.0,
    antithetic: bool = True,
    scenario_hash: str = "",
    f_scale: float = 1.0,
) -> VerificationReport:
    """Central-difference derivatives of each firm's objective at its candidate optimum.

    Along a deterministic direction d the derivative splits into a running
    part and a terminal part that cancel at the optimum; the residual is
    |D_run + D_term| / (|D_run| + |D_term|).  The objective is quadratic in the
    controls, so the central difference carries no truncation error.  The
    estimator is affine in the noise, so antithetic pairs remove its Monte
    Carlo error exactly.  An extra adapted direction d_t = P_t - P_0 is
    reported as a z-score.  ``control_scale`` multiplies candidate controls,
    e.g. ``{"q": 1.1}`` for a negative control.
    """
    t0 = time.perf_counter()
    control_scale = control_scale or {}
    if antithetic and chunk_paths % 2:
        chunk_paths += 1
    N = economy.N
    lam = economy.lam
    sums = np.zeros((N, len(_DIRECTIONS), 5))  # run+, run-, term+, term-, base
    adapted: list[list[np.ndarray]] = [[[] for _ in _DIRECTIONS] for _ in range(N)]
    P0 = None
    done = 0
    while done < n_paths:
        m = min(chunk_paths, n_paths - done)
        ens = simulate(
            economy, allocation, steps, m, seed, antithetic=antithetic, keep_paths=True,
            chunk_size=m + (m % 2), path_offset=done, f_scale=f_scale,
        )
        P0 = ens.P0
        for i, (f, fp) in enumerate(zip(economy.firms, ens.firm_paths)):
            scales = _control_scales(f, P0)
            base = {
                "q": fp.q * control_scale.get("q", 1.0),
                "alpha": fp.alpha * control_scale.get("alpha", 1.0),
                "beta": fp.beta * control_scale.get("beta", 1.0),
            }
            r0, k0 = _objective(f, fp, lam, base)
            adapted_dir = fp.P[:, :-1] - fp.P[:, :1]
            for j, name in enumerate(_DIRECTIONS):
                eps = bump_size * scales[name]
                out = []
                for sign in (1.0, -1.0):
                    c = dict(base)
                    c[name] = base[name] + sign * eps
                    out.append(_objective(f, fp, lam, c))
                (rp, kp), (rm, km) = out
                sums[i, j] += [rp.sum(), rm.sum(), kp.sum(), km.sum(), (r0 + k0).sum()]
                c_plus, c_minus = dict(base), dict(base)
                c_plus[name] = base[name] + eps * adapted_dir / max(abs(P0), 1.0)
                c_minus[name] = base[name] - eps * adapted_dir / max(abs(P0), 1.0)
                rp2, kp2 = _objective(f, fp, lam, c_plus)
                rm2, km2 = _objective(f, fp, lam, c_minus)
                g = ((rp2 - rm2) + (kp2 - km2)) / (2.0 * eps)
                adapted[i][j].append(_pair_mean(g, antithetic))
        done += m

    residuals, details = {}, {}
    passed = True
    for i, f in enumerate(economy.firms):
        scales = _control_scales(f, P0)
        for j, name in enumerate(_DIRECTIONS):
            eps = bump_size * scales[name]
            rp, rm, kp, km, base = sums[i, j] / n_paths
            D_run = (rp - rm) / (2.0 * eps)
            D_term = (kp - km) / (2.0 * eps)
            denom = abs(D_run) + abs(D_term)
            rel = abs(D_run + D_term) / denom if denom > 0 else 0.0
            curvature = ((rp + kp) - 2.0 * base + (rm + km)) / eps**2
            g = np.concatenate(adapted[i][j])
            g_mean = float(np.mean(g))
            g_se = float(np.std(g, ddof=1) / math.sqrt(g.size)) if g.size > 1 else math.nan
            if g_se > 0:
                z = g_mean / g_se
            else:
                z = 0.0 if abs(g_mean) <= 1e-12 * max(denom, 1.0) else math.inf
            key = f"firm{i}.{name}"
            residuals[key] = rel
            details[key] = {
                "d_running": D_run, "d_terminal": D_term, "curvature": curvature,
                "adapted_z": z, "adapted_mean": g_mean, "adapted_se": g_se,
            }
            ok = rel <= tol and (not math.isfinite(g_se) or abs(z) <= z_tol) and curvature > 0
            passed = passed and ok
    notes = []
    if antithetic:
        notes.append("antithetic pairs cancel the Monte Carlo error of deterministic-direction derivatives")
    return VerificationReport(
        name="foc",
        passed=bool(passed),
        residuals=residuals,
        tolerances={"relative_residual": tol, "adapted_abs_z": z_tol, "curvature": "> 0"},
        runtime=time.perf_counter() - t0,
        scenario_hash=scenario_hash,
        details={"n_paths": n_paths, "steps": steps, "seed": seed, "bump_size": bump_size, "P0": P0, **details},
        notes=notes,
    )


# ---------------------------------------------------------------- grid minimisation


@dataclass(frozen=True)
class GridMinimum:
    x: float
    value: float
    at_boundary: bool
    cell: tuple[float, float]


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(fn, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 300) -> float:
    """Minimiser of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def grid_minimize_s(spec: RegulatorSpec, lo: float, hi: float, n: int = 2001) -> GridMinimum:
    """Uniform-grid argmin of s refined by golden section on the bracketing cells."""
    if not lo < hi:
        raise ValidationError("grid", f"need lo < hi, got [{lo!r}, {hi!r}]")
    if n < 3:
        raise ValidationError("grid", "need at least 3 grid points")
    x = np.linspace(lo, hi, n)
    values = np.asarray(social_cost(spec, x).total)
    k = int(np.argmin(values))
    if k == 0 or k == n - 1:
        return GridMinimum(float(x[k]), float(values[k]), True, (float(x[k]), float(x[k])))
    a, b = float(x[k - 1]), float(x[k + 1])
    xs = golden_section(lambda v: float(social_cost(spec, v).total), a, b)
    return GridMinimum(xs, float(social_cost(spec, xs).total), False, (a, b))


# ---------------------------------------------------------------- ensemble checks


def clearing_and_martingale_check(
    ensemble: PathEnsemble, clearing_tol: float = 1e-6, z_max: float = 3.0, scenario_hash: str = ""
) -> VerificationReport:
    t0 = time.perf_counter()
    clearing = ensemble.clearing_relative()
    notes = []
    underpowered = ensemble.n_paths < 2
    if underpowered:
        z = np.full(len(ensemble.checkpoints), math.nan)
        notes.append("underpowered: fewer than two paths, martingale statistics not available")
        mart_ok = True
    else:
        z = ensemble.martingale_zscores()
        mart_ok = bool(np.all(np.abs(z) <= z_max))
    qv = float(np.max(ensemble.price_qv))
    return VerificationReport(
        name="clearing_martingale",
        passed=bool(clearing <= clearing_tol and mart_ok),
        residuals={"clearing_relative": clearing, "max_abs_z": float(np.max(np.abs(z))) if not underpowered else math.nan},
        tolerances={"clearing_relative": clearing_tol, "abs_z": z_max},
        runtime=time.perf_counter() - t0,
        scenario_hash=scenario_hash,
        details={
            "z_scores": [float(v) for v in z],
            "checkpoint_times": [float(ensemble.t[k]) for k in ensemble.checkpoints],
            "max_price_quadratic_variation": qv,
            "underpowered": underpowered,
            "n_paths": ensemble.n_paths,
        },
        notes=notes,
    )


def regulator_objective_samples(spec: RegulatorSpec, ensemble: PathEnsemble) -> np.ndarray:
    """Per-path firm costs plus penalties evaluated at the realised terminal price."""
    P_T = ensemble.P_T
    pen = spec.ell.value(spec.emission_argument(P_T)) + spec.varphi.value(spec.inflation_argument(P_T))
    return ensemble.total_cost() + np.asarray(pen, dtype=float)


def random_volatile_allocation(
    economy: EconomyParams, base: AllocationProgram, rng: np.random.Generator, extra_scale: float = 1.0
) -> AllocationProgram:
    """Same expected average allocation as ``base`` with extra piecewise-constant volatility."""
    N = economy.N
    K = int(rng.integers(1, 4))
    breaks = tuple(np.sort(rng.uniform(0.0, economy.T, K - 1)))
    sig = max(float(np.mean(economy.sigmas())), 1.0)
    extra = extra_scale * sig * rng.standard_normal((K, N, N + 1))
    L = base.loadings[0][None] + extra
    spread = rng.standard_normal(N) * 0.1 * max(abs(base.M_bar_0), 1.0)
    spread -= spread.mean()
    return AllocationProgram(base.M0 + spread, L, breaks)


def jensen_dominance_check(
    spec: RegulatorSpec,
    economy: EconomyParams,
    n_allocations: int = 100,
    n_paths: int = 2000,
    seed: int = 0,
    *,
    steps: int = 500,
    extra_scale: float = 1.0,
    n_se: float = 3.0,
    scenario_hash: str = "",
) -> VerificationReport:
    """Randomised same-mean allocations against the optimal one, on common random numbers."""
    t0 = time.perf_counter()
    sol = minimize_social_cost(spec)
    A_star = optimal_allocation(spec, sol.P_star, economy)
    ref = regulator_objective_samples(spec, simulate(economy, A_star, steps, n_paths, seed))
    J_ref = float(np.mean(ref))
    margins, ses = [], []
    for k in range(n_allocations):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7919, k]))
        A = random_volatile_allocation(economy, A_star, rng, extra_scale)
        diff = regulator_objective_samples(spec, simulate(economy, A, steps, n_paths, seed)) - ref
        margins.append(float(np.mean(diff)))
        ses.append(float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else math.nan)
    margins_a, ses_a = np.array(margins), np.array(ses)
    ok = bool(np.all(margins_a >= -n_se * np.nan_to_num(ses_a, nan=0.0))) if n_allocations else True
    worst = float(np.min(margins_a / np.where(ses_a > 0, ses_a, np.inf))) if n_allocations else math.nan
    return VerificationReport(
        name="jensen",
        passed=ok,
        residuals={"min_margin_in_se": worst, "min_margin": float(np.min(margins_a)) if n_allocations else math.nan},
        tolerances={"margin_lower_bound_in_se": -n_se},
        runtime=time.perf_counter() - t0,
        scenario_hash=scenario_hash,
        details={"P_star": sol.P_star, "J_optimal": J_ref, "margins": margins, "standard_errors": ses},
    )
