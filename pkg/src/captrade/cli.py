"""Command-line scenario runner.

Exit codes: 0 success, 1 invalid input, 2 failed verification, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import equilibrium as eq
from . import oracle, regulator as reg
from .inflation import PERCENT, average_inflation_rate, net_zero_price
from .model import ValidationError, calibrate_lambda, calibrate_phi, calibrate_y_pi, derive_aggregates
from .scenario import Scenario, load_scenario, preset_scenario

OUT_ENV = "CAPTRADE_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3
CHECKS = ("closed_forms", "foc", "clearing", "emissions", "jensen")


class VerificationFailed(Exception):
    pass


# ---------------------------------------------------------------- output


fmt = eq.format_number


def _encode(obj) -> str:
    """JSON with every float in lossless scientific notation (see ``format_number``)."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


class Run:
    """Per-invocation context: scenario, settings and output directory."""

    def __init__(self, scenario: Scenario, args):
        self.scenario = scenario
        sim = scenario.simulation
        self.seed = sim.seed if args.seed is None else args.seed
        self.paths = sim.paths if args.paths is None else args.paths
        self.steps = sim.steps if args.steps is None else args.steps
        out = args.out or os.environ.get(OUT_ENV) or scenario.output_dir or "out"
        self.out = Path(out)

    def meta(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "scenario_hash": self.scenario.hash,
            "version": __version__,
            "seed": self.seed,
            "paths": self.paths,
            "steps": self.steps,
        }

    def write_json(self, name: str, payload: dict) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        doc = {"meta": self.meta(), **payload, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        path = self.out / name
        path.write_text(_encode(doc) + "\n", encoding="utf-8")
        return path

    def write_csv(self, name: str, header: list[str], rows: list[list]) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            for k, v in self.meta().items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow(["" if v is None else (fmt(v) if isinstance(v, (float, np.floating)) else v) for v in row])
        return path


# ---------------------------------------------------------------- commands


def _ensemble_summary(ens: eq.PathEnsemble) -> dict:
    mean_e, se_e = ens.emissions_per_firm_year()
    return {
        "p0": ens.P0,
        "mean_P_T": float(np.mean(ens.P_T)),
        "se_P_T": float(ens.se_P[-1]),
        "martingale_z": [float(z) for z in ens.martingale_zscores()],
        "clearing_relative": ens.clearing_relative(),
        "max_price_quadratic_variation": float(np.max(ens.price_qv)),
        "emissions_per_firm_year": mean_e,
        "emissions_per_firm_year_se": se_e,
        "integrability": [
            {"firm": i, "value": r.value, "tail_exponent": r.tail_exponent, "status": r.status}
            for i, r in enumerate(ens.integrability)
        ],
    }


def _simulate(run: Run, allocation=None, **kw) -> eq.PathEnsemble:
    s = run.scenario
    allocation = allocation if allocation is not None else s.allocation()
    return eq.simulate(s.economy, allocation, run.steps, run.paths, run.seed, antithetic=s.simulation.antithetic, **kw)


def cmd_equilibrium(run: Run, args) -> int:
    s = run.scenario
    eco = s.economy
    agg = derive_aggregates(eco)
    alloc = s.allocation()
    sol = eq.solve_equilibrium(eco, alloc)
    t = np.linspace(0.0, eco.T, 11)
    payload = {
        "p0": sol.P0,
        "M_bar_0": alloc.M_bar_0,
        "f": {"t": t, "value": eq.price_volatility_f(eco.lam, agg.phi_bar, eco.T, t)},
        "allocation_sensitivity": eq.allocation_sensitivity(eco.lam, agg.phi_bar, eco.T),
        "price_sensitivity": eq.price_sensitivity(eco.lam, agg.phi_bar, eco.T),
        "expected_emissions_per_firm_year": eq.expected_terminal_emissions(agg, alloc.M_bar_0, eco.T, eco.lam),
        "aggregates": {
            "mu_bar_b": agg.mu_bar_b, "H_bar": agg.H_bar, "phi_bar": agg.phi_bar,
            "eta_bar": agg.eta_bar, "psi_bar": agg.psi_bar,
        },
        "controls": [
            {
                "q_intercept": c.q_intercept, "q_slope": c.q_slope, "alpha_intercept": c.alpha_intercept,
                "alpha_slope": c.alpha_slope, "beta0": c.beta0, "trade_price_loading": c.trade_price_loading,
            }
            for c in sol.controls
        ],
    }
    if not args.no_simulate:
        ens = _simulate(run, alloc)
        payload["ensemble"] = _ensemble_summary(ens)
        _write_ensemble(run, ens)
    run.write_json("equilibrium.json", payload)
    print(f"P0 = {sol.P0:.6f} EUR/t  (written to {run.out})")
    return EXIT_OK


def _write_ensemble(run: Run, ens: eq.PathEnsemble) -> None:
    cols = ["t", "mean_P", "se_P", "mean_E", "se_E", "clearing_residual"]
    rows = [[float(r[c]) for c in cols] for r in ens.table()]
    run.write_csv("ensemble.csv", cols, rows)


def cmd_simulate(run: Run, args) -> int:
    ens = _simulate(run)
    _write_ensemble(run, ens)
    run.write_json("simulate.json", _ensemble_summary(ens))
    print(f"simulated {run.paths} paths x {run.steps} steps (written to {run.out})")
    return EXIT_OK


def _require_regulator(s: Scenario) -> reg.RegulatorSpec:
    if s.regulator is None:
        raise ValidationError("regulator", "scenario has no regulator section")
    return s.regulator


def _parse_sweep(text: str | None) -> tuple[list[float], list[float]]:
    """``ymu=1/50..50 ypi=1/50..50`` style ranges map to the five reference factors."""
    factors = list(reg.SURFACE_FACTORS)
    if not text:
        return factors, factors
    out = {"ymu": factors, "ypi": factors}
    for part in text.replace(",", " ").split():
        key, _, rng = part.partition("=")
        if key not in out or ".." not in rng:
            raise ValidationError("sweep", f"cannot parse {part!r}; expected e.g. ymu=1/50..50")
        lo_s, hi_s = rng.split("..")
        lo, hi = _ratio(lo_s), _ratio(hi_s)
        if not 0 < lo <= hi:
            raise ValidationError("sweep", f"need 0 < lo <= hi in {part!r}")
        out[key] = [f for f in reg.SURFACE_FACTORS if lo * (1 - 1e-12) <= f <= hi * (1 + 1e-12)]
    return out["ymu"], out["ypi"]


def _ratio(text: str) -> float:
    num, _, den = text.partition("/")
    try:
        return float(num) / (float(den) if den else 1.0)
    except ValueError:
        raise ValidationError("sweep", f"not a number: {text!r}") from None


def cmd_regulator(run: Run, args) -> int:
    spec = _require_regulator(run.scenario)
    sol = reg.minimize_social_cost(spec)
    payload = {
        "p_star": sol.P_star,
        "p_star_bisection": sol.P_bisection,
        "method": sol.method,
        "M_bar_star_0": sol.M_bar_star_0,
        "mu_star_T": sol.mu_star_T,
        "pi_hat_T": sol.pi_hat_T,
        "i_star_T": sol.i_star_T,
        "i_star_T_percent": sol.i_star_T * PERCENT,
        "s_at_star": sol.s_at_star,
        "s_mu": sol.s_mu,
        "s_pi": sol.s_pi,
        "firm_cost": sol.firm_cost,
        "net_zero_price": spec.net_zero_price,
        "N": spec.N,
    }
    if args.sweep is not None:
        if not spec.is_quadratic:
            raise ValidationError("sweep", "ratio surfaces need quadratic penalties")
        fm, fp = _parse_sweep(args.sweep)
        rows = reg.sweep_ratio_surface(spec, [spec.ell.weight * f for f in fm], [spec.varphi.weight * f for f in fp])
        cols = ["y_mu", "y_pi", "p_star", "s_mu", "s_pi", "ratio"]
        run.write_csv("ratio_surface.csv", cols, [[r[c] for c in cols] for r in rows])
        run.write_json("ratio_surface.json", {"rows": rows, "null_ratio_rows": sum(r["ratio"] is None for r in rows)})
    if args.curves:
        tokens = [t for t in args.curves.split(",") if t.strip()]
        hi = 2.0 * max(spec.net_zero_price, sol.P_star, 1.0)
        x = np.linspace(0.0, hi, args.curve_points)
        rows = reg.sweep_cost_curves(spec, x, tokens)
        cols = list(rows[0])
        run.write_csv("cost_curves.csv", cols, [[r[c] for c in cols] for r in rows])
        run.write_json("cost_curves.json", {"rows": rows})
    run.write_json("regulator.json", payload)
    print(f"P* = {sol.P_star:.6f} EUR/t  (written to {run.out})")
    return EXIT_OK


def cmd_inflation(run: Run, args) -> int:
    s = run.scenario
    eco = s.economy
    agg = derive_aggregates(eco)
    alloc = s.allocation()
    P0 = eq.initial_price(agg, alloc.M_bar_0, eco.T, eco.lam)
    I = average_inflation_rate(s.basket, P0, eco.T)
    payload = {
        "p0": P0,
        "average_inflation": I,
        "average_inflation_percent": I * PERCENT,
        "pass_through": s.basket.pass_through(eco.T),
        "omega_bar": s.basket.omega_bar,
        "pi_b": s.basket.pi_b,
        "net_zero_price": net_zero_price(agg.mu_bar_b, agg.H_bar, agg.phi_bar),
    }
    run.write_json("inflation.json", payload)
    print(f"I = {I * PERCENT:.4f} %/y at P0 = {P0:.4f} EUR/t")
    return EXIT_OK


def cmd_calibrate(run: Run, args) -> int:
    c = run.scenario.calibration
    payload = {
        "phi_bar": calibrate_phi(c.tax_level, c.cumulative_reduction, c.baseline_emissions),
        "lambda": calibrate_lambda(c.max_emission_discrepancy),
        "y_pi": calibrate_y_pi(c.gdp, c.inflation_gdp_elasticity),
        "omega_eff_percent": c.inflation_per_price,
        "horizon": c.horizon,
    }
    run.write_json("calibration.json", payload)
    print(" ".join(f"{k}={v:.6g}" for k, v in payload.items()))
    return EXIT_OK


def _verify_checks(run: Run, checks, f_scale: float) -> list[oracle.VerificationReport]:
    s = run.scenario
    eco = s.economy
    agg = derive_aggregates(eco)
    alloc = s.allocation()
    h = s.hash
    reports = []
    # Generic allocation: same expectation, no shock neutralisation, so the price moves.
    generic = eq.AllocationProgram.deterministic(alloc.M0)
    if "closed_forms" in checks and s.regulator is not None:
        t0 = time.perf_counter()
        spec = s.regulator
        sol = reg.minimize_social_cost(spec)
        hi = 4.0 * max(spec.net_zero_price, abs(sol.P_star), 1.0)
        gm = oracle.grid_minimize_s(spec, -hi, hi, 4001)
        round_trip = eq.initial_price(agg, sol.M_bar_star_0, eco.T, eco.lam)
        res = {
            "bisection_vs_selected": abs(sol.P_bisection - sol.P_star) / max(abs(sol.P_star), 1.0),
            "grid_vs_selected": abs(gm.x - sol.P_star) / max(abs(sol.P_star), 1.0),
            "allocation_round_trip": abs(round_trip - sol.P_star) / max(abs(sol.P_star), 1.0),
        }
        tol = {"bisection_vs_selected": 1e-9, "grid_vs_selected": 1e-6, "allocation_round_trip": 1e-9}
        reports.append(
            oracle.VerificationReport(
                "closed_forms", all(res[k] <= tol[k] for k in res) and not gm.at_boundary, res, tol,
                time.perf_counter() - t0, h, {"p_star": sol.P_star, "grid_argmin": gm.x},
                ["corner shares of the weight-sweep surface (78%, 4%) are not reproduced by the closed forms; not checked"],
            )
        )
    if "foc" in checks:
        reports.append(
            oracle.foc_check(eco, generic, n_paths=min(run.paths, 2000), steps=min(run.steps, 500), seed=run.seed,
                             scenario_hash=h, f_scale=f_scale)
        )
    if "clearing" in checks:
        ens = eq.simulate(eco, generic, min(run.steps, 500), min(run.paths, 2000), run.seed, f_scale=f_scale)
        reports.append(oracle.clearing_and_martingale_check(ens, scenario_hash=h))
    if "emissions" in checks:
        t0 = time.perf_counter()
        ens = eq.simulate(eco, generic, min(run.steps, 500), min(run.paths, 2000), run.seed, f_scale=f_scale)
        mean, se = ens.emissions_per_firm_year()
        target = eq.expected_terminal_emissions(agg, alloc.M_bar_0, eco.T, eco.lam)
        z = (mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)
        reports.append(
            oracle.VerificationReport("emissions", abs(z) <= 3.0, {"z": z}, {"abs_z": 3.0}, time.perf_counter() - t0, h,
                                      {"mean": mean, "se": se, "closed_form": target})
        )
    if "jensen" in checks and s.regulator is not None:
        reports.append(
            oracle.jensen_dominance_check(s.regulator, eco, n_allocations=20, n_paths=min(run.paths, 1000),
                                          seed=run.seed, steps=min(run.steps, 250), scenario_hash=h)
        )
    return reports


def cmd_verify(run: Run, args) -> int:
    checks = CHECKS if not args.checks else tuple(c.strip() for c in args.checks.split(",") if c.strip())
    for c in checks:
        if c not in CHECKS:
            raise ValidationError("checks", f"unknown check {c!r}; choose from {', '.join(CHECKS)}")
    f_scale = 1.0
    if args.inject_fault == "f":
        f_scale = 1.05
    elif args.inject_fault:
        raise ValidationError("inject-fault", f"unknown fault {args.inject_fault!r}")
    reports = _verify_checks(run, checks, f_scale)
    ok = all(r.passed for r in reports)
    # Wall-clock runtimes go to stdout only, so reruns produce identical files.
    checks_out = [{k: v for k, v in r.to_dict().items() if k != "runtime"} for r in reports]
    run.write_json("verify.json", {"passed": ok, "checks": checks_out})
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.runtime:.2f} s)")
    if not ok:
        raise VerificationFailed(", ".join(r.name for r in reports if not r.passed))
    return EXIT_OK


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "regulator": cmd_regulator,
    "inflation": cmd_inflation,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file (default: eu-netzero-2050 preset, N=1)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV}, then ./out)")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--steps", type=int, help="time steps")

    p = argparse.ArgumentParser(prog="captrade", description="Cap-and-trade equilibrium and regulator toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("equilibrium", parents=[common], help="closed-form equilibrium price and optional ensemble")
    e.add_argument("--no-simulate", action="store_true", help="closed-form outputs only")
    r = sub.add_parser("regulator", parents=[common], help="optimal price and allocation")
    r.add_argument("--sweep", nargs="?", const="", default=None, help="ratio surface, e.g. 'ymu=1/50..50 ypi=1/50..50'")
    r.add_argument("--curves", help="cost curve variations, e.g. 'ymu/10,ypi*1e5'")
    r.add_argument("--curve-points", type=int, default=201)
    sub.add_parser("inflation", parents=[common], help="policy-driven inflation")
    sub.add_parser("calibrate", parents=[common], help="closed-form calibration recipes")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo ensemble")
    v = sub.add_parser("verify", parents=[common], help="run oracle checks")
    v.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    v.add_argument("--inject-fault", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.paths is not None and args.paths < 1:
            raise ValidationError("paths", "must be >= 1")
        if args.steps is not None and args.steps < 2:
            raise ValidationError("steps", "must be >= 2")
        scenario = load_scenario(args.scenario) if args.scenario else preset_scenario()
        run = Run(scenario, args)
        return COMMANDS[args.command](run, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
