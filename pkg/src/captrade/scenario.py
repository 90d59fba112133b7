"""Scenario documents: parsing, validation, presets and content hashing.

A scenario is a JSON object.  Either ``preset`` or ``economy`` + ``firms``
defines the economy; every other section is optional.  Unknown keys are
rejected with their dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .equilibrium import AllocationProgram, allocation_for_price
from .inflation import PERCENT, CpiBasket, basket_from_firms, net_zero_price
from .model import (
    CalibrationInputs,
    EconomyParams,
    FirmParams,
    ValidationError,
    derive_aggregates,
    representative_firm,
)
from .regulator import PiecewiseLinear, Quadratic, RegulatorSpec, minimize_social_cost

# Reference EU net-zero calibration.
EU_NETZERO_2050 = {
    "T": 25.0,
    "mu_bar_b": 1.5e9,
    "H_bar": 1.5e8,
    "phi_bar": 1.875e6,
    "omega_eff_percent": 0.0075,
    "y_pi": 7.5e11,
    "y_mu": 1e-3,
    "lambda": 1.25e-6,
    "theta": 0.0,
    "nu_percent": 2.0,
}
PRESETS = {"eu-netzero-2050": EU_NETZERO_2050}

_SCHEMA: dict = {
    "name": None,
    "preset": {"name": None, "N": None, "abatement_share": None, "sigma": None, "s_loading": None},
    "economy": {"T": None, "lambda": None},
    "firms": [{k: None for k in ("a", "b", "kappa", "delta", "gamma", "sigma", "h", "eta", "s_loading")}],
    "allocation": {
        "kind": None, "M_bar_0": None, "M0": None, "fraction": None,
        "loadings": None, "breakpoints": None,
    },
    "regulator": {"ell": None, "varphi": None, "theta": None, "nu_percent": None},
    "basket": {"weights": None, "pi_b": None, "omega_eff_percent": None},
    "calibration": {k: None for k in CalibrationInputs.__dataclass_fields__},
    "simulation": {"steps": None, "paths": None, "seed": None, "antithetic": None},
    "output_dir": None,
}
_PENALTY_KEYS = {"kind", "weight", "breakpoints", "slopes"}


def _check_keys(doc, schema, path: str) -> None:
    if isinstance(schema, dict):
        if not isinstance(doc, dict):
            raise ValidationError(path or "scenario", "expected an object")
        for key, value in doc.items():
            sub = f"{path}.{key}" if path else key
            if key not in schema:
                raise ValidationError(sub, "unknown key")
            if schema[key] is not None:
                _check_keys(value, schema[key], sub)
    elif isinstance(schema, list):
        if not isinstance(doc, list):
            raise ValidationError(path, "expected a list")
        for i, item in enumerate(doc):
            _check_keys(item, schema[0], f"{path}[{i}]")


def content_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _number(doc: dict, key: str, path: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise ValidationError(f"{path}.{key}", "missing required value")
        return float(default)
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{path}.{key}", f"expected a finite number, got {v!r}")
    return float(v)


@dataclass(frozen=True)
class SimulationSettings:
    steps: int = 2000
    paths: int = 10_000
    seed: int = 0
    antithetic: bool = False


@dataclass
class Scenario:
    name: str
    economy: EconomyParams
    basket: CpiBasket
    regulator: RegulatorSpec | None
    calibration: CalibrationInputs
    simulation: SimulationSettings
    allocation_doc: dict
    output_dir: str | None
    preset: str | None
    hash: str
    document: dict = field(repr=False)

    def allocation(self) -> AllocationProgram:
        return build_allocation(self)


def _penalty(doc, path: str):
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return Quadratic(float(doc))
    if not isinstance(doc, dict):
        raise ValidationError(path, "expected a number (quadratic weight) or an object")
    for key in doc:
        if key not in _PENALTY_KEYS:
            raise ValidationError(f"{path}.{key}", "unknown key")
    kind = doc.get("kind", "quadratic")
    if kind == "quadratic":
        return Quadratic(_number(doc, "weight", path))
    if kind in ("piecewise_linear", "piecewise-linear"):
        try:
            return PiecewiseLinear(tuple(doc["breakpoints"]), tuple(doc["slopes"]))
        except KeyError as exc:
            raise ValidationError(f"{path}.{exc.args[0]}", "missing required value") from None
        except ValidationError as exc:
            raise ValidationError(f"{path}.{exc.field.split('.')[-1]}", str(exc)) from None
    if kind == "absolute":
        w = _number(doc, "weight", path)
        return PiecewiseLinear((0.0,), (-w, w))
    raise ValidationError(f"{path}.kind", f"unknown penalty kind {kind!r}")


def _firm(doc: dict, i: int) -> FirmParams:
    path = f"firms[{i}]"
    vals = {k: _number(doc, k, path) for k in ("a", "b", "kappa", "delta", "gamma", "sigma", "h", "eta")}
    vals["s_loading"] = _number(doc, "s_loading", path, 0.0)
    return FirmParams(**vals).validate(i)


def scenario_from_dict(doc: dict) -> Scenario:
    """Validate ``doc`` and build the model objects it describes."""
    if not isinstance(doc, dict):
        raise ValidationError("scenario", "expected a JSON object")
    _check_keys(doc, _SCHEMA, "")
    doc = copy.deepcopy(doc)
    preset_name = None
    ref = None
    if "preset" in doc:
        pdoc = doc["preset"]
        preset_name = pdoc.get("name")
        if preset_name not in PRESETS:
            raise ValidationError("preset.name", f"unknown preset {preset_name!r}; known: {sorted(PRESETS)}")
        if "economy" in doc or "firms" in doc:
            raise ValidationError("preset", "a preset cannot be combined with economy/firms sections")
        ref = PRESETS[preset_name]
        N = pdoc.get("N", 1)
        if isinstance(N, bool) or not isinstance(N, int) or N < 1:
            raise ValidationError("preset.N", f"must be a positive integer, got {N!r}")
        share = _number(pdoc, "abatement_share", "preset", 0.5)
        sigma = pdoc.get("sigma")
        if sigma is not None:
            sigma = _number(pdoc, "sigma", "preset")
        s_load = _number(pdoc, "s_loading", "preset", 0.0)
        firm = representative_firm(
            ref["mu_bar_b"], ref["H_bar"], ref["phi_bar"], abatement_share=share, sigma=sigma, s_loading=s_load
        )
        economy = EconomyParams(tuple([firm] * N), ref["T"], ref["lambda"]).validate()
    else:
        if "economy" not in doc or "firms" not in doc:
            raise ValidationError("scenario", "need either preset or both economy and firms")
        edoc = doc["economy"]
        firms_doc = doc["firms"]
        if not firms_doc:
            raise ValidationError("firms", "at least one firm is required")
        firms = tuple(_firm(f, i) for i, f in enumerate(firms_doc))
        economy = EconomyParams(firms, _number(edoc, "T", "economy"), _number(edoc, "lambda", "economy")).validate()

    bdoc = doc.get("basket", {})
    weights = bdoc.get("weights", [1.0 / economy.N] * economy.N)
    basket = basket_from_firms(economy.firms, weights)
    if "pi_b" in bdoc:
        v = _number(bdoc, "pi_b", "basket")
        if v <= 0:
            raise ValidationError("basket.pi_b", "must be positive")
        basket = CpiBasket(basket.weights, v, basket.omega_bar, None)
    omega_pct = bdoc.get("omega_eff_percent", ref["omega_eff_percent"] if ref else None)
    if omega_pct is not None:
        basket = basket.with_omega_eff_percent(_number({"omega_eff_percent": omega_pct}, "omega_eff_percent", "basket"))

    regulator = None
    rdoc = doc.get("regulator")
    if rdoc is not None or ref is not None:
        rdoc = rdoc or {}
        ell = _penalty(rdoc["ell"], "regulator.ell") if "ell" in rdoc else Quadratic(ref["y_mu"] if ref else 0.0)
        varphi = _penalty(rdoc["varphi"], "regulator.varphi") if "varphi" in rdoc else Quadratic(ref["y_pi"] if ref else 0.0)
        theta = _number(rdoc, "theta", "regulator", ref["theta"] if ref else 0.0)
        nu = _number(rdoc, "nu_percent", "regulator", ref["nu_percent"] if ref else 2.0) / PERCENT
        regulator = RegulatorSpec.from_economy(economy, basket, ell, varphi, theta, nu)

    cdoc = doc.get("calibration", {})
    calibration = CalibrationInputs(
        **{k: _number(cdoc, k, "calibration", getattr(CalibrationInputs, k)) for k in CalibrationInputs.__dataclass_fields__}
    ).validate()

    sdoc = doc.get("simulation", {})
    settings = SimulationSettings(
        steps=_int(sdoc, "steps", 2000, 2), paths=_int(sdoc, "paths", 10_000, 1), seed=_int(sdoc, "seed", 0, 0),
        antithetic=bool(sdoc.get("antithetic", False)),
    )
    out = doc.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ValidationError("output_dir", "expected a string")
    name = doc.get("name", preset_name or "scenario")
    scen = Scenario(
        name=str(name), economy=economy, basket=basket, regulator=regulator, calibration=calibration,
        simulation=settings, allocation_doc=doc.get("allocation", {}), output_dir=out, preset=preset_name,
        hash=content_hash(doc), document=doc,
    )
    build_allocation(scen)  # validate the allocation section eagerly
    return scen


def _int(doc: dict, key: str, default: int, minimum: int) -> int:
    v = doc.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ValidationError(f"simulation.{key}", f"must be an integer >= {minimum}, got {v!r}")
    return v


def build_allocation(scen: Scenario) -> AllocationProgram:
    adoc = scen.allocation_doc
    economy = scen.economy
    agg = derive_aggregates(economy)
    N = economy.N
    kind = adoc.get("kind", "net-zero" if scen.preset else "fixed")
    if kind == "net-zero":
        M_bar = allocation_for_price(agg, net_zero_price(agg.mu_bar_b, agg.H_bar, agg.phi_bar), economy.T, economy.lam)
    elif kind == "optimal":
        if scen.regulator is None:
            raise ValidationError("allocation.kind", "'optimal' needs a regulator section")
        M_bar = minimize_social_cost(scen.regulator).M_bar_star_0
    elif kind == "fraction":
        M_bar = _number(adoc, "fraction", "allocation") * (agg.mu_bar_b + agg.H_bar) * economy.T
    elif kind == "fixed":
        M_bar = None
        if "M_bar_0" not in adoc and "M0" not in adoc:
            raise ValidationError("allocation", "kind 'fixed' needs M_bar_0 or M0")
    else:
        raise ValidationError("allocation.kind", f"unknown kind {kind!r}")

    if "M0" in adoc:
        M0 = np.asarray(adoc["M0"], dtype=float)
        if M0.shape != (N,) or not np.all(np.isfinite(M0)):
            raise ValidationError("allocation.M0", f"expected {N} finite numbers")
        if M_bar is not None:
            M0 = M0 - M0.mean() + M_bar
    else:
        if M_bar is None:
            M_bar = _number(adoc, "M_bar_0", "allocation")
        M0 = np.full(N, M_bar)

    loadings = adoc.get("loadings", "shock-neutralising")
    if loadings in ("shock-neutralising", "shock_neutralising"):
        return AllocationProgram.shock_neutralising(economy, M0)
    if loadings == "deterministic":
        return AllocationProgram.deterministic(M0)
    try:
        L = np.asarray(loadings, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("allocation.loadings", f"unrecognised value {loadings!r}") from None
    try:
        return AllocationProgram(M0, L, tuple(adoc.get("breakpoints", ())))
    except ValidationError as exc:
        raise ValidationError("allocation." + exc.field.split(".")[-1], str(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file.  ``OSError`` propagates for I/O problems."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("scenario", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def preset_scenario(name: str = "eu-netzero-2050", N: int = 1, **sections) -> Scenario:
    doc = {"preset": {"name": name, "N": N}}
    doc.update(sections)
    return scenario_from_dict(doc)
