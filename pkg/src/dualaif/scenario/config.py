"""Scenario configuration: JSON loading, schema validation, and typed views.

The config is a plain nested dict. ``validate`` checks it against a JSON
schema and reports every problem at once; the ``*_from`` helpers turn the
validated sections into the library's dataclasses.
"""
from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from ..building import PriorModel, VfeConfig
from ..community import CommunityModel, build_model, default_preferred_obs
from ..planner import CostWeights, EfeConfig, StateEconomics
from ..thermal import ThermalParams


class ConfigError(ValueError):
    """Raised with one message line per offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  {p}" for p in self.problems))


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_HOUR = {"type": "number", "minimum": 0, "maximum": 24}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_BREAKPOINTS = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "prefixItems": [_HOUR, _NONNEG], "minItems": 2, "maxItems": 2},
}


def _obj(props, required=None):
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": False,
    }


SCHEMA = _obj(
    {
        "world": _obj(
            {
                "c_p": _POS,
                "C_b": _POS,
                "U_w": _POS,
                "q_occ": _POS,
                "dt": _POS,
                "steps": {"type": "integer", "minimum": 3},
                "sigma_z": _POS,
                "initial_temp_c": _NUM,
                "ambient": _obj({"low_c": _NUM, "high_c": _NUM, "peak_hour": _HOUR}),
            }
        ),
        "agents": _obj(
            {
                "target_c": _NUM,
                "comfort_band_c": _POS,
                "allowable_band_c": _PAIR,
                "reduction_offsets_c": {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
                "warmup_steps": {"type": "integer", "minimum": 0},
                "prior_mode": {"enum": ["schedule", "ar1"]},
                "ar1_coeffs": {"type": "array", "items": _PROB, "minItems": 2, "maxItems": 2},
                "sigma_omega_occ": _POS,
                "sigma_omega_inf": _POS,
                "vfe": _obj(
                    {
                        "sigma_rho": _POS,
                        "eta_occ": _POS,
                        "eta_inf": _POS,
                        "zeta_airflow": _POS,
                        "zeta_supply": _POS,
                        "max_iters": {"type": "integer", "minimum": 1},
                        "grad_tol": _POS,
                    }
                ),
                "buildings": {
                    "type": "array",
                    "minItems": 2,
                    "maxItems": 2,
                    "items": _obj(
                        {
                            "occupancy": _BREAKPOINTS,
                            "window_event": {
                                "oneOf": [
                                    {"type": "null"},
                                    {"type": "array", "prefixItems": [_HOUR, _HOUR, _NONNEG],
                                     "minItems": 3, "maxItems": 3},
                                ]
                            },
                            "prior_occupancy": _BREAKPOINTS,
                        }
                    ),
                },
            }
        ),
        "community_model": _obj(
            {
                "confusion": {"type": "number", "minimum": 0.5, "exclusiveMaximum": 1},
                "persistence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "reduction_pull": {"type": "array", "items": _PROB, "minItems": 2, "maxItems": 2},
                "ess_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "ess_likelihood": {
                    "type": "array",
                    "minItems": 3,
                    "maxItems": 3,
                    "items": {"type": "array", "items": _PROB, "minItems": 4, "maxItems": 4},
                },
                "preferred_weight": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
            required=["confusion", "persistence", "reduction_pull", "ess_efficiency"],
        ),
        "planner": _obj(
            {
                "horizon": {"type": "integer", "minimum": 1, "maximum": 5},
                "alpha_amb": _NONNEG,
                "mode": {"enum": ["cost_ambiguity", "risk_ambiguity"]},
                "search": {"enum": ["exhaustive", "beam"]},
                "beam_width": {"type": "integer", "minimum": 1},
            }
        ),
        "economics": _obj(
            {
                "lambda_dev": _NONNEG,
                "lambda_upv": _NONNEG,
                "lambda_bat": _NONNEG,
                "sell_ratio": {"type": "number", "minimum": 0, "maximum": 1},
                "load_kw": _obj({"High": _NONNEG, "Med": _NONNEG, "Low": _NONNEG}),
                "reduction_kw": {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
                "trade_block_kw": _NONNEG,
                "ess_power_kw": _NONNEG,
                "cop": _POS,
                "plug_base_kw": _NONNEG,
                "plug_per_occupant_kw": _NONNEG,
            }
        ),
        "market": _obj(
            {
                "steps": {"type": "integer", "minimum": 1},
                "price_schedule": _BREAKPOINTS,
                "price_multiplier": _NONNEG,
                "peak_multiplier": _NONNEG,
                "peak_window": {"type": "array", "items": _HOUR, "minItems": 2, "maxItems": 2},
                "pv_peak_kw": _NONNEG,
                "pv_window": {"type": "array", "items": _HOUR, "minItems": 2, "maxItems": 2},
                "pv_noise": _NONNEG,
                "da_error": {"type": "number", "minimum": 0, "maximum": 1},
                "da_hvac_allowance_kw": _NONNEG,
                "ess": _obj(
                    {
                        "capacity_kwh": _POS,
                        "max_power_kw": _POS,
                        "round_trip_eff": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "initial_soc": _PROB,
                    }
                ),
                "discretizer": _obj(
                    {"power_deadband": _NONNEG, "flow_deadband": _NONNEG,
                     "building_reference": {"enum": ["nominal", "previous"]}},
                    required=["power_deadband", "flow_deadband"],
                ),
            }
        ),
        "profiles": _obj(
            {
                "buildings": {
                    "type": "array",
                    "minItems": 2,
                    "maxItems": 2,
                    "items": {"type": ["string", "null"]},
                },
                "market": {"type": ["string", "null"]},
            }
        ),
        "seeds": _obj({"master": {"type": "integer", "minimum": 0}}),
    }
)

_VALIDATOR = Draft202012Validator(SCHEMA)


def _path(error):
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def _semantic_problems(cfg):
    out = []
    w, a, m = cfg["world"], cfg["agents"], cfg["market"]
    if w["steps"] % m["steps"] != 0:
        out.append(f"world.steps: {w['steps']} is not a multiple of market.steps ({m['steps']})")
    lo, hi = a["allowable_band_c"]
    if lo > hi:
        out.append("agents.allowable_band_c: lower bound exceeds upper bound")
    if w["ambient"]["low_c"] > w["ambient"]["high_c"]:
        out.append("world.ambient: low_c exceeds high_c")
    loads = cfg["economics"]["load_kw"]
    if not loads["High"] > loads["Med"] > loads["Low"]:
        out.append("economics.load_kw: need High > Med > Low")
    ess_lik = np.asarray(cfg["community_model"].get("ess_likelihood", [[1.0]] * 3), dtype=float)
    if ess_lik.shape == (3, 4) and np.any(np.abs(ess_lik.sum(axis=0) - 1.0) > 1e-9):
        out.append("community_model.ess_likelihood: every column must sum to 1")
    for name in ("price_schedule",):
        if m[name][0][0] != 0.0:
            out.append(f"market.{name}: first breakpoint must start at hour 0")
    for i, b in enumerate(a["buildings"]):
        for key in ("occupancy", "prior_occupancy"):
            hours = [h for h, _ in b[key]]
            if hours[0] != 0.0 or hours != sorted(hours):
                out.append(f"agents.buildings.{i}.{key}: breakpoints must start at 0 and be sorted")
    return out


def validate(cfg):
    """Raise ConfigError listing every schema and consistency problem."""
    problems = sorted(f"{_path(e)}: {e.message}" for e in _VALIDATOR.iter_errors(cfg))
    if not problems:
        problems = _semantic_problems(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def default_config():
    text = resources.files("dualaif.data").joinpath("default_config.json").read_text()
    return json.loads(text)


def load_config(path=None, seed=None):
    """Read, validate and return a config dict; relative profile paths resolve against the file."""
    if path is None:
        cfg = default_config()
        base = Path.cwd()
    else:
        path = Path(path)
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<file>: not valid JSON ({exc})"]) from exc
        base = path.parent
    if seed is not None:
        cfg.setdefault("seeds", {})["master"] = int(seed)
    validate(cfg)
    prof = cfg["profiles"]
    prof["buildings"] = [None if p is None else str((base / p).resolve()) for p in prof["buildings"]]
    if prof["market"] is not None:
        prof["market"] = str((base / prof["market"]).resolve())
    return cfg


def extreme_pricing(cfg):
    """Copy of ``cfg`` with prices doubled, and tripled inside the peak window."""
    out = copy.deepcopy(cfg)
    out["market"]["price_multiplier"] = 2.0
    out["market"]["peak_multiplier"] = 3.0
    return out


# -- typed views ----------------------------------------------------------------------------

def thermal_params_from(cfg) -> ThermalParams:
    w = cfg["world"]
    return ThermalParams(c_p=w["c_p"], C_b=w["C_b"], U_w=w["U_w"], q_occ=w["q_occ"], dt=w["dt"])


def vfe_config_from(cfg, target=None) -> VfeConfig:
    a = cfg["agents"]
    steps = cfg["world"]["steps"]
    rho = np.full(steps, a["target_c"]) if target is None else np.asarray(target, dtype=float)
    return VfeConfig(target_rho=rho, sigma_z=cfg["world"]["sigma_z"], **a["vfe"])


def prior_model_from(cfg, prior_schedule) -> PriorModel:
    a = cfg["agents"]
    return PriorModel(prior_schedule, mode=a["prior_mode"], ar1_coeffs=tuple(a["ar1_coeffs"]))


def community_model_from(cfg) -> CommunityModel:
    c = cfg["community_model"]
    kwargs = dict(
        confusion=c["confusion"],
        persistence=c["persistence"],
        reduction_pull=tuple(c["reduction_pull"]),
        ess_efficiency=c["ess_efficiency"],
        preferred_obs=default_preferred_obs(c.get("preferred_weight", 0.5)),
    )
    if "ess_likelihood" in c:
        kwargs["ess_likelihood"] = np.asarray(c["ess_likelihood"], dtype=float)
    return build_model(**kwargs)


def efe_config_from(cfg, alpha=None) -> EfeConfig:
    p = dict(cfg["planner"])
    if alpha is not None:
        p["alpha_amb"] = float(alpha)
    return EfeConfig(**p)


def cost_weights_from(cfg) -> CostWeights:
    e = cfg["economics"]
    return CostWeights(e["lambda_dev"], e["lambda_upv"], e["lambda_bat"], e["sell_ratio"])


def economics_from(cfg) -> StateEconomics:
    e = cfg["economics"]
    hours = 24.0 / cfg["market"]["steps"]
    return StateEconomics(
        load_kw=dict(e["load_kw"]),
        reduction_kw=tuple(e["reduction_kw"]),
        trade_block_kw=e["trade_block_kw"],
        ess_power_kw=e["ess_power_kw"],
        step_hours=hours,
    )


def stream(cfg, component: str) -> np.random.Generator:
    """Independent generator for a named component, derived from the master seed."""
    key = [ord(ch) for ch in component]
    return np.random.default_rng(np.random.SeedSequence(cfg["seeds"]["master"], spawn_key=key))


def component_seed(cfg, component: str) -> int:
    return int(stream(cfg, component).integers(0, 2**31 - 1))
