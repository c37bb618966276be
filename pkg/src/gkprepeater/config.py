"""Run configuration: one JSON document per experiment, discriminated by ``kind``."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .quadrature import db_to_sigma

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}
_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_NUM_LIST = {"type": "array", "items": _NUM}
_CODE = {"enum": ["gkp", "c4", "steane7"]}

_COMMON = {
    "kind": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "out": {"type": "string"},
    "precision": {"type": "integer", "minimum": 15},
    "budget": {"type": "integer", "minimum": 10},
    "threads": _POS_INT,
}

_NOISE = {
    "eta0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "sigma_gkp": {"type": "number", "minimum": 0},
    "squeezing_db": _NUM,
}


def _schema(kind: str, props: dict, required=()) -> dict:
    return {
        "type": "object",
        "properties": {**_COMMON, **props, "kind": {"const": kind}},
        "required": ["kind", *required],
        "additionalProperties": False,
    }


_SIM_PROPS = {
    **_NOISE,
    "code": _CODE,
    "n_multi": _POS_INT,
    "n_all": _POS_INT,
    "links": _POS_INT,
    "analog": {"type": "boolean"},
    "b": _PROB,
    "trial_log": {"type": "boolean"},
    "lossless": {"type": "boolean"},
}

SCHEMAS = {
    "analytic": _schema("analytic", {
        "eta0": _NUM_LIST,
        "sigma_gkp": _NUM_LIST,
        "threshold": _PROB,
    }, ("eta0", "sigma_gkp")),
    "simulate": _schema("simulate", _SIM_PROPS, ("eta0",)),
    "single-link": _schema("single-link", {
        "gamma_min": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "gamma_max": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "points": _POS_INT,
        "schemes": {"type": "array", "items": {"enum": ["gkp-only", "c4-analog", "steane7-analog",
                                                       "steane7-no-analog"]}},
        "b": _PROB,
    }),
    "cost": _schema("cost", {
        **_NOISE,
        "code": _CODE,
        "distances_km": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "layouts": {"type": "array", "items": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2}},
        "objective": {"enum": ["min-cost", "max-key"]},
        "links": _POS_INT,
        "b": _PROB,
    }, ("eta0", "code")),
    "sweep": _schema("sweep", {
        "base": {"type": "object"},
        "vary": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
    }, ("base", "vary")),
}

DEFAULTS = {
    "analytic": {"threshold": 0.01},
    "simulate": {"code": "gkp", "n_multi": 1, "n_all": 40, "links": 100, "analog": True, "b": 0.1,
                 "trial_log": False, "lossless": False},
    "single-link": {"gamma_min": 0.08, "gamma_max": 0.2, "points": 100,
                    "schemes": ["gkp-only", "c4-analog", "steane7-analog", "steane7-no-analog"], "b": 0.1},
    "cost": {"distances_km": [500.0 * k for k in range(1, 21)], "objective": "min-cost", "links": 100, "b": 0.1},
    "sweep": {},
}
COMMON_DEFAULTS = {"seed": 0, "out": "results", "precision": 60, "budget": 10_000_000}


class ConfigError(ValueError):
    pass


def validate(doc: dict) -> dict:
    """Schema-check ``doc`` and fill defaults; returns a new dict."""
    if not isinstance(doc, dict) or doc.get("kind") not in SCHEMAS:
        raise ConfigError(f"config needs a 'kind' among {sorted(SCHEMAS)}")
    try:
        jsonschema.validate(doc, SCHEMAS[doc["kind"]])
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message) from exc
    out = {**COMMON_DEFAULTS, **DEFAULTS[doc["kind"]], **doc}
    if doc["kind"] in ("simulate", "cost"):
        if ("sigma_gkp" in doc) == ("squeezing_db" in doc):
            raise ConfigError("give exactly one of sigma_gkp or squeezing_db")
        if "squeezing_db" in doc:
            out["sigma_gkp"] = db_to_sigma(out.pop("squeezing_db"))
    if doc["kind"] == "single-link" and out["gamma_min"] > out["gamma_max"]:
        raise ConfigError("gamma_min exceeds gamma_max")
    if doc["kind"] == "sweep":
        base = {"kind": "simulate", **doc["base"]}
        for name in doc["vary"]:
            if name not in SCHEMAS["simulate"]["properties"] or name == "kind":
                raise ConfigError(f"cannot vary unknown parameter {name!r}")
        validate({**base, **{k: v[0] for k, v in doc["vary"].items()}})
    return out


def load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate(doc)
