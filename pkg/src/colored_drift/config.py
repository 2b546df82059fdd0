"""JSON run configurations: schema validation, default materialization, and
construction of model objects.

Unknown keys are rejected everywhere.  ``resolve`` returns a fully
materialized config dict (all defaults filled in, including eta = 1 for the
radial multiplicative model) suitable for echoing into output directories;
re-running from that echo reproduces the run.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import ConfigError
from .filtering import FilterConfig
from .model import (
    BUILTIN_BASES,
    ColoredModel,
    LevyModel,
    additive_limit,
    make_basis,
)
from .sgdct import LearningRate
from .simulate import TimeGrid

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_MATRIX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array",
         "items": {"type": "array", "items": {"type": "number"}, "minItems": 1},
         "minItems": 1},
    ]
}

_ADDITIVE_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "theta", "epsilon"],
    "properties": {
        "kind": {"const": "additive"},
        "data": {"enum": ["colored", "limit"]},
        "theta": _MATRIX,
        "epsilon": _POSITIVE,
        "basis": {"enum": sorted(BUILTIN_BASES)},
        "G": _MATRIX,
        "A": _MATRIX,
        "sigma": _MATRIX,
    },
}

_CUSTOM_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "theta", "epsilon", "basis", "G", "A", "sigma"],
    "properties": {
        "kind": {"const": "custom"},
        "data": {"enum": ["colored", "limit"]},
        "theta": _MATRIX,
        "epsilon": _POSITIVE,
        "basis": {"enum": sorted(BUILTIN_BASES)},
        "G": _MATRIX,
        "A": _MATRIX,
        "sigma": _MATRIX,
    },
}

_LEVY_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "epsilon"],
    "properties": {
        "kind": {"const": "levy"},
        "data": {"enum": ["colored", "limit"]},
        "theta": _POSITIVE,
        "alpha": _POSITIVE,
        "gamma": _POSITIVE,
        "kappa": _POSITIVE,
        "beta": _POSITIVE,
        "eta": _POSITIVE,
        "epsilon": _POSITIVE,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "grid"],
    "properties": {
        "model": {"oneOf": [_ADDITIVE_MODEL, _LEVY_MODEL, _CUSTOM_MODEL]},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T"],
            "properties": {
                "T": _POSITIVE,
                "h": _POSITIVE,
                "h_rule": {"const": "eps_cubed"},
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "required": ["delta"],
            "properties": {
                "delta": _POSITIVE,
                "scheme": {"enum": ["exact-exponential", "euler"]},
            },
        },
        "estimator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["mle", "mle-filtered", "mle-levy",
                                     "sgdct", "sgdct-filtered", "sgdct-levy"]},
                "lr": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["a", "b"],
                    "properties": {"a": _POSITIVE, "b": _POSITIVE},
                },
                "theta0": _MATRIX,
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 1},
                "R": {"type": "integer", "minimum": 2},
                "base_seed": {"type": "integer", "minimum": 0},
                "checkpoints": {"type": "array", "items": _POSITIVE},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "thinning": {"type": "integer", "minimum": 1},
            },
        },
    },
}

FILTERED_VARIANTS = ("mle-filtered", "sgdct-filtered", "mle-levy", "sgdct-levy")
ONLINE_VARIANTS = ("sgdct", "sgdct-filtered", "sgdct-levy")


def load_config(path) -> dict:
    """Parse a JSON config file, reporting line/column on syntax errors."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from None


def resolve(raw: dict, overrides: Optional[dict] = None) -> dict:
    """Validate a raw config and materialize all defaults.

    ``overrides`` maps dotted paths (e.g. ``model.epsilon``) to replacement
    values applied before validation.
    """
    cfg = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for dotted, value in (overrides or {}).items():
        node = cfg
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None

    model = cfg["model"]
    model.setdefault("data", "colored")
    if model["kind"] == "levy":
        for key in ("theta", "alpha", "gamma", "kappa", "beta"):
            model.setdefault(key, 1.0)
        model.setdefault("eta", 1.0)
    elif model["kind"] == "additive":
        model.setdefault("basis", "neg-identity")
        d = _theta_shape(model["theta"])[0]
        model.setdefault("G", np.eye(d).tolist())
        model.setdefault("A", np.eye(d).tolist())
        model.setdefault("sigma", np.eye(d).tolist())

    grid = cfg["grid"]
    if "h" in grid and "h_rule" in grid:
        raise ConfigError("grid must set exactly one of h and h_rule")
    if "h" not in grid:
        grid.setdefault("h_rule", "eps_cubed")
        grid["h"] = float(model["epsilon"]) ** 3

    if "filter" in cfg:
        cfg["filter"].setdefault("scheme", "exact-exponential")

    est = cfg.get("estimator")
    if est is not None:
        if est["variant"] in FILTERED_VARIANTS and "filter" not in cfg:
            raise ConfigError(
                f"estimator variant {est['variant']!r} requires a filter block "
                "with a filtering width delta"
            )
        if est["variant"] in ONLINE_VARIANTS:
            est.setdefault("lr", {"a": 1.0, "b": 0.1})
        if est["variant"].endswith("levy") and model["kind"] != "levy" \
                and _theta_shape(model["theta"])[0] != 2:
            raise ConfigError("the levy estimator variants require d = 2")

    exp = cfg.setdefault("experiment", {})
    exp.setdefault("M", 20)
    exp.setdefault("R", 1000)
    exp.setdefault("base_seed", 0)

    out = cfg.setdefault("output", {})
    out.setdefault("thinning", 1)
    return cfg


def _theta_shape(theta) -> tuple[int, int]:
    arr = np.atleast_2d(np.asarray(theta, dtype=float))
    return arr.shape


def build_model(cfg: dict):
    """Instantiate the data-generating model described by a resolved config.

    Returns (model, data_kind) where model is a ColoredModel or a limit-model
    object depending on the requested data channel.
    """
    spec = cfg["model"]
    if spec["kind"] == "levy":
        levy = LevyModel(theta=spec["theta"], alpha=spec["alpha"],
                         gamma=spec["gamma"], kappa=spec["kappa"],
                         beta=spec["beta"], eta=spec["eta"])
        if spec["data"] == "limit":
            return levy.limit(), "limit"
        return levy.colored(spec["epsilon"]), "colored"
    theta = np.atleast_2d(np.asarray(spec["theta"], dtype=float))
    d, l = theta.shape
    basis = make_basis(spec["basis"], d)
    if basis.dim_out != l:
        raise ConfigError("theta columns must match the basis output dimension")
    a_mat = _expand(spec["A"], d)
    n = a_mat.shape[0]
    model = ColoredModel(
        theta=theta,
        basis=basis,
        diffusion=_expand(spec["G"], d),
        A=a_mat,
        sigma=_expand(spec["sigma"], n),
        epsilon=spec["epsilon"],
    )
    if spec["data"] == "limit":
        return additive_limit(model), "limit"
    return model, "colored"


def _expand(value, dim: int) -> np.ndarray:
    """Scalars become scalar multiples of the identity of the given size."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(dim)
    return np.atleast_2d(arr)


def build_grid(cfg: dict) -> TimeGrid:
    return TimeGrid.from_horizon(cfg["grid"]["T"], cfg["grid"]["h"])


def build_filter(cfg: dict) -> Optional[FilterConfig]:
    if "filter" not in cfg:
        return None
    block = cfg["filter"]
    return FilterConfig(block["delta"], block["scheme"])


def build_learning_rate(cfg: dict) -> Optional[LearningRate]:
    est = cfg.get("estimator", {})
    lr = est.get("lr")
    return LearningRate(lr["a"], lr["b"]) if lr else None


def config_digest(cfg: dict) -> str:
    """Stable content hash of a resolved config block."""
    import hashlib

    blob = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
