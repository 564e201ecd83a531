"""JSON run configuration: schema, validation and object builders."""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from .datagen import COVARIATE_KINDS, ERROR_KINDS, VARIANCE_KINDS, TruthSpec
from .errors import ErSaaError, InvalidSpec
from .harness import ExperimentConfig
from .residuals import SupportBox
from .stochprog import problem_from_dict


class ConfigError(ErSaaError):
    """Config file unreadable, schema-invalid, or missing a required section."""


_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_bound_vec = {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 1}
_pos_int = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "n": _pos_int,
        "output": {"type": "string"},
        "x": _vec,
        "truth": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d_x", "d_y"],
            "properties": {
                "d_x": _pos_int,
                "d_y": _pos_int,
                "intercept": {"type": ["number", "array"]},
                "coef": {"type": ["number", "array"]},
                "variance": {"enum": list(VARIANCE_KINDS)},
                "sigma": {"type": ["number", "array"]},
                "theta": {"type": ["number", "array"]},
                "errors": {"enum": list(ERROR_KINDS)},
                "df": _num,
                "covariates": {"enum": list(COVARIATE_KINDS)},
                "lo": {"type": ["number", "array"]},
                "hi": {"type": ["number", "array"]},
            },
        },
        "problem": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "h", "b"],
                    "properties": {
                        "kind": {"const": "newsvendor"},
                        "h": _vec,
                        "b": _vec,
                        "z_lo": _bound_vec,
                        "z_hi": _bound_vec,
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "c1", "A", "b_A", "d", "W", "T", "H"],
                    "properties": {
                        "kind": {"const": "two_stage_lp"},
                        "c1": _vec, "A": _mat, "b_A": _vec, "d": _vec, "W": _mat,
                        "T": _mat, "H": _mat, "h0": _vec,
                        "lipschitz_bound": {"type": ["number", "null"]},
                    },
                },
            ]
        },
        "estimators": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mean": {"enum": ["ols", "fwls", "knn", "truth"]},
                "cov": {"enum": ["parametric", "knn_diag", "truth"]},
                "k_mean": _pos_int,
                "k_cov": _pos_int,
                "features": {"enum": ["identity", "log"]},
            },
        },
        "support": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper"],
            "properties": {"lower": _bound_vec, "upper": _bound_vec},
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_grid", "replications"],
            "properties": {
                "n_grid": {"type": "array", "items": _pos_int, "minItems": 1},
                "replications": _pos_int,
                "m_oracle": _pos_int,
                "kappa": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
    },
}


def validate(doc):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    return doc


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} line {exc.lineno}: {exc.msg}") from None
    return validate(doc)


def require(doc, *keys):
    missing = [k for k in keys if k not in doc]
    if missing:
        raise ConfigError(f"config is missing required section(s): {', '.join(missing)}")


def build_truth(doc):
    require(doc, "truth")
    try:
        return TruthSpec(**doc["truth"])
    except (InvalidSpec, TypeError, ValueError) as exc:
        raise ConfigError(f"truth: {exc}") from None


def build_problem(doc):
    require(doc, "problem")
    try:
        return problem_from_dict(doc["problem"])
    except (InvalidSpec, ValueError) as exc:
        raise ConfigError(f"problem: {exc}") from None


def build_support(doc, d_y):
    s = doc.get("support")
    if s is None:
        return None
    lo = [-np.inf if v is None else v for v in s["lower"]]
    hi = [np.inf if v is None else v for v in s["upper"]]
    if len(lo) != d_y or len(hi) != d_y:
        raise ConfigError(f"support bounds need {d_y} entries")
    try:
        return SupportBox(lo, hi)
    except ValueError as exc:
        raise ConfigError(f"support: {exc}") from None


def estimator_options(doc):
    e = doc.get("estimators", {})
    return dict(mean_kind=e.get("mean", "ols"), cov_kind=e.get("cov", "parametric"),
                k_mean=e.get("k_mean"), k_cov=e.get("k_cov"),
                features=e.get("features", "identity"))


def query_point(doc, d_x=None):
    require(doc, "x")
    x = np.asarray(doc["x"], dtype=float)
    if d_x is not None and x.size != d_x:
        raise ConfigError(f"query point x needs {d_x} entries, got {x.size}")
    return x


def build_experiment(doc, seed=None, output=None):
    """ExperimentConfig from a validated document plus command-line overrides."""
    require(doc, "truth", "problem", "x", "experiment")
    truth, problem = build_truth(doc), build_problem(doc)
    exp = doc["experiment"]
    est = estimator_options(doc)
    if (est["mean_kind"] == "truth") != (est["cov_kind"] == "truth"):
        raise ConfigError("the truth hook must be set for both mean and cov")
    try:
        return ExperimentConfig(
            truth=truth, problem=problem, x=query_point(doc, truth.d_x),
            n_grid=tuple(exp["n_grid"]), replications=exp["replications"],
            seed=doc.get("seed", 0) if seed is None else seed,
            m_oracle=exp.get("m_oracle", 100_000), kappa=tuple(exp.get("kappa", ())),
            support=build_support(doc, truth.d_y),
            output=output or doc.get("output"), **est)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
