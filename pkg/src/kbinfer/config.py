"""Experiment configuration: JSON schema validation, overrides, hashing.

Configs are strict: unknown fields are rejected everywhere, matrices are
checked for positive definiteness at validation time, and every message
names the offending field.
"""

import hashlib
import json

import numpy as np

from .errors import ConfigError
from .kernels import kernel_from_config
from .noise_models import GaussianMixtureNoise, GaussianNoise
from .oracles import GaussianMixture, LinearGaussianModel

__all__ = [
    "EXPERIMENT_KINDS",
    "load_config",
    "validate_config",
    "apply_overrides",
    "config_hash",
]

EXPERIMENT_KINDS = {
    "ground-truth": "one-stage estimators vs the analytic output mean",
    "misspecification": "model-based estimator error under scaled parameters",
    "chain": "two-stage estimator combinations vs the analytic output mean",
    "filter-bench": "filtering MSE of the model-based filter vs the fully "
                    "nonparametric one on the synthetic state space model",
    "rate-check": "log-log convergence slope of the model-based estimator",
}

_COMMON_FIELDS = {"schema_version", "experiment", "seed", "replicates", "output"}

_KIND_FIELDS = {
    "ground-truth": {
        "n_train", "n_input", "model", "train_input", "input_mixture",
        "kernel_x", "kernel_y", "epsilons", "estimators",
    },
    "misspecification": {
        "n_input", "model", "input_mixture", "kernel_y",
        "sigma1_grid", "sigma2_grid",
    },
    "chain": {
        "n_train", "n_input", "model1", "model2", "train_input",
        "input_mixture", "kernel_x", "kernel_y", "kernel_z",
        "epsilons", "estimators",
    },
    "filter-bench": {
        "ssm", "n_train", "t_test", "cv", "algorithms", "point_estimate",
        "trajectory_dir", "dump_weights",
    },
    "rate-check": {"sizes", "model", "input_mixture", "kernel_y"},
}

_GT_ESTIMATORS = {"non_ksr", "mb_ksr", "mb_ksr_est"}
_CHAIN_ESTIMATORS = {"nn", "n_mb", "mb_n"}
_ALGORITHMS = {"model_based", "fkbf"}


def _err(errors, path, message):
    errors.append(f"{path}: {message}")


def _check_int(errors, cfg, key, minimum=1, path=None):
    path = path or key
    val = cfg.get(key)
    if not isinstance(val, int) or isinstance(val, bool) or val < minimum:
        _err(errors, path, f"must be an integer >= {minimum}")
        return None
    return val


def _check_number(errors, obj, key, path, minimum=None, strict=False):
    val = obj.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _err(errors, path, "must be a number")
        return None
    if minimum is not None:
        if strict and not val > minimum:
            _err(errors, path, f"must be > {minimum}")
            return None
        if not strict and not val >= minimum:
            _err(errors, path, f"must be >= {minimum}")
            return None
    return float(val)


def _check_grid(errors, obj, key, path, strict_min=0.0):
    vals = obj.get(key)
    if not isinstance(vals, list) or not vals:
        _err(errors, path, "must be a nonempty list of numbers")
        return
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > strict_min:
            _err(errors, path, f"entry {i} must be a number > {strict_min}")
            return


def _check_unknown(errors, obj, allowed, path):
    unknown = set(obj) - allowed
    for key in sorted(unknown):
        _err(errors, f"{path}.{key}" if path else key, "unknown field")


def _check_kernel(errors, cfg, key):
    if key not in cfg:
        _err(errors, key, "required")
        return
    try:
        kernel_from_config(cfg[key])
    except ConfigError as exc:
        _err(errors, key, str(exc))


def _check_model(errors, cfg, key):
    obj = cfg.get(key)
    if not isinstance(obj, dict):
        _err(errors, key, "must be an object with fields A and Sigma")
        return
    _check_unknown(errors, obj, {"A", "Sigma"}, key)
    if "A" not in obj or "Sigma" not in obj:
        _err(errors, key, "must contain A and Sigma")
        return
    try:
        LinearGaussianModel(np.asarray(obj["A"], dtype=float),
                            np.asarray(obj["Sigma"], dtype=float))
    except (ValueError, TypeError) as exc:
        _err(errors, key, str(exc))


def _check_mixture(errors, cfg, key):
    obj = cfg.get(key)
    if not isinstance(obj, dict):
        _err(errors, key, "must be an object with weights, means, covs")
        return
    _check_unknown(errors, obj, {"weights", "means", "covs"}, key)
    missing = {"weights", "means", "covs"} - set(obj)
    if missing:
        _err(errors, key, f"missing fields: {sorted(missing)}")
        return
    try:
        GaussianMixture(obj["weights"], obj["means"], obj["covs"])
    except (ValueError, TypeError) as exc:
        _err(errors, key, str(exc))


def _check_train_input(errors, cfg, key):
    obj = cfg.get(key)
    if not isinstance(obj, dict) or obj.get("kind") != "uniform":
        _err(errors, key, 'must be {"kind": "uniform", "low": [...], "high": [...]}')
        return
    _check_unknown(errors, obj, {"kind", "low", "high"}, key)
    low, high = obj.get("low"), obj.get("high")
    if not (isinstance(low, list) and isinstance(high, list) and len(low) == len(high)):
        _err(errors, key, "low and high must be lists of equal length")
        return
    if any(h <= l for l, h in zip(low, high)):
        _err(errors, key, "high must exceed low in every coordinate")


def _check_estimators(errors, cfg, allowed, key="estimators"):
    vals = cfg.get(key)
    if not isinstance(vals, list) or not vals:
        _err(errors, key, "must be a nonempty list")
        return
    for v in vals:
        if v not in allowed:
            _err(errors, key, f"unknown entry {v!r}; allowed: {sorted(allowed)}")
    if len(set(vals)) != len(vals):
        _err(errors, key, "entries must be unique")


def _check_ssm(errors, cfg):
    obj = cfg.get("ssm")
    if not isinstance(obj, dict):
        _err(errors, "ssm", "required object")
        return
    allowed = {"b", "M", "eta", "sigma_h", "sigma_o", "noise", "eta_train"}
    _check_unknown(errors, obj, allowed, "ssm")
    for field in ("b", "eta", "sigma_h", "sigma_o"):
        if field not in obj:
            _err(errors, f"ssm.{field}", "required")
        else:
            minimum = 0.0 if field in ("sigma_h", "sigma_o") else None
            _check_number(errors, obj, field, f"ssm.{field}", minimum=minimum)
    if "M" not in obj:
        _err(errors, "ssm.M", "required")
    elif not isinstance(obj["M"], int) or isinstance(obj["M"], bool) or obj["M"] < 1:
        _err(errors, "ssm.M", "must be an integer >= 1")
    if "eta_train" in obj and obj["eta_train"] is not None:
        _check_number(errors, obj, "eta_train", "ssm.eta_train")
    if "noise" in obj and obj["noise"] is not None:
        try:
            _parse_ssm_noise(obj["noise"])
        except (ConfigError, ValueError) as exc:
            _err(errors, "ssm.noise", str(exc))
    elif isinstance(obj.get("sigma_h"), (int, float)) and not obj["sigma_h"] > 0:
        _err(errors, "ssm.sigma_h", "must be > 0 when no explicit noise is given")


def _parse_ssm_noise(obj):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("must be an object with 'kind'")
    if obj["kind"] == "gaussian":
        _require_exact(obj, {"kind", "Sigma"})
        return GaussianNoise(np.asarray(obj["Sigma"], dtype=float))
    if obj["kind"] == "gaussian_mixture":
        _require_exact(obj, {"kind", "weights", "means", "covs"})
        return GaussianMixtureNoise(obj["weights"], obj["means"], obj["covs"])
    raise ConfigError(f"unknown noise kind {obj['kind']!r}")


def _require_exact(obj, fields):
    unknown = set(obj) - fields
    if unknown:
        raise ConfigError(f"unknown fields: {sorted(unknown)}")
    missing = fields - set(obj)
    if missing:
        raise ConfigError(f"missing fields: {sorted(missing)}")


def _check_cv(errors, cfg):
    obj = cfg.get("cv")
    if not isinstance(obj, dict):
        _err(errors, "cv", "required object")
        return
    allowed = {"epsilon", "delta", "sigma_x", "sigma_z", "horizon"}
    _check_unknown(errors, obj, allowed, "cv")
    for field in ("epsilon", "delta", "sigma_x", "sigma_z"):
        if field not in obj:
            _err(errors, f"cv.{field}", "required")
        else:
            _check_grid(errors, obj, field, f"cv.{field}")
    if "horizon" in obj:
        if not isinstance(obj["horizon"], int) or obj["horizon"] < 2:
            _err(errors, "cv.horizon", "must be an integer >= 2")


def validate_config(cfg):
    """Return a list of error strings; empty means valid."""
    errors = []
    if not isinstance(cfg, dict):
        return ["config must be a JSON object"]
    if cfg.get("schema_version") != 1:
        _err(errors, "schema_version", "must be 1")
    kind = cfg.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        _err(errors, "experiment",
             f"must be one of {sorted(EXPERIMENT_KINDS)}")
        return errors
    _check_unknown(errors, cfg, _COMMON_FIELDS | _KIND_FIELDS[kind], "")
    if not isinstance(cfg.get("seed"), int) or isinstance(cfg.get("seed"), bool):
        _err(errors, "seed", "must be an integer")
    _check_int(errors, cfg, "replicates")
    if "output" in cfg and not isinstance(cfg["output"], str):
        _err(errors, "output", "must be a string path")

    if kind == "ground-truth":
        _check_int(errors, cfg, "n_train")
        _check_int(errors, cfg, "n_input")
        _check_model(errors, cfg, "model")
        _check_train_input(errors, cfg, "train_input")
        _check_mixture(errors, cfg, "input_mixture")
        _check_kernel(errors, cfg, "kernel_x")
        _check_kernel(errors, cfg, "kernel_y")
        _check_grid(errors, cfg, "epsilons", "epsilons")
        _check_estimators(errors, cfg, _GT_ESTIMATORS)
    elif kind == "misspecification":
        _check_int(errors, cfg, "n_input")
        _check_model(errors, cfg, "model")
        _check_mixture(errors, cfg, "input_mixture")
        _check_kernel(errors, cfg, "kernel_y")
        _check_grid(errors, cfg, "sigma1_grid", "sigma1_grid")
        _check_grid(errors, cfg, "sigma2_grid", "sigma2_grid")
    elif kind == "chain":
        _check_int(errors, cfg, "n_train")
        _check_int(errors, cfg, "n_input")
        _check_model(errors, cfg, "model1")
        _check_model(errors, cfg, "model2")
        _check_train_input(errors, cfg, "train_input")
        _check_mixture(errors, cfg, "input_mixture")
        for key in ("kernel_x", "kernel_y", "kernel_z"):
            _check_kernel(errors, cfg, key)
        _check_grid(errors, cfg, "epsilons", "epsilons")
        _check_estimators(errors, cfg, _CHAIN_ESTIMATORS)
    elif kind == "filter-bench":
        _check_ssm(errors, cfg)
        sizes = cfg.get("n_train")
        if not isinstance(sizes, list) or not sizes or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 6 for v in sizes
        ):
            _err(errors, "n_train", "must be a nonempty list of integers >= 6")
        _check_int(errors, cfg, "t_test", minimum=1)
        _check_cv(errors, cfg)
        _check_estimators(errors, cfg, _ALGORITHMS, key="algorithms")
        if "point_estimate" in cfg and cfg["point_estimate"] not in (
            "preimage", "argmax",
        ):
            _err(errors, "point_estimate", "must be 'preimage' or 'argmax'")
        if "trajectory_dir" in cfg and cfg["trajectory_dir"] is not None:
            if not isinstance(cfg["trajectory_dir"], str):
                _err(errors, "trajectory_dir", "must be a string path or null")
        if "dump_weights" in cfg and not isinstance(cfg["dump_weights"], bool):
            _err(errors, "dump_weights", "must be a boolean")
    elif kind == "rate-check":
        sizes = cfg.get("sizes")
        if not isinstance(sizes, list) or len(sizes) < 4 or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 2 for v in sizes
        ):
            _err(errors, "sizes", "must be a list of at least four integers >= 2")
        _check_model(errors, cfg, "model")
        _check_mixture(errors, cfg, "input_mixture")
        _check_kernel(errors, cfg, "kernel_y")
    return errors


def apply_overrides(cfg, assignments):
    """Apply ``key.path=value`` overrides; values parse as JSON when they can."""
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return cfg


def config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")


def parse_ssm_noise(obj):
    """Public wrapper used by the experiment drivers."""
    if obj is None:
        return None
    return _parse_ssm_noise(obj)
