"""Experiment configuration: schema validation with defaults, stable content
digests, and dotted-path overrides.

A config is a plain nested dict with sections version/seed/task/scheme/
model/train/eval.  Validation fills defaults and rejects unknown keys with
the offending dotted path, so typos fail loudly instead of silently running
a default experiment.
"""

from __future__ import annotations

import copy
import hashlib
import json


class ConfigError(ValueError):
    pass


_TASK_DEFAULTS = {
    "density": {
        "kind": "density",
        "name": "pinwheel",
        "n_train": 100000,
        "n_eval": 4000,
        "bbox": [[-4.0, 4.0], [-4.0, 4.0]],
        "generator_params": {},
    },
    "ising": {
        "kind": "ising",
        "L": 10,
        "sigma": 0.2,
        "n": 2000,
        "gibbs_site_steps": 100000,
        "periodic": False,
        "data_file": None,
        "j_file": None,
    },
}

_SCHEME_DEFAULTS = {
    "bernoulli": {"type": "bernoulli", "eps": 0.1},
    "pool": {"type": "pool", "window": [32, 1], "shape": [32, 1]},
    "grid": {"type": "grid"},
    "directed": {"type": "directed", "graph_file": None},
}

_MODEL_DEFAULTS = {
    "density": {"kind": "mlp", "input_encoding": "01", "hidden": 256},
    "ising": {"kind": "ising", "input_encoding": "01", "hidden": 256},
}

_TRAIN_DEFAULTS = {
    "method": "ed",
    "lr": 0.002,
    "batch": 128,
    "steps": 20000,
    "M": 32,
    "w": 1.0,
    "l1_coeff": 0.0,
    "l1_sweep": [],
    "eval_every": 2000,
    "pcd_k": 10,
}

_EVAL_DEFAULTS = {
    "nll_S": 1000000,
    "nll_S_train": 100000,
    "mmd_bandwidth": 0.1,
    "mmd_repeats": 3,
    "mmd_samples": 2000,
    "mmd_gibbs_site_steps": 10000,
    "mmd_chain_init": "uniform",
    "neg_log_rmse_off_diagonal_only": False,
}


def _merge_section(name, raw, defaults, free_keys=()):
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    out = copy.deepcopy(defaults)
    for key, value in raw.items():
        if key not in defaults and key not in free_keys:
            raise ConfigError(f"{name}.{key}: unknown key")
        out[key] = copy.deepcopy(value)
    return out


def validate_config(raw):
    """Fill defaults and reject unknown keys.  Returns a new config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a mapping")
    known = {"version", "seed", "task", "scheme", "model", "train", "eval"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")
    version = raw.get("version", 1)
    if version != 1:
        raise ConfigError(f"version: unsupported value {version!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed: expected a non-negative integer")

    task_raw = raw.get("task", {})
    if not isinstance(task_raw, dict):
        raise ConfigError("task: expected a mapping")
    kind = task_raw.get("kind", "density")
    if kind not in _TASK_DEFAULTS:
        raise ConfigError(f"task.kind: unknown value {kind!r}")
    task = _merge_section("task", task_raw, _TASK_DEFAULTS[kind])

    scheme_raw = raw.get("scheme", {})
    if not isinstance(scheme_raw, dict):
        raise ConfigError("scheme: expected a mapping")
    stype = scheme_raw.get("type", "bernoulli")
    if stype not in _SCHEME_DEFAULTS:
        raise ConfigError(f"scheme.type: unknown value {stype!r}")
    scheme = _merge_section("scheme", scheme_raw, _SCHEME_DEFAULTS[stype])

    model = _merge_section("model", raw.get("model", {}), _MODEL_DEFAULTS[kind])
    train = _merge_section("train", raw.get("train", {}), _TRAIN_DEFAULTS)
    if train["method"] not in ("ed", "pcd"):
        raise ConfigError(f"train.method: unknown value {train['method']!r}")
    eval_cfg = _merge_section("eval", raw.get("eval", {}), _EVAL_DEFAULTS)
    if eval_cfg["mmd_chain_init"] not in ("uniform", "data"):
        raise ConfigError(
            f"eval.mmd_chain_init: unknown value {eval_cfg['mmd_chain_init']!r}"
        )
    return {
        "version": 1,
        "seed": seed,
        "task": task,
        "scheme": scheme,
        "model": model,
        "train": train,
        "eval": eval_cfg,
    }


def config_digest(cfg):
    """SHA-256 of the canonical JSON serialisation of a validated config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_override(text):
    """Parse "a.b.c=value" into (path tuple, value).

    Values are decoded as JSON when possible ("0.5", "[1,2]", "true"),
    otherwise kept as bare strings ("pinwheel").
    """
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r}: expected key=value")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return tuple(key.strip().split(".")), parsed


def apply_overrides(raw, overrides):
    """Apply dotted-path overrides to a raw (pre-validation) config dict."""
    out = copy.deepcopy(raw)
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r}: {part} is not a mapping")
        node[path[-1]] = value
    return out


def load_config(path, overrides=()):
    """Read a JSON config file, apply overrides, validate.

    Returns (config, digest).
    """
    with open(path) as fh:
        raw = json.load(fh)
    if overrides:
        raw = apply_overrides(raw, overrides)
    cfg = validate_config(raw)
    return cfg, config_digest(cfg)
