"""Flat dotted-key run configuration: defaults, validation, persistence.

A run directory always receives the FULL effective config (every default
materialized), so config + seed + logs reproduce the run exactly. Unknown
keys are rejected rather than ignored.
"""

from __future__ import annotations

import json
import math
import os

from .errors import ConfigError

DEFAULTS = {
    "seed": 7,
    # synthetic data
    "gen.n_classes": 8,
    "gen.n_known": 4,
    "gen.samples_per_class": 60,
    "gen.timesteps": 4,
    "gen.d_in_a": 24,
    "gen.d_in_b": 24,
    "gen.sigma": 0.1,
    "gen.corruption": 0.1,
    # latent geometry
    "model.d_latent": 256,
    "model.d_hidden": 512,
    # masked contrastive objectives
    "fcmi.tau": 1.0,
    "fcmi.mask_ratio": 0.3,
    "fcmi.mask_mode": "aligned",
    "fcmi.pairs": ["aa", "ab", "ba", "bb"],
    "fcmi.normalize": False,
    "fcmi.fine": True,
    "fcmi.coarse": True,
    # jigsaw pretext
    "cujp.segments": 4,
    "cujp.permutations": 24,
    "cujp.mode": "cujp",
    "cujp.mmjp_cap": 40320,
    "cujp.mmjp_splits": 2,
    "cujp.instances_per_sample": 1,
    # shared codebook
    "codebook.size": 400,
    "codebook.gamma": 0.99,
    "codebook.epsilon": 1e-5,
    "codebook.reseed_dead_steps": 0,
    # optimization
    "train.epochs": 5,
    "train.batch_size": 60,
    "train.lr": 1e-3,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.adam_epsilon": 1e-8,
    "train.lambda_contrast": 1.0,
    "train.lambda_jigsaw": 2.0,
    "train.lambda_recon": 1.0,
    "train.lambda_commit": 1.0,
    # downstream probe + evaluation
    "probe.epochs": 50,
    "probe.lr": 1e-2,
    "eval.theta_percentile": 5.0,
    "eval.features": "continuous",
    "eval.recall_ks": [1, 5, 10],
}

_CHOICES = {
    "fcmi.mask_mode": {"aligned", "independent"},
    "cujp.mode": {"cujp", "mmjp", "off"},
    "eval.features": {"continuous", "quantized"},
}

_PAIR_TOKENS = {"aa", "ab", "ba", "bb"}


def default_config() -> dict:
    return {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, optionally overlaid with a JSON file and explicit overrides."""
    cfg = default_config()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg.update(user)
    if overrides:
        cfg.update(overrides)
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    for key in cfg:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
    for key, default in DEFAULTS.items():
        if key not in cfg:
            cfg[key] = default
        cfg[key] = _coerce(key, cfg[key], default)
    for key, allowed in _CHOICES.items():
        if cfg[key] not in allowed:
            raise ConfigError(f"{key} must be one of {sorted(allowed)}, got {cfg[key]!r}")

    if not 1 <= cfg["gen.n_known"] < cfg["gen.n_classes"]:
        raise ConfigError(
            f"gen.n_known must satisfy 1 <= n_known < gen.n_classes, got "
            f"{cfg['gen.n_known']} of {cfg['gen.n_classes']}"
        )
    if not 0.0 <= cfg["fcmi.mask_ratio"] < 1.0:
        raise ConfigError(f"fcmi.mask_ratio must be in [0, 1), got {cfg['fcmi.mask_ratio']}")
    if cfg["fcmi.tau"] <= 0:
        raise ConfigError(f"fcmi.tau must be positive, got {cfg['fcmi.tau']}")
    bad = [p for p in cfg["fcmi.pairs"] if p not in _PAIR_TOKENS]
    if bad or not cfg["fcmi.pairs"]:
        raise ConfigError(f"fcmi.pairs must be a nonempty subset of {sorted(_PAIR_TOKENS)}, got {cfg['fcmi.pairs']}")
    if cfg["cujp.segments"] not in (2, 4, 8):
        raise ConfigError(f"cujp.segments must be one of [2, 4, 8], got {cfg['cujp.segments']}")
    if cfg["model.d_latent"] % cfg["cujp.segments"] != 0:
        raise ConfigError(
            f"cujp.segments = {cfg['cujp.segments']} must divide model.d_latent = {cfg['model.d_latent']}"
        )
    if not 1 <= cfg["cujp.permutations"] <= math.factorial(cfg["cujp.segments"]):
        raise ConfigError(
            f"cujp.permutations must be in [1, {cfg['cujp.segments']}!], got {cfg['cujp.permutations']}"
        )
    if not 0.0 <= cfg["codebook.gamma"] < 1.0:
        raise ConfigError(f"codebook.gamma must be in [0, 1), got {cfg['codebook.gamma']}")
    for key in ("train.lambda_contrast", "train.lambda_jigsaw", "train.lambda_recon", "train.lambda_commit"):
        if cfg[key] < 0:
            raise ConfigError(f"{key} must be >= 0, got {cfg[key]}")
    for key in ("gen.sigma",):
        if cfg[key] < 0:
            raise ConfigError(f"{key} must be >= 0, got {cfg[key]}")
    if not 0.0 <= cfg["gen.corruption"] < 1.0:
        raise ConfigError(f"gen.corruption must be in [0, 1), got {cfg['gen.corruption']}")
    if not 0.0 <= cfg["eval.theta_percentile"] <= 100.0:
        raise ConfigError(f"eval.theta_percentile must be in [0, 100], got {cfg['eval.theta_percentile']}")
    if not all(isinstance(k, int) and k >= 1 for k in cfg["eval.recall_ks"]):
        raise ConfigError(f"eval.recall_ks must be positive integers, got {cfg['eval.recall_ks']}")
    return cfg


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def persist_config(cfg: dict, dirpath) -> str:
    os.makedirs(dirpath, exist_ok=True)
    path = os.path.join(dirpath, "config.json")
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def gen_spec_from(cfg: dict):
    from .synthdata import GenSpec

    return GenSpec(
        n_classes=cfg["gen.n_classes"],
        n_known=cfg["gen.n_known"],
        samples_per_class=cfg["gen.samples_per_class"],
        timesteps=cfg["gen.timesteps"],
        d_in_a=cfg["gen.d_in_a"],
        d_in_b=cfg["gen.d_in_b"],
        latent_dim=cfg["model.d_latent"],
        sigma=cfg["gen.sigma"],
        corruption=cfg["gen.corruption"],
        seed=cfg["seed"],
    )
