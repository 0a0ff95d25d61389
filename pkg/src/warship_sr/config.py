"""Run configuration: one JSON file, strict keys, flag overrides.

The document has five sections; every key is optional and falls back
to the module defaults. Unknown keys anywhere are rejected so typos
cannot silently revert a setting to its default.

  {
    "seed": 0,
    "model":  {recurrences, embed_features, infer_features, kernel_size, scale},
    "train":  {batch_size, lr_initial, lr_decay_factor, patience_epochs,
               lr_stop_threshold, momentum, clip_tau, val_fraction, max_epochs},
    "loss":   {alpha, beta, alpha_schedule, alpha_decay_epochs},
    "data":   {augment},
    "paths":  {images, dataset, out, model, input, set}
  }

Command-line flags override file values (flags win); the fully
resolved document is echoed into every output directory.
"""

from __future__ import annotations

import copy
import json

from .losses import LossConfig
from .model import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "seed": int,
    "model": {
        "recurrences": int,
        "embed_features": int,
        "infer_features": int,
        "kernel_size": int,
        "scale": int,
    },
    "train": {
        "batch_size": int,
        "lr_initial": float,
        "lr_decay_factor": float,
        "patience_epochs": int,
        "lr_stop_threshold": float,
        "momentum": float,
        "clip_tau": float,
        "val_fraction": float,
        "max_epochs": int,
    },
    "loss": {
        "alpha": float,
        "beta": float,
        "alpha_schedule": str,
        "alpha_decay_epochs": int,
    },
    "data": {"augment": bool},
    "paths": {
        "images": str,
        "dataset": str,
        "out": str,
        "model": str,
        "input": str,
        "set": str,
    },
}


def default_config() -> dict:
    m, t, l = ModelConfig(), TrainConfig(), LossConfig()
    return {
        "seed": 0,
        "model": {
            "recurrences": m.recurrences,
            "embed_features": m.embed_features,
            "infer_features": m.infer_features,
            "kernel_size": m.kernel_size,
            "scale": m.scale,
        },
        "train": {
            "batch_size": t.batch_size,
            "lr_initial": t.lr_initial,
            "lr_decay_factor": t.lr_decay_factor,
            "patience_epochs": t.patience_epochs,
            "lr_stop_threshold": t.lr_stop_threshold,
            "momentum": t.momentum,
            "clip_tau": t.clip_tau,
            "val_fraction": t.val_fraction,
            "max_epochs": t.max_epochs,
        },
        "loss": {
            "alpha": l.alpha,
            "beta": l.beta,
            "alpha_schedule": l.alpha_schedule,
            "alpha_decay_epochs": l.alpha_decay_epochs,
        },
        "data": {"augment": True},
        "paths": {
            "images": None,
            "dataset": None,
            "out": None,
            "model": None,
            "input": None,
            "set": None,
        },
    }


def _coerce(value, want, where: str):
    if want is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("%s must be a number" % where)
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("%s must be an integer" % where)
        return value
    if want is bool:
        if not isinstance(value, bool):
            raise ConfigError("%s must be true or false" % where)
        return value
    if want is str:
        if not isinstance(value, str):
            raise ConfigError("%s must be a string" % where)
        return value
    raise AssertionError(where)


def _merge(base: dict, doc: dict, schema: dict, prefix: str = "") -> None:
    for key, value in doc.items():
        where = prefix + key
        if key not in schema:
            raise ConfigError("unknown key '%s'" % where)
        want = schema[key]
        if isinstance(want, dict):
            if not isinstance(value, dict):
                raise ConfigError("'%s' must be an object" % where)
            _merge(base[key], value, want, where + ".")
        elif value is None and key in _SCHEMA.get("paths", {}) and prefix == "paths.":
            base[key] = None
        else:
            base[key] = _coerce(value, want, where)


def load_run_config(path=None) -> dict:
    """Defaults, then the file's values layered on top."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError("cannot read config file: %s" % exc) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config is not valid JSON: %s" % exc) from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        _merge(cfg, doc, _SCHEMA)
    return cfg


def apply_overrides(cfg: dict, overrides: dict) -> None:
    """Dotted-path assignments from command-line flags; flags win."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        node, schema = cfg, _SCHEMA
        parts = dotted.split(".")
        for part in parts[:-1]:
            node, schema = node[part], schema[part]
        leaf = parts[-1]
        if leaf not in schema:
            raise ConfigError("unknown key '%s'" % dotted)
        node[leaf] = _coerce(value, schema[leaf], dotted)


def model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(**cfg["model"])


def train_config(cfg: dict, threads: int = 1) -> TrainConfig:
    return TrainConfig(seed=cfg["seed"], threads=threads, **cfg["train"])


def loss_config(cfg: dict) -> LossConfig:
    return LossConfig(**cfg["loss"])


def resolved_text(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
