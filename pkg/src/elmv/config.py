"""Pipeline configuration: defaults, TOML files, flag overrides and hashing.

A configuration is a nested dict of sections. Every artifact records a
stage hash: the hash of its own stage's parameters chained onto the hash of
the upstream artifact it was built from, so a registry trained from one
subset collection can never be paired with a support set from another run.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .learner import LearnerParams
from .pipeline import ELMVConfig
from .simulation import DEFAULT_NOISE_LEVELS, METHODS, SimulationConfig

WORKERS_ENV = "ELMV_WORKERS"

DEFAULTS = {
    "seed": 0,
    "workers": None,
    "output_dir": ".",
    "data": {
        "input": None,
        "queries": None,
        "label_column": "label",
        "id_column": "patient_id",
        "missing_tokens": ["", "NA", "NaN"],
        "sep": ",",
    },
    "assess": {"threshold": 0.40},
    "subsets": {"cap": 0.20, "rate_bin_width": 0.05, "min_rows": None, "min_cols": None},
    "learner": {k: v for k, v in asdict(LearnerParams()).items() if k != "seed"},
    "train": {"cv_folds": 10, "support_size": None, "loocv": True},
    "ensemble": {"k1": 10, "k2": 5, "w_f": 0.5, "w_m": 0.5},
    "features": {"k3": 5, "k4": 10},
    "run": {"holdout_fraction": 0.2},
    "simulation": {
        "missing_rates": [0.05, 0.10, 0.20, 0.60, 0.65, 0.70],
        "trial_seeds": [0, 1, 2, 3, 4],
        "noise_levels": list(DEFAULT_NOISE_LEVELS),
        "methods": list(METHODS),
        "validation_fraction": 0.2,
        "knn_k": None,
        "external_imputed_dir": None,
        "mask_dir": None,
        "seed_input": None,
        "window": 3,
    },
}

# keys holding filesystem paths; relative paths in a config file are
# resolved against the file's directory
_PATH_KEYS = {
    ("output_dir",), ("data", "input"), ("data", "queries"),
    ("simulation", "external_imputed_dir"), ("simulation", "mask_dir"),
    ("simulation", "seed_input"),
}
# keys that do not influence any artifact's content
_UNHASHED = {("workers",), ("output_dir",)} | _PATH_KEYS


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _merge(base: dict, update: dict, where: str = "") -> None:
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where + key!r} must be a table")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def _resolve_paths(cfg: dict, root: Path) -> None:
    for keys in _PATH_KEYS:
        node = cfg
        for k in keys[:-1]:
            node = node[k]
        v = node.get(keys[-1])
        if isinstance(v, str) and not Path(v).is_absolute():
            node[keys[-1]] = str(root / v)


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the TOML file at ``path``, then ``overrides``.

    ``overrides`` maps dotted keys (``"subsets.cap"``) to values; ``None``
    values are ignored so unset command-line flags fall through.
    """
    cfg = default_config()
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                from_file = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        _merge(cfg, from_file)
        _resolve_paths(cfg, path.parent)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = cfg
        for k in parents:
            node = node[k]
        if leaf not in node:
            raise ConfigError(f"unknown configuration key {dotted!r}")
        node[leaf] = value
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    """Reject values the owning modules would refuse, before any work starts."""
    try:
        ecfg = elmv_config(cfg)
        ecfg.selection, ecfg.weights
        simulation_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if not 0 < cfg["assess"]["threshold"] < 1:
        raise ConfigError("assess.threshold must lie in (0, 1)")
    if not 0 < cfg["run"]["holdout_fraction"] < 1:
        raise ConfigError("run.holdout_fraction must lie in (0, 1)")
    for key in ("k3", "k4"):
        if int(cfg["features"][key]) < 1:
            raise ConfigError(f"features.{key} must be >= 1")
    if cfg["train"]["cv_folds"] < 2:
        raise ConfigError("train.cv_folds must be >= 2")
    resolve_workers(cfg)


def resolve_workers(cfg: dict) -> int:
    """Configured worker count, else ``$ELMV_WORKERS``, else 1."""
    workers = cfg.get("workers")
    source = "workers"
    if workers is None:
        workers = os.environ.get(WORKERS_ENV) or 1
        source = WORKERS_ENV
    try:
        workers = int(workers)
    except (TypeError, ValueError):
        raise ConfigError(f"{source} must be an integer, got {workers!r}") from None
    if workers < 1:
        raise ConfigError(f"{source} must be >= 1")
    return workers


def learner_params(cfg: dict) -> LearnerParams:
    return LearnerParams(**cfg["learner"], seed=cfg["seed"])


def elmv_config(cfg: dict) -> ELMVConfig:
    s, t, e = cfg["subsets"], cfg["train"], cfg["ensemble"]
    return ELMVConfig(
        cap=s["cap"], rate_bin_width=s["rate_bin_width"],
        min_rows=s["min_rows"], min_cols=s["min_cols"],
        learner=learner_params(cfg), cv_folds=t["cv_folds"], support_size=t["support_size"],
        k1=e["k1"], k2=e["k2"], w_f=e["w_f"], w_m=e["w_m"], seed=cfg["seed"],
        workers=1,
    )


def simulation_config(cfg: dict) -> SimulationConfig:
    sim = cfg["simulation"]
    unknown = set(sim["methods"]) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown simulation methods {sorted(unknown)}")
    return SimulationConfig(
        noise_levels=tuple(sim["noise_levels"]),
        missing_rates=tuple(sim["missing_rates"]),
        trial_seeds=tuple(sim["trial_seeds"]),
        validation_fraction=sim["validation_fraction"],
        methods=tuple(sim["methods"]),
        elmv=elmv_config(cfg),
        learner=learner_params(cfg),
        knn_k=sim["knn_k"],
        external_imputed_dir=sim["external_imputed_dir"],
        mask_dir=sim["mask_dir"],
        workers=1,
    )


def digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def hashed_view(cfg: dict) -> dict:
    """The configuration minus paths and execution-only settings."""
    view = copy.deepcopy(cfg)
    for keys in _UNHASHED:
        node = view
        for k in keys[:-1]:
            node = node[k]
        node.pop(keys[-1], None)
    return view


def config_hash(cfg: dict) -> str:
    return digest(hashed_view(cfg))


def data_options(cfg: dict) -> dict:
    d = cfg["data"]
    return {k: d[k] for k in ("label_column", "id_column", "missing_tokens", "sep")}


def assess_hash(cfg: dict) -> str:
    return digest({"data": data_options(cfg), "assess": cfg["assess"]})


def subsets_hash(cfg: dict) -> str:
    return digest({"data": data_options(cfg), "subsets": cfg["subsets"]})


def train_hash(upstream: str, cfg: dict) -> str:
    return digest({"upstream": upstream, "learner": cfg["learner"], "train": cfg["train"],
                   "seed": cfg["seed"]})


def predict_hash(upstream: str, cfg: dict) -> str:
    return digest({"upstream": upstream, "ensemble": cfg["ensemble"]})


def features_hash(upstream: str, cfg: dict) -> str:
    # learner settings matter when LOOCV accuracies are computed at this stage
    return digest({"upstream": upstream, "features": cfg["features"], "learner": cfg["learner"],
                   "rate_bin_width": cfg["subsets"]["rate_bin_width"]})


def simulation_hash(cfg: dict) -> str:
    view = hashed_view(cfg)
    return digest({k: view[k] for k in ("seed", "subsets", "learner", "train", "ensemble",
                                        "simulation")})
