"""Run configuration: a YAML tree validated against fixed defaults.

Unknown keys are rejected. Overrides use dotted paths
(``training.epochs=5``) and win over the file contents.
"""
from __future__ import annotations

import copy
import os
from pathlib import Path

import yaml

from .augment import AugmentConfig
from .data import SyntheticSpec
from .evaluation import DEFAULT_KSWEEP
from .model import TrainConfig
from .shadow import PsoConfig

OUTPUT_ENV = "SHADOWGUARD_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "output_dir": "runs/default",
    "dataset": {
        "root": None,
        "manifest": "manifest.csv",
        "synthetic": {
            "class_count": 8,
            "samples_per_class": 63,
            "color_jitter": 20.0,
            "background_range": [110, 230],
            "noise_sigma": 3.0,
            "seed": 0,
        },
    },
    "defense": {
        "profile_kind": "adathresh",
        "adv": True,
        "transform": True,
        "k_range": [0.2, 0.7],
        "rotation_deg": 15.0,
        "shear": 0.1,
        "translation": 0.1,
    },
    "training": {
        "learning_rate": 0.01,
        "epochs": 30,
        "batch_size": 64,
        "momentum": 0.9,
        "seed": 0,
        "init_checkpoint": None,
    },
    "pso": {
        "particles": 10,
        "iterations": 50,
        "inertia": 0.73,
        "cognitive": 1.49,
        "social": 1.49,
        "vertices": 3,
    },
    "evaluation": {
        "label": None,
        "ksweep": list(DEFAULT_KSWEEP),
        "trials": 5,
        "seed": 0,
        "trials_per_k": {},
    },
    "boundcheck": {
        "triples": 1000,
        "size": 32,
        "ksweep": list(DEFAULT_KSWEEP),
        "seed": 0,
    },
}

# leaves whose value is a free-form mapping
_OPEN_MAPS = {("evaluation", "trials_per_k")}


def _merge(base: dict, update: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = path + (key,)
        if key not in base:
            raise ConfigError(f"unknown config key {'.'.join(map(str, where))!r}")
        if isinstance(base[key], dict) and where not in _OPEN_MAPS:
            if not isinstance(value, dict):
                raise ConfigError(f"{'.'.join(where)} must be a mapping")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def parse_override(text: str) -> dict:
    """``a.b.c=value`` -> nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    node: dict = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return node


class RunConfig:
    """Validated configuration tree with typed accessors."""

    def __init__(self, tree: dict | None = None, overrides=(), base_dir: Path | None = None):
        merged = _merge(DEFAULTS, tree or {})
        for o in overrides:
            merged = _merge(merged, o if isinstance(o, dict) else parse_override(o))
        self.tree = merged
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        self._validate()

    @classmethod
    def load(cls, path=None, overrides=()) -> RunConfig:
        if path is None:
            return cls({}, overrides)
        path = Path(path)
        try:
            tree = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(tree, overrides, base_dir=path.parent)

    def _validate(self):
        try:
            self.synthetic_spec()
            self.augment_config()
            self.train_config()
            self.pso_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        ev = self.tree["evaluation"]
        if not all(0 < float(k) <= 1 for k in ev["ksweep"]):
            raise ConfigError("evaluation.ksweep values must lie in (0, 1]")
        if int(ev["trials"]) < 1:
            raise ConfigError("evaluation.trials must be >= 1")
        bc = self.tree["boundcheck"]
        if int(bc["triples"]) < 1 or int(bc["size"]) < 1:
            raise ConfigError("boundcheck.triples and boundcheck.size must be positive")
        if not all(0 < float(k) <= 1 for k in bc["ksweep"]):
            raise ConfigError("boundcheck.ksweep values must lie in (0, 1]")

    # -- typed views ---------------------------------------------------------

    @property
    def output_dir(self) -> Path:
        return Path(self.tree["output_dir"])

    @property
    def profile_kind(self) -> str | None:
        kind = self.tree["defense"]["profile_kind"]
        return None if kind in (None, "none") else kind

    @property
    def dataset_root(self) -> Path | None:
        root = self.tree["dataset"]["root"]
        if root is None:
            return None
        root = Path(root)
        return root if root.is_absolute() else self.base_dir / root

    def synthetic_spec(self) -> SyntheticSpec:
        s = self.tree["dataset"]["synthetic"]
        return SyntheticSpec(
            class_count=int(s["class_count"]),
            samples_per_class=int(s["samples_per_class"]),
            color_jitter=float(s["color_jitter"]),
            background_range=tuple(s["background_range"]),
            noise_sigma=float(s["noise_sigma"]),
            seed=int(s["seed"]),
        )

    def augment_config(self) -> AugmentConfig:
        d = self.tree["defense"]
        if d["profile_kind"] not in (None, "none", "adathresh", "edges"):
            raise ConfigError(f"defense.profile_kind {d['profile_kind']!r} is not one of none/adathresh/edges")
        return AugmentConfig(
            profile_kind=self.profile_kind,
            adv=bool(d["adv"]),
            transform=bool(d["transform"]),
            k_range=tuple(float(k) for k in d["k_range"]),
            rotation_deg=float(d["rotation_deg"]),
            shear=float(d["shear"]),
            translation=float(d["translation"]),
            seed=int(self.tree["seed"]),
        )

    def train_config(self) -> TrainConfig:
        t = self.tree["training"]
        cfg = TrainConfig(
            learning_rate=float(t["learning_rate"]),
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            momentum=float(t["momentum"]),
            seed=int(t["seed"]),
        )
        if cfg.epochs < 0 or cfg.batch_size < 1 or cfg.learning_rate < 0:
            raise ConfigError("training needs epochs >= 0, batch_size >= 1, learning_rate >= 0")
        return cfg

    def pso_config(self, seed: int = 0) -> PsoConfig:
        p = self.tree["pso"]
        return PsoConfig(
            particles=int(p["particles"]),
            iterations=int(p["iterations"]),
            inertia=float(p["inertia"]),
            cognitive=float(p["cognitive"]),
            social=float(p["social"]),
            vertices=int(p["vertices"]),
            seed=seed,
        )

    @property
    def ksweep(self) -> list[float]:
        return [float(k) for k in self.tree["evaluation"]["ksweep"]]

    @property
    def trials_per_k(self) -> dict[float, int]:
        return {float(k): int(v) for k, v in (self.tree["evaluation"]["trials_per_k"] or {}).items()}


def resolve_output_dir(cfg: RunConfig, flag: str | None = None) -> Path:
    """Flag, then environment variable, then the config value."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return cfg.output_dir
