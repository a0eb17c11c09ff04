"""Experiment configuration: defaults, then a JSON file, then command-line flags.

The file mirrors :class:`ExperimentConfig`::

    {
      "seed": 3,
      "synth": {"num_known": 6, "imbalance_ratio": 100},
      "net": {"hidden_dims": [64, 64]},
      "train": {"lambda_inter": 0.1, "m_max": 65}
    }

``seed`` is top level only; it seeds data generation, network init and
shuffling together.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from dmdsc.datasets import SynthConfig
from dmdsc.errors import ConfigError, DimensionError
from dmdsc.net import NetConfig
from dmdsc.trainer import TrainConfig


@dataclass(frozen=True)
class NetSettings:
    """Architecture knobs; input and embedding sizes are resolved from the data."""

    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    # None: one dimension per known class
    embed_dim: Optional[int] = None

    def build(self, input_dim, num_classes, seed):
        embed_dim = num_classes if self.embed_dim is None else self.embed_dim
        if embed_dim < num_classes - 1:
            raise DimensionError(
                f"embed_dim={embed_dim} is too small for {num_classes} classes "
                f"(need embed_dim >= {num_classes - 1})"
            )
        return NetConfig(input_dim, embed_dim, tuple(self.hidden_dims), self.activation, seed)


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    net: NetSettings = field(default_factory=NetSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    trials: int = 1
    seeds: int = 5
    out: str = "runs"

    def with_seed(self, seed):
        """Copy whose data, init and shuffling are all driven by ``seed``."""
        return replace(
            self,
            seed=seed,
            synth=replace(self.synth, seed=seed),
            train=replace(self.train, seed=seed),
        )

    def net_config(self, input_dim, num_classes):
        return self.net.build(input_dim, num_classes, self.seed)

    def validate(self):
        self.synth.validate()
        self.net.build(self.synth.input_dim, self.synth.num_known, self.seed)
        if self.trials < 1 or self.seeds < 1:
            raise ConfigError("trials and seeds must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)


_SECTIONS = {"synth": SynthConfig, "net": NetSettings, "train": TrainConfig}
_TOP_LEVEL = ("seed", "trials", "seeds", "out")


def default_dict():
    d = asdict(ExperimentConfig())
    for name in _SECTIONS:
        d[name].pop("seed", None)
    return d


def _merge(base, update, where):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key!r} must be a table of settings")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def build_config(path=None, overrides=None):
    """Layer defaults < file at ``path`` < ``overrides`` and validate the result.

    ``overrides`` is a nested dict shaped like the file (``None`` values are
    skipped, so unset command-line flags fall through).
    """
    merged = default_dict()
    if path is not None:
        _merge(merged, load_config_file(path), "")
    if overrides:
        _merge(merged, _drop_none(overrides), "")
    try:
        seed = int(merged["seed"])
        sections = {}
        for name, cls in _SECTIONS.items():
            values = dict(merged[name])
            if name != "net":
                values["seed"] = seed
            if name == "net":
                values["hidden_dims"] = tuple(values["hidden_dims"])
            sections[name] = cls(**values)
        cfg = ExperimentConfig(**sections, **{k: merged[k] for k in _TOP_LEVEL})
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}") from None
    return cfg.validate()


def _drop_none(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            v = _drop_none(v)
            if v:
                out[k] = v
        elif v is not None:
            out[k] = v
    return out


def dump_config(cfg):
    d = copy.deepcopy(asdict(cfg))
    return json.dumps(d, indent=2, sort_keys=True) + "\n"
