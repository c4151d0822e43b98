"""Run configuration: one flat dataclass serialized with every artifact.

Configs load from TOML or JSON files; command-line overrides are
`key=value` strings applied after the file, coerced to the field type.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

try:  # python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

CONFIG_FORMAT_VERSION = 1


@dataclass
class RunConfig:
    # data
    dataset: str = ""
    dataset_name: str = ""
    target_field: str = ""          # SDF data field holding the target
    split_sizes: tuple[int, int, int] | None = None  # None -> 80/10/10
    split_seed: int = 0             # the split is fixed across training seeds
    normalize_targets: bool = True
    # model
    model: str = "dggcn"            # standard | geometric | dggcn
    max_order: int = 3
    pooling: str = "mean"           # mean | sum
    k_layers: int = 3
    filter_width: int = 64
    num_gaussians: int = 50
    d_cutoff: float = 10.0
    gamma: float | None = None      # None -> 1 / (2 * spacing^2)
    gcn_norm: str = "target"        # target | symmetric
    r0: float = 1.39
    power_n: float = 4.55
    # optimizer / loop
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    patience: int = 50
    batch_size: int = 32
    seed: int = 0
    # outputs
    results_dir: str = ""

    def validate(self) -> "RunConfig":
        if self.model not in ("standard", "geometric", "dggcn"):
            raise ConfigError(f"model must be standard|geometric|dggcn, got {self.model!r}")
        if self.max_order not in (1, 2, 3):
            raise ConfigError(f"max_order must be 1, 2 or 3, got {self.max_order}")
        if self.pooling not in ("mean", "sum"):
            raise ConfigError(f"pooling must be mean|sum, got {self.pooling!r}")
        if self.gcn_norm not in ("target", "symmetric"):
            raise ConfigError(f"gcn_norm must be target|symmetric, got {self.gcn_norm!r}")
        if self.k_layers < 1:
            raise ConfigError("k_layers must be >= 1")
        if self.filter_width < 2:
            raise ConfigError("filter_width must be >= 2")
        if self.num_gaussians < 2:
            raise ConfigError("num_gaussians must be >= 2")
        if self.d_cutoff <= 0:
            raise ConfigError("d_cutoff must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.split_sizes is not None:
            s = self.split_sizes
            if len(s) != 3 or any(int(v) < 0 for v in s):
                raise ConfigError(f"split_sizes must be three non-negative ints, got {s}")
            self.split_sizes = tuple(int(v) for v in s)
        return self

    @property
    def label(self) -> str:
        return self.dataset_name or Path(self.dataset).stem or "dataset"

    def to_dict(self) -> dict:
        obj = dataclasses.asdict(self)
        if obj["split_sizes"] is not None:
            obj["split_sizes"] = list(obj["split_sizes"])
        obj["config_format_version"] = CONFIG_FORMAT_VERSION
        return obj


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    if name == "split_sizes":
        if value is None or value == "":
            return None
        if isinstance(value, str):
            value = [p for p in value.replace(",", " ").split() if p]
        return tuple(int(v) for v in value)
    if name == "gamma":
        if value is None or value in ("", "none", "None"):
            return None
        return float(value)
    ftype = _FIELDS[name].type
    if not isinstance(value, str):
        # already typed (from TOML/JSON); trust ints/floats/bools/strings
        return value
    if ftype == "int":
        return int(value)
    if ftype == "float":
        return float(value)
    if ftype == "bool":
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {name}={value!r}")
    return value


def from_dict(obj: dict) -> RunConfig:
    obj = dict(obj)
    obj.pop("config_format_version", None)
    unknown = [k for k in obj if k not in _FIELDS]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {k: _coerce(k, v) for k, v in obj.items()}
    return RunConfig(**kwargs).validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        obj = json.loads(path.read_text())
    else:
        with open(path, "rb") as fh:
            obj = tomllib.load(fh)
    return from_dict(obj)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply `key=value` strings on top of `cfg`; returns a new config."""
    out = dataclasses.replace(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        setattr(out, key, _coerce(key, value.strip()))
    return out.validate()
