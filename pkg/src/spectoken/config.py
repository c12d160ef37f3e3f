"""Run configuration files (TOML with ``[model]``, ``[train]`` and ``[data]`` tables)."""

from __future__ import annotations

from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    seed: int = 0


def _coerce(path: str, value: Any, default: Any):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} numbers")
        return tuple(_coerce(f"{path}[{i}]", v, d) for i, (v, d) in enumerate(zip(value, default)))
    raise ConfigError(f"{path}: unsupported setting")


def _build(cls, table: dict, section: str, overrides: dict | None = None):
    if not isinstance(table, dict):
        raise ConfigError(f"{section}: expected a table")
    defaults = {f.name: f.default if f.default is not MISSING else f.default_factory()
                for f in fields(cls)}
    known = {f.name for f in fields(cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key")
    kwargs = {f.name: _coerce(f"{section}.{f.name}", table[f.name], defaults[f.name])
              for f in fields(cls) if f.name in table}
    kwargs.update(overrides or {})
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def run_config_from_dict(doc: dict) -> RunConfig:
    unknown = set(doc) - {"model", "train", "data", "seed"}
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    seed = _coerce("seed", doc.get("seed", 0), 0)
    model = _build(ModelConfig, doc.get("model", {}), "model")
    train_table = dict(doc.get("train", {}))
    if "seed" in train_table:
        raise ConfigError("train.seed: set the top-level 'seed' instead")
    train = _build(TrainConfig, train_table, "train", {"seed": seed})
    data = _build(DataConfig, doc.get("data", {}), "data")
    if abs(sum(data.split) - 1.0) > 1e-9 or min(data.split) < 0:
        raise ConfigError("data.split: ratios must be non-negative and sum to 1")
    return RunConfig(model=model, train=train, data=data, seed=seed)


def load_run_config(path) -> RunConfig:
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return run_config_from_dict(doc)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def dump_run_config(cfg: RunConfig) -> str:
    lines = [f"seed = {cfg.seed}", ""]
    for section in ("model", "train", "data"):
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in fields(obj):
            if section == "train" and f.name == "seed":
                continue
            lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
