"""Layered run configuration.

Built-in defaults, then an INI file (``--config`` or ``$ERGORISK_CONFIG``),
then command-line overrides. Each section fills one parameter dataclass::

    [run]       seed
    [sync]      max_bridge
    [rula]      muscle_use, force_load, legs
    [hal]       HalParams fields
    [bach]      torque_mode
    [gbdt]      GbdtConfig fields
    [gru]       GruConfig fields
    [evaluate]  rula_stride, hal_train_stride_s, hal_eval_stride_s
    [paths]     taxel_map
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .bach import BachParams
from .errors import ConfigError, ErgoRiskError
from .evaluation import EvalConfig
from .hal import HalParams
from .ml.gbdt import GbdtConfig
from .ml.gru import GruConfig
from .rula import RulaAdjustments
from .taxels import TaxelMap, default_taxel_map

ENV_VAR = "ERGORISK_CONFIG"


@dataclass(frozen=True)
class RunSection:
    seed: int = 0


@dataclass(frozen=True)
class SyncSection:
    max_bridge: float = 0.5


@dataclass(frozen=True)
class EvalSection:
    rula_stride: int = 1
    hal_train_stride_s: float = 1.0
    hal_eval_stride_s: float | None = None


@dataclass(frozen=True)
class PathsSection:
    taxel_map: str = ""


@dataclass(frozen=True)
class Config:
    run: RunSection = field(default_factory=RunSection)
    sync: SyncSection = field(default_factory=SyncSection)
    rula: RulaAdjustments = field(default_factory=RulaAdjustments)
    hal: HalParams = field(default_factory=HalParams)
    bach: BachParams = field(default_factory=BachParams)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    gru: GruConfig = field(default_factory=GruConfig)
    evaluate: EvalSection = field(default_factory=EvalSection)
    paths: PathsSection = field(default_factory=PathsSection)
    source: str = ""

    def to_dict(self) -> dict:
        d = {f.name: asdict(getattr(self, f.name)) for f in fields(self) if f.name != "source"}
        return d

    def sha256(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def eval_config(self) -> EvalConfig:
        gru = replace(self.gru, seed=self.run.seed)
        gbdt = replace(self.gbdt, seed=self.run.seed)
        return EvalConfig(gbdt, gru, self.hal, self.rula, self.evaluate.rula_stride,
                          self.evaluate.hal_train_stride_s, self.evaluate.hal_eval_stride_s)

    def taxel_map(self) -> TaxelMap:
        if not self.paths.taxel_map:
            return default_taxel_map()
        return TaxelMap.load(self.paths.taxel_map)


_SECTIONS = [f.name for f in fields(Config) if f.name != "source"]


def _convert(section: str, key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            v = raw.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return None if raw.lower() in ("", "none") else float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid value") from None


def _apply(section_obj, section: str, items: dict):
    known = {f.name for f in fields(section_obj)}
    updates = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        updates[key] = _convert(section, key, raw, getattr(section_obj, key))
    try:
        return replace(section_obj, **updates)
    except ErgoRiskError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def default_path() -> str | None:
    return os.environ.get(ENV_VAR) or None


def load_config(path: str | Path | None = None, overrides: dict[str, dict[str, str]] | None = None,
                use_env: bool = True) -> Config:
    """Defaults <- INI file <- ``overrides`` ({section: {key: raw string}})."""
    cfg = Config()
    if path is None and use_env:
        path = default_path()
    layers = []
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for name in cp.sections():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
        layers.append({name: dict(cp[name]) for name in cp.sections()})
        cfg = replace(cfg, source=str(path))
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for name, items in layer.items():
            if name not in _SECTIONS:
                raise ConfigError(f"unknown config section [{name}]")
            cfg = replace(cfg, **{name: _apply(getattr(cfg, name), name, items)})
    return cfg


def to_ini(cfg: Config) -> str:
    lines = []
    for name, values in cfg.to_dict().items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {'' if v is None else v}" for k, v in values.items()]
        lines.append("")
    return "\n".join(lines)
