"""Flat ``key = value`` configuration for harness runs.

Analog keys apply to both DACs unless prefixed ``dac0.`` / ``dac1.``;
``regmap.NAME = 0x..`` overrides a register address::

    # bench defaults
    noise_density = 1e-8
    dac1.offset = 1.07e-3
    sclk_hz = 10e6
    regmap.TRIGGER = 0x0E
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..analog import AnalogParams
from ..codec import MappingConvention, RangeCode
from ..registers import DEFAULT_REGISTER_MAP, RegisterMap
from ..spi import LinkConfig

_ANALOG_FIELDS = {f.name: f.type for f in dataclasses.fields(AnalogParams)}


@dataclass
class HarnessConfig:
    analog: tuple = (AnalogParams(), AnalogParams())
    link: LinkConfig = LinkConfig()
    baud: int = 115200
    convention: MappingConvention = MappingConvention.ENDPOINT_INCLUSIVE
    range_code: RangeCode = RangeCode.B10
    regmap: RegisterMap = DEFAULT_REGISTER_MAP
    memory_budget: int = 4096
    settle_us: float = 200.0
    window: int = 10_000
    sample_dt: float = 1e-6


def _coerce(value: str, kind):
    kind = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    if kind == "bool":
        return value.strip().lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(value, 0)
    return float(value)


def parse_config(text: str) -> HarnessConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[root]\n" + text)
    items = dict(parser["root"])

    shared = {}
    per_dac = [{}, {}]
    regmap_overrides = {}
    link_kw = {}
    cfg = HarnessConfig()
    for key, value in items.items():
        if key.startswith("regmap."):
            regmap_overrides[key[len("regmap."):]] = int(value, 0)
        elif key.startswith(("dac0.", "dac1.")):
            name = key[5:]
            if name not in _ANALOG_FIELDS:
                raise ValueError(f"unknown analog key {key!r}")
            per_dac[int(key[3])][name] = _coerce(value, _ANALOG_FIELDS[name])
        elif key in _ANALOG_FIELDS:
            shared[key] = _coerce(value, _ANALOG_FIELDS[key])
        elif key == "sclk_hz":
            link_kw["sclk_hz"] = float(value)
        elif key == "gap_bits":
            link_kw["gap_bits"] = int(value, 0)
        elif key == "baud":
            cfg.baud = int(value, 0)
        elif key == "convention":
            cfg.convention = MappingConvention(value.strip())
        elif key == "range":
            cfg.range_code = RangeCode(value.strip())
        elif key == "memory_budget":
            cfg.memory_budget = int(value, 0)
        elif key == "settle_us":
            cfg.settle_us = float(value)
        elif key == "window":
            cfg.window = int(value, 0)
        elif key == "sample_dt":
            cfg.sample_dt = float(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    # per-device keys win over shared ones regardless of file order
    cfg.analog = tuple(AnalogParams(**{**shared, **d}) for d in per_dac)
    cfg.link = LinkConfig(**link_kw)
    if regmap_overrides:
        cfg.regmap = DEFAULT_REGISTER_MAP.replace(**regmap_overrides)
    return cfg


def load_config(path: str | Path | None) -> HarnessConfig:
    if path is None:
        return HarnessConfig()
    return parse_config(Path(path).read_text())
