"""Preloaded, trigger-started voltage sequences and update-rate budgeting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .analog import AnalogParams
from .codec import (B10, DEFAULT_CONVENTION, MappingConvention, OutputRange, as_fraction,
                    code_to_voltage, voltage_to_code)
from .errors import InvalidProgram, OutOfRange, RateInfeasible
from .registers import DEFAULT_REGISTER_MAP, RegisterMap
from .spi import FRAME_BITS, HEADER_BITS, WORD_BITS, LinkConfig

GATEWARE_HZ = 10_000_000
TICK_NS = 1_000_000_000 // GATEWARE_HZ
PROGRAM_HEADER = "vanguard-wave v1"


class PlaybackMode(enum.Enum):
    PER_STEP_ASYNC = "PerStepAsync"
    STAGED_SYNC = "StagedSync"


class UpdateMode(enum.Enum):
    INDIVIDUAL = "individual"
    STREAMING = "streaming"


@dataclass(frozen=True)
class Step:
    offset: int  # gateware ticks after the trigger edge
    dac: int
    addr: int
    code: int


@dataclass(frozen=True)
class WaveformProgram:
    steps: tuple
    mode: PlaybackMode = PlaybackMode.PER_STEP_ASYNC

    def __post_init__(self):
        steps = tuple(self.steps)
        object.__setattr__(self, "steps", steps)
        prev = 0
        for s in steps:
            if s.offset < prev:
                raise InvalidProgram(f"step offsets decrease at tick {s.offset}")
            if s.offset < 0 or s.dac not in (0, 1) or not 0 <= s.code <= 0xFFFF:
                raise InvalidProgram(f"bad step {s}")
            prev = s.offset

    def __len__(self):
        return len(self.steps)

    @property
    def span_ticks(self) -> int:
        return self.steps[-1].offset if self.steps else 0

    def to_text(self) -> str:
        lines = [PROGRAM_HEADER]
        if self.mode is not PlaybackMode.PER_STEP_ASYNC:
            lines.append(f"mode {self.mode.value}")
        lines += [f"{s.offset} {s.dac} {s.addr:02X} {s.code:04X}" for s in self.steps]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "WaveformProgram":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != PROGRAM_HEADER:
            raise InvalidProgram(f"missing '{PROGRAM_HEADER}' header")
        mode = PlaybackMode.PER_STEP_ASYNC
        steps = []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "mode":
                mode = PlaybackMode(parts[1])
                continue
            if len(parts) != 4:
                raise InvalidProgram(f"bad program line {ln!r}")
            tick, dac, addr, code = parts
            steps.append(Step(int(tick), int(dac), int(addr, 16), int(code, 16)))
        return cls(tuple(steps), mode)


def transaction_ticks(link: LinkConfig, bits: int = FRAME_BITS) -> int:
    """Gateware ticks one SPI transaction occupies, rounded up."""
    exact = Fraction(bits + link.gap_bits) * GATEWARE_HZ / Fraction(link.sclk_hz)
    return math.ceil(exact)


@dataclass(frozen=True)
class RampSpec:
    channel: int
    v_start: float
    v_end: float
    duration: float
    n_points: int
    dac: int = 0

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a ramp needs at least two points")
        if not self.duration > 0:
            raise ValueError("ramp duration must be positive")


def generate_ramp(spec: RampSpec, rng: OutputRange = B10,
                  conv: MappingConvention = DEFAULT_CONVENTION,
                  link: LinkConfig = LinkConfig(),
                  regmap: RegisterMap = DEFAULT_REGISTER_MAP) -> WaveformProgram:
    """Linear-in-volts ramp, quantized per point, uniformly spaced in ticks.

    The first point fires at the trigger and the last at ``duration``.
    """
    v0, v1 = as_fraction(spec.v_start), as_fraction(spec.v_end)
    for v in (v0, v1):
        if not rng.low <= v <= rng.high:
            raise OutOfRange(f"{float(v)} V outside the configured range")
    if spec.n_points * link.frame_time() > spec.duration:
        raise RateInfeasible(
            f"{spec.n_points} updates need {spec.n_points * link.frame_time() * 1e6:.1f} us, "
            f"ramp lasts {spec.duration * 1e6:.1f} us")
    total_ticks = as_fraction(spec.duration) * GATEWARE_HZ
    n = spec.n_points
    addr = regmap.dac(spec.channel)
    steps = []
    for k in range(n):
        v = v0 + (v1 - v0) * Fraction(k, n - 1)
        tick = round(total_ticks * Fraction(k, n - 1))
        steps.append(Step(tick, spec.dac, addr, voltage_to_code(v, rng, conv)))
    min_gap = transaction_ticks(link)
    for a, b in zip(steps, steps[1:]):
        if b.offset - a.offset < min_gap:
            raise RateInfeasible(f"steps {a.offset} and {b.offset} closer than {min_gap} ticks")
    return WaveformProgram(tuple(steps))


@dataclass
class ValidationReport:
    spacing_violations: list = field(default_factory=list)
    slew_warnings: list = field(default_factory=list)
    filter_warnings: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.spacing_violations or self.slew_warnings or self.filter_warnings)

    @property
    def loadable(self) -> bool:
        return not self.spacing_violations


def validate(program: WaveformProgram, analog: AnalogParams = AnalogParams(),
             link: LinkConfig = LinkConfig(), ranges: Sequence[OutputRange] = (B10, B10),
             conv: MappingConvention = DEFAULT_CONVENTION) -> ValidationReport:
    report = ValidationReport()
    min_gap = transaction_ticks(link)
    last_on_dev: dict[int, Step] = {}
    last_on_ch: dict[tuple, Step] = {}
    tick_s = 1.0 / GATEWARE_HZ
    for s in program.steps:
        prev = last_on_dev.get(s.dac)
        if prev is not None and s.offset - prev.offset < min_gap:
            report.spacing_violations.append((prev, s))
        last_on_dev[s.dac] = s
        key = (s.dac, s.addr)
        prev = last_on_ch.get(key)
        if prev is not None:
            interval = (s.offset - prev.offset) * tick_s
            dv = abs(float(code_to_voltage(s.code, ranges[s.dac], conv)
                           - code_to_voltage(prev.code, ranges[s.dac], conv)))
            if dv and (interval == 0 or dv / interval > analog.slew_v_per_s):
                report.slew_warnings.append((prev, s))
            if dv and interval < analog.tau:
                report.filter_warnings.append((prev, s))
        last_on_ch[key] = s
    return report


def max_update_rate(link: LinkConfig = LinkConfig(), mode: UpdateMode | str = UpdateMode.INDIVIDUAL,
                    channels: int = 16) -> float:
    """Channel updates per second one device's link sustains."""
    mode = UpdateMode(mode)
    if mode is UpdateMode.INDIVIDUAL:
        return link.sclk_hz / (FRAME_BITS + link.gap_bits)
    if channels < 1:
        raise ValueError("streaming needs at least one channel")
    return link.sclk_hz * channels / (HEADER_BITS + WORD_BITS * channels + link.gap_bits)

