"""Characterization campaigns: sweep, staircase, PSD, transient, noise budget, throughput."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..analog import Spectrum, Waveform, estimate_psd, johnson_noise_density, measure_slew
from ..codec import OutputRange, code_to_voltage, lsb_size, voltage_to_code
from ..spi import LinkConfig
from ..waveform import UpdateMode, max_update_rate
from .backends import Backend

SCHEMA_PREFIX = "vanguard"
HIL_SLEW_V_PER_US = 1.76  # hardware-in-the-loop slew reference
DEFAULT_SWEEP_CODES = (0x0000, 0x4000, 0x7FFF, 0x8000, 0xC000, 0xFFFF)


def bank_channels() -> list[tuple[int, int]]:
    """One channel from each bank of four on both DACs."""
    return [(dac, 4 * bank) for dac in (0, 1) for bank in range(4)]


def _schema(kind: str) -> str:
    return f"{SCHEMA_PREFIX}.{kind}.v1"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _range(backend: Backend) -> OutputRange:
    return OutputRange.from_code(backend.config.range_code)


@dataclass
class MeasurementRecord:
    dac: int
    channel: int
    code: int
    v_target: float
    v_measured: float | None = None
    v_min: float | None = None
    v_max: float | None = None

    def __post_init__(self):
        if self.v_measured is not None and not self.v_min <= self.v_measured <= self.v_max:
            raise ValueError("v_measured outside [v_min, v_max]")

    @property
    def delta_v(self) -> float | None:
        return None if self.v_measured is None else self.v_measured - self.v_target


RECORD_HEADER = ("dac", "channel", "code", "v_target", "v_measured", "v_min", "v_max", "delta_v")


def records_csv(records: Sequence[MeasurementRecord]) -> str:
    return _csv(RECORD_HEADER, ((r.dac, r.channel, f"{r.code:04X}", r.v_target, r.v_measured,
                                 r.v_min, r.v_max, r.delta_v) for r in records))


def _measure(backend: Backend, dac: int, ch: int, code: int, window: int, dt: float):
    rng = _range(backend)
    v_target = float(code_to_voltage(code, rng, backend.config.convention))
    backend.set_code(dac, ch, code)
    backend.settle()
    samples = backend.sample(dac, ch, window, dt)
    if samples is None:
        return MeasurementRecord(dac, ch, code, v_target)
    lo, hi = float(np.min(samples)), float(np.max(samples))
    # summation rounding can push the mean of a flat record an ulp past its extremes
    mean = min(max(float(np.mean(samples)), lo), hi)
    return MeasurementRecord(dac, ch, code, v_target, mean, lo, hi)


# -- sweep -------------------------------------------------------------------

def run_sweep(backend: Backend, channels: Sequence[tuple[int, int]] | None = None,
              codes: Sequence[int] = DEFAULT_SWEEP_CODES, window: int | None = None,
              dt: float | None = None) -> list[MeasurementRecord]:
    channels = bank_channels() if channels is None else list(channels)
    window = backend.config.window if window is None else window
    dt = backend.config.sample_dt if dt is None else dt
    backend.bring_up()
    records = []
    for dac, ch in channels:
        for code in codes:
            records.append(_measure(backend, dac, ch, code, window, dt))
    return records


def sweep_summary(records: Sequence[MeasurementRecord]) -> dict:
    measured = [r for r in records if r.v_measured is not None]
    out = {"schema": _schema("sweep"), "records": len(records), "measured": len(measured)}
    if measured:
        out["max_abs_delta_v"] = max(abs(r.delta_v) for r in measured)
        out["max_spread_v"] = max(r.v_max - r.v_min for r in measured)
    return out


# -- staircase ---------------------------------------------------------------

@dataclass
class StaircaseResult:
    codes: list
    levels: dict                      # dac -> list of measured volts (or None)
    increments: dict = field(default_factory=dict)
    mean_increment: dict = field(default_factory=dict)
    std_increment: dict = field(default_factory=dict)
    lsb: float = 0.0
    inter_device_offset: float | None = None

    def to_csv(self) -> str:
        rows = []
        for dac, levels in self.levels.items():
            incs = self.increments.get(dac) or []
            for i, (code, v) in enumerate(zip(self.codes, levels)):
                rows.append((dac, f"{code:04X}", v, incs[i - 1] if i and incs else None))
        return _csv(("dac", "code", "v_measured", "increment"), rows)

    def summary(self) -> dict:
        return {
            "schema": _schema("staircase"),
            "codes": [f"{c:04X}" for c in (self.codes[0], self.codes[-1])],
            "lsb_v": self.lsb,
            "mean_increment_v": {str(k): v for k, v in self.mean_increment.items()},
            "std_increment_v": {str(k): v for k, v in self.std_increment.items()},
            "inter_device_offset_v": self.inter_device_offset,
        }


def run_staircase(backend: Backend, channel: int = 0, code_lo: int = 0x7FFF,
                  code_hi: int = 0x8005, dacs: Sequence[int] = (0, 1),
                  window: int | None = None, dt: float | None = None) -> StaircaseResult:
    """Step one channel (per DAC) through consecutive codes and difference the levels.

    With both DACs listed, the mean level difference dac1 - dac0 is reported
    as the inter-device offset.
    """
    if code_hi <= code_lo:
        raise ValueError("code_hi must exceed code_lo")
    window = backend.config.window if window is None else window
    dt = backend.config.sample_dt if dt is None else dt
    backend.bring_up()
    codes = list(range(code_lo, code_hi + 1))
    result = StaircaseResult(codes, {}, lsb=float(lsb_size(_range(backend), backend.config.convention)))
    for dac in dacs:
        levels = [_measure(backend, dac, channel, c, window, dt).v_measured for c in codes]
        result.levels[dac] = levels
        if levels[0] is not None:
            inc = np.diff(levels)
            result.increments[dac] = [float(x) for x in inc]
            result.mean_increment[dac] = float(np.mean(inc))
            result.std_increment[dac] = float(np.std(inc, ddof=1)) if len(inc) > 1 else 0.0
    if 0 in result.increments and 1 in result.increments:
        result.inter_device_offset = float(np.mean(np.subtract(result.levels[1], result.levels[0])))
    return result


# -- psd ---------------------------------------------------------------------

def run_psd(backend: Backend, dac: int = 0, channel: int = 0, rbw: float = 10.0,
            fs: float = 20_000.0, segments: int = 4096, code: int | None = None,
            band: tuple[float, float | None] = (2.0, None), ground: bool = False) -> Spectrum | None:
    """Output-noise spectrum of one channel held at ``code`` (default -10 V).

    ``ground=True`` measures the board-ground reference instead, for
    subtraction from channel runs taken with the same settings.
    """
    if not backend.measures:
        backend.bring_up()
        backend.set_code(dac, channel, 0x0000 if code is None else code)
        return None
    dt = 1.0 / fs
    nperseg = int(round(fs / rbw))
    n = nperseg * (segments + 1) // 2  # segments half-overlapped windows
    backend.bring_up()
    backend.set_code(dac, channel, 0x0000 if code is None else code)
    backend.settle()
    x = backend.sample_ground(n, dt) if ground else backend.sample(dac, channel, n, dt)
    spec = estimate_psd(Waveform(0.0, dt, x), rbw)
    f_hi = band[1] if band[1] is not None else fs / 2
    return spec.band(band[0], f_hi)


def psd_summary(spec: Spectrum | None, rbw: float) -> dict:
    out = {"schema": _schema("psd"), "rbw_hz": rbw}
    if spec is not None and len(spec.psd):
        out.update(bins=len(spec.psd), f_lo_hz=float(spec.freqs[0]), f_hi_hz=float(spec.freqs[-1]),
                   mean_psd_v2hz=float(np.mean(spec.psd)), max_psd_v2hz=float(np.max(spec.psd)))
    return out


# -- transient ---------------------------------------------------------------

@dataclass
class TransientResult:
    waveform: Waveform | None
    slew_v_per_us: float | None
    monitor_channel: tuple
    monitor_max_deviation: float | None
    hil_reference_v_per_us: float = HIL_SLEW_V_PER_US
    definition: str = "10-90"

    def summary(self) -> dict:
        rel = None
        if self.slew_v_per_us is not None:
            rel = (self.slew_v_per_us - self.hil_reference_v_per_us) / self.hil_reference_v_per_us
        return {
            "schema": _schema("transient"),
            "slew_v_per_us": self.slew_v_per_us,
            "slew_definition": self.definition,
            "reference_v_per_us": self.hil_reference_v_per_us,
            "relative_to_reference": rel,
            "monitor_channel": list(self.monitor_channel),
            "monitor_max_deviation_v": self.monitor_max_deviation,
        }


def run_transient(backend: Backend, dac: int = 0, channel: int = 0, code_from: int = 0x0000,
                  code_to: int = 0xFFFF, dt: float = 1e-8, duration: float = 30e-6,
                  monitor: tuple[int, int] | None = None, monitor_volts: float = 1.0,
                  lo_frac: float = 0.10, hi_frac: float = 0.90) -> TransientResult:
    """Full-range step on one channel while a neighbour holds ``monitor_volts``."""
    monitor = (dac, (channel + 1) % 16) if monitor is None else tuple(monitor)
    rng = _range(backend)
    conv = backend.config.convention
    mon_code = voltage_to_code(monitor_volts, rng, conv)
    mon_expected = float(code_to_voltage(mon_code, rng, conv)) + backend.config.analog[monitor[0]].offset
    definition = f"{round(lo_frac * 100)}-{round(hi_frac * 100)}"
    backend.bring_up()
    backend.set_code(*monitor, mon_code)
    backend.set_code(dac, channel, code_from)
    backend.settle()
    wave, mon = backend.step_and_capture(dac, channel, code_to, duration, dt, monitor)
    if wave is None:
        return TransientResult(None, None, monitor, None, definition=definition)
    slew = measure_slew(wave, lo_frac, hi_frac)
    deviation = float(np.max(np.abs(mon.samples - mon_expected)))
    return TransientResult(wave, slew, monitor, deviation, definition=definition)


# -- noise budget ------------------------------------------------------------

@dataclass(frozen=True)
class NoiseRow:
    resistance_ohm: float
    temperature_k: float
    density_v_rthz: float
    bandwidth_hz: float
    rms_v: float


def run_noise_budget(resistances: Sequence[float], temperature: float = 300.0,
                     bandwidth: float = 1000.0) -> list[NoiseRow]:
    rows = []
    for r in resistances:
        d = johnson_noise_density(r, temperature)
        rows.append(NoiseRow(float(r), float(temperature), d, float(bandwidth),
                             d * math.sqrt(bandwidth)))
    return rows


def noise_csv(rows: Sequence[NoiseRow]) -> str:
    header = ("resistance_ohm", "temperature_k", "density_v_rthz", "bandwidth_hz", "rms_v")
    return _csv(header, (tuple(asdict(r).values()) for r in rows))


# -- throughput --------------------------------------------------------------

@dataclass(frozen=True)
class LinkCase:
    link: LinkConfig
    mode: UpdateMode = UpdateMode.INDIVIDUAL
    channels: int = 16

    @classmethod
    def parse(cls, text: str) -> "LinkCase":
        """``SCLK[:individual|streaming[:K]][:gapN]``, e.g. ``10e6:streaming:16``."""
        parts = text.split(":")
        sclk = float(parts[0])
        mode = UpdateMode.INDIVIDUAL
        channels = 16
        gap = 0
        for p in parts[1:]:
            if p in ("individual", "streaming"):
                mode = UpdateMode(p)
            elif p.startswith("gap"):
                gap = int(p[3:])
            else:
                channels = int(p)
        return cls(LinkConfig(sclk, gap), mode, channels)


@dataclass(frozen=True)
class ThroughputRow:
    sclk_hz: float
    mode: str
    channels: int
    gap_bits: int
    updates_per_s: float
    filter_cutoff_hz: float
    bottleneck: str


def run_throughput(cases: Sequence[LinkCase], filter_cutoff_hz: float = 48_220.0) -> list[ThroughputRow]:
    rows = []
    for case in cases:
        rate = max_update_rate(case.link, case.mode, case.channels)
        rows.append(ThroughputRow(case.link.sclk_hz, case.mode.value,
                                  case.channels if case.mode is UpdateMode.STREAMING else 1,
                                  case.link.gap_bits, rate, filter_cutoff_hz,
                                  "filter" if rate > filter_cutoff_hz else "link"))
    return rows


def throughput_csv(rows: Sequence[ThroughputRow]) -> str:
    header = ("sclk_hz", "mode", "channels", "gap_bits", "updates_per_s", "filter_cutoff_hz",
              "bottleneck")
    return _csv(header, (tuple(asdict(r).values()) for r in rows))


DEFAULT_LINK_CASES = ("10e6:individual", "10e6:streaming:16", "50e6:individual", "50e6:streaming:16")
