"""Per-channel analog output: slew limiter -> first-order RC -> offset + noise.

Time is in seconds and voltages in volts throughout; ``slew_rate`` is the one
field kept in V/us, matching how datasheets quote it.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import LevelsNotCrossed, StepTooLarge, TooShort

BOLTZMANN = 1.380649e-23

# residual below which the filter output is taken to have reached its input
SNAP_V = 1e-15
# slew-limiter rounding residual treated as arrival
SNAP_PRE_V = 1e-12


@dataclass(frozen=True)
class AnalogParams:
    slew_rate: float = 4.0            # V/us
    settle_time: float = 12.0         # us, datasheet settling (pre-filter)
    rc_cutoff_hz: float = 48_220.0
    noise_density: float = 0.0        # V/sqrt(Hz), white, added at the probe
    noise_band: float = 0.0           # V, clip probe noise to +/- band when > 0
    flicker_corner_hz: float = 0.0    # 1/f corner for generated noise records, 0 = off
    dnl_halflsb: bool = False
    dnl_seed: int = 0
    offset: float = 0.0               # V, per-device constant
    ref_drift_ppm_per_C: float = 5.0
    temp_delta_C: float = 0.0
    ambient_K: float = 300.0

    @property
    def tau(self) -> float:
        return 1.0 / (2.0 * math.pi * self.rc_cutoff_hz)

    @property
    def slew_v_per_s(self) -> float:
        return self.slew_rate * 1e6

    @property
    def gain(self) -> float:
        """Reference-drift gain; exactly 1 unless a temperature delta is set."""
        if not self.temp_delta_C:
            return 1.0
        return 1.0 + self.ref_drift_ppm_per_C * 1e-6 * self.temp_delta_C

    def probe_sigma(self, dt: float) -> float:
        return self.noise_density * math.sqrt(1.0 / (2.0 * dt))


def dnl_error(code: int, seed: int, lsb: float) -> float:
    """Deterministic per-code level error in [-LSB/4, +LSB/4].

    Adjacent levels then differ by LSB +/- LSB/2, i.e. DNL within +/-0.5 LSB.
    """
    return _dnl_unit(code, seed) * lsb


@lru_cache(maxsize=1 << 17)
def _dnl_unit(code: int, seed: int) -> float:
    rng = np.random.default_rng([seed, code])
    return float(rng.uniform(-0.25, 0.25))


@dataclass
class AnalogChannelState:
    target: float = 0.0
    pre_filter: float = 0.0
    out: float = 0.0
    params: AnalogParams = field(default_factory=AnalogParams)

    @classmethod
    def steady(cls, v: float, params: AnalogParams) -> "AnalogChannelState":
        return cls(v, v, v, params)

    @property
    def settled(self) -> bool:
        return self.pre_filter == self.target and self.out == self.target

    def advance(self, h: float) -> "AnalogChannelState":
        """Exact evolution over ``h`` seconds for a piecewise-linear drive."""
        if h < 0:
            raise ValueError("cannot advance by a negative time")
        if h == 0 or self.settled:
            return replace(self)
        tau = self.params.tau
        p, y, tgt = self.pre_filter, self.out, self.target
        remaining = h
        if p != tgt:
            s = self.params.slew_v_per_s
            t_ramp = abs(tgt - p) / s if math.isfinite(s) else 0.0
            if t_ramp >= remaining:
                r = math.copysign(s, tgt - p)
                p_end = p + r * remaining
                if abs(tgt - p_end) < SNAP_PRE_V or (tgt - p_end) * (tgt - p) <= 0:
                    p_end = tgt
                y = _ramp_rc(y, p, p_end, r, remaining, tau)
                p = p_end
                remaining = 0.0
            else:
                if t_ramp > 0:
                    r = math.copysign(s, tgt - p)
                    y = _ramp_rc(y, p, tgt, r, t_ramp, tau)
                p = tgt
                remaining -= t_ramp
        if remaining > 0:
            y_prev = y
            y = p + (y - p) * math.exp(-remaining / tau)
            # a decay step that no longer moves y has hit float resolution at this level
            if p == tgt and y == y_prev:
                y = tgt
        if p == tgt and abs(y - tgt) < SNAP_V:
            y = tgt
        return AnalogChannelState(tgt, p, y, self.params)

    def probe(self, dt: float = 1e-6, rng: np.random.Generator | None = None) -> float:
        """Observed voltage: filter output plus offset plus probe noise."""
        v = self.out + self.params.offset
        if rng is not None and self.params.noise_density > 0:
            v += _probe_noise(self.params, dt, rng, 1)[0]
        return v


def _ramp_rc(y0: float, p0: float, p1: float, r: float, h: float, tau: float) -> float:
    # RC response to a linear input p(t) = p0 + r t over [0, h]
    return p1 - r * tau + (y0 - p0 + r * tau) * math.exp(-h / tau)


def _probe_noise(params: AnalogParams, dt: float, rng: np.random.Generator, n: int) -> np.ndarray:
    noise = rng.normal(0.0, params.probe_sigma(dt), n)
    if params.noise_band > 0:
        np.clip(noise, -params.noise_band, params.noise_band, out=noise)
    return noise


def noise_record(params: AnalogParams, n: int, dt: float,
                 rng: np.random.Generator) -> np.ndarray:
    """``n`` probe-noise samples; optional 1/f shaping below the corner."""
    if params.noise_density <= 0:
        return np.zeros(n)
    if params.flicker_corner_hz <= 0:
        return _probe_noise(params, dt, rng, n)
    white = rng.normal(0.0, params.probe_sigma(dt), n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, dt)
    f[0] = f[1] if n > 1 else 1.0
    spec *= np.sqrt(1.0 + params.flicker_corner_hz / f)
    noise = np.fft.irfft(spec, n)
    if params.noise_band > 0:
        np.clip(noise, -params.noise_band, params.noise_band, out=noise)
    return noise


def step_channel(ch: AnalogChannelState, dt: float) -> AnalogChannelState:
    """One integrator step; ``dt`` may not exceed a tenth of the RC constant."""
    if dt > ch.params.tau / 10:
        raise StepTooLarge(f"dt={dt:g} s exceeds tau/10={ch.params.tau / 10:g} s")
    return ch.advance(dt)


@dataclass(frozen=True)
class Waveform:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    def __neg__(self) -> "Waveform":
        return Waveform(self.t0, self.dt, -self.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "volts"])
        for t, v in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Waveform":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["t_s", "volts"]:
            raise ValueError(f"unexpected waveform header {rows[0]}")
        t = np.array([float(r[0]) for r in rows[1:]])
        v = np.array([float(r[1]) for r in rows[1:]])
        dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
        return cls(float(t[0]), dt, v)


def simulate_transition(params: AnalogParams, v_from: float, v_to: float, duration: float,
                        dt: float, rng: np.random.Generator | None = None) -> Waveform:
    """Time-stepped response to a step of the target from ``v_from`` to ``v_to``."""
    if duration < 10 * params.tau:
        raise ValueError(f"duration {duration:g} s shorter than 10 tau")
    if dt > params.tau / 10:
        raise StepTooLarge(f"dt={dt:g} s exceeds tau/10")
    n = int(round(duration / dt))
    ch = AnalogChannelState.steady(v_from, params)
    ch.target = v_to
    out = np.empty(n + 1)
    out[0] = ch.out
    for k in range(1, n + 1):
        ch = step_channel(ch, dt)
        out[k] = ch.out
    out += params.offset
    if rng is not None and params.noise_density > 0:
        out += _probe_noise(params, dt, rng, n + 1)
    return Waveform(0.0, dt, out)


def _crossing(t: np.ndarray, v: np.ndarray, level: float, rising: bool) -> float:
    above = v >= level if rising else v <= level
    idx = np.flatnonzero(above)
    if len(idx) == 0:
        raise LevelsNotCrossed(f"waveform never reaches {level:g} V")
    k = int(idx[0])
    if k == 0:
        return float(t[0])
    v0, v1 = v[k - 1], v[k]
    return float(t[k - 1] + (level - v0) / (v1 - v0) * (t[k] - t[k - 1]))


def measure_slew(w: Waveform, lo_frac: float = 0.10, hi_frac: float = 0.90) -> float:
    """Average slew in V/us between two fractional crossing levels."""
    v = w.samples
    v_start, v_end = float(v[0]), float(v[-1])
    step = v_end - v_start
    if step == 0:
        raise LevelsNotCrossed("waveform has no net transition")
    lo = v_start + lo_frac * step
    hi = v_start + hi_frac * step
    rising = step > 0
    t = w.times
    t_lo = _crossing(t, v, lo, rising)
    t_hi = _crossing(t, v, hi, rising)
    if t_hi <= t_lo:
        raise LevelsNotCrossed("crossings out of order")
    return abs(hi - lo) / (t_hi - t_lo) / 1e6


def johnson_noise_density(resistance: float, temperature: float) -> float:
    """Thermal noise density in V/sqrt(Hz)."""
    if resistance < 0 or temperature < 0:
        raise ValueError("resistance and temperature must be non-negative")
    return math.sqrt(4.0 * BOLTZMANN * temperature * resistance)


def filter_response(params: AnalogParams, f: float) -> tuple[float, float]:
    """Magnitude (dB) and phase (degrees) of the output RC stage."""
    if f <= 0:
        raise ValueError("frequency must be positive")
    h = 1.0 / (1.0 + 1j * f / params.rc_cutoff_hz)
    return 20.0 * math.log10(abs(h)), math.degrees(math.atan2(h.imag, h.real))


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    psd: np.ndarray

    def band(self, f_lo: float, f_hi: float) -> "Spectrum":
        keep = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return Spectrum(self.freqs[keep], self.psd[keep])

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        if not np.array_equal(self.freqs, other.freqs):
            raise ValueError("spectra have different frequency grids")
        return Spectrum(self.freqs, self.psd - other.psd)

    def to_csv(self) -> str:
        lines = ["f_hz,psd_v2hz"]
        lines += [f"{float(f)!r},{float(p)!r}" for f, p in zip(self.freqs, self.psd)]
        return "\n".join(lines) + "\n"


def estimate_psd(w: Waveform, rbw: float = 10.0, window: str = "hann",
                 overlap: float = 0.5) -> Spectrum:
    """One-sided averaged-periodogram (Welch) PSD in V^2/Hz.

    Segments are ``1/(rbw*dt)`` samples long, so bins are spaced ``rbw``
    apart; the mean of each segment is removed.
    """
    nperseg = int(round(1.0 / (rbw * w.dt)))
    if nperseg < 2 or len(w.samples) < 2 * nperseg:
        raise TooShort(f"{len(w.samples)} samples; need at least {2 * max(nperseg, 2)}")
    f, p = signal.welch(w.samples, fs=1.0 / w.dt, window=window, nperseg=nperseg,
                        noverlap=int(nperseg * overlap), detrend="constant",
                        scaling="density", return_onesided=True)
    return Spectrum(f, p)
