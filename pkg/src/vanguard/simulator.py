"""Deterministic discrete-event twin of the two-DAC module.

Everything is timestamped in integer nanoseconds on a 10 MHz gateware grid
derived from the 50 MHz board oscillator. Events at the same instant run in
the order they were scheduled.
"""
from __future__ import annotations

import enum
import heapq
import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .analog import AnalogChannelState, AnalogParams, Waveform, dnl_error, noise_record, step_channel
from .codec import DEFAULT_CONVENTION, MappingConvention, code_to_voltage, lsb_size
from .errors import InvalidProgram, ProgramTooLarge, RegisterError
from .registers import (DEFAULT_REGISTER_MAP, HIGH_Z, N_CHANNELS, TRIG_LDAC, DacRegisterFile,
                        RegisterMap)
from .spi import FRAME_BITS, LinkConfig, SpiFrame, apply_frame, encode_read, encode_write
from .uart import (PACKET_LEN, REPLY_DAC1, REPLY_ERROR, REPLY_TEMP_ALARM, LoadWaveformWord, ReadReg,
                   Reply, Trigger, WriteReg, command_parser, encode_reply)
from .waveform import (GATEWARE_HZ, TICK_NS, PlaybackMode, Step, WaveformProgram,
                       transaction_ticks, validate)

OSC_HZ = 50_000_000
N_DACS = 2
DEFAULT_MEMORY_BUDGET = 4096


@dataclass
class SimClock:
    now: int = 0  # ns since reset
    osc_hz: int = OSC_HZ
    gateware_hz: int = GATEWARE_HZ

    @property
    def period_ns(self) -> int:
        return 1_000_000_000 // self.gateware_hz

    def quantize(self, t_ns: int) -> int:
        """Round up to the next gateware edge."""
        p = self.period_ns
        return -(-int(t_ns) // p) * p


class EventKind(enum.Enum):
    UART_BYTES = "UART"
    TRIGGER_EDGE = "TRIG"
    CLOCK_ADVANCE = "ADV"
    PROBE_SAMPLE = "PROBE"


@dataclass(frozen=True)
class SimEvent:
    at: int
    kind: EventKind
    payload: bytes = b""

    def to_line(self) -> str:
        return f"{self.at} {self.kind.value} {self.payload.hex().upper() or '-'}"

    @classmethod
    def from_line(cls, line: str) -> "SimEvent":
        t, kind, payload = line.split()
        return cls(int(t), EventKind(kind), b"" if payload == "-" else bytes.fromhex(payload))


@dataclass(frozen=True)
class TraceRecord:
    t_ns: int
    kind: str
    payload: bytes

    def to_line(self) -> str:
        return f"{self.t_ns} {self.kind} {self.payload.hex().upper() or '-'}"


def trace_text(records: Iterable[TraceRecord]) -> str:
    return "".join(r.to_line() + "\n" for r in records)


def load_event_log(text: str) -> list[SimEvent]:
    return [SimEvent.from_line(ln) for ln in text.splitlines() if ln.strip()]


def dump_event_log(events: Iterable[SimEvent]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


@dataclass
class SimStats:
    uart_errors: list = field(default_factory=list)
    register_errors: list = field(default_factory=list)
    program_errors: list = field(default_factory=list)
    spi_transactions: list = field(default_factory=lambda: [0, 0])
    triggers: int = 0
    triggers_ignored: int = 0
    triggers_noop: int = 0


class SomSimulator:
    def __init__(self, analog: Sequence[AnalogParams] = (AnalogParams(), AnalogParams()),
                 link: LinkConfig = LinkConfig(), conv: MappingConvention = DEFAULT_CONVENTION,
                 regmap: RegisterMap = DEFAULT_REGISTER_MAP,
                 memory_budget: int = DEFAULT_MEMORY_BUDGET, uart_latency: bool = False,
                 baud: int = 115200, seed: int = 0):
        if len(analog) != N_DACS:
            raise ValueError("one AnalogParams per DAC")
        self.analog_params = tuple(analog)
        self.link = link
        self.conv = conv
        self.regmap = regmap
        self.memory_budget = memory_budget
        self.uart_latency = uart_latency
        self.baud = baud
        self.rng = np.random.default_rng(seed)

        self.clock = SimClock()
        self.parser = command_parser()
        self.dacs = [DacRegisterFile(regmap=regmap) for _ in range(N_DACS)]
        self.spi_busy_until = [0] * N_DACS
        self.trigger_pin = False
        self.program: WaveformProgram | None = None
        self.stats = SimStats()
        self.trace: list[TraceRecord] = []

        self._queue: list = []
        self._seq = itertools.count()
        self._uart_tx = bytearray()
        self._upload: list[Step] = []
        self._upload_cursor = 0
        self._playback_pending = 0
        self._group_pending: dict[int, int] = {}
        # None marks a high-impedance (powered-down) channel
        self.channels = [[None] * N_CHANNELS for _ in range(N_DACS)]
        self._channel_t = [[0] * N_CHANNELS for _ in range(N_DACS)]

    # -- clock & queue -------------------------------------------------------

    @property
    def now(self) -> int:
        return self.clock.now

    @property
    def playback_active(self) -> bool:
        return self._playback_pending > 0

    def _push(self, at: int, handler: str, *args) -> None:
        heapq.heappush(self._queue, (at, next(self._seq), handler, args))

    def _check_time(self, at: int) -> int:
        at = self.clock.quantize(at)
        if at < self.now:
            raise ValueError(f"event at {at} ns is before now={self.now} ns")
        return at

    def schedule(self, event: SimEvent) -> None:
        if event.kind is EventKind.UART_BYTES:
            self.ingest_uart(event.at, event.payload)
        elif event.kind is EventKind.TRIGGER_EDGE:
            self.pulse_trigger(event.at)
        elif event.kind is EventKind.PROBE_SAMPLE:
            self.probe(event.at, event.payload[0], event.payload[1])
        else:
            self._push(self._check_time(event.at), "_on_advance")

    def run_until(self, t_end: int) -> list[TraceRecord]:
        if t_end < self.now:
            raise ValueError("cannot run backwards")
        start = len(self.trace)
        while self._queue and self._queue[0][0] <= t_end:
            at, _, handler, args = heapq.heappop(self._queue)
            self.clock.now = at
            getattr(self, handler)(at, *args)
        self.clock.now = t_end
        return self.trace[start:]

    def run_until_idle(self) -> list[TraceRecord]:
        start = len(self.trace)
        while self._queue:
            self.run_until(self._queue[0][0])
        return self.trace[start:]

    def _record(self, at: int, kind: str, payload: bytes) -> None:
        self.trace.append(TraceRecord(at, kind, payload))

    # -- inputs --------------------------------------------------------------

    def ingest_uart(self, at: int, data: bytes) -> None:
        at = self._check_time(at)
        if self.uart_latency:
            latency_s = PACKET_LEN * 10 / self.baud
            at = self.clock.quantize(at + math.ceil(latency_s * 1e9))
        self._push(at, "_on_uart", bytes(data))

    def pulse_trigger(self, at: int) -> None:
        self._push(self._check_time(at), "_on_trigger")

    def probe(self, at: int, dac: int, channel: int) -> None:
        self._push(self._check_time(at), "_on_probe", dac, channel)

    def drain_uart_tx(self) -> bytes:
        out = bytes(self._uart_tx)
        self._uart_tx.clear()
        return out

    def load_waveform(self, program: WaveformProgram) -> None:
        if self.playback_active:
            raise InvalidProgram("cannot load while a program is playing")
        if not program.steps:
            raise InvalidProgram("empty program")
        if len(program) > self.memory_budget:
            raise ProgramTooLarge(f"{len(program)} steps exceed budget of {self.memory_budget}")
        for s in program.steps:
            if self.regmap.dac_channel(s.addr) is None:
                raise InvalidProgram(f"step addresses non-data register {s.addr:#04x}")
        ranges = [dev.channel_range(0) for dev in self.dacs]
        report = validate(program, self.analog_params[0], self.link, ranges, self.conv)
        if not report.loadable:
            raise InvalidProgram(f"{len(report.spacing_violations)} SPI spacing violations")
        self.program = program

    # -- handlers ------------------------------------------------------------

    def _on_advance(self, at: int) -> None:
        pass

    def _on_uart(self, at: int, data: bytes) -> None:
        commands, errors = self.parser.feed(data)
        self.stats.uart_errors.extend(errors)
        for cmd in commands:
            self._dispatch(cmd, at)

    def _dispatch(self, cmd, at: int) -> None:
        if isinstance(cmd, WriteReg):
            self._spi_submit(cmd.dac, encode_write(cmd.addr, cmd.data), at)
        elif isinstance(cmd, ReadReg):
            # command frame, then a NOP frame clocks the data out
            self._spi_submit(cmd.dac, encode_read(cmd.addr), at, bits=2 * FRAME_BITS)
        elif isinstance(cmd, Trigger):
            self._spi_submit(cmd.dac, encode_write(self.regmap.addr("TRIGGER"), TRIG_LDAC), at)
        elif isinstance(cmd, LoadWaveformWord):
            self._upload_word(cmd)

    def _upload_word(self, cmd: LoadWaveformWord) -> None:
        if cmd.addr == self.regmap.addr("NOP"):
            if cmd.data == 0:
                self._upload = []
                self._upload_cursor = 0
            else:
                self._upload_cursor += cmd.data
            return
        candidate = self._upload + [Step(self._upload_cursor, cmd.dac, cmd.addr, cmd.data)]
        try:
            self.load_waveform(WaveformProgram(tuple(candidate)))
        except InvalidProgram as exc:
            self.stats.program_errors.append(str(exc))
            return
        self._upload = candidate

    def _spi_submit(self, dev: int, frame: SpiFrame, at: int, bits: int = FRAME_BITS,
                    group: int | None = None) -> None:
        start = max(at, self.spi_busy_until[dev])
        done = start + transaction_ticks(self.link, bits) * TICK_NS
        self.spi_busy_until[dev] = done
        self._push(done, "_on_spi_done", dev, frame, group)

    def _on_spi_done(self, at: int, dev: int, frame: SpiFrame, group: int | None) -> None:
        self.stats.spi_transactions[dev] += 1
        self._sync_channels(dev, at)
        try:
            value = apply_frame(self.dacs[dev], frame)
        except RegisterError as exc:
            self.stats.register_errors.append((at, dev, frame.hex(), str(exc)))
            value = None
            if frame.rw:
                self._reply(dev, frame.addr, 0, error=True)
        else:
            if frame.rw:
                self._reply(dev, frame.addr, value)
                self._record(at, "READ", bytes([dev]) + frame.to_bytes()[:1] + value.to_bytes(2, "big"))
            else:
                self._record(at, "SPI", bytes([dev]) + frame.to_bytes())
        self._refresh_targets(dev, at)
        if group is not None:
            self._playback_step_done(at, group)

    def _reply(self, dev: int, addr: int, value: int, error: bool = False) -> None:
        status = (REPLY_DAC1 if dev else 0)
        if self.dacs[dev].temp_alarm:
            status |= REPLY_TEMP_ALARM
        if error:
            status |= REPLY_ERROR
        self._uart_tx += encode_reply(Reply(addr, value, status))

    def _on_trigger(self, at: int) -> None:
        self.stats.triggers += 1
        self.trigger_pin = True
        if self.playback_active:
            self.stats.triggers_ignored += 1
            self.trigger_pin = False
            return
        acted = False
        if any(code is not None for dev in self.dacs for code in dev.staged):
            self._ldac_all(at)
            acted = True
        if self.program is not None:
            self._start_playback(at)
            acted = True
        if not acted:
            self.stats.triggers_noop += 1
        self.trigger_pin = False

    def _ldac_all(self, at: int) -> None:
        for dev in range(N_DACS):
            self._sync_channels(dev, at)
            self.dacs[dev].commit_trigger()
            self._record(at, "LDAC", bytes([dev]))
            self._refresh_targets(dev, at)

    def _start_playback(self, at: int) -> None:
        program = self.program
        self._playback_pending = len(program.steps)
        self._group_pending = {}
        for step in program.steps:
            group = step.offset if program.mode is PlaybackMode.STAGED_SYNC else None
            if group is not None:
                self._group_pending[group] = self._group_pending.get(group, 0) + 1
            self._push(at + step.offset * TICK_NS, "_on_play_step", step, group)
        self._record(at, "PLAY", len(program.steps).to_bytes(2, "big"))

    def _on_play_step(self, at: int, step: Step, group: int | None) -> None:
        self._spi_submit(step.dac, encode_write(step.addr, step.code), at,
                         group=-1 if group is None else group)

    def _playback_step_done(self, at: int, group: int) -> None:
        if group >= 0:
            self._group_pending[group] -= 1
            if self._group_pending[group] == 0:
                self._ldac_all(at)
        self._playback_pending -= 1

    def _on_probe(self, at: int, dev: int, ch: int) -> None:
        self._sync_channels(dev, at)
        state = self.channels[dev][ch]
        if state is None:
            v = math.nan
        else:
            v = state.probe(1e-6, self.rng)
        self._record(at, "PROBE", bytes([dev, ch]) + struct.pack(">d", v))

    # -- analog bookkeeping --------------------------------------------------

    def _sync_channels(self, dev: int, at: int) -> None:
        for ch in range(N_CHANNELS):
            state = self.channels[dev][ch]
            if state is not None:
                h = (at - self._channel_t[dev][ch]) * 1e-9
                if h > 0:
                    self.channels[dev][ch] = state.advance(h)
            self._channel_t[dev][ch] = at

    def target_voltage(self, dev: int, ch: int) -> float | None:
        """Ideal filter input for the channel's active code, or None if high-Z."""
        regs = self.dacs[dev]
        code = regs.output_marker(ch)
        if code is HIGH_Z:
            return None
        params = self.analog_params[dev]
        rng = regs.channel_range(ch)
        v = float(code_to_voltage(code, rng, self.conv))
        if params.dnl_halflsb:
            v += dnl_error(code, params.dnl_seed, float(lsb_size(rng, self.conv)))
        return v * params.gain

    def _refresh_targets(self, dev: int, at: int) -> None:
        params = self.analog_params[dev]
        for ch in range(N_CHANNELS):
            target = self.target_voltage(dev, ch)
            state = self.channels[dev][ch]
            if target is None:
                self.channels[dev][ch] = None
            elif state is None:
                # output leaves high-Z from a discharged filter
                self.channels[dev][ch] = AnalogChannelState(target, 0.0, 0.0, params)
            elif state.target != target:
                state.target = target
            self._channel_t[dev][ch] = at

    def channel_state(self, dev: int, ch: int, at: int | None = None) -> AnalogChannelState | None:
        """Channel state evaluated at ``at`` (default: now) without mutating."""
        at = self.now if at is None else at
        state = self.channels[dev][ch]
        if state is None:
            return None
        return state.advance((at - self._channel_t[dev][ch]) * 1e-9)

    def output(self, dev: int, ch: int):
        """Noise-free observed voltage now, or HIGH_Z."""
        state = self.channel_state(dev, ch)
        if state is None:
            return HIGH_Z
        return state.out + self.analog_params[dev].offset

    def measure(self, dev: int, ch: int, n: int, dt: float) -> np.ndarray:
        """``n`` probe samples spaced ``dt`` seconds from now; clock untouched."""
        state = self.channel_state(dev, ch)
        if state is None:
            return np.full(n, math.nan)
        if state.settled:
            base = np.full(n, state.out)
        else:
            base = np.empty(n)
            for k in range(n):
                base[k] = state.out
                state = state.advance(dt)
        return base + self.analog_params[dev].offset + noise_record(
            self.analog_params[dev], n, dt, self.rng)

    def capture(self, dev: int, ch: int, duration: float, dt: float) -> Waveform:
        """Time-stepped record of one channel from now; clock untouched."""
        state = self.channel_state(dev, ch)
        n = int(round(duration / dt)) + 1
        if state is None:
            return Waveform(self.now * 1e-9, dt, np.full(n, math.nan))
        out = np.empty(n)
        out[0] = state.out
        for k in range(1, n):
            state = step_channel(state, dt)
            out[k] = state.out
        params = self.analog_params[dev]
        out += params.offset + noise_record(params, n, dt, self.rng)
        return Waveform(self.now * 1e-9, dt, out)


def replay(events: Iterable[SimEvent], t_end: int | None = None, **sim_kwargs) -> str:
    """Run an event log on a fresh simulator and return the trace text."""
    sim = SomSimulator(**sim_kwargs)
    events = list(events)
    for ev in events:
        sim.schedule(ev)
    if t_end is None:
        sim.run_until_idle()
    else:
        sim.run_until(t_end)
    return trace_text(sim.trace)
