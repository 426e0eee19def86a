"""Campaign backends: the simulator, or real hardware over a serial port.

Both speak the same UART packets. Only the simulator can measure; the
serial backend drives the stimulus and leaves measurement slots empty for an
external instrument.
"""
from __future__ import annotations

import logging
import time

import numpy as np

from ..errors import BackendUnavailable, PortUnavailable
from ..registers import range_word
from ..simulator import SomSimulator
from ..uart import (PortConfig, ReadReg, Reply, WriteReg, decode_reply, encode_packet,
                    packet_hex, REPLY_LEN, serial_session)
from .config import HarnessConfig

log = logging.getLogger(__name__)


class Backend:
    measures = False

    def __init__(self, config: HarnessConfig):
        self.config = config
        self.regmap = config.regmap
        self.stimulus: list[str] = []
        self.session = None

    def send(self, cmd) -> None:
        packet = encode_packet(cmd)
        self.stimulus.append(packet_hex(packet))
        self.session.write(packet)

    def write(self, dac: int, name: str, word: int) -> None:
        self.send(WriteReg(dac, self.regmap.addr(name), word))

    def set_code(self, dac: int, channel: int, code: int) -> None:
        self.send(WriteReg(dac, self.regmap.dac(channel), code))

    def read_register(self, dac: int, name: str) -> Reply:
        self.send(ReadReg(dac, self.regmap.addr(name)))
        return decode_reply(self.session.read(REPLY_LEN))

    def bring_up(self) -> None:
        """Power every channel, set the configured range, select the internal reference."""
        word = range_word(self.config.range_code)
        for dac in (0, 1):
            self.write(dac, "DACPWDWN", 0x0000)
            for reg in ("DACRANGE0", "DACRANGE1", "DACRANGE2", "DACRANGE3"):
                self.write(dac, reg, word)
            self.write(dac, "GENCONFIG", 0x0000)

    def settle(self) -> None:
        raise NotImplementedError

    def sample(self, dac: int, channel: int, n: int, dt: float) -> np.ndarray | None:
        return None

    def sample_ground(self, n: int, dt: float) -> np.ndarray | None:
        return None

    def step_and_capture(self, dac: int, channel: int, code: int, duration: float, dt: float,
                         monitor: tuple | None = None):
        self.set_code(dac, channel, code)
        return None, None

    def close(self) -> None:
        if self.session is not None:
            self.session.close()


class SimulatorBackend(Backend):
    measures = True

    def __init__(self, config: HarnessConfig, seed: int = 0):
        super().__init__(config)
        self.sim = SomSimulator(analog=config.analog, link=config.link, conv=config.convention,
                                regmap=config.regmap, memory_budget=config.memory_budget,
                                baud=config.baud, seed=seed)
        self.session = serial_session(PortConfig(port="sim://", baud=config.baud),
                                      simulator=self.sim)

    def settle(self) -> None:
        self.sim.run_until(self.sim.now + int(self.config.settle_us * 1000))

    def sample(self, dac, channel, n, dt):
        return self.sim.measure(dac, channel, n, dt)

    def sample_ground(self, n, dt):
        return np.zeros(n)

    def step_and_capture(self, dac, channel, code, duration, dt, monitor=None):
        # the transport runs the simulator to the SPI commit, so "now" is the step
        self.set_code(dac, channel, code)
        wave = self.sim.capture(dac, channel, duration, dt)
        mon = self.sim.capture(*monitor, duration, dt) if monitor is not None else None
        return wave, mon


class SerialBackend(Backend):
    def __init__(self, config: HarnessConfig, port: str, timeout: float = 1.0):
        super().__init__(config)
        try:
            self.session = serial_session(PortConfig(port=port, baud=config.baud, timeout=timeout))
        except PortUnavailable as exc:
            raise BackendUnavailable(str(exc)) from exc

    def settle(self) -> None:
        time.sleep(self.config.settle_us * 1e-6)


def open_backend(kind: str, config: HarnessConfig, port: str | None = None,
                 seed: int = 0) -> Backend:
    if kind == "sim":
        return SimulatorBackend(config, seed=seed)
    if kind == "serial":
        if not port:
            raise BackendUnavailable("--port is required for the serial backend")
        return SerialBackend(config, port)
    raise BackendUnavailable(f"unknown backend {kind!r}")
