"""Host <-> module UART command protocol.

Command packet, 7 bytes::

    A5  opcode  dac  addr  data_hi  data_lo  xor

Readback reply, 6 bytes::

    5A  addr  data_hi  data_lo  status  xor

``xor`` is the XOR of every preceding byte of the packet.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from functools import reduce
from operator import xor
from typing import Callable, Iterable, Union

import serial

from .errors import InvalidField, PortUnavailable, Timeout

log = logging.getLogger(__name__)

SYNC = 0xA5
REPLY_SYNC = 0x5A
PACKET_LEN = 7
REPLY_LEN = 6

# reply status byte
REPLY_DAC1 = 1 << 0
REPLY_TEMP_ALARM = 1 << 1
REPLY_ERROR = 1 << 2


class Opcode(enum.IntEnum):
    WRITE_REG = 0x01
    TRIGGER = 0x02
    READ_REG = 0x03
    LOAD_WAVEFORM_WORD = 0x04


class OpcodeError(InvalidField):
    pass


def checksum(data: bytes) -> int:
    return reduce(xor, data, 0)


def _check(dac: int, addr: int, data: int) -> None:
    if dac not in (0, 1):
        raise InvalidField(f"dac index {dac} not in (0, 1)")
    if not 0 <= addr <= 0x3F:
        raise InvalidField(f"address {addr:#x} exceeds 6 bits")
    if not 0 <= data <= 0xFFFF:
        raise InvalidField(f"data {data:#x} exceeds 16 bits")


@dataclass(frozen=True)
class WriteReg:
    dac: int
    addr: int
    data: int

    opcode = Opcode.WRITE_REG

    def __post_init__(self):
        _check(self.dac, self.addr, self.data)


@dataclass(frozen=True)
class Trigger:
    dac: int

    opcode = Opcode.TRIGGER
    addr = 0
    data = 0

    def __post_init__(self):
        _check(self.dac, 0, 0)


@dataclass(frozen=True)
class ReadReg:
    dac: int
    addr: int

    opcode = Opcode.READ_REG
    data = 0

    def __post_init__(self):
        _check(self.dac, self.addr, 0)


@dataclass(frozen=True)
class LoadWaveformWord:
    """One word of a preloaded program.

    ``addr`` names a DACn register and ``data`` its code. With ``addr`` equal
    to NOP, ``data`` advances the upload cursor by that many gateware ticks,
    and ``data == 0`` clears the upload buffer.
    """

    dac: int
    addr: int
    data: int

    opcode = Opcode.LOAD_WAVEFORM_WORD

    def __post_init__(self):
        _check(self.dac, self.addr, self.data)


Command = Union[WriteReg, Trigger, ReadReg, LoadWaveformWord]


def encode_packet(cmd: Command) -> bytes:
    body = bytes([SYNC, int(cmd.opcode), cmd.dac, cmd.addr, cmd.data >> 8, cmd.data & 0xFF])
    return body + bytes([checksum(body)])


def decode_packet(packet: bytes) -> Command:
    """Decode one complete packet, raising on any defect."""
    if len(packet) != PACKET_LEN or packet[0] != SYNC:
        raise InvalidField("not a command packet")
    if checksum(packet[:-1]) != packet[-1]:
        raise InvalidField("checksum mismatch")
    _, op, dac, addr, hi, lo, _ = packet
    data = hi << 8 | lo
    if op == Opcode.WRITE_REG:
        return WriteReg(dac, addr, data)
    if op == Opcode.TRIGGER:
        if addr or data:
            raise InvalidField("trigger packet carries nonzero fields")
        return Trigger(dac)
    if op == Opcode.READ_REG:
        if data:
            raise InvalidField("read packet carries nonzero data")
        return ReadReg(dac, addr)
    if op == Opcode.LOAD_WAVEFORM_WORD:
        return LoadWaveformWord(dac, addr, data)
    raise OpcodeError(f"unknown opcode {op:#04x}")


@dataclass(frozen=True)
class Reply:
    addr: int
    data: int
    status: int = 0

    @property
    def dac(self) -> int:
        return self.status & REPLY_DAC1


def encode_reply(reply: Reply) -> bytes:
    body = bytes([REPLY_SYNC, reply.addr, reply.data >> 8, reply.data & 0xFF, reply.status])
    return body + bytes([checksum(body)])


def decode_reply(packet: bytes) -> Reply:
    if len(packet) != REPLY_LEN or packet[0] != REPLY_SYNC:
        raise InvalidField("not a reply packet")
    if checksum(packet[:-1]) != packet[-1]:
        raise InvalidField("checksum mismatch")
    return Reply(packet[1], packet[2] << 8 | packet[3], packet[4])


# -- incremental parsing -----------------------------------------------------

@dataclass(frozen=True)
class ChecksumError:
    offset: int
    raw: bytes


@dataclass(frozen=True)
class UnknownOpcode:
    offset: int
    raw: bytes


@dataclass(frozen=True)
class MalformedPacket:
    """Checksum passed but a field is out of range."""

    offset: int
    raw: bytes
    reason: str


class Phase(enum.Enum):
    SEEK_SYNC = "SeekSync"
    HEADER = "Header"
    BODY = "Body"
    CHECK = "Check"


@dataclass
class ParserStats:
    packets_ok: int = 0
    checksum_errors: int = 0
    resyncs: int = 0
    unknown_opcodes: int = 0
    malformed: int = 0


class StreamParser:
    """Incremental fixed-length frame parser with byte-wise resync.

    A candidate that fails is discarded one byte at a time so a real frame
    starting inside it is never lost.
    """

    def __init__(self, sync: int, length: int, decode: Callable[[bytes], object]):
        self.sync = sync
        self.length = length
        self._decode = decode
        self.buffered = bytearray()
        self.stats = ParserStats()
        self._consumed = 0  # stream offset of buffered[0]

    @property
    def phase(self) -> Phase:
        n = len(self.buffered)
        if n == 0:
            return Phase.SEEK_SYNC
        if n < 3:
            return Phase.HEADER
        if n < self.length - 1:
            return Phase.BODY
        return Phase.CHECK

    def _drop(self, n: int) -> None:
        del self.buffered[:n]
        self._consumed += n

    def feed(self, data: Iterable[int]) -> tuple[list, list]:
        self.buffered.extend(data)
        parsed, errors = [], []
        while True:
            # seek sync
            idx = self.buffered.find(self.sync)
            if idx < 0:
                if self.buffered:
                    self.stats.resyncs += 1
                self._drop(len(self.buffered))
                break
            if idx:
                self.stats.resyncs += 1
                self._drop(idx)
            if len(self.buffered) < self.length:
                break
            raw = bytes(self.buffered[:self.length])
            offset = self._consumed
            if checksum(raw[:-1]) != raw[-1]:
                self.stats.checksum_errors += 1
                errors.append(ChecksumError(offset, raw))
                self._drop(1)
                continue
            try:
                item = self._decode(raw)
            except OpcodeError:
                self.stats.unknown_opcodes += 1
                errors.append(UnknownOpcode(offset, raw))
                self._drop(1)
                continue
            except InvalidField as exc:
                self.stats.malformed += 1
                errors.append(MalformedPacket(offset, raw, str(exc)))
                self._drop(1)
                continue
            self.stats.packets_ok += 1
            parsed.append(item)
            self._drop(self.length)
        return parsed, errors


def command_parser() -> StreamParser:
    return StreamParser(SYNC, PACKET_LEN, decode_packet)


def reply_parser() -> StreamParser:
    return StreamParser(REPLY_SYNC, REPLY_LEN, decode_reply)


def feed_bytes(state: StreamParser, data: Iterable[int]) -> tuple[StreamParser, list, list]:
    parsed, errors = state.feed(data)
    return state, parsed, errors


def packet_hex(packet: bytes) -> str:
    return " ".join(f"{b:02X}" for b in packet)


def packets_to_log(packets: Iterable[bytes]) -> str:
    return "".join(packet_hex(p) + "\n" for p in packets)


def packets_from_log(text: str) -> list[bytes]:
    return [bytes.fromhex(line) for line in text.splitlines() if line.strip()]


# -- serial sessions ---------------------------------------------------------

@dataclass(frozen=True)
class PortConfig:
    port: str = "loop://"
    baud: int = 115200
    bytesize: int = 8
    parity: str = "N"
    stopbits: int = 1
    timeout: float = 1.0

    @property
    def byte_time(self) -> float:
        bits = 1 + self.bytesize + (self.parity != "N") + self.stopbits
        return bits / self.baud


class SerialSession:
    """Byte channel over pyserial: a real port or ``loop://``."""

    def __init__(self, config: PortConfig, handle: serial.SerialBase):
        self.config = config
        self._handle = handle

    def write(self, data: bytes) -> None:
        self._handle.write(data)
        self._handle.flush()

    def read(self, n: int) -> bytes:
        got = self._handle.read(n)
        if len(got) < n:
            raise Timeout(f"read {len(got)}/{n} bytes within {self.config.timeout} s")
        return got

    def close(self) -> None:
        self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SimulatorTransport:
    """Same contract as :class:`SerialSession`, wired into a simulator.

    Each write is delivered at the simulator's current time and the
    simulator runs until its SPI controllers are idle; readback replies
    collect in the receive buffer.
    """

    def __init__(self, config: PortConfig, sim):
        self.config = config
        self.sim = sim
        self._rx = bytearray()

    def write(self, data: bytes) -> None:
        self.sim.ingest_uart(self.sim.now, data)
        self.sim.run_until_idle()
        self._rx += self.sim.drain_uart_tx()

    def read(self, n: int) -> bytes:
        if len(self._rx) < n:
            raise Timeout(f"read {len(self._rx)}/{n} bytes from simulator")
        out = bytes(self._rx[:n])
        del self._rx[:n]
        return out

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serial_session(config: PortConfig, simulator=None):
    """Open a byte channel honouring ``config``'s 8-N-1 settings."""
    if simulator is not None:
        return SimulatorTransport(config, simulator)
    try:
        handle = serial.serial_for_url(
            config.port, baudrate=config.baud, bytesize=config.bytesize,
            parity=config.parity, stopbits=config.stopbits, timeout=config.timeout,
            xonxoff=False, rtscts=False, dsrdtr=False)
    except (serial.SerialException, ValueError, OSError) as exc:
        raise PortUnavailable(f"{config.port}: {exc}") from exc
    log.debug("opened %s at %d baud", config.port, config.baud)
    return SerialSession(config, handle)
