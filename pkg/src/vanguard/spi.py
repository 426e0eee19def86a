"""Bit-exact SPI transactions for the DAC81416.

A single access is a 24-bit frame, MSB first::

    23   22   21..16   15..0
    R/W  0    ADDR     DATA

A streaming burst sends one 8-bit command byte (R/W, 0, ADDR) followed by
contiguous 16-bit words while chip-select stays low; the address increments
after every word.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import AddressOverrun, InvalidField, LengthMismatch, ReservedBitSet
from .registers import DEFAULT_REGISTER_MAP, DacRegisterFile, RegisterMap

FRAME_BITS = 24
HEADER_BITS = 8
WORD_BITS = 16


def _check_addr(addr: int) -> int:
    if not 0 <= addr <= 0x3F:
        raise InvalidField(f"address {addr:#x} exceeds 6 bits")
    return addr


def _check_word(word: int) -> int:
    if not 0 <= word <= 0xFFFF:
        raise InvalidField(f"payload {word:#x} exceeds 16 bits")
    return word


@dataclass(frozen=True)
class SpiFrame:
    rw: bool
    addr: int
    payload: int = 0

    def __post_init__(self):
        _check_addr(self.addr)
        _check_word(self.payload)

    @property
    def raw(self) -> int:
        return int(self.rw) << 23 | self.addr << 16 | self.payload

    def to_bytes(self) -> bytes:
        return self.raw.to_bytes(3, "big")

    def hex(self) -> str:
        return f"{self.raw:06X}"


def encode_write(addr: int, word: int) -> SpiFrame:
    return SpiFrame(False, addr, word)


def encode_read(addr: int) -> SpiFrame:
    return SpiFrame(True, addr, 0)


def decode_frame(raw: int) -> tuple[bool, int, int]:
    if not 0 <= raw < 1 << FRAME_BITS:
        raise InvalidField(f"frame {raw:#x} exceeds 24 bits")
    if raw & (1 << 22):
        raise ReservedBitSet(f"bit 22 set in frame {raw:06X}")
    return bool(raw >> 23), (raw >> 16) & 0x3F, raw & 0xFFFF


def frame_from_raw(raw: int) -> SpiFrame:
    return SpiFrame(*decode_frame(raw))


def apply_frame(dev: DacRegisterFile, frame: SpiFrame) -> int | None:
    """Execute ``frame`` against a register file; reads return the word."""
    if frame.rw:
        return dev.read_register(frame.addr)
    dev.write_register(frame.addr, frame.payload)
    return None


# -- streaming ---------------------------------------------------------------

@dataclass(frozen=True)
class StreamBurst:
    start_addr: int
    words: tuple

    @property
    def cs_asserted_bits(self) -> int:
        return HEADER_BITS + WORD_BITS * len(self.words)

    def to_bytes(self) -> bytes:
        out = bytearray([self.start_addr])
        for w in self.words:
            out += w.to_bytes(2, "big")
        return bytes(out)

    def frames(self) -> list[SpiFrame]:
        """The equivalent sequence of individual write frames."""
        return [encode_write(self.start_addr + i, w) for i, w in enumerate(self.words)]


def encode_stream(start_addr: int, words: Sequence[int],
                  regmap: RegisterMap = DEFAULT_REGISTER_MAP) -> StreamBurst:
    words = tuple(_check_word(w) for w in words)
    if not words:
        raise InvalidField("a stream burst needs at least one word")
    first, last = regmap.dac(0), regmap.dac(15)
    end = start_addr + len(words) - 1
    if not first <= start_addr <= last or end > last:
        raise AddressOverrun(
            f"burst {start_addr:#04x}..{end:#04x} leaves the DAC window {first:#04x}..{last:#04x}")
    return StreamBurst(start_addr, words)


def decode_stream(data: bytes) -> StreamBurst:
    if len(data) < 3 or (len(data) - 1) % 2:
        raise InvalidField(f"stream of {len(data)} bytes is not header + whole words")
    header = data[0]
    if header & 0x40:
        raise ReservedBitSet("bit 6 of stream header set")
    if header & 0x80:
        raise InvalidField("read bursts are not supported")
    words = tuple(int.from_bytes(data[i:i + 2], "big") for i in range(1, len(data), 2))
    return StreamBurst(header & 0x3F, words)


def apply_burst(dev: DacRegisterFile, burst: StreamBurst) -> None:
    for i, word in enumerate(burst.words):
        dev.write_register(burst.start_addr + i, word)


# -- daisy chain -------------------------------------------------------------

def chain_encode(frames: Sequence[SpiFrame]) -> bytes:
    """Shift buffer for one chip-select window.

    The first frame shifted out travels to the far end of the chain, so the
    frame meant for the last device goes first.
    """
    return b"".join(f.to_bytes() for f in reversed(frames))


def chain_deliver(buffer: bytes, n_devices: int) -> list[SpiFrame]:
    """Clock ``buffer`` through ``n_devices`` 24-bit shift registers."""
    if len(buffer) * 8 != FRAME_BITS * n_devices:
        raise LengthMismatch(f"{len(buffer)} bytes for a {n_devices}-device chain")
    mask = (1 << FRAME_BITS) - 1
    regs = [0] * n_devices
    for byte in buffer:
        for bit in range(7, -1, -1):
            carry = (byte >> bit) & 1
            for k in range(n_devices):
                out = regs[k] >> (FRAME_BITS - 1)
                regs[k] = ((regs[k] << 1) | carry) & mask
                carry = out
    return [frame_from_raw(r) for r in regs]


@dataclass
class DaisyChain:
    devices: list = field(default_factory=list)
    shift_register: bytes = b""

    def transfer(self, frames: Sequence[SpiFrame]) -> list:
        if len(frames) != len(self.devices):
            raise LengthMismatch(f"{len(frames)} frames for {len(self.devices)} devices")
        self.shift_register = chain_encode(frames)
        delivered = chain_deliver(self.shift_register, len(self.devices))
        return [apply_frame(dev, f) for dev, f in zip(self.devices, delivered)]


# -- timing ------------------------------------------------------------------

def transaction_time(frame_bits: int, sclk_hz: float, gap_s: float = 0.0) -> float:
    if sclk_hz <= 0:
        raise ValueError("sclk_hz must be positive")
    return frame_bits / sclk_hz + gap_s


@dataclass(frozen=True)
class LinkConfig:
    sclk_hz: float = 10e6
    gap_bits: int = 0

    def frame_time(self, bits: int = FRAME_BITS) -> float:
        return transaction_time(bits, self.sclk_hz, self.gap_bits / self.sclk_hz)


# -- hex dumps ---------------------------------------------------------------

def frames_to_hex(frames: Iterable[SpiFrame]) -> str:
    return "".join(f"{f.hex()}\n" for f in frames)


def frames_from_hex(text: str) -> list[SpiFrame]:
    frames = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if len(line) != 6:
            raise InvalidField(f"hex frame {line!r} is not 6 digits")
        frames.append(frame_from_raw(int(line, 16)))
    return frames
