"""Register-accurate state model of one DAC81416.

Register addresses and range nibbles follow the device datasheet and live in
:data:`DEFAULT_REGISTER_MAP` / :data:`RANGE_NIBBLES`; all logic works on the
symbolic names so either table can be swapped out.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .codec import (DEFAULT_CONVENTION, MappingConvention, OutputRange, RangeCode,
                    code_to_voltage)
from .errors import InvalidRangeCode, ReadOnlyRegister, ReservedAddress

N_CHANNELS = 16
N_BANKS = 4
WORD_MASK = 0xFFFF
ALL_CHANNELS = (1 << N_CHANNELS) - 1


class RegisterMap:
    """Bidirectional name <-> 6-bit address table."""

    def __init__(self, table: Mapping[str, int]):
        self.by_name = dict(table)
        self.by_addr = {}
        for name, addr in self.by_name.items():
            if not 0 <= addr <= 0x3F:
                raise ValueError(f"{name}: address {addr:#x} exceeds 6 bits")
            if addr in self.by_addr:
                raise ValueError(f"{name} and {self.by_addr[addr]} share address {addr:#x}")
            self.by_addr[addr] = name

    def addr(self, name: str) -> int:
        return self.by_name[name]

    def name(self, addr: int) -> str:
        try:
            return self.by_addr[addr]
        except KeyError:
            raise ReservedAddress(f"no register at {addr:#04x}") from None

    def dac(self, channel: int) -> int:
        return self.by_name[f"DAC{channel}"]

    def dac_channel(self, addr: int) -> int | None:
        """Channel index if ``addr`` is a DACn data register."""
        name = self.by_addr.get(addr, "")
        if name.startswith("DAC") and name[3:].isdigit():
            return int(name[3:])
        return None

    def replace(self, **overrides: int) -> "RegisterMap":
        table = dict(self.by_name)
        table.update(overrides)
        return RegisterMap(table)

    def __eq__(self, other):
        return isinstance(other, RegisterMap) and self.by_name == other.by_name

    def __repr__(self):
        return f"RegisterMap({len(self.by_name)} registers)"


DEFAULT_REGISTER_MAP = RegisterMap({
    "NOP": 0x00,
    "DEVICEID": 0x01,
    "STATUS": 0x02,
    "SPICONFIG": 0x03,
    "GENCONFIG": 0x04,
    "BRDCONFIG": 0x05,
    "SYNCCONFIG": 0x06,
    "DACPWDWN": 0x09,
    "DACRANGE0": 0x0A,
    "DACRANGE1": 0x0B,
    "DACRANGE2": 0x0C,
    "DACRANGE3": 0x0D,
    "TRIGGER": 0x0E,
    "BRDCAST": 0x0F,
    **{f"DAC{n}": 0x10 + n for n in range(N_CHANNELS)},
})

READ_ONLY = frozenset({"DEVICEID", "STATUS"})

RANGE_NIBBLES = {
    RangeCode.U5: 0b0000,
    RangeCode.U10: 0b0001,
    RangeCode.U20: 0b0010,
    RangeCode.U40: 0b0100,
    RangeCode.B5: 0b1001,
    RangeCode.B10: 0b1010,
    RangeCode.B20: 0b1100,
    RangeCode.B2V5: 0b1110,
}
_NIBBLE_RANGES = {v: k for k, v in RANGE_NIBBLES.items()}

# bank b holds channels 4b..4b+3; DACRANGE0 carries the top bank
BANK_RANGE_REGISTER = {0: "DACRANGE3", 1: "DACRANGE2", 2: "DACRANGE1", 3: "DACRANGE0"}

DEVICE_ID = 0x029C

# GENCONFIG
GEN_REF_PWDWN = 1 << 14      # 1: internal reference off, external used
GEN_AUTO_SHUTDOWN = 1 << 0   # shut all channels down on temperature alarm
GEN_DIFF_MASK = 0b1111 << 2  # differential pair flags, stored only
GENCONFIG_RESET = GEN_REF_PWDWN

# TRIGGER
TRIG_SOFT_RESET = 0b1010     # value of bits 3..0
TRIG_LDAC = 1 << 4
TRIG_ALM_RESET = 1 << 8

# STATUS
STATUS_TEMP_ALM = 1 << 0
STATUS_DAC_BUSY = 1 << 1
STATUS_SHUTDOWN = 1 << 4

SPICONFIG_RESET = 0x0AA4
BRDCONFIG_RESET = ALL_CHANNELS


class RefSelect(enum.Enum):
    INTERNAL_2V5 = "Internal2V5"
    EXTERNAL = "External"


class _HighZ:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "HIGH_Z"

    def __reduce__(self):
        return (_HighZ, ())


HIGH_Z = _HighZ()


def bank_of(channel: int) -> int:
    return channel // 4


def range_word(code: RangeCode) -> int:
    nib = RANGE_NIBBLES[code]
    return nib * 0x1111


@dataclass
class DacRegisterFile:
    regmap: RegisterMap = field(default=DEFAULT_REGISTER_MAP, compare=False, repr=False)
    data: list = field(default_factory=lambda: [0] * N_CHANNELS)
    staged: list = field(default_factory=lambda: [None] * N_CHANNELS)
    pwdwn_mask: int = ALL_CHANNELS
    ranges: list = field(default_factory=lambda: [RangeCode.U5] * N_BANKS)
    sync_mask: int = 0
    genconfig: int = GENCONFIG_RESET
    spiconfig: int = SPICONFIG_RESET
    brdconfig: int = BRDCONFIG_RESET
    temp_alarm: bool = False
    dac_busy: bool = False
    shutdown_latched: bool = False
    stale_mask: int = 0

    # -- configuration views -------------------------------------------------

    @property
    def ref_select(self) -> RefSelect:
        return RefSelect.EXTERNAL if self.genconfig & GEN_REF_PWDWN else RefSelect.INTERNAL_2V5

    @property
    def auto_shutdown(self) -> bool:
        return bool(self.genconfig & GEN_AUTO_SHUTDOWN)

    @property
    def status_word(self) -> int:
        word = 0
        if self.temp_alarm:
            word |= STATUS_TEMP_ALM
        if self.dac_busy:
            word |= STATUS_DAC_BUSY
        if self.shutdown_latched:
            word |= STATUS_SHUTDOWN
        return word

    def channel_range(self, channel: int) -> OutputRange:
        return OutputRange.from_code(self.ranges[bank_of(channel)])

    def powered(self, channel: int) -> bool:
        return not (self.pwdwn_mask >> channel) & 1

    def synchronous(self, channel: int) -> bool:
        return bool((self.sync_mask >> channel) & 1)

    def stale(self, channel: int) -> bool:
        return bool((self.stale_mask >> channel) & 1)

    def output_marker(self, channel: int):
        """Active code of a powered channel, else :data:`HIGH_Z`."""
        if not self.powered(channel):
            return HIGH_Z
        return self.data[channel]

    def output_voltage(self, channel: int,
                       conv: MappingConvention = DEFAULT_CONVENTION) -> Fraction | _HighZ:
        marker = self.output_marker(channel)
        if marker is HIGH_Z:
            return HIGH_Z
        return code_to_voltage(marker, self.channel_range(channel), conv)

    # -- register access -----------------------------------------------------

    def write_register(self, addr: int, word: int) -> None:
        name = self.regmap.name(addr)
        word &= WORD_MASK
        if name in READ_ONLY:
            raise ReadOnlyRegister(f"{name} is read-only")
        ch = self.regmap.dac_channel(addr)
        if ch is not None:
            self._write_data(ch, word)
        elif name == "NOP":
            pass
        elif name == "SPICONFIG":
            self.spiconfig = word
        elif name == "GENCONFIG":
            self.genconfig = word
        elif name == "BRDCONFIG":
            self.brdconfig = word
        elif name == "SYNCCONFIG":
            self.sync_mask = word
        elif name == "DACPWDWN":
            self.configure_power(word)
        elif name.startswith("DACRANGE"):
            self._write_range_register(name, word)
        elif name == "TRIGGER":
            self._write_trigger(word)
        elif name == "BRDCAST":
            for n in range(N_CHANNELS):
                if (self.brdconfig >> n) & 1:
                    self._write_data(n, word)
        else:
            raise ReservedAddress(f"{name} has no write semantics")

    def read_register(self, addr: int) -> int:
        name = self.regmap.name(addr)
        ch = self.regmap.dac_channel(addr)
        if ch is not None:
            return self.data[ch]
        if name.startswith("DACRANGE"):
            bank = {v: k for k, v in BANK_RANGE_REGISTER.items()}[name]
            return range_word(self.ranges[bank])
        return {
            "NOP": 0,
            "DEVICEID": DEVICE_ID,
            "STATUS": self.status_word,
            "SPICONFIG": self.spiconfig,
            "GENCONFIG": self.genconfig,
            "BRDCONFIG": self.brdconfig,
            "SYNCCONFIG": self.sync_mask,
            "DACPWDWN": self.pwdwn_mask,
            "TRIGGER": 0,
            "BRDCAST": 0,
        }[name]

    def _write_data(self, ch: int, word: int) -> None:
        if self.synchronous(ch):
            self.staged[ch] = word
        else:
            self.data[ch] = word
            self.stale_mask &= ~(1 << ch)

    def _write_range_register(self, name: str, word: int) -> None:
        nibbles = {(word >> s) & 0xF for s in (0, 4, 8, 12)}
        if len(nibbles) != 1:
            raise InvalidRangeCode(f"{name} <- {word:#06x}: channels of a bank must share one range")
        nib = nibbles.pop()
        if nib not in _NIBBLE_RANGES:
            raise InvalidRangeCode(f"{name}: undefined range nibble {nib:#06b}")
        bank = {v: k for k, v in BANK_RANGE_REGISTER.items()}[name]
        self.configure_range(bank, _NIBBLE_RANGES[nib])

    def _write_trigger(self, word: int) -> None:
        if word & 0xF == TRIG_SOFT_RESET:
            self.reset()
            return
        if word & TRIG_ALM_RESET:
            self.temp_alarm = False
            self.shutdown_latched = False
        if word & TRIG_LDAC:
            self.commit_trigger()

    # -- operations ----------------------------------------------------------

    def commit_trigger(self) -> None:
        """Move every staged code into its data register in one step."""
        for n, pending in enumerate(self.staged):
            if pending is not None:
                self.data[n] = pending
                self.stale_mask &= ~(1 << n)
        self.staged = [None] * N_CHANNELS

    def configure_power(self, mask: int) -> None:
        if self.shutdown_latched:
            return
        self.pwdwn_mask = mask & ALL_CHANNELS

    def configure_range(self, bank: int, range_code: RangeCode | str) -> None:
        if not 0 <= bank < N_BANKS:
            raise InvalidRangeCode(f"bank {bank} outside 0..{N_BANKS - 1}")
        try:
            code = RangeCode(range_code) if isinstance(range_code, str) else range_code
        except ValueError:
            raise InvalidRangeCode(f"unknown range {range_code!r}") from None
        if not isinstance(code, RangeCode):
            raise InvalidRangeCode(f"unknown range {range_code!r}")
        if code != self.ranges[bank]:
            self.stale_mask |= 0xF << (4 * bank)
        self.ranges[bank] = code

    def configure_reference(self, sel: RefSelect | str) -> None:
        sel = RefSelect(sel)
        if sel is RefSelect.INTERNAL_2V5:
            self.genconfig &= ~GEN_REF_PWDWN
        else:
            self.genconfig |= GEN_REF_PWDWN

    def raise_temp_alarm(self) -> None:
        self.temp_alarm = True
        if self.auto_shutdown:
            self.pwdwn_mask = ALL_CHANNELS
            self.shutdown_latched = True

    def reset(self) -> None:
        fresh = DacRegisterFile(regmap=self.regmap)
        self.__dict__.update(fresh.__dict__)

    def copy(self) -> "DacRegisterFile":
        return copy.deepcopy(self)

    # -- serialization -------------------------------------------------------

    def to_words(self) -> list[int]:
        """16 data words, 16 staged words, then configuration words."""
        staged_present = 0
        staged_words = []
        for n, code in enumerate(self.staged):
            if code is not None:
                staged_present |= 1 << n
            staged_words.append(code or 0)
        range_packed = 0
        for bank, code in enumerate(self.ranges):
            range_packed |= RANGE_NIBBLES[code] << (4 * bank)
        flags = (int(self.temp_alarm) | int(self.dac_busy) << 1
                 | int(self.shutdown_latched) << 2)
        return [*self.data, *staged_words, staged_present, self.pwdwn_mask, range_packed,
                self.sync_mask, self.genconfig, self.spiconfig, self.brdconfig, flags,
                self.stale_mask]

    @classmethod
    def from_words(cls, words: Iterable[int],
                   regmap: RegisterMap = DEFAULT_REGISTER_MAP) -> "DacRegisterFile":
        w = list(words)
        if len(w) != SERIALIZED_WORDS:
            raise ValueError(f"expected {SERIALIZED_WORDS} words, got {len(w)}")
        data, staged_words = w[:16], w[16:32]
        (present, pwdwn, range_packed, sync, gen, spi, brd, flags, stale) = w[32:]
        try:
            ranges = [_NIBBLE_RANGES[(range_packed >> (4 * b)) & 0xF] for b in range(N_BANKS)]
        except KeyError as exc:
            raise InvalidRangeCode(f"bad packed range word {range_packed:#06x}") from exc
        return cls(
            regmap=regmap,
            data=data,
            staged=[staged_words[n] if (present >> n) & 1 else None for n in range(N_CHANNELS)],
            pwdwn_mask=pwdwn, ranges=ranges, sync_mask=sync, genconfig=gen, spiconfig=spi,
            brdconfig=brd, temp_alarm=bool(flags & 1), dac_busy=bool(flags & 2),
            shutdown_latched=bool(flags & 4), stale_mask=stale,
        )


SERIALIZED_WORDS = 2 * N_CHANNELS + 9
