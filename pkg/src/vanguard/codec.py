"""Exact conversion between 16-bit DAC codes and output volts.

All arithmetic is done on :class:`fractions.Fraction`; callers that want a
float convert at the boundary with ``float(...)``.
"""
from __future__ import annotations

import enum
from functools import lru_cache
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from numbers import Rational
from typing import Union

from .errors import OutOfRange

Number = Union[int, float, Fraction, Decimal]

CODE_BITS = 16
CODE_MAX = (1 << CODE_BITS) - 1


def as_fraction(x: Number) -> Fraction:
    """Exact rational view of ``x``.

    Floats go through their shortest decimal repr so that ``1.07e-3`` means
    the decimal 0.00107 rather than the nearest binary double.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, Decimal):
        return Fraction(x)
    return Fraction(repr(float(x)))


class RangeCode(enum.Enum):
    U5 = "U5"
    U10 = "U10"
    U20 = "U20"
    U40 = "U40"
    B2V5 = "B2V5"
    B5 = "B5"
    B10 = "B10"
    B20 = "B20"

    @property
    def bipolar(self) -> bool:
        return self.value.startswith("B")


_SPANS = {
    RangeCode.U5: (Fraction(0), Fraction(5)),
    RangeCode.U10: (Fraction(0), Fraction(10)),
    RangeCode.U20: (Fraction(0), Fraction(20)),
    RangeCode.U40: (Fraction(0), Fraction(40)),
    RangeCode.B2V5: (Fraction(-5, 2), Fraction(5, 2)),
    RangeCode.B5: (Fraction(-5), Fraction(5)),
    RangeCode.B10: (Fraction(-10), Fraction(10)),
    RangeCode.B20: (Fraction(-20), Fraction(20)),
}


@dataclass(frozen=True)
class OutputRange:
    low: Fraction
    high: Fraction
    range_code: RangeCode

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"empty range [{self.low}, {self.high}]")
        if self.range_code.bipolar and self.low != -self.high:
            raise ValueError(f"{self.range_code.name} must be symmetric about 0 V")

    @classmethod
    def from_code(cls, code: RangeCode | str) -> "OutputRange":
        code = RangeCode(code) if isinstance(code, str) else code
        low, high = _SPANS[code]
        return cls(low, high, code)

    @property
    def span(self) -> Fraction:
        return self.high - self.low


B10 = OutputRange.from_code(RangeCode.B10)
B5 = OutputRange.from_code(RangeCode.B5)


class MappingConvention(enum.Enum):
    # V(0xFFFF) == high
    ENDPOINT_INCLUSIVE = "EndpointInclusive"
    # V(0xFFFF) == high - LSB
    SPAN_OVER_TWO_SIXTEEN = "SpanOverTwoSixteen"


EndpointInclusive = MappingConvention.ENDPOINT_INCLUSIVE
SpanOverTwoSixteen = MappingConvention.SPAN_OVER_TWO_SIXTEEN
DEFAULT_CONVENTION = EndpointInclusive


@dataclass(frozen=True)
class DeviceOffset:
    """Constant added to every channel output of one DAC."""

    offset: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "offset", as_fraction(self.offset))


def lsb_size(rng: OutputRange = B10, conv: MappingConvention = DEFAULT_CONVENTION) -> Fraction:
    return _scale(rng, conv)[0]


@lru_cache(maxsize=None)
def _scale(rng: OutputRange, conv: MappingConvention):
    # (lsb, low numerator, low denominator, lsb numerator, lsb denominator)
    steps = CODE_MAX if conv is EndpointInclusive else 1 << CODE_BITS
    lsb = rng.span / steps
    return lsb, rng.low.numerator, rng.low.denominator, lsb.numerator, lsb.denominator


def _check_code(code: int) -> int:
    code = int(code)
    if not 0 <= code <= CODE_MAX:
        raise OutOfRange(f"code {code:#x} does not fit in {CODE_BITS} bits")
    return code


def code_to_voltage(code: int, rng: OutputRange = B10,
                    conv: MappingConvention = DEFAULT_CONVENTION) -> Fraction:
    _, ln, ld, sn, sd = _scale(rng, conv)
    return Fraction(ln * sd + _check_code(code) * sn * ld, ld * sd)


def voltage_to_code(v: Number, rng: OutputRange = B10,
                    conv: MappingConvention = DEFAULT_CONVENTION) -> int:
    """Nearest code to ``v``; exact half-LSB ties go to the larger code."""
    v = as_fraction(v)
    if not rng.low <= v <= rng.high:
        raise OutOfRange(f"{float(v)} V outside [{float(rng.low)}, {float(rng.high)}] V")
    _, ln, ld, sn, sd = _scale(rng, conv)
    # x = (v - low) / lsb as num/den, with x >= 0
    num = (v.numerator * ld - ln * v.denominator) * sd
    den = v.denominator * ld * sn
    # half-away-from-zero on a non-negative x is floor(x + 1/2)
    code = (2 * num + den) // (2 * den)
    return min(code, CODE_MAX)


def apply_device_offset(v: Number, dev: DeviceOffset) -> Fraction:
    return as_fraction(v) + dev.offset
