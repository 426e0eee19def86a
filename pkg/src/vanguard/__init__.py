"""Host control stack and behavioral digital twin for a dual-DAC81416 electrode-control module."""
from .codec import (B5, B10, DeviceOffset, EndpointInclusive, MappingConvention, OutputRange,
                    RangeCode, SpanOverTwoSixteen, apply_device_offset, code_to_voltage, lsb_size,
                    voltage_to_code)
from .registers import HIGH_Z, DacRegisterFile, RefSelect
from .simulator import SomSimulator

__version__ = "0.1.0"

__all__ = [
    "B5", "B10", "DeviceOffset", "EndpointInclusive", "MappingConvention", "OutputRange",
    "RangeCode", "SpanOverTwoSixteen", "apply_device_offset", "code_to_voltage", "lsb_size",
    "voltage_to_code", "HIGH_Z", "DacRegisterFile", "RefSelect", "SomSimulator",
]
