"""Exception hierarchy shared by every layer of the stack."""


class VanguardError(Exception):
    pass


# codec
class OutOfRange(VanguardError, ValueError):
    pass


# register model
class RegisterError(VanguardError):
    pass


class ReadOnlyRegister(RegisterError):
    pass


class ReservedAddress(RegisterError):
    pass


class InvalidRangeCode(RegisterError, ValueError):
    pass


# spi link
class ReservedBitSet(VanguardError, ValueError):
    pass


class AddressOverrun(VanguardError, ValueError):
    pass


class LengthMismatch(VanguardError, ValueError):
    pass


# uart
class InvalidField(VanguardError, ValueError):
    pass


class PortUnavailable(VanguardError, OSError):
    pass


class Timeout(VanguardError, TimeoutError):
    pass


# analog
class StepTooLarge(VanguardError, ValueError):
    pass


class LevelsNotCrossed(VanguardError, ValueError):
    pass


class TooShort(VanguardError, ValueError):
    pass


# waveform / simulator
class RateInfeasible(VanguardError, ValueError):
    pass


class InvalidProgram(VanguardError, ValueError):
    pass


class ProgramTooLarge(InvalidProgram):
    pass


# harness
class BackendUnavailable(VanguardError):
    pass
