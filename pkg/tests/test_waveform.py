import pytest
from hypothesis import given, strategies as st

from vanguard.analog import AnalogParams
from vanguard.codec import code_to_voltage, lsb_size
from vanguard.errors import InvalidProgram, OutOfRange, RateInfeasible
from vanguard.registers import DEFAULT_REGISTER_MAP as R
from vanguard.spi import LinkConfig
from vanguard.waveform import (PlaybackMode, RampSpec, Step, UpdateMode, WaveformProgram,
                               generate_ramp, max_update_rate, transaction_ticks, validate)


def test_transaction_ticks():
    assert transaction_ticks(LinkConfig()) == 24
    assert transaction_ticks(LinkConfig(50e6)) == 5            # 4.8 ticks rounds up
    assert transaction_ticks(LinkConfig(10e6, gap_bits=2)) == 26


def test_ramp_minus_one_to_one():
    prog = generate_ramp(RampSpec(0, -1.0, 1.0, 1e-3, 11))
    assert len(prog) == 11
    codes = [s.code for s in prog.steps]
    assert codes == sorted(codes)
    assert [s.offset for s in prog.steps] == [1000 * k for k in range(11)]
    half = lsb_size() / 2
    assert abs(code_to_voltage(codes[0]) - (-1)) <= half
    assert abs(code_to_voltage(codes[-1]) - 1) <= half
    assert all(s.addr == R.dac(0) for s in prog.steps)
    assert validate(prog).clean


def test_flat_ramp_is_constant():
    prog = generate_ramp(RampSpec(3, 0.0, 0.0, 1e-3, 5, dac=1))
    assert len({s.code for s in prog.steps}) == 1
    assert all(s.dac == 1 and s.addr == R.dac(3) for s in prog.steps)


def test_infeasible_ramp():
    with pytest.raises(RateInfeasible):
        generate_ramp(RampSpec(0, -10, 10, 100e-6, 64))
    with pytest.raises(OutOfRange):
        generate_ramp(RampSpec(0, -10.5, 10, 1e-3, 4))
    with pytest.raises(ValueError):
        RampSpec(0, 0, 1, 1e-3, 1)


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(2, 200))
def test_ramp_endpoints_within_half_lsb(v0, v1, n):
    prog = generate_ramp(RampSpec(0, v0, v1, 1e-3, n))
    half = float(lsb_size() / 2)
    assert abs(float(code_to_voltage(prog.steps[0].code)) - v0) <= half + 1e-12
    assert abs(float(code_to_voltage(prog.steps[-1].code)) - v1) <= half + 1e-12
    assert prog.steps[-1].offset == 10_000
    assert validate(prog).loadable


def test_spacing_violation():
    prog = WaveformProgram((Step(0, 0, R.dac(0), 0), Step(10, 0, R.dac(1), 0)))
    report = validate(prog)
    assert len(report.spacing_violations) == 1 and not report.loadable
    # different devices do not contend for one link
    prog = WaveformProgram((Step(0, 0, R.dac(0), 0), Step(10, 1, R.dac(0), 0)))
    assert validate(prog).loadable


def test_filter_warning_for_fast_full_range_pair():
    prog = WaveformProgram((Step(0, 0, R.dac(0), 0x0000), Step(25, 0, R.dac(0), 0xFFFF)))
    report = validate(prog, AnalogParams())
    assert report.filter_warnings and report.slew_warnings and report.loadable
    assert not report.clean


def test_offsets_must_not_decrease():
    with pytest.raises(InvalidProgram):
        WaveformProgram((Step(50, 0, 0x10, 0), Step(10, 0, 0x10, 0)))
    with pytest.raises(InvalidProgram):
        WaveformProgram((Step(0, 2, 0x10, 0),))


def test_program_text_round_trip():
    prog = WaveformProgram((Step(0, 0, 0x10, 0x0000), Step(24, 1, 0x1F, 0xFFFF)),
                           PlaybackMode.STAGED_SYNC)
    text = prog.to_text()
    assert text.splitlines() == ["vanguard-wave v1", "mode StagedSync", "0 0 10 0000", "24 1 1F FFFF"]
    assert WaveformProgram.from_text(text) == prog
    with pytest.raises(InvalidProgram):
        WaveformProgram.from_text("0 0 10 0000\n")


def test_update_rates():
    assert max_update_rate() == pytest.approx(416_666.67, abs=0.01)
    assert max_update_rate(LinkConfig(), UpdateMode.STREAMING, 16) == pytest.approx(10e6 * 16 / 264)
    assert max_update_rate(LinkConfig(50e6)) == pytest.approx(2_083_333.33, abs=0.01)
    with pytest.raises(ValueError):
        max_update_rate(mode="streaming", channels=0)


@given(st.integers(1, 16), st.integers(0, 32))
def test_streaming_never_slower(k, gap):
    link = LinkConfig(10e6, gap)
    assert max_update_rate(link, "streaming", k) >= max_update_rate(link, "individual")
