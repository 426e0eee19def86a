import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vanguard.analog import (AnalogChannelState, AnalogParams, Spectrum, Waveform, dnl_error,
                             estimate_psd, filter_response, johnson_noise_density, measure_slew,
                             noise_record, simulate_transition, step_channel)
from vanguard.errors import LevelsNotCrossed, StepTooLarge, TooShort

P = AnalogParams()
LSB = 20 / 65535


def ramp_rc_oracle(t, v0, v1, slew, tau):
    """Filter output for a slew-limited step, from the convolution integral."""
    t = np.asarray(t, dtype=float)
    r = math.copysign(slew, v1 - v0)
    t_ramp = abs(v1 - v0) / slew
    during = v0 + r * (t - tau * (1 - np.exp(-t / tau)))
    y_end = v0 + r * (t_ramp - tau * (1 - math.exp(-t_ramp / tau)))
    after = v1 - (v1 - y_end) * np.exp(-(t - t_ramp) / tau)
    return np.where(t <= t_ramp, during, after)


def test_time_constant():
    assert P.tau == pytest.approx(3.3006e-6, rel=1e-4)


def test_fixed_point():
    s = AnalogChannelState.steady(1.25, P)
    assert step_channel(s, 1e-7) == s


def test_slew_limiter_reaches_target_at_5us():
    s = AnalogChannelState(10.0, -10.0, -10.0, P)
    s = s.advance(4.999e-6)
    assert s.pre_filter < 10.0
    s = s.advance(0.001e-6)
    assert s.pre_filter == 10.0


def test_rc_only_step_hits_one_minus_inv_e_at_tau():
    p = AnalogParams(slew_rate=math.inf)
    s = AnalogChannelState(1.0, 0.0, 0.0, p).advance(p.tau)
    assert s.out == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert round(s.out, 5) == 0.63212


def test_value_at_end_of_ramp():
    w = simulate_transition(P, -10, 10, 40e-6, P.tau / 100)
    oracle = 4e6 * (5e-6 - P.tau * (1 - math.exp(-5e-6 / P.tau))) - 10
    v5 = np.interp(5e-6, w.times, w.samples)
    # the closed form evaluates to -0.3000 V
    assert oracle == pytest.approx(-0.30005, abs=1e-4)
    assert v5 == pytest.approx(oracle, abs=2e-4)


def test_integrator_matches_closed_form():
    dt = P.tau / 100
    w = simulate_transition(P, -10, 10, 60e-6, dt)
    ref = ramp_rc_oracle(w.times, -10, 10, P.slew_v_per_s, P.tau)
    rel = np.max(np.abs(w.samples - ref)) / 20
    assert rel < 1e-3


def test_constant_and_odd_symmetry():
    w = simulate_transition(P, 2.5, 2.5, 40e-6, 1e-7)
    assert np.all(w.samples == 2.5)
    up = simulate_transition(P, -10, 10, 40e-6, 1e-7)
    down = simulate_transition(P, 10, -10, 40e-6, 1e-7)
    assert np.array_equal(down.samples, (-up).samples)


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.5, 20))
def test_no_overshoot_and_slew_bound(v0, v1, slew):
    p = AnalogParams(slew_rate=slew)
    s = AnalogChannelState.steady(v0, p)
    s.target = v1
    lo, hi = min(v0, v1), max(v0, v1)
    dt = p.tau / 20
    for _ in range(400):
        nxt = step_channel(s, dt)
        assert abs(nxt.pre_filter - s.pre_filter) <= p.slew_v_per_s * dt * (1 + 1e-9) + 1e-12
        assert lo <= nxt.out <= hi
        s = nxt


def test_steady_state_is_target_plus_offset_exactly():
    p = AnalogParams(offset=1.07e-3)
    w = simulate_transition(p, -10, 3.0, 200e-6, 1e-7)
    assert w.samples[-1] == 3.0 + 1.07e-3


def test_settles_within_derived_window():
    # ramp end leaves a residual e0; the exponential tail reaches 1 LSB after tau*ln(e0/LSB)
    e0 = 10 - ramp_rc_oracle([5e-6], -10, 10, P.slew_v_per_s, P.tau)[0]
    t_settle = 5e-6 + P.tau * math.log(e0 / LSB)
    dt = 1e-8
    w = simulate_transition(P, -10, 10, 60e-6, dt)
    err = np.abs(w.samples - 10)
    late = w.times > t_settle + dt
    early = w.times < t_settle - dt
    assert np.all(err[late] < LSB)
    assert np.all(err[early] >= LSB)


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        step_channel(AnalogChannelState(), P.tau / 5)
    with pytest.raises(ValueError):
        simulate_transition(P, 0, 1, 5 * P.tau, 1e-8)


def test_measure_slew_definitions():
    t = np.arange(0, 10e-6, 1e-8)
    ramp = Waveform(0.0, 1e-8, np.clip(-10 + 4e6 * t, -10, 10))
    assert measure_slew(ramp) == pytest.approx(4.0, rel=1e-6)

    w = simulate_transition(P, -10, 10, 40e-6, 1e-8)
    t10, t90 = 1.99987e-6, 10.40969e-6
    assert measure_slew(w) == pytest.approx(16 / ((t90 - t10) * 1e6), rel=1e-4)
    assert measure_slew(w) == pytest.approx(1.90, abs=0.01)
    assert measure_slew(-w) == measure_slew(w)

    p = AnalogParams(slew_rate=math.inf)
    w = simulate_transition(p, -10, 10, 40e-6, 1e-9 * 3.3)
    assert measure_slew(w) == pytest.approx(16 / (math.log(9) * p.tau) / 1e6, rel=1e-3)
    assert measure_slew(w) == pytest.approx(2.206, abs=1e-3)

    with pytest.raises(LevelsNotCrossed):
        measure_slew(Waveform(0.0, 1e-6, np.ones(10)))


def test_johnson():
    assert johnson_noise_density(1, 300) == pytest.approx(0.1287e-9, rel=5e-3)
    assert johnson_noise_density(0, 300) == 0
    assert johnson_noise_density(4, 300) == pytest.approx(2 * johnson_noise_density(1, 300))
    with pytest.raises(ValueError):
        johnson_noise_density(-1, 300)


def test_filter_response():
    db, deg = filter_response(P, 48_220)
    assert db == pytest.approx(-3.0103, abs=1e-4) and deg == pytest.approx(-45)
    assert filter_response(P, 482_200)[0] == pytest.approx(-20.04, abs=0.01)
    assert filter_response(P, 1e-3)[0] == pytest.approx(0, abs=1e-9)
    with pytest.raises(ValueError):
        filter_response(P, 0)


def test_dnl_bounds_and_determinism():
    errs = [dnl_error(c, 7, LSB) for c in range(2000)]
    assert max(map(abs, errs)) <= LSB / 4
    assert errs == [dnl_error(c, 7, LSB) for c in range(2000)]
    assert errs != [dnl_error(c, 8, LSB) for c in range(2000)]


def test_psd_of_white_noise_is_flat():
    d = 1e-8
    p = AnalogParams(noise_density=d)
    dt = 1 / 20_000
    # ~4000 averaged segments put per-bin scatter near 1.6%
    x = noise_record(p, 1000 * 4001, dt, np.random.default_rng(0))
    spec = estimate_psd(Waveform(0.0, dt, x), rbw=10).band(10 ** 1.5, 10 ** 3.5)
    assert np.all(np.abs(spec.psd / d**2 - 1) < 0.10)
    assert np.mean(spec.psd) / d**2 == pytest.approx(1, rel=0.01)


def test_psd_dc_and_parseval():
    dt = 1 / 20_000
    n = 2000 * 16
    dc = estimate_psd(Waveform(0.0, dt, np.full(n, 3.0)))
    assert np.all(dc.psd[1:] < 1e-20)
    a, f0 = 0.5, 1230.0
    t = np.arange(n) * dt
    spec = estimate_psd(Waveform(0.0, dt, a * np.sin(2 * np.pi * f0 * t)))
    peak = spec.band(f0 - 50, f0 + 50)
    power = np.sum(peak.psd) * 10.0
    assert power == pytest.approx(a**2 / 2, rel=0.05)


def test_psd_too_short():
    with pytest.raises(TooShort):
        estimate_psd(Waveform(0.0, 1e-4, np.zeros(100)), rbw=10)


def test_probe_noise_band_clip():
    p = AnalogParams(noise_density=1e-6, noise_band=30e-6)
    x = noise_record(p, 10_000, 1e-6, np.random.default_rng(1))
    assert np.max(np.abs(x)) <= 30e-6
    s = AnalogChannelState.steady(1.0, p)
    v = s.probe(1e-6, np.random.default_rng(2))
    assert abs(v - 1.0) <= 30e-6


def test_flicker_shaping_raises_low_frequencies():
    p = AnalogParams(noise_density=1e-8, flicker_corner_hz=1000)
    dt = 1 / 20_000
    x = noise_record(p, 2000 * 32, dt, np.random.default_rng(3))
    spec = estimate_psd(Waveform(0.0, dt, x))
    low = spec.band(20, 40).psd.mean()
    high = spec.band(5000, 9000).psd.mean()
    assert low > 10 * high


def test_waveform_and_spectrum_csv():
    w = Waveform(1e-6, 1e-8, np.array([0.1, -0.2, 1 / 3]))
    back = Waveform.from_csv(w.to_csv())
    assert np.array_equal(back.samples, w.samples) and back.t0 == w.t0
    spec = Spectrum(np.array([10.0, 20.0]), np.array([1e-16, 2e-16]))
    assert spec.to_csv().splitlines()[0] == "f_hz,psd_v2hz"
    assert np.array_equal((spec - spec).psd, [0, 0])


def test_gain_only_with_temperature_delta():
    assert P.gain == 1.0
    assert AnalogParams(temp_delta_C=10).gain == pytest.approx(1 + 5e-5)
