import pytest
from hypothesis import given, strategies as st

from vanguard.codec import B10, RangeCode
from vanguard.errors import InvalidRangeCode, ReadOnlyRegister, ReservedAddress
from vanguard.registers import (BANK_RANGE_REGISTER, DEFAULT_REGISTER_MAP, GEN_AUTO_SHUTDOWN,
                                HIGH_Z, SERIALIZED_WORDS, STATUS_TEMP_ALM, TRIG_ALM_RESET,
                                TRIG_LDAC, TRIG_SOFT_RESET, DacRegisterFile, RefSelect,
                                RegisterMap, range_word)

R = DEFAULT_REGISTER_MAP


def powered_file(**kw) -> DacRegisterFile:
    f = DacRegisterFile(**kw)
    f.configure_power(0x0000)
    return f


def test_async_write_lands_directly():
    f = powered_file()
    f.write_register(R.dac(0), 0xFFFF)
    assert f.data[0] == 0xFFFF
    assert f.output_marker(0) == 0xFFFF


def test_sync_write_is_staged_until_trigger():
    f = powered_file()
    f.write_register(R.addr("SYNCCONFIG"), 1 << 3)
    f.write_register(R.dac(3), 0x1234)
    assert f.data[3] == 0 and f.staged[3] == 0x1234
    assert f.read_register(R.dac(3)) == 0
    f.commit_trigger()
    assert f.data[3] == 0x1234 and f.staged == [None] * 16


def test_soft_ldac_commits():
    f = powered_file(sync_mask=0xFFFF)
    f.write_register(R.dac(7), 0xBEEF)
    f.write_register(R.addr("TRIGGER"), TRIG_LDAC)
    assert f.read_register(R.dac(7)) == 0xBEEF


def test_commit_on_empty_is_noop():
    f = powered_file()
    before = f.copy()
    f.commit_trigger()
    assert f == before


def test_full_power_down_is_high_z():
    f = powered_file()
    f.write_register(R.dac(2), 0x4000)
    f.write_register(R.addr("DACPWDWN"), 0xFFFF)
    assert all(f.output_marker(n) is HIGH_Z for n in range(16))
    assert f.output_voltage(2) is HIGH_Z
    # data survives a power-down
    assert f.read_register(R.dac(2)) == 0x4000


def test_read_back_and_status():
    f = powered_file()
    f.write_register(R.dac(5), 0xABCD)
    assert f.read_register(R.dac(5)) == 0xABCD
    assert not f.read_register(R.addr("STATUS")) & STATUS_TEMP_ALM


def test_ranges_by_bank():
    f = DacRegisterFile()
    f.configure_range(0, RangeCode.B10)
    assert all(f.channel_range(n) == B10 for n in range(4))
    assert f.channel_range(4).range_code is RangeCode.U5
    f.write_register(R.addr(BANK_RANGE_REGISTER[2]), range_word(RangeCode.B5))
    assert f.channel_range(9).range_code is RangeCode.B5
    assert f.read_register(R.addr(BANK_RANGE_REGISTER[2])) == range_word(RangeCode.B5)


def test_range_change_marks_bank_stale_until_rewrite():
    f = powered_file()
    f.configure_range(1, RangeCode.B10)
    assert all(f.stale(n) for n in range(4, 8)) and not f.stale(0)
    f.write_register(R.dac(5), 0x8000)
    assert not f.stale(5) and f.stale(4)


def test_range_errors():
    f = DacRegisterFile()
    with pytest.raises(InvalidRangeCode):
        f.write_register(R.addr("DACRANGE0"), 0xA9AA)   # mixed nibbles in one bank
    with pytest.raises(InvalidRangeCode):
        f.write_register(R.addr("DACRANGE0"), 0x3333)   # undefined nibble
    with pytest.raises(InvalidRangeCode):
        f.configure_range(4, RangeCode.B10)


def test_reference_select():
    f = DacRegisterFile()
    assert f.ref_select is RefSelect.EXTERNAL
    f.configure_reference(RefSelect.INTERNAL_2V5)
    assert f.ref_select is RefSelect.INTERNAL_2V5
    f.configure_reference("External")
    assert f.ref_select is RefSelect.EXTERNAL


def test_temp_alarm_with_auto_shutdown():
    f = powered_file()
    f.write_register(R.addr("GENCONFIG"), GEN_AUTO_SHUTDOWN)
    f.raise_temp_alarm()
    assert all(f.output_marker(n) is HIGH_Z for n in range(16))
    assert f.shutdown_latched
    f.configure_power(0x0000)  # latched: ignored
    assert not f.powered(0)
    once = f.copy()
    f.raise_temp_alarm()
    assert f == once
    f.write_register(R.addr("TRIGGER"), TRIG_ALM_RESET)
    assert not f.temp_alarm and not f.shutdown_latched
    f.configure_power(0x0000)
    assert f.powered(0)


def test_temp_alarm_without_auto_shutdown():
    f = powered_file()
    f.write_register(R.addr("GENCONFIG"), 0)
    f.write_register(R.dac(1), 0x1111)
    f.raise_temp_alarm()
    assert f.output_marker(1) == 0x1111
    assert f.read_register(R.addr("STATUS")) & STATUS_TEMP_ALM


def test_read_only_and_reserved():
    f = DacRegisterFile()
    with pytest.raises(ReadOnlyRegister):
        f.write_register(R.addr("DEVICEID"), 1)
    with pytest.raises(ReservedAddress):
        f.write_register(0x07, 1)
    with pytest.raises(ReservedAddress):
        f.read_register(0x3F)


def test_broadcast_and_soft_reset():
    f = powered_file()
    f.write_register(R.addr("BRDCONFIG"), 0x00FF)
    f.write_register(R.addr("BRDCAST"), 0x5555)
    assert f.data[:8] == [0x5555] * 8 and f.data[8:] == [0] * 8
    f.write_register(R.addr("TRIGGER"), TRIG_SOFT_RESET)
    assert f == DacRegisterFile()


def test_register_map_is_editable():
    moved = R.replace(TRIGGER=0x2A)
    f = DacRegisterFile(regmap=moved, sync_mask=1)
    f.write_register(moved.dac(0), 0x0F0F)
    f.write_register(0x2A, TRIG_LDAC)
    assert f.data[0] == 0x0F0F
    with pytest.raises(ValueError):
        RegisterMap({"A": 1, "B": 1})
    with pytest.raises(ValueError):
        RegisterMap({"A": 0x40})


# -- literal reference model ---------------------------------------------------

class ReferenceDac:
    """Active/pending codes tracked in plain dicts, straight from the stated rules."""

    def __init__(self):
        self.active = {n: 0 for n in range(16)}
        self.pending = {}
        self.sync = set()

    def write(self, ch, word):
        if ch in self.sync:
            self.pending[ch] = word
        else:
            self.active[ch] = word

    def trigger(self):
        self.active.update(self.pending)
        self.pending = {}


ops = st.lists(st.one_of(
    st.tuples(st.just("write"), st.integers(0, 15), st.integers(0, 0xFFFF)),
    st.tuples(st.just("sync"), st.integers(0, 0xFFFF)),
    st.tuples(st.just("trigger")),
    st.tuples(st.just("soft_trigger")),
    st.tuples(st.just("read"), st.integers(0, 15)),
), max_size=60)


@given(ops)
def test_matches_reference_model(seq):
    f = powered_file()
    ref = ReferenceDac()
    for op in seq:
        before = dict(ref.active)
        if op[0] == "write":
            f.write_register(R.dac(op[1]), op[2])
            ref.write(op[1], op[2])
            changed = {n for n in range(16) if before[n] != ref.active[n]}
            assert changed <= {op[1]}
        elif op[0] == "sync":
            f.write_register(R.addr("SYNCCONFIG"), op[1])
            ref.sync = {n for n in range(16) if (op[1] >> n) & 1}
            assert ref.active == before
        elif op[0] == "trigger":
            f.commit_trigger()
            ref.trigger()
        elif op[0] == "soft_trigger":
            f.write_register(R.addr("TRIGGER"), TRIG_LDAC)
            ref.trigger()
        else:
            assert f.read_register(R.dac(op[1])) == ref.active[op[1]]
        assert f.data == [ref.active[n] for n in range(16)]
        assert {n: c for n, c in enumerate(f.staged) if c is not None} == ref.pending


@given(st.sets(st.integers(0, 15), min_size=1), st.data())
def test_commit_is_atomic_over_random_staged_sets(channels, data):
    f = powered_file(sync_mask=0xFFFF)
    codes = {n: data.draw(st.integers(1, 0xFFFF)) for n in channels}
    for n, c in codes.items():
        f.write_register(R.dac(n), c)
    assert f.data == [0] * 16
    f.commit_trigger()
    assert all(f.data[n] == (codes.get(n, 0)) for n in range(16))


files = st.builds(
    DacRegisterFile,
    data=st.lists(st.integers(0, 0xFFFF), min_size=16, max_size=16),
    staged=st.lists(st.one_of(st.none(), st.integers(0, 0xFFFF)), min_size=16, max_size=16),
    pwdwn_mask=st.integers(0, 0xFFFF),
    ranges=st.lists(st.sampled_from(list(RangeCode)), min_size=4, max_size=4),
    sync_mask=st.integers(0, 0xFFFF),
    genconfig=st.integers(0, 0xFFFF),
    temp_alarm=st.booleans(),
    shutdown_latched=st.booleans(),
    stale_mask=st.integers(0, 0xFFFF),
)


@given(files)
def test_serialization_round_trip(f):
    words = f.to_words()
    assert len(words) == SERIALIZED_WORDS
    assert all(0 <= w <= 0xFFFF for w in words)
    assert DacRegisterFile.from_words(words) == f


def test_from_words_rejects_wrong_length():
    with pytest.raises(ValueError):
        DacRegisterFile.from_words([0] * 40)
