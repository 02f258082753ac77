from decimal import ROUND_CEILING, Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from memctl.config import DramTimingConfig
from memctl.dram import (BankState, DecodedAddress, DramModel, Latencies, access, clock_ratio,
                         decode_address, encode_address, t_mem_rand, t_mem_rand_exact, t_mem_seq,
                         t_mem_seq_exact, to_controller_cycles)

DEFAULT = DramTimingConfig()
NARROW_MAP = DramTimingConfig(column_bits=6, row_bits=21)  # 6 column bits, 4 bank bits


def ceil_cycles(mem_cycles, t_mem="0.833", t_fpga="3.333"):
    """Decimal-arithmetic oracle for the clock conversion."""
    value = Decimal(mem_cycles) * Decimal(t_mem) / Decimal(t_fpga)
    return int(value.to_integral_value(rounding=ROUND_CEILING))


def test_oracle_latencies():
    assert ceil_cycles(34) == 9
    assert ceil_cycles(17) == 5
    assert ceil_cycles(51) == 13
    assert Latencies.from_timing(DEFAULT) == Latencies(9, 5, 13)


def test_first_hit_conflict_sequence():
    state = BankState.fresh(16)
    d = DecodedAddress(row=3, bank=2, column=0)
    assert access(state, d, DEFAULT) == 9
    assert access(state, d, DEFAULT) == 5
    assert access(state, DecodedAddress(4, 2, 0), DEFAULT) == 13
    assert (state.first_hits, state.row_hits, state.conflicts) == (1, 1, 1)


def test_seq_and_rand_latencies():
    assert t_mem_seq(DEFAULT) == 5
    assert t_mem_rand(DEFAULT) == 13
    unit = DramTimingConfig(t_mem=2.0, t_fpga=2.0)
    assert t_mem_seq(unit) == 17
    assert t_mem_rand(unit) == 51
    assert t_mem_seq(DramTimingConfig(t_cl=0)) == 0


def test_ratio_is_three_before_ceiling():
    assert t_mem_rand_exact(DEFAULT) / t_mem_seq_exact(DEFAULT) == 3


def test_clock_ratio_uses_decimal_values():
    assert clock_ratio(DEFAULT) == Fraction(833, 3333)
    assert to_controller_cycles(17, DEFAULT) == 5


def test_decode_zero_and_narrow_map_example():
    assert decode_address(0, DEFAULT) == DecodedAddress(0, 0, 0)
    assert decode_address(0x40, NARROW_MAP) == DecodedAddress(row=0, bank=1, column=0)


def test_row_only_address():
    addr = 0b101 << NARROW_MAP.address_map.row_shift
    assert decode_address(addr, NARROW_MAP) == DecodedAddress(row=0b101, bank=0, column=0)


def test_default_map_keeps_8k_row_segments_in_one_bank():
    banks = {decode_address(a, DEFAULT).bank for a in range(0, 8192, 64)}
    assert banks == {0}
    assert decode_address(8192, DEFAULT).bank == 1


@settings(max_examples=200, deadline=None)
@given(addr=st.integers(0, (1 << 31) - 1), timing=st.sampled_from([DEFAULT, NARROW_MAP]))
def test_decode_encode_round_trip(addr, timing):
    assert encode_address(decode_address(addr, timing), timing) == addr


@settings(max_examples=100, deadline=None)
@given(accesses=st.lists(st.tuples(st.integers(0, 15), st.integers(0, 7)), max_size=200))
def test_counters_sum_to_accesses(accesses):
    state = BankState.fresh(16)
    for bank, row in accesses:
        access(state, DecodedAddress(row, bank, 0), DEFAULT)
    assert state.accesses == len(accesses)
    touched = {b for b, _ in accesses}
    assert all((state.open_row[b] is None) == (b not in touched) for b in range(16))


@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 200))
def test_same_row_run_cost(k):
    unit = DramTimingConfig(t_mem=1.0, t_fpga=1.0)
    state = BankState.fresh(16)
    total = sum(access(state, DecodedAddress(9, 4, 0), unit) for _ in range(k))
    assert total == (unit.t_cl + unit.t_rcd) + (k - 1) * unit.t_cl


@settings(max_examples=100, deadline=None)
@given(t_cl=st.integers(2, 40), data=st.data())
def test_conflict_to_hit_ratio_between_two_and_three(t_cl, data):
    t_rp = data.draw(st.integers(-(-t_cl // 2), t_cl))
    t_rcd = data.draw(st.integers(-(-t_cl // 2), t_cl))
    ratio = Fraction(t_rp + t_cl + t_rcd, t_cl)
    assert 2 <= ratio <= 3


@settings(max_examples=100, deadline=None)
@given(addr=st.integers(0, 1 << 28).map(lambda a: a & ~63), beats=st.integers(1, 400),
       warm=st.lists(st.integers(0, 1 << 28), max_size=5))
def test_access_run_equals_per_beat_sum(addr, beats, warm):
    a, b = DramModel(DEFAULT), DramModel(DEFAULT)
    for w in warm:
        a.access(w)
        b.access(w)
    run = a.access_run(addr, beats, 64)
    per_beat = sum(b.access(addr + 64 * i) for i in range(beats))
    assert run == per_beat
    assert (a.state.first_hits, a.state.row_hits, a.state.conflicts) == \
           (b.state.first_hits, b.state.row_hits, b.state.conflicts)


@pytest.mark.parametrize("beats,expected", [(1, 9), (16, 9 + 15 * 5), (128, 9 + 127 * 5)])
def test_sequential_stream_cost(beats, expected):
    assert DramModel(DEFAULT).access_run(0, beats, 64) == expected
