"""Open-row DRAM latency model.

Latencies are expressed in memory-clock cycles by the timing parameters and
converted to whole controller cycles (ceiling).  The model is latency-only:
one access at a time, no overlap across banks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .config import DramTimingConfig


@dataclass(frozen=True, slots=True)
class DecodedAddress:
    row: int
    bank: int
    column: int


def decode_address(addr: int, timing: DramTimingConfig) -> DecodedAddress:
    amap = timing.address_map
    column = addr & ((1 << amap.column_bits) - 1)
    bank = (addr >> amap.column_bits) & ((1 << amap.bank_bits) - 1)
    row = addr >> amap.row_shift
    return DecodedAddress(row, bank, column)


def encode_address(d: DecodedAddress, timing: DramTimingConfig) -> int:
    amap = timing.address_map
    return (d.row << amap.row_shift) | (d.bank << amap.column_bits) | d.column


def clock_ratio(timing: DramTimingConfig) -> Fraction:
    # via str() so 0.833/3.333 stays the decimal ratio rather than binary noise
    return Fraction(str(timing.t_mem)) / Fraction(str(timing.t_fpga))


def to_controller_cycles(mem_cycles: int, timing: DramTimingConfig) -> int:
    return math.ceil(mem_cycles * clock_ratio(timing))


def t_mem_seq(timing: DramTimingConfig) -> int:
    return to_controller_cycles(timing.t_cl, timing)


def t_mem_rand(timing: DramTimingConfig) -> int:
    return to_controller_cycles(timing.t_rp + timing.t_cl + timing.t_rcd, timing)


def t_mem_seq_exact(timing: DramTimingConfig) -> Fraction:
    return timing.t_cl * clock_ratio(timing)


def t_mem_rand_exact(timing: DramTimingConfig) -> Fraction:
    return (timing.t_rp + timing.t_cl + timing.t_rcd) * clock_ratio(timing)


@dataclass
class BankState:
    open_row: list[int | None]
    first_hits: int = 0
    row_hits: int = 0
    conflicts: int = 0

    @classmethod
    def fresh(cls, num_banks: int) -> "BankState":
        return cls([None] * num_banks)

    @property
    def accesses(self) -> int:
        return self.first_hits + self.row_hits + self.conflicts


@dataclass(frozen=True)
class Latencies:
    """Controller-cycle cost of the three row-buffer outcomes."""

    first: int
    hit: int
    conflict: int

    @classmethod
    def from_timing(cls, timing: DramTimingConfig) -> "Latencies":
        return cls(to_controller_cycles(timing.t_cl + timing.t_rcd, timing),
                   to_controller_cycles(timing.t_cl, timing),
                   to_controller_cycles(timing.t_rp + timing.t_cl + timing.t_rcd, timing))


def access(bank_state: BankState, d: DecodedAddress, timing: DramTimingConfig) -> int:
    lat = Latencies.from_timing(timing)
    return _access(bank_state, d.bank, d.row, lat)


def _access(state: BankState, bank: int, row: int, lat: Latencies) -> int:
    current = state.open_row[bank]
    state.open_row[bank] = row
    if current is None:
        state.first_hits += 1
        return lat.first
    if current == row:
        state.row_hits += 1
        return lat.hit
    state.conflicts += 1
    return lat.conflict


class DramModel:
    """Bank state plus precomputed latencies; the simulator's view of DRAM."""

    def __init__(self, timing: DramTimingConfig):
        self.timing = timing
        self.lat = Latencies.from_timing(timing)
        self.state = BankState.fresh(timing.num_banks)
        amap = timing.address_map
        self._col_bits = amap.column_bits
        self._bank_mask = (1 << amap.bank_bits) - 1
        self._row_shift = amap.row_shift

    def bank_row(self, addr: int) -> tuple[int, int]:
        return (addr >> self._col_bits) & self._bank_mask, addr >> self._row_shift

    def access(self, addr: int) -> int:
        bank, row = self.bank_row(addr)
        return _access(self.state, bank, row, self.lat)

    def access_run(self, addr: int, n_beats: int, beat_bytes: int) -> int:
        """Cost of ``n_beats`` consecutive beats starting at ``addr``.

        Beats are grouped into maximal same-row segments; the first beat of a
        segment pays the bank's current state, the rest are row hits.  This is
        exactly the sum of per-beat :meth:`access` calls.
        """
        total = 0
        span = 1 << self._col_bits
        while n_beats > 0:
            in_segment = max(1, (span - (addr & (span - 1)) + beat_bytes - 1) // beat_bytes)
            count = min(n_beats, in_segment)
            total += self.access(addr)
            if count > 1:
                total += (count - 1) * self.lat.hit
                self.state.row_hits += count - 1
            addr += count * beat_bytes
            n_beats -= count
        return total
