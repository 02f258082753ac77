"""Batch-forming, row-reordering request scheduler.

Requests are collected per DRAM bank into double-buffered input buffers.  A
buffer becomes a batch when it fills, when its timeout expires, or when a
request of the other type arrives.  Sealed batches pass one at a time through
a bitonic sorting network keyed on (row, seq_no) and land in an output FIFO
that feeds DRAM.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .config import ControllerConfig
from .request import Op

Comparator = tuple[int, int, bool]  # (low index, high index, ascending)

SENTINEL = (math.inf, math.inf)


def bitonic_network(n: int) -> list[list[Comparator]]:
    """Comparator stages of a bitonic sorter for ``n`` (power of two) inputs."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"bitonic network needs a power-of-two width, got {n}")
    stages: list[list[Comparator]] = []
    k = 2
    while k <= n:
        j = k // 2
        while j >= 1:
            stage = []
            for i in range(n):
                partner = i ^ j
                if partner > i:
                    stage.append((i, partner, (i & k) == 0))
            stages.append(stage)
            j //= 2
        k *= 2
    return stages


def network_depth(n: int) -> int:
    lg = n.bit_length() - 1
    return lg * (lg + 1) // 2


def apply_network(keys: list, stages: Iterable[list[Comparator]]) -> list:
    """Run ``keys`` through the network; returns a new list."""
    out = list(keys)
    for stage in stages:
        for lo, hi, ascending in stage:
            if (out[lo] > out[hi]) == ascending:
                out[lo], out[hi] = out[hi], out[lo]
    return out


def scheduling_time(batch_size: int, data_cond_latency: int) -> int:
    return batch_size + network_depth(batch_size) + data_cond_latency


def schedule_cycles(n: int, cfg: ControllerConfig) -> int:
    """Scheduler latency of one batch holding ``n`` requests.

    The network has fixed width, so a partially filled batch costs the same
    as a full one.
    """
    if not 1 <= n <= cfg.sched_batch_size:
        raise ValueError(f"batch fill {n} outside [1, {cfg.sched_batch_size}]")
    return scheduling_time(cfg.sched_batch_size, cfg.data_cond_latency)


@dataclass(slots=True)
class SchedEntry:
    seq_no: int
    address: int
    bank: int
    row: int
    op: Op
    tag: object = None

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.row, self.seq_no)


@dataclass
class Batch:
    requests: list[SchedEntry]
    op: Op
    formed_at: int
    bank: int = 0
    first_stored_at: int = 0
    buffer: "InputBuffer | None" = field(default=None, repr=False, compare=False)

    @property
    def sort_keys(self) -> list[tuple[int, int]]:
        return [r.sort_key for r in self.requests]


_network_cache: dict[int, list[list[Comparator]]] = {}


def _network(n: int) -> list[list[Comparator]]:
    if n not in _network_cache:
        _network_cache[n] = bitonic_network(n)
    return _network_cache[n]


def sort_batch(batch: Batch, width: int | None = None) -> Batch:
    """Reorder a batch by (row, seq_no) through a bitonic network.

    The batch is padded with sentinel keys to ``width`` (default: next power
    of two of its size) before the network runs.
    """
    if not batch.requests:
        raise ValueError("cannot sort an empty batch")
    n = len(batch.requests)
    width = width or 1 << (n - 1).bit_length()
    if width < n:
        raise ValueError(f"network width {width} below batch size {n}")
    keyed = [(r.row, r.seq_no, i) for i, r in enumerate(batch.requests)]
    keyed += [(*SENTINEL, -1)] * (width - n)
    ordered = apply_network(keyed, _network(width))
    requests = [batch.requests[i] for *_, i in ordered[:n]]
    return Batch(requests, batch.op, batch.formed_at, batch.bank, batch.first_stored_at, batch.buffer)


def row_switches(rows: Sequence[int]) -> int:
    return sum(1 for a, b in zip(rows, rows[1:]) if a != b)


class Decision(enum.Enum):
    BYPASS = "bypass"
    SCHEDULE = "schedule"


def bypass_decision(window: Sequence[tuple[int, int, int, int]], cfg: ControllerConfig) -> Decision:
    """Decide whether a request stream may skip batching.

    ``window`` holds recent arrivals as (cycle, address, bank, row), oldest
    first.  Bypass when traffic is sparse (fewer than one request per
    ``sched_bypass_interval`` cycles) or when every bank sees strictly
    ascending addresses within a single row.
    """
    if len(window) < 2:
        return Decision.BYPASS
    span = window[-1][0] - window[0][0]
    if span >= (len(window) - 1) * cfg.sched_bypass_interval:
        return Decision.BYPASS
    last: dict[int, tuple[int, int]] = {}
    for _, address, bank, row in window:
        prev = last.get(bank)
        if prev is not None and (prev[1] != row or address <= prev[0]):
            return Decision.SCHEDULE
        last[bank] = (address, row)
    return Decision.BYPASS


class EnqueueResult(enum.Enum):
    ACCEPTED = "accepted"
    BATCH_FORMED = "batch-formed"
    BACKPRESSURE = "backpressure"


@dataclass
class InputBuffer:
    bank_affinity: int
    slots: list[SchedEntry] = field(default_factory=list)
    timeout_counter: int = 0
    active_op: Op | None = None
    sealed: bool = False
    first_stored_at: int = 0

    @property
    def free(self) -> bool:
        return not self.sealed and not self.slots

    def clear(self) -> None:
        self.slots = []
        self.timeout_counter = 0
        self.active_op = None
        self.sealed = False


@dataclass
class SchedulerStats:
    batches: int = 0
    requests: int = 0
    timeouts: int = 0
    first_batch_formation: int | None = None
    network_cycles: int = 0


class Scheduler:
    """Cycle-driven scheduler state.

    Per cycle the owner calls :meth:`enqueue` (at most once per bank),
    :meth:`tick`, :meth:`advance`, and drains :meth:`pop`.
    """

    def __init__(self, cfg: ControllerConfig, num_banks: int):
        self.cfg = cfg
        self.batch_size = cfg.sched_batch_size
        self.timeout = cfg.sched_timeout
        self.latency = scheduling_time(cfg.sched_batch_size, cfg.data_cond_latency)
        self.buffers = [[InputBuffer(b), InputBuffer(b)] for b in range(num_banks)]
        self.filling: list[int | None] = [0] * num_banks
        self.sealed: deque[Batch] = deque()
        self.output: deque[SchedEntry] = deque()
        self.output_capacity = cfg.sched_batch_size
        self.in_network: Batch | None = None
        self.network_done = 0
        self.stats = SchedulerStats()
        self._open: set[int] = set()  # banks whose filling buffer is non-empty
        self._ticked = -1
        self._held = 0  # entries in buffers, sealed queue or network

    # -- input side ---------------------------------------------------------
    def _fill_buffer(self, bank: int) -> InputBuffer | None:
        idx = self.filling[bank]
        return None if idx is None else self.buffers[bank][idx]

    def can_accept(self, bank: int, op: Op) -> bool:
        buf = self._fill_buffer(bank)
        if buf is None:
            return False
        if buf.slots and buf.active_op is not op:
            other = self.buffers[bank][1 - self.filling[bank]]
            return other.free
        return True

    def enqueue(self, entry: SchedEntry, cycle: int) -> EnqueueResult:
        bank = entry.bank
        buf = self._fill_buffer(bank)
        if buf is None:
            return EnqueueResult.BACKPRESSURE
        if buf.slots and buf.active_op is not entry.op:
            self._seal(bank, cycle)
            buf = self._fill_buffer(bank)
            if buf is None:
                return EnqueueResult.BACKPRESSURE
        if not buf.slots:
            buf.active_op = entry.op
            buf.timeout_counter = 0
            buf.first_stored_at = cycle
            self._open.add(bank)
        buf.slots.append(entry)
        self._held += 1
        self.stats.requests += 1
        if len(buf.slots) >= self.batch_size:
            self._seal(bank, cycle)
            return EnqueueResult.BATCH_FORMED
        return EnqueueResult.ACCEPTED

    def _seal(self, bank: int, cycle: int, timed_out: bool = False) -> Batch:
        idx = self.filling[bank]
        buf = self.buffers[bank][idx]
        buf.sealed = True
        self._open.discard(bank)
        batch = Batch(list(buf.slots), buf.active_op, cycle, bank, buf.first_stored_at, buf)
        self.sealed.append(batch)
        other = self.buffers[bank][1 - idx]
        self.filling[bank] = (1 - idx) if other.free else None
        self.stats.batches += 1
        if timed_out:
            self.stats.timeouts += 1
        if self.stats.first_batch_formation is None:
            self.stats.first_batch_formation = cycle - buf.first_stored_at
        return batch

    def tick(self, cycle: int) -> list[Batch]:
        """Advance timeout counters; returns batches sealed by timeout.
        Counters move at most once per cycle however often this is called."""
        if cycle == self._ticked:
            return []
        self._ticked = cycle
        formed = []
        for bank in sorted(self._open):
            buf = self._fill_buffer(bank)
            buf.timeout_counter += 1
            if buf.timeout_counter >= self.timeout:
                formed.append(self._seal(bank, cycle, timed_out=True))
        return formed

    # -- network and output -------------------------------------------------
    def advance(self, cycle: int) -> Batch | None:
        """Move batches through the sorting network; returns a batch that
        finished sorting this cycle."""
        finished = None
        if self.in_network is not None and cycle >= self.network_done:
            finished = self.in_network
            self.in_network = None
            self.output.extend(finished.requests)
            self._held -= len(finished.requests)
            buf = finished.buffer
            buf.clear()
            bank = buf.bank_affinity
            if self.filling[bank] is None:
                self.filling[bank] = 0 if self.buffers[bank][0] is buf else 1
        if (self.in_network is None and self.sealed
                and len(self.output) + len(self.sealed[0].requests) <= self.output_capacity):
            batch = self.sealed.popleft()
            ordered = sort_batch(batch, self.batch_size)
            self.in_network = ordered
            self.network_done = cycle + self.latency
            self.stats.network_cycles += self.latency
        return finished

    def pop(self) -> SchedEntry | None:
        return self.output.popleft() if self.output else None

    def peek(self) -> SchedEntry | None:
        return self.output[0] if self.output else None

    @property
    def empty(self) -> bool:
        return self._held == 0 and not self.output

    @property
    def holding(self) -> int:
        return self._held
