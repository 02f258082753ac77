"""Set-associative LRU write-back, write-allocate cache engine.

Tag, data and LRU state are shared by two pipelines: the four-stage PE
pipeline that serves lookups and the three-stage MEM pipeline that installs
lines returned from DRAM.  The MEM pipeline wins when both are ready.

Replacement is decided when a miss is looked up (the way is reserved for the
incoming line), so hit/miss outcomes never depend on how long DRAM takes to
answer.  :meth:`CacheEngine.mem_fill` completes the reservation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .config import ControllerConfig
from .request import MemRequest, Op


class CacheProtocolError(RuntimeError):
    pass


class Outcome(enum.Enum):
    HIT = "hit"
    HIT_UNDER_MISS = "hit-under-miss"
    MISS = "miss"

    @property
    def is_hit(self) -> bool:
        return self is not Outcome.MISS


class PipelineGrant(enum.Enum):
    RUN_MEM = "run-mem"
    RUN_PE = "run-pe"
    IDLE = "idle"


def arbitrate_pipelines(pe_ready: bool, mem_ready: bool) -> PipelineGrant:
    if mem_ready:
        return PipelineGrant.RUN_MEM
    if pe_ready:
        return PipelineGrant.RUN_PE
    return PipelineGrant.IDLE


@dataclass(slots=True)
class AccessResult:
    hit: bool
    set_index: int
    way: int
    victim_line: int | None = None  # line address evicted by this access
    victim_dirty: bool = False
    victim_data: bytes | None = None


class _PerSet(dict):
    def __init__(self, factory):
        super().__init__()
        self.factory = factory

    def __missing__(self, key):
        value = self[key] = self.factory()
        return value


class CacheState:
    """Functional cache contents: tags, valid/dirty bits, data and LRU order."""

    def __init__(self, num_sets: int, associativity: int, line_bytes: int, track_data: bool = True):
        self.num_sets = num_sets
        self.ways = associativity
        self.line_bytes = line_bytes
        self.track_data = track_data
        # per-set state is created on first touch; most runs use few sets
        self.tags: dict[int, list[int | None]] = _PerSet(lambda: [None] * associativity)
        self.dirty: dict[int, list[bool]] = _PerSet(lambda: [False] * associativity)
        self.data: dict[int, list[bytearray | None]] = _PerSet(lambda: [None] * associativity)
        # way indices, least recently used first
        self.lru: dict[int, list[int]] = _PerSet(lambda: list(range(associativity)))

    @classmethod
    def from_config(cls, cfg: ControllerConfig, track_data: bool = True) -> "CacheState":
        return cls(cfg.num_sets, cfg.cache_associativity, cfg.line_bytes, track_data)

    def split(self, address: int) -> tuple[int, int]:
        """Return (set index, tag) of the line holding ``address``."""
        line = address // self.line_bytes
        return line % self.num_sets, line // self.num_sets

    def line_address(self, set_index: int, tag: int) -> int:
        return (tag * self.num_sets + set_index) * self.line_bytes

    def probe(self, address: int) -> int | None:
        s, tag = self.split(address)
        try:
            return self.tags[s].index(tag)
        except ValueError:
            return None

    def _touch(self, s: int, way: int) -> None:
        order = self.lru[s]
        if order[-1] != way:
            order.remove(way)
            order.append(way)

    def access(self, address: int, write: bool = False) -> AccessResult:
        """Look up ``address``; on a miss, allocate the LRU (or first invalid) way."""
        s, tag = self.split(address)
        tags = self.tags[s]
        if tag in tags:
            way = tags.index(tag)
            self._touch(s, way)
            if write:
                self.dirty[s][way] = True
            return AccessResult(True, s, way)
        try:
            way = tags.index(None)
        except ValueError:
            way = self.lru[s][0]
        result = AccessResult(False, s, way)
        old = tags[way]
        if old is not None:
            result.victim_line = self.line_address(s, old)
            result.victim_dirty = self.dirty[s][way]
            if result.victim_dirty and self.track_data:
                result.victim_data = bytes(self.data[s][way])
        tags[way] = tag
        self.dirty[s][way] = write
        self.data[s][way] = None
        self._touch(s, way)
        return result

    def install(self, s: int, way: int, data: bytes) -> None:
        if self.track_data:
            self.data[s][way] = bytearray(data)

    def read(self, s: int, way: int, offset: int, size: int) -> bytes:
        return bytes(self.data[s][way][offset:offset + size])

    def write(self, s: int, way: int, offset: int, payload: bytes) -> None:
        self.data[s][way][offset:offset + len(payload)] = payload
        self.dirty[s][way] = True

    def check_invariants(self) -> None:
        for s in range(self.num_sets):
            present = [t for t in self.tags[s] if t is not None]
            assert len(present) == len(set(present)), f"duplicate tag in set {s}"
            assert sorted(self.lru[s]) == list(range(self.ways)), f"LRU of set {s} is not a permutation"
            for way in range(self.ways):
                assert not self.dirty[s][way] or self.tags[s][way] is not None, "dirty invalid way"


@dataclass
class MissEntry:
    line: int
    pe_id: int
    issue_cycle: int
    set_index: int
    way: int
    writebacks: list[tuple[int, bytes | None]] = field(default_factory=list)
    waiters: list = field(default_factory=list)

    @property
    def writeback(self) -> tuple[int, bytes | None] | None:
        return self.writebacks[0] if self.writebacks else None


@dataclass
class AccessReport:
    outcome: Outcome
    line: int
    data: bytes | None = None
    new_miss: MissEntry | None = None  # set when a DRAM line read must be issued
    writeback: tuple[int, bytes | None] | None = None


class CacheEngine:
    """Functional cache plus outstanding-miss tracking.

    ``memory`` supplies line contents (``read(addr, n)`` / ``write(addr, data)``)
    and is updated in program order: fills read it and dirty victims are
    written back to it when their replacement is decided.
    """

    def __init__(self, cfg: ControllerConfig, memory=None, track_data: bool = True):
        self.cfg = cfg
        self.state = CacheState.from_config(cfg, track_data and memory is not None)
        self.memory = memory
        self.line_bytes = cfg.line_bytes
        self.misses: dict[int, MissEntry] = {}
        self.hits = 0
        self.hits_under_miss = 0
        self.miss_count = 0
        self.evictions = 0
        self.writebacks = 0

    def pe_access(self, req: MemRequest, cycle: int = 0) -> AccessReport:
        state = self.state
        line = req.address - req.address % self.line_bytes
        offset = req.address - line
        write = req.op is Op.WRITE
        result = state.access(req.address, write)
        active_miss = bool(self.misses)
        report = AccessReport(Outcome.MISS, line)
        if result.hit:
            if active_miss:
                report.outcome = Outcome.HIT_UNDER_MISS
                self.hits_under_miss += 1
            else:
                report.outcome = Outcome.HIT
                self.hits += 1
            pending = self.misses.get(line)
            if pending is not None:
                pending.waiters.append(req)
        else:
            self.miss_count += 1
            if result.victim_line is not None:
                self.evictions += 1
                pending = self.misses.get(result.victim_line)
                if pending is not None and pending.way == result.way:
                    pending.way = -1  # line evicted before its fill arrived
            victim = None
            if result.victim_dirty:
                self.writebacks += 1
                victim = (result.victim_line, result.victim_data)
                if self.memory is not None and result.victim_data is not None:
                    self.memory.write(result.victim_line, result.victim_data)
            entry = self.misses.get(line)
            if entry is None:
                entry = MissEntry(line, req.pe_id, cycle, result.set_index, result.way)
                self.misses[line] = entry
                report.new_miss = entry
            else:
                # line was evicted while its fill was still on the way: wait for that fill
                entry.set_index, entry.way = result.set_index, result.way
            entry.waiters.append(req)
            if victim is not None:
                entry.writebacks.append(victim)
            report.writeback = victim
            if state.track_data:
                state.install(result.set_index, result.way, self.memory.read(line, self.line_bytes))
        if state.track_data:
            if write:
                state.write(result.set_index, result.way, offset, req.payload)
            else:
                report.data = state.read(result.set_index, result.way, offset, req.total_size)
        return report

    def mem_fill(self, line: int, cycle: int = 0, data: bytes | None = None) -> MissEntry:
        """Complete the outstanding miss for ``line``.

        Returns the miss entry; its ``writeback`` is the dirty victim (if any)
        that this fill replaces and ``waiters`` are the requests to answer.
        """
        entry = self.misses.pop(line, None)
        if entry is None:
            raise CacheProtocolError(f"fill for line {line:#x} with no outstanding miss")
        st = self.state
        # contents are installed at lookup in program order; a fill only
        # supplies data for a way that has none (e.g. no backing memory)
        if data is not None and entry.way >= 0 and st.track_data and st.data[entry.set_index][entry.way] is None:
            st.install(entry.set_index, entry.way, data)
        return entry

    @property
    def active_miss(self) -> bool:
        return bool(self.misses)


def cache_time(outcomes: Sequence[Outcome], cfg: ControllerConfig,
               miss_costs: Iterable[int] | int = 0) -> int:
    """Closed-form cache time for a run of consecutive accesses.

    ``miss_costs`` gives, per miss in order, T_sch + T_mem_acc (an int applies
    the same cost to every miss); L_mem is added here.
    """
    if isinstance(miss_costs, int):
        costs = iter(lambda: miss_costs, None)
    else:
        costs = iter(miss_costs)
    total = cfg.ctrl_overhead + cfg.cache_pipeline_fill
    for outcome in outcomes:
        if outcome is Outcome.HIT:
            total += 1
        elif outcome is Outcome.MISS:
            total += cfg.mem_pipeline_fill + next(costs)
    return total


class ReferenceCache:
    """Plain LRU write-back write-allocate cache without any timing.

    Kept deliberately separate from :class:`CacheState` so each can check the
    other.
    """

    def __init__(self, num_sets: int, associativity: int, line_bytes: int):
        from collections import OrderedDict

        self.num_sets = num_sets
        self.ways = associativity
        self.line_bytes = line_bytes
        self.sets = [OrderedDict() for _ in range(num_sets)]  # line -> dirty

    def access(self, address: int, write: bool = False) -> tuple[bool, int | None]:
        """Return (hit, dirty line written back or None)."""
        line = address // self.line_bytes
        lines = self.sets[line % self.num_sets]
        if line in lines:
            lines.move_to_end(line)
            lines[line] = lines[line] or write
            return True, None
        wb = None
        if len(lines) >= self.ways:
            victim, dirty = lines.popitem(last=False)
            if dirty:
                wb = victim * self.line_bytes
        lines[line] = write
        return False, wb
