"""Top-level controller simulation.

The simulator is event driven: components are woken at the cycles where they
can make progress, and every wake-up re-checks its own conditions, so extra
wake-ups are harmless.  Within one cycle components run in a fixed order
(DMA completion, DMA accept, cache port, memory path / scheduler, DRAM) which
makes runs bit-for-bit reproducible.

Timing summary (controller cycles):

* A request enters the controller when its PE port is free; it reaches its
  engine ``ctrl_overhead`` cycles later.  Writes occupy the port for one
  extra cycle per payload flit.
* The cache port performs one operation per cycle; line fills from DRAM take
  priority over PE lookups.  A hit is ready ``cache_pipeline_fill + 1``
  cycles after lookup.  A miss leaves the tag stages ``cache_pipeline_fill``
  cycles after lookup, goes to DRAM through the bypass path or the batch
  scheduler, and its waiters are ready ``mem_pipeline_fill`` cycles after the
  fill occupies the port.
* DRAM serves one access at a time.  Cache-side accesses win arbitration
  unless a DMA transfer is active; a started transfer holds DRAM until its
  last beat.
* Requests retire in submission order, which satisfies the per-engine FIFO
  rules, the cache/DMA ordering rules and per-address order.  A DMA transfer
  only starts once every request of the preceding cache run has retired.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cache import CacheEngine, Outcome
from .config import ConfigValidationError, ControllerConfig, DramTimingConfig, validate
from .dma import DmaEngine, dma_issue
from .dram import DramModel
from .request import (AccessClass, Destination, Flit, FlitKind, MalformedRequestError, MemRequest, Op,
                      RoutingError, check_request)
from .scheduler import Decision, SchedEntry, Scheduler, bypass_decision
from .workloads import CLS_BULK, CLS_CACHE, OP_WRITE, Trace, synth_payload

LOG_FORMAT_VERSION = 1

# wake-up priorities inside one cycle
_DMA_DONE, _ACCEPT, _CACHE, _MEMPATH, _DRAM = range(5)


class SimulationError(RuntimeError):
    """Internal invariant broken (deadlock, lost request)."""


class Grant(enum.Enum):
    CACHE = "cache"
    DMA = "dma"
    NONE = "none"


@dataclass
class ArbitrationState:
    dma_active: bool = False
    cache_pending: int = 0
    dma_pending: int = 0


def arbitrate(state: ArbitrationState) -> Grant:
    """DRAM grant: an active DMA transfer keeps it, otherwise cache first."""
    if state.dma_active:
        return Grant.DMA
    if state.cache_pending:
        return Grant.CACHE
    if state.dma_pending:
        return Grant.DMA
    return Grant.NONE


class SparseMemory:
    """Byte-addressable backing store, zero-initialized, allocated in pages."""

    PAGE = 4096

    def __init__(self):
        self.pages: dict[int, bytearray] = {}

    def read(self, address: int, size: int) -> bytes:
        out = bytearray()
        while size > 0:
            page, off = divmod(address, self.PAGE)
            n = min(size, self.PAGE - off)
            data = self.pages.get(page)
            out += data[off:off + n] if data is not None else bytes(n)
            address += n
            size -= n
        return bytes(out)

    def write(self, address: int, data: bytes) -> None:
        pos = 0
        while pos < len(data):
            page, off = divmod(address + pos, self.PAGE)
            n = min(len(data) - pos, self.PAGE - off)
            buf = self.pages.setdefault(page, bytearray(self.PAGE))
            buf[off:off + n] = data[pos:pos + n]
            pos += n


# ----------------------------------------------------------------------------
# event log

@dataclass(frozen=True)
class Event:
    cycle: int
    kind: str
    seq: int
    fields: tuple[tuple[str, str], ...] = ()

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return default

    def to_line(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in self.fields)
        return f"{self.cycle} {self.kind} {self.seq}" + (f" {extra}" if extra else "")

    @classmethod
    def from_line(cls, line: str) -> "Event":
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"malformed event line {line!r}")
        fields = tuple(tuple(p.split("=", 1)) for p in parts[3:])
        return cls(int(parts[0]), parts[1], int(parts[2]), fields)


def serialize_events(events: Iterable[Event]) -> str:
    lines = [f"#format_version={LOG_FORMAT_VERSION}"]
    lines += [e.to_line() for e in events]
    return "\n".join(lines) + "\n"


def parse_events(text: str) -> list[Event]:
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "format_version" and value.strip() != str(LOG_FORMAT_VERSION):
                raise ValueError(f"line {line_no}: unsupported event log version {value.strip()}")
            continue
        try:
            out.append(Event.from_line(line))
        except ValueError as exc:
            raise ValueError(f"line {line_no}: {exc}") from None
    return out


# ----------------------------------------------------------------------------
# consistency checking

@dataclass(frozen=True)
class OrderViolation:
    rule: str
    first: int
    second: int
    detail: str

    def __str__(self) -> str:
        return f"rule {self.rule}: requests {self.first} and {self.second}: {self.detail}"


@dataclass
class ConsistencyReport:
    order: list[int]
    violations: list[OrderViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def legal_completion_order(classes: Sequence[str]) -> list[int]:
    """The completion order the ordering rules force for requests arriving in
    the given order ('C' cache, 'D' DMA).

    Each maximal run of one engine finishes before the next run starts and
    runs are FIFO internally, so the result is the arrival order.
    """
    order: list[int] = []
    run: list[int] = []
    for i, c in enumerate(classes):
        if run and classes[run[-1]] != c:
            order += run
            run = []
        run.append(i)
    return order + run


def consistency_order(events: Sequence[Event]) -> ConsistencyReport:
    """Check a simulation event log against the ordering rules.

    Independent of the simulator: it only looks at submitted, completed and
    memory-path records.
    """
    submitted: dict[int, str] = {}
    arrival: list[int] = []
    for e in events:
        if e.kind == "submitted":
            if e.seq in submitted:
                return ConsistencyReport([], [OrderViolation("submit", e.seq, e.seq, "submitted twice")])
            submitted[e.seq] = e.get("class", "C")
            arrival.append(e.seq)
    done = sorted((e for e in events if e.kind == "completed"), key=lambda e: e.cycle)
    order = [e.seq for e in done]
    report = ConsistencyReport(order)
    v = report.violations

    seen: set[int] = set()
    for s in order:
        if s in seen:
            v.append(OrderViolation("loss", s, s, "completed more than once"))
        elif s not in submitted:
            v.append(OrderViolation("loss", s, s, "completed but never submitted"))
        seen.add(s)
    for s in arrival:
        if s not in seen:
            v.append(OrderViolation("loss", s, s, "submitted but never completed"))

    rank = {s: i for i, s in enumerate(arrival)}
    segment: dict[int, int] = {}
    seg = -1
    prev = None
    for s in arrival:
        if submitted[s] != prev:
            seg += 1
            prev = submitted[s]
        segment[s] = seg

    last_of = {"C": None, "D": None}
    rule_of = {"C": "a", "D": "b"}
    last_seq = None
    for s in order:
        if s not in submitted:
            continue
        cls = submitted[s]
        other = last_of[cls]
        if other is not None and rank[other] > rank[s]:
            v.append(OrderViolation(rule_of[cls], other, s, "same-engine requests completed out of order"))
        last_of[cls] = s
        if last_seq is not None and segment[s] < segment[last_seq]:
            rule = "c" if submitted[s] == "C" else "d"
            v.append(OrderViolation(rule, last_seq, s,
                                    f"{s} arrived in an earlier cache/DMA run than {last_seq} "
                                    "but completed after it"))
        last_seq = s

    # per-address order through the memory path (cache side)
    queued: dict[int, list[int]] = {}
    issued: dict[int, list[int]] = {}
    seq_of_mid: dict[int, int] = {}
    for e in events:
        mid = e.get("mid")
        if mid is None:
            continue
        if e.kind in ("batched", "bypassed"):
            queued.setdefault(int(e.get("addr"), 16), []).append(int(mid))
            seq_of_mid[int(mid)] = e.seq
        elif e.kind == "dram-issued":
            issued.setdefault(int(e.get("addr"), 16), []).append(int(mid))
    for addr, mids in issued.items():
        expect = queued.get(addr, [])
        if sorted(mids) != sorted(expect):
            v.append(OrderViolation("e", -1, -1, f"address {addr:#x}: issued {mids} but queued {expect}"))
            continue
        for a, b in zip(mids, mids[1:]):
            if a > b:
                v.append(OrderViolation("e", seq_of_mid.get(b, -1), seq_of_mid.get(a, -1),
                                        f"address {addr:#x} reordered in the memory path"))
    # DMA transfers leave for DRAM in arrival order
    dma_issue_order = [e.seq for e in events if e.kind == "dram-issued" and e.get("kind") == "dma"]
    for a, b in zip(dma_issue_order, dma_issue_order[1:]):
        if rank.get(a, -1) > rank.get(b, -1):
            v.append(OrderViolation("b", a, b, "DMA transfers started out of order"))
    return report


# ----------------------------------------------------------------------------
# results

@dataclass
class SimResult:
    total_cycles: int
    cacheline_requests: int
    bulk_requests: int
    cache_busy: int
    dma_busy: int
    hits: int = 0
    hits_under_miss: int = 0
    misses: int = 0
    evictions: int = 0
    writebacks: int = 0
    dma_transfers: int = 0
    row_first: int = 0
    row_hits: int = 0
    row_conflicts: int = 0
    batches: int = 0
    batched_requests: int = 0
    batch_timeouts: int = 0
    first_batch_formation: int | None = None
    schedule_cycles: int = 0
    bypassed: int = 0
    completion: list[int] = field(default_factory=list, repr=False)
    events: list[Event] | None = field(default=None, repr=False)
    warnings: list[str] = field(default_factory=list)
    read_data: dict[int, bytes] | None = field(default=None, repr=False)

    @property
    def cache_share(self) -> float:
        return self.cache_busy / self.total_cycles if self.total_cycles else 0.0

    @property
    def dma_share(self) -> float:
        return self.dma_busy / self.total_cycles if self.total_cycles else 0.0


def _merge(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint sorted cover of the half-open intervals [start, end)."""
    keep = ends > starts
    starts, ends = starts[keep], ends[keep]
    if len(starts) == 0:
        return starts, ends
    order = np.argsort(starts, kind="stable")
    starts, ends = starts[order], np.maximum.accumulate(ends[order])
    new = np.empty(len(starts), dtype=bool)
    new[0] = True
    new[1:] = starts[1:] > ends[:-1]
    group = np.cumsum(new) - 1
    out_end = np.zeros(group[-1] + 1, dtype=np.int64)
    np.maximum.at(out_end, group, ends)
    return starts[new], out_end


def covered(starts, ends) -> int:
    s, e = _merge(np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64))
    return int(np.sum(e - s))


def covered_excluding(starts, ends, ex_starts, ex_ends) -> int:
    """Length of union(A) minus its overlap with union(B)."""
    a_s, a_e = _merge(np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64))
    b_s, b_e = _merge(np.asarray(ex_starts, dtype=np.int64), np.asarray(ex_ends, dtype=np.int64))
    total = int(np.sum(a_e - a_s))
    if len(a_s) == 0 or len(b_s) == 0:
        return total
    pos = np.concatenate([a_s, a_e, b_s, b_e])
    da = np.concatenate([np.ones(len(a_s)), -np.ones(len(a_e)), np.zeros(len(b_s) + len(b_e))])
    db = np.concatenate([np.zeros(len(a_s) + len(a_e)), np.ones(len(b_s)), -np.ones(len(b_e))])
    order = np.argsort(pos, kind="stable")
    pos, ca, cb = pos[order], np.cumsum(da[order]), np.cumsum(db[order])
    both = (ca[:-1] > 0) & (cb[:-1] > 0)
    overlap = int(np.sum(np.diff(pos)[both]))
    return total - overlap


# ----------------------------------------------------------------------------
# simulator

def check_trace(trace: Trace, cfg: ControllerConfig) -> None:
    """Raise MalformedRequestError / RoutingError for the first bad request."""
    n = len(trace)
    if n == 0:
        return
    limit = 1 << cfg.app_addr_width
    bulk = trace.cls == CLS_BULK
    checks = [
        (trace.pe >= cfg.num_pes, "pe_id", f"not below num_pes={cfg.num_pes}"),
        (trace.pe < 0, "pe_id", "negative"),
        (trace.size < 1, "total_size", "must be positive"),
        (trace.address < 0, "address", "negative"),
        (trace.address + trace.size > limit, "address", f"outside {cfg.app_addr_width}-bit space"),
        (~bulk & (trace.size > cfg.app_io_data_width), "payload_size",
         f"cacheline access wider than app_io_data_width={cfg.app_io_data_width}"),
        (bulk & (trace.size > cfg.dma_max_transaction), "total_size",
         f"exceeds dma_max_transaction={cfg.dma_max_transaction}"),
    ]
    for mask, name, message in checks:
        bad = np.flatnonzero(mask)
        if len(bad):
            raise MalformedRequestError(name, f"request {int(bad[0])}: {message}")
    if not cfg.enable_cacheline and np.any(~bulk):
        raise RoutingError(Destination.CACHE)
    if not cfg.enable_dma and np.any(bulk):
        raise RoutingError(Destination.DMA)


class Simulator:
    def __init__(self, trace: Trace, cfg: ControllerConfig | None = None,
                 timing: DramTimingConfig | None = None, *, log: bool = False,
                 track_data: bool = False):
        self.cfg = cfg = cfg or ControllerConfig()
        self.timing = timing = timing or DramTimingConfig()
        result = validate(cfg, timing)
        if not result.ok:
            raise ConfigValidationError(list(result.violations))
        check_trace(trace, cfg)
        self.trace = trace
        self.n = n = len(trace)
        self.arr_cycle = trace.cycle.tolist()
        self.pe = trace.pe.tolist()
        self.op = trace.op.tolist()
        self.cls = trace.cls.tolist()
        self.addr = trace.address.tolist()
        self.size = trace.size.tolist()
        if n:
            change = np.ones(n, dtype=bool)
            change[1:] = trace.cls[1:] != trace.cls[:-1]
            self.seg_start = np.maximum.accumulate(np.where(change, np.arange(n), 0)).tolist()
        else:
            self.seg_start = []

        self.log = [] if log else None
        self.track_data = track_data
        self.memory = SparseMemory() if track_data else None
        self.read_data: dict[int, bytes] | None = {} if track_data else None
        self.dram = DramModel(timing)
        self.cache = CacheEngine(cfg, self.memory, track_data)
        self.dma = DmaEngine(cfg)
        self.sched = Scheduler(cfg, timing.num_banks)
        self.warnings: list[str] = []

        self.now = 0
        self._heap: list[tuple[int, int]] = []
        self._pending: list[int | None] = [None] * 5
        # submission
        self.next_submit = 0
        self.last_submit = 0
        self.pe_free = [0] * cfg.num_pes
        self.pe_blocked = [False] * cfg.num_pes
        self.arrive = [0] * n
        # cache
        self.cache_q: deque[int] = deque()
        self.port_free = 0
        self.fills: deque[tuple[int, int]] = deque()
        # memory path
        self.mem_heap: list[tuple] = []
        self.mem_ids = 0
        self.window: deque = deque(maxlen=cfg.sched_bypass_window)
        self.bypass_q: deque[tuple] = deque()
        self.backlog: dict[int, deque[SchedEntry]] = {}
        self.bypassed = 0
        # DRAM / DMA
        self.dram_free = 0
        self.dma_in: deque[int] = deque()
        self.armed_at: dict[int, int] = {}
        self.inflight: deque = deque()
        self.dma_intervals: list[tuple[int, int]] = []
        self.wb_intervals: list[tuple[int, int]] = []
        # retirement
        self.ready: list[int | None] = [None] * n
        self.complete = [0] * n
        self.cpl_ptr = 0
        self.last_cpl = 0
        self.outcome: list[str | None] = [None] * n

    # -- plumbing -----------------------------------------------------------
    def _wake(self, kind: int, t: int) -> None:
        pending = self._pending[kind]
        if pending is not None and self.now <= pending <= t:
            return
        self._pending[kind] = t
        heapq.heappush(self._heap, (t, kind))

    def _event(self, cycle: int, name: str, seq: int, /, **fields) -> None:
        self.log.append(Event(cycle, name, seq, tuple(zip(fields, map(str, fields.values())))))

    def run(self) -> SimResult:
        self._pump(0)
        handlers = (self._dma_done, self._accept, self._cache_port, self._mem_path, self._dram)
        heap = self._heap
        while heap:
            t, kind = heapq.heappop(heap)
            if self._pending[kind] == t:
                self._pending[kind] = None
            self.now = t
            handlers[kind](t)
        if self.cpl_ptr != self.n:
            raise SimulationError(f"simulation stalled with {self.n - self.cpl_ptr} requests unfinished "
                                  f"(first: {self.cpl_ptr})")
        return self._result()

    # -- submission ---------------------------------------------------------
    def _pump(self, now: int) -> None:
        cfg = self.cfg
        oh = cfg.ctrl_overhead
        width = cfg.app_io_data_width
        i = self.next_submit
        while i < self.n:
            p = self.pe[i]
            if self.pe_blocked[p]:
                break
            t = max(self.arr_cycle[i], self.pe_free[p], self.last_submit, now)
            self.last_submit = t
            arrive = t + oh
            self.arrive[i] = arrive
            bulk = self.cls[i] == CLS_BULK
            write = self.op[i] == OP_WRITE
            if bulk:
                self.pe_blocked[p] = True
                self.pe_free[p] = t + 1
                self.dma_in.append(i)
                self._wake(_ACCEPT, arrive)
            else:
                self.pe_free[p] = t + (2 if write else 1)
                self.cache_q.append(i)
                self._wake(_CACHE, max(arrive, self.port_free))
            if self.log is not None:
                self._event(t, "submitted", i, pe=p, op="W" if write else "R", **{"class": "D" if bulk else "C"},
                            addr=f"{self.addr[i]:#x}", size=self.size[i])
                self._event(arrive, "routed", i, engine="dma" if bulk else "cache")
            i += 1
        self.next_submit = i

    # -- retirement ---------------------------------------------------------
    def _set_ready(self, i: int, t: int) -> None:
        self.ready[i] = t
        if i != self.cpl_ptr:
            return
        ready, complete, log = self.ready, self.complete, self.log
        c = self.last_cpl
        k = i
        while k < self.n and ready[k] is not None:
            c = max(ready[k], c)
            complete[k] = c
            if log is not None:
                self._event(c, "completed", k, outcome=self.outcome[k])
            k += 1
        self.cpl_ptr = k
        self.last_cpl = c
        if self.dma.armed:
            head = self.dma.next_armed()
            s = self.seg_start[head.seq_no]
            if 0 < s <= k:
                self._wake(_DRAM, max(self.now, complete[s - 1], self.dram_free))

    # -- DMA ----------------------------------------------------------------
    def _accept(self, t: int) -> None:
        cfg, dma = self.cfg, self.dma
        while self.dma_in:
            i = self.dma_in[0]
            if self.arrive[i] > t:
                self._wake(_ACCEPT, self.arrive[i])
                break
            p = self.pe[i]
            if not dma.can_accept(p):
                break  # a completing transfer wakes us
            self.dma_in.popleft()
            size = self.size[i]
            write = self.op[i] == OP_WRITE
            op = Op.WRITE if write else Op.READ
            header = Flit(FlitKind.HEADER, p, op, AccessClass.BULK, self.addr[i], size,
                          min(size, cfg.app_io_data_width), 0, i)
            dma.dma_accept(header, t)
            flits = 0
            if write:
                payload = (synth_payload(self.addr[i], size, self.trace.seed) if self.track_data
                           else bytes(size))
                step = cfg.app_io_data_width
                flits = math.ceil(size / step)
                for k in range(flits):
                    dma.dma_accept(Flit(FlitKind.PAYLOAD, p, op, AccessClass.BULK, self.addr[i], size,
                                        step, k + 1, i, payload[k * step:(k + 1) * step]), t)
            armed = t + flits
            self.armed_at[i] = armed
            self._check_overlap_dma(i)
            self.pe_blocked[p] = False
            self.pe_free[p] = max(self.pe_free[p], t - cfg.ctrl_overhead + 1 + flits)
            self._pump(t)
            self._wake(_DRAM, max(t, armed, self.dram_free))

    def _dma_done(self, t: int) -> None:
        freed = False
        while self.inflight and self.inflight[0][0] <= t:
            done, buf, comp = self.inflight.popleft()
            i = comp.seq_no
            if comp.data is not None:
                self.read_data[i] = comp.data
            self.dma.finish(buf)
            self.outcome[i] = "dma"
            freed = True
            self._set_ready(i, done)
        if freed and self.dma_in:
            self._wake(_ACCEPT, t)
        if self.inflight:
            self._wake(_DMA_DONE, self.inflight[0][0])

    def _dma_eligible(self, t: int):
        buf = self.dma.next_armed()
        if buf is None:
            return None
        i = buf.seq_no
        armed = self.armed_at[i]
        if armed > t:
            self._wake(_DRAM, armed)
            return None
        s = self.seg_start[i]
        if s > 0:
            if self.cpl_ptr < s:
                return None  # retirement will wake DRAM
            if self.complete[s - 1] > t:
                self._wake(_DRAM, self.complete[s - 1])
                return None
        return buf

    # -- cache --------------------------------------------------------------
    def _cache_port(self, t: int) -> None:
        if t < self.port_free:
            self._wake(_CACHE, self.port_free)
            return
        cfg = self.cfg
        if self.fills and self.fills[0][0] <= t:
            _, line = self.fills.popleft()
            entry = self.cache.mem_fill(line, t)
            done = t + cfg.mem_pipeline_fill
            for req in entry.waiters:
                self._set_ready(req.seq_no, done)
            self.port_free = t + 1
        elif self.cache_q and self.arrive[self.cache_q[0]] <= t:
            i = self.cache_q.popleft()
            self._lookup(i, t)
            self.port_free = t + 1
        nxt = None
        if self.fills:
            nxt = max(t + 1, self.fills[0][0])
        if self.cache_q:
            a = max(t + 1, self.arrive[self.cache_q[0]])
            nxt = a if nxt is None else min(nxt, a)
        if nxt is not None:
            self._wake(_CACHE, nxt)

    def _lookup(self, i: int, t: int) -> None:
        cfg = self.cfg
        write = self.op[i] == OP_WRITE
        size = self.size[i]
        payload = synth_payload(self.addr[i], size, self.trace.seed) if (write and self.track_data) else (
            bytes(size) if write else b"")
        req = MemRequest(self.pe[i], Op.WRITE if write else Op.READ, AccessClass.CACHELINE, self.addr[i],
                         size, size, payload, self.arr_cycle[i], i)
        rep = self.cache.pe_access(req, t)
        self.outcome[i] = rep.outcome.value
        if self.read_data is not None and not write:
            self.read_data[i] = rep.data
        if self.dma.busy_buffers:
            self._check_overlap_cache(i)
        if rep.outcome is Outcome.MISS:
            leave = t + cfg.cache_pipeline_fill
            if rep.writeback is not None:
                self._to_memory(leave, rep.writeback[0], Op.WRITE, "wb", i)
            if rep.new_miss is not None:
                self._to_memory(leave, rep.line, Op.READ, "fill", i)
        elif rep.line in self.cache.misses:
            pass  # secondary access to a line still being filled; ready at fill
        else:
            self._set_ready(i, t + cfg.cache_pipeline_fill + 1)

    def _check_overlap_cache(self, i: int) -> None:
        a, end = self.addr[i], self.addr[i] + self.size[i]
        for buf in self.dma.buffers:
            if buf.seq_no >= 0 and buf.address < end and a < buf.address + buf.expected_bytes:
                self._warn(f"cacheline request {i} overlaps DMA transfer {buf.seq_no}")

    def _check_overlap_dma(self, i: int) -> None:
        a, end = self.addr[i], self.addr[i] + self.size[i]
        lb = self.cfg.line_bytes
        for line in self.cache.misses:
            if line < end and a < line + lb:
                self._warn(f"DMA transfer {i} overlaps outstanding cache miss at {line:#x}")

    def _warn(self, message: str) -> None:
        if len(self.warnings) < 100:
            self.warnings.append(message)

    # -- memory path (bypass or scheduler) -----------------------------------
    def _to_memory(self, t: int, address: int, op: Op, kind: str, seq: int) -> None:
        mid = self.mem_ids
        self.mem_ids += 1
        heapq.heappush(self.mem_heap, (t, mid, address, op, kind, seq))
        self._wake(_MEMPATH, t)

    def _mem_path(self, t: int) -> None:
        sched = self.sched
        heap = self.mem_heap
        while heap and heap[0][0] <= t:
            self._route(t, heapq.heappop(heap))
        if self.backlog or not sched.empty:
            for bank in sorted(self.backlog):
                queue = self.backlog[bank]
                entry = queue[0]
                if sched.can_accept(bank, entry.op):
                    queue.popleft()
                    sched.enqueue(entry, t)
                    if not queue:
                        del self.backlog[bank]
            sched.tick(t)
            sched.advance(t)
            if sched.output:
                self._wake(_DRAM, max(t, self.dram_free))
            # only timeouts and the backlog need per-cycle ticks; a batch in
            # the network wakes us when it finishes, a full output on DRAM pop
            if self.backlog or sched._open:
                self._wake(_MEMPATH, t + 1)
            elif sched.in_network is not None:
                self._wake(_MEMPATH, sched.network_done)
        if heap:
            self._wake(_MEMPATH, heap[0][0])

    def _route(self, t: int, item: tuple) -> None:
        _, mid, address, op, kind, seq = item
        bank, row = self.dram.bank_row(address)
        self.window.append((t, address, bank, row))
        bypass = not self.cfg.enable_scheduler or (
            not self.backlog and self.sched.empty
            and bypass_decision(self.window, self.cfg) is Decision.BYPASS)
        if bypass:
            self.bypass_q.append(item)
            self.bypassed += 1
            self._wake(_DRAM, max(t, self.dram_free))
        else:
            self.backlog.setdefault(bank, deque()).append(SchedEntry(mid, address, bank, row, op, item))
        if self.log is not None:
            self._event(t, "bypassed" if bypass else "batched", seq, mid=mid, addr=f"{address:#x}",
                        op=op.value, kind=kind)

    # -- DRAM ---------------------------------------------------------------
    def _dram(self, t: int) -> None:
        if t < self.dram_free:
            self._wake(_DRAM, self.dram_free)
            return
        cache_item = None
        if self.bypass_q:
            cache_item = self.bypass_q[0]
        elif self.sched.output:
            cache_item = self.sched.peek().tag
        buf = self._dma_eligible(t) if cache_item is None else None
        grant = arbitrate(ArbitrationState(False, int(cache_item is not None), int(buf is not None)))
        if grant is Grant.CACHE:
            if self.bypass_q:
                self.bypass_q.popleft()
            else:
                self.sched.pop()
                if self.sched.sealed and self.sched.in_network is None:
                    self._wake(_MEMPATH, t + 1)
            _, mid, address, op, kind, seq = cache_item
            done = t + self.dram.access(address)
            self.dram_free = done
            if kind == "fill":
                self.fills.append((done, address))
                self._wake(_CACHE, max(done, self.port_free))
            else:
                self.wb_intervals.append((t, done))
            if self.log is not None:
                self._event(t, "dram-issued", seq, mid=mid, addr=f"{address:#x}", op=op.value, kind=kind)
        elif grant is Grant.DMA:
            buf = self.dma.start(t)
            comp = dma_issue(buf, self.dram, self.cfg, t, self.memory)
            self.dram_free = comp.dram_done
            self.dma_intervals.append((t, comp.done))
            self.inflight.append((comp.done, buf, comp))
            self._wake(_DMA_DONE, comp.done)
            if self.log is not None:
                self._event(t, "dram-issued", comp.seq_no, addr=f"{buf.address:#x}", op=buf.op.value,
                            kind="dma", beats=math.ceil(buf.expected_bytes / self.cfg.mem_if_data_width))
        else:
            return
        self._wake(_DRAM, self.dram_free)

    # -- summary ------------------------------------------------------------
    def _result(self) -> SimResult:
        n = self.n
        total = self.last_cpl if n else 0
        bulk = np.array(self.cls, dtype=np.int8) == CLS_BULK if n else np.zeros(0, dtype=bool)
        arrive = np.array(self.arrive, dtype=np.int64)
        ready = np.array([r if r is not None else 0 for r in self.ready], dtype=np.int64)
        if self.dma_intervals:
            d = np.array(self.dma_intervals, dtype=np.int64)
            d_s, d_e = np.minimum(d[:, 0], total), np.minimum(d[:, 1], total)
        else:
            d_s = d_e = np.zeros(0, dtype=np.int64)
        c_s, c_e = arrive[~bulk], ready[~bulk]
        if self.wb_intervals:
            w = np.array(self.wb_intervals, dtype=np.int64)
            c_s = np.concatenate([c_s, w[:, 0]])
            c_e = np.concatenate([c_e, w[:, 1]])
        c_s, c_e = np.minimum(c_s, total), np.minimum(c_e, total)
        dma_busy = covered(d_s, d_e)
        cache_busy = covered_excluding(c_s, c_e, d_s, d_e)
        events = None
        if self.log is not None:
            events = sorted(self.log, key=lambda e: e.cycle)
        st = self.dram.state
        ss = self.sched.stats
        return SimResult(
            total_cycles=total,
            cacheline_requests=int(np.sum(~bulk)),
            bulk_requests=int(np.sum(bulk)),
            cache_busy=cache_busy,
            dma_busy=dma_busy,
            hits=self.cache.hits,
            hits_under_miss=self.cache.hits_under_miss,
            misses=self.cache.miss_count,
            evictions=self.cache.evictions,
            writebacks=self.cache.writebacks,
            dma_transfers=len(self.dma_intervals),
            row_first=st.first_hits,
            row_hits=st.row_hits,
            row_conflicts=st.conflicts,
            batches=ss.batches,
            batched_requests=ss.requests,
            batch_timeouts=ss.timeouts,
            first_batch_formation=ss.first_batch_formation,
            schedule_cycles=ss.network_cycles,
            bypassed=self.bypassed,
            completion=self.complete,
            events=events,
            warnings=list(self.warnings),
            read_data=self.read_data,
        )


def simulate(trace: Trace, cfg: ControllerConfig | None = None, timing: DramTimingConfig | None = None,
             *, log: bool = False, track_data: bool = False) -> SimResult:
    return Simulator(trace, cfg, timing, log=log, track_data=track_data).run()


class Controller:
    """Request-at-a-time front end over :func:`simulate`."""

    def __init__(self, cfg: ControllerConfig | None = None, timing: DramTimingConfig | None = None):
        self.cfg = cfg or ControllerConfig()
        self.timing = timing or DramTimingConfig()
        self._rows: list[tuple[int, int, int, int, int, int]] = []

    def submit(self, req: MemRequest, cycle: int | None = None) -> int:
        """Queue a request arriving at ``cycle``; returns its sequence number."""
        check_request(req, self.cfg)
        route_ok = self.cfg.enable_cacheline if req.access_class is AccessClass.CACHELINE else self.cfg.enable_dma
        if not route_ok:
            raise RoutingError(Destination.CACHE if req.access_class is AccessClass.CACHELINE else Destination.DMA)
        cycle = req.arrival_cycle if cycle is None else cycle
        if self._rows and cycle < self._rows[-1][0]:
            raise MalformedRequestError("arrival_cycle", "requests must be submitted in arrival order")
        self._rows.append((cycle, req.pe_id, int(req.is_write), int(req.is_bulk), req.address, req.total_size))
        return len(self._rows) - 1

    def trace(self) -> Trace:
        if not self._rows:
            return Trace.empty()
        a = np.array(self._rows, dtype=np.int64)
        return Trace(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5])

    def run(self, *, log: bool = False) -> SimResult:
        return simulate(self.trace(), self.cfg, self.timing, log=log)
