"""Bulk-transfer engine: parallel DMA buffers keyed by PE id."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .config import ControllerConfig, DramTimingConfig
from .dram import DramModel, t_mem_rand, t_mem_seq
from .request import AccessClass, Flit, FlitKind, Op
from .scheduler import scheduling_time


class DmaProtocolError(RuntimeError):
    pass


class BufferStatus(enum.Enum):
    IDLE = "idle"
    OCCUPIED = "occupied"
    TRANSFERRING = "transferring"


class AcceptResult(enum.Enum):
    BUFFERED = "buffered"
    TRANSFER_ARMED = "transfer-armed"
    BACKPRESSURE = "backpressure"


class AccessKind(enum.Enum):
    SEQ = "seq"
    RAND = "rand"


@dataclass
class DmaBuffer:
    index: int
    status: BufferStatus = BufferStatus.IDLE
    owner_pe: int | None = None
    seq_no: int = -1
    op: Op = Op.READ
    address: int = 0
    expected_bytes: int = 0
    received_bytes: int = 0
    flits: list[Flit] = field(default_factory=list)
    armed: bool = False
    start_cycle: int | None = None

    @property
    def payload(self) -> bytes:
        return b"".join(f.payload_segment for f in self.flits[1:])

    def reset(self) -> None:
        self.status = BufferStatus.IDLE
        self.owner_pe = None
        self.seq_no = -1
        self.expected_bytes = self.received_bytes = 0
        self.flits = []
        self.armed = False
        self.start_cycle = None


class DmaRequestMap:
    """PE id -> buffer index for in-flight transfers."""

    def __init__(self):
        self._map: dict[int, int] = {}

    def assign(self, pe_id: int, index: int) -> None:
        if pe_id in self._map:
            raise DmaProtocolError(f"PE {pe_id} already owns buffer {self._map[pe_id]}")
        if index in self._map.values():
            raise DmaProtocolError(f"buffer {index} is already mapped")
        self._map[pe_id] = index

    def release(self, pe_id: int) -> None:
        self._map.pop(pe_id, None)

    def lookup(self, pe_id: int) -> int | None:
        return self._map.get(pe_id)

    def __contains__(self, pe_id: int) -> bool:
        return pe_id in self._map

    def __len__(self) -> int:
        return len(self._map)


class DmaEngine:
    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.buffers = [DmaBuffer(i) for i in range(cfg.dma_parallel_count)]
        self.map = DmaRequestMap()
        self.armed: deque[int] = deque()  # buffer indices, in arming order
        self._idle = list(range(cfg.dma_parallel_count))

    def can_accept(self, pe_id: int) -> bool:
        return bool(self._idle) and pe_id not in self.map

    def dma_accept(self, flit: Flit, cycle: int = 0) -> AcceptResult:
        if flit.access_class is not AccessClass.BULK:
            raise DmaProtocolError("cacheline flit routed to the DMA engine")
        if flit.kind is FlitKind.HEADER:
            if not self.can_accept(flit.pe_id):
                return AcceptResult.BACKPRESSURE
            buf = self.buffers[self._idle.pop(0)]
            self.map.assign(flit.pe_id, buf.index)
            buf.status = BufferStatus.OCCUPIED
            buf.owner_pe = flit.pe_id
            buf.seq_no = flit.seq_no
            buf.op = flit.op
            buf.address = flit.address
            buf.expected_bytes = flit.total_size
            buf.received_bytes = 0
            buf.flits = [flit]
            if flit.op is Op.READ:
                return self._arm(buf)
            return AcceptResult.BUFFERED
        index = self.map.lookup(flit.pe_id)
        if index is None:
            raise DmaProtocolError(f"payload flit from PE {flit.pe_id} with no open transfer")
        buf = self.buffers[index]
        if buf.armed:
            raise DmaProtocolError(f"payload flit for already complete transfer {buf.seq_no}")
        buf.flits.append(flit)
        buf.received_bytes += len(flit.payload_segment)
        if buf.received_bytes > buf.expected_bytes:
            raise DmaProtocolError(f"transfer {buf.seq_no} overran {buf.expected_bytes} bytes")
        if buf.received_bytes == buf.expected_bytes:
            return self._arm(buf)
        return AcceptResult.BUFFERED

    def _arm(self, buf: DmaBuffer) -> AcceptResult:
        buf.armed = True
        self.armed.append(buf.index)
        return AcceptResult.TRANSFER_ARMED

    def next_armed(self) -> DmaBuffer | None:
        return self.buffers[self.armed[0]] if self.armed else None

    def start(self, cycle: int) -> DmaBuffer:
        buf = self.buffers[self.armed.popleft()]
        buf.status = BufferStatus.TRANSFERRING
        buf.start_cycle = cycle
        return buf

    def finish(self, buf: DmaBuffer) -> None:
        self.map.release(buf.owner_pe)
        buf.reset()
        self._idle.append(buf.index)
        self._idle.sort()

    @property
    def busy_buffers(self) -> int:
        return len(self.buffers) - len(self._idle)


def element_count(total_size: int, cfg: ControllerConfig) -> int:
    return math.ceil(total_size / cfg.mem_if_data_width)


def element_runs(addresses: Sequence[int], beat_bytes: int) -> list[tuple[AccessKind, int]]:
    """Split element addresses into maximal sequential runs.

    Consecutive beats extend a sequential run; an isolated element is random.
    """
    runs: list[tuple[AccessKind, int]] = []
    i = 0
    n = len(addresses)
    while i < n:
        j = i + 1
        while j < n and addresses[j] == addresses[j - 1] + beat_bytes:
            j += 1
        runs.append((AccessKind.SEQ if j - i > 1 else AccessKind.RAND, j - i))
        i = j
    return runs


def dma_transfer_time(n_elements: int, kind: AccessKind, cfg: ControllerConfig,
                      timing: DramTimingConfig | None = None, t_sch: int | None = None) -> int:
    """Closed-form DMA transfer time in controller cycles.

    ``t_sch`` defaults to the scheduler latency of the configured batch size
    (zero with the scheduler disabled).
    """
    timing = timing or DramTimingConfig()
    if t_sch is None:
        t_sch = scheduling_time(cfg.sched_batch_size, cfg.data_cond_latency) if cfg.enable_scheduler else 0
    per = t_mem_seq(timing) if kind is AccessKind.SEQ else t_mem_rand(timing)
    return cfg.ctrl_overhead + t_sch + cfg.data_convert_latency + n_elements * per


@dataclass(frozen=True)
class DmaCompletion:
    seq_no: int
    pe_id: int
    start: int
    dram_done: int
    done: int
    data: bytes | None = None


def dma_issue(buf: DmaBuffer, dram: DramModel, cfg: ControllerConfig, cycle: int,
              memory=None) -> DmaCompletion:
    """Run an armed transfer against DRAM starting at ``cycle``.

    Element accesses are consecutive beats, so the cost is the per-beat
    row-buffer accounting of the whole run; data conversion is added on top.
    """
    n = element_count(buf.expected_bytes, cfg)
    dram_cycles = dram.access_run(buf.address, n, cfg.mem_if_data_width)
    data = None
    if memory is not None:
        if buf.op is Op.WRITE:
            memory.write(buf.address, buf.payload)
        else:
            data = memory.read(buf.address, buf.expected_bytes)
    end = cycle + dram_cycles
    return DmaCompletion(buf.seq_no, buf.owner_pe, cycle, end, end + cfg.data_convert_latency, data)
