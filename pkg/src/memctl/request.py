"""Memory requests, FLIT segmentation and engine routing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

from .config import ControllerConfig


class Op(enum.Enum):
    READ = "R"
    WRITE = "W"


class AccessClass(enum.Enum):
    CACHELINE = "C"
    BULK = "D"


class FlitKind(enum.Enum):
    HEADER = "header"
    PAYLOAD = "payload"


class Destination(enum.Enum):
    CACHE = "cache-engine"
    DMA = "dma-engine"


class MalformedRequestError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class IncompleteTransferError(ValueError):
    pass


class RoutingError(RuntimeError):
    def __init__(self, engine: Destination):
        self.engine = engine
        super().__init__(f"{engine.value} is disabled in this configuration")


@dataclass(frozen=True, slots=True)
class MemRequest:
    pe_id: int
    op: Op
    access_class: AccessClass
    address: int
    payload_size: int
    total_size: int
    payload: bytes = b""
    arrival_cycle: int = 0
    seq_no: int = 0

    @property
    def is_write(self) -> bool:
        return self.op is Op.WRITE

    @property
    def is_bulk(self) -> bool:
        return self.access_class is AccessClass.BULK


class Flit(NamedTuple):
    kind: FlitKind
    pe_id: int
    op: Op
    access_class: AccessClass
    address: int
    total_size: int
    payload_size: int
    flit_index: int
    seq_no: int
    payload_segment: bytes = b""


def check_request(req: MemRequest, cfg: ControllerConfig | None = None) -> None:
    """Raise MalformedRequestError naming the first violated invariant."""
    if req.payload_size < 1:
        raise MalformedRequestError("payload_size", "must be positive")
    if req.total_size < 1:
        raise MalformedRequestError("total_size", "must be positive")
    if req.address < 0:
        raise MalformedRequestError("address", "must be non-negative")
    if req.access_class is AccessClass.CACHELINE and req.total_size != req.payload_size:
        raise MalformedRequestError("total_size", "cacheline access must be a single element")
    if req.op is Op.WRITE and len(req.payload) != req.total_size:
        raise MalformedRequestError("payload", f"write carries {len(req.payload)} bytes, "
                                               f"expected {req.total_size}")
    if req.op is Op.READ and req.payload:
        raise MalformedRequestError("payload", "reads carry no payload")
    if cfg is None:
        return
    if not 0 <= req.pe_id < cfg.num_pes:
        raise MalformedRequestError("pe_id", f"{req.pe_id} not below num_pes={cfg.num_pes}")
    if req.address + req.total_size > 1 << cfg.app_addr_width:
        raise MalformedRequestError("address", f"{req.address:#x} outside {cfg.app_addr_width}-bit space")
    if req.payload_size > cfg.app_io_data_width:
        raise MalformedRequestError("payload_size", f"{req.payload_size} exceeds "
                                                    f"app_io_data_width={cfg.app_io_data_width}")
    if req.access_class is AccessClass.BULK and req.total_size > cfg.dma_max_transaction:
        raise MalformedRequestError("total_size", f"{req.total_size} exceeds "
                                                  f"dma_max_transaction={cfg.dma_max_transaction}")


def payload_flit_count(req: MemRequest) -> int:
    if req.op is Op.READ:
        return 0
    return math.ceil(req.total_size / req.payload_size)


def flit_encode(req: MemRequest, cfg: ControllerConfig | None = None) -> list[Flit]:
    check_request(req, cfg)
    header = Flit(FlitKind.HEADER, req.pe_id, req.op, req.access_class, req.address,
                  req.total_size, req.payload_size, 0, req.seq_no)
    flits = [header]
    p = req.payload_size
    for i in range(payload_flit_count(req)):
        segment = req.payload[i * p:(i + 1) * p]
        flits.append(header._replace(kind=FlitKind.PAYLOAD, flit_index=i + 1, payload_segment=segment))
    return flits


def flit_decode(flits: list[Flit]) -> MemRequest:
    if not flits or flits[0].kind is not FlitKind.HEADER:
        raise IncompleteTransferError("sequence does not start with a header flit")
    head = flits[0]
    for position, flit in enumerate(flits):
        if flit.flit_index != position:
            raise IncompleteTransferError(f"expected flit_index {position}, found {flit.flit_index}")
        if position and flit.kind is not FlitKind.PAYLOAD:
            raise IncompleteTransferError(f"flit {position} is a second header")
        if flit.seq_no != head.seq_no:
            raise IncompleteTransferError(f"flit {position} belongs to request {flit.seq_no}")
    payload = b"".join(f.payload_segment for f in flits[1:])
    if head.op is Op.WRITE:
        expected = math.ceil(head.total_size / head.payload_size)
        if len(flits) - 1 != expected or len(payload) != head.total_size:
            raise IncompleteTransferError(f"write of {head.total_size} bytes arrived with "
                                          f"{len(flits) - 1}/{expected} payload flits")
    elif len(flits) > 1:
        raise IncompleteTransferError("read request carries payload flits")
    return MemRequest(head.pe_id, head.op, head.access_class, head.address, head.payload_size,
                      head.total_size, payload, 0, head.seq_no)


def route(flit: Flit | MemRequest, cfg: ControllerConfig) -> Destination:
    if flit.access_class is AccessClass.CACHELINE:
        if not cfg.enable_cacheline:
            raise RoutingError(Destination.CACHE)
        return Destination.CACHE
    if not cfg.enable_dma:
        raise RoutingError(Destination.DMA)
    return Destination.DMA
