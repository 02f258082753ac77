"""Synthetic access traces and the trace file format.

Traces are columnar (numpy arrays) so that multi-million request workloads
stay cheap; :meth:`Trace.requests` materializes :class:`MemRequest` objects
on demand.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .config import KB, ControllerConfig
from .request import AccessClass, MemRequest, Op

TRACE_FORMAT_VERSION = 1

OP_READ, OP_WRITE = 0, 1
CLS_CACHE, CLS_BULK = 0, 1
_OP_LETTERS = {"R": OP_READ, "W": OP_WRITE}
_CLS_LETTERS = {"C": CLS_CACHE, "D": CLS_BULK}


class TraceParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ParamError(ValueError):
    pass


def synth_payload(address: int, size: int, seed: int) -> bytes:
    """Deterministic write data for ``size`` bytes at ``address``."""
    out = bytearray()
    block = 0
    while len(out) < size:
        h = hashlib.blake2b(f"{seed}:{address}:{block}".encode(), digest_size=64)
        out += h.digest()
        block += 1
    return bytes(out[:size])


@dataclass
class Trace:
    cycle: np.ndarray
    pe: np.ndarray
    op: np.ndarray
    cls: np.ndarray
    address: np.ndarray
    size: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.cycle = np.asarray(self.cycle, dtype=np.int64)
        self.pe = np.asarray(self.pe, dtype=np.int64)
        self.op = np.asarray(self.op, dtype=np.int8)
        self.cls = np.asarray(self.cls, dtype=np.int8)
        self.address = np.asarray(self.address, dtype=np.int64)
        self.size = np.asarray(self.size, dtype=np.int64)
        n = len(self.cycle)
        for name in ("pe", "op", "cls", "address", "size"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        if n and np.any(np.diff(self.cycle) < 0):
            raise ValueError("arrival cycles must be non-decreasing")

    @classmethod
    def empty(cls, **meta) -> "Trace":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z, z, z, {k: str(v) for k, v in meta.items()})

    def __len__(self) -> int:
        return len(self.cycle)

    @property
    def seed(self) -> int:
        return int(self.meta.get("seed", 0))

    def payload(self, i: int) -> bytes:
        if self.op[i] != OP_WRITE:
            return b""
        return synth_payload(int(self.address[i]), int(self.size[i]), self.seed)

    def request(self, i: int, cfg: ControllerConfig | None = None) -> MemRequest:
        cfg = cfg or ControllerConfig()
        size = int(self.size[i])
        bulk = self.cls[i] == CLS_BULK
        return MemRequest(
            pe_id=int(self.pe[i]),
            op=Op.WRITE if self.op[i] == OP_WRITE else Op.READ,
            access_class=AccessClass.BULK if bulk else AccessClass.CACHELINE,
            address=int(self.address[i]),
            payload_size=min(size, cfg.app_io_data_width) if bulk else size,
            total_size=size,
            payload=self.payload(i),
            arrival_cycle=int(self.cycle[i]),
            seq_no=i,
        )

    def requests(self, cfg: ControllerConfig | None = None) -> Iterator[MemRequest]:
        for i in range(len(self)):
            yield self.request(i, cfg)

    def counts(self) -> dict[str, int]:
        return {"cacheline": int(np.sum(self.cls == CLS_CACHE)), "bulk": int(np.sum(self.cls == CLS_BULK))}

    def same_as(self, other: "Trace") -> bool:
        return (self.meta == other.meta and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("cycle", "pe", "op", "cls", "address", "size")))


def _interleave(per_pe: list[list[tuple]]) -> list[tuple]:
    """Round-robin merge of per-PE request lists (PE order within a round)."""
    out = []
    longest = max((len(x) for x in per_pe), default=0)
    for k in range(longest):
        for reqs in per_pe:
            if k < len(reqs):
                out.append(reqs[k])
    return out


def _build(rows, meta: dict, gap: int = 0) -> Trace:
    if not rows:
        return Trace.empty(**meta)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 5)
    cycle = np.arange(len(arr), dtype=np.int64) * gap
    return Trace(cycle, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                 {k: str(v) for k, v in meta.items()})


# ----------------------------------------------------------------------------
# generators

def gen_sequential(total_bytes: int, stride: int, seed: int = 0, *,
                   access_class: AccessClass = AccessClass.BULK, op: Op = Op.READ,
                   base: int = 0, num_pes: int = 1, gap: int = 0) -> Trace:
    """Requests of ``stride`` bytes covering ``total_bytes`` from ``base`` upward."""
    if total_bytes <= 0 or stride <= 0:
        raise ParamError("total_bytes and stride must be positive")
    count = math.ceil(total_bytes / stride)
    offsets = np.arange(count, dtype=np.int64) * stride
    sizes = np.minimum(stride, total_bytes - offsets)
    cls = CLS_BULK if access_class is AccessClass.BULK else CLS_CACHE
    opc = OP_WRITE if op is Op.WRITE else OP_READ
    meta = dict(generator="sequential", seed=seed, total_bytes=total_bytes, stride=stride)
    return Trace(np.arange(count, dtype=np.int64) * gap, np.arange(count) % num_pes,
                 np.full(count, opc), np.full(count, cls), base + offsets, sizes,
                 {k: str(v) for k, v in meta.items()})


def gen_random(count: int, address_space: int, seed: int = 0, *, size: int = 64,
               access_class: AccessClass = AccessClass.CACHELINE, write_fraction: float = 0.0,
               num_pes: int = 8, base: int = 0, gap: int = 0) -> Trace:
    """Uniform random ``size``-aligned addresses inside ``[base, base + address_space)``."""
    if count <= 0:
        raise ParamError("count must be positive")
    if address_space < size:
        raise ParamError("address_space smaller than one request")
    rng = np.random.default_rng(seed)
    slots = address_space // size
    address = base + rng.integers(0, slots, size=count, dtype=np.int64) * size
    op = (rng.random(count) < write_fraction).astype(np.int8) if write_fraction > 0 else np.zeros(count)
    cls = CLS_BULK if access_class is AccessClass.BULK else CLS_CACHE
    meta = dict(generator="random", seed=seed, count=count, address_space=address_space, size=size)
    return Trace(np.arange(count, dtype=np.int64) * gap, np.arange(count) % num_pes, op,
                 np.full(count, cls), address, np.full(count, size),
                 {k: str(v) for k, v in meta.items()})


@dataclass(frozen=True)
class GcnParams:
    num_vertices: int = 16 * KB
    num_edges: int = 2_400_000
    feature_bytes: int = 4 * KB
    adjacency_bytes: int = 256  # adjacency record per vertex
    entry_bytes: int = 4  # one neighbour id
    num_pes: int = 8
    feature_base: int = 0
    adjacency_base: int | None = None  # default: right after the feature table
    allow_out_of_range: bool = False

    def validate(self) -> None:
        if self.num_vertices < 1 or self.num_edges < 0 or self.num_pes < 1:
            raise ParamError("num_vertices and num_pes must be positive, num_edges non-negative")
        if self.entry_bytes < 1 or self.adjacency_bytes % self.entry_bytes:
            raise ParamError("adjacency_bytes must be a multiple of entry_bytes")
        if self.allow_out_of_range:
            return
        if not KB <= self.feature_bytes <= 8 * KB:
            raise ParamError(f"feature_bytes {self.feature_bytes} outside [1 KB, 8 KB]")
        if not 128 <= self.adjacency_bytes <= 512:
            raise ParamError(f"adjacency_bytes {self.adjacency_bytes} outside [128, 512]")

    @property
    def adjacency_start(self) -> int:
        if self.adjacency_base is not None:
            return self.adjacency_base
        return self.feature_base + self.num_vertices * self.feature_bytes

    @property
    def graph_bytes(self) -> int:
        return self.num_vertices * self.adjacency_bytes

    @property
    def average_degree(self) -> float:
        return self.num_edges / self.num_vertices


def expected_adjacency_reuse(p: GcnParams, cache_bytes: int) -> float:
    """Expected cache hits per adjacency record: (cache / graph size) x degree."""
    return min(1.0, cache_bytes / p.graph_bytes) * p.average_degree


def gen_gcn(p: GcnParams, seed: int = 0) -> Trace:
    """Aggregation phase: for each edge (u, v) the PE owning u reads one entry of
    v's adjacency record (cacheline) and v's feature vector (bulk).

    Edges are uniform random and processed in source order; PEs own sources
    round-robin (u mod num_pes) and issue in lock-step rounds.
    """
    p.validate()
    rng = np.random.default_rng(seed)
    E, V, P = p.num_edges, p.num_vertices, p.num_pes
    meta = dict(generator="gcn", seed=seed, num_vertices=V, num_edges=E,
                feature_bytes=p.feature_bytes, adjacency_bytes=p.adjacency_bytes, num_pes=P)
    if E == 0:
        # no aggregation: every PE just loads the features of the vertices it owns
        vertices = np.arange(V, dtype=np.int64)
        return Trace(np.zeros(V, dtype=np.int64), vertices % P, np.zeros(V), np.full(V, CLS_BULK),
                     p.feature_base + vertices * p.feature_bytes, np.full(V, p.feature_bytes),
                     {k: str(v) for k, v in meta.items()})
    src = rng.integers(0, V, size=E, dtype=np.int64)
    dst = rng.integers(0, V, size=E, dtype=np.int64)
    entry = rng.integers(0, p.adjacency_bytes // p.entry_bytes, size=E, dtype=np.int64)
    order = np.argsort(src, kind="stable")
    src, dst, entry = src[order], dst[order], entry[order]
    pe = src % P
    # position of each edge within its PE's stream -> round index
    by_pe = np.argsort(pe, kind="stable")
    counts = np.bincount(pe, minlength=P)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.empty(E, dtype=np.int64)
    rank[by_pe] = np.arange(E) - np.repeat(starts, counts)
    edge_order = np.lexsort((pe, rank))  # round-major, then PE
    pe, dst, entry = pe[edge_order], dst[edge_order], entry[edge_order]

    n = 2 * E
    out_pe = np.repeat(pe, 2)
    out_cls = np.tile(np.array([CLS_CACHE, CLS_BULK], dtype=np.int8), E)
    address = np.empty(n, dtype=np.int64)
    address[0::2] = p.adjacency_start + dst * p.adjacency_bytes + entry * p.entry_bytes
    address[1::2] = p.feature_base + dst * p.feature_bytes
    size = np.empty(n, dtype=np.int64)
    size[0::2] = p.entry_bytes
    size[1::2] = p.feature_bytes
    return Trace(np.zeros(n, dtype=np.int64), out_pe, np.zeros(n, dtype=np.int8), out_cls,
                 address, size, {k: str(v) for k, v in meta.items()})


@dataclass(frozen=True)
class CnnParams:
    image_hw: int = 227
    channels: int = 3
    filters: int = 96
    kernel_bytes: int = 484  # 11 x 11 fp32
    elem_bytes: int = 4
    input_bytes: int = 16 * KB  # bulk tile size
    weight_request_bytes: int = 64
    num_pes: int = 8
    input_base: int = 0
    weight_base: int | None = None  # default: after the input planes, line aligned
    allow_out_of_range: bool = False

    def validate(self) -> None:
        if min(self.image_hw, self.channels, self.num_pes, self.elem_bytes, self.input_bytes) < 1:
            raise ParamError("geometry parameters must be positive")
        if self.filters < 0 or self.weight_request_bytes < 1:
            raise ParamError("filters must be non-negative, weight_request_bytes positive")
        if self.allow_out_of_range:
            return
        if not 4 <= self.kernel_bytes <= 512:
            raise ParamError(f"kernel_bytes {self.kernel_bytes} outside [4, 512]")
        if not KB <= self.input_bytes <= 16 * KB:
            raise ParamError(f"input_bytes {self.input_bytes} outside [1 KB, 16 KB]")

    @property
    def kernel_side(self) -> int:
        return max(1, math.isqrt(self.kernel_bytes // self.elem_bytes))

    @property
    def plane_bytes(self) -> int:
        return self.image_hw * self.image_hw * self.elem_bytes

    @property
    def weight_start(self) -> int:
        if self.weight_base is not None:
            return self.weight_base
        end = self.input_base + self.channels * self.plane_bytes
        return -(-end // 4096) * 4096


def weight_regions(p: CnnParams) -> list[tuple[int, int]]:
    """(address, bytes) of each kernel; one region per (channel, filter),
    each starting on a 64-byte boundary."""
    stride = -(-p.kernel_bytes // 64) * 64
    return [(p.weight_start + i * stride, p.kernel_bytes)
            for i in range(p.channels * p.filters)]


def gen_cnn(p: CnnParams, seed: int = 0) -> Trace:
    """Single convolution layer.

    Each PE owns a horizontal band of output rows.  Per input channel it
    streams its band (plus the kernel halo) as bulk tiles, then reads that
    channel's kernels as cacheline requests; kernels are shared by all PEs so
    only the first reader misses.
    """
    p.validate()
    meta = dict(generator="cnn", seed=seed, image_hw=p.image_hw, channels=p.channels,
                filters=p.filters, kernel_bytes=p.kernel_bytes, num_pes=p.num_pes)
    row_bytes = p.image_hw * p.elem_bytes
    halo = p.kernel_side - 1
    regions = weight_regions(p)
    per_pe: list[list[tuple]] = [[] for _ in range(p.num_pes)]
    bands = np.array_split(np.arange(p.image_hw), p.num_pes)
    for pe, rows in enumerate(bands):
        if len(rows) == 0:
            continue
        first = int(rows[0])
        last = min(int(rows[-1]) + halo, p.image_hw - 1)
        for ch in range(p.channels):
            start = p.input_base + ch * p.plane_bytes + first * row_bytes
            end = p.input_base + ch * p.plane_bytes + (last + 1) * row_bytes
            addr = start
            while addr < end:
                n = min(p.input_bytes, end - addr)
                per_pe[pe].append((pe, OP_READ, CLS_BULK, addr, n))
                addr += n
            for f in range(p.filters):
                base, nbytes = regions[ch * p.filters + f]
                off = 0
                while off < nbytes:
                    n = min(p.weight_request_bytes, nbytes - off)
                    per_pe[pe].append((pe, OP_READ, CLS_CACHE, base + off, n))
                    off += n
    return _build(_interleave(per_pe), meta)


# ----------------------------------------------------------------------------
# trace files

def write_trace(trace: Trace, fh: TextIO) -> None:
    fh.write(f"#format_version={TRACE_FORMAT_VERSION}\n")
    for key in sorted(trace.meta):
        if key != "format_version":
            fh.write(f"#{key}={trace.meta[key]}\n")
    ops = "RW"
    classes = "CD"
    lines = [f"{c} {p} {ops[o]} {classes[k]} {a:#x} {s}\n"
             for c, p, o, k, a, s in zip(trace.cycle.tolist(), trace.pe.tolist(), trace.op.tolist(),
                                         trace.cls.tolist(), trace.address.tolist(), trace.size.tolist())]
    fh.writelines(lines)


def read_trace(fh: TextIO) -> Trace:
    meta: dict[str, str] = {}
    rows = []
    for line_no, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if not sep:
                continue  # plain comment
            key = key.strip()
            if key == "format_version":
                if value.strip() != str(TRACE_FORMAT_VERSION):
                    raise TraceParseError(line_no, f"unsupported format_version {value.strip()}")
                continue
            meta[key] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 6:
            raise TraceParseError(line_no, f"expected 6 fields, found {len(parts)}")
        cycle, pe, op, cls, address, size = parts
        if op not in _OP_LETTERS:
            raise TraceParseError(line_no, f"unknown op {op!r}")
        if cls not in _CLS_LETTERS:
            raise TraceParseError(line_no, f"unknown class {cls!r}")
        try:
            row = (int(cycle), int(pe), _OP_LETTERS[op], _CLS_LETTERS[cls], int(address, 16), int(size))
        except ValueError as exc:
            raise TraceParseError(line_no, str(exc)) from None
        if row[0] < 0 or row[1] < 0 or row[4] < 0 or row[5] < 1:
            raise TraceParseError(line_no, "negative field or empty request")
        if rows and row[0] < rows[-1][0]:
            raise TraceParseError(line_no, "arrival cycle goes backwards")
        rows.append(row)
    if not rows:
        return Trace.empty(**meta)
    arr = np.array(rows, dtype=np.int64)
    return Trace(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5], meta)


def save_trace(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        write_trace(trace, fh)


def load_trace(path) -> Trace:
    with open(path) as fh:
        return read_trace(fh)
