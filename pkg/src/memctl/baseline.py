"""Reference point: PEs wired straight to the memory interface.

There is no cache, no reordering and no DMA staging.  Each request is split
into ``app_io_data_width`` element accesses; a PE pushes one element per
cycle and starts its next request after the last element of the previous
one.  Elements enter one FIFO in (cycle, PE) order and DRAM serves them one
at a time with the open-row latency model, so row hits still happen whenever
the interleaved stream allows.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .config import ControllerConfig, DramTimingConfig
from .dram import DramModel, Latencies
from .workloads import Trace


@dataclass
class BaselineResult:
    total_cycles: int
    elements: int
    row_first: int
    row_hits: int
    row_conflicts: int


def _issue_starts(trace: Trace, n_elem: np.ndarray) -> np.ndarray:
    """Cycle at which each request's first element leaves its PE."""
    n = len(trace)
    order = np.lexsort((np.arange(n), trace.pe))
    pe = trace.pe[order]
    cnt = n_elem[order]
    arr = trace.cycle[order]
    new_group = np.ones(n, dtype=bool)
    new_group[1:] = pe[1:] != pe[:-1]
    group = np.cumsum(new_group) - 1
    csum = np.cumsum(cnt)
    group_base = (csum - cnt)[new_group]
    before = csum - cnt - group_base[group]  # elements issued earlier by the same PE
    # start = before + running max of (arrival - before), restarted per PE
    slack = arr - before
    span = int(np.abs(slack).max()) + 1 if n else 1
    shifted = slack + group * (2 * span)
    running = np.maximum.accumulate(shifted) - group * (2 * span)
    out = np.empty(n, dtype=np.int64)
    out[order] = before + running
    return out


def run_baseline(trace: Trace, cfg: ControllerConfig | None = None,
                 timing: DramTimingConfig | None = None, window: int = 1 << 18) -> BaselineResult:
    cfg = cfg or ControllerConfig()
    timing = timing or DramTimingConfig()
    n = len(trace)
    if n == 0:
        return BaselineResult(0, 0, 0, 0, 0)
    w = cfg.app_io_data_width
    n_elem = -(-trace.size // w)
    starts = _issue_starts(trace, n_elem)
    lat = Latencies.from_timing(timing)
    amap = timing.address_map
    bank_mask = (1 << amap.bank_bits) - 1
    num_pes = int(trace.pe.max()) + 1

    per_pe = []
    for p in range(num_pes):
        idx = np.flatnonzero(trace.pe == p)
        s = starts[idx]
        per_pe.append((s, s + n_elem[idx], n_elem[idx], trace.address[idx]))

    open_row = np.full(timing.num_banks, -1, dtype=np.int64)
    done = 0
    first = hits = conflicts = elements = 0
    t0 = int(starts.min())
    t_end = int(max(e[-1] for _, e, _, _ in per_pe if len(e)))
    grid = np.full(window * num_pes, -1, dtype=np.int64)
    while t0 < t_end:
        t1 = t0 + window
        grid.fill(-1)
        any_elem = False
        next_start = None
        for p, (s, e, cnt, addr) in enumerate(per_pe):
            lo = np.searchsorted(e, t0, side="right")
            hi = np.searchsorted(s, t1, side="left")
            if lo < hi:
                any_elem = True
                ss, cc, aa = s[lo:hi], cnt[lo:hi], addr[lo:hi]
                k0 = np.maximum(0, t0 - ss)
                k1 = np.minimum(cc, t1 - ss)
                m = k1 - k0
                rep = np.repeat(np.arange(hi - lo), m)
                offs = np.arange(len(rep)) - np.repeat(np.cumsum(m) - m, m) + k0[rep]
                cyc = ss[rep] + offs
                grid[(cyc - t0) * num_pes + p] = aa[rep] + offs * w
            elif lo < len(s):
                nxt = int(s[lo])
                next_start = nxt if next_start is None else min(next_start, nxt)
        if not any_elem:
            if next_start is None:
                break
            t0 = max(t1, next_start)
            continue
        pos = np.flatnonzero(grid >= 0)
        address = grid[pos]
        issue = pos // num_pes + t0
        bank = (address >> amap.column_bits) & bank_mask
        row = address >> amap.row_shift
        order = np.argsort(bank, kind="stable")
        sb, sr = bank[order], row[order]
        prev = np.empty_like(sr)
        prev[1:] = sr[:-1]
        head = np.ones(len(sb), dtype=bool)
        head[1:] = sb[1:] != sb[:-1]
        prev[head] = open_row[sb[head]]
        cost_sorted = np.where(prev == -1, lat.first, np.where(prev == sr, lat.hit, lat.conflict))
        first += int(np.sum(prev == -1))
        hits += int(np.sum(prev == sr))
        cost = np.empty_like(cost_sorted)
        cost[order] = cost_sorted
        tail = np.ones(len(sb), dtype=bool)
        tail[:-1] = sb[1:] != sb[:-1]
        open_row[sb[tail]] = sr[tail]
        c = np.cumsum(cost)
        finish = c + np.maximum(done, np.maximum.accumulate(issue - (c - cost)))
        done = int(finish[-1])
        elements += len(address)
        t0 = t1
    conflicts = elements - first - hits
    return BaselineResult(done, elements, first, hits, conflicts)


def baseline_reference(trace: Trace, cfg: ControllerConfig | None = None,
                       timing: DramTimingConfig | None = None) -> BaselineResult:
    """Element-by-element version of :func:`run_baseline`, for cross-checking."""
    cfg = cfg or ControllerConfig()
    timing = timing or DramTimingConfig()
    w = cfg.app_io_data_width
    pe_free: dict[int, int] = {}
    heap = []
    for i in range(len(trace)):
        p = int(trace.pe[i])
        start = max(int(trace.cycle[i]), pe_free.get(p, 0))
        count = -(-int(trace.size[i]) // w)
        pe_free[p] = start + count
        base = int(trace.address[i])
        for k in range(count):
            heap.append((start + k, p, base + k * w))
    heapq.heapify(heap)
    dram = DramModel(timing)
    done = 0
    elements = 0
    while heap:
        cycle, _, address = heapq.heappop(heap)
        done = max(done, cycle) + dram.access(address)
        elements += 1
    st = dram.state
    return BaselineResult(done, elements, st.first_hits, st.row_hits, st.conflicts)
