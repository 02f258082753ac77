"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary) and fails if either the check or its time budget is missed.
"""

import itertools
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from memctl.baseline import run_baseline
from memctl.cache import CacheEngine, Outcome
from memctl.config import ControllerConfig, DramTimingConfig
from memctl.controller import consistency_order, serialize_events, simulate
from memctl.dram import t_mem_rand_exact, t_mem_seq_exact
from memctl.report import from_result, report_emit
from memctl.request import AccessClass, MemRequest, Op
from memctl.scheduler import Batch, SchedEntry, row_switches, schedule_cycles, sort_batch
from memctl.workloads import (CLS_BULK, CLS_CACHE, CnnParams, GcnParams, Trace, gen_cnn,
                              gen_gcn, gen_random, gen_sequential)

CFG = ControllerConfig()
TIMING = DramTimingConfig()


def test_criterion_01_schedule_cycles(verdict):
    start = time.perf_counter()
    expected = {4: 9, 8: 17, 16: 36, 64: 87, 128: 172}
    got = {n: schedule_cycles(1, CFG.replace(sched_batch_size=n, data_cond_latency=2)) for n in expected}
    elapsed = time.perf_counter() - start
    wrong = {n: (got[n], expected[n]) for n in expected if got[n] != expected[n]}
    detail = "all match" if not wrong else "got/expected " + ", ".join(
        f"N={n}: {g}/{e}" for n, (g, e) in wrong.items())
    verdict(1, not wrong and elapsed < 1, detail, elapsed)


def test_criterion_02_rand_seq_ratio(verdict):
    start = time.perf_counter()
    ratio = t_mem_rand_exact(TIMING) / t_mem_seq_exact(TIMING)
    elapsed = time.perf_counter() - start
    verdict(2, ratio == Fraction(3) and elapsed < 1, f"t_mem_rand/t_mem_seq = {ratio}", elapsed)


def test_criterion_03_row_switch_optimality(verdict):
    start = time.perf_counter()
    rng = random.Random(3)
    mismatches = 0
    for b in range(1000):
        size = rng.randint(1, 8)
        rows = [rng.randrange(5) for _ in range(size)]
        batch = Batch([SchedEntry(i, (r << 17) | (i << 6), 0, r, Op.READ) for i, r in enumerate(rows)], Op.READ, 0)
        got = row_switches([e.row for e in sort_batch(batch).requests])
        best = min(row_switches(p) for p in itertools.permutations(rows))
        mismatches += got != best
    elapsed = time.perf_counter() - start
    verdict(3, mismatches == 0 and elapsed < 30, f"{mismatches} of 1000 batches above the optimum", elapsed)


def _mixed_trace(rng: np.random.Generator, n: int) -> Trace:
    """Cache requests over a small pool of lines (so addresses repeat) and
    DMA transfers in a disjoint window, with random arrival gaps."""
    bulk = rng.random(n) < 0.3
    op = (rng.random(n) < 0.3).astype(np.int8)
    cache_addr = rng.integers(0, 96, n) * 64 + rng.integers(0, 16, n) * 4
    dma_addr = (1 << 24) + rng.integers(0, 256, n) * 4096
    address = np.where(bulk, dma_addr, cache_addr)
    size = np.where(bulk, rng.integers(1, 65, n) * 64, 4)
    cycle = np.cumsum(rng.integers(0, 3, n) * (rng.random(n) < 0.5))
    pe = rng.integers(0, CFG.num_pes, n)
    return Trace(cycle, pe, op, np.where(bulk, CLS_BULK, CLS_CACHE), address, size,
                 {"seed": str(int(rng.integers(1 << 30)))})


def test_criterion_04_consistency_suite(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    bad = 0
    first_bad = ""
    for k in range(10_000):
        t = _mixed_trace(rng, int(rng.integers(1, 201)))
        rep = consistency_order(simulate(t, log=True).events)
        if not rep.ok or sorted(rep.order) != list(range(len(t))):
            bad += 1
            first_bad = first_bad or f"; first failure trace {k}: {rep.violations[:1]}"
    elapsed = time.perf_counter() - start
    verdict(4, bad == 0 and elapsed < 120, f"{bad} of 10000 traces with violations{first_bad}", elapsed)


class _LruOracle:
    """Write-back write-allocate LRU cache; one recency list per set."""

    def __init__(self, sets: int, ways: int, line: int):
        self.sets = [[] for _ in range(sets)]
        self.ways, self.line = ways, line

    def access(self, address: int) -> bool:
        line = address // self.line
        s = self.sets[line % len(self.sets)]
        if line in s:
            s.remove(line)
            s.append(line)
            return True
        if len(s) == self.ways:
            s.pop(0)
        s.append(line)
        return False


def test_criterion_05_cache_oracle(verdict):
    start = time.perf_counter()
    mismatches = []
    for ways, lines in ((1, 512), (4, 4096), (8, 8192)):
        cfg = CFG.replace(cache_line_width=512, cache_associativity=ways, cache_num_lines=lines)
        rng = np.random.default_rng(lines)
        n = 10_000
        addr = rng.integers(0, 2 * lines, n) * 64 + rng.integers(0, 16, n) * 4
        op = (rng.random(n) < 0.3).astype(np.int8)
        oracle = _LruOracle(lines // ways, ways, 64)
        expect = [oracle.access(a) for a in addr.tolist()]
        # functional engine, fills applied immediately
        eng = CacheEngine(cfg)
        engine_hits = []
        for a, w in zip(addr.tolist(), op.tolist()):
            r = eng.pe_access(MemRequest(0, Op.WRITE if w else Op.READ, AccessClass.CACHELINE, a, 4, 4,
                                         bytes(4) if w else b""))
            engine_hits.append(r.outcome is not Outcome.MISS)
            if r.new_miss:
                eng.mem_fill(r.line)
        # full pipelined simulation
        t = Trace(np.zeros(n), np.arange(n) % 8, op, np.full(n, CLS_CACHE), addr, np.full(n, 4), {"seed": "5"})
        events = simulate(t, cfg, log=True).events
        outcome = {e.seq: e.get("outcome") for e in events if e.kind == "completed"}
        sim_hits = [outcome[i] != "miss" for i in range(n)]
        for name, got in (("engine", engine_hits), ("simulator", sim_hits)):
            diff = sum(g != e for g, e in zip(got, expect))
            if diff:
                mismatches.append(f"{name} ({ways}-way, {lines} lines): {diff} differ")
    elapsed = time.perf_counter() - start
    verdict(5, not mismatches and elapsed < 60, "; ".join(mismatches) or "3 geometries x 10000 requests match",
            elapsed)


@pytest.mark.slow
def test_criterion_06_gcn(verdict):
    start = time.perf_counter()
    cfg = CFG.replace(cache_line_width=512, cache_associativity=4, cache_num_lines=4096,
                      dma_max_transaction=16 * 1024, dma_parallel_count=4)
    trace = gen_gcn(GcnParams(num_vertices=16 * 1024, num_edges=2_400_000, feature_bytes=4096), 0)
    result = simulate(trace, cfg, TIMING)
    base = run_baseline(trace, cfg, TIMING).total_cycles
    elapsed = time.perf_counter() - start
    ok = result.total_cycles < base and result.dma_share > 0.90 and elapsed < 300
    verdict(6, ok, f"controller {result.total_cycles} vs baseline {base} cycles "
                   f"({1 - result.total_cycles / base:.1%} less), DMA share {result.dma_share:.3f}", elapsed)


@pytest.mark.slow
def test_criterion_07_cnn(verdict):
    start = time.perf_counter()
    trace = gen_cnn(CnnParams(image_hw=227), 0)
    result = simulate(trace, CFG, TIMING)
    base = run_baseline(trace, CFG, TIMING).total_cycles
    elapsed = time.perf_counter() - start
    ok = result.total_cycles < base and 0.6 <= result.dma_share <= 0.95 and elapsed < 300
    verdict(7, ok, f"controller {result.total_cycles} vs baseline {base} cycles "
                   f"({1 - result.total_cycles / base:.1%} less), DMA share {result.dma_share:.3f}", elapsed)


def test_criterion_08_narrow_interface(verdict):
    start = time.perf_counter()
    cfg = CFG.replace(app_io_data_width=1)
    dma = simulate(gen_sequential(16384, 16384), cfg, TIMING).total_cycles
    cache_only = simulate(gen_sequential(16384, 1, access_class=AccessClass.CACHELINE),
                          cfg.replace(enable_dma=False), TIMING).total_cycles
    elapsed = time.perf_counter() - start
    factor = cache_only / dma
    verdict(8, factor >= 5 and elapsed < 60,
            f"cache-only {cache_only} vs DMA {dma} cycles, {factor:.1f}x", elapsed)


def test_criterion_09_batch_size(verdict):
    start = time.perf_counter()
    trace = gen_random(16384, 2 << 20, 3)
    totals = {}
    for n in (4, 32, 64, 512):
        cfg = CFG.replace(sched_batch_size=n, allow_out_of_range=n > 128)
        totals[n] = simulate(trace, cfg, TIMING).total_cycles
    elapsed = time.perf_counter() - start
    ok = max(totals[32], totals[64]) < min(totals[4], totals[512]) and elapsed < 300
    verdict(9, ok, ", ".join(f"N={n}: {c}" for n, c in totals.items()), elapsed)


def test_criterion_10_determinism(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    traces = [_mixed_trace(rng, 200), gen_cnn(CnnParams(image_hw=64, filters=8)),
              gen_random(2000, 1 << 22, 10, write_fraction=0.3)]
    same = True
    for t in traces:
        runs = []
        for _ in range(2):
            r = simulate(t, CFG, TIMING, log=True)
            runs.append((serialize_events(r.events), report_emit(from_result(r), "json")))
        same &= runs[0] == runs[1]
    elapsed = time.perf_counter() - start
    verdict(10, same and elapsed < 60, "event logs and reports byte-identical" if same else "runs differ",
            elapsed)
