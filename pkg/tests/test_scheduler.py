import itertools
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from memctl.config import ControllerConfig
from memctl.request import Op
from memctl.scheduler import (Batch, Decision, EnqueueResult, SchedEntry, Scheduler, apply_network,
                              bitonic_network, bypass_decision, network_depth, row_switches, schedule_cycles,
                              scheduling_time, sort_batch)


def entries(rows, op=Op.READ, bank=0):
    return [SchedEntry(i, (r << 17) | (i * 64 % 8192), bank, r, op) for i, r in enumerate(rows)]


def batch(rows, **kw):
    return Batch(entries(rows, **kw), Op.READ, 0)


def sched_oracle(n, cond=2):
    lg = math.log2(n)
    return n + lg * (lg + 1) / 2 + cond


@pytest.mark.parametrize("n", [4, 8, 16, 32, 64, 128])
def test_scheduling_time_matches_closed_form(n):
    expected = sched_oracle(n)
    assert scheduling_time(n, 2) == expected
    assert schedule_cycles(1, ControllerConfig(sched_batch_size=n)) == expected


def test_degenerate_width_one():
    assert scheduling_time(1, 2) == 3


def test_partial_batch_pays_full_network():
    cfg = ControllerConfig(sched_batch_size=64)
    assert schedule_cycles(3, cfg) == schedule_cycles(64, cfg) == 87
    with pytest.raises(ValueError):
        schedule_cycles(65, cfg)


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32, 64, 128, 512])
def test_network_depth_matches_stage_count(n):
    stages = bitonic_network(n)
    lg = n.bit_length() - 1
    assert len(stages) == network_depth(n) == lg * (lg + 1) // 2
    assert all(len(stage) == n // 2 for stage in stages)


def test_network_sorts_all_zero_one_inputs():
    # 0-1 principle: a comparator network sorts everything iff it sorts every 0/1 input
    stages = bitonic_network(8)
    for bits in itertools.product((0, 1), repeat=8):
        assert apply_network(list(bits), stages) == sorted(bits)


def test_rows_example():
    out = sort_batch(batch([5, 1, 3, 2]))
    assert [e.row for e in out.requests] == [1, 2, 3, 5]


def test_same_address_keeps_arrival_order():
    reqs = [SchedEntry(7, 0x4000, 0, 0, Op.READ), SchedEntry(3, 0x8000, 0, 1, Op.READ),
            SchedEntry(9, 0x4000, 0, 0, Op.READ)]
    out = sort_batch(Batch(reqs, Op.READ, 0))
    assert [e.seq_no for e in out.requests] == [7, 9, 3]


@settings(max_examples=200, deadline=None)
@given(rows=st.lists(st.integers(0, 6), min_size=1, max_size=40))
def test_sort_matches_stable_sort_and_preserves_multiset(rows):
    b = batch(rows)
    out = sort_batch(b, 64)
    assert out.requests == sorted(b.requests, key=lambda e: e.row)
    assert sorted(out.sort_keys) == out.sort_keys


def test_row_switch_minimality_exhaustive():
    rng = random.Random(11)
    for _ in range(200):
        rows = [rng.randrange(4) for _ in range(rng.randint(1, 7))]
        best = min(row_switches(p) for p in itertools.permutations(rows))
        got = row_switches([e.row for e in sort_batch(batch(rows)).requests])
        assert got == best == len(set(rows)) - 1


# -- bypass ------------------------------------------------------------------

CFG = ControllerConfig()


def test_sequential_window_bypasses():
    window = [(c, 0x1000 + 64 * c, 0, 0) for c in range(16)]
    assert bypass_decision(window, CFG) is Decision.BYPASS


def test_dense_random_window_schedules():
    rng = random.Random(2)
    window = []
    for c in range(16):
        a = rng.randrange(1 << 24) & ~63
        window.append((c, a, (a >> 13) & 15, a >> 17))
    assert bypass_decision(window, CFG) is Decision.SCHEDULE


def test_sparse_traffic_bypasses():
    window = [(100 * c, (c * 7919 << 17), 0, c * 7919) for c in range(16)]
    assert bypass_decision(window, CFG) is Decision.BYPASS


def test_single_request_bypasses():
    assert bypass_decision([(0, 0, 0, 0)], CFG) is Decision.BYPASS


# -- buffers and batches ------------------------------------------------------

def small_cfg(**kw):
    base = dict(sched_batch_size=4, sched_timeout=4)
    base.update(kw)
    return ControllerConfig(**base)


def test_first_request_starts_timeout_and_timeout_emits_partial_batch():
    s = Scheduler(small_cfg(), 16)
    for i in range(3):
        assert s.enqueue(SchedEntry(i, 0, 0, i, Op.READ), 0) is EnqueueResult.ACCEPTED
    formed = []
    for cycle in range(4):
        formed += s.tick(cycle)
    assert len(formed) == 1
    assert len(formed[0].requests) == 3
    assert s.stats.timeouts == 1


def test_repeated_tick_in_one_cycle_counts_once():
    s = Scheduler(small_cfg(), 16)
    s.enqueue(SchedEntry(0, 0, 0, 0, Op.READ), 0)
    formed = []
    for cycle in range(3):
        formed += s.tick(cycle) + s.tick(cycle)
    assert not formed
    assert len(s.tick(3)) == 1


def test_empty_buffers_never_emit():
    s = Scheduler(small_cfg(), 16)
    assert all(not s.tick(c) for c in range(50))
    assert s.stats.batches == 0


def test_full_buffer_forms_batch_before_timeout():
    s = Scheduler(small_cfg(), 16)
    results = [s.enqueue(SchedEntry(i, 0, 3, i, Op.READ), 0) for i in range(4)]
    assert results[-1] is EnqueueResult.BATCH_FORMED
    assert s.stats.timeouts == 0
    assert len(s.sealed) == 1


def test_op_change_seals_open_batch():
    s = Scheduler(small_cfg(), 16)
    s.enqueue(SchedEntry(0, 0, 0, 0, Op.READ), 0)
    s.enqueue(SchedEntry(1, 0, 0, 0, Op.READ), 0)
    s.enqueue(SchedEntry(2, 0, 0, 0, Op.WRITE), 1)
    assert len(s.sealed) == 1
    assert s.sealed[0].op is Op.READ
    assert [e.seq_no for e in s.sealed[0].requests] == [0, 1]


def test_backpressure_when_both_buffers_sealed():
    s = Scheduler(small_cfg(), 16)
    for i in range(8):
        s.enqueue(SchedEntry(i, 0, 0, i, Op.READ), 0)
    assert not s.can_accept(0, Op.READ)
    assert s.enqueue(SchedEntry(8, 0, 0, 0, Op.READ), 0) is EnqueueResult.BACKPRESSURE
    assert s.can_accept(1, Op.READ)  # other banks unaffected


def test_network_latency_and_output_order():
    cfg = small_cfg()
    s = Scheduler(cfg, 16)
    for i, row in enumerate([3, 1, 2, 0]):
        s.enqueue(SchedEntry(i, 0, 0, row, Op.READ), 0)
    s.advance(0)
    for c in range(1, scheduling_time(4, 2)):
        assert s.advance(c) is None
    done = s.advance(scheduling_time(4, 2))
    assert done is not None
    assert [s.pop().row for _ in range(4)] == [0, 1, 2, 3]
    assert s.empty


@settings(max_examples=40, deadline=None)
@given(reqs=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.booleans()), max_size=80))
def test_scheduler_preserves_per_address_order(reqs):
    cfg = small_cfg()
    s = Scheduler(cfg, 4)
    pending = [SchedEntry(i, (row << 8) | bank, bank, row, Op.WRITE if w else Op.READ)
               for i, (bank, row, w) in enumerate(reqs)]
    out = []
    cycle = 0
    while (pending or not s.empty) and cycle < 10_000:
        if pending and s.can_accept(pending[0].bank, pending[0].op):
            s.enqueue(pending.pop(0), cycle)
        s.tick(cycle)
        s.advance(cycle)
        while s.output:
            out.append(s.pop())
        cycle += 1
    assert sorted(e.seq_no for e in out) == list(range(len(reqs)))
    by_addr = {}
    for e in out:
        by_addr.setdefault(e.address, []).append(e.seq_no)
    assert all(seqs == sorted(seqs) for seqs in by_addr.values())
