"""Run summaries and their text / CSV / JSON renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields

from .baseline import BaselineResult
from .controller import SimResult

REPORT_FORMAT_VERSION = 1
FORMATS = ("text", "csv", "json")


@dataclass
class SimReport:
    model: str = "controller"
    label: str = ""
    total_cycles: int = 0
    cache_busy_cycles: int = 0
    dma_busy_cycles: int = 0
    cache_share: float = 0.0
    dma_share: float = 0.0
    cacheline_requests: int = 0
    bulk_requests: int = 0
    cache_hits: int = 0
    cache_hits_under_miss: int = 0
    cache_misses: int = 0
    cache_evictions: int = 0
    cache_writebacks: int = 0
    dma_transfers: int = 0
    row_first: int = 0
    row_hits: int = 0
    row_conflicts: int = 0
    batches: int = 0
    batch_mean_fill: float = 0.0
    batch_timeouts: int = 0
    batch_first_formation: int | None = None
    schedule_cycles: int = 0
    bypassed: int = 0
    baseline_total_cycles: int | None = None
    improvement: float | None = None
    format_version: int = REPORT_FORMAT_VERSION

    def with_baseline(self, baseline_total: int) -> "SimReport":
        self.baseline_total_cycles = baseline_total
        self.improvement = 1 - self.total_cycles / baseline_total if baseline_total else None
        return self

    def normalized(self) -> dict[str, float | None]:
        """Times as ratios to the controller total."""
        t = self.total_cycles
        if not t:
            return {"cache_time_norm": 0.0, "dma_time_norm": 0.0, "baseline_norm": None}
        return {
            "cache_time_norm": self.cache_busy_cycles / t,
            "dma_time_norm": self.dma_busy_cycles / t,
            "baseline_norm": None if self.baseline_total_cycles is None else self.baseline_total_cycles / t,
        }


FIELDS = [f.name for f in fields(SimReport)]
_TYPES = {f.name: f.type for f in fields(SimReport)}


def from_result(result: SimResult, label: str = "") -> SimReport:
    return SimReport(
        model="controller",
        label=label,
        total_cycles=result.total_cycles,
        cache_busy_cycles=result.cache_busy,
        dma_busy_cycles=result.dma_busy,
        cache_share=result.cache_share,
        dma_share=result.dma_share,
        cacheline_requests=result.cacheline_requests,
        bulk_requests=result.bulk_requests,
        cache_hits=result.hits,
        cache_hits_under_miss=result.hits_under_miss,
        cache_misses=result.misses,
        cache_evictions=result.evictions,
        cache_writebacks=result.writebacks,
        dma_transfers=result.dma_transfers,
        row_first=result.row_first,
        row_hits=result.row_hits,
        row_conflicts=result.row_conflicts,
        batches=result.batches,
        batch_mean_fill=result.batched_requests / result.batches if result.batches else 0.0,
        batch_timeouts=result.batch_timeouts,
        batch_first_formation=result.first_batch_formation,
        schedule_cycles=result.schedule_cycles,
        bypassed=result.bypassed,
    )


def from_baseline(result: BaselineResult, cacheline: int, bulk: int, label: str = "") -> SimReport:
    return SimReport(
        model="baseline",
        label=label,
        total_cycles=result.total_cycles,
        cacheline_requests=cacheline,
        bulk_requests=bulk,
        row_first=result.row_first,
        row_hits=result.row_hits,
        row_conflicts=result.row_conflicts,
        baseline_total_cycles=result.total_cycles,
        improvement=0.0 if result.total_cycles else None,
    )


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _row(report: SimReport) -> dict[str, str]:
    row = {name: _fmt(getattr(report, name)) for name in FIELDS}
    row.update({k: _fmt(v) for k, v in report.normalized().items()})
    return row


def report_emit(reports: SimReport | list[SimReport], fmt: str = "text") -> str:
    items = [reports] if isinstance(reports, SimReport) else list(reports)
    if fmt == "json":
        payload = {"format_version": REPORT_FORMAT_VERSION,
                   "reports": [{**asdict(r), **r.normalized()} for r in items]}
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        rows = [_row(r) for r in items]
        header = list(rows[0]) if rows else FIELDS
        writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "text":
        blocks = []
        for r in items:
            row = _row(r)
            width = max(len(k) for k in row)
            blocks.append("\n".join(f"{k:<{width}}  {v:>16}" for k, v in row.items()))
        return "\n\n".join(blocks) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def _coerce(name: str, raw):
    if raw is None or raw == "-":
        return None
    kind = _TYPES[name]
    if kind == "str":
        return str(raw)
    if kind.startswith("float"):
        return float(raw)
    return int(raw)


def parse_reports(text: str, fmt: str = "json") -> list[SimReport]:
    """Read reports back from their JSON or CSV rendering."""
    if fmt == "json":
        payload = json.loads(text)
        if payload.get("format_version") != REPORT_FORMAT_VERSION:
            raise ValueError(f"unsupported report format_version {payload.get('format_version')}")
        rows = payload["reports"]
        return [SimReport(**{k: v for k, v in row.items() if k in _TYPES}) for row in rows]
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        return [SimReport(**{k: _coerce(k, v) for k, v in row.items() if k in _TYPES}) for row in reader]
    raise ValueError(f"cannot parse {fmt!r} reports")
