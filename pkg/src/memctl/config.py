"""Controller and DRAM timing parameters.

Every reconfigurable knob of the controller lives in :class:`ControllerConfig`;
the DRAM timing model and address map live in :class:`DramTimingConfig`.
Both are immutable after construction.  :func:`validate` reports range and
structural violations as values; :func:`load_config` parses the line-oriented
``section.key = value`` document and raises on anything it cannot accept.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from typing import Iterable

FORMAT_VERSION = 1

KB = 1024


class ConfigError(ValueError):
    """Base class for configuration document problems."""


class ConfigParseError(ConfigError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class UnknownKeyError(ConfigError):
    def __init__(self, line_no: int, key: str):
        self.line_no = line_no
        self.key = key
        super().__init__(f"line {line_no}: unknown key {key!r}")


class ConfigValidationError(ConfigError):
    def __init__(self, violations: list["Violation"]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class ControllerConfig:
    # overall design
    mem_if_data_width: int = 64  # bytes per memory-interface beat
    mem_if_addr_width: int = 31  # bits
    app_io_data_width: int = 64  # bytes per PE-interface beat
    app_addr_width: int = 31  # bits
    num_pes: int = 8
    enable_scheduler: bool = True
    enable_cacheline: bool = True
    enable_dma: bool = True
    # DMA
    dma_max_transaction: int = 16 * KB
    dma_parallel_count: int = 4
    # scheduler
    sched_batch_size: int = 64
    sched_timeout: int = 40
    sched_bypass_window: int = 16
    sched_bypass_interval: int = 8  # bypass when fewer than 1 request per this many cycles
    # cache
    cache_line_width: int = 512  # bits
    cache_num_lines: int = 4096
    cache_associativity: int = 4
    # latencies, controller cycles
    ctrl_overhead: int = 10
    data_cond_latency: int = 2
    data_convert_latency: int = 2
    cache_pipeline_fill: int = 4
    mem_pipeline_fill: int = 3
    allow_out_of_range: bool = False

    @property
    def line_bytes(self) -> int:
        return self.cache_line_width // 8

    @property
    def num_sets(self) -> int:
        return self.cache_num_lines // self.cache_associativity

    @property
    def cache_bytes(self) -> int:
        return self.cache_num_lines * self.line_bytes

    def replace(self, **changes) -> "ControllerConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class AddressMap:
    """row:bank:column bit slicing of a byte address (column lowest)."""

    column_bits: int
    bank_bits: int
    row_bits: int

    @property
    def row_shift(self) -> int:
        return self.column_bits + self.bank_bits

    @property
    def total_bits(self) -> int:
        return self.column_bits + self.bank_bits + self.row_bits


@dataclass(frozen=True)
class DramTimingConfig:
    t_cl: int = 17  # memory-clock cycles
    t_rcd: int = 17
    t_rp: int = 17
    t_mem: float = 0.833  # ns per memory clock
    t_fpga: float = 3.333  # ns per controller clock
    num_banks: int = 16
    column_bits: int = 13
    row_bits: int = 14

    @property
    def bank_bits(self) -> int:
        return max(self.num_banks - 1, 0).bit_length()

    @property
    def address_map(self) -> AddressMap:
        return AddressMap(self.column_bits, self.bank_bits, self.row_bits)

    def replace(self, **changes) -> "DramTimingConfig":
        return dataclasses.replace(self, **changes)


# Supported ranges; enforced unless allow_out_of_range is set.
RANGES: dict[str, tuple[int, int]] = {
    "mem_if_data_width": (64, 512),
    "mem_if_addr_width": (20, 36),
    "app_io_data_width": (1, 64),
    "app_addr_width": (28, 37),
    "num_pes": (1, 128),
    "dma_max_transaction": (256, 256 * KB),
    "dma_parallel_count": (1, 8),
    "sched_batch_size": (4, 128),
    "sched_timeout": (4, 40),
    "cache_line_width": (256, 1024),
    "cache_num_lines": (256, 16 * KB),
    "cache_associativity": (1, 16),
}


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def fields(self) -> set[str]:
        return {v.field for v in self.violations}


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def validate(config: ControllerConfig, timing: DramTimingConfig | None = None) -> ValidationResult:
    timing = timing or DramTimingConfig()
    out: list[Violation] = []

    if not config.allow_out_of_range:
        for name, (lo, hi) in RANGES.items():
            value = getattr(config, name)
            if not lo <= value <= hi:
                out.append(Violation(name, f"{value} outside [{lo}, {hi}]"))

    # structural rules hold regardless of the override
    positive = ("mem_if_data_width", "app_io_data_width", "num_pes", "dma_max_transaction",
                "dma_parallel_count", "sched_batch_size", "sched_timeout", "cache_line_width",
                "cache_num_lines", "cache_associativity", "sched_bypass_window",
                "sched_bypass_interval")
    for name in positive:
        if getattr(config, name) < 1:
            out.append(Violation(name, "must be at least 1"))
    for name in ("ctrl_overhead", "data_cond_latency", "data_convert_latency",
                 "cache_pipeline_fill", "mem_pipeline_fill"):
        if getattr(config, name) < 0:
            out.append(Violation(name, "latency must be non-negative"))
    if not _is_pow2(config.sched_batch_size):
        out.append(Violation("sched_batch_size", f"{config.sched_batch_size} is not a power of two"))
    if config.cache_line_width % 8:
        out.append(Violation("cache_line_width", f"{config.cache_line_width} bits is not byte aligned"))
    if config.cache_associativity >= 1 and config.cache_num_lines % config.cache_associativity:
        out.append(Violation("cache_num_lines", "not divisible by cache_associativity"))
    if config.ctrl_overhead > 10:
        out.append(Violation("ctrl_overhead", f"{config.ctrl_overhead} exceeds 10 cycles"))
    if not (config.enable_cacheline or config.enable_dma):
        out.append(Violation("enable_cacheline", "at least one of enable_cacheline, enable_dma must be set"))

    for name in ("t_cl", "t_rcd", "t_rp", "t_mem", "t_fpga", "num_banks"):
        if not getattr(timing, name) > 0:
            out.append(Violation(name, "must be strictly positive"))
    if not _is_pow2(timing.num_banks):
        out.append(Violation("num_banks", f"{timing.num_banks} is not a power of two"))
    if timing.column_bits < 0 or timing.row_bits < 1:
        out.append(Violation("address_map", "column_bits must be >= 0 and row_bits >= 1"))
    if timing.address_map.total_bits > config.mem_if_addr_width:
        out.append(Violation("address_map", f"{timing.address_map.total_bits} bits do not fit in "
                                            f"mem_if_addr_width={config.mem_if_addr_width}"))
    return ValidationResult(tuple(out))


# ----------------------------------------------------------------------------
# configuration document

def _key_table() -> dict[str, tuple[str, str]]:
    """Map document key -> (target, field name); target is 'ctrl' or 'dram'."""
    table: dict[str, tuple[str, str]] = {}
    for f in fields(ControllerConfig):
        name = f.name
        if name.startswith(("dma_", "sched_", "cache_")):
            section, _, rest = name.partition("_")
            table[f"{section}.{rest}"] = ("ctrl", name)
        elif name == "mem_pipeline_fill":
            table["cache.mem_pipeline_fill"] = ("ctrl", name)
        else:
            table[f"controller.{name}"] = ("ctrl", name)
    for f in fields(DramTimingConfig):
        table[f"dram.{f.name}"] = ("dram", f.name)
    return table


KEYS = _key_table()
SECTIONS = ("controller", "dram", "cache", "dma", "sched")


def _parse_value(raw: str, kind: type, line_no: int):
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text, 0)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigParseError(line_no, f"cannot read {text!r} as {kind.__name__}") from None
    raise ConfigParseError(line_no, f"unsupported field type {kind}")


def parse_config(text: str) -> tuple[ControllerConfig, DramTimingConfig]:
    """Parse a configuration document without validating ranges."""
    ctrl_types = {f.name: f.type for f in fields(ControllerConfig)}
    dram_types = {f.name: f.type for f in fields(DramTimingConfig)}
    types = {"int": int, "bool": bool, "float": float}
    ctrl: dict = {}
    dram: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigParseError(line_no, f"expected 'section.key = value', got {body!r}")
        key, _, value = body.partition("=")
        key = key.strip()
        if key == "format_version":
            version = _parse_value(value, int, line_no)
            if version != FORMAT_VERSION:
                raise ConfigParseError(line_no, f"unsupported format_version {version}")
            continue
        if key not in KEYS:
            raise UnknownKeyError(line_no, key)
        target, name = KEYS[key]
        type_name = (ctrl_types if target == "ctrl" else dram_types)[name]
        parsed = _parse_value(value, types[type_name], line_no)
        (ctrl if target == "ctrl" else dram)[name] = parsed
    return ControllerConfig(**ctrl), DramTimingConfig(**dram)


def load_config(text: str) -> tuple[ControllerConfig, DramTimingConfig]:
    config, timing = parse_config(text)
    result = validate(config, timing)
    if not result.ok:
        raise ConfigValidationError(list(result.violations))
    return config, timing


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    return repr(value) if isinstance(value, float) else str(value)


def render_config(config: ControllerConfig | None = None,
                  timing: DramTimingConfig | None = None) -> str:
    config = config or ControllerConfig()
    timing = timing or DramTimingConfig()
    lines = [f"format_version = {FORMAT_VERSION}"]
    for sec in SECTIONS:
        lines.append(f"\n# {sec}")
        for key, (target, name) in KEYS.items():
            if key.split(".", 1)[0] != sec:
                continue
            source = config if target == "ctrl" else timing
            lines.append(f"{key} = {_render_value(getattr(source, name))}")
    return "\n".join(lines) + "\n"


def apply_overrides(config: ControllerConfig, timing: DramTimingConfig,
                    assignments: Iterable[tuple[str, str]]) -> tuple[ControllerConfig, DramTimingConfig]:
    """Apply ``key = value`` pairs (document syntax) on top of existing configs."""
    text = render_config(config, timing) + "\n".join(f"{k} = {v}" for k, v in assignments)
    return parse_config(text)
