"""memctl command line: run, baseline, sweep, gen, dump-default-config, check."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .baseline import run_baseline
from .config import (KEYS, ConfigError, ControllerConfig, DramTimingConfig, apply_overrides, load_config,
                     render_config, validate)
from .controller import SimulationError, consistency_order, parse_events, serialize_events, simulate
from .report import FORMATS, SimReport, from_baseline, from_result, report_emit
from .request import AccessClass, MalformedRequestError, Op, RoutingError
from .workloads import (CnnParams, GcnParams, ParamError, Trace, TraceParseError, gen_cnn, gen_gcn,
                        gen_random, gen_sequential, load_trace, write_trace)

EXIT_OK, EXIT_USAGE, EXIT_TRACE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> tuple[ControllerConfig, DramTimingConfig]:
    if path is None:
        return ControllerConfig(), DramTimingConfig()
    try:
        return load_config(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None


def _load_trace(path: str | None, seed: int | None) -> Trace:
    if path is None:
        raise UsageError("--trace is required")
    try:
        trace = load_trace(path)
    except OSError as exc:
        raise TraceParseError(0, f"cannot read trace {path}: {exc.strerror}") from None
    if seed is not None:
        trace.meta["seed"] = str(seed)
    return trace


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def run_report(trace: Trace, cfg: ControllerConfig, timing: DramTimingConfig, *,
               with_baseline: bool = True, label: str = "", log: bool = False):
    result = simulate(trace, cfg, timing, log=log)
    report = from_result(result, label)
    if with_baseline:
        report.with_baseline(run_baseline(trace, cfg, timing).total_cycles)
    return report, result


def _sweep_point(args) -> SimReport:
    trace, cfg, timing, label, with_baseline = args
    return run_report(trace, cfg, timing, with_baseline=with_baseline, label=label)[0]


def sweep(trace: Trace, cfg: ControllerConfig, timing: DramTimingConfig, key: str, values: list[str],
          *, with_baseline: bool = False, jobs: int = 1) -> list[SimReport]:
    """One report per value of ``key``; results keep the order of ``values``."""
    if key not in KEYS:
        raise UsageError(f"unknown sweep key {key!r}")
    points = []
    for value in values:
        c, t = apply_overrides(cfg, timing, [(key, value)])
        check = validate(c, t)
        if not check.ok:
            raise ConfigError(f"{key}={value}: " + "; ".join(str(v) for v in check.violations))
        points.append((trace, c, t, f"{key}={value}", with_baseline))
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, points))
    return [_sweep_point(p) for p in points]


def _parse_sets(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"expected KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _typed(cls, values: dict[str, str]):
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in types:
            raise UsageError(f"unknown parameter {key!r} for {cls.__name__}")
        kind = types[key]
        if "bool" in kind:
            kwargs[key] = raw.lower() in ("1", "true", "yes")
        else:
            kwargs[key] = int(raw, 0)
    return cls(**kwargs)


def generate(kind: str, params: dict[str, str], seed: int) -> Trace:
    if kind == "gcn":
        return gen_gcn(_typed(GcnParams, params), seed)
    if kind == "cnn":
        return gen_cnn(_typed(CnnParams, params), seed)
    p = dict(params)
    cls = AccessClass.BULK if p.pop("class", "D" if kind == "sequential" else "C") == "D" else AccessClass.CACHELINE
    op = Op.WRITE if p.pop("op", "R") == "W" else Op.READ
    ints = {k: int(v, 0) for k, v in p.items() if k != "write_fraction"}
    if kind == "sequential":
        total = ints.pop("total_bytes", 16384)
        stride = ints.pop("stride", 16384 if cls is AccessClass.BULK else 64)
        return gen_sequential(total, stride, seed, access_class=cls, op=op, **ints)
    if kind == "random":
        count = ints.pop("count", 16384)
        space = ints.pop("address_space", 2 << 20)
        wf = float(p.get("write_fraction", 0.0))
        return gen_random(count, space, seed, access_class=cls, write_fraction=wf, **ints)
    raise UsageError(f"unknown workload {kind!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="memctl", description="Reconfigurable accelerator memory controller simulator")
    parser.add_argument("--dump-default-config", action="store_true", help="same as the dump-default-config action")
    sub = parser.add_subparsers(dest="action", parser_class=_Parser)

    def common(p, trace=True):
        p.add_argument("--config", help="configuration document (default: built-in defaults)")
        if trace:
            p.add_argument("--trace", help="trace file")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=FORMATS, default="text")
        p.add_argument("--seed", type=int, help="seed for synthesized write data")

    p = sub.add_parser("run", help="simulate the controller on a trace")
    common(p)
    p.add_argument("--no-baseline", action="store_true", help="skip the baseline comparison")
    p.add_argument("--events", help="also write the event log to this path")

    p = sub.add_parser("baseline", help="run the direct-attach baseline model")
    common(p)

    p = sub.add_parser("sweep", help="run once per value of one config key")
    common(p)
    p.add_argument("--sweep", required=True, metavar="KEY=V1,V2,...")
    p.add_argument("--baseline", action="store_true", help="include baseline totals")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("gen", help="generate a synthetic trace")
    p.add_argument("workload", choices=("sequential", "random", "gcn", "cnn"))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="generator parameter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("dump-default-config", help="print the default configuration document")
    p.add_argument("--out")

    p = sub.add_parser("check", help="check an event log against the ordering rules")
    p.add_argument("--events", required=True)
    p.add_argument("--out")
    return parser


def _main(args) -> int:
    if args.action == "dump-default-config":
        _emit(render_config(), getattr(args, "out", None))
        return EXIT_OK
    if args.action == "gen":
        trace = generate(args.workload, _parse_sets(args.set), args.seed)
        if args.out:
            with open(args.out, "w") as fh:
                write_trace(trace, fh)
        else:
            write_trace(trace, sys.stdout)
        return EXIT_OK
    if args.action == "check":
        try:
            events = parse_events(Path(args.events).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read {args.events}: {exc.strerror}") from None
        result = consistency_order(events)
        if result.ok:
            _emit(f"ok: {len(result.order)} completions, no ordering violations\n", args.out)
            return EXIT_OK
        _emit("".join(f"violation: {v}\n" for v in result.violations), args.out)
        return EXIT_INTERNAL

    cfg, timing = _load_config(args.config)
    trace = _load_trace(args.trace, args.seed)
    if args.action == "run":
        report, result = run_report(trace, cfg, timing, with_baseline=not args.no_baseline,
                                    log=bool(args.events))
        if args.events:
            Path(args.events).write_text(serialize_events(result.events))
        for warning in result.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        _emit(report_emit(report, args.format), args.out)
    elif args.action == "baseline":
        counts = trace.counts()
        report = from_baseline(run_baseline(trace, cfg, timing), counts["cacheline"], counts["bulk"])
        _emit(report_emit(report, args.format), args.out)
    elif args.action == "sweep":
        key, sep, values = args.sweep.partition("=")
        if not sep or not values:
            raise UsageError("--sweep expects KEY=V1,V2,...")
        reports = sweep(trace, cfg, timing, key.strip(), [v.strip() for v in values.split(",")],
                        with_baseline=args.baseline, jobs=args.jobs)
        fmt = args.format if args.format != "text" else "csv"
        _emit(report_emit(reports, fmt), args.out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_default_config:
        args.action = "dump-default-config"
    elif args.action is None:
        parser.error("an action is required")
    try:
        return _main(args)
    except (UsageError, ConfigError, ParamError) as exc:
        print(f"memctl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceParseError, MalformedRequestError, RoutingError) as exc:
        print(f"memctl: trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except (SimulationError, AssertionError) as exc:
        print(f"memctl: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"memctl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
