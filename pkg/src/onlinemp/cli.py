"""Command line: detect, eval, bench, synth."""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from . import evaluation as ev
from .engine import MODES, EngineConfig, make_detector, mode_config
from .ingest import (
    HOUR,
    MINUTE,
    SUITE_KINDS,
    GapFiller,
    LabeledSeries,
    SynthSpec,
    benchmark_suite,
    default_period,
    fill_missing,
    iter_records,
    parse_grouped,
    serialize,
    split,
    suite_case,
    synthesize,
)

FIELDS = ("timestamp", "value", "mp", "mp_index", "ds", "decision", "decided_by")
SERIES_SUFFIXES = (".csv", ".ndjson", ".jsonl", ".json")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    mode: str = "omp"
    engine: EngineConfig = field(default_factory=EngineConfig.hour)
    q: int | None = None
    step: int | None = None
    period: int | None = None
    out_format: str = "jsonl"
    jobs: int = 1

    def header(self) -> str:
        d = {
            "mode": self.mode,
            "engine": mode_config(self.mode, self.engine).to_dict(),
            "q": self.q,
            "step": self.step,
            "period": self.period,
        }
        return "# " + json.dumps(d, sort_keys=True)


def _granularity(text: str | None) -> int | None:
    if text is None:
        return None
    if text == "minute":
        return MINUTE
    if text == "hour":
        return HOUR
    try:
        s = int(text.rstrip("s"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"granularity must be minute, hour or seconds, got {text!r}") from None
    if s <= 0:
        raise argparse.ArgumentTypeError("granularity must be positive")
    return s


def _engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=sorted(MODES), default="omp")
    p.add_argument("--profile", choices=("hour", "minute"), default="hour",
                   help="parameter defaults: hour (m=48 c=240 l=48 t=0.35) or minute (m=2880 c=14400 l=30 t=0.37)")
    p.add_argument("-m", "--window", type=int, help="subsequence length m")
    p.add_argument("-c", "--cache", type=int, help="cache size c in timestamps")
    p.add_argument("-l", "--ds-window", type=int, help="DS strip length l")
    p.add_argument("-t", "--threshold", type=float, help="DS threshold tau")
    p.add_argument("--exclusion", type=int, help="exclusion zone (default m/2)")
    p.add_argument("--warmup", type=int, help="admissible references needed before judging (default m)")
    p.add_argument("--mp-sigma", type=float, help="k for the k-sigma rule of the MP-difference modes")
    p.add_argument("--sr-threshold", type=float, help="SR score threshold")
    p.add_argument("--granularity", type=_granularity, help="minute, hour or a step in seconds")
    p.add_argument("--period", type=int, help="samples per period for gap filling (default one day)")
    p.add_argument("--jobs", type=int, default=1, help="series processed in parallel")


def _run_config(args) -> RunConfig:
    base = EngineConfig.hour() if args.profile == "hour" else EngineConfig.minute()
    over = {}
    for attr, key in (("window", "m"), ("cache", "c"), ("ds_window", "l"), ("threshold", "tau"),
                      ("exclusion", "exclusion"), ("warmup", "warmup_min"), ("mp_sigma", "mp_sigma")):
        v = getattr(args, attr)
        if v is not None:
            over[key] = v
    if args.sr_threshold is not None:
        over["sr"] = replace(base.sr, threshold=args.sr_threshold)
    engine = replace(base, **over)
    try:
        if args.mode == "sr-only":
            engine.sr.validate(engine.m)
        else:
            mode_config(args.mode, engine).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(
        mode=args.mode,
        engine=engine,
        q=getattr(args, "delay", None),
        step=args.granularity,
        period=args.period,
        out_format=getattr(args, "format", "jsonl"),
        jobs=max(1, args.jobs),
    )


# -- record output --------------------------------------------------------------


def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return None
    return v


def format_record(ts: int, outcome, fmt: str) -> str:
    vals = (ts, outcome.value, outcome.mp, outcome.mp_index, outcome.ds, outcome.decision, outcome.decided_by)
    if fmt == "jsonl":
        return json.dumps(dict(zip(FIELDS, (_num(v) for v in vals))))
    return ",".join("" if _num(v) is None else (repr(v) if isinstance(v, float) else str(v)) for v in vals)


def _emit_header(out: TextIO, rc: RunConfig) -> None:
    out.write(rc.header() + "\n")
    if rc.out_format == "csv":
        out.write(",".join(FIELDS) + "\n")


# -- reading ----------------------------------------------------------------------


def _sniff(first: str) -> str:
    return "ndjson" if first.lstrip().startswith("{") else "csv"


def stream_points(lines: Iterable[str], step: int | None, period: int | None) -> Iterator[tuple[int, float, int]]:
    """Filled ``(timestamp, value, label)`` points from an ordered line stream.

    Consecutive duplicate timestamps resolve last-write-wins; a timestamp
    earlier than its predecessor is an error.  The step defaults to the
    spacing of the first two records.
    """
    it = iter(lines)
    first = None
    for line in it:
        if line.strip():
            first = line
            break
    if first is None:
        raise UsageError("empty input")
    fmt = _sniff(first)

    def chained():
        yield first
        yield from it

    records = iter_records(chained(), fmt)
    filler: GapFiller | None = None
    held: list[tuple[int, float | None, int]] = []  # buffered until the step is known
    pending = None

    def feed(rec):
        nonlocal filler, step
        if filler is None:
            held.append(rec)
            if step is None:
                if len(held) < 2:
                    return []
                step = held[1][0] - held[0][0]
            filler = GapFiller(step, period or default_period(step) or 1)
            out = []
            for r in held:
                out.extend(filler.push(*r))
            return out
        return filler.push(*rec)

    for lineno, sid, ts, v, lab in records:
        if sid is not None and pending is not None and sid != pending[3]:
            raise UsageError(f"line {lineno}: several series interleaved on one stream")
        if pending is not None and ts == pending[0]:
            pending = (ts, v, lab, sid)
            continue
        if pending is not None and ts < pending[0]:
            raise UsageError(f"line {lineno}: timestamp {ts} goes backwards; sort the input or pass a file")
        if pending is not None:
            for ts_, v_, lab_, _ in feed(pending[:3]):
                yield ts_, v_, lab_
        pending = (ts, v, lab, sid)
    if pending is None:
        raise UsageError("empty input")
    for ts_, v_, lab_, _ in feed(pending[:3]):
        yield ts_, v_, lab_
    if filler is None:  # single record and no step: nothing to fill
        for ts_, v_, lab_ in held:
            if v_ is not None:
                yield ts_, v_, lab_
        return
    for ts_, v_, lab_, _ in filler.finish():
        yield ts_, v_, lab_


def load_series(path: Path, rc: RunConfig) -> dict[str, LabeledSeries]:
    groups = parse_grouped(path, step=rc.step)
    out = {}
    for sid, s in groups.items():
        name = path.stem if sid is None else f"{path.stem}:{sid}"
        out[name] = fill_missing(s, rc.period)
    return out


def _series_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in SERIES_SUFFIXES)
        if not files:
            raise UsageError(f"{path}: no series files")
        return files
    return [path]


# -- commands ---------------------------------------------------------------------


def _detect_series(series: LabeledSeries, rc: RunConfig, out: TextIO) -> None:
    det = make_detector(rc.mode, rc.engine)
    for ts, v in zip(series.timestamps.tolist(), series.values.tolist()):
        out.write(format_record(ts, det.ingest(v), rc.out_format) + "\n")


def _detect_file(args: tuple[str, str, RunConfig]) -> str:
    src, dst, rc = args
    groups = load_series(Path(src), rc)
    with open(dst, "w", encoding="utf-8") as out:
        _emit_header(out, rc)
        for s in groups.values():
            _detect_series(s, rc, out)
    return dst


def cmd_detect(args, out: TextIO) -> int:
    rc = _run_config(args)
    src = args.input
    if src == "-":
        det = make_detector(rc.mode, rc.engine)
        points = stream_points(sys.stdin, rc.step, rc.period)
        first = next(points)  # surfaces empty input before anything is written
        _emit_header(out, rc)
        for ts, v, _ in itertools.chain([first], points):
            out.write(format_record(ts, det.ingest(v), rc.out_format) + "\n")
            if args.flush:
                out.flush()
        return 0
    path = Path(src)
    if not path.exists():
        raise UsageError(f"{path}: no such file or directory")
    if path.is_dir():
        if not args.output:
            raise UsageError("directory input needs --output DIR")
        dest = Path(args.output)
        dest.mkdir(parents=True, exist_ok=True)
        ext = ".jsonl" if rc.out_format == "jsonl" else ".csv"
        jobs = [(str(f), str(dest / (f.stem + ext)), rc) for f in _series_files(path)]
        for done in _map(_detect_file, jobs, rc.jobs):
            print(done, file=sys.stderr)
        return 0
    groups = load_series(path, rc)
    if len(groups) > 1:
        raise UsageError(f"{path} holds {len(groups)} series; split it or use eval")
    _emit_header(out, rc)
    for s in groups.values():
        _detect_series(s, rc, out)
    return 0


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def evaluate_series(series: LabeledSeries, rc: RunConfig, protocol: str = "none", timing: bool = True) -> ev.EvalReport:
    """Detect over the whole series, score on its test partition."""
    q = ev.delay_for_granularity(series.granularity, rc.q)
    det = make_detector(rc.mode, rc.engine)
    outcomes, total, per_ts = ev.timed_run(det, series.values)
    preds = np.array([o.decision for o in outcomes], dtype=np.int8)
    train, test = split(series, protocol)
    kw = {"wall_time_total": total, "time_per_timestamp": per_ts} if timing else {}
    return ev.score(test.labels, preds[len(train):], q, **kw)


def _eval_file(args: tuple[str, RunConfig, str, bool]) -> list[tuple[str, dict]]:
    src, rc, protocol, timing = args
    return [(name, asdict(evaluate_series(s, rc, protocol, timing))) for name, s in load_series(Path(src), rc).items()]


def cmd_eval(args, out: TextIO) -> int:
    rc = _run_config(args)
    path = Path(args.input)
    if not path.exists():
        raise UsageError(f"{path}: no such file or directory")
    jobs = [(str(f), rc, args.split, not args.no_timing) for f in _series_files(path)]
    reports = []
    out.write(rc.header() + "\n")
    for per_file in _map(_eval_file, jobs, rc.jobs):
        for name, rep in per_file:
            reports.append(ev.EvalReport(**rep))
            out.write(json.dumps({"series": name, **rep}) + "\n")
    total = ev.aggregate(reports)
    if args.no_timing:
        total = replace(total, wall_time_total=None, time_per_timestamp=None)
    out.write(json.dumps({"series": "ALL", **asdict(total)}) + "\n")
    return 0


def cmd_bench(args, out: TextIO) -> int:
    rc = _run_config(args)
    cfg = mode_config("omp", rc.engine)
    lengths = [int(x) for x in args.lengths.split(",") if x]
    if not lengths:
        raise UsageError("no lengths given")
    out.write(rc.header() + "\n")
    out.write("length,cached_s,uncached_s,speedup,cached_ms_per_ts,uncached_ms_per_ts,cached_steady_ms_per_ts\n")
    for row in ev.cache_benchmark(lengths, cfg, period=args.bench_period, repeats=args.repeats):
        out.write(
            f"{row.length},{row.cached_s:.3f},{row.uncached_s:.3f},{row.speedup:.2f},"
            f"{row.cached_ms_per_ts:.4f},{row.uncached_ms_per_ts:.4f},{row.cached_steady_ms_per_ts:.4f}\n"
        )
        out.flush()
    return 0


def cmd_synth(args, out: TextIO) -> int:
    fmt = args.format
    if args.suite:
        dest = Path(args.suite)
        dest.mkdir(parents=True, exist_ok=True)
        ext = ".csv" if fmt == "csv" else ".ndjson"
        for i, case in enumerate(benchmark_suite(args.count, args.length, args.seed)):
            serialize(synthesize(case.spec), dest / f"{i:03d}_{case.kind}{ext}", fmt)
        return 0
    if args.spec:
        spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = suite_case(args.kind, args.seed, args.length).spec
    series = synthesize(spec)
    if args.output:
        serialize(series, args.output, fmt)
    else:
        from .ingest import dumps

        out.write(dumps(series, fmt))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onlinemp", description="Online matrix profile anomaly detection")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="stream detection records for a series")
    d.add_argument("input", nargs="?", default="-", help="file, directory, or - for standard input")
    _engine_args(d)
    d.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    d.add_argument("-o", "--output", help="output directory (directory input)")
    d.add_argument("--flush", action="store_true", help="flush after every record")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="detect and score against labels")
    e.add_argument("input", help="labelled file or directory")
    _engine_args(e)
    e.add_argument("-q", "--delay", type=int, help="allowed detection delay (default 7 minute / 3 hour)")
    e.add_argument("--split", choices=("none", "half"), default="none",
                   help="score the whole series, or only its second half")
    e.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="cached vs full-history detection time")
    _engine_args(b)
    b.add_argument("--lengths", default="20000,50000,100000")
    b.add_argument("--bench-period", type=int, default=1440)
    b.add_argument("--repeats", type=int, default=1, help="alternating runs per length; the fastest is kept")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="write synthetic labelled series")
    s.add_argument("--kind", choices=SUITE_KINDS, default="periodic")
    s.add_argument("--spec", help="JSON file with SynthSpec fields")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--length", type=int, default=1200)
    s.add_argument("--suite", help="write the whole benchmark suite into this directory")
    s.add_argument("--count", type=int, default=50)
    s.add_argument("--format", choices=("csv", "ndjson"), default="csv")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None, out: TextIO | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except (UsageError, ValueError, OSError) as exc:
        print(f"onlinemp {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
