"""Command-line entry points.

    slicefuzz run --config campaign.toml     full fuzzing campaign
    slicefuzz index prog.c [...]             list conditionals and arms
    slicefuzz trace prog.c --input seed      execute and print the trace
    slicefuzz slice prog.c --input seed --cond ID --arm N
    slicefuzz report OUT_DIR                 re-render report figures

Exit codes: 0 on success, 2 for configuration or usage problems, 3 when
the target fails to build, 1 for other runtime failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .ast_index import build_ast_index, dump_index
from .config import ConfigError, load_config
from .slicer import SliceError, build_slice
from .tracer import (
    BuildError,
    build_target,
    describe_trace,
    guard_record_key,
    run_traced,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_BUILD = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicefuzz",
        description="hybrid fuzzer: coverage-guided mutation plus "
                    "solver-assisted roadblock clearing")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a fuzzing campaign")
    p_run.add_argument("--config", required=True, help="campaign TOML file")
    p_run.add_argument("--duration-s", type=float, default=None,
                       help="override campaign duration")
    p_run.add_argument("--mode", choices=("deterministic", "threaded"),
                       default=None, help="override campaign mode")
    p_run.add_argument("--rng-seed", type=int, default=None,
                       help="override the campaign RNG seed")
    p_run.add_argument("--no-figures", action="store_true",
                       help="skip rendering PNG charts")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("sources", nargs="+", help="C source files")
    common.add_argument("--build-dir", default=None,
                        help="directory for instrumented build artifacts")

    p_index = sub.add_parser("index", parents=[common],
                             help="inventory conditionals and arms")
    p_index.add_argument("--dump-index", action="store_true",
                         help="emit the full index as JSON")

    p_trace = sub.add_parser("trace", parents=[common],
                             help="run one input and print its trace")
    p_trace.add_argument("--input", required=True, help="input file")
    p_trace.add_argument("--stop-at", default=None, metavar="COND_ID",
                         help="truncate at this conditional's guard")
    p_trace.add_argument("--limit", type=int, default=200,
                         help="max records to print (0 = all)")

    p_slice = sub.add_parser("slice", parents=[common],
                             help="print the path slice for one roadblock")
    p_slice.add_argument("--input", required=True,
                         help="witness input file")
    p_slice.add_argument("--cond", required=True, metavar="COND_ID",
                         help="target conditional id")
    p_slice.add_argument("--arm", required=True, type=int,
                         help="target arm id")

    p_report = sub.add_parser("report",
                              help="re-render figures for a finished run")
    p_report.add_argument("out_dir", help="campaign output directory")
    return parser


def _index_and_build(args, need_binary: bool = True):
    sources = [Path(s) for s in args.sources]
    for src in sources:
        if not src.is_file():
            raise ConfigError(f"no such source file: {src}")
    index = build_ast_index(sources)
    if not need_binary:
        return index, None
    build_dir = Path(args.build_dir) if args.build_dir else \
        Path(".slicefuzz-build")
    return index, build_target(index, build_dir)


def _cmd_run(args) -> int:
    from .orchestrator import Campaign
    from .report import summarize, write_report

    config = load_config(args.config)
    if args.duration_s is not None:
        config.campaign.duration_s = args.duration_s
    if args.mode is not None:
        config.campaign.mode = args.mode
    if args.rng_seed is not None:
        config.campaign.rng_seed = args.rng_seed

    result = Campaign(config).run()
    report_dir = write_report(result, figures=not args.no_figures)
    summary = summarize(result)
    cov = summary["coverage"]
    inj = summary["injections"]
    print(f"mode={summary['mode']} elapsed={summary['elapsed_s']}s "
          f"execs={summary['execs']} kept={summary['kept']} "
          f"crashes={summary['crashes']}")
    print(f"arms covered: {cov['arms_covered']}/{cov['arms_total']} "
          f"({cov['partially_covered']} conditionals still partial)")
    ratio = inj["effective_ratio"]
    print(f"roadblock attempts: {inj['attempts']} "
          f"(kept={inj['kept']} discarded={inj['discarded']} "
          f"decode_failed={inj['decode_failed']} skipped={inj['skipped']}"
          f"{'' if ratio is None else f', effective ratio {ratio:.2f}'})")
    print(f"report: {report_dir}")
    return EXIT_OK


def _cmd_index(args) -> int:
    index, _ = _index_and_build(args, need_binary=False)
    if args.dump_index:
        print(dump_index(index))
        return EXIT_OK
    for cond in index.conditionals.values():
        fi = index.files[cond.file_id]
        guard = " ".join(cond.guard_text(index).split())
        print(f"{cond.cond_id}  {cond.kind} at {fi.display}:{cond.line}  "
              f"({guard})")
        for arm in cond.arms:
            mark = " synthetic" if arm.synthetic else ""
            label = f" {arm.guard_value}" if arm.guard_value else ""
            print(f"    arm {arm.arm_id}: {arm.kind}{label}{mark}")
    return EXIT_OK


def _cmd_trace(args) -> int:
    index, build = _index_and_build(args)
    data = Path(args.input).read_bytes()
    stop = None
    if args.stop_at is not None:
        if args.stop_at not in index.conditionals:
            raise ConfigError(f"unknown conditional id: {args.stop_at}")
        stop = guard_record_key(index, args.stop_at)
    trace = run_traced(build.binary, data, stop_at=stop)
    limit = None if args.limit == 0 else args.limit
    print(describe_trace(index, trace, limit=limit))
    return EXIT_OK


def _cmd_slice(args) -> int:
    index, build = _index_and_build(args)
    if args.cond not in index.conditionals:
        raise ConfigError(f"unknown conditional id: {args.cond}")
    cond = index.conditionals[args.cond]
    if not 0 <= args.arm < len(cond.arms):
        raise ConfigError(
            f"{args.cond} has arms 0..{len(cond.arms) - 1}, not {args.arm}")
    data = Path(args.input).read_bytes()
    trace = run_traced(build.binary, data,
                       stop_at=guard_record_key(index, args.cond))
    if not trace.records:
        print("input never reaches that conditional", file=sys.stderr)
        return EXIT_RUNTIME
    sl = build_slice(index, trace, args.cond, args.arm)
    if sl.widened:
        print("note: structural rendering failed, widened to full "
              "functions", file=sys.stderr)
    print(sl.text)
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import REPORT_DIRNAME, read_summary, render_figures

    out_dir = Path(args.out_dir)
    report_dir = out_dir / REPORT_DIRNAME
    if not (report_dir / "summary.json").is_file():
        if (out_dir / "summary.json").is_file():
            report_dir = out_dir
        else:
            raise ConfigError(f"no report data under {out_dir}")
    written = render_figures(report_dir)
    summary = read_summary(report_dir)
    cov = summary["coverage"]
    print(f"arms covered: {cov['arms_covered']}/{cov['arms_total']} "
          f"in {summary['elapsed_s']}s ({summary['execs']} execs)")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "index": _cmd_index,
    "trace": _cmd_trace,
    "slice": _cmd_slice,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BuildError as exc:
        print(f"build error: {exc}", file=sys.stderr)
        return EXIT_BUILD
    except SliceError as exc:
        print(f"slice error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
