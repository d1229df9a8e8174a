"""Command-line entry points: run, evaluate, convert, bench, print-config."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .annotation import convert_dataset, emit_action_subsets, parse_action_sidecar, write_label_file
from .config import (
    DEFAULT_PROVENANCE,
    ValidatedConfig,
    load_config,
    print_effective,
    validate,
)
from .engine import Engine, bench, evaluate, render_bench
from .errors import ConfigError, MultiformError
from .evaluation import render_report, report_to_json


def _schema_help() -> str:
    notes = "\n".join(f"#   {path}: {note}" for path, note in sorted(DEFAULT_PROVENANCE.items()))
    return (
        "Effective default configuration (YAML):\n\n"
        + print_effective(ValidatedConfig())
        + "\n# Default provenance:\n"
        + notes
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multiform",
        description="Streaming human action recognition: multi-form person "
        "detection routed to per-action classifiers, aggregated by majority vote.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="process configured streams and emit events")
    p_run.add_argument("--config", required=True, help="YAML config file")
    p_run.add_argument(
        "--fixed-clock", action="store_true",
        help="timestamp events with a constant clock (deterministic logs)",
    )

    p_eval = sub.add_parser("evaluate", help="score the pipeline against ground truth")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--truth", required=True, help="'<frame> <action> <p|n>' lines")
    p_eval.add_argument("--mode", choices=("frame", "event"), default="frame")
    p_eval.add_argument("--out-json", help="also write the report as JSON")

    p_conv = sub.add_parser("convert", help="derive multi-form labels from COCO keypoints")
    p_conv.add_argument("--coco", required=True, help="COCO-style keypoint JSON")
    p_conv.add_argument("--out", required=True, help="output directory")
    p_conv.add_argument(
        "--action-labels",
        help="optional '<annotation_id> <action>' sidecar; writes per-action subsets",
    )

    p_bench = sub.add_parser("bench", help="measure throughput and stage latencies")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--frames", type=int, help="override synthetic stream length")
    p_bench.add_argument("--fixed-clock", action="store_true")

    p_print = sub.add_parser(
        "print-config",
        help="print the effective (defaulted) configuration",
        epilog=_schema_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_print.add_argument("--config", help="config file; omit for pure defaults")

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    engine = Engine(cfg, fixed_clock=args.fixed_clock)
    report = engine.run()
    for stream_id, stats in report.streams.items():
        print(
            f"stream {stream_id}: {stats.frames} frames, {stats.sampled} sampled, "
            f"{stats.events} events, {stats.errors} errors"
        )
    print(
        f"log entries: {report.log_entries}; webhook delivered: "
        f"{report.sink_delivered}, dropped: {report.sink_dropped}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    report, run_report = evaluate(cfg, args.truth, mode=args.mode)
    sys.stdout.write(render_report(report))
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(report_to_json(report), indent=2) + "\n")
    print(f"(processed {run_report.total_frames} frames)")
    return 0


def _cmd_convert(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, stats = convert_dataset(args.coco)
    write_label_file(records, out_dir / "labels.txt")
    (out_dir / "stats.json").write_text(json.dumps(stats.as_dict(), indent=2) + "\n")
    print(json.dumps(stats.as_dict()))
    if args.action_labels:
        sidecar = parse_action_sidecar(args.action_labels)
        manifests, mismatches = emit_action_subsets(records, sidecar)
        subset_dir = out_dir / "subsets"
        subset_dir.mkdir(exist_ok=True)
        for action, subset in sorted(manifests.items()):
            write_label_file(subset, subset_dir / f"{action}.txt")
            print(f"subset {action}: {len(subset)} records")
        if mismatches:
            print(f"warning: {len(mismatches)} form/action mismatches excluded")
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    rows = bench(cfg, frames=args.frames)
    sys.stdout.write(render_bench(rows))
    return 0


def _cmd_print_config(args) -> int:
    cfg = load_config(args.config) if args.config else validate("")
    sys.stdout.write(print_effective(cfg))
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "evaluate": _cmd_evaluate,
    "convert": _cmd_convert,
    "bench": _cmd_bench,
    "print-config": _cmd_print_config,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        for message in e.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except MultiformError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
