"""Single executable surface for every experiment and utility.

Subcommands: nms, decode, assign, schedule, train, eval, bench,
optim-compare, scene-gen. Exit codes are a stable contract: 0 success,
2 usage or configuration error, 3 runtime error. All randomness flows from
one seed per invocation (flag --seed, overridable via the E2EK_SEED
environment variable), and every output file carries provenance comment
lines (tool version, command line, seed) so runs are citable. Timing values
in bench outputs are the one exempted nondeterminism and are flagged as
such in their headers.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assign import (
    StalConfig,
    assign_fixed,
    assign_one_to_one,
    assign_stal,
    dump_scene_json,
    load_scene_json,
)
from .bench import (
    BenchPlan,
    run_bench,
    samples_csv_lines,
    summary_csv_lines,
)
from .compare import PROBLEMS, comparison_csv_lines, run_comparison
from .postprocess import (
    DetectionCsvError,
    DflLogits,
    RawRegression,
    dfl_decode,
    direct_decode,
    nms,
    read_detections_csv,
    write_detections_csv,
)
from .sched_loss import ProgLossSchedule, lambda_at
from .toytrain import (
    ConfigError,
    TrainConfig,
    _static_prior_anchors,
    evaluate,
    generate_scene,
    load_model,
    make_scene_sets,
    metrics_csv_lines,
    save_model,
    train,
)

DEFAULT_SEED = 42


def _env_seed() -> int:
    raw = os.environ.get("E2EK_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("E2EK_SEED", f"must be an integer, got '{raw}'") from None


def _provenance(args: argparse.Namespace, extra: list[str] = ()) -> list[str]:
    lines = [
        f"e2ekit {__version__}",
        f"command: {args.command_line}",
        f"seed: {args.seed}",
    ]
    lines.extend(extra)
    return lines


def _write_lines(path: str, header: list[str], lines: list[str]) -> None:
    with open(path, "w") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        for line in lines:
            fh.write(line + "\n")


def _cmd_nms(args: argparse.Namespace) -> int:
    with open(args.input) as fh:
        dets = read_detections_csv(fh)
    survivors = nms(dets, args.iou_threshold, args.class_aware)
    with open(args.output, "w") as fh:
        write_detections_csv(fh, survivors, _provenance(args))
    return 0


def _read_csv_rows(path: str) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                rows.append((lineno, line.split(",")))
    return rows


def _cmd_decode(args: argparse.Namespace) -> int:
    rows = _read_csv_rows(args.input)
    out_lines: list[str] = []
    if args.mode == "dfl":
        out_lines.append("v0,v1,v2,v3")
        expected = 4 * args.bins
        for lineno, parts in rows:
            if len(parts) != expected:
                raise DetectionCsvError(lineno, f"expected {expected} logits, got {len(parts)}")
            try:
                vals = np.array([float(p) for p in parts]).reshape(4, args.bins)
            except ValueError as exc:
                raise DetectionCsvError(lineno, str(exc)) from None
            decoded = dfl_decode(DflLogits(vals, args.bins))
            out_lines.append(",".join(repr(v) for v in decoded.values))
    else:
        out_lines.append("xc,yc,w,h")
        for lineno, parts in rows:
            if len(parts) != 7:
                raise DetectionCsvError(
                    lineno, "expected r0,r1,r2,r3,anchor_x,anchor_y,stride"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise DetectionCsvError(lineno, str(exc)) from None
            box = direct_decode(
                RawRegression(tuple(vals[:4])), (vals[4], vals[5]), vals[6]
            )
            out_lines.append(f"{box.xc!r},{box.yc!r},{box.w!r},{box.h!r}")
    _write_lines(args.output, _provenance(args), out_lines)
    return 0


def _cmd_assign(args: argparse.Namespace) -> int:
    gts, anchors, _meta = load_scene_json(args.scene)
    if args.assigner == "fixed":
        result = assign_fixed(gts, anchors, args.tau)
    elif args.assigner == "stal":
        result = assign_stal(gts, anchors, StalConfig(args.tau_base, args.alpha_decay))
    else:
        result = assign_one_to_one(gts, anchors, args.gamma, args.delta)
    lines = ["anchor_index,label,gt_index,quality"]
    for a, (g, q) in enumerate(zip(result.anchor_labels, result.qualities)):
        label = "negative" if g < 0 else "positive"
        lines.append(f"{a},{label},{g},{q!r}")
    extra = [f"unmatched_gts: {','.join(str(g) for g in result.unmatched_gts) or 'none'}"]
    _write_lines(args.output, _provenance(args, extra), lines)
    return 0


def _cmd_schedule(args: argparse.Namespace) -> int:
    if args.lambda_start < args.lambda_end:
        raise ConfigError("lambda_start", "schedule must be non-increasing (start >= end)")
    schedule = ProgLossSchedule(args.lambda_start, args.lambda_end, args.epochs)
    lines = ["epoch,lambda"]
    for t in range(args.epochs + 1):
        lines.append(f"{t},{lambda_at(schedule, t)!r}")
    _write_lines(args.output, _provenance(args), lines)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be a JSON object")
    doc.setdefault("seed", args.seed)
    config = TrainConfig.from_dict(doc)
    result = train(config)
    _write_lines(args.metrics_out, _provenance(args), metrics_csv_lines(result.metrics))
    save_model(result.head, args.model_out)
    fe = result.final_eval
    print(f"duplicate_rate={fe.duplicate_rate!r} recall={fe.recall!r}")
    return 0


def _load_scene_spec(path: str) -> list:
    try:
        doc = json.loads(Path(path).read_text())
        seed = int(doc["seed"])
        difficulty = str(doc["difficulty"])
        count = int(doc["count"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(
            "<scenes>", f"expected {{\"seed\", \"difficulty\", \"count\"}}: {exc}"
        ) from None
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63, size=count)
    return [generate_scene(int(s), difficulty) for s in seeds]


def _cmd_eval(args: argparse.Namespace) -> int:
    head = load_model(args.model)
    scenes = _load_scene_spec(args.scenes)
    metrics = evaluate(head, scenes)
    doc = {
        "duplicate_rate": metrics.duplicate_rate,
        "recall": metrics.recall,
        "small_object_recall": metrics.small_object_recall,
        "n_gts": metrics.n_gts,
        "n_small_gts": metrics.n_small_gts,
        "provenance": {
            "tool": f"e2ekit {__version__}",
            "command": args.command_line,
            "seed": args.seed,
        },
    }
    Path(args.output).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"duplicate_rate={metrics.duplicate_rate!r} recall={metrics.recall!r}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.plan:
        try:
            doc = json.loads(Path(args.plan).read_text())
            plan = BenchPlan(
                object_counts=tuple(int(c) for c in doc.get("object_counts", (1, 10, 100, 300, 1000))),
                repeats=int(doc.get("repeats", 50)),
                warmup=int(doc.get("warmup", 10)),
                duplicate_factor=float(doc.get("duplicate_factor", 3.0)),
            )
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError("<plan>", str(exc)) from None
    else:
        plan = BenchPlan()
    result = run_bench(plan, seed=args.seed)
    note = "note: elapsed_ns values are nondeterministic timing measurements"
    meta = [
        note,
        f"cpu_pinned: {result.cpu_pinned}",
        f"clock_warning: {result.clock_warning or 'none'}",
    ]
    if result.clock_warning:
        print(f"warning: {result.clock_warning}", file=sys.stderr)
    if args.json:
        doc = {
            "samples": [
                {
                    "pipeline": s.pipeline,
                    "object_count": s.object_count,
                    "repeat": s.repeat,
                    "elapsed_ns": s.elapsed_ns,
                }
                for s in result.samples
            ],
            "summary": [
                {
                    "pipeline": r.pipeline,
                    "object_count": r.object_count,
                    "median_ns": r.median_ns,
                    "mad_ns": r.mad_ns,
                    "ns_per_detection": r.ns_per_detection,
                }
                for r in result.summary
            ],
            "cpu_pinned": result.cpu_pinned,
            "clock_warning": result.clock_warning,
            "provenance": {
                "tool": f"e2ekit {__version__}",
                "command": args.command_line,
                "seed": args.seed,
                "note": note,
            },
        }
        Path(args.json).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    else:
        _write_lines(args.samples_out, _provenance(args, meta), samples_csv_lines(result.samples))
        _write_lines(args.summary_out, _provenance(args, meta), summary_csv_lines(result.summary))
    return 0


def _cmd_optim_compare(args: argparse.Namespace) -> int:
    rows = run_comparison(
        args.problem, steps=args.steps, seed=args.seed, lr=args.lr, alpha_mix=args.alpha_mix
    )
    _write_lines(args.output, _provenance(args), comparison_csv_lines(rows))
    return 0


def _cmd_scene_gen(args: argparse.Namespace) -> int:
    scene = generate_scene(args.seed, args.difficulty)
    anchors = _static_prior_anchors(scene)
    dump_scene_json(
        args.output,
        scene.image_size,
        scene.gts,
        anchors,
        extra={
            "seed": args.seed,
            "difficulty": args.difficulty,
            "provenance": {
                "tool": f"e2ekit {__version__}",
                "command": args.command_line,
            },
        },
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="e2ekit",
        description="NMS-free end-to-end detection mechanics: geometry, decoders, "
        "assignment, loss scheduling, optimizer and latency experiments.",
    )
    parser.add_argument("--version", action="version", version=f"e2ekit {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed",
        type=int,
        default=_env_seed(),
        help="global seed (env E2EK_SEED overrides the default 42)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nms", parents=[common], help="filter a detection CSV with greedy NMS")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--class-aware", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("decode", parents=[common], help="decode bin logits or raw regressions")
    p.add_argument("--mode", choices=("dfl", "direct"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bins", type=int, default=16)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("assign", parents=[common], help="run a label assigner on a scene file")
    p.add_argument("--scene", required=True)
    p.add_argument("--assigner", choices=("fixed", "stal", "one_to_one"), required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--tau-base", type=float, default=0.5)
    p.add_argument("--alpha-decay", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_assign)

    p = sub.add_parser("schedule", parents=[common], help="dump the loss-weight schedule")
    p.add_argument("--lambda-start", type=float, default=0.7)
    p.add_argument("--lambda-end", type=float, default=0.3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("train", parents=[common], help="train the toy detector")
    p.add_argument("--config", required=True)
    p.add_argument("--metrics-out", required=True)
    p.add_argument("--model-out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained model on fresh scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--scenes", required=True, help='JSON: {"seed", "difficulty", "count"}')
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="run the latency harness")
    p.add_argument("--plan", help="JSON plan (object_counts, repeats, warmup, duplicate_factor)")
    p.add_argument("--samples-out", default="bench_samples.csv")
    p.add_argument("--summary-out", default="bench_summary.csv")
    p.add_argument("--json", help="write a single JSON document instead of the CSVs")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("optim-compare", parents=[common], help="SGD vs hybrid optimizer curves")
    p.add_argument("--problem", choices=PROBLEMS, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--alpha-mix", type=float, default=0.5)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_optim_compare)

    p = sub.add_parser("scene-gen", parents=[common], help="emit a synthetic scene JSON")
    p.add_argument("--difficulty", choices=("sparse", "dense", "tiny-objects"), default="dense")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_scene_gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_line = " ".join(argv)
    try:
        return args.func(args)
    except (ConfigError, DetectionCsvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
