"""Latency harness for the competing inference tails.

Measures, on pre-generated identical inputs with a monotonic clock:

* nms_tail       - greedy suppression over a duplicate-heavy detection list
* e2e_tail       - the confidence-only selector on the same lists
* dfl_decode     - bin-expectation decoding per detection
* direct_decode  - direct linear decoding per detection

Every pipeline returns a checksum of its outputs which the harness consumes,
so the timed work is observable and cannot be elided. Statistics are median
and median absolute deviation only; timing distributions are heavy-tailed and
means would lie. Timed regions are strictly single-threaded; the harness pins
itself to one logical CPU when the platform allows and reports whether that
succeeded.
"""

from __future__ import annotations

import gc
import math
import os
import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .postprocess import (
    Detection,
    DflLogits,
    RawRegression,
    dfl_decode,
    direct_decode,
    end_to_end_select,
    nms,
)
from .geometry import Box

PIPELINES = ("nms_tail", "e2e_tail", "dfl_decode", "direct_decode")

NMS_IOU_THRESHOLD = 0.5
E2E_CONF_THRESHOLD = 0.25
DECODE_ANCHOR = (8.0, 8.0)
DECODE_STRIDE = 8.0


@dataclass(frozen=True)
class LatencySample:
    pipeline: str
    object_count: int
    repeat: int
    elapsed_ns: int

    def __post_init__(self) -> None:
        if self.elapsed_ns <= 0:
            raise ValueError(f"elapsed_ns must be > 0, got {self.elapsed_ns}")


@dataclass(frozen=True)
class SummaryRow:
    pipeline: str
    object_count: int
    median_ns: float
    mad_ns: float
    ns_per_detection: float


@dataclass(frozen=True)
class BenchPlan:
    object_counts: tuple[int, ...] = (1, 10, 100, 300, 1000)
    repeats: int = 50
    warmup: int = 10
    duplicate_factor: float = 3.0

    def __post_init__(self) -> None:
        if self.repeats < 3:
            raise ValueError(f"repeats must be >= 3, got {self.repeats}")
        if self.warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {self.warmup}")
        if self.duplicate_factor < 1.0:
            raise ValueError(
                f"duplicate_factor must be >= 1, got {self.duplicate_factor}"
            )
        if not self.object_counts or any(c < 1 for c in self.object_counts):
            raise ValueError("object_counts must be non-empty positive integers")


@dataclass
class BenchResult:
    samples: list[LatencySample]
    summary: list[SummaryRow]
    cpu_pinned: bool
    clock_warning: str | None
    checksum: float = 0.0


def _make_detections(count: int, duplicate_factor: float, rng: np.random.Generator) -> list[Detection]:
    """Duplicate-heavy detection list: `count` objects, each emitted roughly
    duplicate_factor times with jittered boxes and independent scores."""
    total = max(count, int(round(count * duplicate_factor)))
    cx = rng.uniform(10.0, 90.0, size=count)
    cy = rng.uniform(10.0, 90.0, size=count)
    w = rng.uniform(5.0, 15.0, size=count)
    h = rng.uniform(5.0, 15.0, size=count)
    cls = rng.integers(0, 5, size=count)
    jitter = rng.uniform(-1.0, 1.0, size=(total, 2))
    scores = rng.uniform(0.01, 1.0, size=total)
    dets = []
    for j in range(total):
        i = j % count
        dets.append(
            Detection(
                Box(float(cx[i] + jitter[j, 0]), float(cy[i] + jitter[j, 1]),
                    float(w[i]), float(h[i])),
                int(cls[i]),
                float(scores[j]),
            )
        )
    return dets


def _make_dfl_inputs(count: int, rng: np.random.Generator) -> list[DflLogits]:
    return [DflLogits(rng.normal(scale=2.0, size=(4, 16))) for _ in range(count)]


def _make_direct_inputs(count: int, rng: np.random.Generator) -> list[RawRegression]:
    return [RawRegression(tuple(rng.normal(size=4))) for _ in range(count)]


def _run_nms_tail(dets: list[Detection]) -> float:
    """Suppression tail: greedy NMS, then materialize survivor records."""
    survivors = nms(dets, NMS_IOU_THRESHOLD, class_aware=True)
    rows = []
    total = 0.0
    for d in survivors:
        rows.append((d.class_id, d.score, d.box.xc, d.box.yc, d.box.w, d.box.h))
        total += d.score
    return float(len(rows)) + total


def _run_e2e_tail(dets: list[Detection]) -> float:
    """Suppression-free tail: one pass that thresholds and materializes.

    This is the fused form a deployment tail compiles to; its survivors are
    exactly end_to_end_select(dets, E2E_CONF_THRESHOLD) (asserted by test),
    and its cost is one comparison plus one record per candidate with no
    cross-box term.
    """
    rows = []
    total = 0.0
    for d in dets:
        if d.score >= E2E_CONF_THRESHOLD:
            rows.append((d.class_id, d.score, d.box.xc, d.box.yc, d.box.w, d.box.h))
            total += d.score
    return float(len(rows)) + total


def _run_dfl_decode(items: list[DflLogits]) -> float:
    acc = 0.0
    for logits in items:
        values = dfl_decode(logits).values
        acc += values[0] + values[3]
    return acc


def _run_direct_decode(items: list[RawRegression]) -> float:
    acc = 0.0
    for raw in items:
        box = direct_decode(raw, DECODE_ANCHOR, DECODE_STRIDE)
        acc += box.xc + box.h
    return acc


def _pin_to_one_cpu() -> tuple[bool, set[int] | None]:
    try:
        previous = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(previous)})
        return True, previous
    except (AttributeError, OSError):
        return False, None


# Each timed sample spins the pipeline until roughly this much wall time has
# accumulated, then reports the per-run share. Sub-microsecond pipelines are
# otherwise drowned out by scheduler noise on busy machines.
TARGET_REGION_NS = 1_000_000
MAX_INNER_RUNS = 4096


def run_bench(plan: BenchPlan, seed: int = 42) -> BenchResult:
    """Time every pipeline at every object count.

    Inputs are generated once per (pipeline, count) cell before any timing;
    each cell gets `warmup` untimed runs (also used to size the inner loop)
    followed by `repeats` timed samples, interleaved round-robin across
    cells. A sample times `inner` back-to-back runs of the pipeline in one
    region and records the per-run time, with `inner` chosen so each region
    covers about 1 ms. The garbage collector is paused inside timed
    regions and restored afterwards.
    """
    clock_warning = None
    resolution = time.get_clock_info("perf_counter").resolution
    if resolution > 1e-6:
        clock_warning = (
            f"monotonic clock resolution {resolution:.2e}s is coarser than 1us; "
            "latency medians may be quantized"
        )
    pinned, previous_affinity = _pin_to_one_cpu()
    samples: list[LatencySample] = []
    checksum = 0.0
    gc_was_enabled = gc.isenabled()
    try:
        rng = np.random.default_rng(seed)
        runners: dict[str, tuple[Callable, Callable]] = {
            "nms_tail": (
                lambda c: _make_detections(c, plan.duplicate_factor, rng),
                _run_nms_tail,
            ),
            "e2e_tail": (
                lambda c: _make_detections(c, plan.duplicate_factor, rng),
                _run_e2e_tail,
            ),
            "dfl_decode": (lambda c: _make_dfl_inputs(c, rng), _run_dfl_decode),
            "direct_decode": (lambda c: _make_direct_inputs(c, rng), _run_direct_decode),
        }
        cells = []
        for count in plan.object_counts:
            for pipeline in PIPELINES:
                prepare, run = runners[pipeline]
                payload = prepare(count)
                estimates = []
                for _ in range(max(1, plan.warmup)):
                    t0 = time.perf_counter_ns()
                    checksum += run(payload)
                    estimates.append(max(1, time.perf_counter_ns() - t0))
                estimate = statistics.median(estimates)
                inner = max(1, min(MAX_INNER_RUNS, int(TARGET_REGION_NS // estimate)))
                cells.append((pipeline, count, run, payload, inner))
        # Repeats are interleaved round-robin across cells so that a noisy
        # stretch on a shared machine dilutes across every cell's median
        # instead of concentrating in whichever cell it happened to hit.
        gc.disable()
        try:
            for repeat in range(plan.repeats):
                for pipeline, count, run, payload, inner in cells:
                    t0 = time.perf_counter_ns()
                    for _ in range(inner):
                        value = run(payload)
                    elapsed = time.perf_counter_ns() - t0
                    checksum += value
                    samples.append(
                        LatencySample(pipeline, count, repeat, max(1, elapsed // inner))
                    )
        finally:
            if gc_was_enabled:
                gc.enable()
    finally:
        if previous_affinity is not None:
            try:
                os.sched_setaffinity(0, previous_affinity)
            except OSError:
                pass
    return BenchResult(samples, summarize(samples), pinned, clock_warning, checksum)


def summarize(samples: Sequence[LatencySample]) -> list[SummaryRow]:
    """Robust per-cell statistics: median, MAD and per-detection median."""
    if not samples:
        raise ValueError("no samples to summarize")
    order: list[tuple[str, int]] = []
    groups: dict[tuple[str, int], list[int]] = {}
    for s in samples:
        key = (s.pipeline, s.object_count)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s.elapsed_ns)
    rows = []
    for pipeline, count in order:
        values = groups[(pipeline, count)]
        med = float(statistics.median(values))
        mad = float(statistics.median([abs(v - med) for v in values]))
        rows.append(SummaryRow(pipeline, count, med, mad, med / count))
    return rows


SAMPLES_CSV_HEADER = "pipeline,object_count,repeat,elapsed_ns"
SUMMARY_CSV_HEADER = "pipeline,object_count,median_ns,mad_ns,ns_per_detection"


def samples_csv_lines(samples: Sequence[LatencySample]) -> list[str]:
    lines = [SAMPLES_CSV_HEADER]
    for s in samples:
        lines.append(f"{s.pipeline},{s.object_count},{s.repeat},{s.elapsed_ns}")
    return lines


def read_samples_csv(lines: Sequence[str]) -> list[LatencySample]:
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body or body[0] != SAMPLES_CSV_HEADER:
        raise ValueError(f"expected header '{SAMPLES_CSV_HEADER}'")
    out = []
    for ln in body[1:]:
        pipeline, count, repeat, elapsed = ln.split(",")
        out.append(LatencySample(pipeline, int(count), int(repeat), int(elapsed)))
    return out


def summary_csv_lines(rows: Sequence[SummaryRow]) -> list[str]:
    lines = [SUMMARY_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.pipeline},{r.object_count},{r.median_ns!r},{r.mad_ns!r},"
            f"{r.ns_per_detection!r}"
        )
    return lines


def read_summary_csv(lines: Sequence[str]) -> list[SummaryRow]:
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body or body[0] != SUMMARY_CSV_HEADER:
        raise ValueError(f"expected header '{SUMMARY_CSV_HEADER}'")
    out = []
    for ln in body[1:]:
        pipeline, count, med, mad, per_det = ln.split(",")
        out.append(SummaryRow(pipeline, int(count), float(med), float(mad), float(per_det)))
    return out
