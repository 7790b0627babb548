"""Inference tails: greedy hard NMS, bin-expectation vs direct decoders, and
the confidence-only end-to-end selector.

All functions are pure; nms allocates its own scratch arrays per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .geometry import Box

DEFAULT_BINS_PER_COORD = 16

DETECTION_CSV_HEADER = "class_id,score,xc,yc,w,h"


@dataclass(frozen=True)
class Detection:
    """One candidate detection: box, class id and confidence score."""

    box: Box
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


@dataclass(frozen=True)
class DflLogits:
    """Per-coordinate bin logits: a 4 x bins_per_coord matrix."""

    logits: np.ndarray
    bins_per_coord: int = DEFAULT_BINS_PER_COORD

    def __post_init__(self) -> None:
        arr = np.asarray(self.logits, dtype=np.float64)
        if arr.shape != (4, self.bins_per_coord):
            raise ValueError(
                f"logits must have shape (4, {self.bins_per_coord}), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", arr)


@dataclass(frozen=True)
class RawRegression:
    """Four direct regression outputs, one per box parameter."""

    values: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.values) != 4:
            raise ValueError(f"expected 4 values, got {len(self.values)}")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


def nms(
    dets: Sequence[Detection], iou_threshold: float, class_aware: bool = True
) -> list[Detection]:
    """Greedy hard non-maximum suppression.

    Repeatedly selects the highest-scoring remaining detection and zeroes
    every remaining detection whose IoU with it is >= iou_threshold (same
    class only when class_aware). Survivors come back in descending score
    order; ties are broken by lower original index. Detections whose score is
    already 0 are never selected and never returned.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if not dets:
        return []
    n = len(dets)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("detection scores must be finite")
    xc = np.array([d.box.xc for d in dets])
    yc = np.array([d.box.yc for d in dets])
    w = np.array([d.box.w for d in dets])
    h = np.array([d.box.h for d in dets])
    cls = np.array([d.class_id for d in dets])
    x1 = xc - w / 2.0
    x2 = xc + w / 2.0
    y1 = yc - h / 2.0
    y2 = yc + h / 2.0
    areas = w * h

    order = np.lexsort((np.arange(n), -scores))
    suppressed = np.zeros(n, dtype=bool)
    keep: list[int] = []
    for i in order:
        if suppressed[i] or scores[i] <= 0.0:
            continue
        keep.append(i)
        iw = np.minimum(x2[i], x2) - np.maximum(x1[i], x1)
        ih = np.minimum(y2[i], y2) - np.maximum(y1[i], y1)
        inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
        union = areas[i] + areas - inter
        ov = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)
        hit = ov >= iou_threshold
        if class_aware:
            hit &= cls == cls[i]
        hit[i] = False
        suppressed |= hit
    return [dets[i] for i in keep]


def dfl_decode(logits: DflLogits) -> RawRegression:
    """Per-coordinate softmax expectation over bin indices 0..n.

    Numerically stabilized by max subtraction; output lies in [0, n] where
    n = bins_per_coord - 1.
    """
    arr = logits.logits
    shifted = arr - arr.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    idx = np.arange(logits.bins_per_coord, dtype=np.float64)
    vals = p @ idx
    return RawRegression(tuple(float(v) for v in vals))


def softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow."""
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def direct_decode(
    raw: RawRegression, anchor_point: tuple[float, float], stride: float
) -> Box:
    """Map direct regression outputs to a box around an anchor point.

    Centers shift linearly by stride; sizes go through softplus so a raw
    value of any sign yields a positive extent (the one deliberate departure
    from a purely linear map).
    """
    if stride <= 0.0:
        raise ValueError(f"stride must be > 0, got {stride}")
    r0, r1, r2, r3 = raw.values
    return Box(
        anchor_point[0] + r0 * stride,
        anchor_point[1] + r1 * stride,
        softplus(r2) * stride,
        softplus(r3) * stride,
    )


def end_to_end_select(
    dets: Sequence[Detection], conf_threshold: float
) -> list[Detection]:
    """Confidence-only filter: the suppression-free tail.

    No cross-box comparison happens here; every detection with score >=
    conf_threshold survives, input order preserved.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"conf_threshold must be in [0, 1], got {conf_threshold}")
    return [d for d in dets if d.score >= conf_threshold]


class DetectionCsvError(ValueError):
    """Raised on malformed detection CSV rows; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def write_detections_csv(
    stream: TextIO, dets: Iterable[Detection], header_lines: Sequence[str] = ()
) -> None:
    """Write detections in the `class_id,score,xc,yc,w,h` schema.

    header_lines are emitted first as `#`-prefixed comments.
    """
    for line in header_lines:
        stream.write(f"# {line}\n")
    stream.write(DETECTION_CSV_HEADER + "\n")
    for d in dets:
        stream.write(
            f"{d.class_id},{d.score!r},{d.box.xc!r},{d.box.yc!r},{d.box.w!r},{d.box.h!r}\n"
        )


def read_detections_csv(stream: TextIO) -> list[Detection]:
    """Parse the detection CSV schema; raises DetectionCsvError with the
    offending line number on malformed input."""
    dets: list[Detection] = []
    saw_header = False
    for lineno, raw_line in enumerate(stream, start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if not saw_header:
            if line != DETECTION_CSV_HEADER:
                raise DetectionCsvError(
                    lineno, f"expected header '{DETECTION_CSV_HEADER}', got '{line}'"
                )
            saw_header = True
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DetectionCsvError(lineno, f"expected 6 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
            score, xc, yc, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise DetectionCsvError(lineno, str(exc)) from None
        try:
            dets.append(Detection(Box(xc, yc, w, h), class_id, score))
        except ValueError as exc:
            raise DetectionCsvError(lineno, str(exc)) from None
    return dets
