"""Label assignment strategies: fixed-IoU baseline, size-adaptive dynamic
thresholding, and the greedy one-to-one matcher that makes suppression-free
training possible.

All assigners are deterministic pure functions with documented tie-breaks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Box

NEGATIVE = -1


@dataclass(frozen=True)
class GroundTruth:
    """A ground-truth object plus the area of the image containing it."""

    box: Box
    class_id: int
    image_area: float

    def __post_init__(self) -> None:
        if self.image_area <= 0.0:
            raise ValueError(f"image_area must be > 0, got {self.image_area}")
        if self.box.area > self.image_area:
            raise ValueError("ground-truth box area exceeds the image area")

    @property
    def area_ratio(self) -> float:
        return self.box.area / self.image_area


@dataclass(frozen=True)
class AnchorCandidate:
    """A candidate anchor: its grid point, stride and current box.

    The box is a static prior during fixed/size-adaptive assignment or the
    live prediction during dynamic one-to-one matching; score carries the
    predicted confidence in the dynamic case.
    """

    anchor_point: tuple[float, float]
    stride: float
    box: Box
    score: float | None = None

    def __post_init__(self) -> None:
        if self.stride <= 0.0:
            raise ValueError(f"stride must be > 0, got {self.stride}")


@dataclass(frozen=True)
class StalConfig:
    """Size-adaptive threshold parameters: base IoU bar and decay strength."""

    tau_base: float = 0.5
    alpha_decay: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 < self.tau_base <= 1.0:
            raise ValueError(f"tau_base must be in (0, 1], got {self.tau_base}")
        if not 0.0 <= self.alpha_decay < 1.0:
            raise ValueError(f"alpha_decay must be in [0, 1), got {self.alpha_decay}")
        if self.tau_base * (1.0 - self.alpha_decay) <= 0.0:
            raise ValueError("tau_base * (1 - alpha_decay) must be > 0")


@dataclass(frozen=True)
class AssignmentResult:
    """Per-anchor labels plus the reverse gt-to-anchors view.

    anchor_labels[i] is the matched gt index or NEGATIVE; qualities[i] is the
    matching quality of a positive (IoU for threshold assigners, the score/IoU
    product for one-to-one) and 0.0 for negatives.
    """

    anchor_labels: tuple[int, ...]
    qualities: tuple[float, ...]
    gt_anchor_lists: tuple[tuple[int, ...], ...]
    unmatched_gts: tuple[int, ...] = ()

    def positives(self) -> list[tuple[int, int]]:
        """(anchor_index, gt_index) pairs in anchor order."""
        return [
            (a, g) for a, g in enumerate(self.anchor_labels) if g != NEGATIVE
        ]


def stal_threshold(gt: GroundTruth, cfg: StalConfig) -> float:
    """Dynamic IoU threshold that relaxes exponentially for small objects.

    tau = tau_base * (1 - alpha_decay * exp(-area_ratio)); strictly increasing
    in the object/image area ratio and never above tau_base.
    """
    return cfg.tau_base * (1.0 - cfg.alpha_decay * math.exp(-gt.area_ratio))


def _iou_matrix(gt_boxes: Sequence[Box], anchor_boxes: Sequence[Box]) -> np.ndarray:
    """(n_gts, n_anchors) IoU matrix matching geometry.iou semantics."""
    g = np.array([[b.xc, b.yc, b.w, b.h] for b in gt_boxes], dtype=np.float64)
    a = np.array([[b.xc, b.yc, b.w, b.h] for b in anchor_boxes], dtype=np.float64)
    gx1 = (g[:, 0] - g[:, 2] / 2.0)[:, None]
    gx2 = (g[:, 0] + g[:, 2] / 2.0)[:, None]
    gy1 = (g[:, 1] - g[:, 3] / 2.0)[:, None]
    gy2 = (g[:, 1] + g[:, 3] / 2.0)[:, None]
    ax1 = (a[:, 0] - a[:, 2] / 2.0)[None, :]
    ax2 = (a[:, 0] + a[:, 2] / 2.0)[None, :]
    ay1 = (a[:, 1] - a[:, 3] / 2.0)[None, :]
    ay2 = (a[:, 1] + a[:, 3] / 2.0)[None, :]
    iw = np.minimum(gx2, ax2) - np.maximum(gx1, ax1)
    ih = np.minimum(gy2, ay2) - np.maximum(gy1, ay1)
    inter = np.where((iw > 0.0) & (ih > 0.0), iw * ih, 0.0)
    union = (g[:, 2] * g[:, 3])[:, None] + (a[:, 2] * a[:, 3])[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)


def _threshold_assign(
    gts: Sequence[GroundTruth],
    anchors: Sequence[AnchorCandidate],
    thresholds: np.ndarray,
) -> AssignmentResult:
    """Max-IoU assignment where each gt carries its own acceptance threshold."""
    n_anchors = len(anchors)
    n_gts = len(gts)
    labels = [NEGATIVE] * n_anchors
    qualities = [0.0] * n_anchors
    gt_lists: list[list[int]] = [[] for _ in range(n_gts)]
    if n_gts and n_anchors:
        ious = _iou_matrix([g.box for g in gts], [a.box for a in anchors])
        best_gt = np.argmax(ious, axis=0)  # first max wins: lowest gt index
        best_iou = ious[best_gt, np.arange(n_anchors)]
        for a in range(n_anchors):
            g = int(best_gt[a])
            if best_iou[a] >= thresholds[g]:
                labels[a] = g
                qualities[a] = float(best_iou[a])
                gt_lists[g].append(a)
    unmatched = tuple(g for g in range(n_gts) if not gt_lists[g])
    return AssignmentResult(
        tuple(labels),
        tuple(qualities),
        tuple(tuple(lst) for lst in gt_lists),
        unmatched,
    )


def assign_fixed(
    gts: Sequence[GroundTruth],
    anchors: Sequence[AnchorCandidate],
    tau: float,
) -> AssignmentResult:
    """Fixed-threshold max-IoU assignment; one-to-many is allowed.

    An anchor is positive for its best-IoU gt when that IoU >= tau; ties on
    the best IoU go to the lowest gt index.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    thresholds = np.full(len(gts), tau)
    return _threshold_assign(gts, anchors, thresholds)


def assign_stal(
    gts: Sequence[GroundTruth],
    anchors: Sequence[AnchorCandidate],
    cfg: StalConfig,
) -> AssignmentResult:
    """Size-adaptive assignment: like assign_fixed but each gt uses its own
    dynamically relaxed threshold, so small objects keep their anchors."""
    thresholds = np.array([stal_threshold(g, cfg) for g in gts])
    return _threshold_assign(gts, anchors, thresholds)


def assign_one_to_one(
    gts: Sequence[GroundTruth],
    anchors: Sequence[AnchorCandidate],
    gamma: float = 1.0,
    delta: float = 1.0,
    score_matrix: np.ndarray | None = None,
) -> AssignmentResult:
    """Greedy one-to-one matching on quality q = score**gamma * IoU**delta.

    Pairs are taken in globally descending quality, each gt and each anchor
    at most once, so no gt index appears twice among the positives. Ties
    break to the lower gt index, then the lower anchor index. Pairs with
    zero quality are never matched; gts left over (including when there are
    more gts than anchors) are reported in unmatched_gts.

    score_matrix optionally supplies a per-(gt, anchor) score (e.g. the
    predicted confidence for the gt's class); otherwise each anchor's scalar
    score is used, defaulting to 1.0 when absent.
    """
    if gamma < 0.0 or delta < 0.0:
        raise ValueError("quality exponents must be >= 0")
    n_anchors = len(anchors)
    n_gts = len(gts)
    labels = [NEGATIVE] * n_anchors
    qualities = [0.0] * n_anchors
    gt_lists: list[list[int]] = [[] for _ in range(n_gts)]
    if n_gts and n_anchors:
        ious = _iou_matrix([g.box for g in gts], [a.box for a in anchors])
        if score_matrix is not None:
            scores = np.asarray(score_matrix, dtype=np.float64)
            if scores.shape != (n_gts, n_anchors):
                raise ValueError(
                    f"score_matrix must have shape ({n_gts}, {n_anchors}), got {scores.shape}"
                )
        else:
            scores = np.tile(
                np.array(
                    [1.0 if a.score is None else a.score for a in anchors],
                    dtype=np.float64,
                ),
                (n_gts, 1),
            )
        q = (scores**gamma * ious**delta).ravel()
        # Stable sort on the flattened matrix: equal qualities resolve in
        # row-major order, i.e. lowest gt index then lowest anchor index.
        order = np.argsort(-q, kind="stable")
        gt_taken = np.zeros(n_gts, dtype=bool)
        anchor_taken = np.zeros(n_anchors, dtype=bool)
        matched = 0
        for flat in order:
            qv = q[flat]
            # non-finite qualities sort to the end; stop at the first value
            # that is not strictly positive (covers 0, negatives and NaN)
            if not qv > 0.0:
                break
            g, a = divmod(int(flat), n_anchors)
            if gt_taken[g] or anchor_taken[a]:
                continue
            gt_taken[g] = True
            anchor_taken[a] = True
            labels[a] = g
            qualities[a] = float(qv)
            gt_lists[g].append(a)
            matched += 1
            if matched == min(n_gts, n_anchors):
                break
    unmatched = tuple(g for g in range(n_gts) if not gt_lists[g])
    return AssignmentResult(
        tuple(labels),
        tuple(qualities),
        tuple(tuple(lst) for lst in gt_lists),
        unmatched,
    )


def load_scene_json(path: str | Path) -> tuple[list[GroundTruth], list[AnchorCandidate], dict]:
    """Load a scene document: ground truths, anchor candidates and metadata.

    Schema::

        {
          "image_size": [W, H],
          "gts": [{"class_id": int, "xc": f, "yc": f, "w": f, "h": f}, ...],
          "anchors": [{"x": f, "y": f, "stride": f,
                       "box": [xc, yc, w, h], "score": f | null}, ...]
        }
    """
    doc = json.loads(Path(path).read_text())
    try:
        width, height = doc["image_size"]
        image_area = float(width) * float(height)
        gts = [
            GroundTruth(
                Box(float(g["xc"]), float(g["yc"]), float(g["w"]), float(g["h"])),
                int(g["class_id"]),
                image_area,
            )
            for g in doc["gts"]
        ]
        anchors = []
        for a in doc["anchors"]:
            bx = [float(v) for v in a["box"]]
            score = a.get("score")
            anchors.append(
                AnchorCandidate(
                    (float(a["x"]), float(a["y"])),
                    float(a["stride"]),
                    Box(bx[0], bx[1], bx[2], bx[3]),
                    None if score is None else float(score),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed scene document {path}: {exc}") from exc
    meta = {k: doc[k] for k in doc if k not in ("gts", "anchors")}
    return gts, anchors, meta


def dump_scene_json(
    path: str | Path,
    image_size: tuple[float, float],
    gts: Sequence[GroundTruth],
    anchors: Sequence[AnchorCandidate],
    extra: dict | None = None,
) -> None:
    """Write the scene document schema accepted by load_scene_json."""
    doc: dict = {
        "image_size": [image_size[0], image_size[1]],
        "gts": [
            {
                "class_id": g.class_id,
                "xc": g.box.xc,
                "yc": g.box.yc,
                "w": g.box.w,
                "h": g.box.h,
            }
            for g in gts
        ],
        "anchors": [
            {
                "x": a.anchor_point[0],
                "y": a.anchor_point[1],
                "stride": a.stride,
                "box": [a.box.xc, a.box.yc, a.box.w, a.box.h],
                "score": a.score,
            }
            for a in anchors
        ],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
