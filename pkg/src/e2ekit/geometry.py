"""Axis-aligned box, rotated box, and keypoint-similarity primitives.

Everything in this module is a pure function over small value types; inputs
are never mutated, so all operations are safe to call from any number of
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Clamp applied to degenerate prediction sizes inside loss gradients.
EPS_DEGENERATE = 1e-9

# Per-joint falloff constants for the default 17-keypoint skeleton, in
# skeleton index order (nose, eyes, ears, shoulders, elbows, wrists, hips,
# knees, ankles). Overridable per KeypointSet.
COCO_KAPPAS: tuple[float, ...] = (
    0.026, 0.025, 0.025, 0.035, 0.035,
    0.079, 0.079, 0.072, 0.072, 0.062, 0.062,
    0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
)

KEYPOINT_NAMES: tuple[str, ...] = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

NUM_KEYPOINTS = 17


@dataclass(frozen=True)
class Box:
    """Axis-aligned box as (center x, center y, width, height)."""

    xc: float
    yc: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0.0 or self.h < 0.0:
            raise ValueError(f"box sizes must be >= 0, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2) with x1 <= x2 and y1 <= y2."""
        hw = self.w / 2.0
        hh = self.h / 2.0
        return self.xc - hw, self.yc - hh, self.xc + hw, self.yc + hh


@dataclass(frozen=True)
class RotatedBox:
    """Oriented box (xc, yc, w, h, theta), theta in radians."""

    xc: float
    yc: float
    w: float
    h: float
    theta: float

    def __post_init__(self) -> None:
        if self.w < 0.0 or self.h < 0.0:
            raise ValueError(f"box sizes must be >= 0, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> list[tuple[float, float]]:
        """The four vertices in counter-clockwise order."""
        c = math.cos(self.theta)
        s = math.sin(self.theta)
        hw = self.w / 2.0
        hh = self.h / 2.0
        return [
            (self.xc + c * dx - s * dy, self.yc + s * dx + c * dy)
            for dx, dy in ((hw, hh), (-hw, hh), (-hw, -hh), (hw, -hh))
        ]


def canonicalize(box: RotatedBox) -> RotatedBox:
    """Canonical representative with theta in [-pi/2, pi/2) and w >= h.

    A rectangle is unchanged by swapping w and h while rotating a quarter
    turn; canonicalization maps that twin onto one representative. Exact
    squares additionally fold theta into [-pi/4, pi/4).
    """
    w, h, th = box.w, box.h, box.theta
    if w < h:
        w, h = h, w
        th += math.pi / 2.0
    th = math.remainder(th, math.pi)
    if th >= math.pi / 2.0:
        th -= math.pi
    if w == h:
        th = math.remainder(th, math.pi / 2.0)
        if th >= math.pi / 4.0:
            th -= math.pi / 2.0
    return RotatedBox(box.xc, box.yc, w, h, th)


@dataclass(frozen=True)
class Keypoint:
    """One joint: position plus visibility (0 unlabeled, 1 occluded, 2 visible)."""

    x: float
    y: float
    v: int = 2

    def __post_init__(self) -> None:
        if self.v not in (0, 1, 2):
            raise ValueError(f"visibility must be 0, 1 or 2, got {self.v}")


@dataclass(frozen=True)
class KeypointSet:
    """17 ordered keypoints with an object scale and per-joint falloffs."""

    points: tuple[Keypoint, ...]
    scale_s: float
    kappas: tuple[float, ...] = COCO_KAPPAS

    def __post_init__(self) -> None:
        if len(self.points) != NUM_KEYPOINTS:
            raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {len(self.points)}")
        if len(self.kappas) != NUM_KEYPOINTS:
            raise ValueError(f"expected {NUM_KEYPOINTS} kappas, got {len(self.kappas)}")
        if self.scale_s <= 0.0:
            raise ValueError(f"scale_s must be > 0, got {self.scale_s}")
        if any(k <= 0.0 for k in self.kappas):
            raise ValueError("all kappas must be > 0")


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1]; 0.0 when the union is empty."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the hull-waste penalty."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = a.area + b.area - inter
    hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    if union <= 0.0:
        return 0.0
    base = inter / union
    if hull <= 0.0:
        return base
    return base - (hull - union) / hull


def _active(a: float, b: float) -> float:
    """1.0 when a < b, 0.0 when a > b, 0.5 on the tie (symmetric subgradient)."""
    if a < b:
        return 1.0
    if a > b:
        return 0.0
    return 0.5


def ciou_loss(pred: Box, target: Box) -> tuple[float, tuple[float, float, float, float]]:
    """Complete-IoU regression loss with its analytic gradient.

    The loss is ``1 - IoU + rho2/c2 + alpha*v`` where ``rho2`` is the squared
    center distance, ``c2`` the squared diagonal of the smallest enclosing
    box, ``v`` the squared arctan aspect-ratio gap and
    ``alpha = v / ((1 - IoU) + v)``. The gradient differentiates through every
    term, alpha included, so it matches central finite differences of the
    returned value away from min/max kinks. Degenerate prediction sizes are
    clamped to EPS_DEGENERATE before evaluation.

    Args:
        pred: predicted box; w or h of zero is clamped, not an error.
        target: reference box, must have w > 0 and h > 0.

    Returns:
        (loss, (d/dxc, d/dyc, d/dw, d/dh)) with the gradient taken at the
        clamped prediction.
    """
    if target.w <= 0.0 or target.h <= 0.0:
        raise ValueError("ciou_loss target must have w > 0 and h > 0")
    px, py = pred.xc, pred.yc
    pw = max(pred.w, EPS_DEGENERATE)
    ph = max(pred.h, EPS_DEGENERATE)
    tx, ty, tw, th = target.xc, target.yc, target.w, target.h

    pl, pr = px - pw / 2.0, px + pw / 2.0
    pt, pb = py - ph / 2.0, py + ph / 2.0
    tl, tr = tx - tw / 2.0, tx + tw / 2.0
    tt, tb = ty - th / 2.0, ty + th / 2.0

    # Intersection with active-side indicators. Exact ties take the
    # symmetric subgradient (0.5), which matches central differences and
    # makes the gradient exactly zero at pred == target.
    r_act = _active(pr, tr)
    l_act = _active(tl, pl)
    b_act = _active(pb, tb)
    t_act = _active(tt, pt)
    iw = min(pr, tr) - max(pl, tl)
    ih = min(pb, tb) - max(pt, tt)
    if iw > 0.0 and ih > 0.0:
        inter = iw * ih
        diw = (r_act - l_act, 0.0, 0.5 * (r_act + l_act), 0.0)
        dih = (0.0, b_act - t_act, 0.0, 0.5 * (b_act + t_act))
        dinter = tuple(diw[i] * ih + iw * dih[i] for i in range(4))
    else:
        inter = 0.0
        dinter = (0.0, 0.0, 0.0, 0.0)

    union = pw * ph + tw * th - inter
    dareap = (0.0, 0.0, ph, pw)
    dunion = tuple(dareap[i] - dinter[i] for i in range(4))
    iou_v = inter / union
    diou = tuple((dinter[i] * union - inter * dunion[i]) / (union * union) for i in range(4))

    rho2 = (px - tx) ** 2 + (py - ty) ** 2
    drho2 = (2.0 * (px - tx), 2.0 * (py - ty), 0.0, 0.0)
    cr_act = _active(tr, pr)
    cl_act = _active(pl, tl)
    cb_act = _active(tb, pb)
    ct_act = _active(pt, tt)
    cw = max(pr, tr) - min(pl, tl)
    chh = max(pb, tb) - min(pt, tt)
    dcw = (cr_act - cl_act, 0.0, 0.5 * (cr_act + cl_act), 0.0)
    dch = (0.0, cb_act - ct_act, 0.0, 0.5 * (cb_act + ct_act))
    c2 = cw * cw + chh * chh
    dc2 = tuple(2.0 * cw * dcw[i] + 2.0 * chh * dch[i] for i in range(4))
    center = rho2 / c2
    dcenter = tuple((drho2[i] * c2 - rho2 * dc2[i]) / (c2 * c2) for i in range(4))

    four_over_pi2 = 4.0 / (math.pi * math.pi)
    q = math.atan(tw / th) - math.atan(pw / ph)
    v = four_over_pi2 * q * q
    denom_wh = pw * pw + ph * ph
    dv = (
        0.0,
        0.0,
        -2.0 * four_over_pi2 * q * ph / denom_wh,
        2.0 * four_over_pi2 * q * pw / denom_wh,
    )

    s = 1.0 - iou_v
    denom = s + v
    if denom > 0.0:
        alpha = v / denom
        dalpha = tuple((dv[i] * s + v * diou[i]) / (denom * denom) for i in range(4))
    else:
        alpha = 0.0
        dalpha = (0.0, 0.0, 0.0, 0.0)

    loss = 1.0 - iou_v + center + alpha * v
    grad = tuple(
        -diou[i] + dcenter[i] + dalpha[i] * v + alpha * dv[i] for i in range(4)
    )
    return loss, grad  # type: ignore[return-value]


def _polygon_area(points: list[tuple[float, float]]) -> float:
    acc = 0.0
    n = len(points)
    for i in range(n):
        x1, y1 = points[i]
        x2, y2 = points[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def _clip_polygon(
    subject: list[tuple[float, float]], clip: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of `subject` by the convex CCW `clip`."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        ex1, ey1 = clip[i]
        ex2, ey2 = clip[(i + 1) % n]
        edx, edy = ex2 - ex1, ey2 - ey1
        points = output
        output = []
        prev = points[-1]
        prev_side = edx * (prev[1] - ey1) - edy * (prev[0] - ex1)
        for cur in points:
            cur_side = edx * (cur[1] - ey1) - edy * (cur[0] - ex1)
            if (cur_side >= 0.0) != (prev_side >= 0.0):
                t = prev_side / (prev_side - cur_side)
                output.append(
                    (prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1]))
                )
            if cur_side >= 0.0:
                output.append(cur)
            prev, prev_side = cur, cur_side
    return output


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """IoU of two oriented boxes via polygon clipping; 0.0 for zero-area boxes."""
    area_a = a.area
    area_b = b.area
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    inter_poly = _clip_polygon(a.corners(), b.corners())
    inter = _polygon_area(inter_poly) if len(inter_poly) >= 3 else 0.0
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def oks(pred: KeypointSet, gt: KeypointSet) -> float:
    """Object keypoint similarity in [0, 1], averaged over gt-visible joints.

    Each visible joint contributes ``exp(-d^2 / (2 s^2 kappa^2))`` with d the
    Euclidean error, s the gt object scale and kappa the joint falloff.
    Raises ValueError when the gt has no visible keypoints.
    """
    total = 0.0
    count = 0
    two_s2 = 2.0 * gt.scale_s * gt.scale_s
    for p, g, kappa in zip(pred.points, gt.points, gt.kappas):
        if g.v > 0:
            d2 = (p.x - g.x) ** 2 + (p.y - g.y) ** 2
            total += math.exp(-d2 / (two_s2 * kappa * kappa))
            count += 1
    if count == 0:
        raise ValueError("no visible keypoints")
    return total / count
