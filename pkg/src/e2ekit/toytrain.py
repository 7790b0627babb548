"""Synthetic detection task with a tiny decoupled head and analytic gradients.

A scene is a 64 x 64 canvas carrying a 32 x 32 grid of cells. Each cell owns a
deterministic descriptor of the locally rendered content (per-class presence
kernels, a center-containment flag per class, and kernel-weighted relative
geometry), and the head is a pair of linear maps over that descriptor - one
for class logits, one for direct box regression. The point of the exercise is
training dynamics, not representation power: with one-to-one assignment the
head learns to emit a single confident box per object so the confidence-only
tail needs no suppression, while one-to-many assignment provably floods it
with duplicates.

The training loop is single-threaded and bit-reproducible from the config
seed; evaluation is pure per scene.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry
from .assign import (
    AnchorCandidate,
    AssignmentResult,
    GroundTruth,
    StalConfig,
    assign_fixed,
    assign_one_to_one,
    assign_stal,
)
from .geometry import Box
from .optim import OptimState, musgd_step, sgd_baseline_step
from .postprocess import Detection, end_to_end_select
from .sched_loss import ProgLossSchedule, lambda_at

IMAGE_SIZE = 64.0
GRID = 32
STRIDE = IMAGE_SIZE / GRID
NUM_CLASSES = 3
NUM_CELLS = GRID * GRID
PRIOR_SIZE = 14.0
KERNEL_RADIUS = 4.0
FEATURE_DIM = 2 * NUM_CLASSES + 6

EVAL_SCORE_THRESHOLD = 0.5
MATCH_IOU = 0.5
SMALL_AREA_RATIO = 0.01
CLS_POS_WEIGHT = 64.0

ASSIGNERS = ("fixed", "stal", "one_to_one")
OPTIMIZERS = ("sgd", "musgd")
DIFFICULTIES = ("sparse", "dense", "tiny-objects")

MODEL_MAGIC = b"E2EK"
MODEL_VERSION = 1

_SIZE_RANGES = {
    # difficulty -> (num objects lo/hi, normal size lo/hi, tiny count lo/hi, min separation)
    "sparse": ((1, 3), (12.0, 16.0), (0, 0), 24.0),
    "dense": ((6, 10), (12.0, 16.0), (0, 0), 13.0),
    "tiny-objects": ((2, 4), (12.0, 16.0), (2, 3), 13.0),
}


class ConfigError(ValueError):
    """Invalid training configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


@dataclass(frozen=True)
class SyntheticScene:
    """Deterministically rendered scene: ground truths plus cell descriptors."""

    image_size: tuple[float, float]
    stride: float
    gts: tuple[GroundTruth, ...]
    features: np.ndarray       # (NUM_CELLS, FEATURE_DIM)
    anchor_points: np.ndarray  # (NUM_CELLS, 2) cell centers
    seed: int
    difficulty: str


@dataclass
class ToyHead:
    """Two disjoint linear branches over cell descriptors."""

    w_cls: np.ndarray  # (NUM_CLASSES, FEATURE_DIM)
    w_reg: np.ndarray  # (4, FEATURE_DIM)

    @classmethod
    def init_default(cls) -> "ToyHead":
        """Deterministic init: low starting confidence, prior-sized boxes."""
        w_cls = np.zeros((NUM_CLASSES, FEATURE_DIM))
        w_reg = np.zeros((4, FEATURE_DIM))
        w_cls[:, -1] = -2.0
        w_reg[2, -1] = w_reg[3, -1] = _softplus_inv(PRIOR_SIZE / STRIDE)
        return cls(w_cls, w_reg)

    def copy(self) -> "ToyHead":
        return ToyHead(self.w_cls.copy(), self.w_reg.copy())


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs; JSON-round-trippable."""

    epochs: int = 80
    assigner: str = "one_to_one"
    optimizer: str = "musgd"
    lambda_start: float = 0.7
    lambda_end: float = 0.3
    seed: int = 42
    difficulty: str = "dense"
    num_train_scenes: int = 12
    num_eval_scenes: int = 6
    lr: float = 0.1
    beta: float = 0.9
    alpha_mix: float = 0.5
    ns_iterations: int = 5
    tau_base: float = 0.5
    alpha_decay: float = 0.8
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs", f"must be >= 1, got {self.epochs}")
        if self.assigner not in ASSIGNERS:
            raise ConfigError("assigner", f"must be one of {ASSIGNERS}, got '{self.assigner}'")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("optimizer", f"must be one of {OPTIMIZERS}, got '{self.optimizer}'")
        if self.difficulty not in DIFFICULTIES:
            raise ConfigError(
                "difficulty", f"must be one of {DIFFICULTIES}, got '{self.difficulty}'"
            )
        if not self.lambda_start >= self.lambda_end:
            raise ConfigError("lambda_start", "must be >= lambda_end")
        for name in ("lambda_start", "lambda_end"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(name, f"must be in [0, 1], got {val}")
        if self.num_train_scenes < 1:
            raise ConfigError("num_train_scenes", "must be >= 1")
        if self.num_eval_scenes < 1:
            raise ConfigError("num_eval_scenes", "must be >= 1")
        if self.lr < 0.0:
            raise ConfigError("lr", f"must be >= 0, got {self.lr}")

    @property
    def schedule(self) -> ProgLossSchedule:
        return ProgLossSchedule(self.lambda_start, self.lambda_end, self.epochs)

    @property
    def stal_config(self) -> StalConfig:
        return StalConfig(self.tau_base, self.alpha_decay)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name: f.type for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown field")
        coerced = {}
        for f in fields(cls):
            if f.name not in doc:
                continue
            val = doc[f.name]
            try:
                if f.name in ("epochs", "seed", "num_train_scenes", "num_eval_scenes",
                              "ns_iterations"):
                    if isinstance(val, bool) or not isinstance(val, int):
                        raise TypeError("expected an integer")
                    coerced[f.name] = int(val)
                elif f.name in ("assigner", "optimizer", "difficulty"):
                    if not isinstance(val, str):
                        raise TypeError("expected a string")
                    coerced[f.name] = val
                else:
                    coerced[f.name] = float(val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f.name, str(exc)) from None
        return cls(**coerced)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "TrainConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("<document>", "top level must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lambda_t: float
    l_cls: float
    l_box: float
    l_total: float
    duplicate_rate: float
    recall: float


@dataclass(frozen=True)
class EvalMetrics:
    """Duplicate and recall statistics under the confidence-only tail."""

    duplicate_rate: float
    recall: float
    small_object_recall: float | None
    n_gts: int
    n_small_gts: int


@dataclass(frozen=True)
class TrainResult:
    head: ToyHead
    metrics: tuple[EpochMetrics, ...]
    final_eval: EvalMetrics


def _softplus_inv(y: float) -> float:
    return math.log(math.expm1(y))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _cell_centers() -> np.ndarray:
    idx = np.arange(NUM_CELLS)
    cols = idx % GRID
    rows = idx // GRID
    return np.stack([(cols + 0.5) * STRIDE, (rows + 0.5) * STRIDE], axis=1)


_CENTERS = _cell_centers()


def _render_features(gts: Sequence[GroundTruth]) -> np.ndarray:
    """Per-cell descriptors of the rendered scene content.

    Columns: per-class Gaussian presence mass, per-class center-containment
    flag, kernel-weighted relative offsets and softplus-inverse sizes of the
    nearby content, total kernel mass, constant bias.
    """
    phi = np.zeros((NUM_CELLS, FEATURE_DIM))
    phi[:, -1] = 1.0
    if not gts:
        return phi
    gx = np.array([g.box.xc for g in gts])
    gy = np.array([g.box.yc for g in gts])
    gw = np.array([g.box.w for g in gts])
    gh = np.array([g.box.h for g in gts])
    cls = np.array([g.class_id for g in gts])
    dx = gx[None, :] - _CENTERS[:, 0:1]
    dy = gy[None, :] - _CENTERS[:, 1:2]
    wg = np.exp(-(dx * dx + dy * dy) / (2.0 * KERNEL_RADIUS * KERNEL_RADIUS))
    for k in range(NUM_CLASSES):
        mask = cls == k
        if np.any(mask):
            phi[:, k] = wg[:, mask].sum(axis=1)
    cell_col = np.clip((gx / STRIDE).astype(int), 0, GRID - 1)
    cell_row = np.clip((gy / STRIDE).astype(int), 0, GRID - 1)
    cell_idx = cell_row * GRID + cell_col
    for g, a in enumerate(cell_idx):
        phi[a, NUM_CLASSES + cls[g]] = 1.0
    wsum = wg.sum(axis=1)
    denom = wsum + 1e-12
    # Size features are centered on the prior so the init (prior-sized
    # boxes everywhere) is the zero of the feature, which keeps the linear
    # regression problem well conditioned across object scales.
    center = _softplus_inv(PRIOR_SIZE / STRIDE)
    sp_w = np.array([_softplus_inv(v / STRIDE) - center for v in gw])
    sp_h = np.array([_softplus_inv(v / STRIDE) - center for v in gh])
    base = 2 * NUM_CLASSES
    phi[:, base + 0] = (wg * (dx / STRIDE)).sum(axis=1) / denom
    phi[:, base + 1] = (wg * (dy / STRIDE)).sum(axis=1) / denom
    phi[:, base + 2] = (wg @ sp_w) / denom
    phi[:, base + 3] = (wg @ sp_h) / denom
    phi[:, base + 4] = wsum
    return phi


def generate_scene(seed: int, difficulty: str = "dense") -> SyntheticScene:
    """Deterministic scene synthesis.

    sparse places 1-3 well-separated (non-overlapping) objects, dense packs
    6-10, and tiny-objects guarantees at least one object whose area is below
    1% of the image (placed first, so the guarantee is constructive).
    """
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"difficulty must be one of {DIFFICULTIES}, got '{difficulty}'")
    rng = np.random.default_rng(seed)
    (n_lo, n_hi), (s_lo, s_hi), (t_lo, t_hi), min_sep = _SIZE_RANGES[difficulty]
    n_normal = int(rng.integers(n_lo, n_hi + 1))
    n_tiny = int(rng.integers(t_lo, t_hi + 1)) if t_hi > 0 else 0
    image_area = IMAGE_SIZE * IMAGE_SIZE

    sizes: list[tuple[float, float]] = []
    for _ in range(n_tiny):
        sizes.append((float(rng.uniform(5.0, 6.0)), float(rng.uniform(5.0, 6.0))))
    for _ in range(n_normal):
        sizes.append((float(rng.uniform(s_lo, s_hi)), float(rng.uniform(s_lo, s_hi))))

    placed: list[tuple[float, float, float, float]] = []
    for w, h in sizes:
        margin_x = w / 2.0 + 1.0
        margin_y = h / 2.0 + 1.0
        for _ in range(500):
            x = float(rng.uniform(margin_x, IMAGE_SIZE - margin_x))
            y = float(rng.uniform(margin_y, IMAGE_SIZE - margin_y))
            if all(math.hypot(x - px, y - py) >= min_sep for px, py, _, _ in placed):
                placed.append((x, y, w, h))
                break
    gts = tuple(
        GroundTruth(Box(x, y, w, h), int(rng.integers(0, NUM_CLASSES)), image_area)
        for x, y, w, h in placed
    )
    return SyntheticScene(
        image_size=(IMAGE_SIZE, IMAGE_SIZE),
        stride=STRIDE,
        gts=gts,
        features=_render_features(gts),
        anchor_points=_CENTERS.copy(),
        seed=seed,
        difficulty=difficulty,
    )


def forward(head: ToyHead, scene: SyntheticScene) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell class logits (A, C) and raw regression outputs (A, 4).

    The two branches read disjoint weight matrices: classification never sees
    w_reg and regression never sees w_cls.
    """
    logits = scene.features @ head.w_cls.T
    raws = scene.features @ head.w_reg.T
    return logits, raws


def decode_boxes(raws: np.ndarray, anchor_points: np.ndarray, stride: float) -> np.ndarray:
    """Vectorized direct decode: (A, 4) array of (xc, yc, w, h).

    Matches postprocess.direct_decode element-for-element: linear center
    shift, softplus size map.
    """
    out = np.empty_like(raws)
    out[:, 0] = anchor_points[:, 0] + raws[:, 0] * stride
    out[:, 1] = anchor_points[:, 1] + raws[:, 1] * stride
    out[:, 2] = np.logaddexp(0.0, raws[:, 2]) * stride
    out[:, 3] = np.logaddexp(0.0, raws[:, 3]) * stride
    return out


def _static_prior_anchors(scene: SyntheticScene) -> list[AnchorCandidate]:
    return [
        AnchorCandidate(
            (float(p[0]), float(p[1])),
            scene.stride,
            Box(float(p[0]), float(p[1]), PRIOR_SIZE, PRIOR_SIZE),
        )
        for p in scene.anchor_points
    ]


def _dynamic_assignment(
    head: ToyHead, scene: SyntheticScene, gamma: float, delta: float
) -> AssignmentResult:
    logits, raws = forward(head, scene)
    boxes = decode_boxes(raws, scene.anchor_points, scene.stride)
    scores = _sigmoid(logits)
    anchors = [
        AnchorCandidate(
            (float(p[0]), float(p[1])),
            scene.stride,
            Box(float(b[0]), float(b[1]), float(b[2]), float(b[3])),
        )
        for p, b in zip(scene.anchor_points, boxes)
    ]
    score_matrix = np.stack([scores[:, g.class_id] for g in scene.gts], axis=0) if scene.gts else None
    return assign_one_to_one(scene.gts, anchors, gamma, delta, score_matrix)


def scene_loss_and_grads(
    head: ToyHead, scene: SyntheticScene, positives: Sequence[tuple[int, int]]
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Unweighted classification/box losses and their parameter gradients.

    Classification is weight-averaged binary cross-entropy over every
    (cell, class) pair with positives up-weighted by CLS_POS_WEIGHT: the
    negative set outnumbers positives by two to three orders of magnitude
    and an unweighted mean leaves positive logits crawling toward the
    decision threshold. Box loss is mean Complete-IoU over the positive
    pairs. Returns (l_cls, l_box, d_cls, d_reg).
    """
    logits, raws = forward(head, scene)
    boxes = decode_boxes(raws, scene.anchor_points, scene.stride)
    n_pos = max(1, len(positives))

    targets = np.zeros_like(logits)
    for a, g in positives:
        targets[a, scene.gts[g].class_id] = 1.0
    weights = 1.0 + (CLS_POS_WEIGHT - 1.0) * targets
    weight_sum = float(weights.sum())
    bce = np.logaddexp(0.0, logits) - logits * targets
    l_cls = float((weights * bce).sum()) / weight_sum
    dlogits = weights * (_sigmoid(logits) - targets) / weight_sum
    d_cls = dlogits.T @ scene.features

    draw = np.zeros_like(raws)
    l_box_sum = 0.0
    size_sig = _sigmoid(raws[:, 2:4])
    for a, g in positives:
        pred = Box(float(boxes[a, 0]), float(boxes[a, 1]), float(boxes[a, 2]), float(boxes[a, 3]))
        loss_v, grad = geometry.ciou_loss(pred, scene.gts[g].box)
        l_box_sum += loss_v
        draw[a, 0] += grad[0] * scene.stride
        draw[a, 1] += grad[1] * scene.stride
        draw[a, 2] += grad[2] * float(size_sig[a, 0]) * scene.stride
        draw[a, 3] += grad[3] * float(size_sig[a, 1]) * scene.stride
    l_box = l_box_sum / n_pos
    d_reg = (draw / n_pos).T @ scene.features
    return l_cls, l_box, d_cls, d_reg


def detections_for_scene(head: ToyHead, scene: SyntheticScene) -> list[Detection]:
    """Every (cell, class) candidate as a Detection, in cell-major order."""
    logits, raws = forward(head, scene)
    boxes = decode_boxes(raws, scene.anchor_points, scene.stride)
    scores = _sigmoid(logits)
    dets: list[Detection] = []
    for a in range(NUM_CELLS):
        box = Box(float(boxes[a, 0]), float(boxes[a, 1]), float(boxes[a, 2]), float(boxes[a, 3]))
        for k in range(NUM_CLASSES):
            dets.append(Detection(box, k, float(scores[a, k])))
    return dets


def evaluate(head: ToyHead, scenes: Sequence[SyntheticScene]) -> EvalMetrics:
    """Duplicate/recall statistics under the confidence-only selector.

    A ground truth is matched by a prediction of the same class with IoU >=
    0.5 and score >= 0.5; duplicate_rate counts gts matched at least twice,
    recall counts gts matched at least once, small_object_recall restricts
    recall to gts below 1% of the image area (None when there are none).
    """
    if not scenes:
        raise ValueError("empty scene set")
    n_gts = n_dup = n_rec = 0
    n_small = n_small_rec = 0
    for scene in scenes:
        selected = end_to_end_select(detections_for_scene(head, scene), EVAL_SCORE_THRESHOLD)
        for gt in scene.gts:
            matches = 0
            for det in selected:
                if det.class_id == gt.class_id and geometry.iou(det.box, gt.box) >= MATCH_IOU:
                    matches += 1
            n_gts += 1
            n_dup += matches >= 2
            n_rec += matches >= 1
            if gt.area_ratio < SMALL_AREA_RATIO:
                n_small += 1
                n_small_rec += matches >= 1
    if n_gts == 0:
        raise ValueError("scene set contains no ground truths")
    return EvalMetrics(
        duplicate_rate=n_dup / n_gts,
        recall=n_rec / n_gts,
        small_object_recall=(n_small_rec / n_small) if n_small else None,
        n_gts=n_gts,
        n_small_gts=n_small,
    )


def make_scene_sets(
    config: TrainConfig,
) -> tuple[list[SyntheticScene], list[SyntheticScene]]:
    """Deterministic train/eval scene sets derived from the config seed."""
    rng = np.random.default_rng(config.seed)
    seeds = rng.integers(0, 2**63, size=config.num_train_scenes + config.num_eval_scenes)
    train = [generate_scene(int(s), config.difficulty) for s in seeds[: config.num_train_scenes]]
    evals = [generate_scene(int(s), config.difficulty) for s in seeds[config.num_train_scenes :]]
    return train, evals


def _assignment_for_epoch(
    head: ToyHead,
    scene: SyntheticScene,
    config: TrainConfig,
    static: AssignmentResult | None,
) -> AssignmentResult:
    if config.assigner == "one_to_one":
        return _dynamic_assignment(head, scene, config.gamma, config.delta)
    assert static is not None
    return static


def train(config: TrainConfig) -> TrainResult:
    """Run the full loop: assign, weight the losses, step the optimizer.

    Emits one EpochMetrics row per epoch (losses averaged over the train
    scenes; duplicate/recall measured on the held-out eval scenes after the
    epoch's update). Raises RuntimeError if the loss diverges to a non-finite
    value.
    """
    train_scenes, eval_scenes = make_scene_sets(config)
    head = ToyHead.init_default()
    schedule = config.schedule

    static_assignments: list[AssignmentResult | None] = []
    for scene in train_scenes:
        if config.assigner == "fixed":
            static_assignments.append(
                assign_fixed(scene.gts, _static_prior_anchors(scene), config.tau_base)
            )
        elif config.assigner == "stal":
            static_assignments.append(
                assign_stal(scene.gts, _static_prior_anchors(scene), config.stal_config)
            )
        else:
            static_assignments.append(None)

    opt_kwargs = dict(
        beta=config.beta,
        lr=max(config.lr, np.finfo(float).tiny),
        alpha_mix=config.alpha_mix,
        ns_iterations=config.ns_iterations,
    )
    state_cls = OptimState.for_param(head.w_cls, **opt_kwargs)
    state_reg = OptimState.for_param(head.w_reg, **opt_kwargs)
    step_fn = musgd_step if config.optimizer == "musgd" else sgd_baseline_step

    rows: list[EpochMetrics] = []
    n_scenes = len(train_scenes)
    for epoch in range(config.epochs):
        lam = lambda_at(schedule, epoch)
        sum_cls = sum_box = 0.0
        acc_cls = np.zeros_like(head.w_cls)
        acc_reg = np.zeros_like(head.w_reg)
        for scene, static in zip(train_scenes, static_assignments):
            result = _assignment_for_epoch(head, scene, config, static)
            l_cls, l_box, d_cls, d_reg = scene_loss_and_grads(head, scene, result.positives())
            sum_cls += l_cls
            sum_box += l_box
            acc_cls += d_cls
            acc_reg += d_reg
        mean_cls = sum_cls / n_scenes
        mean_box = sum_box / n_scenes
        l_total = lam * mean_cls + (1.0 - lam) * mean_box
        if not math.isfinite(l_total):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: total loss is {l_total}"
            )
        if config.lr > 0.0:
            head.w_cls = step_fn(head.w_cls, state_cls, lam * acc_cls / n_scenes)
            head.w_reg = step_fn(head.w_reg, state_reg, (1.0 - lam) * acc_reg / n_scenes)
        snapshot = evaluate(head, eval_scenes)
        rows.append(
            EpochMetrics(epoch, lam, mean_cls, mean_box, l_total,
                         snapshot.duplicate_rate, snapshot.recall)
        )
    final_eval = evaluate(head, eval_scenes)
    return TrainResult(head, tuple(rows), final_eval)


METRICS_CSV_HEADER = "epoch,lambda,l_cls,l_box,l_total,duplicate_rate,recall"


def metrics_csv_lines(metrics: Sequence[EpochMetrics]) -> list[str]:
    lines = [METRICS_CSV_HEADER]
    for m in metrics:
        lines.append(
            f"{m.epoch},{m.lambda_t!r},{m.l_cls!r},{m.l_box!r},{m.l_total!r},"
            f"{m.duplicate_rate!r},{m.recall!r}"
        )
    return lines


def save_model(head: ToyHead, path: str | Path) -> None:
    """Flat binary model format: magic, u16 version, u16 matrix count, then
    per matrix u32 rows, u32 cols and row-major float64 data (little-endian).
    """
    payload = bytearray()
    payload += MODEL_MAGIC
    payload += struct.pack("<HH", MODEL_VERSION, 2)
    for mat in (head.w_cls, head.w_reg):
        payload += struct.pack("<II", mat.shape[0], mat.shape[1])
        payload += np.ascontiguousarray(mat, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(payload))


def load_model(path: str | Path) -> ToyHead:
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise ValueError(f"not a model file (bad magic {raw[:4]!r})")
    version, count = struct.unpack_from("<HH", raw, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    if count != 2:
        raise ValueError(f"expected 2 matrices, found {count}")
    offset = 8
    mats = []
    for _ in range(count):
        rows, cols = struct.unpack_from("<II", raw, offset)
        offset += 8
        n = rows * cols * 8
        mat = np.frombuffer(raw[offset : offset + n], dtype="<f8").reshape(rows, cols)
        mats.append(mat.astype(np.float64))
        offset += n
    w_cls, w_reg = mats
    if w_cls.shape != (NUM_CLASSES, FEATURE_DIM) or w_reg.shape != (4, FEATURE_DIM):
        raise ValueError("model matrices have unexpected shapes")
    return ToyHead(w_cls, w_reg)
