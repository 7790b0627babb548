"""Desk-scale toolkit for NMS-free end-to-end detection mechanics.

Subpackages cover box/keypoint geometry, the competing inference tails
(greedy NMS vs a confidence-only selector, bin-expectation vs direct
decoding), label assignment strategies including size-adaptive thresholds
and one-to-one matching, progressive loss scheduling, a hybrid
momentum/orthogonalization optimizer, a synthetic toy trainer and a latency
harness. The ``e2ekit`` executable exposes all of it.
"""

__version__ = "0.1.0"

from . import assign, bench, compare, geometry, optim, postprocess, sched_loss, toytrain
from .assign import (
    AnchorCandidate,
    AssignmentResult,
    GroundTruth,
    StalConfig,
    assign_fixed,
    assign_one_to_one,
    assign_stal,
    stal_threshold,
)
from .geometry import (
    COCO_KAPPAS,
    Box,
    Keypoint,
    KeypointSet,
    RotatedBox,
    canonicalize,
    ciou_loss,
    giou,
    iou,
    oks,
    rotated_iou,
)
from .optim import (
    NewtonSchulzResult,
    OptimState,
    momentum_update,
    musgd_step,
    newton_schulz,
    sgd_baseline_step,
)
from .postprocess import (
    Detection,
    DflLogits,
    RawRegression,
    dfl_decode,
    direct_decode,
    end_to_end_select,
    nms,
)
from .sched_loss import LossBreakdown, ProgLossSchedule, bce_loss, lambda_at, total_loss
from .toytrain import (
    EvalMetrics,
    SyntheticScene,
    ToyHead,
    TrainConfig,
    TrainResult,
    evaluate,
    generate_scene,
    train,
)

__all__ = [
    "__version__",
    "assign", "bench", "compare", "geometry", "optim", "postprocess",
    "sched_loss", "toytrain",
    "AnchorCandidate", "AssignmentResult", "GroundTruth", "StalConfig",
    "assign_fixed", "assign_one_to_one", "assign_stal", "stal_threshold",
    "COCO_KAPPAS", "Box", "Keypoint", "KeypointSet", "RotatedBox",
    "canonicalize", "ciou_loss", "giou", "iou", "oks", "rotated_iou",
    "NewtonSchulzResult", "OptimState", "momentum_update", "musgd_step",
    "newton_schulz", "sgd_baseline_step",
    "Detection", "DflLogits", "RawRegression", "dfl_decode", "direct_decode",
    "end_to_end_select", "nms",
    "LossBreakdown", "ProgLossSchedule", "bce_loss", "lambda_at", "total_loss",
    "EvalMetrics", "SyntheticScene", "ToyHead", "TrainConfig", "TrainResult",
    "evaluate", "generate_scene", "train",
]
