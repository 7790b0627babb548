"""Loss functions and the progressive classification/regression re-weighting
schedule (cosine decay from a classification-heavy start to a box-heavy end).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ProgLossSchedule:
    """Cosine-decay weighting between classification and box loss."""

    lambda_start: float = 0.7
    lambda_end: float = 0.3
    total_epochs: int = 100

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_start <= 1.0:
            raise ValueError(f"lambda_start must be in [0, 1], got {self.lambda_start}")
        if not 0.0 <= self.lambda_end <= 1.0:
            raise ValueError(f"lambda_end must be in [0, 1], got {self.lambda_end}")
        if self.lambda_start < self.lambda_end:
            raise ValueError(
                "schedule must be non-increasing: lambda_start >= lambda_end"
            )
        if self.total_epochs < 1:
            raise ValueError(f"total_epochs must be >= 1, got {self.total_epochs}")


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted total loss with its components and the weight that produced it."""

    l_cls: float
    l_box: float
    lambda_t: float
    l_total: float


def lambda_at(schedule: ProgLossSchedule, epoch: int) -> float:
    """Classification weight at an epoch: cosine decay from start to end.

    lambda_0 == lambda_start and lambda_T == lambda_end exactly; epochs
    outside [0, T] are a range error.
    """
    t = schedule.total_epochs
    if not 0 <= epoch <= t:
        raise ValueError(f"epoch must be in [0, {t}], got {epoch}")
    if epoch == 0:
        return schedule.lambda_start
    if epoch == t:
        return schedule.lambda_end
    cos_term = (1.0 + math.cos(math.pi * epoch / t)) / 2.0
    return schedule.lambda_end + (schedule.lambda_start - schedule.lambda_end) * cos_term


def bce_loss(logit: float, target: float) -> tuple[float, float]:
    """Binary cross-entropy from a logit, in the overflow-safe form.

    Returns (loss, d loss / d logit); the gradient is sigmoid(logit) - target.
    """
    if not math.isfinite(logit):
        raise ValueError(f"logit must be finite, got {logit}")
    if target not in (0.0, 1.0, 0, 1):
        raise ValueError(f"target must be 0 or 1, got {target}")
    loss = max(logit, 0.0) - logit * target + math.log1p(math.exp(-abs(logit)))
    if logit >= 0.0:
        sig = 1.0 / (1.0 + math.exp(-logit))
    else:
        e = math.exp(logit)
        sig = e / (1.0 + e)
    return loss, sig - target


def total_loss(
    l_cls: float, l_box: float, schedule: ProgLossSchedule, epoch: int
) -> LossBreakdown:
    """Convex combination of the two loss terms at the scheduled weight.

    l_total = lambda_t * l_cls + (1 - lambda_t) * l_box, exactly; gradient
    consumers scale classification gradients by lambda_t and box gradients by
    (1 - lambda_t).
    """
    if l_cls < 0.0 or l_box < 0.0:
        raise ValueError("loss terms must be >= 0")
    lam = lambda_at(schedule, epoch)
    return LossBreakdown(l_cls, l_box, lam, lam * l_cls + (1.0 - lam) * l_box)
