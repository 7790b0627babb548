"""Hybrid matrix optimizer: classic SGD momentum blended with Newton-Schulz
gradient orthogonalization.

One OptimState belongs to one parameter matrix; a step mutates only its own
momentum buffer. Distinct states may be stepped in parallel, a single state
must not be stepped concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Odd-polynomial coefficient schedule (powers x, x^3, x^5, x^7, x^9) applied
# to the Frobenius-normalized matrix. The first three rows grow small singular
# values aggressively while capping the band at 1.1; the last two contract the
# band around 1. Designed so that five iterations bring every singular value
# of any input with condition number <= 100 and min(dims) <= 150 within 1e-2
# of 1 (measured worst case ~4e-9). Iterations beyond the schedule fall back
# to the classic cubic 1.5*x - 0.5*x^3, which is a strict contraction toward
# 1 on (0, sqrt(3)).
_NS_SCHEDULE: tuple[tuple[float, float, float, float, float], ...] = (
    (8.357727926465149, -82.13836972108825, 273.62586069579953, -351.8914802139556, 153.14626131277913),
    (7.52716465849667, -60.12778795833291, 164.73006366928274, -174.66857083405225, 62.73693842694826),
    (6.991857616673107, -49.02156379008159, 128.89408338662076, -133.94297953330937, 47.536432668575145),
    (4.0490835554785845, -12.62311167385073, 22.485028899393754, -18.62301297602048, 5.703026141041128),
    (2.461410269561571, -3.2824720034737442, 2.9539543748448196, -1.406134219349231, 0.27324157789854464),
)

_NS_CUBIC: tuple[float, float] = (1.5, -0.5)


class NewtonSchulzResult(NamedTuple):
    """Orthogonalized matrix plus a degenerate-input flag (zero gradient)."""

    matrix: np.ndarray
    degenerate: bool


@dataclass
class OptimState:
    """Per-parameter momentum buffer and hyperparameters."""

    momentum_buffer: np.ndarray
    beta: float = 0.9
    lr: float = 0.01
    alpha_mix: float = 0.5
    ns_iterations: int = 5

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ValueError(f"alpha_mix must be in [0, 1], got {self.alpha_mix}")
        if self.ns_iterations < 1:
            raise ValueError(f"ns_iterations must be >= 1, got {self.ns_iterations}")

    @classmethod
    def for_param(cls, theta: np.ndarray, **kwargs) -> "OptimState":
        """State with a zero momentum buffer shaped like the parameter."""
        return cls(momentum_buffer=np.zeros_like(theta, dtype=np.float64), **kwargs)


def momentum_update(state: OptimState, gradient: np.ndarray) -> np.ndarray:
    """In-place buffer update v <- beta * v + g; returns the buffer."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != state.momentum_buffer.shape:
        raise ValueError(
            f"gradient shape {g.shape} does not match buffer shape "
            f"{state.momentum_buffer.shape}"
        )
    state.momentum_buffer *= state.beta
    state.momentum_buffer += g
    return state.momentum_buffer


def _apply_odd_polynomial(x: np.ndarray, coeffs: tuple[float, ...]) -> np.ndarray:
    """p(X) = sum_k coeffs[k] * (X X^T)^k X for a wide matrix X."""
    gram = x @ x.T
    acc = coeffs[0] * x
    power = x
    for c in coeffs[1:]:
        power = gram @ power
        acc = acc + c * power
    return acc


def newton_schulz(g: np.ndarray, iterations: int = 5) -> NewtonSchulzResult:
    """Iteratively drive all singular values of g toward 1.

    The input is Frobenius-normalized, oriented so the Gram product uses the
    smaller dimension, then passed through the odd-polynomial schedule; the
    result approximates the orthogonal polar factor of g. Five iterations
    bring every singular value within 1e-2 of 1 for condition numbers up to
    100 (and far beyond that bar in practice); fewer iterations return a
    partially converged result. A zero matrix has no polar factor and comes
    back unchanged with the degenerate flag set.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    x = np.asarray(g, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("gradient must be finite")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return NewtonSchulzResult(x.copy(), True)
    transposed = x.shape[0] > x.shape[1]
    x = x.T / norm if transposed else x / norm
    for k in range(iterations):
        coeffs = _NS_SCHEDULE[k] if k < len(_NS_SCHEDULE) else _NS_CUBIC
        x = _apply_odd_polynomial(x, coeffs)
    return NewtonSchulzResult(x.T if transposed else x, False)


def _validate_step(theta: np.ndarray, state: OptimState, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != theta.shape:
        raise ValueError(
            f"gradient shape {g.shape} does not match parameter shape {theta.shape}"
        )
    if not np.all(np.isfinite(g)):
        raise ValueError("step rejected: non-finite gradient")
    return g


def _is_vector(shape: tuple[int, ...]) -> bool:
    return len(shape) < 2 or min(shape) == 1


def musgd_step(theta: np.ndarray, state: OptimState, g: np.ndarray) -> np.ndarray:
    """One hybrid step: theta - lr * (alpha*v + (1-alpha)*orthogonalized(g)).

    The momentum buffer is advanced first. Vector-shaped parameters (1 x n or
    n x 1) have no meaningful orthogonal factor and take the pure momentum
    branch. With alpha_mix = 1 the trajectory is bitwise identical to
    sgd_baseline_step.
    """
    g = _validate_step(theta, state, g)
    v = momentum_update(state, g)
    if state.alpha_mix == 1.0 or _is_vector(theta.shape):
        update = v
    else:
        ortho = newton_schulz(g, state.ns_iterations).matrix
        update = state.alpha_mix * v + (1.0 - state.alpha_mix) * ortho
    return theta - state.lr * update


def sgd_baseline_step(theta: np.ndarray, state: OptimState, g: np.ndarray) -> np.ndarray:
    """Plain momentum SGD step; the reference trajectory for comparisons."""
    g = _validate_step(theta, state, g)
    v = momentum_update(state, g)
    return theta - state.lr * v
