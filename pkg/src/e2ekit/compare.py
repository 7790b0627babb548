"""Seeded optimizer face-offs backing the optim-compare command.

Each problem runs two trajectories from the same start, one with plain
momentum SGD and one with the hybrid orthogonalizing step, at the same
learning rate and step count, and reports the loss of both per step (loss is
recorded before that step's update, so step 0 shows the shared start).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .optim import OptimState, musgd_step, sgd_baseline_step
from .toytrain import (
    ToyHead,
    TrainConfig,
    _dynamic_assignment,
    generate_scene,
    scene_loss_and_grads,
)

PROBLEMS = ("quadratic", "logistic", "toyhead")

COMPARE_CSV_HEADER = "step,loss_sgd,loss_musgd"


def _quadratic_problem(seed: int):
    """Ill-conditioned matrix quadratic: loss = 0.5 tr(theta' A theta B)."""
    rng = np.random.default_rng(seed)
    n = 8

    def spd(eigs):
        q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        return (q * eigs) @ q.T

    a = spd(np.geomspace(0.05, 5.0, n))
    b = spd(np.geomspace(0.05, 5.0, n))
    theta0 = rng.normal(size=(n, n))

    def loss_and_grad(theta):
        g = a @ theta @ b
        return 0.5 * float(np.tensordot(theta, g)), g

    return theta0, loss_and_grad


def _logistic_problem(seed: int):
    """Two-class logistic regression on separable Gaussian blobs."""
    rng = np.random.default_rng(seed)
    n, d = 256, 8
    x = rng.normal(size=(n, d))
    w_true = rng.normal(size=(2, d))
    labels = np.argmax(x @ w_true.T + 0.5 * rng.normal(size=(n, 2)), axis=1)
    y = np.zeros((n, 2))
    y[np.arange(n), labels] = 1.0
    theta0 = np.zeros((2, d))

    def loss_and_grad(theta):
        logits = x @ theta.T
        loss = float(np.mean(np.logaddexp(0.0, logits) - logits * y))
        sig = np.exp(-np.logaddexp(0.0, -logits))
        grad = (sig - y).T @ x / y.size
        return loss, grad

    return theta0, loss_and_grad


def _toyhead_loss_and_grads(head: ToyHead, scene, config: TrainConfig):
    """Equally weighted toy-head loss on one scene with one-to-one targets."""
    assignment = _dynamic_assignment(head, scene, config.gamma, config.delta)
    l_cls, l_box, d_cls, d_reg = scene_loss_and_grads(head, scene, assignment.positives())
    lam = 0.5
    return lam * l_cls + (1.0 - lam) * l_box, lam * d_cls, (1.0 - lam) * d_reg


def _run_matrix_problem(
    theta0: np.ndarray,
    loss_and_grad: Callable,
    steps: int,
    lr: float,
    alpha_mix: float,
) -> list[tuple[int, float, float]]:
    rows = []
    arms = {}
    for name, step_fn in (("sgd", sgd_baseline_step), ("musgd", musgd_step)):
        arms[name] = (theta0.copy(), OptimState.for_param(theta0, lr=lr, alpha_mix=alpha_mix), step_fn)
    for step in range(steps + 1):
        losses = {}
        for name in ("sgd", "musgd"):
            theta, state, step_fn = arms[name]
            loss, grad = loss_and_grad(theta)
            losses[name] = loss
            if step < steps:
                arms[name] = (step_fn(theta, state, grad), state, step_fn)
        rows.append((step, losses["sgd"], losses["musgd"]))
        if not (math.isfinite(losses["sgd"]) and math.isfinite(losses["musgd"])):
            raise RuntimeError(f"optimizer comparison diverged at step {step}")
    return rows


def _run_toyhead(
    seed: int, steps: int, lr: float, alpha_mix: float
) -> list[tuple[int, float, float]]:
    scene = generate_scene(seed, "dense")
    config = TrainConfig(seed=seed)
    head0 = ToyHead.init_default()
    rows = []
    arms = {}
    for name, step_fn in (("sgd", sgd_baseline_step), ("musgd", musgd_step)):
        arms[name] = (
            head0.copy(),
            OptimState.for_param(head0.w_cls, lr=lr, alpha_mix=alpha_mix),
            OptimState.for_param(head0.w_reg, lr=lr, alpha_mix=alpha_mix),
            step_fn,
        )
    for step in range(steps + 1):
        losses = {}
        for name in ("sgd", "musgd"):
            head, st_cls, st_reg, step_fn = arms[name]
            loss, g_cls, g_reg = _toyhead_loss_and_grads(head, scene, config)
            losses[name] = loss
            if step < steps:
                head = ToyHead(
                    step_fn(head.w_cls, st_cls, g_cls),
                    step_fn(head.w_reg, st_reg, g_reg),
                )
                arms[name] = (head, st_cls, st_reg, step_fn)
        rows.append((step, losses["sgd"], losses["musgd"]))
    return rows


def run_comparison(
    problem: str,
    steps: int = 200,
    seed: int = 42,
    lr: float | None = None,
    alpha_mix: float = 0.5,
) -> list[tuple[int, float, float]]:
    """Rows of (step, loss_sgd, loss_musgd) for the named problem."""
    if problem not in PROBLEMS:
        raise ValueError(f"unknown problem '{problem}'; valid names: {', '.join(PROBLEMS)}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if problem == "quadratic":
        theta0, fn = _quadratic_problem(seed)
        return _run_matrix_problem(theta0, fn, steps, 0.05 if lr is None else lr, alpha_mix)
    if problem == "logistic":
        theta0, fn = _logistic_problem(seed)
        return _run_matrix_problem(theta0, fn, steps, 0.5 if lr is None else lr, alpha_mix)
    return _run_toyhead(seed, steps, 0.2 if lr is None else lr, alpha_mix)


def comparison_csv_lines(rows: list[tuple[int, float, float]]) -> list[str]:
    lines = [COMPARE_CSV_HEADER]
    for step, a, b in rows:
        lines.append(f"{step},{a!r},{b!r}")
    return lines
