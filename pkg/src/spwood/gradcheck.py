"""Finite-difference verification for the loss gradients.

Each loss is wrapped as a :class:`GradCase`: a flat parameter vector, a
value function over it, and the analytic gradient reported by the loss.
Central differences over the same vector give an independent numeric
gradient to compare against. Random case generators sample interior
points away from the few non-smooth spots (branch thresholds, smooth-L1
kinks, angle wrap boundaries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses
from .errors import InvalidInputError
from .geometry import OrientedBox
from .losses import (
    Flip,
    FocalParams,
    PredictionTriple,
    Rotate,
    SampleKind,
    SupervisedWeights,
)

DEFAULT_STEP = 1e-5
DEFAULT_REL_TOL = 1e-5

OPS = (
    "sparse-cls",
    "angle",
    "overlap",
    "watershed",
    "supervised",
    "unsupervised",
    "total",
)


@dataclass(frozen=True)
class GradCase:
    op: str
    x0: np.ndarray
    func: Callable[[np.ndarray], float]
    analytic: np.ndarray
    value: float


def central_difference(f: Callable[[np.ndarray], float], x, step: float = DEFAULT_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return out


def max_relative_error(analytic, numeric, floor: float = 1e-3) -> float:
    a = np.asarray(analytic, dtype=float).ravel()
    n = np.asarray(numeric, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_case(case: GradCase, step: float = DEFAULT_STEP) -> float:
    return max_relative_error(case.analytic, central_difference(case.func, case.x0, step))


# --- case constructors ------------------------------------------------------


def sparse_cls_case(p_t: float, kind: SampleKind, params: FocalParams) -> GradCase:
    res = losses.sparse_cls_loss(p_t, kind, params)

    def f(x):
        return losses.sparse_cls_loss(float(x[0]), kind, params).value

    return GradCase("sparse-cls", np.array([p_t]), f, res.grad, res.value)


def angle_case(theta_aug: float, theta_orig: float, aug, beta: float = 1.0) -> GradCase:
    res = losses.angle_loss(theta_aug, theta_orig, aug, beta)

    def f(x):
        return losses.angle_loss(float(x[0]), float(x[1]), aug, beta).value

    return GradCase("angle", np.array([theta_aug, theta_orig]), f, res.grad, res.value)


def overlap_case(boxes: list[OrientedBox]) -> GradCase:
    res = losses.gaussian_overlap_loss(boxes)
    x0 = np.array([[b.cx, b.cy, b.w, b.h, b.theta] for b in boxes]).ravel()

    def f(x):
        params = x.reshape(-1, 5)
        rebuilt = [OrientedBox(*row) for row in params]
        return losses.gaussian_overlap_loss(rebuilt).value

    return GradCase("overlap", x0, f, res.grad.ravel(), res.value)


def watershed_case(
    pred_w: float,
    pred_h: float,
    target_w: float,
    target_h: float,
    tau: float = 1.0,
    raw: bool = False,
) -> GradCase:
    def f(x):
        box = OrientedBox(0.0, 0.0, float(x[0]), float(x[1]), 0.0)
        return losses.watershed_loss(box, target_w, target_h, tau, raw).value

    res = losses.watershed_loss(
        OrientedBox(0.0, 0.0, pred_w, pred_h, 0.0), target_w, target_h, tau, raw
    )
    return GradCase("watershed", np.array([pred_w, pred_h]), f, res.grad, res.value)


def supervised_case(parts, weights: SupervisedWeights = SupervisedWeights()) -> GradCase:
    value = losses.total_supervised_loss(parts, weights)

    def f(x):
        return losses.total_supervised_loss(x.tolist(), weights)

    return GradCase(
        "supervised", np.asarray(parts, dtype=float), f, weights.as_array(), value
    )


def unsupervised_case(
    teacher: PredictionTriple, student: PredictionTriple, beta: float = 1.0
) -> GradCase:
    res = losses.unsupervised_loss(teacher, student, beta)
    n = len(student)
    x0 = np.concatenate(
        [student.conf, student.centerness, student.box_margins.ravel()]
    )

    def f(x):
        s = PredictionTriple(
            conf=x[:n], centerness=x[n : 2 * n], box_margins=x[2 * n :].reshape(n, 4)
        )
        return losses.unsupervised_loss(teacher, s, beta).value

    return GradCase("unsupervised", x0, f, res.grad, res.value)


def total_case(sup: float, unsup: float) -> GradCase:
    value = losses.total_loss(sup, unsup)

    def f(x):
        return losses.total_loss(float(x[0]), float(x[1]))

    return GradCase("total", np.array([sup, unsup]), f, np.array([1.0, 1.0]), value)


# --- random interior points -------------------------------------------------


def _away_from(rng, low, high, avoid, margin=1e-3):
    """Uniform draw from (low, high) at least margin away from each avoid point."""
    while True:
        v = rng.uniform(low, high)
        if all(abs(v - a) > margin for a in avoid):
            return v


def random_case(op: str, rng: np.random.Generator) -> GradCase:
    if op == "sparse-cls":
        params = FocalParams(
            alpha_t=rng.uniform(0.1, 0.9),
            gamma=rng.uniform(0.5, 4.0),
            omega=rng.uniform(0.05, 1.0),
            thr=rng.uniform(0.2, 0.8),
        )
        kind = SampleKind.POSITIVE if rng.random() < 0.5 else SampleKind.NEGATIVE
        p = _away_from(rng, 0.02, 0.98, [params.thr])
        return sparse_cls_case(p, kind, params)
    if op == "angle":
        beta = rng.uniform(0.3, 1.5)
        if rng.random() < 0.5:
            aug, sign, shift = Flip(), 1.0, 0.0
        else:
            shift = rng.uniform(-math.pi, math.pi)
            aug, sign = Rotate(shift), -1.0
        while True:
            ta = rng.uniform(-math.pi / 2, math.pi / 2)
            to = rng.uniform(-math.pi / 2, math.pi / 2)
            raw = ta + sign * to - (shift if sign < 0 else 0.0)
            wrapped = (raw + math.pi / 2) % math.pi - math.pi / 2
            near_wrap = (raw + math.pi / 2) % math.pi
            if (
                min(near_wrap, math.pi - near_wrap) > 1e-3
                and abs(abs(wrapped) - beta) > 1e-3
            ):
                return angle_case(ta, to, aug, beta)
    if op == "overlap":
        n = int(rng.integers(2, 4))
        boxes = [
            OrientedBox(
                rng.uniform(-4, 4),
                rng.uniform(-4, 4),
                rng.uniform(0.5, 4.0),
                rng.uniform(0.5, 4.0),
                rng.uniform(-1.4, 1.4),
            )
            for _ in range(n)
        ]
        return overlap_case(boxes)
    if op == "watershed":
        return watershed_case(
            rng.uniform(0.5, 8.0),
            rng.uniform(0.5, 8.0),
            rng.uniform(0.5, 8.0),
            rng.uniform(0.5, 8.0),
        )
    if op == "supervised":
        return supervised_case(rng.uniform(0.0, 5.0, size=6))
    if op == "unsupervised":
        n = int(rng.integers(1, 5))
        beta = 1.0
        t_margins = rng.uniform(-3.0, 3.0, size=(n, 4))
        s_margins = np.empty_like(t_margins)
        for idx in np.ndindex(s_margins.shape):
            s_margins[idx] = t_margins[idx] + _away_from(
                rng, -3.0, 3.0, [-beta, 0.0, beta]
            )
        teacher = PredictionTriple(
            rng.uniform(0.05, 0.95, n), rng.uniform(0.05, 0.95, n), t_margins
        )
        student = PredictionTriple(
            rng.uniform(0.05, 0.95, n), rng.uniform(0.05, 0.95, n), s_margins
        )
        return unsupervised_case(teacher, student, beta)
    if op == "total":
        return total_case(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0))
    raise InvalidInputError(f"unknown loss op {op!r}")


def random_sweep(
    n_points: int = 100, seed: int = 0, ops=OPS, step: float = DEFAULT_STEP
) -> dict[str, float]:
    """Max relative FD error per op over n_points seeded random cases."""
    rng = np.random.default_rng(seed)
    return {
        op: max(check_case(random_case(op, rng), step) for _ in range(n_points))
        for op in ops
    }
