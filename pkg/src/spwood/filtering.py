"""Pseudo-label filtering by two-component Gaussian mixtures.

Teacher confidences at each pyramid level are modeled as a mixture of a
positive (high-mean) and a negative (low-mean) Gaussian fitted by EM.
The selection threshold for a level is the smallest observed score whose
posterior responsibility under the positive component reaches 1/2.

Two strategies are provided: MPF fits one mixture per level, CPF pools
every level into a single fit. Levels with too few or constant scores
are degenerate and inherit the pooled threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError


class PyramidLevel(str, enum.Enum):
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"
    P6 = "P6"
    P7 = "P7"


class ThresholdRule(str, enum.Enum):
    # posterior: decision boundary of the positive component over observed
    # scores. mode: the positive component's mean (density peak), kept for
    # comparison; it cannot separate the components and is not the default.
    POSTERIOR = "posterior"
    MODE = "mode"


@dataclass(frozen=True)
class GmmConfig:
    """EM and degeneracy settings. Defaults match the fitting contract:
    stop when the log-likelihood moves less than tol or after max_iter
    rounds; variances never drop below var_floor."""

    tol: float = 1e-6
    max_iter: int = 300
    var_floor: float = 1e-6
    min_level_scores: int = 20
    rule: ThresholdRule = ThresholdRule.POSTERIOR


@dataclass(frozen=True)
class LevelScores:
    """Prediction confidences for one pyramid level; may be empty."""

    level: PyramidLevel
    scores: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.scores, dtype=float).ravel()
        if arr.size and not (np.all(arr > 0.0) and np.all(arr < 1.0)):
            raise InvalidInputError(
                f"{self.level.value}: scores must lie strictly in (0, 1)"
            )
        object.__setattr__(self, "scores", arr)
        object.__setattr__(self, "level", PyramidLevel(self.level))


@dataclass(frozen=True)
class GmmFit:
    """Fitted two-component mixture; the positive component has the
    higher mean. log_likelihoods records the EM trajectory."""

    w_p: float
    w_n: float
    mu_p: float
    mu_n: float
    var_p: float
    var_n: float
    iterations: int
    converged: bool
    log_likelihoods: tuple[float, ...] = ()

    def __post_init__(self):
        if abs(self.w_p + self.w_n - 1.0) > 1e-9:
            raise InvalidInputError("mixture weights must sum to 1")
        if not (0.0 <= self.w_p <= 1.0 and 0.0 <= self.w_n <= 1.0):
            raise InvalidInputError("mixture weights must lie in [0, 1]")
        if self.mu_p < self.mu_n:
            raise InvalidInputError("positive component must have the higher mean")
        if self.var_p <= 0 or self.var_n <= 0:
            raise InvalidInputError("variances must be positive")


@dataclass(frozen=True)
class LevelThreshold:
    level: PyramidLevel
    tau: float


@dataclass(frozen=True)
class ThresholdResult:
    """A selection threshold; fallback marks the no-boundary case where
    tau was pinned to the top observed score."""

    tau: float
    fallback: bool = False

    def __float__(self) -> float:
        return self.tau


def _log_normal_pdf(x: np.ndarray, mu: float, var: float) -> np.ndarray:
    return -0.5 * math.log(2.0 * math.pi * var) - (x - mu) ** 2 / (2.0 * var)


def fit_gmm(scores, config: GmmConfig = GmmConfig()) -> GmmFit:
    """EM fit of a two-component univariate Gaussian mixture.

    Initialization is data-determined (no randomness): component means
    start at the maximum and minimum observed score, both variances at 1,
    both weights at 1/2. The log-likelihood is non-decreasing across
    iterations; a variance floor guards against collapse.
    """
    x = np.asarray(scores, dtype=float).ravel()
    if x.size and not (np.all(x > 0.0) and np.all(x < 1.0)):
        raise InvalidInputError("scores must lie strictly in (0, 1)")
    if np.unique(x).size < 2:
        raise DegenerateInputError(
            f"need at least 2 distinct scores, got {np.unique(x).size}"
        )
    n = x.size
    mu = np.array([float(x.max()), float(x.min())])  # [positive, negative]
    var = np.array([1.0, 1.0])
    w = np.array([0.5, 0.5])

    lls: list[float] = []
    converged = False
    iterations = 0
    prev_ll = -np.inf
    for iterations in range(1, config.max_iter + 1):
        # E step
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        log_joint = np.stack(
            [log_w[k] + _log_normal_pdf(x, mu[k], var[k]) for k in (0, 1)]
        )
        log_norm = np.logaddexp(log_joint[0], log_joint[1])
        ll = float(log_norm.sum())
        lls.append(ll)
        resp = np.exp(log_joint - log_norm)
        # M step
        nk = resp.sum(axis=1)
        w = nk / n
        for k in (0, 1):
            if nk[k] > 1e-12:
                mu[k] = float(resp[k] @ x / nk[k])
                var[k] = max(
                    float(resp[k] @ (x - mu[k]) ** 2 / nk[k]), config.var_floor
                )
        if abs(ll - prev_ll) < config.tol:
            converged = True
            break
        prev_ll = ll

    p, q = (0, 1) if mu[0] >= mu[1] else (1, 0)
    return GmmFit(
        w_p=float(w[p]),
        w_n=float(w[q]),
        mu_p=float(mu[p]),
        mu_n=float(mu[q]),
        var_p=float(var[p]),
        var_n=float(var[q]),
        iterations=iterations,
        converged=converged,
        log_likelihoods=tuple(lls),
    )


def threshold_from_fit(
    fit: GmmFit, scores, rule: ThresholdRule = ThresholdRule.POSTERIOR
) -> ThresholdResult:
    """Selection threshold from a fitted mixture.

    Default rule: the smallest observed score whose posterior
    responsibility under the positive component is >= 1/2. If no score
    qualifies, fall back to the maximum observed score (selects nothing
    below the top) and flag it. The mode rule returns the positive mean.
    """
    x = np.asarray(scores, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("empty score list")
    if rule is ThresholdRule.MODE:
        return ThresholdResult(fit.mu_p, fallback=False)
    with np.errstate(divide="ignore"):
        log_p = math.log(fit.w_p) if fit.w_p > 0 else -np.inf
        log_n = math.log(fit.w_n) if fit.w_n > 0 else -np.inf
    score_p = log_p + _log_normal_pdf(x, fit.mu_p, fit.var_p)
    score_n = log_n + _log_normal_pdf(x, fit.mu_n, fit.var_n)
    acceptable = x[score_p >= score_n]
    if acceptable.size == 0:
        return ThresholdResult(float(x.max()), fallback=True)
    return ThresholdResult(float(acceptable.min()), fallback=False)


def is_degenerate_level(scores, config: GmmConfig = GmmConfig()) -> bool:
    """Too few scores (or too few distinct values) to fit a mixture."""
    scores = np.asarray(scores)
    return scores.size < config.min_level_scores or np.unique(scores).size < 2


def cpf_filter(
    per_level: list[LevelScores], config: GmmConfig = GmmConfig()
) -> ThresholdResult:
    """Pool all levels' scores and fit a single global threshold."""
    pooled = np.concatenate([ls.scores for ls in per_level]) if per_level else np.array([])
    fit = fit_gmm(pooled, config)  # raises DegenerateInputError when unusable
    return threshold_from_fit(fit, pooled, config.rule)


def mpf_filter(
    per_level: list[LevelScores], config: GmmConfig = GmmConfig()
) -> list[LevelThreshold]:
    """One threshold per level, each from that level's own mixture fit.

    Degenerate levels (fewer than config.min_level_scores scores, or
    fewer than 2 distinct values) inherit the pooled CPF threshold. If
    every level is degenerate the pooled threshold is used throughout;
    if pooling is degenerate too, the input is rejected.
    """
    if not per_level:
        raise DegenerateInputError("no levels given")
    degenerate = [is_degenerate_level(ls.scores, config) for ls in per_level]
    pooled_tau: float | None = None
    if any(degenerate):
        pooled_tau = cpf_filter(per_level, config).tau
    out = []
    for ls, is_degen in zip(per_level, degenerate):
        if is_degen:
            out.append(LevelThreshold(ls.level, pooled_tau))
        else:
            fit = fit_gmm(ls.scores, config)
            out.append(
                LevelThreshold(ls.level, threshold_from_fit(fit, ls.scores, config.rule).tau)
            )
    return out


def select_pseudo_labels(candidates, thresholds: list[LevelThreshold]) -> list:
    """Keep candidates whose score reaches their level's threshold.

    Candidates are (level, score, payload) triples; selection is
    inclusive (score == tau passes) and preserves input order.
    """
    tau_by_level = {t.level: t.tau for t in thresholds}
    selected = []
    for cand in candidates:
        level, score = PyramidLevel(cand[0]), cand[1]
        if level not in tau_by_level:
            raise InvalidInputError(f"no threshold for level {level.value}")
        if score >= tau_by_level[level]:
            selected.append(cand)
    return selected
