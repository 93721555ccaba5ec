"""Split-conformal closed forms: one-sided bounds, regression intervals,
classification sets, and stratified (Mondrian) p-values.

All thresholds are empirical quantiles of calibration scores at level
(1 - alpha)(1 + 1/n), equivalently the ceil((1 - alpha)(n + 1))-th smallest
score, with +inf when the rank overshoots n.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Sequence

import numpy as np

from .core import (
    CalibrationSet,
    Category,
    DomainError,
    LabeledSample,
    LevelLike,
    Real,
    ScoreBag,
    ScoreEvaluationError,
    exact_level,
)
from .engine import Interval, LabelSet, PValueResult, ScoreFunction

__all__ = [
    "RegressionModels",
    "Classifier",
    "one_sided_upper_bound",
    "mean_residual_interval",
    "cqr_interval",
    "classification_threshold_set",
    "cumulative_probability_set",
    "mondrian_p",
]

_PROB_RENORM_TOL = 1e-6


@dataclass(frozen=True)
class RegressionModels:
    """Fitted regression callbacks, each mapping a feature vector to a real.

    Only the callbacks a given construction needs must be present.
    ``concurrent_safe`` declares whether the callbacks may be invoked from
    several threads at once.
    """

    mean_hat: Callable | None = None
    q_lo_hat: Callable | None = None
    q_hi_hat: Callable | None = None
    concurrent_safe: bool = True


@dataclass(frozen=True)
class Classifier:
    """A fitted classifier callback mapping features to k probabilities."""

    pi_hat: Callable
    concurrent_safe: bool = True

    def probabilities(self, features: Sequence[float]) -> np.ndarray:
        try:
            raw = np.asarray(self.pi_hat(features), dtype=np.float64)
        except Exception as exc:
            raise ScoreEvaluationError(f"pi_hat callback failed: {exc}") from exc
        if raw.ndim != 1 or raw.size < 1:
            raise DomainError("pi_hat must return a probability vector")
        if np.any(~np.isfinite(raw)) or np.any(raw < 0):
            raise DomainError("pi_hat returned negative or non-finite mass")
        total = float(raw.sum())
        if abs(total - 1.0) > _PROB_RENORM_TOL:
            raise DomainError(f"pi_hat output sums to {total}, not 1")
        return raw / total


def _call_model(fn: Callable, features: Sequence[float], name: str) -> float:
    try:
        value = float(fn(features))
    except Exception as exc:
        raise ScoreEvaluationError(f"{name} callback failed: {exc}") from exc
    if math.isnan(value):
        raise DomainError(f"{name} returned NaN")
    return value


def _conformal_rank(alpha: LevelLike, n: int) -> tuple[int, Fraction]:
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    return math.ceil((1 - level) * (n + 1)), level


def one_sided_upper_bound(y_values: ScoreBag, alpha: LevelLike) -> float:
    """The ceil((1 - alpha)(n + 1))-th smallest of the calibration outcomes
    augmented with +inf; covers a fresh exchangeable draw with probability at
    least 1 - alpha."""
    rank, _ = _conformal_rank(alpha, y_values.n)
    if rank > y_values.n:
        return math.inf
    return float(y_values.sorted_values[rank - 1])


def _real_outcome_values(calib: CalibrationSet) -> list[float]:
    values = []
    for s in calib.samples:
        if not isinstance(s.outcome, Real):
            raise DomainError("regression constructions need real outcomes")
        values.append(s.outcome.value)
    return values


def mean_residual_interval(
    models: RegressionModels,
    calib: CalibrationSet,
    test_features: Sequence[float],
    alpha: LevelLike,
) -> Interval:
    """Symmetric interval mean_hat(x) +/- q, where q is the conformal
    quantile of the absolute calibration residuals."""
    if models.mean_hat is None:
        raise DomainError("mean_residual_interval requires mean_hat")
    ys = _real_outcome_values(calib)
    residuals = [
        abs(y - _call_model(models.mean_hat, s.features, "mean_hat"))
        for s, y in zip(calib.samples, ys)
    ]
    rank, level = _conformal_rank(alpha, calib.n)
    if rank > calib.n:
        half = math.inf
    else:
        half = ScoreBag.of(residuals).sorted_values[rank - 1]
    center = _call_model(models.mean_hat, test_features, "mean_hat")
    return Interval(center - half, center + half, float(level))


def cqr_interval(
    models: RegressionModels,
    calib: CalibrationSet,
    test_features: Sequence[float],
    alpha: LevelLike,
) -> Interval:
    """Conformalized quantile regression: expand (or shrink, when the
    adjustment is negative) the fitted quantile band by the conformal
    quantile of max(q_lo - Y, Y - q_hi)."""
    if models.q_lo_hat is None or models.q_hi_hat is None:
        raise DomainError("cqr_interval requires q_lo_hat and q_hi_hat")
    ys = _real_outcome_values(calib)
    crossings = 0
    scores = []
    for s, y in zip(calib.samples, ys):
        lo = _call_model(models.q_lo_hat, s.features, "q_lo_hat")
        hi = _call_model(models.q_hi_hat, s.features, "q_hi_hat")
        if lo > hi:
            crossings += 1
        scores.append(max(lo - y, y - hi))
    rank, level = _conformal_rank(alpha, calib.n)
    tau = math.inf if rank > calib.n else float(ScoreBag.of(scores).sorted_values[rank - 1])
    lo = _call_model(models.q_lo_hat, test_features, "q_lo_hat")
    hi = _call_model(models.q_hi_hat, test_features, "q_hi_hat")
    if lo > hi:
        crossings += 1
    if crossings:
        warnings.warn(
            f"q_lo_hat exceeded q_hi_hat at {crossings} point(s)", stacklevel=2
        )
    if math.isinf(tau):
        return Interval(-math.inf, math.inf, float(level))
    return Interval(lo - tau, hi + tau, float(level))


def _classifier_setup(
    calib: CalibrationSet, clf: Classifier, test_features: Sequence[float]
) -> tuple[np.ndarray, list[np.ndarray], list[int], int]:
    pi_test = clf.probabilities(test_features)
    k = pi_test.size
    pi_cal = []
    labels = []
    for s in calib.samples:
        if not isinstance(s.outcome, Category):
            raise DomainError("classification constructions need categorical outcomes")
        if s.outcome.k != k:
            raise DomainError("calibration outcome k differs from classifier output")
        pi = clf.probabilities(s.features)
        if pi.size != k:
            raise DomainError("pi_hat output length varies across points")
        pi_cal.append(pi)
        labels.append(s.outcome.label)
    return pi_test, pi_cal, labels, k


def classification_threshold_set(
    clf: Classifier,
    calib: CalibrationSet,
    test_features: Sequence[float],
    alpha: LevelLike,
) -> LabelSet:
    """Labels whose predicted probability clears the conformal threshold
    calibrated on scores -pi_hat_{Y_i}(X_i)."""
    pi_test, pi_cal, labels, k = _classifier_setup(calib, clf, test_features)
    scores = [-pi[lab - 1] for pi, lab in zip(pi_cal, labels)]
    rank, level = _conformal_rank(alpha, calib.n)
    tau = math.inf if rank > calib.n else float(ScoreBag.of(scores).sorted_values[rank - 1])
    kept = frozenset(y for y in range(1, k + 1) if -pi_test[y - 1] <= tau)
    return LabelSet(labels=kept, k=k, alpha=float(level))


def _cumulative_scores(pi: np.ndarray) -> np.ndarray:
    # score[y] = mass of labels ranked at or before y when sorted by
    # decreasing probability, ties broken by label index.
    order = np.argsort(-pi, kind="stable")
    cum = np.cumsum(pi[order])
    out = np.empty(pi.size, dtype=np.float64)
    out[order] = cum
    return out


def cumulative_probability_set(
    clf: Classifier,
    calib: CalibrationSet,
    test_features: Sequence[float],
    alpha: LevelLike,
    randomize: bool = False,
    seed: int = 0,
) -> LabelSet:
    """Labels kept by the cumulative-probability construction.

    The nonconformity of (x, y) is the probability mass of labels at least
    as likely as y under pi_hat(x); with ``randomize`` the mass of y itself
    is discounted by an independent uniform, one shared draw per test point.
    Calibration points use their stored tiebreak_u when present, otherwise
    seeded draws; everything is deterministic given the seed.
    """
    pi_test, pi_cal, labels, k = _classifier_setup(calib, clf, test_features)
    rng = np.random.default_rng(seed)
    draws = rng.random(calib.n + 1)
    scores = []
    for i, (pi, lab) in enumerate(zip(pi_cal, labels)):
        s = _cumulative_scores(pi)[lab - 1]
        if randomize:
            u = calib.samples[i].tiebreak_u
            if u is None:
                u = draws[i]
            s -= u * pi[lab - 1]
        scores.append(s)
    rank, level = _conformal_rank(alpha, calib.n)
    tau = math.inf if rank > calib.n else float(ScoreBag.of(scores).sorted_values[rank - 1])
    test_scores = _cumulative_scores(pi_test)
    if randomize:
        test_scores = test_scores - draws[calib.n] * pi_test
    kept = frozenset(y for y in range(1, k + 1) if test_scores[y - 1] <= tau)
    return LabelSet(labels=kept, k=k, alpha=float(level))


def mondrian_p(
    candidate_y,
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
    stratum_of: Callable[[Sequence[float], object], Hashable],
) -> PValueResult:
    """Conformal p-value with the ranking restricted to the test stratum.

    Full-mode scores still see the whole hypothesized dataset; only the
    comparison set shrinks. An empty stratum yields p = 1/1.
    """
    test = LabeledSample(tuple(test_features), candidate_y)
    bag = calib.samples + (test,) if score.mode == "full" else None
    target = stratum_of(test.features, candidate_y)
    s_test = score.evaluate(test.features, candidate_y, bag)
    rank_count = 0
    stratum_n = 0
    for s in calib.samples:
        if stratum_of(s.features, s.outcome) != target:
            continue
        stratum_n += 1
        if s_test <= score.evaluate(s.features, s.outcome, bag):
            rank_count += 1
    return PValueResult(rank_count=rank_count, n=stratum_n)
