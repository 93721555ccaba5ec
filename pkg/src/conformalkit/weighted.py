"""Weighted conformal prediction for non-exchangeable data.

Given a joint density f for (Z_1, ..., Z_{n+1}), the weight of index i is
the fraction of permutation mass that puts Z_i in the test slot:

    w_i = sum_{sigma: sigma(n+1) = i} f(z_sigma) / sum_sigma f(z_sigma),

and the weighted p-value of the hypothesized test outcome is the total
weight of indices whose score ties or beats the test score (the test's own
weight always counts, so p >= w_{n+1}). Under covariate shift the weights
collapse to normalized density ratios of the features, which is the path
that scales; the factorial enumeration is kept as a small-n oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .core import (
    CalibrationSet,
    DomainError,
    LabeledSample,
    LevelLike,
    Outcome,
    ScoreEvaluationError,
    exact_level,
)
from .engine import FiniteSet, ScoreFunction, _hypothesized_scores

__all__ = [
    "JointLaw",
    "DensityRatio",
    "WeightVector",
    "permutation_weights_bruteforce",
    "covariate_shift_weights",
    "weighted_p",
    "weighted_prediction_set",
]

_BRUTEFORCE_LIMIT = 9  # (n+1)! growth; beyond this use covariate_shift_weights

_SUM_DUST = 1e-9
_SUM_BUG = 1e-6


@dataclass(frozen=True)
class JointLaw:
    """A joint density for n+1 samples, supplied in log space.

    ``log_f`` maps a sequence of n+1 LabeledSample to log f(z_1, ..., z_{n+1});
    -inf encodes zero density.
    """

    log_f: Callable[[Sequence[LabeledSample]], float]


@dataclass(frozen=True)
class DensityRatio:
    """The covariate-shift likelihood ratio dQ/dP evaluated at a feature
    vector; any positive rescaling yields the same weights."""

    ratio: Callable[[Sequence[float]], float]


@dataclass(frozen=True)
class WeightVector:
    """Normalized nonnegative weights over the n+1 sample positions.

    ``raw`` keeps the pre-normalization values: weighted p-values are formed
    as ratios of raw sums, so exactly uniform raw weights reproduce the
    classical rational p-value bit for bit.
    """

    weights: np.ndarray
    raw: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).copy()
        r = np.asarray(self.raw, dtype=np.float64).copy()
        if w.ndim != 1 or w.size < 2 or r.shape != w.shape:
            raise DomainError("weights must be a vector over n+1 >= 2 positions")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > _SUM_DUST:
            raise DomainError(f"weights sum to {float(w.sum())}, not 1")
        w.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "raw", r)

    @classmethod
    def from_raw(cls, raw: Iterable[float]) -> "WeightVector":
        r = np.asarray(list(raw), dtype=np.float64)
        if r.ndim != 1 or r.size < 2:
            raise DomainError("weights must be a vector over n+1 >= 2 positions")
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise DomainError("raw weights must be finite and nonnegative")
        total = float(r.sum())
        if total <= 0:
            raise DomainError("raw weights sum to zero")
        return cls(weights=r / total, raw=r)

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "WeightVector":
        w = np.asarray(list(weights), dtype=np.float64)
        total = float(w.sum())
        if abs(total - 1.0) > _SUM_BUG:
            raise DomainError(f"weights sum to {total}; caller bug, not float dust")
        return cls(weights=w / total, raw=w)

    @classmethod
    def uniform(cls, m: int) -> "WeightVector":
        return cls.from_raw(np.ones(int(m)))

    @property
    def n_plus_one(self) -> int:
        return int(self.weights.size)


def permutation_weights_bruteforce(
    law: JointLaw, z: Sequence[LabeledSample]
) -> WeightVector:
    """Exact permutation weights by factorial enumeration (n+1 <= 9).

    Accumulated in log space with max subtraction, grouped by which sample
    lands in the test slot.
    """
    samples = tuple(z)
    m = len(samples)
    if m < 2:
        raise DomainError("need at least two samples")
    if m > _BRUTEFORCE_LIMIT:
        raise DomainError(
            f"{m}! permutations is past the brute-force limit "
            f"({_BRUTEFORCE_LIMIT}); use covariate_shift_weights"
        )
    logs = []
    last = []
    for perm in permutations(range(m)):
        try:
            lf = float(law.log_f([samples[i] for i in perm]))
        except Exception as exc:
            raise ScoreEvaluationError(f"log_f callback failed: {exc}") from exc
        if math.isnan(lf):
            raise DomainError("log_f returned NaN")
        logs.append(lf)
        last.append(perm[-1])
    logs_arr = np.asarray(logs)
    top = float(logs_arr.max())
    if top == -math.inf:
        raise DomainError("law assigns zero density to every permutation")
    mass = np.exp(logs_arr - top)
    raw = np.bincount(np.asarray(last), weights=mass, minlength=m)
    return WeightVector.from_raw(raw)


def covariate_shift_weights(
    ratio: DensityRatio, features: Sequence[Sequence[float]]
) -> WeightVector:
    """Closed-form weights w_i proportional to ratio(X_i), test point last."""
    values = []
    for x in features:
        try:
            r = float(ratio.ratio(x))
        except Exception as exc:
            raise ScoreEvaluationError(f"ratio callback failed: {exc}") from exc
        if math.isnan(r) or math.isinf(r) or r < 0:
            raise DomainError(f"density ratio {r} must be finite and nonnegative")
        values.append(r)
    if len(values) < 2:
        raise DomainError("need at least two feature vectors")
    if sum(values) <= 0:
        raise DomainError("all density ratios are zero")
    return WeightVector.from_raw(values)


def weighted_p(
    candidate_y: Outcome,
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
    weights: WeightVector,
) -> float:
    """Weighted conformal p-value of the candidate outcome.

    Position n+1 of ``weights`` belongs to the test point, whose self
    comparison always fires.
    """
    if weights.n_plus_one != calib.n + 1:
        raise DomainError("weights length must be n + 1")
    s_test, s_cal = _hypothesized_scores(candidate_y, calib, test_features, score)
    fired = s_test <= s_cal
    raw = weights.raw
    return float((raw[:-1][fired].sum() + raw[-1]) / raw.sum())


def weighted_prediction_set(
    candidates: Iterable[Outcome],
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
    law_or_ratio: Union[JointLaw, DensityRatio],
    alpha: LevelLike,
    clip: float | None = None,
) -> FiniteSet:
    """Invert weighted p-values over a finite candidate list.

    With a DensityRatio the weights depend only on features and are computed
    once; with a JointLaw they are recomputed per candidate through the
    brute-force enumeration (small n only). ``clip`` caps density ratios for
    diagnostics and is flagged in the result; it voids the coverage
    guarantee.
    """
    cand = tuple(candidates)
    if not cand:
        raise DomainError("empty candidate list")
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    alpha_f = float(level)
    diagnostics: tuple[str, ...] = ()

    if isinstance(law_or_ratio, DensityRatio):
        base = law_or_ratio
        if clip is not None:
            cap = float(clip)
            if not cap > 0:
                raise DomainError("clip must be positive")
            inner = base.ratio
            base = DensityRatio(lambda x: min(float(inner(x)), cap))
            diagnostics = (f"ratio-clipped@{cap:g}",)
        feats = [s.features for s in calib.samples] + [tuple(test_features)]
        weights = covariate_shift_weights(base, feats)
        members = []
        for y in cand:
            if y in members:
                continue
            if weighted_p(y, calib, test_features, score, weights) > alpha_f:
                members.append(y)
        return FiniteSet(tuple(members), alpha_f, diagnostics)

    if clip is not None:
        raise DomainError("clip applies only to density-ratio weights")
    members = []
    seen = set()
    for y in cand:
        if y in seen:
            continue
        seen.add(y)
        test = LabeledSample(tuple(test_features), y)
        weights = permutation_weights_bruteforce(
            law_or_ratio, calib.samples + (test,)
        )
        if weighted_p(y, calib, test_features, score, weights) > alpha_f:
            members.append(y)
    return FiniteSet(tuple(members), alpha_f, diagnostics)
