"""Conformal p-values and prediction sets by p-value inversion.

The p-value of a candidate outcome y against calibration data Z_1..Z_n is

    p(y) = (1 + #{i : s(test) <= s(Z_i)}) / (n + 1)

with every score evaluated on the hypothesized dataset D(y) = {Z_1..Z_n,
(x_test, y)}. Ties are counted by the conservative <= rule, which preserves
validity but gives up exact uniformity; callers who need it back can jitter
scores with ``add_tiebreak_noise``. P-values are stored as exact rationals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .core import (
    CalibrationSet,
    DomainError,
    LabeledSample,
    LevelLike,
    Outcome,
    ScoreBag,
    ScoreEvaluationError,
    exact_level,
)

__all__ = [
    "ScoreFunction",
    "PValueResult",
    "Interval",
    "LabelSet",
    "FiniteSet",
    "RandomizedSet",
    "PredictionSet",
    "conformal_p",
    "prediction_set_by_inversion",
    "add_tiebreak_noise",
]


@dataclass(frozen=True)
class ScoreFunction:
    """A nonconformity score in one of two modes.

    Split mode wraps ``fn(features, outcome) -> float``: the score of a point
    does not depend on the rest of the data. Full mode wraps
    ``fn(features, outcome, bag) -> float`` where ``bag`` is the hypothesized
    dataset (a tuple of LabeledSample including the test point); the score
    must depend on ``bag`` only through its unordered contents.
    """

    mode: str
    fn: Callable

    @classmethod
    def split(cls, fn: Callable[[Sequence[float], Outcome], float]) -> "ScoreFunction":
        return cls("split", fn)

    @classmethod
    def full(
        cls, fn: Callable[[Sequence[float], Outcome, tuple], float]
    ) -> "ScoreFunction":
        return cls("full", fn)

    def __post_init__(self) -> None:
        if self.mode not in ("split", "full"):
            raise DomainError(f"unknown score mode {self.mode!r}")

    def evaluate(
        self,
        features: Sequence[float],
        outcome: Outcome,
        bag: tuple[LabeledSample, ...] | None = None,
    ) -> float:
        try:
            if self.mode == "split":
                raw = self.fn(features, outcome)
            else:
                if bag is None:
                    raise DomainError("full-mode score requires the hypothesized bag")
                raw = self.fn(features, outcome, bag)
        except (DomainError, ScoreEvaluationError):
            raise
        except Exception as exc:
            raise ScoreEvaluationError(f"score callback failed: {exc}") from exc
        value = float(raw)
        if math.isnan(value):
            raise DomainError("score callback returned NaN")
        return value


@dataclass(frozen=True)
class PValueResult:
    """A conformal p-value (1 + rank_count) / (n + 1), kept as an exact
    rational via the integer pair."""

    rank_count: int
    n: int

    def __post_init__(self) -> None:
        # n = 0 is reachable only through an empty stratum, where p = 1/1.
        if self.n < 0:
            raise DomainError("p-value requires n >= 0")
        if not 0 <= self.rank_count <= self.n:
            raise DomainError("rank count outside [0, n]")

    @property
    def p(self) -> Fraction:
        return Fraction(1 + self.rank_count, self.n + 1)


@dataclass(frozen=True)
class Interval:
    """A prediction interval with extended-real endpoints. ``lower > upper``
    marks an explicitly empty set; the raw endpoints are kept for audit."""

    lower: float
    upper: float
    alpha: float

    @property
    def is_empty(self) -> bool:
        return self.lower > self.upper

    @property
    def width(self) -> float:
        if self.is_empty:
            return 0.0
        return self.upper - self.lower

    def __contains__(self, y: float) -> bool:
        return not self.is_empty and self.lower <= float(y) <= self.upper


@dataclass(frozen=True)
class LabelSet:
    """A subset of the labels {1, ..., k}."""

    labels: frozenset[int]
    k: int
    alpha: float

    def __post_init__(self) -> None:
        labels = frozenset(int(v) for v in self.labels)
        if any(not 1 <= lab <= self.k for lab in labels):
            raise DomainError("label outside [1, k]")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: int) -> bool:
        return int(label) in self.labels


@dataclass(frozen=True)
class FiniteSet:
    """The accepted members of a finite candidate list."""

    members: tuple[Outcome, ...]
    alpha: float
    diagnostics: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, outcome: Outcome) -> bool:
        return outcome in self.members


@dataclass(frozen=True)
class RandomizedSet:
    """The trivial randomized set: the full outcome space or nothing."""

    full: bool
    alpha: float

    def __contains__(self, _y) -> bool:
        return self.full


PredictionSet = Union[Interval, LabelSet, FiniteSet, RandomizedSet]


def _hypothesized_scores(
    candidate_y: Outcome,
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
) -> tuple[float, np.ndarray]:
    """Score of the test point and of each calibration point under D(y)."""
    test = LabeledSample(tuple(test_features), candidate_y)
    bag = calib.samples + (test,) if score.mode == "full" else None
    s_test = score.evaluate(test.features, candidate_y, bag)
    s_cal = np.fromiter(
        (score.evaluate(s.features, s.outcome, bag) for s in calib.samples),
        dtype=np.float64,
        count=calib.n,
    )
    return s_test, s_cal


def conformal_p(
    candidate_y: Outcome,
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
) -> PValueResult:
    """Conformal p-value of a candidate outcome at the test features."""
    s_test, s_cal = _hypothesized_scores(candidate_y, calib, test_features, score)
    rank_count = int(np.count_nonzero(s_test <= s_cal))
    return PValueResult(rank_count=rank_count, n=calib.n)


def prediction_set_by_inversion(
    candidates: Iterable[Outcome],
    calib: CalibrationSet,
    test_features: Sequence[float],
    score: ScoreFunction,
    alpha: LevelLike,
) -> FiniteSet:
    """Keep the candidates whose conformal p-value exceeds alpha.

    Duplicate candidates are evaluated once; the hypothesized dataset D(y)
    is rebuilt only per distinct candidate. Candidate evaluations are
    independent, so the result does not depend on evaluation order.
    """
    cand = tuple(candidates)
    if not cand:
        raise DomainError("empty candidate list")
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    cache: dict[Outcome, Fraction] = {}
    members = []
    for y in cand:
        if y not in cache:
            cache[y] = conformal_p(y, calib, test_features, score).p
        if cache[y] > level and y not in members:
            members.append(y)
    return FiniteSet(members=tuple(members), alpha=float(level))


def add_tiebreak_noise(scores: ScoreBag, epsilon: float, seed: int) -> ScoreBag:
    """Add independent Uniform(0, epsilon) jitter to every score.

    Deterministic given the seed. Meant to restore almost-sure distinctness
    (hence exact super-uniformity) when raw scores carry ties; epsilon should
    be small next to the score resolution the caller cares about.
    """
    eps = float(epsilon)
    if not eps > 0 or not math.isfinite(eps):
        raise DomainError("epsilon must be positive and finite")
    rng = np.random.default_rng(seed)
    return ScoreBag(scores.values + eps * rng.random(scores.n))
