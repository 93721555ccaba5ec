"""Core data model: outcomes, labeled samples, score bags, empirical quantiles.

Probability levels (miscoverage levels, quantile levels) are interpreted as
exact rationals so that rank arithmetic like ``ceil((1 - alpha) * (n + 1))``
never trips over binary float representation: a level entered as ``0.1``
means exactly 1/10.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "DomainError",
    "ScoreEvaluationError",
    "NumericalError",
    "InputError",
    "exact_level",
    "Real",
    "Category",
    "Outcome",
    "LabeledSample",
    "CalibrationSet",
    "ScoreBag",
    "empirical_quantile",
    "order_statistic",
]


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ScoreEvaluationError(RuntimeError):
    """A user-supplied score or model callback raised during evaluation."""


class NumericalError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


class InputError(ValueError):
    """Malformed external input (files, tables, configuration)."""


LevelLike = Union[float, Fraction]

# Levels are snapped to the nearest rational with denominator <= 1e9, which
# recovers the decimal a caller typed (0.1 -> 1/10) without altering any
# level specified to fewer than 10 decimal places.
_MAX_LEVEL_DENOMINATOR = 10**9


def exact_level(level: LevelLike) -> Fraction:
    """Return the exact rational value of a probability level.

    Fractions pass through unchanged; floats are snapped to the closest
    rational with denominator at most 1e9. Snapping is skipped when it would
    collapse a strictly interior level onto 0 or 1.
    """
    if isinstance(level, Fraction):
        return level
    if isinstance(level, float) and math.isnan(level):
        raise DomainError("level must not be NaN")
    exact = Fraction(level)
    snapped = exact.limit_denominator(_MAX_LEVEL_DENOMINATOR)
    if snapped != exact and 0 < exact < 1 and not 0 < snapped < 1:
        return exact
    return snapped


@dataclass(frozen=True)
class Real:
    """A real-valued outcome."""

    value: float

    def __post_init__(self) -> None:
        v = float(self.value)
        if math.isnan(v):
            raise DomainError("real outcome must not be NaN")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Category:
    """A categorical outcome: a label in {1, ..., k}."""

    label: int
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DomainError("number of classes k must be >= 1")
        if not 1 <= self.label <= self.k:
            raise DomainError(f"label {self.label} outside [1, {self.k}]")


Outcome = Union[Real, Category]


@dataclass(frozen=True)
class LabeledSample:
    """One observation: a feature vector (possibly empty), an outcome, and an
    optional uniform tie-break variable in [0, 1]."""

    features: tuple[float, ...]
    outcome: Outcome
    tiebreak_u: float | None = None

    def __post_init__(self) -> None:
        feats = tuple(float(v) for v in self.features)
        if any(math.isnan(v) for v in feats):
            raise DomainError("features must not contain NaN")
        object.__setattr__(self, "features", feats)
        if self.tiebreak_u is not None:
            u = float(self.tiebreak_u)
            if not 0.0 <= u <= 1.0:
                raise DomainError(f"tiebreak_u {u} outside [0, 1]")
            object.__setattr__(self, "tiebreak_u", u)


@dataclass(frozen=True)
class CalibrationSet:
    """A nonempty collection of labeled samples, treated as exchangeable."""

    samples: tuple[LabeledSample, ...]

    def __post_init__(self) -> None:
        samples = tuple(self.samples)
        if not samples:
            raise DomainError("empty calibration set")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return len(self.samples)

    @classmethod
    def from_reals(
        cls,
        y_values: Iterable[float],
        features: Sequence[Sequence[float]] | None = None,
    ) -> "CalibrationSet":
        ys = [float(v) for v in y_values]
        if features is None:
            return cls(tuple(LabeledSample((), Real(y)) for y in ys))
        feats = [tuple(row) for row in features]
        if len(feats) != len(ys):
            raise DomainError("features and y_values length mismatch")
        return cls(tuple(LabeledSample(f, Real(y)) for f, y in zip(feats, ys)))

    @classmethod
    def from_labels(
        cls,
        labels: Iterable[int],
        k: int,
        u_values: Iterable[float] | None = None,
    ) -> "CalibrationSet":
        labs = [int(v) for v in labels]
        if u_values is None:
            return cls(tuple(LabeledSample((), Category(lab, k)) for lab in labs))
        us = [float(u) for u in u_values]
        if len(us) != len(labs):
            raise DomainError("labels and u_values length mismatch")
        # The uniform rides both as the single feature and as tiebreak_u so
        # score callbacks can reach it through the (features, outcome) slot.
        return cls(
            tuple(
                LabeledSample((u,), Category(lab, k), tiebreak_u=u)
                for lab, u in zip(labs, us)
            )
        )


@dataclass(frozen=True)
class ScoreBag:
    """A multiset of finite nonconformity scores."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64).copy()
        if arr.ndim != 1:
            raise DomainError("scores must form a one-dimensional collection")
        if arr.size == 0:
            raise DomainError("empty score bag")
        if not np.all(np.isfinite(arr)):
            raise DomainError("scores must be finite (no NaN or infinities)")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def of(cls, values: Iterable[float]) -> "ScoreBag":
        return cls(np.fromiter((float(v) for v in values), dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @cached_property
    def sorted_values(self) -> np.ndarray:
        arr = np.sort(self.values)
        arr.flags.writeable = False
        return arr


def empirical_quantile(values: ScoreBag, tau: LevelLike) -> float:
    """Left-continuous empirical quantile: the smallest u with P_hat(u) >= tau.

    For tau in (0, 1] this is the ceil(tau * n)-th smallest score; tau = 0
    returns the minimum; tau > 1 returns +inf (no finite score qualifies).
    """
    level = exact_level(tau)
    if level < 0:
        raise DomainError(f"quantile level {tau} is negative")
    if level > 1:
        return math.inf
    n = values.n
    if level == 0:
        return float(values.sorted_values[0])
    rank = math.ceil(level * n)
    return float(values.sorted_values[rank - 1])


def order_statistic(values: ScoreBag, k: int) -> float:
    """The k-th smallest score, counting multiplicity (1-based)."""
    if not 1 <= k <= values.n:
        raise DomainError(f"order statistic rank {k} outside [1, {values.n}]")
    return float(values.sorted_values[k - 1])
