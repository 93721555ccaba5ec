"""Conformal outlier p-values and Benjamini-Hochberg batch screening.

Each test point gets p = (1 + #{reference scores >= its score}) / (n + 1);
sharing one reference set makes the p-values positively dependent in the
PRDS sense, so BH keeps false discovery rate <= q.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .core import (
    CalibrationSet,
    DomainError,
    LabeledSample,
    LevelLike,
    exact_level,
)
from .engine import PValueResult, ScoreFunction

__all__ = [
    "OutlierBatch",
    "BhResult",
    "outlier_p",
    "bh_procedure",
    "screen_batch",
    "screen_scores",
]

PValueLike = Union[Fraction, float]


@dataclass(frozen=True)
class OutlierBatch:
    """A shared reference sample plus a batch of test points."""

    reference: CalibrationSet
    tests: tuple[LabeledSample, ...]

    def __post_init__(self) -> None:
        tests = tuple(self.tests)
        if not tests:
            raise DomainError("empty test batch")
        object.__setattr__(self, "tests", tests)

    @property
    def m(self) -> int:
        return len(self.tests)


@dataclass(frozen=True)
class BhResult:
    """Step-up outcome: rejected test indices (0-based) and the p-values."""

    rejected: frozenset[int]
    q: float
    pvalues: tuple[PValueLike, ...]

    @property
    def k_star(self) -> int:
        """Number of rejections (the step-up crossing index)."""
        return len(self.rejected)


def outlier_p(
    test: LabeledSample, reference: CalibrationSet, score: ScoreFunction
) -> PValueResult:
    """Conformal outlier p-value of one test point against the reference."""
    bag = reference.samples + (test,) if score.mode == "full" else None
    s_test = score.evaluate(test.features, test.outcome, bag)
    rank_count = sum(
        1
        for s in reference.samples
        if s_test <= score.evaluate(s.features, s.outcome, bag)
    )
    return PValueResult(rank_count=rank_count, n=reference.n)


def bh_procedure(pvalues: Sequence[PValueLike], q: LevelLike) -> BhResult:
    """Benjamini-Hochberg step-up at level q.

    Rejects every p-value at or below the largest p_(k) with
    p_(k) <= k q / m; exact comparisons when the inputs are rationals.
    """
    raw = tuple(pvalues)
    m = len(raw)
    if m == 0:
        raise DomainError("empty p-value list")
    for p in raw:
        if not 0 <= p <= 1:
            raise DomainError(f"p-value {p} outside [0, 1]")
    # snap float p-values to short rationals so the inclusive step-up
    # comparison is exact at decimal boundaries like p = q
    ps = tuple(exact_level(p) for p in raw)
    level = exact_level(q)
    if not 0 < level < 1:
        raise DomainError(f"q {q} outside (0, 1)")
    order = sorted(range(m), key=lambda i: ps[i])
    threshold = None
    for pos in range(m - 1, -1, -1):
        if ps[order[pos]] <= Fraction(pos + 1, m) * level:
            threshold = ps[order[pos]]
            break
    if threshold is None:
        return BhResult(rejected=frozenset(), q=float(level), pvalues=ps)
    rejected = frozenset(i for i in range(m) if ps[i] <= threshold)
    return BhResult(rejected=rejected, q=float(level), pvalues=ps)


def screen_scores(
    reference_scores: Sequence[float],
    test_scores: Sequence[float],
    q: LevelLike,
) -> BhResult:
    """BH screening from precomputed split scores.

    The reference scores are sorted once; each test score is placed by
    binary search, so a batch costs O((n + m) log n).
    """
    ref = np.sort(np.asarray(reference_scores, dtype=np.float64))
    if ref.size == 0:
        raise DomainError("empty reference sample")
    if np.any(~np.isfinite(ref)):
        raise DomainError("reference scores must be finite")
    tests = np.asarray(test_scores, dtype=np.float64)
    if np.any(np.isnan(tests)):
        raise DomainError("test scores must not be NaN")
    n = int(ref.size)
    below = np.searchsorted(ref, tests, side="left")
    pvalues = tuple(Fraction(1 + n - int(b), n + 1) for b in below)
    return bh_procedure(pvalues, q)


def screen_batch(batch: OutlierBatch, score: ScoreFunction, q: LevelLike) -> BhResult:
    """BH screening of a batch against a shared reference.

    Split-mode scores use the sorted-reference fast path. Full-mode scores
    legitimately change with each augmented bag, so they fall back to the
    per-test computation.
    """
    if score.mode == "split":
        ref_scores = [
            score.evaluate(s.features, s.outcome) for s in batch.reference.samples
        ]
        test_scores = [score.evaluate(t.features, t.outcome) for t in batch.tests]
        return screen_scores(ref_scores, test_scores, q)
    pvalues = tuple(outlier_p(t, batch.reference, score).p for t in batch.tests)
    return bh_procedure(pvalues, q)
