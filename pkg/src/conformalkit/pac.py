"""Tolerance thresholds and PAC-style calibration of their coverage.

Discarding the r largest of n calibration scores and thresholding at the
(n - r)-th order statistic covers a fresh point with random probability
theta_r; with i.i.d. continuous scores theta_r ~ Beta(n - r, r + 1), so
P[theta_r >= 1 - alpha] = I_alpha(r + 1, n - r) and r can be chosen either
for marginal coverage or to a PAC target P[theta_r >= 1 - alpha] >= 1 - delta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from . import _kernels
from .core import DomainError, LevelLike, NumericalError, ScoreBag, exact_level

__all__ = [
    "PacTarget",
    "ToleranceThreshold",
    "RSelection",
    "tolerance_threshold",
    "regularized_incomplete_beta",
    "select_r_marginal",
    "select_r_pac",
    "coverage_fluctuation_sd",
]


@dataclass(frozen=True)
class PacTarget:
    """Require coverage >= 1 - alpha with probability >= 1 - delta over the
    draw of the calibration set."""

    alpha: float
    delta: float

    def __post_init__(self) -> None:
        a = exact_level(self.alpha)
        d = exact_level(self.delta)
        if not 0 < a < 1:
            raise DomainError(f"alpha {self.alpha} outside (0, 1)")
        if not 0 < d < 1:
            raise DomainError(f"delta {self.delta} outside (0, 1)")


@dataclass(frozen=True)
class ToleranceThreshold:
    """A threshold S_(n-r): scores at or below it are accepted."""

    r: int
    threshold: float
    n: int


@dataclass(frozen=True)
class RSelection:
    """A choice of r, or infeasibility when no r meets the target.

    ``confidence`` carries the achieved I_alpha(r + 1, n - r) for PAC
    selections and is None for marginal ones.
    """

    r: Optional[int]
    infeasible: bool
    n: int
    confidence: Optional[float] = None


def tolerance_threshold(scores: ScoreBag, r: int) -> ToleranceThreshold:
    """Threshold at the (n - r)-th smallest score, discarding the top r."""
    n = scores.n
    if not 0 <= r <= n - 1:
        raise DomainError(f"r {r} outside [0, n - 1]")
    return ToleranceThreshold(
        r=r, threshold=float(scores.sorted_values[n - r - 1]), n=n
    )


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) to about 1e-12 absolute accuracy.

    Continued-fraction evaluation (modified Lentz) with the symmetry switch
    at x = a / (a + b); a 500-iteration cap turns non-convergence into a
    NumericalError rather than a silent bad value.
    """
    x = float(x)
    a = float(a)
    b = float(b)
    if math.isnan(x) or not 0.0 <= x <= 1.0:
        raise DomainError(f"x {x} outside [0, 1]")
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise DomainError("shape parameters must be positive and finite")
    value = _kernels.betainc(x, a, b)
    if math.isnan(value):
        raise NumericalError(
            f"incomplete beta failed to converge at x={x}, a={a}, b={b}"
        )
    return min(max(value, 0.0), 1.0)


def select_r_marginal(n: int, alpha: LevelLike) -> RSelection:
    """r = n - ceil((1 - alpha)(n + 1)): the largest discard count whose
    threshold still matches the one-sided conformal bound."""
    if n < 1:
        raise DomainError("n must be >= 1")
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    rank = math.ceil((1 - level) * (n + 1))
    if rank > n:
        return RSelection(r=None, infeasible=True, n=n)
    return RSelection(r=n - rank, infeasible=False, n=n)


def select_r_pac(n: int, target: PacTarget) -> RSelection:
    """Largest r with I_alpha(r + 1, n - r) >= 1 - delta, scanning downward;
    infeasible when even r = 0 misses the target."""
    if n < 1:
        raise DomainError("n must be >= 1")
    alpha = float(exact_level(target.alpha))
    floor_conf = 1.0 - float(exact_level(target.delta))
    for r in range(n - 1, -1, -1):
        conf = regularized_incomplete_beta(alpha, r + 1, n - r)
        if conf >= floor_conf:
            return RSelection(r=r, infeasible=False, n=n, confidence=conf)
    return RSelection(r=None, infeasible=True, n=n)


def coverage_fluctuation_sd(n: int, alpha: LevelLike) -> float:
    """Rule-of-thumb spread of the random coverage: sqrt(alpha(1-alpha)/n)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    level = float(exact_level(alpha))
    if not 0 <= level <= 1:
        raise DomainError(f"alpha {alpha} outside [0, 1]")
    return math.sqrt(level * (1.0 - level) / n)
