"""Conformal prediction for categorical outcomes with no informative features.

Each observation is a label in {1, ..., k} plus an independent uniform that
breaks ties. The nonconformity score of a point (u, label) against a
hypothesized dataset of size m is

    -(count of label in dataset) / m - (u / 2) / m,

and the resulting conformal p-value has the closed form implemented in
``categorical_p_closed_form``: with n_y the count of the candidate label,
Gamma_j the set of labels observed exactly j times, and I(y) the indices
carrying either the candidate label or a label observed n_y + 1 times,

    p(y) = (1 + sum_{j<=n_y} j*|Gamma_j| - n_y + #{i in I(y): u_test >= u_i})
           / (n + 1).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import Category, DomainError, LevelLike, exact_level
from .engine import LabelSet, PValueResult, ScoreFunction

__all__ = [
    "LabelCounts",
    "PopulationPMF",
    "multinomial_score",
    "multinomial_score_function",
    "categorical_p_closed_form",
    "unseen_label_rule",
    "oracle_set",
]


@dataclass(frozen=True)
class LabelCounts:
    """Occurrence counts of the labels 1..k in an observed sample."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        if not counts:
            raise DomainError("counts must cover at least one label")
        if any(c < 0 for c in counts):
            raise DomainError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, labels: Iterable[int], k: int) -> "LabelCounts":
        counts = [0] * k
        for lab in labels:
            lab = int(lab)
            if not 1 <= lab <= k:
                raise DomainError(f"label {lab} outside [1, {k}]")
            counts[lab - 1] += 1
        return cls(tuple(counts))

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    def gamma_size(self, j: int) -> int:
        """Number of labels observed exactly j times."""
        return sum(1 for c in self.counts if c == j)


@dataclass(frozen=True)
class PopulationPMF:
    """A known probability mass function over the labels 1..k.

    The non-randomized oracle construction assumes distinct probabilities;
    ties are tolerated (broken by label index) with a warning.
    """

    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probabilities)
        if not probs:
            raise DomainError("pmf must cover at least one label")
        if any(not 0.0 <= p <= 1.0 or math.isnan(p) for p in probs):
            raise DomainError("pmf entries must lie in [0, 1]")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise DomainError(f"pmf sums to {math.fsum(probs)}, not 1")
        if len(set(probs)) < len(probs):
            warnings.warn("pmf has tied probabilities; ranking by label index")
        object.__setattr__(self, "probabilities", probs)

    @property
    def k(self) -> int:
        return len(self.probabilities)

    def descending_order(self) -> np.ndarray:
        """Label indices (0-based) sorted by decreasing probability, ties by
        label index."""
        return np.argsort(-np.asarray(self.probabilities), kind="stable")


def multinomial_score(
    label_k: int, u: float, hypothesized_y: int, counts: LabelCounts
) -> float:
    """Score of the point (u, label_k) when the hypothesized dataset is the
    observed counts plus one copy of hypothesized_y."""
    k = counts.k
    if not 1 <= label_k <= k or not 1 <= hypothesized_y <= k:
        raise DomainError("label outside [1, k]")
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"tie-break uniform {u} outside [0, 1]")
    m = counts.n + 1
    c = counts.counts[label_k - 1] + (1 if label_k == hypothesized_y else 0)
    return -(c / m) - (u / 2.0) / m


def multinomial_score_function(k: int) -> ScoreFunction:
    """The score above as a full-mode ScoreFunction for the generic engine.

    The uniform must ride in ``features[0]``; the hypothesized-label bump
    1{label = y} is recovered from the bag itself, since the bag already
    contains the hypothesized test point.
    """

    def fn(features, outcome, bag):
        if not isinstance(outcome, Category):
            raise DomainError("multinomial score needs categorical outcomes")
        m = len(bag)
        c = sum(1 for s in bag if s.outcome.label == outcome.label)
        u = float(features[0])
        return -(c / m) - (u / 2.0) / m

    return ScoreFunction.full(fn)


def categorical_p_closed_form(
    candidate_y: int,
    observed_labels: Sequence[int],
    u_values: Sequence[float],
    u_test: float,
) -> PValueResult:
    """Closed-form conformal p-value numerator for a candidate label."""
    labels = [int(v) for v in observed_labels]
    n = len(labels)
    if n == 0:
        raise DomainError("empty calibration set")
    if len(u_values) != n:
        raise DomainError("u_values length differs from observed_labels")
    us = [float(u) for u in u_values]
    if any(not 0.0 <= u <= 1.0 for u in us + [float(u_test)]):
        raise DomainError("tie-break uniforms must lie in [0, 1]")
    if candidate_y < 1 or any(lab < 1 for lab in labels):
        raise DomainError("labels are 1-based")

    k = max([candidate_y] + labels)
    counts = LabelCounts.from_labels(labels, k)
    n_y = counts.counts[candidate_y - 1]
    cum = sum(j * counts.gamma_size(j) for j in range(1, n_y + 1))
    fired = sum(
        1
        for lab, u in zip(labels, us)
        if (lab == candidate_y or counts.counts[lab - 1] == n_y + 1)
        and float(u_test) >= u
    )
    numerator = 1 + cum - n_y + fired
    return PValueResult(rank_count=numerator - 1, n=n)


def unseen_label_rule(observed_labels: Sequence[int], alpha: LevelLike) -> bool:
    """Whether a never-observed label can still enter the prediction set.

    The p-value of an unseen label is uniform over {1, ..., #singletons + 1}
    divided by n + 1, so membership is possible for some tie-break draw
    exactly when the singleton count reaches floor(alpha * (n + 1)); with
    alpha * (n + 1) < 1 the floor is 0 and unseen labels are never ruled out.
    """
    labels = [int(v) for v in observed_labels]
    if not labels:
        raise DomainError("empty calibration set")
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    k = max(labels)
    counts = LabelCounts.from_labels(labels, k)
    singletons = counts.gamma_size(1)
    return singletons >= math.floor(level * (len(labels) + 1))


def oracle_set(
    pmf: PopulationPMF, alpha: LevelLike, u: float = 0.0, randomized: bool = False
) -> LabelSet:
    """Population-optimal prediction set for a known pmf.

    Non-randomized: the smallest prefix of labels, sorted by decreasing
    probability, whose mass reaches 1 - alpha. Randomized: keep label y iff
    (mass strictly after y in that order) + pi_y * u exceeds alpha, which has
    expected coverage exactly 1 - alpha for any pmf.
    """
    level = exact_level(alpha)
    if not 0 < level < 1:
        raise DomainError(f"alpha {alpha} outside (0, 1)")
    if not 0.0 <= float(u) <= 1.0:
        raise DomainError(f"uniform {u} outside [0, 1]")
    probs = np.asarray(pmf.probabilities)
    order = pmf.descending_order()
    if randomized:
        tail_after = np.concatenate([np.cumsum(probs[order][::-1])[::-1][1:], [0.0]])
        kept = []
        for pos, lab in enumerate(order):
            if tail_after[pos] + probs[lab] * float(u) > float(level):
                kept.append(int(lab) + 1)
        return LabelSet(labels=frozenset(kept), k=pmf.k, alpha=float(level))
    cum = np.cumsum(probs[order])
    target = 1.0 - float(level)
    take = int(np.searchsorted(cum, target, side="left")) + 1
    take = min(take, pmf.k)
    kept = frozenset(int(lab) + 1 for lab in order[:take])
    return LabelSet(labels=kept, k=pmf.k, alpha=float(level))
