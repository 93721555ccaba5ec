"""Closed-form categorical p-values, the unseen-label rule, and oracle sets."""

import warnings
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from conformalkit import (
    CalibrationSet,
    DomainError,
    LabelCounts,
    PopulationPMF,
    categorical_p_closed_form,
    conformal_p,
    multinomial_score,
    multinomial_score_function,
    oracle_set,
    unseen_label_rule,
)
from conformalkit.core import Category


# ---------------------------------------------------------------- score

def test_multinomial_score_frozen_values():
    counts = LabelCounts((2, 0))
    # observed label seen twice, candidate is the other label, u = 0
    assert multinomial_score(1, 0.0, 2, counts) == pytest.approx(-2 / 3)
    # unseen label that is not the candidate scores 0 at u = 0
    assert multinomial_score(2, 0.0, 1, counts) == 0.0
    # unseen label that IS the candidate picks up the +1 bump
    assert multinomial_score(2, 0.0, 2, counts) == pytest.approx(-1 / 3)


def test_multinomial_score_u_shift():
    counts = LabelCounts((1, 1))
    base = multinomial_score(1, 0.0, 2, counts)
    bumped = multinomial_score(1, 1.0, 2, counts)
    # the tie-break term moves the score by (u/2)/(n+1)
    assert bumped == pytest.approx(base - 0.5 / 3)


def test_multinomial_score_validation():
    counts = LabelCounts((1, 1))
    with pytest.raises(DomainError):
        multinomial_score(3, 0.0, 1, counts)
    with pytest.raises(DomainError):
        multinomial_score(1, 1.5, 1, counts)
    with pytest.raises(DomainError):
        multinomial_score(1, 0.0, 0, counts)


def test_label_counts_helpers():
    counts = LabelCounts.from_labels([1, 1, 2, 3], k=4)
    assert counts.counts == (2, 1, 1, 0)
    assert counts.n == 4
    assert counts.k == 4
    assert counts.gamma_size(1) == 2
    assert counts.gamma_size(2) == 1
    assert counts.gamma_size(3) == 0
    with pytest.raises(DomainError):
        LabelCounts.from_labels([5], k=4)
    with pytest.raises(DomainError):
        LabelCounts(())


# ---------------------------------------------------------------- closed form

def test_closed_form_frozen_unseen_candidate():
    # two observations of label 1, candidate 2: p = 1/3 whatever the uniforms
    for u_test in (0.0, 0.37, 1.0):
        res = categorical_p_closed_form(2, (1, 1), (0.5, 0.5), u_test)
        assert res.p == Fraction(1, 3)


def test_closed_form_frozen_tiebreak_sweep():
    labels = (1, 1, 1)
    us = (0.2, 0.5, 0.8)
    assert categorical_p_closed_form(1, labels, us, 0.1).p == Fraction(1, 4)
    assert categorical_p_closed_form(1, labels, us, 0.9).p == Fraction(4, 4)
    # each crossed calibration uniform adds one count
    assert categorical_p_closed_form(1, labels, us, 0.3).p == Fraction(2, 4)
    assert categorical_p_closed_form(1, labels, us, 0.6).p == Fraction(3, 4)


def test_closed_form_validation():
    with pytest.raises(DomainError):
        categorical_p_closed_form(1, (), (), 0.5)
    with pytest.raises(DomainError):
        categorical_p_closed_form(1, (1, 2), (0.5,), 0.5)
    with pytest.raises(DomainError):
        categorical_p_closed_form(1, (1, 2), (0.5, 1.5), 0.5)
    with pytest.raises(DomainError):
        categorical_p_closed_form(0, (1, 2), (0.5, 0.5), 0.5)


@settings(max_examples=200, deadline=None)
@given(
    labels=st.lists(st.integers(1, 4), min_size=1, max_size=8),
    candidate=st.integers(1, 4),
    data=st.data(),
)
def test_closed_form_matches_engine(labels, candidate, data):
    # the closed form must agree with the generic engine running the full-mode
    # multinomial score over the hypothesized bag
    # uniforms on a 1/1024 grid: score gaps then dwarf float rounding, so the
    # engine's float comparison is faithful to the real-arithmetic identity
    grid = st.integers(0, 1024).map(lambda t: t / 1024)
    n = len(labels)
    us = data.draw(st.lists(grid, min_size=n, max_size=n))
    u_test = data.draw(grid)
    k = max([candidate] + labels)
    closed = categorical_p_closed_form(candidate, labels, us, u_test)
    calib = CalibrationSet.from_labels(labels, k, u_values=us)
    engine = conformal_p(
        Category(candidate, k), calib, (u_test,), multinomial_score_function(k)
    )
    assert closed.p == engine.p


def test_unseen_p_uniform_over_singleton_range():
    # with g singletons the p numerator of an unseen label is uniform on
    # {1, ..., g+1}; chi-square at the 1e-3 level over 10^5 replicates
    rng = np.random.default_rng(20260814)
    labels = (1, 1, 2, 3)  # singletons: labels 2 and 3
    reps = 100_000
    tallies = np.zeros(3, dtype=np.int64)
    for _ in range(reps):
        us = rng.random(4)
        u_test = rng.random()
        res = categorical_p_closed_form(4, labels, us, u_test)
        tallies[res.rank_count] += 1
    stat, pvalue = scipy.stats.chisquare(tallies)
    assert pvalue > 1e-3, (tallies.tolist(), stat)


# ---------------------------------------------------------------- unseen rule

def test_unseen_label_rule_frozen():
    # n = 9, alpha = 0.2: floor(alpha * (n+1)) = 2 singletons needed
    no_singletons = (1, 1, 1, 2, 2, 2, 3, 3, 3)
    two_singletons = (1, 1, 1, 2, 2, 3, 3, 4, 5)
    assert unseen_label_rule(no_singletons, 0.2) is False
    assert unseen_label_rule(two_singletons, 0.2) is True


def test_unseen_label_rule_small_alpha_always_true():
    # alpha * (n+1) < 1 means the floor is zero: nothing can be ruled out
    assert unseen_label_rule((1, 1, 1), 0.2) is True
    assert unseen_label_rule((1,), 0.4) is True


def test_unseen_label_rule_validation():
    with pytest.raises(DomainError):
        unseen_label_rule((), 0.1)
    with pytest.raises(DomainError):
        unseen_label_rule((1, 2), 0.0)
    with pytest.raises(DomainError):
        unseen_label_rule((1, 2), 1.0)


def test_unseen_label_rule_matches_closed_form_reachability():
    # the rule must say True exactly when some tie-break draw yields p > alpha
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        labels = tuple(int(v) for v in rng.integers(1, 5, size=n))
        alpha = float(rng.uniform(0.05, 0.95))
        k = max(labels) + 1  # candidate k is never observed
        g = LabelCounts.from_labels(labels, k).gamma_size(1)
        # max achievable numerator: u_test above every singleton's uniform
        best = categorical_p_closed_form(k, labels, (0.0,) * n, 1.0)
        assert best.rank_count == g
        reachable = best.p > Fraction(*exact_pair(alpha))
        assert unseen_label_rule(labels, alpha) == reachable


def exact_pair(alpha):
    frac = Fraction(alpha).limit_denominator(10**9)
    return frac.numerator, frac.denominator


# ---------------------------------------------------------------- oracle set

def test_oracle_set_frozen_prefixes():
    pmf = PopulationPMF((0.5, 0.3, 0.2))
    assert oracle_set(pmf, 0.1).labels == frozenset({1, 2, 3})
    assert oracle_set(pmf, 0.25).labels == frozenset({1, 2})


def test_oracle_set_randomized_frozen_inclusion():
    pmf = PopulationPMF((0.5, 0.3, 0.2))
    # label 2: tail after it is 0.2; 0.2 + 0.3 * 0.5 = 0.35
    assert 2 in oracle_set(pmf, 0.3, u=0.5, randomized=True)
    assert 2 not in oracle_set(pmf, 0.35, u=0.5, randomized=True)
    assert 2 not in oracle_set(pmf, 0.4, u=0.5, randomized=True)


def test_oracle_set_tie_warning():
    with pytest.warns(UserWarning):
        pmf = PopulationPMF((0.4, 0.4, 0.2))
    # ties broken by label index: label 1 enters before label 2
    assert oracle_set(pmf, 0.65).labels == frozenset({1})


def test_oracle_set_validation():
    pmf = PopulationPMF((0.6, 0.4))
    with pytest.raises(DomainError):
        oracle_set(pmf, 0.0)
    with pytest.raises(DomainError):
        oracle_set(pmf, 0.2, u=1.5, randomized=True)
    with pytest.raises(DomainError):
        PopulationPMF((0.5, 0.4))
    with pytest.raises(DomainError):
        PopulationPMF((1.2, -0.2))


def _inclusion_measure(pmf, alpha):
    """Lebesgue measure in u of {u : label kept}, one entry per label.

    Membership is a step function of u (kept iff tail + pi_y * u > alpha), so
    the measure has the closed form below; used to integrate exactly.
    """
    probs = np.asarray(pmf.probabilities)
    order = pmf.descending_order()
    tail = np.concatenate([np.cumsum(probs[order][::-1])[::-1][1:], [0.0]])
    out = np.zeros(pmf.k)
    for pos, lab in enumerate(order):
        if probs[lab] == 0.0:
            out[lab] = 1.0 if tail[pos] > alpha else 0.0
        else:
            out[lab] = min(max((tail[pos] + probs[lab] - alpha) / probs[lab], 0.0), 1.0)
    return out


@pytest.mark.parametrize(
    "probs,alpha",
    [
        ((0.5, 0.3, 0.2), 0.1),
        ((0.5, 0.3, 0.2), 0.3),
        ((0.75, 0.15, 0.09, 0.01), 0.1),
        ((0.2, 0.2, 0.2, 0.2, 0.2), 0.1),
    ],
)
def test_oracle_randomized_expected_coverage_exact(probs, alpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pmf = PopulationPMF(probs)
    measure = _inclusion_measure(pmf, alpha)
    coverage = float(np.dot(np.asarray(probs), measure))
    assert coverage == pytest.approx(1 - alpha, abs=1e-12)
    # the measure itself must match package membership on both sides of each
    # label's inclusion threshold u = 1 - measure
    for lab in range(1, pmf.k + 1):
        m = measure[lab - 1]
        t = 1.0 - m
        if m > 0.0 and t + 1e-9 <= 1.0:
            assert lab in oracle_set(pmf, alpha, u=t + 1e-9, randomized=True)
        if m < 1.0 and t - 1e-9 >= 0.0:
            assert lab not in oracle_set(pmf, alpha, u=t - 1e-9, randomized=True)


@pytest.mark.parametrize(
    "probs,alpha",
    [
        ((0.5, 0.3, 0.2), 0.1),
        ((0.5, 0.3, 0.2), 0.25),
        ((0.75, 0.15, 0.09, 0.01), 0.1),
        ((0.4, 0.25, 0.15, 0.12, 0.08), 0.1),
    ],
)
def test_oracle_randomized_never_larger_on_average(probs, alpha):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pmf = PopulationPMF(probs)
    expected_size = float(np.sum(_inclusion_measure(pmf, alpha)))
    deterministic_size = len(oracle_set(pmf, alpha).labels)
    assert expected_size <= deterministic_size + 1e-12
