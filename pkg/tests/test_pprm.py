import itertools
from math import log, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqaudit import pprm
from seqaudit.pprm import (
    ConfidenceSequenceState,
    ConfigurationError,
    ExhaustedPopulationError,
    UniformPPRM,
    interval_trace,
    log_likelihood_wor,
)


def sequence_probability(bits, theta, N):
    """Oracle: share of orderings of a theta-ones population that start with ``bits``."""
    population = [1] * theta + [0] * (N - theta)
    hits = total = 0
    for perm in itertools.permutations(range(N), len(bits)):
        total += 1
        hits += all(population[i] == b for i, b in zip(perm, bits))
    return hits / total


class TestLikelihood:
    def test_all_ones_population(self):
        assert log_likelihood_wor(10, 4, 4, 10) == pytest.approx(0.0, abs=1e-12)

    def test_impossible(self):
        assert log_likelihood_wor(0, 1, 1, 10) == -np.inf
        assert log_likelihood_wor(10, 0, 1, 10) == -np.inf

    def test_falling_factorial(self):
        assert log_likelihood_wor(3, 1, 2, 10) == pytest.approx(log(7 / 30))

    @pytest.mark.parametrize("bits", [(1,), (0, 1), (1, 1, 0), (0, 0, 1, 0)])
    @pytest.mark.parametrize("theta", [0, 2, 3, 6])
    def test_against_enumeration(self, bits, theta):
        N = 6
        s, t = sum(bits), len(bits)
        prob = sequence_probability(bits, theta, N)
        got = log_likelihood_wor(theta, s, t, N)
        if prob == 0:
            assert got == -np.inf
        else:
            assert got == pytest.approx(log(prob), rel=1e-12)


class TestInit:
    def test_uniform(self):
        assert pprm.init(10, 0.05).interval == (0, 10)
        assert pprm.init(1, 0.5).interval == (0, 1)

    @pytest.mark.parametrize("N", [0, -3])
    def test_empty_population(self, N):
        with pytest.raises(ConfigurationError):
            pprm.init(N, 0.05)

    def test_degenerate_prior(self):
        prior = np.ones(11)
        prior[3] = 0.0
        with pytest.raises(ConfigurationError):
            pprm.init(10, 0.05, prior=prior)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ConfigurationError):
            pprm.init(10, alpha)


class TestUpdate:
    def test_first_one(self):
        # posterior proportional to theta, ratio 5/theta < 20 iff theta >= 1
        _, iv = pprm.init(10, 0.05).update(1)
        assert iv == (1, 10)

    def test_first_zero(self):
        _, iv = pprm.init(10, 0.05).update(0)
        assert iv == (0, 9)

    def test_exhausted_population(self):
        bits = [1, 0, 0, 1, 0, 1, 0, 0, 1, 0]
        state = pprm.init(10, 0.05)
        for b in bits:
            state, iv = state.update(b)
        assert iv == (4, 4)
        with pytest.raises(ExhaustedPopulationError):
            state.update(0)

    def test_state_is_immutable_value(self):
        s0 = pprm.init(10, 0.05)
        s1, _ = s0.update(1)
        assert s0.t == 0 and s1.t == 1
        with pytest.raises(Exception):
            s0.t = 3

    def test_non_uniform_prior_moves_interval(self):
        prior = np.exp(-np.arange(21) / 2.0)
        flat = interval_trace([1, 1, 1, 1], 20, 0.05)
        skewed = interval_trace([1, 1, 1, 1], 20, 0.05, prior=prior)
        assert flat != skewed


@settings(max_examples=60, deadline=None)
@given(
    N=st.integers(1, 40),
    alpha=st.sampled_from([0.5, 0.2, 0.05, 0.001]),
    data=st.data(),
    intersect=st.booleans(),
)
def test_interval_invariants_and_routes_agree(N, alpha, data, intersect):
    theta = data.draw(st.integers(0, N))
    order = data.draw(st.permutations([1] * theta + [0] * (N - theta)))
    dense = pprm.init(N, alpha, intersect=intersect)
    fast = UniformPPRM(N, alpha, intersect=intersect)
    prev = (0, N)
    for t, bit in enumerate(order, start=1):
        dense, iv = dense.update(bit)
        assert fast.push(bit) == iv
        lo, hi = iv
        s = dense.s
        assert 0 <= s <= t <= N
        assert lo <= hi
        assert s <= lo and hi <= s + (N - t)
        members = np.flatnonzero(dense.confidence_set())
        overlaps = np.any((members >= prev[0]) & (members <= prev[1]))
        if intersect and overlaps:
            # nested unless the running intersection emptied and was reset
            assert prev[0] <= lo and hi <= prev[1]
        prev = iv
    assert prev == (theta, theta)


@settings(max_examples=30, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=1, max_size=25), alpha=st.sampled_from([0.1, 0.01]))
def test_determinism(bits, alpha):
    N = 25
    assert interval_trace(bits, N, alpha) == interval_trace(list(bits), N, alpha)


def test_confidence_set_may_be_reported_as_hull():
    # the reported interval always spans the raw set
    state = pprm.init(30, 0.1, intersect=False)
    for b in [1, 0, 1, 1, 0, 1]:
        state, (lo, hi) = state.update(b)
        members = np.flatnonzero(state.confidence_set())
        assert lo == members[0] and hi == members[-1]


def miscoverage_rate(N, alpha, runs, seed):
    rng = np.random.default_rng(seed)
    misses = 0
    for _ in range(runs):
        theta = int(rng.integers(0, N + 1))
        bits = rng.permutation(np.r_[np.ones(theta, int), np.zeros(N - theta, int)])
        tracker = UniformPPRM(N, alpha, intersect=False)
        for b in bits:
            lo, hi = tracker.push(int(b))
            if not lo <= theta <= hi:
                misses += 1
                break
    return misses / runs


@pytest.mark.parametrize("alpha", [0.2, 0.05])
def test_anytime_coverage_small(alpha):
    runs = 600
    rate = miscoverage_rate(60, alpha, runs, seed=7)
    assert rate <= alpha + 3 * sqrt(alpha / runs)
