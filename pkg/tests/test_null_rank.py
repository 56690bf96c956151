import itertools
from fractions import Fraction
from math import ceil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqaudit.null_rank import (
    NullRankSumDistribution,
    UnsatisfiableThresholdError,
    as_fraction,
    pmf,
    pmf_table_bruteforce,
    tail,
    threshold_for_fdr,
)


def enumerate_rank_sums(q, n):
    """Oracle: count every rank tuple directly."""
    counts = {}
    for ranks in itertools.product(range(1, n + 1), repeat=q):
        s = sum(ranks)
        counts[s] = counts.get(s, 0) + 1
    return {r: Fraction(c, n**q) for r, c in counts.items()}


class TestPmf:
    def test_single_uniform_rank(self):
        assert pmf(1, 1000, 5) == Fraction(1, 1000)

    def test_two_ranks_of_three(self):
        # (1,3), (2,2), (3,1)
        assert pmf(2, 3, 4) == Fraction(1, 3)
        assert enumerate_rank_sums(2, 3)[4] == Fraction(1, 3)

    def test_three_ranks_of_four(self):
        # 4^3 enumeration gives 10 triples summing to 6 (compositions of 6
        # into three parts, none above 4)
        assert enumerate_rank_sums(3, 4)[6] == Fraction(10, 64)
        assert pmf(3, 4, 6) == Fraction(10, 64)

    @pytest.mark.parametrize("q,n", [(1, 2), (2, 2), (2, 5), (3, 3), (3, 6), (4, 4), (5, 3)])
    def test_matches_enumeration(self, q, n):
        expected = enumerate_rank_sums(q, n)
        assert {r: pmf(q, n, r) for r in range(q, q * n + 1)} == expected

    @pytest.mark.parametrize("r", [0, 1, 13, -4])
    def test_out_of_support_is_an_error(self, r):
        with pytest.raises(ValueError):
            pmf(2, 6, r)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            NullRankSumDistribution(0, 5)
        with pytest.raises(ValueError):
            NullRankSumDistribution(3, 1)

    def test_large_q_stays_exact(self):
        # n^q is far beyond 64-bit; exact rationals must still sum to one
        dist = NullRankSumDistribution(30, 50)
        assert sum(dist.table().values()) == 1


class TestBruteforce:
    def test_uniform(self):
        assert pmf_table_bruteforce(1, 4) == {r: Fraction(1, 4) for r in range(1, 5)}

    def test_two_by_two(self):
        assert pmf_table_bruteforce(2, 2) == {2: Fraction(1, 4), 3: Fraction(1, 2), 4: Fraction(1, 4)}

    def test_three_by_three(self):
        assert pmf_table_bruteforce(3, 3) == enumerate_rank_sums(3, 3)
        assert pmf_table_bruteforce(3, 3) == NullRankSumDistribution(3, 3).table()

    def test_cap(self):
        with pytest.raises(OverflowError):
            pmf_table_bruteforce(200, 1000)


@settings(max_examples=60, deadline=None)
@given(q=st.integers(1, 6), n=st.integers(2, 14))
def test_pmf_properties(q, n):
    dist = NullRankSumDistribution(q, n)
    table = dist.table()
    assert set(table) == set(range(q, q * n + 1))
    assert sum(table.values()) == 1
    for r, v in table.items():
        assert v == table[q * (n + 1) - r]
    assert table == pmf_table_bruteforce(q, n)


class TestTail:
    def test_one_instance(self):
        assert tail(1, 1000, 951) == Fraction(49, 1000)

    def test_full_support(self):
        for n in (2, 7, 1000):
            assert tail(1, n, 0) == 1

    def test_top_only(self):
        assert tail(2, 3, 4) == Fraction(1, 9)

    def test_beyond_max_is_zero(self):
        assert tail(3, 5, 3 * 4 + 1) == 0

    @pytest.mark.parametrize("T", [-1, 14])
    def test_invalid_T(self, T):
        with pytest.raises(ValueError):
            tail(3, 5, T)

    @settings(max_examples=40, deadline=None)
    @given(q=st.integers(1, 5), n=st.integers(2, 12))
    def test_closed_form_cdf_matches_pmf_sums(self, q, n):
        dist = NullRankSumDistribution(q, n)
        table = pmf_table_bruteforce(q, n)
        N = dist.population
        prev = Fraction(2)
        for T in range(N + 2):
            expected = sum((v for r, v in table.items() if r - q >= T), Fraction(0))
            got = dist.tail(T)
            assert got == expected
            assert got <= prev
            prev = got


class TestThreshold:
    def test_q1_fixtures(self):
        assert threshold_for_fdr(1, 1000, 0.05, 0.001).T == 951
        assert threshold_for_fdr(1, 1000, 0.002, 0.001).T == 999

    def test_small_fixture(self):
        thr = threshold_for_fdr(2, 3, 0.2, 0.05)
        assert thr.T == 4
        assert thr.tail == Fraction(1, 9)
        assert tail(2, 3, 3) > Fraction(15, 100)

    @settings(max_examples=80, deadline=None)
    @given(
        n=st.integers(2, 3000),
        p_milli=st.integers(2, 1000),
        a_frac=st.floats(0.01, 0.99),
    )
    def test_q1_closed_form(self, n, p_milli, a_frac):
        p = Fraction(p_milli, 1000)
        alpha = p * Fraction(a_frac).limit_denominator(1000)
        if not 0 < alpha < p:
            return
        budget = p - alpha
        if budget < Fraction(1, n):
            with pytest.raises(UnsatisfiableThresholdError):
                threshold_for_fdr(1, n, p, alpha)
            return
        assert threshold_for_fdr(1, n, p, alpha).T == ceil(n * (1 - budget))

    @settings(max_examples=40, deadline=None)
    @given(q=st.integers(1, 5), n=st.integers(2, 12), p=st.sampled_from([0.2, 0.1, 0.05, 0.01]))
    def test_minimality(self, q, n, p):
        alpha = p / 10
        try:
            thr = threshold_for_fdr(q, n, p, alpha)
        except UnsatisfiableThresholdError:
            return
        budget = as_fraction(p) - as_fraction(alpha)
        assert tail(q, n, thr.T) <= budget
        if thr.T > 0:
            assert tail(q, n, thr.T - 1) > budget

    def test_unsatisfiable_reports_achievable(self):
        with pytest.raises(UnsatisfiableThresholdError) as info:
            threshold_for_fdr(1, 10, 0.05, 0.001)
        assert info.value.achievable == Fraction(1, 10)

    @pytest.mark.parametrize("p,alpha", [(0.01, 0.05), (0.05, 0.05), (0.05, 0.0), (1.5, 0.1)])
    def test_bad_levels(self, p, alpha):
        with pytest.raises(ValueError):
            threshold_for_fdr(2, 5, p, alpha)

    def test_decimal_reading_of_floats(self):
        assert as_fraction(0.05) == Fraction(1, 20)
        assert as_fraction("0.001") == Fraction(1, 1000)
