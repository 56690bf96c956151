"""Exact null distribution of the rank-sum statistic.

Under the null each of the ``q`` published ranks is uniform on ``{1..n}``
and independent, so ``RankSum`` is a sum of ``q`` discrete uniforms.  Its
PMF is an alternating inclusion-exclusion sum over big binomials; every
quantity here is computed with Python integers and returned as a
:class:`fractions.Fraction`, so there is no cancellation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from numbers import Rational

# Dense convolution oracle refuses anything larger than this.
BRUTEFORCE_CAP = 100_000


class UnsatisfiableThresholdError(ValueError):
    """No threshold in range keeps the null tail under ``p - alpha``."""

    def __init__(self, q: int, n: int, budget: Fraction, achievable: Fraction):
        self.q = q
        self.n = n
        self.budget = budget
        self.achievable = achievable
        super().__init__(
            f"p - alpha = {budget} is below the smallest non-zero null tail "
            f"{achievable} (= 1/n^q) for q={q}, n={n}; detection is impossible"
        )


def as_fraction(x) -> Fraction:
    """Exact rational for a user-supplied probability.

    Floats are read through their shortest decimal repr, so ``0.05`` means
    ``1/20`` and not the nearest binary double.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


def _check_qn(q: int, n: int) -> None:
    if not isinstance(q, int) or q < 1:
        raise ValueError(f"q must be a positive integer, got {q!r}")
    if not isinstance(n, int) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")


@lru_cache(maxsize=4096)
def _pmf_numerator(q: int, n: int, r: int) -> int:
    total = 0
    for w in range((r - q) // n + 1):
        term = comb(q, w) * comb(r - n * w - 1, q - 1)
        total += -term if w % 2 else term
    return total


def _cdf_numerator(q: int, n: int, r: int) -> int:
    # sum_{s<=r} C(s-nw-1, q-1) telescopes (hockey stick) to C(r-nw, q)
    if r < q:
        return 0
    total = 0
    for w in range(min(q, (r - q) // n) + 1):
        term = comb(q, w) * comb(r - n * w, q)
        total += -term if w % 2 else term
    return total


@dataclass(frozen=True)
class NullRankSumDistribution:
    """Law of the sum of ``q`` independent uniform ranks on ``{1..n}``."""

    q: int
    n: int

    def __post_init__(self):
        _check_qn(self.q, self.n)

    @property
    def support(self) -> range:
        return range(self.q, self.q * self.n + 1)

    @property
    def population(self) -> int:
        """Size ``q(n-1)`` of the hidden set, i.e. the largest value of n'."""
        return self.q * (self.n - 1)

    @property
    def mean(self) -> Fraction:
        return Fraction(self.q * (self.n + 1), 2)

    def pmf(self, r: int) -> Fraction:
        if r not in self.support:
            raise ValueError(
                f"r={r} outside the support [{self.q}, {self.q * self.n}]"
            )
        return Fraction(_pmf_numerator(self.q, self.n, r), self.n**self.q)

    def cdf(self, r: int) -> Fraction:
        """P[RankSum <= r] for any integer r."""
        if r >= self.q * self.n:
            return Fraction(1)
        return Fraction(_cdf_numerator(self.q, self.n, r), self.n**self.q)

    def tail(self, T: int) -> Fraction:
        """P[n' >= T] where n' = RankSum - q."""
        if not isinstance(T, int) or not 0 <= T <= self.population + 1:
            raise ValueError(
                f"T={T!r} outside [0, {self.population + 1}] for q={self.q}, n={self.n}"
            )
        return 1 - self.cdf(T + self.q - 1)

    def table(self) -> dict[int, Fraction]:
        return {r: self.pmf(r) for r in self.support}


@dataclass(frozen=True)
class FdrThreshold:
    """Minimal stopping threshold on the lower confidence bound of n'."""

    T: int
    p: Fraction
    alpha: Fraction
    q: int
    n: int
    tail: Fraction

    @property
    def budget(self) -> Fraction:
        return self.p - self.alpha

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "p": str(self.p),
            "alpha": str(self.alpha),
            "T": self.T,
            "tail": str(self.tail),
            "tail_float": float(self.tail),
        }


def pmf(q: int, n: int, r: int) -> Fraction:
    return NullRankSumDistribution(q, n).pmf(r)


def tail(q: int, n: int, T: int) -> Fraction:
    return NullRankSumDistribution(q, n).tail(T)


def threshold_for_fdr(q: int, n: int, p, alpha) -> FdrThreshold:
    """Smallest ``T`` with ``P[n' >= T] <= p - alpha`` under the null.

    Raises :class:`UnsatisfiableThresholdError` when even ``T = q(n-1)``
    leaves too much tail mass, since then no lower bound can ever cross.
    """
    dist = NullRankSumDistribution(q, n)
    p, alpha = as_fraction(p), as_fraction(alpha)
    if not (0 < alpha < p <= 1):
        raise ValueError(f"need 0 < alpha < p <= 1, got p={p}, alpha={alpha}")
    budget = p - alpha
    N = dist.population
    if dist.tail(N) > budget:
        raise UnsatisfiableThresholdError(q, n, budget, dist.tail(N))
    # tail is non-increasing in T; find the first T in [0, N] under budget
    lo, hi = 0, N
    while lo < hi:
        mid = (lo + hi) // 2
        if dist.tail(mid) <= budget:
            hi = mid
        else:
            lo = mid + 1
    return FdrThreshold(T=lo, p=p, alpha=alpha, q=q, n=n, tail=dist.tail(lo))


def pmf_table_bruteforce(q: int, n: int) -> dict[int, Fraction]:
    """PMF of the rank sum by ``q``-fold convolution of uniform counts.

    Independent of the closed form; used as its test oracle.
    """
    _check_qn(q, n)
    if q * n > BRUTEFORCE_CAP:
        raise OverflowError(f"q*n = {q * n} exceeds the brute-force cap {BRUTEFORCE_CAP}")
    # counts[s] = number of rank tuples whose sum is s (offset 0)
    counts = [0] + [1] * n
    for _ in range(q - 1):
        prefix = [0]
        for c in counts:
            prefix.append(prefix[-1] + c)
        size = len(counts) + n
        new = [0] * size
        for s in range(size):
            hi = min(s - 1, len(counts) - 1)
            lo = max(s - n, 0)
            if hi >= lo:
                new[s] = prefix[hi + 1] - prefix[lo]
        counts = new
    denom = n**q
    return {r: Fraction(counts[r], denom) for r in range(q, q * n + 1)}
