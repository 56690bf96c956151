"""Prior-posterior-ratio confidence sequence for a finite binary population.

A population of ``N`` bits holds an unknown number ``theta`` of ones and is
sampled uniformly without replacement.  For every candidate ``theta`` the
ratio ``prior(theta) / posterior_t(theta)`` is a nonnegative martingale with
mean one under that ``theta``, so by Ville's inequality the set

    C_t = {theta : prior(theta) / posterior_t(theta) < 1 / alpha}

contains the truth at every ``t`` simultaneously with probability at least
``1 - alpha``.  Since the prior cancels, the ratio equals ``Z_t / L_t(theta)``
where ``L_t`` is the ordered without-replacement likelihood and ``Z_t`` its
prior average.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import inf, log
from typing import Iterable

import numpy as np
from scipy.special import gammaln, logsumexp


# Ratios within this log-distance of 1/alpha count as inside the set, so that
# exact rational ties resolve the same way on every code path (conservative).
TIE_TOL = 1e-9


class ConfigurationError(ValueError):
    pass


class ExhaustedPopulationError(RuntimeError):
    pass


def log_likelihood_wor(theta: int, s: int, t: int, N: int) -> float:
    """Log probability of one ordered WoR draw sequence with ``s`` ones in ``t``.

    Equals ``log(theta^(s) (N-theta)^(t-s) / N^(t))`` with falling factorials,
    and ``-inf`` when the observation is impossible under ``theta``.
    """
    if not (0 <= s <= t <= N and 0 <= theta <= N):
        raise ValueError(f"need 0 <= s <= t <= N and 0 <= theta <= N, got {theta=}, {s=}, {t=}, {N=}")
    if theta < s or N - theta < t - s:
        return -inf
    out = 0.0
    for i in range(s):
        out += log(theta - i)
    for i in range(t - s):
        out += log(N - theta - i)
    for i in range(t):
        out -= log(N - i)
    return out


@dataclass(frozen=True)
class ConfidenceSequenceState:
    """Immutable PPRM state; :meth:`update` returns a new state.

    ``log_posterior`` is kept normalized (log-sum-exp shifted every step).
    """

    N: int
    alpha: float
    t: int
    s: int
    log_prior: np.ndarray
    log_posterior: np.ndarray
    lower: int
    upper: int
    intersect: bool = True

    @classmethod
    def init(cls, N: int, alpha: float, prior=None, intersect: bool = True) -> "ConfidenceSequenceState":
        if not isinstance(N, (int, np.integer)) or N < 1:
            raise ConfigurationError(f"population size N must be >= 1, got {N!r}")
        if not 0 < alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha!r}")
        N = int(N)
        if prior is None or (isinstance(prior, str) and prior == "uniform"):
            log_prior = np.full(N + 1, -log(N + 1))
        else:
            w = np.asarray(prior, dtype=float)
            if w.shape != (N + 1,):
                raise ConfigurationError(f"prior must have N+1 = {N + 1} entries, got shape {w.shape}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ConfigurationError("prior must be strictly positive and finite on {0..N}")
            log_prior = np.log(w / w.sum())
        log_prior.setflags(write=False)
        return cls(
            N=N,
            alpha=float(alpha),
            t=0,
            s=0,
            log_prior=log_prior,
            log_posterior=log_prior,
            lower=0,
            upper=N,
            intersect=intersect,
        )

    @property
    def interval(self) -> tuple[int, int]:
        return self.lower, self.upper

    @property
    def exhausted(self) -> bool:
        return self.t >= self.N

    def confidence_set(self) -> np.ndarray:
        """Boolean mask over ``theta = 0..N`` of the raw (un-intersected) set."""
        log_ratio = self.log_prior - self.log_posterior
        return log_ratio < -log(self.alpha) + TIE_TOL

    def update(self, bit: int) -> tuple["ConfidenceSequenceState", tuple[int, int]]:
        if self.t >= self.N:
            raise ExhaustedPopulationError(f"all N={self.N} items already drawn")
        if bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {bit!r}")
        theta = np.arange(self.N + 1)
        remaining = self.N - self.t
        # P(next draw = bit | theta, history)
        favourable = theta - self.s if bit else (self.N - theta) - (self.t - self.s)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(favourable > 0, np.log(np.maximum(favourable, 1) / remaining), -inf)
        log_post = self.log_posterior + step
        log_post = log_post - logsumexp(log_post)
        log_post.setflags(write=False)

        nxt = replace(self, t=self.t + 1, s=self.s + bit, log_posterior=log_post)
        members = np.flatnonzero(nxt.confidence_set())
        lo, hi = int(members[0]), int(members[-1])
        if self.intersect:
            ilo, ihi = max(lo, self.lower), min(hi, self.upper)
            # empty intersection only after a coverage failure; fall back to the fresh set
            if ilo <= ihi:
                lo, hi = ilo, ihi
        nxt = replace(nxt, lower=lo, upper=hi)
        return nxt, (lo, hi)


class UniformPPRM:
    """Closed-form PPRM under the uniform prior on ``{0..N}``.

    With a uniform prior the prior-averaged likelihood of any ordered
    sample with ``s`` ones in ``t`` draws is ``s! (t-s)! / (t+1)!``, so no
    posterior vector is needed; each step is a few slices of a
    log-factorial table.  Mutable and meant for hot loops; the dense
    :class:`ConfidenceSequenceState` is the reference it is tested against.
    """

    __slots__ = ("N", "alpha", "intersect", "t", "s", "lower", "upper", "_lf", "_log_alpha")

    def __init__(self, N: int, alpha: float, intersect: bool = True):
        if N < 1:
            raise ConfigurationError(f"population size N must be >= 1, got {N!r}")
        if not 0 < alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha!r}")
        self.N = int(N)
        self.alpha = float(alpha)
        self.intersect = intersect
        self.t = 0
        self.s = 0
        self.lower = 0
        self.upper = self.N
        self._lf = _log_factorials(self.N + 1)
        self._log_alpha = log(self.alpha)

    @property
    def exhausted(self) -> bool:
        return self.t >= self.N

    def log_likelihoods(self) -> tuple[int, np.ndarray]:
        """``(theta_min, log L_t(theta))`` over the feasible range of theta."""
        N, t, s, lf = self.N, self.t, self.s, self._lf
        f = t - s
        hi = N - f  # feasible theta is s..N-f
        theta = slice(s, hi + 1)
        # log theta^(s) + log (N-theta)^(f) - log N^(t)
        ll = lf[theta] - lf[0 : hi - s + 1] + lf[N - hi : N - s + 1][::-1] - lf[N - hi - f : N - s - f + 1][::-1]
        return s, ll - (lf[N] - lf[N - t])

    def push(self, bit: int) -> tuple[int, int]:
        if self.t >= self.N:
            raise ExhaustedPopulationError(f"all N={self.N} items already drawn")
        self.t += 1
        self.s += 1 if bit else 0
        lf = self._lf
        log_z = lf[self.s] + lf[self.t - self.s] - lf[self.t + 1]
        base, ll = self.log_likelihoods()
        members = np.flatnonzero(ll > self._log_alpha + log_z - TIE_TOL)
        lo, hi = base + int(members[0]), base + int(members[-1])
        if self.intersect:
            ilo, ihi = max(lo, self.lower), min(hi, self.upper)
            if ilo <= ihi:
                lo, hi = ilo, ihi
        self.lower, self.upper = lo, hi
        return lo, hi


_LF_CACHE: dict[int, np.ndarray] = {}


def _log_factorials(m: int) -> np.ndarray:
    """``log(k!)`` for ``k = 0..m``."""
    lf = _LF_CACHE.get(m)
    if lf is None:
        lf = gammaln(np.arange(m + 1, dtype=float) + 1)
        lf.setflags(write=False)
        _LF_CACHE[m] = lf
    return lf


def init(N: int, alpha: float, prior=None, intersect: bool = True) -> ConfidenceSequenceState:
    return ConfidenceSequenceState.init(N, alpha, prior=prior, intersect=intersect)


def update(state: ConfidenceSequenceState, bit: int) -> tuple[ConfidenceSequenceState, tuple[int, int]]:
    return state.update(bit)


def interval_trace(
    bits: Iterable[int], N: int, alpha: float, prior=None, intersect: bool = True
) -> list[tuple[int, int, int, int]]:
    """Replay a bit sequence; rows are ``(t, s, L_t, U_t)``."""
    state = init(N, alpha, prior=prior, intersect=intersect)
    rows = []
    for bit in bits:
        state, (lo, hi) = state.update(int(bit))
        rows.append((state.t, state.s, lo, hi))
    return rows
