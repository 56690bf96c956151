"""Sequential data-use detection with a bounded false-detection rate.

The published variant of each instance is scored once up front.  Hidden
variants are then drawn uniformly without replacement from the pooled
hidden set; each draw yields one bit (did the published variant of the same
instance beat it?) and the bits feed a PPRM confidence sequence on
``n'``, the total number of won comparisons.  The audit stops with a
detection as soon as the lower confidence bound reaches ``T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Sequence

import numpy as np

from seqaudit import pprm
from seqaudit.null_rank import threshold_for_fdr


def compare(published_score: float, hidden_score: float, published_j: int, hidden_j: int) -> int:
    """1 if the published variant beats the hidden one; ties go to the larger variant index."""
    if published_score > hidden_score:
        return 1
    if published_score == hidden_score and published_j > hidden_j:
        return 1
    return 0


def rank(published: tuple[int, Any], hidden_group: Sequence[tuple[int, Any]], oracle: Callable[[Any], float]) -> int:
    """Rank in ``{1..n}`` of the published variant among its ``n`` siblings.

    ``published`` and each entry of ``hidden_group`` are ``(j, item)`` pairs.
    Scores every item; this is the batch diagnostic, not the sequential path.
    """
    pj, pitem = published
    ps = oracle(pitem)
    return 1 + sum(compare(ps, oracle(item), pj, j) for j, item in hidden_group)


@lru_cache(maxsize=1024)
def _threshold(q: int, n: int, p, alpha) -> int:
    return threshold_for_fdr(q, n, p, alpha).T


@dataclass
class AuditInput:
    """Published items plus the pooled hidden set, with provenance.

    Variant indices ``j`` are 0-based.  ``hidden_owner[h]`` is the instance
    index of hidden item ``h``.
    """

    published: list
    published_j: list[int]
    hidden: list
    hidden_owner: list[int]
    hidden_j: list[int]
    n: int

    def __post_init__(self):
        q = len(self.published)
        if q < 1:
            raise ValueError("need at least one published item")
        if len(self.published_j) != q:
            raise ValueError("published_j must have one entry per published item")
        if not (len(self.hidden) == len(self.hidden_owner) == len(self.hidden_j)):
            raise ValueError("hidden, hidden_owner and hidden_j must align")
        if len(self.hidden) != q * (self.n - 1):
            raise ValueError(f"|H| = {len(self.hidden)} but q(n-1) = {q * (self.n - 1)}")
        counts = np.bincount(np.asarray(self.hidden_owner, dtype=int), minlength=q)
        if counts.size != q or np.any(counts != self.n - 1):
            raise ValueError("every instance needs exactly n-1 hidden items")

    @property
    def q(self) -> int:
        return len(self.published)

    @classmethod
    def from_score_keys(cls, q: int, n: int, published_j: Sequence[int]) -> "AuditInput":
        """Items are ``(i, j)`` keys; handy when the oracle owns the data."""
        published = [(i, int(j)) for i, j in enumerate(published_j)]
        hidden, owner, hj = [], [], []
        for i, pj in enumerate(published_j):
            for j in range(n):
                if j != pj:
                    hidden.append((i, j))
                    owner.append(i)
                    hj.append(j)
        return cls(published, list(map(int, published_j)), hidden, owner, hj, n)


@dataclass
class DetectionOutcome:
    decision: int
    queries_marked: int
    trace: list[tuple[int, int, int, int]]
    T: int
    q: int
    n: int
    k: int = 1
    stopped_at: int | None = None
    aborted: bool = False
    error: str | None = None
    draws: list[int] = field(default_factory=list)

    @property
    def exhausted(self) -> bool:
        return self.stopped_at is None and not self.aborted and len(self.trace) == self.q * (self.n - 1)

    @property
    def total_queries(self) -> int:
        return self.queries_marked * self.k

    def as_dict(self) -> dict:
        return {
            "decision": self.decision,
            "queries_marked": self.queries_marked,
            "total_queries": self.total_queries,
            "k": self.k,
            "T": self.T,
            "q": self.q,
            "n": self.n,
            "stopped_at": self.stopped_at,
            "exhausted": self.exhausted,
            "aborted": self.aborted,
            "error": self.error,
        }


def _draw_order(audit: AuditInput, rng: np.random.Generator, sampling: str) -> np.ndarray:
    H = len(audit.hidden)
    if sampling == "uniform":
        return rng.permutation(H)
    if sampling == "round_robin":
        owner = np.asarray(audit.hidden_owner)
        queues = [rng.permutation(np.flatnonzero(owner == i)) for i in range(audit.q)]
        order = []
        for r in range(audit.n - 1):
            for i in rng.permutation(audit.q):
                order.append(queues[i][r])
        return np.asarray(order)
    raise ValueError(f"unknown sampling scheme {sampling!r}")


def detect(
    audit: AuditInput,
    oracle: Callable[[Any], float],
    p: float,
    alpha: float,
    rng: np.random.Generator,
    *,
    sampling: str = "uniform",
    intersect: bool = True,
    prior=None,
) -> DetectionOutcome:
    """Run the sequential audit against ``oracle``.

    An oracle exception ends the run early; the returned outcome is marked
    ``aborted`` and keeps the partial trace.
    """
    if not 0 < alpha < p:
        raise ValueError(f"need 0 < alpha < p, got p={p}, alpha={alpha}")
    q, n = audit.q, audit.n
    k = getattr(oracle, "k", 1)
    budget = getattr(oracle, "budget", None)
    if budget is not None and budget < q * n * k:
        raise ValueError(f"oracle budget {budget} is below the worst case q*n*k = {q * n * k}")
    T = _threshold(q, n, p, alpha)
    N = q * (n - 1)
    out = DetectionOutcome(decision=0, queries_marked=0, trace=[], T=T, q=q, n=n, k=k)

    try:
        pub_scores = []
        for item in audit.published:
            pub_scores.append(oracle(item))
            out.queries_marked += 1
    except Exception as exc:  # oracle failures are reported, not raised
        out.aborted, out.error = True, f"{type(exc).__name__}: {exc}"
        return out

    order = _draw_order(audit, rng, sampling)
    tracker = _tracker(N, alpha, prior, intersect)
    for h in order:
        try:
            hs = oracle(audit.hidden[h])
        except Exception as exc:
            out.aborted, out.error = True, f"{type(exc).__name__}: {exc}"
            return out
        out.queries_marked += 1
        i = audit.hidden_owner[h]
        bit = compare(pub_scores[i], hs, audit.published_j[i], audit.hidden_j[h])
        lo, hi = tracker.push(bit)
        out.trace.append((tracker.t, tracker.s, lo, hi))
        out.draws.append(int(h))
        if lo >= T:
            out.decision = 1
            out.stopped_at = tracker.t
            break
    return out


class _DenseTracker:
    """Mutable adapter giving the dense PPRM state the ``push`` interface."""

    def __init__(self, N, alpha, prior, intersect):
        self.state = pprm.init(N, alpha, prior=prior, intersect=intersect)

    t = property(lambda self: self.state.t)
    s = property(lambda self: self.state.s)
    exhausted = property(lambda self: self.state.exhausted)

    def push(self, bit):
        self.state, iv = self.state.update(bit)
        return iv


def _tracker(N, alpha, prior, intersect):
    if prior is None or (isinstance(prior, str) and prior == "uniform"):
        return pprm.UniformPPRM(N, alpha, intersect=intersect)
    return _DenseTracker(N, alpha, prior, intersect)


def minimal_stopping_time(q: int, n: int, p: float, alpha: float, intersect: bool = True) -> int | None:
    """Draws needed to stop when every comparison is won, or None if never."""
    T = _threshold(q, n, p, alpha)
    tracker = pprm.UniformPPRM(q * (n - 1), alpha, intersect=intersect)
    while not tracker.exhausted:
        lo, _ = tracker.push(1)
        if lo >= T:
            return tracker.t
    return None


def replay_trace(bits: Sequence[int], q: int, n: int, p: float, alpha: float, intersect: bool = True) -> int | None:
    """Index (1-based) of the first draw where the lower bound reaches T."""
    T = _threshold(q, n, p, alpha)
    for t, _, lo, _ in pprm.interval_trace(bits, q * (n - 1), alpha, intersect=intersect):
        if lo >= T:
            return t
    return None
