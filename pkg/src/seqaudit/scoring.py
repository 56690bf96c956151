"""Black-box memorization scores and membership-inference baselines.

Every score is "higher means more likely trained on".  The detector only
sees a :class:`ScoreOracle`, which wraps one of these functions together
with the per-item query cost ``k``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

CLIP = 1e-12


class ScoreInputError(ValueError):
    pass


class QueryBudgetExceeded(RuntimeError):
    pass


def _as_conf(conf, label: int | None = None) -> np.ndarray:
    p = np.asarray(conf, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ScoreInputError(f"confidence vector must be 1-D with >= 2 classes, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > 1e-9:
        raise ScoreInputError("confidence vector must be nonnegative and sum to 1")
    if label is not None and not 0 <= label < p.size:
        raise ScoreInputError(f"label {label} out of range for {p.size} classes")
    return p


@dataclass(frozen=True)
class ConfidenceVector:
    probs: np.ndarray
    label: int

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_conf(self.probs, self.label))


def modified_entropy_score(conf, label: int | None = None) -> float:
    """Negative modified entropy of a confidence vector w.r.t. its label.

    Accepts either a :class:`ConfidenceVector` or ``(probs, label)``.
    Probabilities are clipped to ``[1e-12, 1 - 1e-12]`` before logs.
    """
    if isinstance(conf, ConfidenceVector):
        probs, label = conf.probs, conf.label
    else:
        if label is None:
            raise ScoreInputError("label is required with a raw probability vector")
        probs = _as_conf(conf, label)
    p = np.clip(probs, CLIP, 1 - CLIP)
    py = p[label]
    others = np.delete(p, label)
    ment = -(1 - py) * np.log(py) - np.sum(others * np.log(1 - others))
    return float(-ment)


def modified_entropy_batch(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise :func:`modified_entropy_score` without per-row validation."""
    p = np.clip(np.asarray(probs, dtype=float), CLIP, 1 - CLIP)
    labels = np.asarray(labels)
    rows = np.arange(p.shape[0])
    py = p[rows, labels]
    log1m = np.log(1 - p)
    other = np.sum(p * log1m, axis=1) - py * log1m[rows, labels]
    return -(-(1 - py) * np.log(py) - other)


def averaged_classifier_score(confs: Sequence, label: int, label_only: bool = False) -> float:
    """Average ``k`` classifier outputs, then take the negative modified entropy.

    With ``label_only`` each entry of ``confs`` is a predicted class index and
    is one-hot encoded first; ``num_classes`` is then inferred as max+1 unless
    ``confs`` is given as ``(labels, num_classes)``.
    """
    if len(confs) == 0:
        raise ScoreInputError("need at least one model output (k >= 1)")
    if label_only:
        if isinstance(confs, tuple) and len(confs) == 2 and np.isscalar(confs[1]):
            labels, C = np.asarray(confs[0], dtype=int), int(confs[1])
        else:
            labels = np.asarray(confs, dtype=int)
            C = max(int(labels.max()), label) + 1
        if labels.size == 0:
            raise ScoreInputError("need at least one returned label")
        mean = np.bincount(labels, minlength=C).astype(float) / labels.size
    else:
        stacked = np.stack([_as_conf(c) for c in confs])
        mean = stacked.mean(axis=0)
        mean = mean / mean.sum()
    return modified_entropy_score(mean, label)


def _cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ScoreInputError("cosine similarity is undefined for a zero vector")
    return float(a @ b / (na * nb))


def encoder_cosine_sum_score(features: Sequence) -> float:
    """Sum of cosine similarities over all unordered pairs of ``k`` features."""
    F = np.asarray(features, dtype=float)
    if F.ndim != 2 or F.shape[0] < 2:
        raise ScoreInputError("need k >= 2 feature vectors")
    norms = np.linalg.norm(F, axis=1)
    if np.any(norms == 0):
        raise ScoreInputError("cosine similarity is undefined for a zero vector")
    U = F / norms[:, None]
    G = U @ U.T
    iu = np.triu_indices(F.shape[0], k=1)
    return float(G[iu].sum())


def clip_pair_score(image_feature, text_feature) -> float:
    return _cosine(image_feature, text_feature)


def neg_cross_entropy_score(token_probabilities) -> float:
    """Negated cross-entropy loss of a caption: ``sum_t log p_t``."""
    p = np.asarray(token_probabilities, dtype=float)
    if p.size == 0:
        raise ScoreInputError("empty token sequence")
    if np.any(p < 0) or np.any(p > 1):
        raise ScoreInputError("token probabilities must lie in [0, 1]")
    return float(np.sum(np.log(np.clip(p, CLIP, 1.0))))


# ---------------------------------------------------------------------------
# membership-inference baselines (confidence-based, at most one reference model)


@dataclass(frozen=True)
class BaselineContext:
    """Side information for the baseline attacks.

    ``aux_target`` / ``aux_reference`` hold the audited and reference model's
    confidence on each auxiliary record's own label; ``reference`` holds the
    reference models' confidence on the target record's label.
    """

    aux_target: np.ndarray = field(default_factory=lambda: np.empty(0))
    aux_reference: np.ndarray = field(default_factory=lambda: np.empty(0))
    reference: np.ndarray = field(default_factory=lambda: np.empty(0))
    gamma: float = 2.0
    lam: float = 0.3
    eta: float | None = None

    def __post_init__(self):
        for name in ("aux_target", "aux_reference", "reference"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.aux_reference.size and self.aux_reference.size != self.aux_target.size:
            raise ScoreInputError("aux_reference must align with aux_target")

    def decide(self, score: float) -> bool:
        if self.eta is None:
            raise ScoreInputError("no decision threshold eta configured")
        return score >= self.eta


def _need(arr: np.ndarray, what: str) -> np.ndarray:
    if arr.size == 0:
        raise ScoreInputError(f"{what} is required for this attack")
    return arr


def attack_p(target_py: float, ctx: BaselineContext) -> float:
    """Fraction of auxiliary records the target out-scores (ratio >= 1)."""
    aux = _need(ctx.aux_target, "auxiliary set")
    return float(np.mean(target_py / np.maximum(aux, CLIP) >= 1))


def attack_r(target_py: float, ctx: BaselineContext) -> float:
    """Fraction of reference models the target model out-scores on this record."""
    ref = _need(ctx.reference, "reference output")
    return float(np.mean(target_py / np.maximum(ref, CLIP) >= 1))


def _logit(p):
    p = np.clip(p, CLIP, 1 - CLIP)
    return np.log(p / (1 - p))


def lira_offline(target_py: float, ctx: BaselineContext) -> float:
    ref = _need(ctx.reference, "reference output")
    return float(1 - np.mean(_logit(ref) > _logit(target_py)))


def rmia_offline(target_py: float, ctx: BaselineContext) -> float:
    """Offline RMIA: share of aux records whose pairwise likelihood ratio is >= gamma.

    ``Pr(x)`` is approximated from the reference confidences through the
    ``((1+lam) p + (1-lam)) / 2`` interpolation.
    """
    aux = _need(ctx.aux_target, "auxiliary set")
    aux_ref = _need(ctx.aux_reference, "auxiliary reference outputs")
    ref = _need(ctx.reference, "reference output")
    lam = ctx.lam
    pr_x = 0.5 * np.mean((1 + lam) * ref + (1 - lam))
    pr_z = 0.5 * ((1 + lam) * aux_ref + (1 - lam))
    ratio_x = target_py / pr_x
    ratio_z = aux / pr_z
    return float(np.mean(ratio_x / np.maximum(ratio_z, CLIP) >= ctx.gamma))


def calibrate_eta(nonmember_scores: Sequence[float], fdr: float) -> float:
    """Smallest threshold whose empirical FDR on a non-member set is <= ``fdr``."""
    s = np.sort(np.asarray(nonmember_scores, dtype=float))
    if s.size == 0:
        raise ScoreInputError("empty non-member set")
    m = s.size
    # candidates are the observed scores and +inf; pick the lowest that admits <= fdr*m
    allowed = int(np.floor(fdr * m + 1e-12))
    if allowed == 0:
        return float(np.nextafter(s[-1], np.inf))
    # exactly `allowed` scores must be >= eta
    eta = s[m - allowed]
    if m - allowed - 1 >= 0 and s[m - allowed - 1] == eta:
        return float(np.nextafter(eta, np.inf))
    return float(eta)


BASELINES: dict[str, Callable[[float, BaselineContext], float]] = {
    "attack_p": attack_p,
    "attack_r": attack_r,
    "lira": lira_offline,
    "rmia": rmia_offline,
}


class ScoreOracle:
    """Counts model queries around a scoring function.

    Each scored item costs ``k`` queries (one per augmentation).  An
    optional ``budget`` caps the total.
    """

    def __init__(self, score_fn: Callable[[Any], float], k: int = 1, budget: int | None = None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.score_fn = score_fn
        self.k = int(k)
        self.budget = budget
        self.queries = 0
        self.items_scored = 0
        self._lock = threading.Lock()

    def __call__(self, item) -> float:
        with self._lock:
            if self.budget is not None and self.queries + self.k > self.budget:
                raise QueryBudgetExceeded(f"query budget {self.budget} exhausted")
            self.queries += self.k
            self.items_scored += 1
        return float(self.score_fn(item))

    score = __call__

    def reset(self) -> None:
        with self._lock:
            self.queries = 0
            self.items_scored = 0
