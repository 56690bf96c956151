"""Approximate unlearning updates and the audit-based verification loop.

Verification trains with the audited items (the ``b=1`` pipeline), applies
an unlearning update, audits again, and compares the post-unlearning
detection rate to the false-detection bound ``p``.  Exact unlearning is
retraining without the items, which is the ``b=0`` arm of the same trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from scipy.stats import binomtest

from seqaudit.rng import make_rng
from seqaudit.sim.experiment import (
    ExperimentConfig,
    TrialData,
    audit_table,
    prepare_trial,
    score_table,
    train_arm,
)
from seqaudit.sim.task import SyntheticTask
from seqaudit.sim.toy import ToyClassifier, prepare

METHODS = ("gradient_based", "fine_tune", "exact")


@dataclass(frozen=True)
class UnlearningSpec:
    """``batch_size`` only affects ``fine_tune`` (``None``: all items in one step)."""

    method: str = "gradient_based"
    tau: float = 1.0
    batch_size: int | None = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def random_images_like(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 256, size=np.shape(images)).astype(np.int16)


def random_wrong_labels(labels, num_classes: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels)
    shift = rng.integers(1, num_classes, size=labels.shape)
    return (labels + shift) % num_classes


def unlearning_update(
    model: ToyClassifier,
    spec: UnlearningSpec,
    images,
    labels,
    *,
    perturbed=None,
) -> ToyClassifier:
    """A new model with ``images`` (labelled ``labels``) approximately unlearned.

    gradient_based: ``f - tau * (sum grad loss(U') - sum grad loss(U))``
    where ``U'`` holds uniform random images with the same labels (or
    ``perturbed``, if given).  fine_tune: one SGD epoch at rate ``tau`` on
    the items relabelled with random wrong classes.
    """
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.shape[0] == 0:
        raise ValueError("nothing to unlearn")
    if spec.method == "exact":
        raise ValueError("exact unlearning retrains from scratch; there is no update rule")
    out = model.copy()
    if spec.tau == 0:
        return out
    rng = make_rng(spec.seed, "unlearn", spec.method)
    X = prepare(images)
    if spec.method == "gradient_based":
        Xp = prepare(random_images_like(images, rng) if perturbed is None else perturbed)
        g_fake = model.gradients(Xp, labels, reduce="sum")
        g_real = model.gradients(X, labels, reduce="sum")
        out.step({k: g_fake[k] - g_real[k] for k in g_real}, spec.tau)
        return out
    wrong = random_wrong_labels(labels, model.num_classes, rng)
    m = X.shape[0]
    bs = m if spec.batch_size is None else spec.batch_size
    order = rng.permutation(m)
    for start in range(0, m, bs):
        idx = order[start : start + bs]
        out.step(out.gradients(X[idx], wrong[idx], reduce="mean"), spec.tau)
    return out


@dataclass
class UnlearningTrial:
    trial: int
    pre_detected: int
    post_detected: int
    l_post: int
    acc_before: float
    acc_after: float


@dataclass
class UnlearningReport:
    spec: UnlearningSpec
    p: float
    trials: list[UnlearningTrial] = field(default_factory=list)

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def pre_rate(self) -> float:
        return float(np.mean([t.pre_detected for t in self.trials]))

    @property
    def post_rate(self) -> float:
        return float(np.mean([t.post_detected for t in self.trials]))

    @property
    def acc_before(self) -> float:
        return float(np.mean([t.acc_before for t in self.trials]))

    @property
    def acc_after(self) -> float:
        return float(np.mean([t.acc_after for t in self.trials]))

    @property
    def allowance(self) -> float:
        """``p`` plus three binomial standard deviations at ``p``."""
        return self.p + 3 * sqrt(self.p * (1 - self.p) / self.n_trials)

    @property
    def verdict(self) -> str:
        return "FAILED" if self.post_rate > self.allowance else "INCONCLUSIVE"

    def as_dict(self) -> dict:
        hits = sum(t.post_detected for t in self.trials)
        ci = binomtest(hits, self.n_trials).proportion_ci(method="wilson")
        return {
            "method": self.spec.method,
            "tau": self.spec.tau,
            "trials": self.n_trials,
            "p": self.p,
            "pre_detection_rate": self.pre_rate,
            "post_detection_rate": self.post_rate,
            "post_wilson_95": [float(ci.low), float(ci.high)],
            "allowance": self.allowance,
            "acc_before": self.acc_before,
            "acc_after": self.acc_after,
            "verdict": self.verdict,
        }


_TEST_SETS: dict = {}


def held_out_split(cfg: ExperimentConfig):
    key = (cfg.task, cfg.seed)
    if key not in _TEST_SETS:
        _TEST_SETS[key] = SyntheticTask(cfg.task).sample(cfg.task.test_size, make_rng(cfg.seed, "test-split"))
    return _TEST_SETS[key]


def unlearning_trial(
    cfg: ExperimentConfig, spec: UnlearningSpec, trial: int, data: TrialData | None = None, trained=None
) -> UnlearningTrial:
    """One trial; ``trained`` optionally supplies ``(f_with, f_without)`` to reuse across a sweep."""
    if cfg.oracle != "toy":
        raise ValueError("unlearning needs the toy classifier oracle")
    data = data or prepare_trial(cfg, trial)
    f_with, f_without = trained or (train_arm(cfg, data, 1), None)
    X_test, y_test = held_out_split(cfg)
    pre = audit_table(cfg, data, score_table(cfg, data, 1, f_with))
    if spec.method == "exact":
        after = f_without if f_without is not None else train_arm(cfg, data, 0)
    else:
        items = np.stack(data.marked.published)
        after = unlearning_update(
            f_with, UnlearningSpec(spec.method, spec.tau, spec.batch_size, seed=spec.seed + trial), items, data.labels
        )
    post = audit_table(cfg, data, score_table(cfg, data, 1, after))
    return UnlearningTrial(
        trial=trial,
        pre_detected=pre.decision,
        post_detected=post.decision,
        l_post=post.queries_marked,
        acc_before=f_with.accuracy(X_test, y_test),
        acc_after=after.accuracy(X_test, y_test),
    )


def verify_unlearning(cfg: ExperimentConfig, spec: UnlearningSpec, trials: int) -> UnlearningReport:
    report = UnlearningReport(spec, cfg.p)
    for t in range(trials):
        report.trials.append(unlearning_trial(cfg, spec, t))
    return report


def tau_sweep(cfg: ExperimentConfig, method: str, taus, trials: int, batch_size: int | None = 1) -> list[UnlearningReport]:
    """Reports for each ``tau``, sharing trial data and trained models across the sweep."""
    reports = [UnlearningReport(UnlearningSpec(method, float(tau), batch_size), cfg.p) for tau in taus]
    for t in range(trials):
        data = prepare_trial(cfg, t)
        trained = (train_arm(cfg, data, 1), None)
        for rep in reports:
            rep.trials.append(unlearning_trial(cfg, rep.spec, t, data, trained))
    return reports
