"""Monte Carlo harness for the data-use auditing experiment.

One trial: sample the audited instances X and a disjoint background set Z,
mark X, train on Z plus the published variants (``b=1``) or on Z alone
(``b=0``), then run the sequential detector.  The two arms of a trial share
every random draw except the training set, so paired differences are low
variance.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from seqaudit.detector import AuditInput, DetectionOutcome, detect
from seqaudit.extractors import build_extractor
from seqaudit.marking import MarkedDataset, MarkingConfig, RawInstance, mark_dataset
from seqaudit.rng import derive_seed, make_rng
from seqaudit.scoring import ScoreOracle
from seqaudit.sim.analytic import AnalyticScoreModel
from seqaudit.sim.task import SyntheticTask, TaskConfig, augment_views
from seqaudit.sim.toy import ToyClassifier, TrainConfig, classifier_score_table, train_classifier

ORACLES = ("toy", "analytic")


@dataclass(frozen=True)
class ExperimentConfig:
    q: int = 1
    n: int = 100
    p: float = 0.05
    alpha: float = 0.001
    epsilon: float = 10.0
    k: int = 4
    oracle: str = "toy"
    mu: float = 0.0
    noise: float = 1.0
    score_noise: float = 0.0
    extractor: str = "mlp"
    feature_dim: int = 64
    sampling: str = "uniform"
    intersect: bool = True
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    marking: MarkingConfig = field(default_factory=lambda: MarkingConfig(dispersion_iterations=100))

    def __post_init__(self):
        if self.oracle not in ORACLES:
            raise ValueError(f"oracle must be one of {ORACLES}, got {self.oracle!r}")
        if self.q < 1 or self.n < 2 or self.k < 1:
            raise ValueError("need q >= 1, n >= 2, k >= 1")
        if not 0 < self.alpha < self.p <= 1:
            raise ValueError("need 0 < alpha < p <= 1")
        if self.score_noise < 0:
            raise ValueError("score_noise must be >= 0")


@dataclass
class TrialData:
    """Everything a trial draws before the training set is fixed."""

    trial: int
    published_j: list[int]
    labels: np.ndarray | None = None
    background: tuple[np.ndarray, np.ndarray] | None = None
    marked: MarkedDataset | None = None
    views: list[np.ndarray] | None = None
    base: np.ndarray | None = None
    extra_noise: np.ndarray | None = None


@dataclass
class TrialResult:
    trial: int
    b: int
    outcome: DetectionOutcome
    accuracy: float | None = None

    @property
    def b_prime(self) -> int:
        return self.outcome.decision

    @property
    def l(self) -> int:
        """Queries of marked items (published plus hidden) in units of items."""
        return self.outcome.queries_marked

    def row(self) -> tuple[int, int, int, int]:
        return (self.trial, self.b, self.b_prime, self.l)


def _sample_disjoint(task: SyntheticTask, cfg: ExperimentConfig, trial: int):
    for attempt in range(100):
        Z, yZ = task.sample(cfg.task.z, make_rng(cfg.seed, "trial", trial, "Z", attempt))
        X, yX = task.sample(cfg.q, make_rng(cfg.seed, "trial", trial, "X", attempt))
        flatZ = {row.tobytes() for row in Z.reshape(len(Z), -1)}
        if not any(row.tobytes() in flatZ for row in X.reshape(len(X), -1)):
            return (Z, yZ), (X, yX)
    raise RuntimeError("could not draw X disjoint from Z")


_EXTRACTORS: dict = {}


def _extractor(cfg: ExperimentConfig):
    key = (cfg.extractor, tuple(cfg.task.image_shape), cfg.feature_dim, cfg.seed)
    if key not in _EXTRACTORS:
        _EXTRACTORS[key] = build_extractor(cfg.extractor, tuple(cfg.task.image_shape), cfg.feature_dim, seed=cfg.seed)
    return _EXTRACTORS[key]


def prepare_trial(cfg: ExperimentConfig, trial: int) -> TrialData:
    if cfg.oracle == "analytic":
        # per-instance streams: the first q' rows coincide for any q' <= q
        pub = [int(make_rng(cfg.seed, "trial", trial, "publish", i).integers(cfg.n)) for i in range(cfg.q)]
        base = np.stack([make_rng(cfg.seed, "trial", trial, "scores", i).standard_normal(cfg.n) for i in range(cfg.q)])
        return TrialData(trial, pub, base=base)

    task = SyntheticTask(cfg.task)
    background, (X, yX) = _sample_disjoint(task, cfg, trial)
    raw = [RawInstance(X[i], id=f"{trial}-{i}") for i in range(cfg.q)]
    marked = mark_dataset(raw, _extractor(cfg), cfg.n, cfg.epsilon, cfg.marking, seed=derive_seed(cfg.seed, "trial", trial))
    views = [
        augment_views(fam.variants, cfg.k, make_rng(cfg.seed, "trial", trial, "augment", i))
        for i, fam in enumerate(marked.families)
    ]
    extra = None
    if cfg.score_noise > 0:
        extra = cfg.score_noise * make_rng(cfg.seed, "trial", trial, "score-noise").standard_normal((cfg.q, cfg.n))
    return TrialData(trial, marked.published_index, labels=yX, background=background, marked=marked, views=views, extra_noise=extra)


def train_arm(cfg: ExperimentConfig, data: TrialData, b: int) -> ToyClassifier:
    Z, yZ = data.background
    if b:
        images = np.concatenate([Z, np.stack(data.marked.published)])
        labels = np.concatenate([yZ, data.labels])
    else:
        images, labels = Z, yZ
    return train_classifier(images, labels, cfg.task.num_classes, cfg.train)


def score_table(cfg: ExperimentConfig, data: TrialData, b: int, model: ToyClassifier | None = None) -> np.ndarray:
    """Scores ``(q, n)`` of every variant under arm ``b``."""
    if cfg.oracle == "analytic":
        return AnalyticScoreModel(cfg.mu, cfg.noise).score_table(data.base, data.published_j, bool(b))
    table = np.stack([classifier_score_table(model, data.views[i], int(data.labels[i])) for i in range(cfg.q)])
    if data.extra_noise is not None:
        table = table + data.extra_noise
    return table


def audit_table(cfg: ExperimentConfig, data: TrialData, table: np.ndarray) -> DetectionOutcome:
    audit = AuditInput.from_score_keys(cfg.q, cfg.n, data.published_j)
    oracle = ScoreOracle(lambda key: table[key], k=cfg.k)
    return detect(
        audit,
        oracle,
        cfg.p,
        cfg.alpha,
        make_rng(cfg.seed, "trial", data.trial, "detect"),
        sampling=cfg.sampling,
        intersect=cfg.intersect,
    )


def run_experiment(b: int, cfg: ExperimentConfig, trial: int = 0, data: TrialData | None = None) -> TrialResult:
    if b not in (0, 1):
        raise ValueError("b must be 0 or 1")
    data = data or prepare_trial(cfg, trial)
    model = train_arm(cfg, data, b) if cfg.oracle == "toy" else None
    return TrialResult(trial, b, audit_table(cfg, data, score_table(cfg, data, b, model)))


def run_paired(cfg: ExperimentConfig, trial: int) -> tuple[TrialResult, TrialResult]:
    data = prepare_trial(cfg, trial)
    return run_experiment(0, cfg, trial, data), run_experiment(1, cfg, trial, data)


@dataclass
class RateEstimate:
    b: int
    trials: int
    detections: int
    ci_low: float
    ci_high: float
    l_cdf: list[tuple[int, float]]

    @property
    def rate(self) -> float:
        return self.detections / self.trials

    def as_dict(self) -> dict:
        return {
            "b": self.b,
            "trials": self.trials,
            "detections": self.detections,
            "rate": self.rate,
            "wilson_95": [self.ci_low, self.ci_high],
            "l_cdf": [[l, f] for l, f in self.l_cdf],
        }


def l_cdf(results: list[TrialResult]) -> list[tuple[int, float]]:
    """Empirical CDF of ``l`` over the trials that detected."""
    ls = np.sort([r.l for r in results if r.b_prime == 1])
    if ls.size == 0:
        return []
    values, counts = np.unique(ls, return_counts=True)
    return [(int(v), float(c)) for v, c in zip(values, np.cumsum(counts) / ls.size)]


def summarize(results: list[TrialResult], b: int) -> RateEstimate:
    arm = [r for r in results if r.b == b]
    if not arm:
        raise ValueError(f"no trials for arm b={b}")
    hits = sum(r.b_prime for r in arm)
    ci = binomtest(hits, len(arm)).proportion_ci(confidence_level=0.95, method="wilson")
    return RateEstimate(b, len(arm), hits, float(ci.low), float(ci.high), l_cdf(arm))


def _paired_job(args):
    cfg, trial = args
    return run_paired(cfg, trial)


def _single_job(args):
    cfg, trial, b = args
    return run_experiment(b, cfg, trial)


def run_trials(cfg: ExperimentConfig, trials: int, arms=(0, 1), workers: int = 1) -> list[TrialResult]:
    """Trials ``0..trials-1`` for the requested arms, in trial order.

    Results do not depend on ``workers``: every trial draws from its own
    labelled streams.
    """
    arms = tuple(arms)
    paired = set(arms) == {0, 1}
    jobs = [(cfg, t) for t in range(trials)] if paired else [(cfg, t, b) for t in range(trials) for b in arms]
    fn = _paired_job if paired else _single_job
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        out = [fn(j) for j in jobs]
    if paired:
        return [r for pair in out for r in pair]
    return out


def estimate_rates(cfg: ExperimentConfig, trials: int, arms=(0, 1), workers: int = 1) -> dict[int, RateEstimate]:
    results = run_trials(cfg, trials, arms, workers)
    return {b: summarize(results, b) for b in arms}
