"""Generation of maximally distinct marked variants of an image.

Two steps, per raw instance:

1. spread ``n`` unit vectors over the sphere in feature space so their
   smallest pairwise distance is large;
2. for each unit vector ``u_j``, run projected gradient ascent on the mark
   ``m_j`` to maximize ``<u_j, h(x + m_j)>`` inside the l-inf ball of radius
   ``epsilon``, keeping ``x + m_j`` a valid 8-bit image.

One variant per instance is then published at random; the rest are kept
as the hidden set used at detection time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

from seqaudit.extractors import FeatureExtractor
from seqaudit.rng import make_rng


MODES = ("ouv+om", "ruv+om", "rm")


@dataclass(frozen=True)
class MarkingConfig:
    """Hyperparameters of the mark generator.

    ``step_size`` defaults to ``epsilon / 10`` per signed-gradient step.
    ``mode`` selects optimized unit vectors + optimized marks (default),
    random unit vectors + optimized marks, or random +/- epsilon marks.
    """

    steps: int = 40
    step_size: float | None = None
    init: str = "zero"
    mode: str = "ouv+om"
    dispersion_iterations: int = 500
    riesz_s: float = 2.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.init not in ("zero", "uniform"):
            raise ValueError(f"init must be 'zero' or 'uniform', got {self.init!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class RawInstance:
    pixels: np.ndarray
    id: str

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3:
            raise ValueError(f"pixels must be (channels, height, width), got shape {px.shape}")
        if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
            raise ValueError("pixels must be integers in [0, 255]")
        self.pixels = px.astype(np.int16)


@dataclass
class MarkedFamily:
    """All ``n`` marked variants of one raw instance.

    ``published_index`` is 0-based.
    """

    raw: RawInstance
    marks: np.ndarray
    published_index: int
    epsilon: float
    config: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.marks.shape[0]

    @property
    def variants(self) -> np.ndarray:
        return self.raw.pixels[None].astype(np.int16) + self.marks

    @property
    def published(self) -> np.ndarray:
        return self.variants[self.published_index]

    @property
    def hidden_indices(self) -> list[int]:
        return [j for j in range(self.n) if j != self.published_index]

    def check(self) -> None:
        """Raise if any mark breaks the l-inf budget or pixel validity."""
        if np.abs(self.marks).max(initial=0) > self.epsilon:
            raise AssertionError("mark exceeds epsilon")
        v = self.variants
        if v.min() < 0 or v.max() > 255:
            raise AssertionError("marked variant leaves [0, 255]")

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            raw=self.raw.pixels,
            marks=self.marks,
            published_index=np.int64(self.published_index),
            epsilon=np.float64(self.epsilon),
            id=np.str_(self.raw.id),
            config=np.str_(json.dumps(self.config, sort_keys=True)),
        )

    @classmethod
    def load(cls, path) -> "MarkedFamily":
        with np.load(path, allow_pickle=False) as z:
            return cls(
                raw=RawInstance(z["raw"], str(z["id"])),
                marks=z["marks"].astype(np.int16),
                published_index=int(z["published_index"]),
                epsilon=float(z["epsilon"]),
                config=json.loads(str(z["config"])),
            )


# ---------------------------------------------------------------------------
# step 1: unit vectors


def _min_distance(X: np.ndarray) -> float:
    return float(pdist(X).min())


def random_unit_vectors(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def disperse_unit_vectors(
    n: int, d: int, iterations: int = 500, seed: int = 0, s: float = 2.0, mode: str = "energy"
) -> np.ndarray:
    """``n`` unit vectors in ``R^d`` with a large minimum pairwise distance.

    Gradient descent on the Riesz ``s``-energy ``sum 1/|x_i - x_j|^s`` with
    renormalization after every step, starting from random directions.  The
    configuration with the best minimum distance seen (the start included)
    is returned, so the result never does worse than its random start.
    ``mode="random"`` returns the random start itself.
    """
    if n < 2 or d < 2:
        raise ValueError("need n >= 2 and d >= 2")
    rng = make_rng(seed, "dispersion", n, d)
    X = random_unit_vectors(n, d, rng)
    if mode == "random":
        return X
    if mode != "energy":
        raise ValueError(f"unknown dispersion mode {mode!r}")

    best, best_min = X.copy(), _min_distance(X)
    eye = np.eye(n, dtype=bool)
    lr0 = 0.5 / n
    for it in range(iterations):
        G = X @ X.T
        d2 = np.clip(2.0 - 2.0 * G, 1e-12, None)
        w = s / d2 ** (s / 2 + 1)
        w[eye] = 0.0
        # minus the energy gradient: sum_j w_ij (x_i - x_j)
        force = w.sum(axis=1, keepdims=True) * X - w @ X
        # drop the radial part; only tangential motion matters on the sphere
        force -= np.sum(force * X, axis=1, keepdims=True) * X
        scale = np.abs(force).max()
        if scale == 0:
            break
        lr = lr0 * (1.0 - it / iterations) + 1e-4
        X = X + (lr / scale) * force
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        m = _min_distance(X)
        if m > best_min:
            best, best_min = X.copy(), m
    return best


# ---------------------------------------------------------------------------
# step 2: marks


def project_mark(raw, mark, epsilon: float) -> np.ndarray:
    """Clamp a real-valued mark to the l-inf ball and the valid pixel range, then round.

    Idempotent.  Rounding happens after clamping to integer bounds, so the
    result still satisfies both constraints.
    """
    raw = np.asarray(raw, dtype=float)
    mark = np.asarray(mark, dtype=float)
    eps = np.floor(epsilon)
    lo = np.maximum(-eps, -raw)
    hi = np.minimum(eps, 255.0 - raw)
    return np.clip(np.rint(np.clip(mark, lo, hi)), lo, hi).astype(np.int16)


def _objective(extractor: FeatureExtractor, raw, marks, U) -> np.ndarray:
    feats = extractor.features(raw[None] + marks)
    return np.sum(feats * U, axis=1)


def generate_marks(
    raw,
    extractor: FeatureExtractor,
    n: int,
    epsilon: float,
    steps: int = 40,
    step_size: float | None = None,
    seed: int = 0,
    *,
    config: MarkingConfig | None = None,
    unit_vectors=None,
) -> np.ndarray:
    """Marks ``(n, C, H, W)`` for one raw image.

    Each iterate takes a signed-gradient step in real space and is then
    projected/rounded; the best projected iterate per variant is kept, so
    the objective of the returned marks is the running maximum.
    """
    cfg = config or MarkingConfig(steps=steps, step_size=step_size)
    raw = np.asarray(raw, dtype=float)
    rng = make_rng(seed, "marks")
    shape = (n, *raw.shape)

    if cfg.mode == "rm":
        signs = rng.choice(np.array([-1.0, 1.0]), size=shape)
        return project_mark(raw[None], signs * epsilon, epsilon)

    if unit_vectors is not None:
        U = np.asarray(unit_vectors, dtype=float)
        if U.shape != (n, extractor.dim_out):
            raise ValueError(f"unit_vectors must have shape {(n, extractor.dim_out)}")
    elif cfg.mode == "ruv+om":
        U = random_unit_vectors(n, extractor.dim_out, rng)
    else:
        U = disperse_unit_vectors(n, extractor.dim_out, cfg.dispersion_iterations, seed=seed, s=cfg.riesz_s)

    step = cfg.step_size if cfg.step_size is not None else epsilon / 10.0
    if cfg.init == "uniform":
        real = rng.uniform(-epsilon, epsilon, size=shape)
    else:
        real = np.zeros(shape)
    marks = project_mark(raw[None], real, epsilon)
    best = marks.copy()
    best_obj = _objective(extractor, raw, marks, U)
    box_lo = np.maximum(-epsilon, -raw)[None]
    box_hi = np.minimum(epsilon, 255.0 - raw)[None]
    for _ in range(cfg.steps):
        g = extractor.dot_gradient(raw[None] + marks, U)
        real = np.clip(real + step * np.sign(g), box_lo, box_hi)
        marks = project_mark(raw[None], real, epsilon)
        obj = _objective(extractor, raw, marks, U)
        better = obj > best_obj
        best[better] = marks[better]
        best_obj = np.where(better, obj, best_obj)
    return best


def min_pairwise_feature_distance(variants, extractor: FeatureExtractor) -> float:
    v = np.asarray(variants)
    if v.shape[0] < 2:
        raise ValueError("need at least two variants")
    return _min_distance(extractor.features(v))


# ---------------------------------------------------------------------------
# dataset level


@dataclass
class MarkedDataset:
    families: list[MarkedFamily]

    @property
    def q(self) -> int:
        return len(self.families)

    @property
    def n(self) -> int:
        return self.families[0].n

    @property
    def published(self) -> list[np.ndarray]:
        return [f.published for f in self.families]

    @property
    def published_index(self) -> list[int]:
        return [f.published_index for f in self.families]

    def hidden(self) -> tuple[list[np.ndarray], list[int], list[int]]:
        """Hidden variants with their instance index and variant index."""
        items, owner, js = [], [], []
        for i, fam in enumerate(self.families):
            variants = fam.variants
            for j in fam.hidden_indices:
                items.append(variants[j])
                owner.append(i)
                js.append(j)
        return items, owner, js

    def audit_input(self):
        from seqaudit.detector import AuditInput

        hidden, owner, js = self.hidden()
        return AuditInput(self.published, self.published_index, hidden, owner, js, self.n)


def mark_dataset(
    dataset: Sequence[RawInstance],
    extractor: FeatureExtractor,
    n: int,
    epsilon: float,
    config: MarkingConfig | None = None,
    seed: int = 0,
) -> MarkedDataset:
    """Mark every instance and pick its published variant uniformly at random.

    Each instance gets its own stream derived from ``(seed, instance id)``.
    """
    cfg = config or MarkingConfig()
    ids = [inst.id for inst in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate instance ids in dataset")
    if len(ids) == 0:
        raise ValueError("empty dataset")
    families = []
    for inst in dataset:
        inst_seed = int(make_rng(seed, "instance", str(inst.id)).integers(2**62))
        marks = generate_marks(inst.pixels, extractor, n, epsilon, seed=inst_seed, config=cfg)
        pub = int(make_rng(seed, "publish", str(inst.id)).integers(n))
        families.append(
            MarkedFamily(raw=inst, marks=marks, published_index=pub, epsilon=float(epsilon), config=asdict(cfg))
        )
    return MarkedDataset(families)
