"""Gaussian surrogate for memorization scores.

Every variant scores ``noise * N(0, 1)``; if the instance was used in
training, the published variant gets an extra ``mu``.  The standard normal
draws are fixed per trial, so sweeping ``mu`` reuses them (common random
numbers) and raising ``mu`` can only turn lost comparisons into wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AnalyticScoreModel:
    mu: float = 0.0
    noise: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.noise <= 0:
            raise ValueError("noise must be > 0")

    def score_table(self, base: np.ndarray, published_j, used) -> np.ndarray:
        """Scores ``(q, n)`` from standard normal draws ``base`` of the same shape.

        ``used`` is one flag per instance (or a single bool for all).
        """
        base = np.asarray(base, dtype=float)
        q = base.shape[0]
        used = np.broadcast_to(np.asarray(used, dtype=bool), (q,))
        scores = self.noise * base
        rows = np.arange(q)
        scores[rows, np.asarray(published_j)] += self.mu * used
        return scores

    def sample(self, q: int, n: int, published_j, used, rng: np.random.Generator) -> np.ndarray:
        return self.score_table(rng.standard_normal((q, n)), published_j, used)
