"""Small deterministic feature extractors with pixel gradients.

They stand in for a pretrained image backbone.  Inputs are integer pixel
arrays in ``[0, 255]``; extractors see them rescaled to ``[0, 1]``.
All methods accept a single image ``(C, H, W)`` or a batch ``(m, C, H, W)``.
"""

from __future__ import annotations

import numpy as np

from seqaudit.rng import make_rng


class FeatureExtractor:
    """Interface: ``features`` and the pixel gradient of ``<u, features(x)>``."""

    dim_out: int
    image_shape: tuple[int, int, int]

    @property
    def dim_in(self) -> int:
        return int(np.prod(self.image_shape))

    def _flat(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.shape == tuple(self.image_shape)
        flat = x.reshape(1 if single else x.shape[0], -1) / 255.0
        if flat.shape[1] != self.dim_in:
            raise ValueError(f"expected images of shape {self.image_shape}, got {x.shape}")
        return flat, single

    def features(self, x) -> np.ndarray:
        flat, single = self._flat(x)
        f = self._forward(flat)
        return f[0] if single else f

    def dot_gradient(self, x, u) -> np.ndarray:
        """Gradient w.r.t. pixels of ``<u, h(x)>``; ``u`` is one vector or one per image."""
        flat, single = self._flat(x)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        g = self._vjp(flat, u) / 255.0
        shape = tuple(self.image_shape) if single else (flat.shape[0], *self.image_shape)
        return g.reshape(shape)

    def _forward(self, flat):
        raise NotImplementedError

    def _vjp(self, flat, u):
        raise NotImplementedError


class LinearExtractor(FeatureExtractor):
    def __init__(self, image_shape, dim_out: int = 64, seed: int = 0, weight=None):
        self.image_shape = tuple(image_shape)
        if weight is None:
            rng = make_rng(seed, "extractor", "linear")
            weight = rng.standard_normal((dim_out, self.dim_in)) / np.sqrt(self.dim_in)
        self.weight = np.asarray(weight, dtype=float)
        self.dim_out = self.weight.shape[0]
        if self.weight.shape[1] != self.dim_in:
            raise ValueError("weight columns must equal the pixel count")

    def _forward(self, flat):
        return flat @ self.weight.T

    def _vjp(self, flat, u):
        return np.broadcast_to(u @ self.weight, flat.shape)


class MLPExtractor(FeatureExtractor):
    """``h(x) = W2 tanh(W1 (x - 1/2) + b1)`` with fixed random weights."""

    def __init__(self, image_shape, dim_out: int = 64, hidden: int = 256, seed: int = 0):
        self.image_shape = tuple(image_shape)
        rng = make_rng(seed, "extractor", "mlp")
        self.W1 = rng.standard_normal((hidden, self.dim_in)) * (3.0 / np.sqrt(self.dim_in))
        self.b1 = 0.5 * rng.standard_normal(hidden)
        self.W2 = rng.standard_normal((dim_out, hidden)) / np.sqrt(hidden)
        self.dim_out = dim_out

    def _forward(self, flat):
        return np.tanh((flat - 0.5) @ self.W1.T + self.b1) @ self.W2.T

    def _vjp(self, flat, u):
        a = np.tanh((flat - 0.5) @ self.W1.T + self.b1)
        return ((u @ self.W2) * (1 - a**2)) @ self.W1


class ConstantExtractor(FeatureExtractor):
    def __init__(self, image_shape, dim_out: int = 8, value: float = 1.0):
        self.image_shape = tuple(image_shape)
        self.dim_out = dim_out
        self.value = value

    def _forward(self, flat):
        return np.full((flat.shape[0], self.dim_out), self.value)

    def _vjp(self, flat, u):
        return np.zeros_like(flat)


class FiniteDifferenceExtractor(FeatureExtractor):
    """Wraps an arbitrary ``fn(batch_of_unit_scaled_flat) -> features`` callable.

    Gradients come from central differences in unit-scaled pixel space; slow,
    meant for external extractors without an analytic gradient.
    """

    def __init__(self, fn, image_shape, dim_out: int, h: float = 1e-4):
        self.fn = fn
        self.image_shape = tuple(image_shape)
        self.dim_out = dim_out
        self.h = h

    def _forward(self, flat):
        return np.asarray(self.fn(flat), dtype=float)

    def _vjp(self, flat, u):
        if u.shape[0] == 1:
            u = np.broadcast_to(u, (flat.shape[0], u.shape[1]))
        g = np.zeros_like(flat)
        for c in range(flat.shape[1]):
            e = np.zeros(flat.shape[1])
            e[c] = self.h
            up = np.sum(self._forward(flat + e) * u, axis=1)
            dn = np.sum(self._forward(flat - e) * u, axis=1)
            g[:, c] = (up - dn) / (2 * self.h)
        return g


def build_extractor(name: str, image_shape, dim_out: int = 64, seed: int = 0) -> FeatureExtractor:
    if name == "linear":
        return LinearExtractor(image_shape, dim_out=dim_out, seed=seed)
    if name == "mlp":
        return MLPExtractor(image_shape, dim_out=dim_out, seed=seed)
    raise ValueError(f"unknown extractor {name!r}; choose 'linear' or 'mlp'")
