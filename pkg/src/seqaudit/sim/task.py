"""Synthetic labelled images for the desk-scale auditing experiment.

Images live near a low-dimensional smooth manifold: a fixed background
plus a linear combination of ``latent_dim`` smooth basis images, with class
means that overlap in latent space, plus small per-pixel noise.  The
overlap keeps the classifier from fitting every point, so a trained model
retains a measurable trace of individual training images; the small
off-manifold noise is what lets a pixel-level mark stand out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqaudit.rng import make_rng


def _smooth(images: np.ndarray) -> np.ndarray:
    """3-tap binomial blur along both spatial axes (edge-padded)."""
    k = np.array([0.25, 0.5, 0.25])
    out = images.astype(float)
    for axis in (-2, -1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (1, 1)
        p = np.pad(out, pad, mode="edge")
        length = out.shape[axis]
        out = sum(w * np.take(p, np.arange(i, i + length), axis=axis) for i, w in enumerate(k))
    return out


@dataclass(frozen=True)
class TaskConfig:
    num_classes: int = 10
    image_shape: tuple[int, int, int] = (3, 8, 8)
    latent_dim: int = 8
    class_separation: float = 1.0
    latent_scale: float = 20.0
    pixel_noise: float = 3.0
    z: int = 500
    test_size: int = 1000
    seed: int = 0


class SyntheticTask:
    """Generator of labelled images; the distribution is fixed by ``config.seed``."""

    def __init__(self, config: TaskConfig = TaskConfig()):
        self.config = config
        rng = make_rng(config.seed, "task", "geometry")
        C, shape, k = config.num_classes, config.image_shape, config.latent_dim
        self.background = 128.0 + 40.0 * _smooth(rng.standard_normal(shape))
        basis = _smooth(rng.standard_normal((k, *shape)))
        basis /= np.sqrt(np.mean(basis**2, axis=(1, 2, 3), keepdims=True))
        self.basis = basis.reshape(k, -1)
        self.class_means = config.class_separation * rng.standard_normal((C, k))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.config.image_shape)

    def sample(self, m: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """``m`` integer images ``(m, C, H, W)`` in ``[0, 255]`` and their labels."""
        cfg = self.config
        y = rng.integers(0, cfg.num_classes, size=m)
        latent = self.class_means[y] + rng.standard_normal((m, cfg.latent_dim))
        flat = self.background.reshape(1, -1) + cfg.latent_scale * latent @ self.basis
        flat = flat + cfg.pixel_noise * rng.standard_normal(flat.shape)
        x = np.clip(np.rint(flat), 0, 255).astype(np.int16)
        return x.reshape(m, *cfg.image_shape), y


def augment_views(images: np.ndarray, k: int, rng: np.random.Generator, pad: int = 1) -> np.ndarray:
    """The images themselves plus ``k - 1`` random crop-pad/flip views.

    ``images`` is ``(m, C, H, W)``; one transform per view is shared by all
    ``m`` images, so variants of the same instance are perturbed alike.
    Returns ``(k, m, C, H, W)``.
    """
    images = np.asarray(images)
    views = [images]
    H, W = images.shape[-2:]
    for _ in range(k - 1):
        padded = np.pad(images, [(0, 0), (0, 0), (pad, pad), (pad, pad)], mode="constant")
        dy, dx = rng.integers(0, 2 * pad + 1, size=2)
        v = padded[..., dy : dy + H, dx : dx + W]
        if rng.random() < 0.5:
            v = v[..., ::-1]
        views.append(v)
    return np.stack(views)
