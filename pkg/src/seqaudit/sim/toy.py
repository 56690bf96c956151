"""Softmax classifiers small enough to train thousands of times on a CPU."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from seqaudit.rng import make_rng
from seqaudit.scoring import modified_entropy_batch


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """``hidden=0`` gives multinomial logistic regression on pixels.

    ``batch_size=None`` means full-batch gradient descent, which is
    deterministic regardless of ``seed``.
    """

    epochs: int = 300
    lr: float = 5.0
    batch_size: int | None = None
    hidden: int = 0
    weight_decay: float = 0.0
    seed: int = 0


def prepare(images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=float)
    return x.reshape(x.shape[0], -1) / 255.0 - 0.5


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ToyClassifier:
    num_classes: int
    dim_in: int
    hidden: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, num_classes: int, dim_in: int, hidden: int = 0, seed: int = 0) -> "ToyClassifier":
        params = {}
        if hidden:
            rng = make_rng(seed, "toy-init")
            params["W1"] = rng.standard_normal((dim_in, hidden)) / np.sqrt(dim_in)
            params["b1"] = np.zeros(hidden)
            params["W"] = rng.standard_normal((hidden, num_classes)) * 0.01
        else:
            params["W"] = np.zeros((dim_in, num_classes))
        params["b"] = np.zeros(num_classes)
        return cls(num_classes, dim_in, hidden, params)

    def copy(self) -> "ToyClassifier":
        return ToyClassifier(self.num_classes, self.dim_in, self.hidden, {k: v.copy() for k, v in self.params.items()})

    def _hidden(self, X):
        return np.tanh(X @ self.params["W1"] + self.params["b1"])

    def predict_proba(self, images) -> np.ndarray:
        return self.proba_flat(prepare(images))

    def logits_flat(self, X) -> np.ndarray:
        H = self._hidden(X) if self.hidden else X
        return H @ self.params["W"] + self.params["b"]

    def proba_flat(self, X) -> np.ndarray:
        return _softmax(self.logits_flat(X))

    def loss(self, images, labels) -> np.ndarray:
        """Per-example cross-entropy, via log-sum-exp so saturation stays finite."""
        Z = self.logits_flat(prepare(images))
        zmax = Z.max(axis=1)
        lse = zmax + np.log(np.sum(np.exp(Z - zmax[:, None]), axis=1))
        return lse - Z[np.arange(len(labels)), np.asarray(labels)]

    def accuracy(self, images, labels) -> float:
        return float(np.mean(self.predict_proba(images).argmax(axis=1) == np.asarray(labels)))

    def gradients(self, X, labels, reduce: str = "sum") -> dict[str, np.ndarray]:
        """Gradient of the summed (or mean) cross-entropy w.r.t. every parameter."""
        Y = np.eye(self.num_classes)[np.asarray(labels)]
        if self.hidden:
            H = self._hidden(X)
            G = _softmax(H @ self.params["W"] + self.params["b"]) - Y
            grads = {"W": H.T @ G, "b": G.sum(axis=0)}
            dH = (G @ self.params["W"].T) * (1 - H**2)
            grads["W1"] = X.T @ dH
            grads["b1"] = dH.sum(axis=0)
        else:
            G = _softmax(X @ self.params["W"] + self.params["b"]) - Y
            grads = {"W": X.T @ G, "b": G.sum(axis=0)}
        if reduce == "mean":
            grads = {k: g / X.shape[0] for k, g in grads.items()}
        return grads

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for k, g in grads.items():
            self.params[k] = self.params[k] - lr * g

    def fit(self, images, labels, config: TrainConfig) -> "ToyClassifier":
        X = prepare(images)
        labels = np.asarray(labels)
        rng = make_rng(config.seed, "toy-batches")
        with np.errstate(over="ignore", invalid="ignore"):
            self._descend(X, labels, config, rng)
        if not all(np.all(np.isfinite(v)) for v in self.params.values()):
            raise TrainingDivergedError("non-finite parameters after training")
        return self

    def _descend(self, X, labels, config, rng) -> None:
        m = X.shape[0]
        for _ in range(config.epochs):
            if config.batch_size is None or config.batch_size >= m:
                batches = [np.arange(m)]
            else:
                order = rng.permutation(m)
                batches = [order[i : i + config.batch_size] for i in range(0, m, config.batch_size)]
            for idx in batches:
                grads = self.gradients(X[idx], labels[idx], reduce="mean")
                if config.weight_decay:
                    for k in grads:
                        if k.startswith("W"):
                            grads[k] = grads[k] + config.weight_decay * self.params[k]
                self.step(grads, config.lr)
            if not all(np.all(np.isfinite(v)) for v in self.params.values()):
                return


def train_classifier(images, labels, num_classes: int, config: TrainConfig) -> ToyClassifier:
    dim_in = int(np.prod(np.asarray(images).shape[1:]))
    model = ToyClassifier.init(num_classes, dim_in, hidden=config.hidden, seed=config.seed)
    model.fit(images, labels, config)
    loss = model.loss(images, labels)
    if not np.all(np.isfinite(loss)):
        raise TrainingDivergedError("non-finite training loss")
    return model


def classifier_score_table(model: ToyClassifier, views: np.ndarray, label: int) -> np.ndarray:
    """Averaged-output modified-entropy score for each variant.

    ``views`` is ``(k, n, C, H, W)``: ``k`` augmented copies of ``n`` variants.
    """
    k, n = views.shape[:2]
    probs = model.predict_proba(views.reshape(k * n, *views.shape[2:])).reshape(k, n, -1)
    mean = probs.mean(axis=0)
    return modified_entropy_batch(mean, np.full(n, label))
