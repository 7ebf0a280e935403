"""Iteration-supervised quality scoring with multiple binary heads.

Images get a pseudo quality label from the training iteration that
produced them (real images get 1); each of N linear heads learns
whether that label clears its threshold, and the final score is the
average of the N head probabilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .features import FeatureMatrix, IterationTag, read_features

DEFAULT_NUM_HEADS = 8
DEFAULT_S_G = 0.9  # ceiling pseudo-label for generated images


def uniform_thresholds(num_heads: int) -> np.ndarray:
    """T^i = i/N for i = 1..N; the last threshold is exactly 1."""
    if num_heads < 1:
        raise ValueError("need at least one head")
    return np.arange(1, num_heads + 1) / num_heads


def pseudo_label(tag: IterationTag, s_g: float = DEFAULT_S_G) -> float:
    """Surrogate quality: 1 for real images, s_g * iter/max_iter otherwise."""
    if not 0 < s_g < 1:
        raise ValueError("s_g must be in (0, 1)")
    if tag.is_real:
        return 1.0
    return s_g * tag.iter / tag.max_iter


def binarize_labels(pseudo_score: float, thresholds: np.ndarray) -> np.ndarray:
    """Per-head labels: 1 where the pseudo score clears the threshold.

    Thresholds increase, so the label vector is non-increasing.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    return (pseudo_score >= thresholds).astype(np.int8)


@dataclass(frozen=True)
class LabeledFeature:
    feature: np.ndarray
    tag: IterationTag
    pseudo_score: float

    def __post_init__(self):
        object.__setattr__(
            self, "feature", np.asarray(self.feature, dtype=np.float64)
        )
        if self.tag.is_real:
            if self.pseudo_score != 1.0:
                raise DataError("real images must carry pseudo score 1")
        elif not 0.0 <= self.pseudo_score < 1.0:
            raise DataError("generated pseudo scores lie in [0, s_g]")


def label_features(
    features: FeatureMatrix, tags: list[IterationTag], s_g: float = DEFAULT_S_G
) -> list[LabeledFeature]:
    if len(tags) != features.count:
        raise DataError("one iteration tag per feature row required")
    return [
        LabeledFeature(feature=features.data[i], tag=t, pseudo_score=pseudo_label(t, s_g))
        for i, t in enumerate(tags)
    ]


@dataclass(frozen=True)
class MbcModel:
    """N increasing thresholds and N logistic heads over feature vectors."""

    thresholds: np.ndarray  # (N,), strictly increasing, last == 1
    weights: np.ndarray  # (N, D)
    biases: np.ndarray  # (N,)
    s_g: float = DEFAULT_S_G
    # per-epoch summed-BCE traces from training; not serialized
    train_loss_trace: tuple[float, ...] | None = field(default=None, compare=False)
    val_loss_trace: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "thresholds", np.asarray(self.thresholds, dtype=np.float64)
        )
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "biases", np.asarray(self.biases, dtype=np.float64))
        t = self.thresholds
        if t.ndim != 1 or t.size == 0:
            raise DataError("thresholds must be a nonempty vector")
        if (np.diff(t) <= 0).any() or t[0] <= 0 or t[-1] != 1.0:
            raise DataError("thresholds must satisfy 0 < T1 < ... < TN = 1")
        if not 0 < self.s_g < 1:
            raise DataError("s_g must be in (0, 1)")
        if self.s_g >= t[-1]:
            raise DataError(
                "s_g must stay below the top threshold so real and "
                "best-generated labels differ on at least one head"
            )
        n = t.size
        if self.weights.ndim != 2 or self.weights.shape[0] != n:
            raise DataError("one weight row per head required")
        if self.biases.shape != (n,):
            raise DataError("one bias per head required")

    @property
    def num_heads(self) -> int:
        return self.thresholds.size

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class MbcTrainConfig:
    epochs: int = 100
    batch_size: int = 512
    learning_rate: float = 0.05
    l2_penalty: float = 1e-4
    seed: int = 0
    # step schedule: divide the rate by lr_decay every lr_step_epochs
    lr_step_epochs: int = 25
    lr_decay: float = 10.0
    val_ratio: float = 0.1

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.lr_step_epochs) < 1:
            raise ValueError("epochs, batch_size, lr_step_epochs must be positive")
        if min(self.learning_rate, self.l2_penalty, self.lr_decay) <= 0:
            raise ValueError("learning_rate, l2_penalty, lr_decay must be positive")
        if not 0 < self.val_ratio < 1:
            raise ValueError("val_ratio must be in (0, 1)")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce(probs: np.ndarray, labels: np.ndarray) -> float:
    """Summed binary cross-entropy over all heads, mean over samples."""
    eps = 1e-12
    p = np.clip(probs, eps, 1.0 - eps)
    losses = -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
    return float(losses.sum(axis=1).mean())


def train_mbc(
    dataset: list[LabeledFeature],
    num_heads: int = DEFAULT_NUM_HEADS,
    config: MbcTrainConfig = MbcTrainConfig(),
    s_g: float = DEFAULT_S_G,
) -> MbcModel:
    """Jointly train the N heads with mini-batch gradient descent on the
    summed per-head cross-entropy plus an L2 penalty.

    A held-out validation split picks the best epoch's parameters.
    Fails up front if any head would see only one class.
    """
    if not dataset:
        raise DataError("empty training set")
    thresholds = uniform_thresholds(num_heads)
    x = np.stack([s.feature for s in dataset])
    scores = np.array([s.pseudo_score for s in dataset])
    labels = (scores[:, None] >= thresholds[None, :]).astype(np.float64)
    for i in range(num_heads):
        if labels[:, i].min() == labels[:, i].max():
            raise DataError(
                f"head {i + 1} (threshold {thresholds[i]:g}) has single-class data"
            )
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    perm = rng.permutation(n)
    n_val = max(1, int(math.floor(config.val_ratio * n + 0.5)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise DataError("training set too small for the validation split")
    xt, yt = x[train_idx], labels[train_idx]
    xv, yv = x[val_idx], labels[val_idx]

    # feature standardization keeps a single learning rate workable;
    # folded back into the weights afterwards
    mu = xt.mean(axis=0)
    sd = xt.std(axis=0)
    sd[sd == 0] = 1.0
    xt = (xt - mu) / sd
    xv_s = (xv - mu) / sd

    d = x.shape[1]
    w = np.zeros((num_heads, d))
    b = np.zeros(num_heads)
    best = (np.inf, w.copy(), b.copy())
    train_trace: list[float] = []
    val_trace: list[float] = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        if epoch > 0 and epoch % config.lr_step_epochs == 0:
            lr /= config.lr_decay
        order = rng.permutation(xt.shape[0])
        for start in range(0, xt.shape[0], config.batch_size):
            rows = order[start : start + config.batch_size]
            xb, yb = xt[rows], yt[rows]
            probs = _sigmoid(xb @ w.T + b)
            err = probs - yb  # (batch, N)
            grad_w = err.T @ xb / len(rows) + config.l2_penalty * w
            grad_b = err.mean(axis=0)
            w -= lr * grad_w
            b -= lr * grad_b
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericalError("training diverged: non-finite parameters")
        train_trace.append(_bce(_sigmoid(xt @ w.T + b), yt))
        val_loss = _bce(_sigmoid(xv_s @ w.T + b), yv)
        val_trace.append(val_loss)
        if not np.isfinite(val_loss):
            raise NumericalError("training diverged: non-finite validation loss")
        if val_loss < best[0]:
            best = (val_loss, w.copy(), b.copy())
    _, w, b = best
    # undo standardization: w'x + b on raw features
    w_raw = w / sd[None, :]
    b_raw = b - w_raw @ mu
    return MbcModel(
        thresholds=thresholds,
        weights=w_raw,
        biases=b_raw,
        s_g=s_g,
        train_loss_trace=tuple(train_trace),
        val_loss_trace=tuple(val_trace),
    )


def head_probabilities(model: MbcModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DataError(f"point has shape {x.shape}, model has dim {model.dim}")
    if not np.isfinite(x).all():
        raise DataError("point contains non-finite values")
    return _sigmoid(model.weights @ x + model.biases)


def score_mbc(model: MbcModel, x) -> float:
    """Average head probability, always strictly inside (0, 1)."""
    return float(head_probabilities(model, x).mean())


def score_mbc_batch(model: MbcModel, batch: FeatureMatrix) -> np.ndarray:
    if batch.count == 0:
        return np.empty(0)
    if batch.dim != model.dim:
        raise DataError(f"batch dim {batch.dim} != model dim {model.dim}")
    return _sigmoid(batch.data @ model.weights.T + model.biases).mean(axis=1)


def save_mbc(model: MbcModel, destination) -> None:
    doc = {
        "thresholds": model.thresholds.tolist(),
        "heads": [
            {"weights": model.weights[i].tolist(), "bias": float(model.biases[i])}
            for i in range(model.num_heads)
        ],
        "s_g": model.s_g,
        "dim": model.dim,
    }
    Path(destination).write_text(json.dumps(doc))


def load_mbc(source) -> MbcModel:
    doc = json.loads(Path(source).read_text())
    heads = doc["heads"]
    model = MbcModel(
        thresholds=np.array(doc["thresholds"], dtype=np.float64),
        weights=np.array([h["weights"] for h in heads], dtype=np.float64),
        biases=np.array([h["bias"] for h in heads], dtype=np.float64),
        s_g=float(doc["s_g"]),
    )
    if model.dim != doc["dim"]:
        raise DataError(f"{source}: declared dim disagrees with head weights")
    return model


def read_training_manifest(source, s_g: float = DEFAULT_S_G) -> list[LabeledFeature]:
    """Load a JSON-lines manifest of {feature_file, row, iter, max_iter,
    is_real} records into labeled features."""
    cache: dict[str, FeatureMatrix] = {}
    out = []
    base = Path(source).parent
    for line_no, line in enumerate(Path(source).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            path = Path(rec["feature_file"])
            if not path.is_absolute():
                path = base / path
            key = str(path)
            if key not in cache:
                cache[key] = read_features(path)
            tag = IterationTag(
                iter=int(rec.get("iter", 0)),
                max_iter=int(rec.get("max_iter", 1)),
                is_real=bool(rec["is_real"]),
            )
            feature = cache[key].data[int(rec["row"])]
        except (KeyError, json.JSONDecodeError, IndexError) as exc:
            raise DataError(f"{source}:{line_no}: bad manifest record ({exc})")
        out.append(
            LabeledFeature(feature=feature, tag=tag, pseudo_score=pseudo_label(tag, s_g))
        )
    return out
