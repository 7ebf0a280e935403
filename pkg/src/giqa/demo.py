"""Seeded synthetic demo datasets.

Everything here is 2-D two-cluster Gaussian data, small enough that
the whole pipeline (fit, score, evaluate, pick) runs in seconds with
no image corpus and no feature extractor.
"""

from __future__ import annotations

import numpy as np

from .features import FeatureMatrix
from .metrics import PairDataset

CLUSTER_CENTERS = np.array([[-5.0, 0.0], [5.0, 0.0]])


def _sample_mixture(rng: np.random.Generator, n: int) -> np.ndarray:
    comp = rng.integers(0, 2, size=n)
    return CLUSTER_CENTERS[comp] + rng.standard_normal((n, 2))


def make_real(n: int = 500, seed: int = 0) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    return FeatureMatrix(
        ids=[f"real/{i:05d}" for i in range(n)], data=_sample_mixture(rng, n)
    )


def make_generated(n: int = 500, seed: int = 1, noise: float = 0.5) -> FeatureMatrix:
    """Same mixture as the real set, blurred by extra noise."""
    rng = np.random.default_rng(seed)
    data = _sample_mixture(rng, n) + noise * rng.standard_normal((n, 2))
    return FeatureMatrix(ids=[f"gen/{i:05d}" for i in range(n)], data=data)


def make_collapsed(n: int = 500, seed: int = 2) -> FeatureMatrix:
    """A mode-collapsed set: every sample at one cluster center plus jitter."""
    rng = np.random.default_rng(seed)
    data = CLUSTER_CENTERS[0] + 0.05 * rng.standard_normal((n, 2))
    return FeatureMatrix(ids=[f"collapsed/{i:05d}" for i in range(n)], data=data)


def make_graded_pairs(
    matrix: FeatureMatrix, n_pairs: int = 200, seed: int = 3
) -> PairDataset:
    """Preference pairs auto-labeled by distance to the nearest cluster
    center (closer = better), skipping exact ties."""
    rng = np.random.default_rng(seed)
    quality = -np.minimum(
        ((matrix.data - CLUSTER_CENTERS[0]) ** 2).sum(axis=1),
        ((matrix.data - CLUSTER_CENTERS[1]) ** 2).sum(axis=1),
    )
    pairs = []
    while len(pairs) < n_pairs:
        a, b = rng.integers(0, matrix.count, size=2)
        if a == b or quality[a] == quality[b]:
            continue
        winner = "a" if quality[a] > quality[b] else "b"
        pairs.append((matrix.ids[a], matrix.ids[b], winner))
    return PairDataset(pairs=pairs, source_note=f"synthetic demo, seed {seed}")
