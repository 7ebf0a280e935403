"""Feature-vector datasets: the GIQF interchange format, PCA, and splits.

GIQF layout (little-endian throughout):

    bytes 0-3    magic b"GIQF"
    bytes 4-7    format version, uint32 (currently 1)
    bytes 8-15   row count N, uint64
    bytes 16-19  feature dim D, uint32
    bytes 20-23  id-block length L, uint32
    next L       newline-separated UTF-8 ids (N of them)
    next N*D*4   float32 feature values, row-major

The payload is float32; a matrix round-trips bit-for-bit when its
values are float32-representable.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

GIQF_MAGIC = b"GIQF"
GIQF_VERSION = 1
_HEADER_FMT = "<4sIQII"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)

# Splits use numpy's PCG64 generator; any reimplementation of the
# format must shuffle with the same algorithm to reproduce them.
SPLIT_PRNG = "numpy PCG64 (default_rng)"


@dataclass(frozen=True)
class FeatureMatrix:
    """An ordered table of per-image feature vectors."""

    ids: tuple[str, ...]
    data: np.ndarray  # (N, D) float64

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=np.float64))
        bad = ~np.isfinite(data)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataError(f"non-finite value at row {r}, col {c}")
        # values are rounded to GIQF precision up front so that
        # write_features followed by read_features is exactly the identity
        rounded = data.astype(np.float32)
        overflow = ~np.isfinite(rounded)
        if overflow.any():
            r, c = np.argwhere(overflow)[0]
            raise DataError(
                f"value at row {r}, col {c} not representable as a 32-bit float"
            )
        data = rounded.astype(np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", tuple(self.ids))
        if data.ndim != 2:
            raise DataError(f"feature data must be 2-D, got shape {data.shape}")
        if len(self.ids) != data.shape[0]:
            raise DataError(
                f"{len(self.ids)} ids but {data.shape[0]} feature rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in feature matrix")
        for i in self.ids:
            if "\n" in i:
                raise DataError(f"id {i!r} contains a newline")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, image_id: str) -> np.ndarray:
        return self.data[self.ids.index(image_id)]


@dataclass(frozen=True)
class PcaModel:
    """Mean-centering + orthonormal projection onto top principal axes."""

    mean: np.ndarray  # (D,)
    basis: np.ndarray  # (D, d), orthonormal columns
    explained_variance: np.ndarray  # (d,), non-increasing
    retained_fraction: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "basis", np.asarray(self.basis, dtype=np.float64))
        object.__setattr__(
            self,
            "explained_variance",
            np.asarray(self.explained_variance, dtype=np.float64),
        )
        gram = self.basis.T @ self.basis
        if not np.allclose(gram, np.eye(self.basis.shape[1]), atol=1e-6):
            raise DataError("projection basis is not orthonormal")
        ev = self.explained_variance
        if (ev < 0).any() or (np.diff(ev) > 0).any():
            raise DataError("explained variances must be nonnegative, non-increasing")
        if not 0 < self.retained_fraction <= 1:
            raise DataError("retained_fraction must be in (0, 1]")
        if self.basis.shape[1] > self.basis.shape[0]:
            raise DataError("cannot project to more dimensions than input has")


@dataclass(frozen=True)
class IterationTag:
    """Which training iteration produced an image, or that it is real."""

    iter: int = 0
    max_iter: int = 1
    is_real: bool = False

    def __post_init__(self):
        if self.max_iter <= 0:
            raise DataError("max_iter must be positive")
        if not 0 <= self.iter <= self.max_iter:
            raise DataError(f"iter {self.iter} outside [0, {self.max_iter}]")


def write_features(matrix: FeatureMatrix, destination) -> None:
    """Serialize ``matrix`` to ``destination`` in GIQF format."""
    id_block = "\n".join(matrix.ids).encode("utf-8") if matrix.ids else b""
    header = struct.pack(
        _HEADER_FMT,
        GIQF_MAGIC,
        GIQF_VERSION,
        matrix.count,
        matrix.dim,
        len(id_block),
    )
    payload = np.ascontiguousarray(matrix.data, dtype="<f4").tobytes()
    Path(destination).write_bytes(header + id_block + payload)


def read_features(source) -> FeatureMatrix:
    """Parse a GIQF file back into a :class:`FeatureMatrix`."""
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER_SIZE:
        raise DataError(f"{source}: too short to be a GIQF file")
    magic, version, count, dim, id_len = struct.unpack_from(_HEADER_FMT, raw)
    if magic != GIQF_MAGIC:
        raise DataError(f"{source}: not a GIQF file")
    if version != GIQF_VERSION:
        raise DataError(f"{source}: unsupported GIQF version {version}")
    body = raw[_HEADER_SIZE:]
    if len(body) < id_len:
        raise DataError(f"{source}: truncated id block")
    id_block, payload = body[:id_len], body[id_len:]
    ids = id_block.decode("utf-8").split("\n") if id_len else []
    if len(ids) != count:
        raise DataError(f"{source}: header declares {count} rows, id block has {len(ids)}")
    expected = count * dim * 4
    if len(payload) < expected:
        raise DataError(
            f"{source}: truncated payload, need {expected} bytes of float data, "
            f"have {len(payload)}"
        )
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(count, dim)
    return FeatureMatrix(ids=ids, data=data.astype(np.float64))


def fit_pca(matrix: FeatureMatrix, retained_fraction: float) -> PcaModel:
    """Fit a PCA keeping the smallest dimension reaching ``retained_fraction``
    of total sample variance (covariance denominator N-1)."""
    if not 0 < retained_fraction <= 1:
        raise ValueError("retained_fraction must be in (0, 1]")
    if matrix.count < 2:
        raise DataError("PCA needs at least 2 rows")
    mean = matrix.data.mean(axis=0)
    centered = matrix.data - mean
    cov = centered.T @ centered / (matrix.count - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0.0, None)
    total = eigvals.sum()
    if total <= 0:
        raise DataError("zero total variance: all rows identical")
    # descending eigenvalues; stable sort keeps ties in original axis order
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    cumulative = np.cumsum(eigvals) / total
    cumulative[-1] = 1.0  # guard rounding for retained_fraction == 1
    d = int(np.searchsorted(cumulative, retained_fraction - 1e-12) + 1)
    d = min(d, matrix.dim)
    # fix sign so the largest-magnitude coordinate of each axis is positive
    basis = eigvecs[:, :d].copy()
    for j in range(d):
        peak = np.argmax(np.abs(basis[:, j]))
        if basis[peak, j] < 0:
            basis[:, j] = -basis[:, j]
    return PcaModel(
        mean=mean,
        basis=basis,
        explained_variance=eigvals[:d],
        retained_fraction=retained_fraction,
    )


def apply_pca(model: PcaModel, matrix: FeatureMatrix) -> FeatureMatrix:
    """Project ``matrix`` through ``model``, preserving id order."""
    if matrix.dim != model.mean.shape[0]:
        raise DataError(
            f"matrix dim {matrix.dim} != PCA input dim {model.mean.shape[0]}"
        )
    projected = (matrix.data - model.mean) @ model.basis
    return FeatureMatrix(ids=matrix.ids, data=projected)


def split_train_val(
    matrix: FeatureMatrix, ratio: float, seed: int
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Deterministic shuffled split; first part gets round(ratio*N) rows."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    if matrix.count < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(math.floor(ratio * matrix.count + 0.5))
    perm = np.random.default_rng(seed).permutation(matrix.count)
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    return (
        FeatureMatrix(
            ids=[matrix.ids[i] for i in train_idx], data=matrix.data[train_idx]
        ),
        FeatureMatrix(
            ids=[matrix.ids[i] for i in val_idx], data=matrix.data[val_idx]
        ),
    )


def save_pca(model: PcaModel, destination) -> None:
    doc = {
        "mean": model.mean.tolist(),
        "basis": model.basis.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "retained_fraction": model.retained_fraction,
    }
    Path(destination).write_text(json.dumps(doc))


def load_pca(source) -> PcaModel:
    doc = json.loads(Path(source).read_text())
    try:
        return PcaModel(
            mean=np.array(doc["mean"], dtype=np.float64),
            basis=np.array(doc["basis"], dtype=np.float64),
            explained_variance=np.array(doc["explained_variance"], dtype=np.float64),
            retained_fraction=float(doc["retained_fraction"]),
        )
    except KeyError as exc:
        raise DataError(f"{source}: missing PCA field {exc}") from exc
