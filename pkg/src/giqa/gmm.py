"""Gaussian mixture density of real-image features, fitted with EM.

A fitted mixture assigns every feature vector the log of a weighted
sum of component Gaussian densities; that log-density is the raw
quality score (the log is monotone, so rankings match the plain
mixture probability, which underflows at high feature dims).

Covariance structure is one of four types: full (per-component D x D),
tied (one shared D x D), diag (per-component variances), spherical
(per-component scalar variance).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import DataError, NumericalError
from .features import FeatureMatrix
from .metrics import ScoreTable

COVARIANCE_TYPES = ("full", "tied", "diag", "spherical")
# number of components used for the reference LSUN/Cityscapes setting
DEFAULT_COMPONENTS = 7

_LOG_2PI = np.log(2.0 * np.pi)
_MODEL_VERSION = 1


@dataclass(frozen=True)
class EmConfig:
    max_em_iters: int = 200
    tol: float = 1e-4
    reg_covar: float = 1e-6
    n_init: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_em_iters < 1 or self.n_init < 1:
            raise ValueError("max_em_iters and n_init must be positive")
        if self.tol < 0 or self.reg_covar < 0:
            raise ValueError("tol and reg_covar must be nonnegative")


@dataclass(frozen=True)
class GmmModel:
    weights: np.ndarray  # (M,), positive, sums to 1
    means: np.ndarray  # (M, D)
    covariances: np.ndarray  # full (M,D,D) | tied (D,D) | diag (M,D) | spherical (M,)
    covariance_type: str
    # mean per-sample training log-likelihood per EM iteration of the
    # winning restart; not serialized, None for hand-built models
    log_likelihood_trace: tuple[float, ...] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(
            self, "covariances", np.asarray(self.covariances, dtype=np.float64)
        )
        if self.covariance_type not in COVARIANCE_TYPES:
            raise DataError(f"unknown covariance type {self.covariance_type!r}")
        m, d = self.means.shape
        if self.weights.shape != (m,):
            raise DataError("one weight per component required")
        if abs(self.weights.sum() - 1.0) > 1e-9 or (self.weights <= 0).any():
            raise DataError("mixture weights must be positive and sum to 1")
        expected = {
            "full": (m, d, d),
            "tied": (d, d),
            "diag": (m, d),
            "spherical": (m,),
        }[self.covariance_type]
        if self.covariances.shape != expected:
            raise DataError(
                f"covariances shape {self.covariances.shape}, expected {expected}"
            )
        _check_spd(self.covariances, self.covariance_type)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _check_spd(cov: np.ndarray, covariance_type: str) -> None:
    if covariance_type in ("diag", "spherical"):
        if (cov <= 0).any():
            raise DataError("covariance not positive-definite: nonpositive variance")
        return
    mats = cov[None] if covariance_type == "tied" else cov
    for mat in mats:
        if not np.allclose(mat, mat.T, atol=1e-8):
            raise DataError("covariance matrix not symmetric")
        try:
            cholesky(mat, lower=True)
        except np.linalg.LinAlgError:
            raise DataError("covariance matrix not positive-definite")
        except Exception:
            raise DataError("covariance matrix not positive-definite")


def component_log_density(mean, covariance, covariance_type: str, x) -> float:
    """Log multivariate normal density of ``x`` for one component."""
    mean = np.asarray(mean, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    d = mean.shape[0]
    if x.shape != mean.shape:
        raise DataError(f"point has dim {x.shape}, component has dim {mean.shape}")
    diff = x - mean
    if covariance_type in ("full", "tied"):
        cov = np.asarray(covariance, dtype=np.float64)
        _check_spd(cov, "tied")
        chol = cholesky(cov, lower=True)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        quad = np.sum(solve_triangular(chol, diff, lower=True) ** 2)
    elif covariance_type == "diag":
        var = np.asarray(covariance, dtype=np.float64)
        _check_spd(var, "diag")
        logdet = np.log(var).sum()
        quad = np.sum(diff**2 / var)
    elif covariance_type == "spherical":
        var = float(covariance)
        if var <= 0:
            raise DataError("covariance not positive-definite: nonpositive variance")
        logdet = d * np.log(var)
        quad = np.sum(diff**2) / var
    else:
        raise DataError(f"unknown covariance type {covariance_type!r}")
    return float(-0.5 * (d * _LOG_2PI + logdet + quad))


def _component_log_probs(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(n, M) matrix of per-component log densities for rows of ``x``."""
    n, d = x.shape
    m = model.n_components
    out = np.empty((n, m))
    if model.covariance_type == "full":
        for i in range(m):
            chol = cholesky(model.covariances[i], lower=True)
            logdet = 2.0 * np.log(np.diag(chol)).sum()
            sol = solve_triangular(chol, (x - model.means[i]).T, lower=True)
            out[:, i] = -0.5 * (d * _LOG_2PI + logdet + (sol**2).sum(axis=0))
    elif model.covariance_type == "tied":
        chol = cholesky(model.covariances, lower=True)
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        for i in range(m):
            sol = solve_triangular(chol, (x - model.means[i]).T, lower=True)
            out[:, i] = -0.5 * (d * _LOG_2PI + logdet + (sol**2).sum(axis=0))
    elif model.covariance_type == "diag":
        var = model.covariances  # (M, D)
        logdet = np.log(var).sum(axis=1)  # (M,)
        quad = (
            (x**2) @ (1.0 / var).T
            - 2.0 * x @ (model.means / var).T
            + (model.means**2 / var).sum(axis=1)
        )
        out = -0.5 * (d * _LOG_2PI + logdet + quad)
    else:  # spherical
        var = model.covariances  # (M,)
        sq = ((x[:, None, :] - model.means[None, :, :]) ** 2).sum(axis=2)
        out = -0.5 * (d * _LOG_2PI + d * np.log(var) + sq / var)
    return out


def _weighted_log_probs(model: GmmModel, x: np.ndarray) -> np.ndarray:
    return _component_log_probs(model, x) + np.log(model.weights)


def gmm_log_density(model: GmmModel, x) -> float:
    """log p(x) under the mixture, computed fully in the log domain."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DataError(f"point has dim {x.shape}, model has dim {model.dim}")
    return float(logsumexp(_weighted_log_probs(model, x[None, :]), axis=1)[0])


def log_density_batch(model: GmmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise DataError(f"batch has shape {x.shape}, model has dim {model.dim}")
    if x.shape[0] == 0:
        return np.empty(0)
    return logsumexp(_weighted_log_probs(model, x), axis=1)


def score_gmm(model: GmmModel, batch: FeatureMatrix) -> ScoreTable:
    """Raw score of each row = its mixture log-density."""
    if batch.count and batch.dim != model.dim:
        raise DataError(f"batch dim {batch.dim} != model dim {model.dim}")
    return ScoreTable(
        ids=batch.ids, raw=log_density_batch(model, batch.data), scorer_kind="gmm"
    )


# ---------------------------------------------------------------------------
# EM fitting


def _kmeans_pp_means(x: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: spread initial means according to squared distance."""
    n = x.shape[0]
    means = np.empty((m, x.shape[1]))
    means[0] = x[rng.integers(n)]
    closest = ((x - means[0]) ** 2).sum(axis=1)
    for i in range(1, m):
        total = closest.sum()
        if total <= 0:
            # all remaining mass on already-chosen points; pick uniformly
            means[i] = x[rng.integers(n)]
        else:
            means[i] = x[np.searchsorted(np.cumsum(closest / total), rng.random())]
        closest = np.minimum(closest, ((x - means[i]) ** 2).sum(axis=1))
    return means


def _m_step(
    x: np.ndarray, resp: np.ndarray, covariance_type: str, reg_covar: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted MLE of weights, means, covariances from responsibilities.

    Covariance denominators are the per-component responsibility mass
    (the biased MLE).
    """
    n, d = x.shape
    mass = resp.sum(axis=0)  # (M,)
    weights = mass / n
    means = (resp.T @ x) / mass[:, None]
    m = means.shape[0]
    if covariance_type == "full":
        cov = np.empty((m, d, d))
        for i in range(m):
            diff = x - means[i]
            cov[i] = (resp[:, i] * diff.T) @ diff / mass[i]
            cov[i].flat[:: d + 1] += reg_covar
    elif covariance_type == "tied":
        # shared covariance: total within-component scatter over n
        cov = np.zeros((d, d))
        for i in range(m):
            diff = x - means[i]
            cov += (resp[:, i] * diff.T) @ diff
        cov /= n
        cov.flat[:: d + 1] += reg_covar
    elif covariance_type == "diag":
        cov = (resp.T @ (x**2)) / mass[:, None] - means**2
        cov = np.maximum(cov, 0.0) + reg_covar
    else:  # spherical
        diag = (resp.T @ (x**2)) / mass[:, None] - means**2
        cov = np.maximum(diag, 0.0).mean(axis=1) + reg_covar
    return weights, means, cov


_COLLAPSE_EPS = 1e-10
_MAX_RESEEDS = 10


def run_em(
    train: FeatureMatrix, initial: GmmModel, config: EmConfig = EmConfig()
) -> GmmModel:
    """Iterate E/M steps from ``initial`` until the relative improvement
    of the mean log-likelihood drops below ``config.tol``.

    The per-iteration likelihood trace is stored on the returned model
    and checked to be non-decreasing (1e-8 slack per step).
    """
    x = train.data
    model = initial
    trace: list[float] = []
    reseeds = 0
    prev_ll = -np.inf
    for _ in range(config.max_em_iters):
        weighted = _weighted_log_probs(model, x)
        per_sample = logsumexp(weighted, axis=1)
        ll = float(per_sample.mean())
        if not np.isfinite(ll):
            raise NumericalError("log-likelihood became non-finite during EM")
        log_resp = weighted - per_sample[:, None]
        resp = np.exp(log_resp)
        mass = resp.sum(axis=0)
        if (mass < _COLLAPSE_EPS).any():
            # degenerate component: reseed it at the worst-explained sample
            reseeds += 1
            if reseeds > _MAX_RESEEDS:
                raise NumericalError(
                    "EM collapse: a component kept losing all responsibility mass"
                )
            dead = int(np.argmin(mass))
            worst = int(np.argmin(per_sample))
            resp[:, dead] = 0.0
            resp[worst] = 0.0
            resp[worst, dead] = 1.0
            resp /= resp.sum(axis=1, keepdims=True)
            trace = []  # reseeding may lower the likelihood; restart the trace
            prev_ll = -np.inf
        else:
            trace.append(ll)
            if trace and ll < prev_ll - 1e-8:
                raise NumericalError(
                    f"EM likelihood decreased: {prev_ll} -> {ll}"
                )
            if prev_ll != -np.inf:
                denom = max(abs(prev_ll), 1e-12)
                if (ll - prev_ll) / denom < config.tol:
                    break
            prev_ll = ll
        weights, means, cov = _m_step(
            x, resp, model.covariance_type, config.reg_covar
        )
        model = GmmModel(
            weights=weights,
            means=means,
            covariances=cov,
            covariance_type=model.covariance_type,
        )
    return replace(model, log_likelihood_trace=tuple(trace))


def fit_gmm(
    train: FeatureMatrix,
    n_components: int = DEFAULT_COMPONENTS,
    covariance_type: str = "full",
    config: EmConfig = EmConfig(),
) -> GmmModel:
    """Fit a mixture by EM with k-means++ seeding; with ``config.n_init``
    restarts the highest-likelihood fit wins.  Deterministic given seed."""
    if n_components < 1:
        raise ValueError("n_components must be positive")
    if covariance_type not in COVARIANCE_TYPES:
        raise ValueError(f"unknown covariance type {covariance_type!r}")
    if train.count < n_components:
        raise DataError(
            f"{train.count} samples cannot support {n_components} components"
        )
    rng = np.random.default_rng(config.seed)
    best: GmmModel | None = None
    best_ll = -np.inf
    for _ in range(config.n_init):
        init = _hard_init(train.data, n_components, covariance_type, config, rng)
        model = run_em(train, init, config)
        ll = model.log_likelihood_trace[-1] if model.log_likelihood_trace else -np.inf
        if ll > best_ll or best is None:
            best, best_ll = model, ll
    return best


def _hard_init(
    x: np.ndarray,
    m: int,
    covariance_type: str,
    config: EmConfig,
    rng: np.random.Generator,
) -> GmmModel:
    """Initial parameters: k-means++ means, then one hard-assignment M-step."""
    means = _kmeans_pp_means(x, m, rng)
    sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    assign = sq.argmin(axis=1)
    resp = np.zeros((x.shape[0], m))
    resp[np.arange(x.shape[0]), assign] = 1.0
    # empty cells get the point farthest from its assigned mean
    for i in range(m):
        if resp[:, i].sum() == 0:
            grab = int(np.argmax(sq[np.arange(len(assign)), assign]))
            resp[grab] = 0.0
            resp[grab, i] = 1.0
            assign[grab] = i
    weights, means, cov = _m_step(x, resp, covariance_type, max(config.reg_covar, 1e-12))
    return GmmModel(
        weights=weights, means=means, covariances=cov, covariance_type=covariance_type
    )


def save_gmm(model: GmmModel, destination) -> None:
    doc = {
        "version": _MODEL_VERSION,
        "covariance_type": model.covariance_type,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "dim": model.dim,
        "n_components": model.n_components,
    }
    Path(destination).write_text(json.dumps(doc))


def load_gmm(source) -> GmmModel:
    doc = json.loads(Path(source).read_text())
    if doc.get("version") != _MODEL_VERSION:
        raise DataError(f"{source}: unsupported model version {doc.get('version')}")
    model = GmmModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        means=np.array(doc["means"], dtype=np.float64),
        covariances=np.array(doc["covariances"], dtype=np.float64),
        covariance_type=doc["covariance_type"],
    )
    if model.dim != doc["dim"] or model.n_components != doc["n_components"]:
        raise DataError(f"{source}: declared dims disagree with parameter shapes")
    return model
