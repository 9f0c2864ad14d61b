"""Common spatial patterns: covariances, shrinkage, filter fitting and log-variance features."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import DimensionMismatch, EpochSet, VisualClass, VmiError


class InsufficientTrials(VmiError, ValueError):
    pass


class SingularCovariance(VmiError, np.linalg.LinAlgError):
    pass


class TooManyPairs(VmiError, ValueError):
    pass


class ZeroVarianceTrial(VmiError, ValueError):
    pass


_COV_CHUNK = 16


def trial_covariances(data: np.ndarray) -> np.ndarray:
    """Per-trial channel covariance of mean-centred data, shape (n, C, C), divisor n_samples.

    Computed in float64 a few trials at a time.
    """
    data = np.asarray(data)
    n, c, t = data.shape
    out = np.empty((n, c, c))
    for lo in range(0, n, _COV_CHUNK):
        x = data[lo:lo + _COV_CHUNK].astype(np.float64)
        x -= x.mean(axis=-1, keepdims=True)
        out[lo:lo + _COV_CHUNK] = np.matmul(x, np.swapaxes(x, -1, -2)) / t
    return out


def trace_normalize(covs: np.ndarray) -> np.ndarray:
    tr = np.trace(covs, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise ZeroVarianceTrial("trial with zero total variance")
    return covs / tr[..., None, None]


def ledoit_wolf_gamma(samples: np.ndarray) -> float:
    """Analytic shrinkage intensity towards a scaled identity.

    ``samples`` is a stack of per-observation matrices whose mean is the
    covariance being shrunk (outer products for vector data, per-trial
    covariances for CSP).
    """
    samples = np.asarray(samples, dtype=float)
    n, d = samples.shape[0], samples.shape[-1]
    mean = samples.mean(axis=0)
    mu = np.trace(mean) / d
    delta = np.sum((mean - mu * np.eye(d)) ** 2)
    beta = np.sum((samples - mean) ** 2) / n**2
    if delta <= 0:
        return 1.0
    return float(min(beta, delta) / delta)


def shrink_covariance(cov: np.ndarray, gamma: float) -> np.ndarray:
    """(1 - gamma) * cov + gamma * (tr(cov) / d) * I."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    return (1.0 - gamma) * cov + gamma * (np.trace(cov) / d) * np.eye(d)


def _resolve_gamma(shrinkage, trial_covs: np.ndarray) -> float:
    if shrinkage == "analytic":
        return ledoit_wolf_gamma(trial_covs)
    return float(shrinkage)


def class_covariance(es: EpochSet, label: VisualClass | Sequence[VisualClass]) -> np.ndarray:
    """Average trace-normalized covariance over trials carrying ``label``.

    ``label`` may also be a collection of labels (pooled "rest" class).
    """
    wanted = {label} if isinstance(label, VisualClass) else set(label)
    idx = [i for i, lab in enumerate(es.labels) if lab in wanted]
    if len(idx) < 2:
        raise InsufficientTrials(f"need >= 2 trials for {sorted(w.value for w in wanted)}, got {len(idx)}")
    return trace_normalize(trial_covariances(es.data[idx])).mean(axis=0)


@dataclass(frozen=True, eq=False)
class CspModel:
    filters: np.ndarray  # (2 * n_pairs, n_channels), rows are spatial filters
    patterns: np.ndarray  # (n_channels, 2 * n_pairs)
    eigenvalues: np.ndarray  # descending, in (0, 1)
    target: VisualClass | None = None

    @property
    def n_pairs(self) -> int:
        return self.filters.shape[0] // 2

    def to_dict(self) -> dict:
        return {
            "filters": self.filters.tolist(),
            "patterns": self.patterns.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "target": self.target.value if self.target else None,
            "class_pair": [self.target.value if self.target else None, "rest-of-classes"],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CspModel":
        return cls(
            np.array(d["filters"], dtype=float),
            np.array(d["patterns"], dtype=float),
            np.array(d["eigenvalues"], dtype=float),
            VisualClass(d["target"]) if d.get("target") else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_csp_full(cov_target: np.ndarray, cov_rest: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All generalized eigenpairs, eigenvalues descending; filters as rows."""
    composite = np.asarray(cov_target, dtype=float) + np.asarray(cov_rest, dtype=float)
    composite = (composite + composite.T) / 2
    try:
        np.linalg.cholesky(composite)
    except np.linalg.LinAlgError:
        raise SingularCovariance("composite covariance is not positive definite") from None
    target = (cov_target + cov_target.T) / 2
    evals, evecs = scipy.linalg.eigh(target, composite)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], _sign_fix(evecs[:, order])
    return evals, evecs.T


def fit_csp(
    cov_target: np.ndarray, cov_rest: np.ndarray, n_pairs: int = 3, target: VisualClass | None = None
) -> CspModel:
    """Solve cov_target w = lambda (cov_target + cov_rest) w and keep both extremes."""
    d = np.asarray(cov_target).shape[0]
    if n_pairs < 1 or 2 * n_pairs > d:
        raise TooManyPairs(f"{n_pairs} pairs need {2 * n_pairs} filters but only {d} channels")
    evals, w_full = fit_csp_full(cov_target, cov_rest)
    keep = np.r_[np.arange(n_pairs), np.arange(d - n_pairs, d)]
    patterns = np.linalg.pinv(w_full)[:, keep]
    return CspModel(w_full[keep], patterns, np.clip(evals[keep], 0.0, 1.0), target)


def log_variance_features(filters: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Normalized log-variance of filtered trials computed from trial covariances."""
    variances = np.einsum("kc,ncd,kd->nk", filters, covs, filters, optimize=True)
    total = variances.sum(axis=1, keepdims=True)
    if np.any(total <= 0) or np.any(variances <= 0):
        bad = int(np.flatnonzero((total[:, 0] <= 0) | np.any(variances <= 0, axis=1))[0])
        raise ZeroVarianceTrial(f"trial {bad} has zero variance after spatial filtering")
    return np.log(variances / total)


def csp_features(m: CspModel, es: EpochSet) -> np.ndarray:
    """f_i = log(var(w_i X) / sum_j var(w_j X)) per trial; shape (n_trials, 2 * n_pairs)."""
    if es.n_channels != m.filters.shape[1]:
        raise DimensionMismatch(f"model expects {m.filters.shape[1]} channels, epochs have {es.n_channels}")
    projected = np.einsum("kc,nct->nkt", m.filters, es.data, optimize=True)
    variances = projected.var(axis=-1)
    total = variances.sum(axis=1, keepdims=True)
    if np.any(total <= 0) or np.any(variances <= 0):
        bad = int(np.flatnonzero((total[:, 0] <= 0) | np.any(variances <= 0, axis=1))[0])
        raise ZeroVarianceTrial(f"trial {bad} has zero variance after spatial filtering")
    return np.log(variances / total)


def fit_ovr_csp_from_covs(
    covs: np.ndarray,
    labels: Sequence[VisualClass],
    target: VisualClass,
    n_pairs: int,
    shrinkage="analytic",
) -> CspModel:
    """Target-vs-rest CSP from precomputed per-trial covariances.

    Each side's covariance is the mean of trace-normalized trial covariances,
    shrunk with its own gamma.
    """
    labels = np.array([lab.value for lab in labels])
    normed = trace_normalize(covs)
    is_target = labels == target.value
    if is_target.sum() < 2:
        raise InsufficientTrials(f"need >= 2 trials of {target.value}, got {int(is_target.sum())}")
    if (~is_target).sum() < 2:
        raise InsufficientTrials(f"need >= 2 trials not of {target.value}, got {int((~is_target).sum())}")
    sides = []
    for mask in (is_target, ~is_target):
        group = normed[mask]
        sides.append(shrink_covariance(group.mean(axis=0), _resolve_gamma(shrinkage, group)))
    return fit_csp(sides[0], sides[1], n_pairs, target)
