"""Closed-form ridge regression over pooled features.

Features are standardized per column, the penalized normal equations are
solved in 64-bit with a symmetric positive-definite factorization on
whichever Gram matrix is smaller (F x F primal or N x N dual), and the
regularization strength is picked by exact leave-one-out error using the
hat-matrix identity. The unpenalized intercept is handled by centering, so
the leave-one-out error accounts for refitting it as well.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_ALPHAS = tuple(10.0 ** np.linspace(-3, 3, 10))
MODEL_FORMAT_VERSION = 1

# Column standard deviations at or below max(|mean|, 1) * this are treated as
# zero variance: scale 1, coefficient forced to 0.
_ZERO_VARIANCE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class RidgeModel:
    """Fitted ridge regressor: weights act on standardized features.

    Predictions are intercept + sum_j weights[j] * (x_j - feature_means[j]) /
    feature_scales[j]. Immutable and shareable after fit.
    """

    weights: np.ndarray
    intercept: float
    alpha: float
    feature_means: np.ndarray
    feature_scales: np.ndarray

    def __post_init__(self):
        for name in ("weights", "feature_means", "feature_scales"):
            object.__setattr__(self, name,
                               np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        if not (self.weights.shape == self.feature_means.shape
                == self.feature_scales.shape) or self.weights.ndim != 1:
            raise ValueError("weights, feature_means and feature_scales must be "
                             "1-d vectors of equal length")
        if not np.all(self.feature_scales > 0):
            raise ValueError("feature scales must be strictly positive")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @property
    def n_features(self) -> int:
        return self.weights.size


def _feature_values(features) -> np.ndarray:
    values = getattr(features, "values", features)
    return np.asarray(values, dtype=np.float64)


def _standardize(x):
    means = x.mean(axis=0)
    scales = x.std(axis=0)
    degenerate = scales <= _ZERO_VARIANCE_RTOL * np.maximum(np.abs(means), 1.0)
    scales = np.where(degenerate, 1.0, scales)
    return (x - means) / scales, means, scales, degenerate


def _solve_alpha(x, y_centered, alpha, n):
    """Weights, residuals and hat diagonal for one alpha on centered data."""
    if x.shape[1] <= n:
        gram = x.T @ x + alpha * np.eye(x.shape[1])
        factor = scipy.linalg.cho_factor(gram)
        weights = scipy.linalg.cho_solve(factor, x.T @ y_centered)
        projector = scipy.linalg.cho_solve(factor, x.T)
        hat = np.einsum("ij,ji->i", x, projector) + 1.0 / n
        residuals = y_centered - x @ weights
    else:
        gram = x @ x.T + alpha * np.eye(n)
        factor = scipy.linalg.cho_factor(gram)
        dual = scipy.linalg.cho_solve(factor, y_centered)
        weights = x.T @ dual
        inverse_diag = np.diagonal(scipy.linalg.cho_solve(factor, np.eye(n)))
        # X (X'X + aI)^-1 X' = I - a (XX' + aI)^-1, so the hat diagonal is
        # 1 - a * diag(inverse) plus the intercept's 1/n.
        hat = 1.0 - alpha * inverse_diag + 1.0 / n
        residuals = alpha * dual
    return weights, residuals, hat


def fit(features, labels, alphas=DEFAULT_ALPHAS) -> RidgeModel:
    """Fit ridge regression, selecting alpha by exact leave-one-out error.

    Parameters
    ----------
    features : FeatureMatrix or array of shape (N, F)
    labels : array of N target values
    alphas : candidate regularization strengths, all > 0

    The leave-one-out error is exact for the standardized design: it equals
    refitting intercept and weights on every size-(N-1) subset.
    """
    x = _feature_values(features)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {x.shape}")
    y = np.asarray(labels, dtype=np.float64).ravel()
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {n}")
    if y.size != n:
        raise ValueError(f"{n} feature rows but {y.size} labels")
    if not np.all(np.isfinite(y)):
        raise ValueError("labels must be finite")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    alphas = [float(a) for a in np.atleast_1d(np.asarray(alphas, dtype=np.float64))]
    if not alphas:
        raise ValueError("alphas must be non-empty")
    if any(a <= 0 for a in alphas):
        raise ValueError("all alphas must be > 0")

    x_std, means, scales, degenerate = _standardize(x)
    intercept = y.mean()
    y_centered = y - intercept

    best = None
    for alpha in alphas:
        weights, residuals, hat = _solve_alpha(x_std, y_centered, alpha, n)
        loo = residuals / (1.0 - hat)
        loo_error = float(np.mean(loo * loo))
        if best is None or loo_error < best[0]:
            best = (loo_error, alpha, weights)

    _, alpha, weights = best
    weights = np.where(degenerate, 0.0, weights)
    return RidgeModel(weights=weights, intercept=float(intercept),
                      alpha=alpha, feature_means=means, feature_scales=scales)


def predict(model: RidgeModel, features) -> np.ndarray:
    """Predicted targets, one per feature row."""
    x = _feature_values(features)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {x.shape}")
    if x.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} feature columns, "
                         f"got {x.shape[1]}")
    x_std = (x - model.feature_means) / model.feature_scales
    return model.intercept + x_std @ model.weights


def raw_coefficients(model: RidgeModel):
    """Equivalent (weights, intercept) acting on unstandardized features."""
    weights = model.weights / model.feature_scales
    intercept = model.intercept - float(weights @ model.feature_means)
    return weights, intercept


def mse(predicted, actual) -> float:
    """Mean squared error between two equal-length vectors."""
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if predicted.size != actual.size:
        raise ValueError(f"length mismatch: {predicted.size} vs {actual.size}")
    if predicted.size == 0:
        raise ValueError("mse requires at least one element")
    diff = predicted - actual
    return float(np.mean(diff * diff))


def save_model(model: RidgeModel, path) -> None:
    """Write a fitted model as JSON with round-trip-precise floats."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "alpha": model.alpha,
        "intercept": model.intercept,
        "weights": model.weights.tolist(),
        "feature_means": model.feature_means.tolist(),
        "feature_scales": model.feature_scales.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> RidgeModel:
    """Read a model written by save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format_version "
                         f"{doc.get('format_version')!r}")
    return RidgeModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        intercept=float(doc["intercept"]),
        alpha=float(doc["alpha"]),
        feature_means=np.array(doc["feature_means"], dtype=np.float64),
        feature_scales=np.array(doc["feature_scales"], dtype=np.float64),
    )
