"""Global pooling of convolution outputs: positive-value proportions and max.

The hard proportion-of-positive-values pool counts strictly positive elements.
Its soft variant replaces the step with a shifted logistic sigmoid of
steepness ``lam``; the default shift of 3 keeps values near zero closer to 0
than to 1, and as lam grows the soft pool converges to the hard one. Unlike
the hard pool, the soft pool is differentiable.

All functions are pure and stateless; they are safe to call from any number
of concurrent workers. Reductions are evaluated in 64-bit internally and the
result is returned in the input's precision (float32 in, float32 out).
"""

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_SHIFT = 3.0


class PoolingMode(enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class PoolingConfig:
    """How convolution outputs are pooled into features.

    lam is the sigmoid steepness and only meaningful in SOFT mode. With
    include_max each kernel yields two features (proportion, max), columns
    interleaved per kernel; without it only the proportion column remains.
    """

    mode: PoolingMode = PoolingMode.HARD
    lam: float = 1.0
    shift: float = DEFAULT_SHIFT
    include_max: bool = True

    def __post_init__(self):
        if self.mode is PoolingMode.SOFT and not self.lam > 0:
            raise ValueError(f"lam must be > 0 in soft mode, got {self.lam}")


def sigmoid(x):
    """Logistic sigmoid, overflow-safe: only exponentiates non-positive values."""
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def _as_vector(v, name):
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError(f"{name} requires a 1-d vector, got shape {v.shape}")
    if v.size == 0:
        raise ValueError(f"{name} requires a non-empty vector")
    return v


def _result_dtype(v):
    return np.float32 if v.dtype == np.float32 else np.float64


def ppv(v):
    """Proportion of strictly positive values in v; zeros do not count."""
    v = _as_vector(v, "ppv")
    count = int(np.count_nonzero(v > 0))
    return _result_dtype(v)(count / v.size)


def soft_ppv(v, lam, shift=DEFAULT_SHIFT):
    """Mean of sigmoid(lam * v_i - shift); smooth stand-in for ppv.

    Monotone non-decreasing in every element and differentiable (see
    soft_ppv_grad). For lam -> infinity the value approaches ppv(v) on
    inputs bounded away from zero.
    """
    v = _as_vector(v, "soft_ppv")
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if not np.isfinite(lam) or not np.isfinite(shift):
        raise ValueError("lam and shift must be finite")
    if not np.all(np.isfinite(v)):
        raise ValueError("soft_ppv requires finite inputs")
    z = float(lam) * v.astype(np.float64) - float(shift)
    return _result_dtype(v)(np.mean(sigmoid(z)))


def soft_ppv_grad(v, lam, shift=DEFAULT_SHIFT):
    """Analytic gradient of soft_ppv with respect to v, as a float64 vector.

    d soft_ppv / d v_i = (lam / n) * s * (1 - s) with s = sigmoid(lam*v_i - shift).
    """
    v = _as_vector(v, "soft_ppv_grad")
    if not lam > 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    s = sigmoid(float(lam) * v.astype(np.float64) - float(shift))
    return (float(lam) / v.size) * s * (1.0 - s)


def max_pool(v):
    """Largest element of v."""
    v = _as_vector(v, "max_pool")
    return v.max()
