"""Batched kernel transform: dilated convolution plus global pooling.

transform_batch is the production engine (compiled, data-parallel over
examples). transform_reference is the deliberately naive triple loop with the
same contract; it exists to check the engine and is only suitable for desk
scale. Both produce one feature row per example with per-kernel contiguous
columns: [proportion, max] when pooling.include_max, else [proportion].
"""

import contextlib
from dataclasses import dataclass

import numba
import numpy as np

from . import _engine
from .kernelgen import Kernel, KernelSet
from .pooling import PoolingConfig, PoolingMode, max_pool, ppv, soft_ppv


@dataclass(frozen=True, eq=False)
class TimeSeriesBatch:
    """N examples x C channels x T timesteps of float32, row-major.

    Values must be finite. The array is treated as read-only once wrapped.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"batch data must be 3-d (N, C, T), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("batch data must be finite")
        object.__setattr__(self, "data", data)

    @property
    def n_examples(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_timesteps(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """N x F float32 pooled features, kernel k in columns [2k, 2k+1] (or k)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError(f"feature values must be 2-d, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def n_examples(self) -> int:
        return self.values.shape[0]

    @property
    def feature_count(self) -> int:
        return self.values.shape[1]


def max_workers() -> int:
    """Largest worker count the engine can be asked for in this process."""
    return numba.config.NUMBA_NUM_THREADS


@contextlib.contextmanager
def _worker_count(workers):
    if workers is None:
        yield
        return
    if not 1 <= workers <= max_workers():
        raise ValueError(
            f"workers must be in [1, {max_workers()}], got {workers}")
    previous = numba.get_num_threads()
    numba.set_num_threads(workers)
    try:
        yield
    finally:
        numba.set_num_threads(previous)


def apply_kernel(series, kernel: Kernel) -> np.ndarray:
    """Dilated cross-correlation of one example with one kernel.

    series is a (C, T) float array (a 1-d array is taken as a single
    channel). The series is zero-padded by kernel.padding on each side, so
    out[p] = bias + sum_c sum_j w[c, j] * x_pad[c, p + j*dilation] and the
    output has T + 2*padding - (length-1)*dilation elements, float32.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[np.newaxis, :]
    if series.ndim != 2:
        raise ValueError(f"series must be 1-d or 2-d, got shape {series.shape}")
    n_channels, n_timesteps = series.shape
    if any(c >= n_channels for c in kernel.channel_indices):
        raise ValueError(
            f"kernel channel index {max(kernel.channel_indices)} out of range "
            f"for {n_channels} channels")
    out_len = n_timesteps + 2 * kernel.padding - kernel.span
    if out_len < 1:
        raise ValueError(
            f"receptive field span {kernel.span} exceeds padded length "
            f"{n_timesteps + 2 * kernel.padding}")

    padded = np.zeros((n_channels, n_timesteps + 2 * kernel.padding))
    padded[:, kernel.padding:kernel.padding + n_timesteps] = series

    out = np.full(out_len, float(kernel.bias))
    weights = kernel.weights.astype(np.float64).reshape(
        kernel.num_selected_channels, kernel.length)
    for row, channel in enumerate(kernel.channel_indices):
        for j in range(kernel.length):
            start = j * kernel.dilation
            out += weights[row, j] * padded[channel, start:start + out_len]
    return out.astype(np.float32)


def _check_batch_kernels(batch: TimeSeriesBatch, kernels: KernelSet) -> None:
    if batch.n_channels != kernels.num_channels:
        raise ValueError(
            f"batch has {batch.n_channels} channels but kernels were generated "
            f"for {kernels.num_channels}")
    for i, k in enumerate(kernels):
        if k.span > batch.n_timesteps - 1 + 2 * k.padding:
            raise ValueError(
                f"kernel {i}: receptive field span {k.span} exceeds padded "
                f"series length for T={batch.n_timesteps}")


def _pack(kernels: KernelSet):
    count = kernels.count
    lengths = np.empty(count, np.int64)
    biases = np.empty(count, np.float32)
    dilations = np.empty(count, np.int64)
    paddings = np.empty(count, np.int64)
    weight_offsets = np.zeros(count + 1, np.int64)
    channel_offsets = np.zeros(count + 1, np.int64)
    for i, k in enumerate(kernels):
        lengths[i] = k.length
        biases[i] = np.float32(k.bias)
        dilations[i] = k.dilation
        paddings[i] = k.padding
        weight_offsets[i + 1] = weight_offsets[i] + k.weights.size
        channel_offsets[i + 1] = channel_offsets[i] + k.num_selected_channels
    if count:
        weights_flat = np.concatenate([k.weights for k in kernels])
        channels_flat = np.concatenate(
            [np.asarray(k.channel_indices, np.int64) for k in kernels])
    else:
        weights_flat = np.empty(0, np.float32)
        channels_flat = np.empty(0, np.int64)
    return (lengths, biases, dilations, paddings,
            weights_flat.astype(np.float32), weight_offsets,
            channels_flat, channel_offsets)


def transform_batch(batch: TimeSeriesBatch, kernels: KernelSet,
                    pooling: PoolingConfig, workers: int | None = None) -> FeatureMatrix:
    """Apply every kernel to every example and pool, in parallel over examples.

    The result is bit-identical for any worker count; workers=None uses the
    process-wide default (up to max_workers()). Multiple concurrent calls are
    safe: inputs are read-only and outputs disjoint.
    """
    _check_batch_kernels(batch, kernels)
    packed = _pack(kernels)
    mode = _engine.MODE_SOFT if pooling.mode is PoolingMode.SOFT else _engine.MODE_HARD
    features_per_kernel = 2 if pooling.include_max else 1
    with _worker_count(workers):
        values = _engine.run_transform(
            batch.data, *packed, mode, float(pooling.lam), float(pooling.shift),
            features_per_kernel)
    return FeatureMatrix(values)


def transform_reference(batch: TimeSeriesBatch, kernels: KernelSet,
                        pooling: PoolingConfig) -> FeatureMatrix:
    """Same contract as transform_batch via the plainest possible loops.

    One example at a time, one kernel at a time: apply_kernel then the pooling
    functions. Correctness oracle; desk scale only.
    """
    _check_batch_kernels(batch, kernels)
    features_per_kernel = 2 if pooling.include_max else 1
    out = np.empty((batch.n_examples, kernels.count * features_per_kernel),
                   np.float32)
    for i in range(batch.n_examples):
        series = batch.data[i]
        for k, kernel in enumerate(kernels):
            conv = apply_kernel(series, kernel)
            if pooling.mode is PoolingMode.SOFT:
                pooled = soft_ppv(conv, pooling.lam, pooling.shift)
            else:
                pooled = ppv(conv)
            column = k * features_per_kernel
            out[i, column] = pooled
            if pooling.include_max:
                out[i, column + 1] = max_pool(conv)
    return FeatureMatrix(out)


def save_features_csv(features: FeatureMatrix, path) -> None:
    """Write features as CSV: header example_id,f0,...,f{F-1}, one row per example.

    Floats carry full round-trip precision (parse back to identical float32).
    """
    with open(path, "w", encoding="utf-8") as fh:
        header = ",".join(["example_id"] + [f"f{j}" for j in range(features.feature_count)])
        fh.write(header + "\n")
        for i in range(features.n_examples):
            row = ",".join([str(i)] + [repr(float(v)) for v in features.values[i]])
            fh.write(row + "\n")


def load_features_csv(path) -> FeatureMatrix:
    """Read a CSV written by save_features_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "example_id":
            raise ValueError(f"{path}: not a feature CSV (bad header)")
        n_features = len(header) - 1
        rows = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != n_features + 1:
                raise ValueError(f"{path}: row has {len(parts) - 1} features, "
                                 f"expected {n_features}")
            rows.append([np.float32(float(p)) for p in parts[1:]])
    values = np.array(rows, dtype=np.float32).reshape(len(rows), n_features)
    return FeatureMatrix(values)
