"""Random convolutional kernel features for time series, at batch scale.

A fixed bank of randomly parameterized dilated kernels turns each series
into pooled features (proportion of positive values, optionally softened
into a sigmoid mean, plus the max), which feed a closed-form ridge
regressor. Includes surface-roughness metrology, a synthetic sensor dataset
generator and a batch-size throughput benchmark harness.
"""

from .bench import BenchConfig, BenchReport, SizingError, export_report, run_benchmark
from .kernelgen import (Kernel, KernelFormatError, KernelSet, generate_kernels,
                        load_kernels, save_kernels)
from .pooling import PoolingConfig, PoolingMode, max_pool, ppv, soft_ppv, soft_ppv_grad
from .ridge import RidgeModel, mse
from .surface import SurfaceProfile, SynthConfig, compute_ra, generate_dataset, \
    highpass_filter, normalize_per_channel
from .transform import (FeatureMatrix, TimeSeriesBatch, apply_kernel, max_workers,
                        transform_batch, transform_reference)

__version__ = "0.1.0"

__all__ = [
    "BenchConfig", "BenchReport", "SizingError", "export_report", "run_benchmark",
    "Kernel", "KernelFormatError", "KernelSet", "generate_kernels",
    "load_kernels", "save_kernels",
    "PoolingConfig", "PoolingMode", "max_pool", "ppv", "soft_ppv", "soft_ppv_grad",
    "RidgeModel", "mse",
    "SurfaceProfile", "SynthConfig", "compute_ra", "generate_dataset",
    "highpass_filter", "normalize_per_channel",
    "FeatureMatrix", "TimeSeriesBatch", "apply_kernel", "max_workers",
    "transform_batch", "transform_reference",
    "__version__",
]
