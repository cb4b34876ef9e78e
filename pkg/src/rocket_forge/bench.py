"""Throughput benchmark harness for the batched kernel transform.

Measures wall time of the transform alone over a sweep of batch sizes, with
untimed warmup runs, repeats, and a seeded random execution order so slow
drift (thermal, clock) cannot masquerade as a batch-size effect. Input data
is synthesized before the timed section. The harness itself is
single-threaded; the engine under test brings its own workers.
"""

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from .kernelgen import generate_kernels
from .pooling import PoolingConfig
from .transform import TimeSeriesBatch, max_workers, transform_batch

DEFAULT_BATCH_SIZES = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000)


class SizingError(RuntimeError):
    """The configured sweep would exceed the memory budget."""


@dataclass(frozen=True)
class BenchConfig:
    """Sweep definition. Batch sizes are deduplicated and kept sorted.

    Defaults describe a full-scale sweep (10,000 kernels on 20 x 50,000
    series, batch sizes 1 to 1000); pass smaller values for desk-scale runs.
    """

    batch_sizes: tuple[int, ...] = DEFAULT_BATCH_SIZES
    repeats: int = 3
    warmup_iters: int = 2
    num_kernels: int = 10_000
    n_channels: int = 20
    n_timesteps: int = 50_000
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    seed: int = 0
    workers: int | None = None
    memory_budget_bytes: int = 8 * 2**30

    def __post_init__(self):
        sizes = tuple(sorted(set(int(b) for b in self.batch_sizes)))
        if not sizes:
            raise ValueError("batch_sizes must not be empty")
        if sizes[0] < 1:
            raise ValueError(f"batch sizes must be positive, got {sizes[0]}")
        object.__setattr__(self, "batch_sizes", sizes)
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.warmup_iters < 0:
            raise ValueError(f"warmup_iters must be >= 0, got {self.warmup_iters}")
        if self.num_kernels < 1:
            raise ValueError(f"num_kernels must be >= 1, got {self.num_kernels}")
        if self.n_channels < 1 or self.n_timesteps < 11:
            raise ValueError("need n_channels >= 1 and n_timesteps >= 11")
        if self.memory_budget_bytes < 1:
            raise ValueError("memory_budget_bytes must be positive")


@dataclass(frozen=True)
class BenchRow:
    batch_size: int
    wall_seconds: tuple[float, ...]
    median_wall_seconds: float
    throughput_tps: float


@dataclass(frozen=True)
class BenchReport:
    """One row per configured batch size, sorted ascending, plus metadata."""

    rows: tuple[BenchRow, ...]
    metadata: dict


def estimate_bytes(config: BenchConfig, batch_size: int, kernel_bytes: int) -> int:
    """Peak working-set estimate for one batch size: inputs + features + kernels."""
    features_per_kernel = 2 if config.pooling.include_max else 1
    input_bytes = batch_size * config.n_channels * config.n_timesteps * 4
    feature_bytes = batch_size * config.num_kernels * features_per_kernel * 4
    return input_bytes + feature_bytes + kernel_bytes


def _make_batch(config: BenchConfig, batch_size: int) -> TimeSeriesBatch:
    rng = np.random.default_rng([config.seed, batch_size])
    data = rng.standard_normal((batch_size, config.n_channels, config.n_timesteps),
                               dtype=np.float32)
    return TimeSeriesBatch(data)


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Execute the sweep and collect timings.

    Batch sizes run in a seeded random permutation; per batch size the input
    is built first, then warmup_iters untimed and ``repeats`` timed calls of
    the transform. Only the transform is inside the timed section. Raises
    SizingError up front if any batch size would exceed the memory budget.
    """
    kernels = generate_kernels(config.seed, config.num_kernels,
                               config.n_timesteps, config.n_channels)
    kernel_bytes = sum(k.weights.nbytes + 8 * len(k.channel_indices)
                       for k in kernels)
    for batch_size in config.batch_sizes:
        needed = estimate_bytes(config, batch_size, kernel_bytes)
        if needed > config.memory_budget_bytes:
            raise SizingError(
                f"batch size {batch_size} needs about {needed} bytes, over the "
                f"budget of {config.memory_budget_bytes}")

    rng = np.random.default_rng(config.seed)
    order = [config.batch_sizes[i]
             for i in rng.permutation(len(config.batch_sizes))]

    timings = {}
    for batch_size in order:
        batch = _make_batch(config, batch_size)
        for _ in range(config.warmup_iters):
            transform_batch(batch, kernels, config.pooling, workers=config.workers)
        walls = []
        for _ in range(config.repeats):
            start = time.perf_counter()
            transform_batch(batch, kernels, config.pooling, workers=config.workers)
            walls.append(time.perf_counter() - start)
        timings[batch_size] = tuple(walls)

    rows = []
    for batch_size in config.batch_sizes:
        walls = timings[batch_size]
        median = statistics.median(walls)
        rows.append(BenchRow(batch_size=batch_size, wall_seconds=walls,
                             median_wall_seconds=median,
                             throughput_tps=batch_size / median))

    config_echo = asdict(config)
    config_echo["pooling"] = {
        "mode": config.pooling.mode.value,
        "lam": config.pooling.lam,
        "shift": config.pooling.shift,
        "include_max": config.pooling.include_max,
    }
    metadata = {
        "worker_count": config.workers if config.workers is not None else max_workers(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "timer": "time.perf_counter",
        "timer_resolution_seconds": time.get_clock_info("perf_counter").resolution,
        "config": config_echo,
    }
    return BenchReport(rows=tuple(rows), metadata=metadata)


def export_report(report: BenchReport, path) -> None:
    """Write the report as CSV plus a JSON metadata sidecar.

    The CSV has one line per (batch size, repeat):
    batch_size,repeat,wall_seconds,median_wall_seconds,throughput_tps.
    The sidecar lands next to the CSV with a .json suffix.
    """
    path = str(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("batch_size,repeat,wall_seconds,median_wall_seconds,throughput_tps\n")
        for row in report.rows:
            for repeat, wall in enumerate(row.wall_seconds):
                fh.write(f"{row.batch_size},{repeat},{wall!r},"
                         f"{row.median_wall_seconds!r},{row.throughput_tps!r}\n")
    sidecar = path[:-4] + ".json" if path.endswith(".csv") else path + ".json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(report.metadata, fh, indent=1)
        fh.write("\n")
