"""Surface metrology and data preparation.

Covers the arithmetic mean roughness (Ra) of a height profile after Gaussian
high-pass filtering, per-channel normalization of sensor batches, and a
synthetic stand-in for inline laser reflection measurements: a rough surface
is synthesized, its slopes steer a mirror-reflected beam across an arc of
sensors, and each sensor reports quantized light intensities with its own
gain, noise and occasional partial occlusion.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .transform import TimeSeriesBatch

# Gaussian profile filter weighting constant: with s(x) =
# exp(-pi (x / (a * cutoff))^2) / (a * cutoff) and a = sqrt(ln 2 / pi), the
# mean line transmits exactly 50% of a sinusoid at wavelength = cutoff.
GAUSSIAN_FILTER_ALPHA = math.sqrt(math.log(2.0) / math.pi)

DATASET_MAGIC = b"RKDS"
DATASET_VERSION = 1


@dataclass(frozen=True, eq=False)
class SurfaceProfile:
    """Height profile in micrometers, sampled every ``spacing`` micrometers."""

    heights: np.ndarray
    spacing: float

    def __post_init__(self):
        heights = np.ascontiguousarray(self.heights, dtype=np.float64)
        if heights.ndim != 1 or heights.size < 2:
            raise ValueError("profile needs at least 2 height samples")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        object.__setattr__(self, "heights", heights)
        object.__setattr__(self, "spacing", float(self.spacing))


def filter_edge_margin(cutoff: float, spacing: float) -> int:
    """Samples per profile end affected by kernel truncation at +-cutoff."""
    return int(math.floor(cutoff / spacing))


def highpass_filter(profile: SurfaceProfile, cutoff: float) -> SurfaceProfile:
    """Remove wavelengths longer than ``cutoff`` (micrometers) from a profile.

    Subtracts the Gaussian-weighted moving average built from the standard
    metrology weighting function (see GAUSSIAN_FILTER_ALPHA), truncated at
    +-cutoff and renormalized to unit sum. A sinusoid at wavelength = cutoff
    keeps 50% of its amplitude in the mean line. The first and last
    floor(cutoff / spacing) samples are biased by the zero-extended edges;
    use filter_edge_margin to exclude them.
    """
    if not cutoff > 2 * profile.spacing:
        raise ValueError(
            f"cutoff {cutoff} must exceed twice the spacing {profile.spacing}")
    margin = filter_edge_margin(cutoff, profile.spacing)
    n = profile.heights.size
    if n < 2 * margin + 1:
        raise ValueError(
            f"profile of {n} samples is too short for cutoff {cutoff} "
            f"(needs at least {2 * margin + 1})")
    offsets = np.arange(-margin, margin + 1) * profile.spacing
    window = np.exp(-math.pi * (offsets / (GAUSSIAN_FILTER_ALPHA * cutoff)) ** 2)
    window /= window.sum()
    mean_line = np.convolve(profile.heights, window, mode="same")
    return SurfaceProfile(profile.heights - mean_line, profile.spacing)


def compute_ra(profile: SurfaceProfile, cutoff: float | None = None) -> float:
    """Arithmetic mean absolute deviation of the roughness profile, in um.

    With a cutoff, the profile is high-pass filtered first and Ra is taken
    over the central region unaffected by the filter's truncated edges. The
    (remaining) profile is mean-centered before averaging |z|.
    """
    if cutoff is None:
        z = profile.heights
    else:
        filtered = highpass_filter(profile, cutoff)
        margin = filter_edge_margin(cutoff, profile.spacing)
        z = filtered.heights[margin:filtered.heights.size - margin]
        if z.size == 0:
            raise ValueError(
                f"no samples left after excluding {margin} edge samples per side")
    z = z - z.mean()
    return float(np.mean(np.abs(z)))


def normalize_per_channel(batch: TimeSeriesBatch) -> TimeSeriesBatch:
    """Center each example's each channel at zero and scale to unit deviation.

    Statistics are per example and per channel over time (population standard
    deviation); constant channels map to all zeros. Robust to per-sensor gain
    differences and partial occlusion, and needs no training-set state.
    """
    data = batch.data.astype(np.float64)
    means = data.mean(axis=2, keepdims=True)
    sds = data.std(axis=2, keepdims=True)
    centered = data - means
    normalized = np.where(sds > 0, centered / np.where(sds > 0, sds, 1.0), 0.0)
    return TimeSeriesBatch(normalized.astype(np.float32))


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic laser-reflection dataset.

    Geometry and sensor constants are free parameters of the forward model;
    the defaults are calibrated so that the slope signal is recoverable but
    noisy. Lengths are micrometers, angles radians.
    """

    seed: int = 0
    n_samples: int = 200
    n_channels: int = 20
    n_timesteps: int = 2000
    target_ra_range: tuple[float, float] = (0.605, 1.834)
    sensor_noise_sd: float = 6.0
    per_channel_gain_range: tuple[float, float] = (0.7, 1.3)
    occlusion_probability: float = 0.05
    correlation_length: float = 25.0
    spacing: float = 0.8
    sensor_arc_halfwidth: float = 0.25
    sensor_angle_sigma: float = 0.06
    label_cutoff: float = 250.0

    def __post_init__(self):
        lo, hi = self.target_ra_range
        if not 0 < lo <= hi:
            raise ValueError(f"target_ra_range must satisfy 0 < min <= max, "
                             f"got {self.target_ra_range}")
        if not 0 <= self.occlusion_probability <= 1:
            raise ValueError(
                f"occlusion_probability must be in [0, 1], got {self.occlusion_probability}")
        if self.n_samples < 0:
            raise ValueError(f"n_samples must be >= 0, got {self.n_samples}")
        if self.n_channels < 1:
            raise ValueError(f"n_channels must be >= 1, got {self.n_channels}")
        if self.n_timesteps < 2:
            raise ValueError(f"n_timesteps must be >= 2, got {self.n_timesteps}")
        g_lo, g_hi = self.per_channel_gain_range
        if not 0 < g_lo <= g_hi:
            raise ValueError(f"per_channel_gain_range must satisfy 0 < min <= max, "
                             f"got {self.per_channel_gain_range}")
        if not self.correlation_length > 0:
            raise ValueError(f"correlation_length must be > 0, got {self.correlation_length}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        if not self.sensor_noise_sd >= 0:
            raise ValueError(f"sensor_noise_sd must be >= 0, got {self.sensor_noise_sd}")
        if not (self.sensor_arc_halfwidth > 0 and self.sensor_angle_sigma > 0):
            raise ValueError("sensor_arc_halfwidth and sensor_angle_sigma must be > 0")
        if not self.label_cutoff > 2 * self.spacing:
            raise ValueError(
                f"label_cutoff {self.label_cutoff} must exceed twice the spacing")
        min_timesteps = 2 * filter_edge_margin(self.label_cutoff, self.spacing) + 1
        if self.n_timesteps < min_timesteps:
            raise ValueError(
                f"n_timesteps {self.n_timesteps} too short for label_cutoff "
                f"{self.label_cutoff} at spacing {self.spacing} "
                f"(needs at least {min_timesteps})")


def generate_dataset(config: SynthConfig):
    """Synthesize sensor batches with Ra labels; deterministic in the seed.

    Per sample: Gaussian noise is smoothed to the correlation length, its
    wavelengths beyond the label cutoff are removed (synthesized with extra
    margin so the kept profile has no filter edge bias), and the profile is
    rescaled so its filtered Ra hits a target drawn from the configured
    range. The surface slope doubles into a mirror reflection angle; each
    sensor at its nominal angle on the arc responds with a Gaussian angular
    profile scaled by a per-sample gain (occasionally crushed to 20-70% to
    mimic partial occlusion), plus noise, clamped to [0, 255] and rounded to
    integer intensities. The label is the high-pass-filtered Ra at
    config.label_cutoff.

    Returns (TimeSeriesBatch, labels array, list of SurfaceProfile).
    """
    rng = np.random.default_rng(config.seed)
    n, c, t = config.n_samples, config.n_channels, config.n_timesteps
    sensor_angles = np.linspace(-config.sensor_arc_halfwidth,
                                config.sensor_arc_halfwidth, c)
    ra_lo, ra_hi = config.target_ra_range
    gain_lo, gain_hi = config.per_channel_gain_range
    smoothing_sigma = config.correlation_length / config.spacing
    margin = filter_edge_margin(config.label_cutoff, config.spacing)

    data = np.empty((n, c, t), dtype=np.float32)
    labels = np.empty(n, dtype=np.float64)
    profiles = []
    for i in range(n):
        target_ra = rng.uniform(ra_lo, ra_hi)
        raw = rng.standard_normal(t + 1 + 2 * margin)
        smooth = ndimage.gaussian_filter1d(raw, sigma=smoothing_sigma, mode="reflect")
        band = highpass_filter(SurfaceProfile(smooth, config.spacing),
                               config.label_cutoff)
        heights = band.heights[margin:margin + t + 1]
        base_ra = compute_ra(SurfaceProfile(heights, config.spacing),
                             config.label_cutoff)
        if base_ra == 0:
            raise RuntimeError("degenerate flat profile; try another seed")
        heights = heights * (target_ra / base_ra)
        profile = SurfaceProfile(heights, config.spacing)
        labels[i] = compute_ra(profile, config.label_cutoff)

        slope = np.diff(heights) / config.spacing
        beam_angle = np.arctan(2.0 * slope)

        gains = rng.uniform(gain_lo, gain_hi, size=c)
        occluded = rng.random(c) < config.occlusion_probability
        occlusion_factors = rng.uniform(0.2, 0.7, size=c)
        gains = np.where(occluded, gains * occlusion_factors, gains)
        noise = rng.normal(0.0, config.sensor_noise_sd, size=(c, t))

        response = np.exp(-(beam_angle[np.newaxis, :] - sensor_angles[:, np.newaxis]) ** 2
                          / (2.0 * config.sensor_angle_sigma ** 2))
        intensity = gains[:, np.newaxis] * 255.0 * response + noise
        np.clip(intensity, 0.0, 255.0, out=intensity)
        data[i] = np.rint(intensity)
        profiles.append(profile)

    return TimeSeriesBatch(data), labels, profiles


def save_dataset(batch: TimeSeriesBatch, path) -> None:
    """Write a batch in the RKDS binary layout.

    Magic "RKDS"; little-endian uint32 fields version, N, C, T; then N*C*T
    little-endian float32 values, row-major [example][channel][timestep].
    """
    header = struct.pack("<4sIIII", DATASET_MAGIC, DATASET_VERSION,
                         batch.n_examples, batch.n_channels, batch.n_timesteps)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.data, dtype="<f4").tobytes())


def load_dataset(path) -> TimeSeriesBatch:
    """Read a batch written by save_dataset."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) != 20:
            raise ValueError(f"{path}: truncated header")
        magic, version, n, c, t = struct.unpack("<4sIIII", header)
        if magic != DATASET_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != DATASET_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = n * c * t * 4
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, "
                         f"got {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, c, t)
    return TimeSeriesBatch(data.copy())


def save_labels_csv(labels, path) -> None:
    """Write labels as CSV with header example_id,ra."""
    labels = np.asarray(labels, dtype=np.float64).ravel()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("example_id,ra\n")
        for i, value in enumerate(labels):
            fh.write(f"{i},{float(value)!r}\n")


def load_labels_csv(path) -> np.ndarray:
    """Read labels written by save_labels_csv."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "example_id,ra":
            raise ValueError(f"{path}: bad labels header {header!r}")
        values = []
        for line in fh:
            _, value = line.strip().split(",")
            values.append(float(value))
    return np.array(values, dtype=np.float64)
