"""Random convolutional kernel bank: generation, validation and serialization.

Kernels are drawn once from fixed distributions and never trained. A kernel
bank is exchanged between processes (or other implementations) through its
JSON file, never through seed equality, so the file format is the contract.
"""

import json
from dataclasses import dataclass

import numpy as np

KERNEL_LENGTHS = (7, 9, 11)
FORMAT_VERSION = 1

# |sum(weights)| tolerance for mean-centered kernels: absolute floor plus a
# term proportional to float32 accumulation error.
_CENTERED_ATOL = 1e-4
_CENTERED_RTOL = 1e-6


class KernelFormatError(ValueError):
    """A kernel file is malformed or violates a kernel invariant."""


@dataclass(frozen=True, eq=False)
class Kernel:
    """One dilated convolution kernel over a subset of input channels.

    weights is a flat float32 array of size len(channel_indices) * length,
    channel-major (all taps of the first selected channel, then the next).
    padding is the number of zeros added per side of the series; 0 means no
    padding. Arrays are treated as read-only after construction.
    """

    length: int
    weights: np.ndarray
    bias: float
    dilation: int
    padding: int
    channel_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights",
                           np.ascontiguousarray(self.weights, dtype=np.float32).ravel())
        object.__setattr__(self, "channel_indices",
                           tuple(int(c) for c in self.channel_indices))
        object.__setattr__(self, "bias", float(np.float32(self.bias)))
        if self.length < 1:
            raise ValueError(f"kernel length must be >= 1, got {self.length}")
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if not self.channel_indices:
            raise ValueError("kernel must select at least one channel")
        if any(c < 0 for c in self.channel_indices):
            raise ValueError("channel indices must be non-negative")
        if list(self.channel_indices) != sorted(set(self.channel_indices)):
            raise ValueError("channel indices must be sorted and distinct")
        expected = len(self.channel_indices) * self.length
        if self.weights.size != expected:
            raise ValueError(
                f"expected {expected} weights "
                f"({len(self.channel_indices)} channels x length {self.length}), "
                f"got {self.weights.size}")

    @property
    def num_selected_channels(self) -> int:
        return len(self.channel_indices)

    @property
    def span(self) -> int:
        """Distance between first and last tap: (length - 1) * dilation."""
        return (self.length - 1) * self.dilation

    @property
    def same_padding(self) -> int:
        """Per-side padding that keeps the output the same length as the input."""
        return self.span // 2


@dataclass(frozen=True, eq=False)
class KernelSet:
    """An ordered, immutable bank of kernels plus the context they were drawn for.

    Order is generation order and is preserved through serialization
    round-trips. Instances are safe to share across concurrent workers.
    """

    kernels: tuple[Kernel, ...]
    num_channels: int
    input_length_hint: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))

    @property
    def count(self) -> int:
        return len(self.kernels)

    def __len__(self) -> int:
        return len(self.kernels)

    def __iter__(self):
        return iter(self.kernels)


def generate_kernels(seed: int, num_kernels: int, input_length: int,
                     num_channels: int) -> KernelSet:
    """Draw a bank of randomly parameterized kernels.

    A deterministic function of ``seed``: a single PRNG stream with a fixed
    per-kernel draw order (length, channel count, channel indices, weights,
    bias, dilation, padding).

    Per kernel: length uniform on {7, 9, 11}; the number of selected channels
    is floor(2**u) with u ~ Uniform(0, log2(num_channels)); that many distinct
    channel indices drawn without replacement; weights standard normal, then
    mean-centered across the whole kernel; bias ~ Uniform(-1, 1); dilation
    floor(2**x) with x ~ Uniform(0, log2((input_length-1)/(length-1)));
    padding is the "same"-output amount with probability 1/2, else 0.

    Parameters
    ----------
    seed : int
        PRNG seed.
    num_kernels : int
        Number of kernels to draw (>= 0).
    input_length : int
        Length of the series the bank is intended for (>= 11 so the largest
        kernel fits at dilation 1). Bounds the dilation draw.
    num_channels : int
        Number of input channels (>= 1).
    """
    if num_kernels < 0:
        raise ValueError(f"num_kernels must be >= 0, got {num_kernels}")
    if input_length < 11:
        raise ValueError(f"input_length must be >= 11, got {input_length}")
    if num_channels < 1:
        raise ValueError(f"num_channels must be >= 1, got {num_channels}")

    rng = np.random.default_rng(seed)
    log2_channels = np.log2(num_channels)
    kernels = []
    for _ in range(num_kernels):
        length = KERNEL_LENGTHS[rng.integers(0, len(KERNEL_LENGTHS))]
        u = rng.uniform(0.0, log2_channels)
        n_sel = max(1, int(2.0 ** u))
        channels = np.sort(rng.choice(num_channels, size=n_sel, replace=False))
        weights = rng.standard_normal(n_sel * length)
        weights -= weights.mean()
        bias = rng.uniform(-1.0, 1.0)
        max_exponent = np.log2((input_length - 1) / (length - 1))
        dilation = int(2.0 ** rng.uniform(0.0, max_exponent))
        same = ((length - 1) * dilation) // 2
        padding = same if rng.integers(0, 2) == 1 else 0
        kernels.append(Kernel(
            length=length,
            weights=weights.astype(np.float32),
            bias=bias,
            dilation=dilation,
            padding=padding,
            channel_indices=tuple(int(c) for c in channels),
        ))
    return KernelSet(kernels=tuple(kernels), num_channels=num_channels,
                     input_length_hint=input_length, seed=int(seed))


def _check_kernel(kernel: Kernel, num_channels: int, input_length_hint: int,
                  index: int) -> None:
    """Raise KernelFormatError if the kernel violates a bank invariant."""
    where = f"kernel {index}"
    if kernel.length not in KERNEL_LENGTHS:
        raise KernelFormatError(
            f"{where}: length {kernel.length} not in {KERNEL_LENGTHS}")
    if not -1.0 <= kernel.bias <= 1.0:
        raise KernelFormatError(f"{where}: bias {kernel.bias} outside [-1, 1]")
    if kernel.padding not in (0, kernel.same_padding):
        raise KernelFormatError(
            f"{where}: padding {kernel.padding} is neither 0 nor the "
            f"same-output amount {kernel.same_padding}")
    if any(c >= num_channels for c in kernel.channel_indices):
        raise KernelFormatError(
            f"{where}: channel index {max(kernel.channel_indices)} out of "
            f"range for {num_channels} channels")
    if kernel.span > input_length_hint - 1:
        raise KernelFormatError(
            f"{where}: receptive field span {kernel.span} exceeds "
            f"input length {input_length_hint}")
    if not np.all(np.isfinite(kernel.weights)):
        raise KernelFormatError(f"{where}: non-finite weights")
    total = float(np.sum(kernel.weights))
    budget = _CENTERED_ATOL + _CENTERED_RTOL * float(np.sum(np.abs(kernel.weights)))
    if abs(total) > budget:
        raise KernelFormatError(
            f"{where}: weights not mean-centered (sum {total:.3e})")


def validate_kernel_set(kernel_set: KernelSet) -> None:
    """Check every bank invariant, naming the first offending kernel."""
    if kernel_set.num_channels < 1:
        raise KernelFormatError(
            f"num_channels must be >= 1, got {kernel_set.num_channels}")
    if kernel_set.input_length_hint < 11:
        raise KernelFormatError(
            f"input_length_hint must be >= 11, got {kernel_set.input_length_hint}")
    for i, kernel in enumerate(kernel_set.kernels):
        _check_kernel(kernel, kernel_set.num_channels,
                      kernel_set.input_length_hint, i)


def save_kernels(kernel_set: KernelSet, path) -> None:
    """Write a kernel bank as JSON, round-trippable bit-exactly via load_kernels.

    Floats are serialized with full round-trip precision: the shortest decimal
    that parses back to the identical float32 value.
    """
    validate_kernel_set(kernel_set)
    doc = {
        "format_version": FORMAT_VERSION,
        "seed": kernel_set.seed,
        "num_channels": kernel_set.num_channels,
        "input_length_hint": kernel_set.input_length_hint,
        "kernels": [
            {
                "length": k.length,
                "dilation": k.dilation,
                "padding": k.padding,
                "bias": k.bias,
                "channel_indices": list(k.channel_indices),
                "weights": [float(w) for w in k.weights],
            }
            for k in kernel_set.kernels
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_kernels(path) -> KernelSet:
    """Read a kernel bank written by save_kernels and re-validate every invariant."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise KernelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise KernelFormatError(f"{path}: top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise KernelFormatError(
            f"{path}: unsupported format_version {doc.get('format_version')!r}")
    for key in ("seed", "num_channels", "input_length_hint", "kernels"):
        if key not in doc:
            raise KernelFormatError(f"{path}: missing key {key!r}")
    kernels = []
    for i, entry in enumerate(doc["kernels"]):
        try:
            kernel = Kernel(
                length=int(entry["length"]),
                weights=np.array(entry["weights"], dtype=np.float32),
                bias=np.float32(entry["bias"]),
                dilation=int(entry["dilation"]),
                padding=int(entry["padding"]),
                channel_indices=tuple(int(c) for c in entry["channel_indices"]),
            )
        except KeyError as exc:
            raise KernelFormatError(f"kernel {i}: missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise KernelFormatError(f"kernel {i}: {exc}") from exc
        kernels.append(kernel)
    kernel_set = KernelSet(
        kernels=tuple(kernels),
        num_channels=int(doc["num_channels"]),
        input_length_hint=int(doc["input_length_hint"]),
        seed=int(doc["seed"]),
    )
    validate_kernel_set(kernel_set)
    return kernel_set
