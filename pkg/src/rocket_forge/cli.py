"""Command-line entry points for reproducible experiment workflows.

Subcommands: gen-kernels, synth, pipeline, lambda-sweep, bench. Every
invocation that writes outputs also writes a manifest JSON alongside them
with the fully resolved configuration, seeds, paths and timestamps, enough
to re-run the command bit-identically (timings aside). Exit codes: 0 on
success, 1 on runtime or data errors, 2 on usage errors.
"""

import functools
import json
import sys
from dataclasses import fields as dataclass_fields
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__, bench, kernelgen, ridge, surface, transform
from .bench import BenchConfig, SizingError
from .kernelgen import KernelFormatError
from .pooling import PoolingConfig, PoolingMode
from .surface import SynthConfig


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(path, command, config, seeds, inputs, outputs,
                    started_at, finished_at) -> None:
    doc = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool_version": __version__,
        "started_at": started_at,
        "finished_at": finished_at,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _fail_on_domain_errors(f):
    """Map domain errors to exit code 1; click handles usage errors (exit 2)."""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ValueError, OSError, SizingError, KernelFormatError) as exc:
            raise click.ClickException(str(exc))
    return wrapper


def _parse_float_list(text, flag):
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise click.BadParameter(f"{flag} must be a comma-separated list of numbers")
    if not values:
        raise click.BadParameter(f"{flag} must not be empty")
    return values


def _parse_int_list(text, flag):
    values = _parse_float_list(text, flag)
    if any(v != int(v) for v in values):
        raise click.BadParameter(f"{flag} must contain integers")
    return [int(v) for v in values]


def stratified_split(labels, train_fraction, seed):
    """Seeded train/test split stratified by label quantile.

    Examples are ranked by label, the ranking is cut into one stratum per
    test slot, and one member of each stratum goes to the test set, so the
    small test set still covers the label range.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.size
    if not 0 < train_fraction < 1:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    n_test = max(1, round(n * (1.0 - train_fraction)))
    if n - n_test < 2:
        raise ValueError(f"split leaves {n - n_test} training rows; need at least 2")
    rng = np.random.default_rng(seed)
    order = np.argsort(labels, kind="stable")
    test = []
    for stratum in np.array_split(order, n_test):
        test.append(int(rng.choice(stratum)))
    test = np.sort(np.array(test, dtype=np.int64))
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    return np.flatnonzero(mask), test


def evaluate_split(features, labels, train_idx, test_idx, alphas=ridge.DEFAULT_ALPHAS):
    """Fit on the training rows and report train/test/baseline MSE.

    The baseline predicts the training-label mean for every test row.
    """
    values = features.values if hasattr(features, "values") else np.asarray(features)
    model = ridge.fit(values[train_idx], labels[train_idx], alphas)
    train_pred = ridge.predict(model, values[train_idx])
    test_pred = ridge.predict(model, values[test_idx])
    baseline = np.full(len(test_idx), float(np.mean(labels[train_idx])))
    metrics = {
        "train_mse": ridge.mse(train_pred, labels[train_idx]),
        "test_mse": ridge.mse(test_pred, labels[test_idx]),
        "baseline_mse": ridge.mse(baseline, labels[test_idx]),
        "n_train": int(len(train_idx)),
        "n_test": int(len(test_idx)),
    }
    return model, metrics, train_pred, test_pred


def _load_synth_config(path) -> SynthConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: synth config must be a JSON object")
    known = {f.name for f in dataclass_fields(SynthConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"{path}: unknown synth config keys {unknown}")
    for key in ("target_ra_range", "per_channel_gain_range"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return SynthConfig(**doc)


def _synth_config_echo(config: SynthConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in dataclass_fields(config)}


def _resolve_dataset(synth_config_path, data_path, labels_path):
    if synth_config_path is not None and data_path is not None:
        raise click.UsageError("use either --synth-config or --data/--labels, not both")
    if synth_config_path is not None:
        config = _load_synth_config(synth_config_path)
        batch, labels, _ = surface.generate_dataset(config)
        source = {"synth_config": str(synth_config_path),
                  "resolved": _synth_config_echo(config)}
        inputs = [synth_config_path]
    elif data_path is not None:
        if labels_path is None:
            raise click.UsageError("--data requires --labels")
        batch = surface.load_dataset(data_path)
        labels = surface.load_labels_csv(labels_path)
        if labels.size != batch.n_examples:
            raise ValueError(f"{batch.n_examples} examples but {labels.size} labels")
        source = {"data": str(data_path), "labels": str(labels_path)}
        inputs = [data_path, labels_path]
    else:
        raise click.UsageError("select a dataset with --synth-config or --data/--labels")
    if batch.n_examples < 4:
        raise ValueError(f"dataset has {batch.n_examples} examples; need at least 4")
    return batch, labels, source, inputs


def _pooling_from_flags(pooling, lam, shift, include_max=True) -> PoolingConfig:
    mode = PoolingMode.SOFT if pooling == "soft" else PoolingMode.HARD
    return PoolingConfig(mode=mode, lam=lam, shift=shift, include_max=include_max)


@click.group()
@click.version_option(version=__version__, prog_name="rocket-forge")
def main():
    """Random-kernel time series features, surface metrology and benchmarks."""


@main.command("gen-kernels")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--num-kernels", type=int, default=10_000, show_default=True)
@click.option("--input-length", type=int, required=True,
              help="Series length the bank is generated for.")
@click.option("--channels", type=int, required=True,
              help="Number of input channels.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_fail_on_domain_errors
def cmd_gen_kernels(seed, num_kernels, input_length, channels, out):
    """Generate a random kernel bank and write it as JSON."""
    started = _utc_now()
    kernel_set = kernelgen.generate_kernels(seed, num_kernels, input_length, channels)
    out.parent.mkdir(parents=True, exist_ok=True)
    kernelgen.save_kernels(kernel_set, out)
    manifest = out.with_name(out.name + ".manifest.json")
    _write_manifest(
        manifest, "gen-kernels",
        {"num_kernels": num_kernels, "input_length": input_length,
         "channels": channels},
        {"seed": seed}, [], [out, manifest], started, _utc_now())
    click.echo(f"wrote {kernel_set.count} kernels (seed {seed}) to {out}")


@main.command("synth")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-samples", type=int, required=True)
@click.option("--channels", type=int, default=20, show_default=True)
@click.option("--timesteps", type=int, default=2000, show_default=True)
@click.option("--ra-min", type=float, default=0.605, show_default=True)
@click.option("--ra-max", type=float, default=1.834, show_default=True)
@click.option("--noise-sd", type=float, default=SynthConfig.sensor_noise_sd,
              show_default=True)
@click.option("--gain-min", type=float, default=0.7, show_default=True)
@click.option("--gain-max", type=float, default=1.3, show_default=True)
@click.option("--occlusion-prob", type=float, default=SynthConfig.occlusion_probability,
              show_default=True)
@click.option("--correlation-length", type=float, default=SynthConfig.correlation_length,
              show_default=True, help="Smoothing length of the surface, um.")
@click.option("--spacing", type=float, default=SynthConfig.spacing, show_default=True,
              help="Distance between timesteps, um.")
@click.option("--label-cutoff", type=float, default=SynthConfig.label_cutoff,
              show_default=True, help="High-pass cutoff for Ra labels, um.")
@click.option("--out-prefix", type=click.Path(path_type=Path), required=True)
@_fail_on_domain_errors
def cmd_synth(seed, n_samples, channels, timesteps, ra_min, ra_max, noise_sd,
              gain_min, gain_max, occlusion_prob, correlation_length, spacing,
              label_cutoff, out_prefix):
    """Generate a synthetic sensor dataset with Ra labels."""
    started = _utc_now()
    config = SynthConfig(
        seed=seed, n_samples=n_samples, n_channels=channels,
        n_timesteps=timesteps, target_ra_range=(ra_min, ra_max),
        sensor_noise_sd=noise_sd, per_channel_gain_range=(gain_min, gain_max),
        occlusion_probability=occlusion_prob, correlation_length=correlation_length,
        spacing=spacing, label_cutoff=label_cutoff)
    batch, labels, _ = surface.generate_dataset(config)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    data_path = out_prefix.with_name(out_prefix.name + ".rkds")
    labels_path = out_prefix.with_name(out_prefix.name + "_labels.csv")
    manifest = out_prefix.with_name(out_prefix.name + ".manifest.json")
    surface.save_dataset(batch, data_path)
    surface.save_labels_csv(labels, labels_path)
    _write_manifest(manifest, "synth", _synth_config_echo(config),
                    {"seed": seed}, [], [data_path, labels_path, manifest],
                    started, _utc_now())
    click.echo(f"wrote {batch.n_examples} examples "
               f"({batch.n_channels} channels x {batch.n_timesteps} timesteps) "
               f"to {data_path}")


_DATASET_OPTIONS = [
    click.option("--synth-config", "synth_config_path",
                 type=click.Path(exists=True, dir_okay=False, path_type=Path),
                 default=None, help="JSON file of synthetic dataset settings."),
    click.option("--data", "data_path",
                 type=click.Path(exists=True, dir_okay=False, path_type=Path),
                 default=None, help="RKDS dataset file."),
    click.option("--labels", "labels_path",
                 type=click.Path(exists=True, dir_okay=False, path_type=Path),
                 default=None, help="Labels CSV matching --data."),
    click.option("--kernels", "kernels_path",
                 type=click.Path(exists=True, dir_okay=False, path_type=Path),
                 required=True, help="Kernel bank JSON."),
    click.option("--train-test-split", type=float, default=0.9, show_default=True,
                 help="Training fraction; the rest is held out."),
    click.option("--seed", type=int, default=0, show_default=True,
                 help="Seed for the stratified split."),
    click.option("--alphas", type=str, default=None,
                 help="Comma-separated ridge regularization candidates."),
    click.option("--workers", type=int, default=None, envvar="ROCKET_FORGE_WORKERS",
                 help="Engine worker cap (env ROCKET_FORGE_WORKERS)."),
    click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path),
                 required=True),
]


def _dataset_options(f):
    for option in reversed(_DATASET_OPTIONS):
        f = option(f)
    return f


def _check_split_fraction(value):
    if not 0 < value < 1:
        raise click.BadParameter(
            f"--train-test-split must be strictly between 0 and 1, got {value}")


@main.command("pipeline")
@_dataset_options
@click.option("--pooling", type=click.Choice(["hard", "soft"]), default="hard",
              show_default=True)
@click.option("--lambda", "lam", type=float, default=4.0, show_default=True,
              help="Sigmoid steepness for soft pooling.")
@click.option("--shift", type=float, default=3.0, show_default=True)
@_fail_on_domain_errors
def cmd_pipeline(synth_config_path, data_path, labels_path, kernels_path,
                 train_test_split, seed, alphas, workers, out_dir, pooling,
                 lam, shift):
    """Run dataset -> normalize -> transform -> ridge fit -> evaluation."""
    started = _utc_now()
    _check_split_fraction(train_test_split)
    alpha_values = (_parse_float_list(alphas, "--alphas") if alphas
                    else list(ridge.DEFAULT_ALPHAS))
    batch, labels, source, inputs = _resolve_dataset(
        synth_config_path, data_path, labels_path)
    kernels = kernelgen.load_kernels(kernels_path)
    pooling_config = _pooling_from_flags(pooling, lam, shift)

    normalized = surface.normalize_per_channel(batch)
    features = transform.transform_batch(normalized, kernels, pooling_config,
                                         workers=workers)
    train_idx, test_idx = stratified_split(labels, train_test_split, seed)
    model, metrics, train_pred, test_pred = evaluate_split(
        features, labels, train_idx, test_idx, alpha_values)

    out_dir.mkdir(parents=True, exist_ok=True)
    features_path = out_dir / "features.csv"
    model_path = out_dir / "model.json"
    predictions_path = out_dir / "predictions.csv"
    metrics_path = out_dir / "metrics.json"
    manifest_path = out_dir / "manifest.json"

    transform.save_features_csv(features, features_path)
    ridge.save_model(model, model_path)
    with open(predictions_path, "w", encoding="utf-8") as fh:
        fh.write("example_id,split,actual,predicted\n")
        for idx, pred in zip(train_idx, train_pred):
            fh.write(f"{idx},train,{float(labels[idx])!r},{float(pred)!r}\n")
        for idx, pred in zip(test_idx, test_pred):
            fh.write(f"{idx},test,{float(labels[idx])!r},{float(pred)!r}\n")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1)
        fh.write("\n")
    _write_manifest(
        manifest_path, "pipeline",
        {"source": source, "kernels": str(kernels_path),
         "pooling": {"mode": pooling, "lam": lam, "shift": shift},
         "train_test_split": train_test_split, "alphas": alpha_values,
         "workers": workers},
        {"split_seed": seed},
        inputs + [kernels_path],
        [features_path, model_path, predictions_path, metrics_path, manifest_path],
        started, _utc_now())
    click.echo(f"train_mse={metrics['train_mse']:.6g} "
               f"test_mse={metrics['test_mse']:.6g} "
               f"baseline_mse={metrics['baseline_mse']:.6g}")


@main.command("lambda-sweep")
@_dataset_options
@click.option("--lambdas", type=str, default="1,2,3,4,8,16,64,256,1000",
              show_default=True, help="Comma-separated soft pooling steepness values.")
@click.option("--shift", type=float, default=3.0, show_default=True)
@_fail_on_domain_errors
def cmd_lambda_sweep(synth_config_path, data_path, labels_path, kernels_path,
                     train_test_split, seed, alphas, workers, out_dir, lambdas,
                     shift):
    """Evaluate soft pooling across steepness values against the hard baseline.

    All evaluations share the dataset, kernels and split; the output CSV has
    one lambda,test_mse row per steepness plus one hard-pooling row.
    """
    started = _utc_now()
    _check_split_fraction(train_test_split)
    lambda_values = _parse_float_list(lambdas, "--lambdas")
    alpha_values = (_parse_float_list(alphas, "--alphas") if alphas
                    else list(ridge.DEFAULT_ALPHAS))
    batch, labels, source, inputs = _resolve_dataset(
        synth_config_path, data_path, labels_path)
    kernels = kernelgen.load_kernels(kernels_path)
    normalized = surface.normalize_per_channel(batch)
    train_idx, test_idx = stratified_split(labels, train_test_split, seed)

    results = []
    for lam in lambda_values:
        config = PoolingConfig(mode=PoolingMode.SOFT, lam=lam, shift=shift)
        features = transform.transform_batch(normalized, kernels, config,
                                             workers=workers)
        _, metrics, _, _ = evaluate_split(features, labels, train_idx, test_idx,
                                          alpha_values)
        results.append((f"{lam:g}", metrics["test_mse"]))
        click.echo(f"lambda={lam:g} test_mse={metrics['test_mse']:.6g}")
    hard_features = transform.transform_batch(normalized, kernels,
                                              PoolingConfig(mode=PoolingMode.HARD),
                                              workers=workers)
    _, hard_metrics, _, _ = evaluate_split(hard_features, labels, train_idx,
                                           test_idx, alpha_values)
    results.append(("hard", hard_metrics["test_mse"]))
    click.echo(f"hard test_mse={hard_metrics['test_mse']:.6g}")

    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / "lambda_sweep.csv"
    manifest_path = out_dir / "manifest.json"
    with open(sweep_path, "w", encoding="utf-8") as fh:
        fh.write("lambda,test_mse\n")
        for name, value in results:
            fh.write(f"{name},{value!r}\n")
    _write_manifest(
        manifest_path, "lambda-sweep",
        {"source": source, "kernels": str(kernels_path),
         "lambdas": lambda_values, "shift": shift,
         "train_test_split": train_test_split, "alphas": alpha_values,
         "workers": workers},
        {"split_seed": seed},
        inputs + [kernels_path], [sweep_path, manifest_path],
        started, _utc_now())


@main.command("bench")
@click.option("--batch-sizes", type=str, default="1,2,4,8,16,32,64",
              show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--warmup", type=int, default=2, show_default=True)
@click.option("--num-kernels", type=int, default=2000, show_default=True,
              help="Desk-scale default; the full-scale sweep uses 10000.")
@click.option("--channels", type=int, default=20, show_default=True)
@click.option("--timesteps", type=int, default=2000, show_default=True,
              help="Desk-scale default; the full-scale sweep uses 50000.")
@click.option("--pooling", type=click.Choice(["hard", "soft"]), default="hard",
              show_default=True)
@click.option("--lambda", "lam", type=float, default=4.0, show_default=True)
@click.option("--shift", type=float, default=3.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=None, envvar="ROCKET_FORGE_WORKERS")
@click.option("--memory-budget-gb", type=float, default=8.0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path),
              required=True)
@_fail_on_domain_errors
def cmd_bench(batch_sizes, repeats, warmup, num_kernels, channels, timesteps,
              pooling, lam, shift, seed, workers, memory_budget_gb, out_dir):
    """Sweep batch sizes and record transform wall time and throughput."""
    started = _utc_now()
    sizes = _parse_int_list(batch_sizes, "--batch-sizes")
    config = BenchConfig(
        batch_sizes=tuple(sizes), repeats=repeats, warmup_iters=warmup,
        num_kernels=num_kernels, n_channels=channels, n_timesteps=timesteps,
        pooling=_pooling_from_flags(pooling, lam, shift), seed=seed,
        workers=workers, memory_budget_bytes=int(memory_budget_gb * 2**30))
    try:
        report = bench.run_benchmark(config)
    except SizingError as exc:
        raise click.ClickException(str(exc))
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.csv"
    manifest_path = out_dir / "manifest.json"
    bench.export_report(report, report_path)
    _write_manifest(
        manifest_path, "bench", report.metadata["config"], {"seed": seed},
        [], [report_path, out_dir / "report.json", manifest_path],
        started, _utc_now())
    for row in report.rows:
        click.echo(f"batch={row.batch_size} median_wall={row.median_wall_seconds:.4f}s "
                   f"throughput={row.throughput_tps:.2f} t/s")


if __name__ == "__main__":
    sys.exit(main())
