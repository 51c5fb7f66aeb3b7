"""Command-line entry point: ``hyperforecast <subcommand> ...``.

Every subcommand writes UTF-8 CSV files with header rows. Runs that produce
several files also write ``manifest.json`` tying them to one configuration,
seed and dataset fingerprint. Exit codes: 0 success, 2 configuration error,
3 data error, 4 checkpoint error, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__, checkpoint, config, data, plotting, training
from . import tensor as tn
from .checkpoint import CheckpointError
from .data import DataError
from .mfe import ConfigError
from .model import HypergraphForecaster, ModelConfig
from .tensor import NumericalError

logger = logging.getLogger("hyperforecast")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_CHECKPOINT, EXIT_NUMERICAL = 0, 2, 3, 4, 5
LOG_COLUMNS = ("epoch", "train_mse", "train_lconst")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    dataset_sha256: str
    version: str = __version__
    outputs: dict[str, str] = field(default_factory=dict)

    def add(self, path: Path, root: Path) -> None:
        self.outputs[str(path.relative_to(root))] = _sha256(path.read_bytes())

    def write(self, root: Path) -> Path:
        path = root / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def _series_fingerprint(series: data.RawSeries) -> str:
    h = hashlib.sha256()
    h.update("\n".join(series.variate_names).encode("utf-8"))
    h.update("\n".join(t.isoformat() for t in series.timestamps).encode("utf-8"))
    h.update(np.ascontiguousarray(series.values, dtype="<f8").tobytes())
    return h.hexdigest()


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def _synthetic(spec_text: str) -> data.RawSeries:
    try:
        spec = data.parse_synthetic_spec(spec_text.split())
    except ValueError as exc:
        raise ConfigError(f"data.synthetic: {exc}") from exc
    return data.synthetic_series(spec["length"], spec["periods"], spec["amplitude"], spec["noise"],
                                 spec["seed"], spec["variates"])


def _load_series(run: config.RunConfig) -> data.RawSeries:
    if run.data_path is not None:
        return data.load_csv(run.data_path, run.datetime_column, run.variate_columns)
    return _synthetic(run.synthetic)


def _model_from_checkpoint(path, model_config: ModelConfig | None = None):
    tensors, manifest = checkpoint.load(path)
    meta = manifest.get("meta", {})
    if model_config is None:
        try:
            model_config = ModelConfig.from_dict(meta["model"])
        except (KeyError, TypeError, ConfigError) as exc:
            raise CheckpointError(f"{path}: checkpoint lacks a usable model config ({exc})") from exc
    model = HypergraphForecaster(model_config)
    try:
        model.load_state_dict(tensors)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: parameters do not fit the model config: {exc}") from exc
    return model, meta


# subcommands

def cmd_train(args) -> int:
    run = config.load_config(args.config)
    if args.set:
        run = config.with_overrides(run, **dict(_parse_override(s) for s in args.set))
    series = _load_series(run)
    cfg = run.model
    sets = data.build_datasets(series, cfg.input_length, cfg.horizon, run.split)
    model = HypergraphForecaster(cfg)
    out = Path(args.output or run.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    result = training.train(model, sets["train"], sets["val"], run.train)
    test = training.evaluate(model, sets["test"])
    val = training.evaluate(model, sets["val"])

    manifest = RunManifest("train", run.flat(), run.train.seed, _series_fingerprint(series))
    ckpt = out / "model.ckpt"
    checkpoint.save(ckpt, model.state_dict(), {
        "model": cfg.to_dict(), "config": run.flat(), "variates": series.variate_names,
        "interval_seconds": series.interval().total_seconds(), "best_epoch": result.best_epoch,
        "dataset_sha256": manifest.dataset_sha256, "version": __version__})
    manifest.add(ckpt, out)

    # wall-clock columns would break byte-identical reruns, so they stay in the console log
    extra = sorted(k for k in result.log[0] if k.startswith(("l_node_", "l_hyper_")))
    columns = [*LOG_COLUMNS, *extra, "val_mse", "val_mae"]
    log_path = _write_rows(out / "train_log.csv", columns, ([e[c] for c in columns] for e in result.log))
    manifest.add(log_path, out)

    pers = training.metrics(training.persistence_forecast(sets["test"]), sets["test"].targets)
    ridge = training.RidgeBaseline().fit(sets["train"])
    ridge_m = training.metrics(ridge.predict(sets["test"]), sets["test"].targets)
    rows = [("model", "val", val.mse, val.mae), ("model", "test", test.mse, test.mae),
            ("persistence", "test", pers.mse, pers.mae), ("ridge", "test", ridge_m.mse, ridge_m.mae)]
    metrics_path = _write_rows(out / "metrics.csv", ("method", "split", "mse", "mae"), rows)
    manifest.add(metrics_path, out)
    if run.plots:
        manifest.add(plotting.training_curves(result.log, out / "training_curves.png"), out)
    manifest.write(out)
    print(f"best epoch {result.best_epoch} of {result.stopped_epoch}; "
          f"test mse {test.mse:.6f} mae {test.mae:.6f}; outputs in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = config.load_config(args.config) if args.config else None
    model, meta = _model_from_checkpoint(args.checkpoint, run.model if run else None)
    if args.data or args.synthetic:
        flat = {"data.path": args.data} if args.data else {"data.synthetic": " ".join(args.synthetic)}
        source = config.from_flat(flat)
        split = tuple(meta.get("config", {}).get("data.split", data.ETT_SPLIT))
    else:
        with warnings.catch_warnings():
            # the stored config was already checked when the model was trained
            warnings.simplefilter("ignore")
            source = run or config.from_flat(meta.get("config", {}))
        split = source.split
    series = _load_series(source)
    if series.n_variates != len(meta.get("variates", series.variate_names)):
        raise CheckpointError(f"checkpoint was trained on {len(meta['variates'])} variates, "
                              f"data has {series.n_variates}")
    cfg = model.config
    sets = data.build_datasets(series, cfg.input_length, cfg.horizon, split)
    rows = []
    for name in args.splits:
        report = training.evaluate(model, sets[name])
        rows.append((name, report.mse, report.mae))
        print(f"{name}: mse {report.mse:.6f} mae {report.mae:.6f}")
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_rows(out, ("split", "mse", "mae"), rows)
    return EXIT_OK


def cmd_forecast(args) -> int:
    model, meta = _model_from_checkpoint(args.checkpoint)
    cfg = model.config
    if args.horizon is not None and args.horizon != cfg.horizon:
        raise ConfigError(f"horizon: invalid value {args.horizon}; allowed: {cfg.horizon} (fixed by checkpoint)")
    series = data.load_csv(args.input)
    names = meta.get("variates")
    if names is not None and len(names) != series.n_variates:
        raise CheckpointError(f"checkpoint expects {len(names)} variates {names}, input has "
                              f"{series.n_variates} {series.variate_names}")
    if len(series) < cfg.input_length:
        raise data.InsufficientDataError(f"input has {len(series)} rows, the model needs {cfg.input_length}")
    window = series.values[-cfg.input_length:][None]
    mean, std = data.instance_stats(window)
    pred = data.denormalize(model.forecast(data.normalize(window, mean, std)), mean, std)[0]
    if not np.all(np.isfinite(pred)):
        raise NumericalError("forecast contains non-finite values")
    step = series.interval()
    last = series.timestamps[-1]
    stamps = [last + step * (i + 1) for i in range(cfg.horizon)]
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_csv(out, stamps, pred, series.variate_names)
    if args.plot:
        history = series.values[-cfg.input_length:]
        plotting.forecast(series.timestamps[-cfg.input_length:], history, stamps, pred,
                          series.variate_names, out.with_suffix(".png"))
    print(f"wrote {cfg.horizon} rows to {out}")
    return EXIT_OK


def cmd_dump_structure(args) -> int:
    model, meta = _model_from_checkpoint(args.checkpoint)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("dump-structure", meta.get("config", {}), model.config.seed,
                           meta.get("dataset_sha256", ""))
    with tn.no_grad():
        structures = model.structures()
    for s, inc in enumerate(structures, start=1):
        binary = inc.full_binary()
        rows = zip(*np.nonzero(binary))
        path = _write_rows(out / f"incidence_scale{s}.csv", ("node_index", "hyperedge_index"),
                           ((int(i), int(j)) for i, j in rows))
        manifest.add(path, out)
        if args.plot:
            manifest.add(plotting.incidence(binary, out / f"incidence_scale{s}.png", f"scale {s}"), out)
    manifest.write(out)
    print(f"wrote {len(structures)} incidence files to {out}")
    return EXIT_OK


def read_structure(path) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(node_index, hyperedge_index)`` from a dumped incidence CSV."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        pairs = np.array([[int(a), int(b)] for a, b in reader], dtype=int).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def bench_scaling(sizes, repeats: int = 5, batch: int = 8, seed: int = 0, base: ModelConfig | None = None):
    """Best-of-``repeats`` forward time per input length with M and d fixed.

    Returns ``(seconds, slope)`` where slope is the log-log least-squares fit.
    """
    base = base or ModelConfig()
    seconds = []
    for n in sizes:
        cfg = ModelConfig(**{**base.to_dict(), "input_length": int(n), "seed": seed})
        model = HypergraphForecaster(cfg)
        x = tn.Tensor(np.random.default_rng(seed).standard_normal((batch, n)))
        with tn.no_grad():
            model.forward(x)
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                model.forward(x)
                best = min(best, time.perf_counter() - t0)
        seconds.append(best)
    slope = float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])
    return seconds, slope


def cmd_bench_scaling(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"sizes: invalid value {args.sizes!r}; allowed: two or more positive integers")
    seconds, slope = bench_scaling(sizes, args.repeats, args.batch)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "scaling.csv", ("input_length", "seconds"), zip(sizes, seconds))
    if args.plot:
        plotting.scaling(sizes, seconds, slope, out / "scaling.png")
    print(f"log-log slope {slope:.3f} over N = {sizes}")
    return EXIT_OK


def cmd_synth_data(args) -> int:
    series = _synthetic(" ".join(args.synthetic))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_csv(out, series.timestamps, series.values, series.variate_names)
    print(f"wrote {len(series)} rows to {out}")
    return EXIT_OK


def _parse_override(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperforecast", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("config")
    p.add_argument("--output", help="output directory (overrides output.dir)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="MSE/MAE of a checkpoint on dataset splits")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="config to rebuild the model from (default: checkpoint's own)")
    p.add_argument("--data", help="CSV to evaluate on")
    p.add_argument("--synthetic", nargs="+", metavar="KEY=VALUE")
    p.add_argument("--splits", nargs="+", default=["test"], choices=data.SPLITS)
    p.add_argument("--output", help="metrics CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("forecast", help="forecast the horizon after the last input row")
    p.add_argument("checkpoint")
    p.add_argument("input", help="CSV whose last T rows form the input window")
    p.add_argument("--horizon", type=int)
    p.add_argument("--output", required=True)
    p.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("dump-structure", help="write the learned incidence per scale")
    p.add_argument("checkpoint")
    p.add_argument("--output", required=True, help="directory")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_dump_structure)

    p = sub.add_parser("bench-scaling", help="forward-pass time against input length")
    p.add_argument("--sizes", default="96,192,384,768")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--output", required=True, help="directory")
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.set_defaults(func=cmd_bench_scaling)

    p = sub.add_parser("synth-data", help="write a seeded sum-of-sinusoids CSV")
    p.add_argument("--synthetic", nargs="*", default=[], metavar="KEY=VALUE",
                   help="periods=24,96 amplitude=1.0 noise=0.1 length=N seed=K variates=V")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except DataError as exc:
        code, msg = EXIT_DATA, f"data error: {exc}"
    except CheckpointError as exc:
        code, msg = EXIT_CHECKPOINT, f"checkpoint error: {exc}"
    except NumericalError as exc:
        code, msg = EXIT_NUMERICAL, f"numerical failure: {exc}"
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
