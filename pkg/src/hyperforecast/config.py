"""Run configuration as a flat document of namespaced keys (``model.hidden_width: 16``)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .mfe import ConfigError
from .model import ABLATION_FLAGS, ModelConfig
from .training import BATCH_SIZES, TrainConfig

# advisory search-space domains; values outside them are accepted with a warning
SEARCH_SPACE = {
    "train.batch_size": BATCH_SIZES,
    "model.hyperedges[0]": (10, 20, 30, 50),
    "model.hyperedges[1]": (5, 10, 15, 20),
    "model.hyperedges[2]": (1, 2, 4, 5, 8, 12),
    "scales.windows[0]": (2, 4, 8),
    "scales.windows[1]": (2, 4),
    "model.eta": (1, 3, 5, 10, 15, 20),
    "model.beta": (0.2, 0.3, 0.4, 0.5),
    "model.gamma": (0.2, 0.3, 0.4, 0.5),
}

KEYS: dict[str, tuple[type, str]] = {
    "data.path": (str, "path to a CSV file"),
    "data.synthetic": (str, "'periods=24,96 amplitude=1.0 noise=0.1 length=N seed=K'"),
    "data.datetime_column": (str, "column name"),
    "data.variate_columns": (list, "list of column names"),
    "data.split": (list, "three positive weights, e.g. [0.6, 0.2, 0.2] or 7:2:1"),
    "data.input_length": (int, "integer >= 1"),
    "data.horizon": (int, "integer >= 1"),
    "scales.count": (int, "integer >= 1, equal to len(scales.windows) + 1"),
    "scales.windows": (list, "list of integers >= 1"),
    "model.hidden_width": (int, "integer >= 1"),
    "model.hyperedges": (list, "one integer >= 1 per scale"),
    "model.eta": (int, "integer >= 1"),
    "model.beta": (float, "0 < beta < 1"),
    "model.gamma": (float, "gamma > 0"),
    "model.lambda": (float, "0 <= lambda <= 1"),
    "model.heads": (int, "integer >= 1"),
    "model.aggregation": (str, "'conv' or 'avg'"),
    "model.straight_through": (bool, "true or false"),
    "model.seed": (int, "integer"),
    "train.learning_rate": (float, "learning_rate > 0"),
    "train.batch_size": (int, "integer >= 1"),
    "train.max_epochs": (int, "integer >= 1"),
    "train.patience": (int, "integer >= 1"),
    "train.seed": (int, "integer"),
    "ablation": (list, f"subset of {list(ABLATION_FLAGS)}"),
    "output.dir": (str, "directory path"),
    "output.plots": (bool, "true or false"),
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data_path: str | None = None
    synthetic: str | None = None
    datetime_column: str | None = None
    variate_columns: tuple[str, ...] | None = None
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    output_dir: str = "runs/latest"
    plots: bool = True
    raw: dict = field(default_factory=dict)

    def flat(self) -> dict[str, Any]:
        """The fully resolved configuration as flat keys (manifest snapshot)."""
        m, t = self.model, self.train
        out = {
            "data.input_length": m.input_length,
            "data.horizon": m.horizon,
            "data.split": list(self.split),
            "scales.count": m.n_scales,
            "scales.windows": list(m.windows),
            "model.hidden_width": m.hidden_width,
            "model.hyperedges": list(m.hyperedges),
            "model.eta": m.eta,
            "model.beta": m.beta,
            "model.gamma": m.gamma,
            "model.lambda": m.lam,
            "model.heads": m.heads,
            "model.aggregation": m.aggregation,
            "model.straight_through": m.straight_through,
            "model.seed": m.seed,
            "train.learning_rate": t.learning_rate,
            "train.batch_size": t.batch_size,
            "train.max_epochs": t.max_epochs,
            "train.patience": t.patience,
            "train.seed": t.seed,
            "ablation": [f for f in ABLATION_FLAGS if getattr(m, f)],
            "output.dir": self.output_dir,
            "output.plots": self.plots,
        }
        if self.data_path is not None:
            out["data.path"] = self.data_path
        if self.synthetic is not None:
            out["data.synthetic"] = self.synthetic
        if self.datetime_column is not None:
            out["data.datetime_column"] = self.datetime_column
        if self.variate_columns is not None:
            out["data.variate_columns"] = list(self.variate_columns)
        return out


def _flatten(doc: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in ("ablation",):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value: Any) -> Any:
    kind, domain = KEYS[key]
    ok = True
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif kind is list:
        if isinstance(value, str) and key == "ablation":
            value = [v.strip() for v in value.split(",") if v.strip()]
        elif isinstance(value, str) and key == "data.split":
            value = [float(v) for v in value.replace(":", ",").split(",")]
        ok = isinstance(value, (list, tuple))
    elif kind is str:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{key}: invalid value {value!r}; allowed: {domain}")
    return value


def _warn_search_space(flat: dict[str, Any]) -> None:
    for key, choices in SEARCH_SPACE.items():
        base, _, idx = key.partition("[")
        if base not in flat:
            continue
        value = flat[base]
        if idx:
            i = int(idx.rstrip("]"))
            if i >= len(value):
                continue
            value = value[i]
        if value not in choices:
            warnings.warn(f"{key} = {value!r} is outside the tuned search space {list(choices)}",
                          stacklevel=3)


def from_flat(flat: dict[str, Any]) -> RunConfig:
    unknown = sorted(k for k in flat if k not in KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}; allowed: {sorted(KEYS)}")
    flat = {k: _coerce(k, v) for k, v in flat.items()}
    if "data.path" not in flat and "data.synthetic" not in flat:
        raise ConfigError("data.path: missing; set data.path (CSV) or data.synthetic")
    if "data.split" in flat:
        split = tuple(float(x) for x in flat["data.split"])
        if len(split) != 3 or any(x <= 0 for x in split):
            raise ConfigError(f"data.split: invalid value {list(split)}; allowed: {KEYS['data.split'][1]}")
        total = sum(split)
        split = tuple(x / total for x in split)
    else:
        split = (0.6, 0.2, 0.2)
    ablations = list(flat.get("ablation", []))
    bad = [a for a in ablations if a not in ABLATION_FLAGS]
    if bad:
        raise ConfigError(f"ablation: invalid value {bad}; allowed: {KEYS['ablation'][1]}")
    windows = tuple(flat.get("scales.windows", (4, 2)))
    if "scales.count" in flat and flat["scales.count"] != len(windows) + 1:
        raise ConfigError(f"scales.count: invalid value {flat['scales.count']}; allowed: {KEYS['scales.count'][1]}")
    model_kwargs = {"windows": windows}
    mapping = {"data.input_length": "input_length", "data.horizon": "horizon",
               "model.hidden_width": "hidden_width", "model.eta": "eta", "model.beta": "beta",
               "model.gamma": "gamma", "model.lambda": "lam", "model.heads": "heads",
               "model.aggregation": "aggregation", "model.straight_through": "straight_through",
               "model.seed": "seed"}
    for key, name in mapping.items():
        if key in flat:
            model_kwargs[name] = flat[key]
    if "model.hyperedges" in flat:
        model_kwargs["hyperedges"] = tuple(flat["model.hyperedges"])
    for a in ablations:
        model_kwargs[a] = True
    try:
        model = ModelConfig(**model_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"model: {exc}") from exc
    _warn_search_space(flat)
    train_map = {"train.learning_rate": "learning_rate", "train.batch_size": "batch_size",
                 "train.max_epochs": "max_epochs", "train.patience": "patience", "train.seed": "seed"}
    train = TrainConfig(**{name: flat[k] for k, name in train_map.items() if k in flat})
    return RunConfig(model=model, train=train, data_path=flat.get("data.path"),
                     synthetic=flat.get("data.synthetic"),
                     datetime_column=flat.get("data.datetime_column"),
                     variate_columns=tuple(flat["data.variate_columns"]) if "data.variate_columns" in flat else None,
                     split=split, output_dir=flat.get("output.dir", "runs/latest"),
                     plots=flat.get("output.plots", True), raw=dict(flat))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of keys to values")
    return from_flat(_flatten(doc))


def dump_config(run: RunConfig) -> str:
    return yaml.safe_dump(run.flat(), sort_keys=True, default_flow_style=None)


def with_overrides(run: RunConfig, **flat_overrides) -> RunConfig:
    flat = run.flat()
    flat.update(flat_overrides)
    return replace(from_flat(flat))
