"""Adam, early stopping, the training loop, metrics and reference baselines."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .checkpoint import CheckpointError
from .data import WindowedDataset
from .mfe import ConfigError
from .model import HypergraphForecaster, mse_loss
from .tensor import NumericalError, Tensor

logger = logging.getLogger(__name__)

BATCH_SIZES = (8, 16, 32, 64, 128)
IMPROVEMENT = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 5
    seed: int = 0
    eval_batch: int = 512

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


class Adam:
    """Bias-corrected Adam over a flat name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for k, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {k!r}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = grads.get(k)
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            v = self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class EarlyStopping:
    """Stop once the monitored value fails to improve for ``patience`` epochs in a row.

    Improvement means dropping below the best value by at least ``min_delta``.
    """

    def __init__(self, patience: int = 5, min_delta: float = IMPROVEMENT):
        self.patience = patience
        self.min_delta = min_delta
        self.best: float | None = None
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record ``value`` for ``epoch``; True means this epoch is the new best."""
        if self.best is None or value < self.best - self.min_delta:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class MetricsReport:
    mse: float
    mae: float
    per_horizon_mse: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae}


def metrics(prediction: np.ndarray, target: np.ndarray) -> MetricsReport:
    """MSE and MAE over every window, horizon step and variate."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise ValueError(f"prediction {prediction.shape} vs target {target.shape}")
    err = prediction - target
    per_h = None
    if err.ndim == 3:
        per_h = (err ** 2).mean(axis=(0, 2))
    return MetricsReport(float(np.mean(err ** 2)), float(np.mean(np.abs(err))), per_h)


def _flatten_channels(x: np.ndarray) -> np.ndarray:
    count, length, v = x.shape
    return np.transpose(x, (0, 2, 1)).reshape(count * v, length)


def predict_dataset(model: HypergraphForecaster, dataset: WindowedDataset,
                    chunk: int = 512) -> np.ndarray:
    """Denormalized forecasts ``[count, H, V]`` for every window of ``dataset``."""
    parts = [model.forecast(dataset.inputs[i:i + chunk]) for i in range(0, len(dataset), chunk)]
    return dataset.denormalize(np.concatenate(parts, axis=0))


def evaluate(model: HypergraphForecaster, dataset: WindowedDataset, chunk: int = 512) -> MetricsReport:
    cfg = model.config
    if dataset.input_length != cfg.input_length or dataset.horizon != cfg.horizon:
        raise CheckpointError(
            f"dataset geometry (T={dataset.input_length}, H={dataset.horizon}) does not match "
            f"model (T={cfg.input_length}, H={cfg.horizon})")
    return metrics(predict_dataset(model, dataset, chunk), dataset.targets)


@dataclass
class TrainResult:
    model: HypergraphForecaster
    best_state: dict[str, np.ndarray]
    best_epoch: int
    stopped_epoch: int
    log: list[dict] = field(default_factory=list)

    @property
    def best_val_mse(self) -> float:
        return self.log[self.best_epoch - 1]["val_mse"]


def training_step(model: HypergraphForecaster, optimizer: Adam, x: np.ndarray, y: np.ndarray):
    """One objective evaluation, backward pass and parameter update."""
    out = model.forward(Tensor(x))
    l_mse = mse_loss(out.prediction, y)
    total = tn.add(l_mse, out.constraint.combined)
    model.zero_grad()
    total.backward()
    optimizer.step()
    return l_mse.item(), out.constraint


def train(model: HypergraphForecaster, train_set: WindowedDataset, val_set: WindowedDataset,
          config: TrainConfig, on_epoch=None) -> TrainResult:
    """Minimize forecast MSE plus the constraint loss with early stopping on validation MSE.

    The objective uses normalized targets; validation MSE is measured on
    denormalized forecasts. Only the train and validation sets are read.
    """
    if len(train_set) == 0:
        raise ConfigError("training split is empty")
    if len(val_set) == 0:
        raise ConfigError("validation split is empty")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params, lr=config.learning_rate)
    stopper = EarlyStopping(config.patience)
    y_all = train_set.normalized_targets()
    log: list[dict] = []
    best_state = model.state_dict()
    start = time.perf_counter()
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        sums: dict[str, float] = {}
        n_batches = 0
        for b in range(0, len(order), config.batch_size):
            idx = order[b:b + config.batch_size]
            x = _flatten_channels(train_set.inputs[idx])
            y = _flatten_channels(y_all[idx])
            l_mse, constraint = training_step(model, optimizer, x, y)
            row = {"train_mse": l_mse, **constraint.as_floats()}
            for k, v in row.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
        val = evaluate(model, val_set, config.eval_batch)
        entry = {"epoch": epoch, "train_mse": sums.pop("train_mse") / n_batches,
                 "train_lconst": sums.pop("l_const") / n_batches}
        entry.update({k: v / n_batches for k, v in sums.items()})
        entry.update({"val_mse": val.mse, "val_mae": val.mae,
                      "elapsed_seconds": time.perf_counter() - start})
        log.append(entry)
        if stopper.update(val.mse, epoch):
            best_state = model.state_dict()
        logger.info("epoch %d train_mse %.5f lconst %.5f val_mse %.5f", epoch,
                    entry["train_mse"], entry["train_lconst"], val.mse)
        if on_epoch is not None:
            on_epoch(entry)
        if stopper.should_stop:
            break
    model.load_state_dict(best_state)
    return TrainResult(model, best_state, stopper.best_epoch, epoch, log)


def simulate_early_stopping(val_curve, patience: int = 5) -> tuple[int, int]:
    """Replay a scripted validation curve; returns (stop_epoch, best_epoch)."""
    stopper = EarlyStopping(patience)
    epoch = 0
    for epoch, value in enumerate(val_curve, start=1):
        stopper.update(value, epoch)
        if stopper.should_stop:
            break
    return epoch, stopper.best_epoch


# reference baselines

def persistence_forecast(dataset: WindowedDataset) -> np.ndarray:
    last = dataset.raw_inputs()[:, -1:, :]
    return np.repeat(last, dataset.horizon, axis=1)


class RidgeBaseline:
    """Channel-independent ridge regression from a normalized window to its horizon."""

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha
        self.coef: np.ndarray | None = None

    def fit(self, dataset: WindowedDataset) -> "RidgeBaseline":
        x = _flatten_channels(dataset.inputs)
        y = _flatten_channels(dataset.normalized_targets())
        x = np.hstack([x, np.ones((x.shape[0], 1))])
        reg = self.alpha * np.eye(x.shape[1])
        reg[-1, -1] = 0.0
        self.coef = np.linalg.solve(x.T @ x + reg, x.T @ y)
        return self

    def predict(self, dataset: WindowedDataset) -> np.ndarray:
        x = _flatten_channels(dataset.inputs)
        x = np.hstack([x, np.ones((x.shape[0], 1))])
        count, _, v = dataset.inputs.shape
        pred = np.transpose((x @ self.coef).reshape(count, v, -1), (0, 2, 1))
        return dataset.denormalize(pred)
