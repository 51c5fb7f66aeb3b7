"""PNG figures written next to the CSV outputs of the command-line tools."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}
# fixed metadata keeps repeated runs byte-identical
_METADATA = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_METADATA)
    plt.close(fig)
    return path


def training_curves(log: list[dict], path) -> Path:
    epochs = [e["epoch"] for e in log]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        ax1.plot(epochs, [e["train_mse"] for e in log], label="train MSE (normalized)")
        ax1.plot(epochs, [e["val_mse"] for e in log], label="validation MSE")
        ax1.set_yscale("log")
        ax1.set_xlabel("epoch")
        ax1.legend()
        for key in sorted(k for k in log[0] if k.startswith(("l_node_", "l_hyper_"))):
            ax2.plot(epochs, [e[key] for e in log], label=key)
        ax2.plot(epochs, [e["train_lconst"] for e in log], "k--", label="combined")
        ax2.set_xlabel("epoch")
        ax2.set_title("constraint losses")
        ax2.legend(ncol=2)
        return _save(fig, path)


def scaling(sizes, seconds, slope: float, path) -> Path:
    sizes = np.asarray(sizes, dtype=float)
    seconds = np.asarray(seconds, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(sizes, seconds, "o-", label=f"forward pass (slope {slope:.2f})")
        ref = seconds[0] * sizes / sizes[0]
        ax.loglog(sizes, ref, ":", color="gray", label="linear reference")
        ax.set_xlabel("input length N")
        ax.set_ylabel("seconds")
        ax.legend()
        return _save(fig, path)


def forecast(history_t, history, future_t, prediction, names, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, name in enumerate(names):
            line, = ax.plot(history_t, history[:, i], lw=1, label=name)
            ax.plot(future_t, prediction[:, i], "--", color=line.get_color())
        ax.axvline(future_t[0], color="gray", lw=0.8)
        ax.set_xlabel("time")
        ax.legend()
        fig.autofmt_xdate()
        return _save(fig, path)


def incidence(binary: np.ndarray, path, title: str = "") -> Path:
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots()
        ax.imshow(binary.T, aspect="auto", cmap="Greys", interpolation="nearest")
        ax.set_xlabel("node")
        ax.set_ylabel("hyperedge")
        if title:
            ax.set_title(title)
        return _save(fig, path)
