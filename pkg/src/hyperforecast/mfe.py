"""Multi-scale feature extraction: value embedding and the aggregation pyramid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .tensor import Tensor


class ConfigError(ValueError):
    """An invalid model or run configuration."""


@dataclass(frozen=True)
class ScaleConfig:
    input_length: int
    windows: tuple[int, ...] = (4, 2)
    hidden_width: int = 16

    def __post_init__(self):
        if self.hidden_width < 1:
            raise ConfigError("hidden_width must be >= 1")
        if any(w < 1 for w in self.windows):
            raise ConfigError(f"aggregation windows must be >= 1, got {self.windows}")
        if self.node_counts[-1] < 1:
            raise ConfigError(
                f"windows {self.windows} leave no nodes at the coarsest scale for T={self.input_length}")

    @property
    def n_scales(self) -> int:
        return len(self.windows) + 1

    @property
    def node_counts(self) -> tuple[int, ...]:
        return node_counts(self.input_length, self.windows)


def node_counts(input_length: int, windows) -> tuple[int, ...]:
    counts = [input_length]
    for w in windows:
        counts.append(counts[-1] // w)
    return tuple(counts)


def embed_input(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Map scalar steps ``[..., T]`` to ``[..., T, d]`` with one shared affine map."""
    lifted = tn.reshape(x, x.shape + (1,))
    return tn.matmul(lifted, weight) + bias


@dataclass
class ScaleStack:
    """Per-scale features; ``node_features``/``hyperedge_features`` fill in later."""

    sequences: list[Tensor]
    node_features: list[Tensor] = field(default_factory=list)
    hyperedge_features: list[Tensor] = field(default_factory=list)

    @property
    def node_counts(self) -> tuple[int, ...]:
        return tuple(x.shape[-2] for x in self.sequences)


def average_kernel(window: int, width: int) -> Tensor:
    """Kernel that makes conv1d a per-channel window mean."""
    k = np.zeros((window, width, width))
    for j in range(window):
        k[j] = np.eye(width) / window
    return Tensor(k)


def build_pyramid(x1: Tensor, config: ScaleConfig, kernels) -> ScaleStack:
    """Aggregate ``x1`` ([..., T, d]) into S scales with non-overlapping conv1d."""
    if len(kernels) != len(config.windows):
        raise ConfigError(f"expected {len(config.windows)} kernels, got {len(kernels)}")
    seqs = [x1]
    for window, kernel in zip(config.windows, kernels):
        if kernel.shape[0] != window:
            raise ConfigError(f"kernel of width {kernel.shape[0]} for window {window}")
        if seqs[-1].shape[-2] // window < 1:
            raise ConfigError(f"window {window} leaves zero nodes")
        seqs.append(tn.conv1d(seqs[-1], kernel, stride=window))
    return ScaleStack(seqs)
