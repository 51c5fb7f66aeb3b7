"""Node and hyperedge constraints on the learned hypergraph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .tensor import Tensor

COSINE_GUARD = 1e-12


def init_hyperedge_features(nodes: Tensor, incidence: Tensor) -> Tensor:
    """Mean of member-node features per hyperedge.

    ``nodes`` is ``[..., N, d]``, ``incidence`` ``[N, M]``; returns ``[..., M, d]``.
    """
    degrees = tn.sum_(incidence, axis=0)
    assert np.all(degrees.data > 0.5), "zero-degree hyperedge reached feature init"
    summed = tn.matmul(tn.swap_last(incidence), nodes)
    return tn.div(summed, tn.reshape(degrees, (-1, 1)))


def node_loss(nodes: Tensor, edges: Tensor, incidence: Tensor, binary: np.ndarray) -> Tensor:
    """Mean feature-wise |v - e| over incident (node, hyperedge) pairs.

    Averaged over the pairs of ``binary`` and over any leading batch axes.
    Only incident pairs are materialized, so cost is linear in the pair count.
    """
    rows, cols = np.nonzero(binary)
    n_pairs = rows.size
    diff = tn.abs_(tn.sub(tn.take(nodes, rows, axis=-2), tn.take(edges, cols, axis=-2)))
    per_pair = tn.mean(diff, axis=-1)  # [..., P]
    flat = tn.reshape(incidence, (-1,))
    weights = tn.take(flat, rows * binary.shape[1] + cols, axis=0)
    total = tn.sum_(tn.mul(per_pair, weights), axis=-1)
    return tn.mean(total) * (1.0 / n_pairs)


def pairwise_terms(edges: Tensor, gamma: float) -> tuple[Tensor, Tensor, Tensor]:
    """Clamped cosine weights, Euclidean distances and the per-pair loss terms."""
    m = edges.shape[-2]
    d = edges.shape[-1]
    gram = tn.matmul(edges, tn.swap_last(edges))
    norms = tn.sqrt(tn.sum_(tn.square(edges), axis=-1))
    denom = tn.mul(tn.reshape(norms, norms.shape + (1,)), tn.reshape(norms, norms.shape[:-1] + (1, m)))
    tiny = (denom.data < COSINE_GUARD).astype(np.float64)
    # zero-norm features give gram == 0, so the guarded ratio is exactly 0
    alpha = tn.clip(tn.div(gram, tn.add(denom, Tensor(tiny))), 0.0, 1.0)
    diff = tn.sub(tn.reshape(edges, edges.shape[:-1] + (1, d)),
                  tn.reshape(edges, edges.shape[:-2] + (1, m, d)))
    dist = tn.sqrt(tn.sum_(tn.square(diff), axis=-1))
    # identical nonzero features have cosine exactly 1; rounding in gram/denom would leave
    # a spurious (1 - alpha) * gamma residue
    same = ((dist.data == 0) & (tiny == 0)).astype(np.float64)
    if same.any():
        alpha = tn.add(tn.mul(alpha, 1.0 - same), Tensor(same))
    attract = tn.mul(alpha, dist)
    repel = tn.mul(tn.sub(1.0, alpha), tn.relu(tn.sub(gamma, dist)))
    off_diag = 1.0 - np.eye(m)
    return alpha, dist, tn.mul(tn.add(attract, repel), off_diag)


def hyperedge_loss(edges: Tensor, gamma: float) -> Tensor:
    """Contrastive spread of hyperedge features, averaged over all M^2 ordered pairs."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    m = edges.shape[-2]
    _, _, terms = pairwise_terms(edges, gamma)
    return tn.mean(tn.sum_(terms, axis=(-2, -1))) * (1.0 / (m * m))


@dataclass
class ConstraintLossTerms:
    node_loss_per_scale: list[Tensor]
    hyper_loss_per_scale: list[Tensor]
    combined: Tensor
    lam: float
    gamma: float
    extras: dict = field(default_factory=dict)

    def as_floats(self) -> dict[str, float]:
        out = {"l_const": self.combined.item()}
        for s, v in enumerate(self.node_loss_per_scale, start=1):
            out[f"l_node_{s}"] = v.item()
        for s, v in enumerate(self.hyper_loss_per_scale, start=1):
            out[f"l_hyper_{s}"] = v.item()
        return out


def combine(node_losses, hyper_losses, lam: float, gamma: float = 0.3) -> ConstraintLossTerms:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    total = Tensor(0.0)
    if lam > 0:
        for t in node_losses:
            total = tn.add(total, tn.mul(t, lam))
    if lam < 1:
        for t in hyper_losses:
            total = tn.add(total, tn.mul(t, 1.0 - lam))
    return ConstraintLossTerms(list(node_losses), list(hyper_losses), total, lam, gamma)
