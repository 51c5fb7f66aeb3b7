"""Adaptive hypergraph learning: scored, sparsified and binarized incidence.

The binary incidence that the rest of the model consumes is carried by a
straight-through tensor: its value is the {0,1} matrix, while its adjoint
flows to the TopK-surviving soft scores as if binarization were identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import Tensor

PREDEFINED_GROUP = 4


@dataclass
class IncidenceMatrix:
    scale: int
    soft_scores: np.ndarray
    binary: np.ndarray
    node_degrees: np.ndarray
    edge_degrees: np.ndarray
    kept: np.ndarray
    n_edges_total: int
    st: Tensor | None = None

    @property
    def n_nodes(self) -> int:
        return self.binary.shape[0]

    @property
    def n_edges(self) -> int:
        return self.binary.shape[1]

    def tensor(self) -> Tensor:
        """Incidence as a tensor; falls back to a constant when no ST path exists."""
        return self.st if self.st is not None else Tensor(self.binary)

    def full_binary(self) -> np.ndarray:
        """Binary incidence with pruned hyperedges restored as zero columns."""
        full = np.zeros((self.n_nodes, self.n_edges_total))
        full[:, self.kept] = self.binary
        return full


def score_incidence(node_emb: Tensor, hyper_emb: Tensor) -> Tensor:
    if node_emb.shape[-1] != hyper_emb.shape[-1]:
        raise tn.ShapeError("node and hyperedge embeddings differ in width")
    return tn.softmax(tn.relu(tn.matmul(node_emb, tn.swap_last(hyper_emb))), axis=-1)


def topk_mask(scores: np.ndarray, eta: int) -> np.ndarray:
    """Row-wise mask of the ``eta`` largest entries; ties go to the lower index."""
    n_cols = scores.shape[-1]
    if not 1 <= eta <= n_cols:
        raise ValueError(f"eta must lie in [1, {n_cols}], got {eta}")
    order = np.argsort(-scores, axis=-1, kind="stable")[..., :eta]
    mask = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(mask, order, True, axis=-1)
    return mask


def sparsify_topk(scores, eta: int):
    """Zero everything outside each row's top ``eta``. Returns (masked, mask)."""
    scores = tn.as_tensor(scores)
    mask = topk_mask(scores.data, eta)
    return tn.mul(scores, mask.astype(np.float64)), mask


def binarize_values(masked: np.ndarray, beta: float) -> np.ndarray:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    binary = (masked > beta).astype(np.float64)
    orphans = ~binary.any(axis=-1)
    if np.any(orphans):
        rows = np.flatnonzero(orphans)
        binary[rows, np.argmax(masked[rows], axis=-1)] = 1.0
    return binary


def binarize(masked, beta: float, straight_through: bool = True):
    """Threshold at ``beta`` with a non-orphan floor. Returns (binary, st_tensor)."""
    masked = tn.as_tensor(masked)
    binary = binarize_values(masked.data, beta)
    if straight_through and masked.requires_grad:
        st = tn.add(masked, Tensor(binary - masked.data))
    else:
        st = Tensor(binary)
    return binary, st


def prune_empty_hyperedges(binary: np.ndarray, st: Tensor | None = None, scale: int = 0,
                           soft_scores: np.ndarray | None = None) -> IncidenceMatrix:
    degrees = binary.sum(axis=0)
    kept = np.flatnonzero(degrees > 0)
    assert kept.size > 0, "every hyperedge is empty"
    pruned = binary[:, kept]
    if st is not None and kept.size != binary.shape[1]:
        st = tn.take(st, kept, axis=1)
    return IncidenceMatrix(scale=scale,
                           soft_scores=binary if soft_scores is None else soft_scores,
                           binary=pruned, node_degrees=pruned.sum(axis=1),
                           edge_degrees=pruned.sum(axis=0), kept=kept,
                           n_edges_total=binary.shape[1], st=st)


@dataclass
class FrozenDecisions:
    """Discrete choices of one forward pass, reused to probe the ST surrogate."""

    mask: np.ndarray
    offset: np.ndarray


def learn_incidence(node_emb: Tensor, hyper_emb: Tensor, eta: int, beta: float, scale: int = 0,
                    straight_through: bool = True,
                    frozen: FrozenDecisions | None = None) -> tuple[IncidenceMatrix, FrozenDecisions]:
    """Score, sparsify, binarize and prune one scale's incidence.

    With ``frozen`` set, the TopK mask and the binarization offset are taken
    from a previous pass, so the result is a smooth function of the
    embeddings whose exact gradient equals the straight-through adjoint.
    """
    soft = score_incidence(node_emb, hyper_emb)
    eta = min(eta, soft.shape[-1])
    if frozen is None:
        masked, mask = sparsify_topk(soft, eta)
        binary = binarize_values(masked.data, beta)
        decisions = FrozenDecisions(mask, binary - masked.data)
    else:
        masked = tn.mul(soft, frozen.mask.astype(np.float64))
        binary = np.round(masked.data + frozen.offset)
        decisions = frozen
    if straight_through and masked.requires_grad:
        st = tn.add(masked, Tensor(decisions.offset))
    else:
        st = Tensor(binary)
    return prune_empty_hyperedges(binary, st, scale, soft.data), decisions


def predefined_incidence(n_nodes: int, group: int = PREDEFINED_GROUP, scale: int = 0) -> IncidenceMatrix:
    """Consecutive blocks of ``group`` nodes form one hyperedge each."""
    n_edges = -(-n_nodes // group)
    binary = np.zeros((n_nodes, n_edges))
    binary[np.arange(n_nodes), np.arange(n_nodes) // group] = 1.0
    return prune_empty_hyperedges(binary, None, scale)


def pairwise_incidence(src_emb: Tensor, dst_emb: Tensor, eta: int, beta: float, scale: int = 0,
                       straight_through: bool = True,
                       frozen: FrozenDecisions | None = None) -> tuple[IncidenceMatrix, FrozenDecisions]:
    """Graph-mode structure: every hyperedge joins exactly two nodes.

    A learned node-to-node adjacency (self-loops excluded) is sparsified per
    row like the hypergraph scores; each slot (node i, its k-th neighbour
    choice) becomes one hyperedge ``{i, j}``.
    """
    n = src_emb.shape[0]
    if n < 2:
        raise ValueError("graph mode needs at least two nodes per scale")
    eta = min(eta, n - 1)
    logits = tn.relu(tn.matmul(src_emb, tn.swap_last(dst_emb)))
    off_diag = ~np.eye(n, dtype=bool)
    adj = tn.masked_softmax(logits, off_diag, axis=-1)
    if frozen is None:
        scores = np.where(off_diag, adj.data, -1.0)
        mask = topk_mask(scores, eta)
        masked = tn.mul(adj, mask.astype(np.float64))
        binary_adj = binarize_values(masked.data, beta) * mask
        decisions = FrozenDecisions(mask, binary_adj - masked.data)
    else:
        mask = frozen.mask
        masked = tn.mul(adj, mask.astype(np.float64))
        binary_adj = np.round(masked.data + frozen.offset)
        decisions = frozen
    # slot layout: edge (i, k) -> column i * eta + k
    rows, cols = np.nonzero(mask)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    n_edges = rows.size
    ends_src = np.zeros((n, n_edges))
    ends_dst = np.zeros((n, n_edges))
    ends_src[rows, np.arange(n_edges)] = 1.0
    ends_dst[cols, np.arange(n_edges)] = 1.0
    pattern = ends_src + ends_dst
    weights_val = binary_adj[rows, cols]
    binary = pattern * weights_val
    if straight_through and adj.requires_grad:
        flat = tn.reshape(tn.add(masked, Tensor(decisions.offset)), (n * n,))
        w = tn.take(flat, rows * n + cols, axis=0)
        st = tn.mul(Tensor(pattern), w)
    else:
        st = None
    return prune_empty_hyperedges(binary, st, scale, adj.data), decisions
