"""Intra-scale hypergraph convolution attention, inter-scale hyperedge attention, head."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as tn
from .tensor import Tensor

ATTENTION_SLOPE = 0.2


def attention_enrich(nodes: Tensor, edges: Tensor, incidence: Tensor, binary: np.ndarray,
                     w_node: Tensor, w_edge: Tensor, bias: Tensor,
                     slope: float = ATTENTION_SLOPE) -> Tensor:
    """Attention weights of each node over its incident hyperedges.

    The scorer is one linear map of the concatenated pair ``[v_i, e_j]``,
    split into its node half ``w_node`` and hyperedge half ``w_edge``
    (each ``[d, 1]``). Rows are normalized over the binary support only.
    Returns ``[..., N, M]``.
    """
    assert np.all(binary.any(axis=-1)), "node without incident hyperedge"
    node_part = tn.matmul(nodes, w_node)  # [..., N, 1]
    edge_part = tn.swap_last(tn.matmul(edges, w_edge))  # [..., 1, M]
    logits = tn.leaky_relu(tn.add(tn.add(node_part, edge_part), bias), slope)
    weights = tn.masked_softmax(logits, binary.astype(bool), axis=-1)
    # multiplying by the straight-through incidence leaves values untouched
    return tn.mul(weights, incidence)


def propagation_matrix(binary: np.ndarray) -> np.ndarray:
    """Dense D_v^-1/2 H D_e^-1 H^T D_v^-1/2 for a binary incidence."""
    dv = binary.sum(axis=1)
    de = binary.sum(axis=0)
    assert np.all(dv > 0) and np.all(de > 0), "empty node or hyperedge"
    left = binary / np.sqrt(dv)[:, None]
    return (left / de) @ left.T


def hypergraph_conv(nodes: Tensor, enriched: Sequence[Tensor], incidence: Tensor,
                    projections: Sequence[Tensor], alpha: float = 1.0) -> Tensor:
    """Multi-head normalized hypergraph convolution with head averaging.

    Degrees come from ``incidence`` (the binary support). The product is
    evaluated right to left so the cost stays linear in the node count.
    """
    if len(enriched) != len(projections):
        raise ValueError("one enriched incidence per head is required")
    dv = tn.sum_(incidence, axis=1)
    de = tn.sum_(incidence, axis=0)
    assert np.all(dv.data > 0.5) and np.all(de.data > 0.5), "zero degree in propagation"
    dv_isqrt = tn.reshape(tn.div(1.0, tn.sqrt(dv)), (-1, 1))
    de_col = tn.reshape(de, (-1, 1))
    heads = []
    for h_enr, proj in zip(enriched, projections):
        y = tn.mul(tn.matmul(nodes, proj), dv_isqrt)
        z = tn.div(tn.matmul(tn.swap_last(h_enr), y), de_col)
        y = tn.mul(tn.matmul(h_enr, z), dv_isqrt)
        heads.append(tn.elu(y, alpha))
    out = heads[0]
    for h in heads[1:]:
        out = tn.add(out, h)
    return tn.mul(out, 1.0 / len(heads)) if len(heads) > 1 else out


def inter_scale_attention(edges: Tensor, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """Single-head scaled dot-product attention across all hyperedges ``[..., M, d]``."""
    q = tn.matmul(edges, w_q)
    k = tn.matmul(edges, w_k)
    v = tn.matmul(edges, w_v)
    scores = tn.mul(tn.matmul(q, tn.swap_last(k)), 1.0 / np.sqrt(q.shape[-1]))
    return tn.matmul(tn.softmax(scores, axis=-1), v)


def scatter_rows(values: Tensor, kept: np.ndarray, total: int) -> Tensor:
    """Place ``values[..., k, :]`` at row ``kept[k]`` of a zero ``[..., total, d]``."""
    if kept.size == total:
        return values
    placement = np.zeros((total, kept.size))
    placement[kept, np.arange(kept.size)] = 1.0
    return tn.matmul(Tensor(placement), values)


def predict(node_outputs: Sequence[Tensor], hyper_outputs: Tensor, weight: Tensor,
            bias: Tensor) -> Tensor:
    """Flatten and concatenate updated node and hyperedge features, then one affine map."""
    lead = hyper_outputs.shape[:-2]
    parts = [tn.reshape(v, lead + (-1,)) for v in node_outputs]
    parts.append(tn.reshape(hyper_outputs, lead + (-1,)))
    flat = tn.concat(parts, axis=-1)
    if flat.shape[-1] != weight.shape[0]:
        raise tn.ShapeError(f"head expects {weight.shape[0]} features, got {flat.shape[-1]}")
    return tn.add(tn.matmul(flat, weight), bias)
