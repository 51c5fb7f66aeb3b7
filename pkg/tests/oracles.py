"""Brute-force loop implementations used as independent references."""

import math

import numpy as np


def window_means(x, window):
    n = len(x) // window
    return np.array([[sum(x[i * window + j][c] for j in range(window)) / window
                      for c in range(len(x[0]))] for i in range(n)])


def hyperedge_means(nodes, binary):
    n, m = binary.shape
    out = np.zeros((m, nodes.shape[1]))
    for j in range(m):
        members = [i for i in range(n) if binary[i, j] == 1]
        for c in range(nodes.shape[1]):
            out[j, c] = sum(nodes[i, c] for i in members) / len(members)
    return out


def node_loss(nodes, edges, binary):
    total, pairs = 0.0, 0
    for i in range(binary.shape[0]):
        for j in range(binary.shape[1]):
            if binary[i, j] == 1:
                total += sum(abs(nodes[i, c] - edges[j, c]) for c in range(nodes.shape[1])) / nodes.shape[1]
                pairs += 1
    return total / pairs


def hyperedge_loss(edges, gamma):
    m = edges.shape[0]
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            a, b = edges[i], edges[j]
            na = math.sqrt(sum(v * v for v in a))
            nb = math.sqrt(sum(v * v for v in b))
            alpha = 0.0 if na * nb < 1e-12 else sum(x * y for x, y in zip(a, b)) / (na * nb)
            alpha = min(max(alpha, 0.0), 1.0)
            dist = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
            total += alpha * dist + (1 - alpha) * max(gamma - dist, 0.0)
    return total / (m * m)


def enriched_incidence(nodes, edges, binary, w_node, w_edge, bias, slope=0.2):
    n, m = binary.shape
    out = np.zeros((n, m))
    for i in range(n):
        scores = {}
        for j in range(m):
            if binary[i, j] == 1:
                z = sum(nodes[i, c] * w_node[c] for c in range(nodes.shape[1]))
                z += sum(edges[j, c] * w_edge[c] for c in range(edges.shape[1])) + bias
                scores[j] = z if z > 0 else slope * z
        top = max(scores.values())
        denom = sum(math.exp(s - top) for s in scores.values())
        for j, s in scores.items():
            out[i, j] = math.exp(s - top) / denom
    return out


def attention(edges, wq, wk, wv):
    m, d = edges.shape
    q = [[sum(edges[i, a] * wq[a, b] for a in range(d)) for b in range(d)] for i in range(m)]
    k = [[sum(edges[i, a] * wk[a, b] for a in range(d)) for b in range(d)] for i in range(m)]
    v = [[sum(edges[i, a] * wv[a, b] for a in range(d)) for b in range(d)] for i in range(m)]
    out = np.zeros((m, d))
    for i in range(m):
        s = [sum(q[i][c] * k[j][c] for c in range(d)) / math.sqrt(d) for j in range(m)]
        top = max(s)
        w = [math.exp(x - top) for x in s]
        z = sum(w)
        for c in range(d):
            out[i, c] = sum(w[j] * v[j][c] for j in range(m)) / z
    return out


def mse_mae(pred, target):
    se = ae = 0.0
    count = 0
    for p, t in zip(np.ravel(pred), np.ravel(target)):
        se += (p - t) ** 2
        ae += abs(p - t)
        count += 1
    return se / count, ae / count


def random_incidence(rng, n, m, eta):
    """Random binary incidence with 1..eta ones per row and no empty column."""
    while True:
        b = np.zeros((n, m))
        for i in range(n):
            k = rng.integers(1, eta + 1)
            b[i, rng.choice(m, size=k, replace=False)] = 1
        if np.all(b.sum(axis=0) > 0):
            return b


def window_metrics(normalized_pred, raw_inputs, targets):
    """Denormalize per window with loop-computed input statistics, then MSE/MAE."""
    count, t_len, n_var = raw_inputs.shape
    pred = np.zeros(normalized_pred.shape)
    for w in range(count):
        for c in range(n_var):
            mean = sum(raw_inputs[w, t, c] for t in range(t_len)) / t_len
            var = sum((raw_inputs[w, t, c] - mean) ** 2 for t in range(t_len)) / t_len
            std = math.sqrt(var) if math.sqrt(var) >= 1e-12 else 1.0
            for h in range(normalized_pred.shape[1]):
                pred[w, h, c] = normalized_pred[w, h, c] * std + mean
    return mse_mae(pred, targets)
