import numpy as np
import pytest

import oracles
from hyperforecast import interaction
from hyperforecast import tensor as tn
from hyperforecast.tensor import Tensor


def _enrich(v, e, b, w_node, w_edge, bias):
    return interaction.attention_enrich(Tensor(v), Tensor(e), Tensor(b), b, Tensor(w_node),
                                        Tensor(w_edge), Tensor(bias)).data


def test_single_incident_hyperedge_gets_full_weight():
    b = np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    rng = np.random.default_rng(0)
    out = _enrich(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), b, rng.normal(size=(2, 1)),
                  rng.normal(size=(2, 1)), [0.1])
    np.testing.assert_array_equal(out[0], [0, 1, 0])
    np.testing.assert_array_equal(out[2], [0, 0, 1])


def test_constant_scorer_is_uniform():
    b = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    rng = np.random.default_rng(1)
    out = _enrich(rng.normal(size=(2, 2)), rng.normal(size=(3, 2)), b, np.zeros((2, 1)), np.zeros((2, 1)), [0.7])
    np.testing.assert_allclose(out, [[1 / 3] * 3, [0.5, 0, 0.5]], atol=1e-15)


def test_enrichment_matches_oracle():
    rng = np.random.default_rng(2)
    b = oracles.random_incidence(rng, 4, 3, 3)
    v, e = rng.normal(size=(4, 5)), rng.normal(size=(3, 5))
    wn, we, bias = rng.normal(size=(5, 1)), rng.normal(size=(5, 1)), rng.normal(size=1)
    got = _enrich(v, e, b, wn, we, bias)
    want = oracles.enriched_incidence(v, e, b, wn[:, 0], we[:, 0], bias[0])
    np.testing.assert_allclose(got, want, atol=1e-12)
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(got[b == 0] == 0)


def test_conv_scalar_case():
    v = np.array([[0.7, -0.4]])
    h = Tensor([[1.0]])
    out = interaction.hypergraph_conv(Tensor(v), [h], h, [Tensor(np.eye(2))]).data
    np.testing.assert_allclose(out, tn.elu(Tensor(v)).data)


def test_conv_two_nodes_share_one_hyperedge():
    v = np.array([[1.0, -2.0], [3.0, 0.5]])
    h = Tensor([[1.0], [1.0]])
    op = interaction.propagation_matrix(h.data)
    np.testing.assert_allclose(op, 0.5 * np.ones((2, 2)))
    out = interaction.hypergraph_conv(Tensor(v), [h], h, [Tensor(np.eye(2))]).data
    mean = 0.5 * (v[0] + v[1])
    expected = np.where(mean > 0, mean, np.expm1(mean))
    np.testing.assert_allclose(out, np.vstack([expected, expected]), atol=1e-15)


def test_factorized_conv_equals_dense_operator():
    rng = np.random.default_rng(3)
    b = oracles.random_incidence(rng, 9, 4, 3)
    v = rng.normal(size=(2, 9, 3))
    p = rng.normal(size=(3, 3))
    got = interaction.hypergraph_conv(Tensor(v), [Tensor(b)], Tensor(b), [Tensor(p)]).data
    pre = interaction.propagation_matrix(b) @ v @ p
    np.testing.assert_allclose(got, np.where(pre > 0, pre, np.expm1(pre)), atol=1e-12)


def test_heads_are_averaged():
    rng = np.random.default_rng(4)
    b = oracles.random_incidence(rng, 5, 3, 2)
    v = Tensor(rng.normal(size=(5, 3)))
    p1, p2 = Tensor(rng.normal(size=(3, 3))), Tensor(rng.normal(size=(3, 3)))
    h = Tensor(b)
    both = interaction.hypergraph_conv(v, [h, h], h, [p1, p2]).data
    one = interaction.hypergraph_conv(v, [h], h, [p1]).data
    two = interaction.hypergraph_conv(v, [h], h, [p2]).data
    np.testing.assert_allclose(both, 0.5 * (one + two), atol=1e-14)


def test_propagation_matrix_symmetric_psd():
    rng = np.random.default_rng(5)
    for _ in range(20):
        b = oracles.random_incidence(rng, 12, 5, 3)
        op = interaction.propagation_matrix(b)
        assert np.max(np.abs(op - op.T)) < 1e-12
        for _ in range(5):
            x = rng.normal(size=12)
            assert x @ op @ x >= -1e-12


def test_inter_scale_attention_cases():
    rng = np.random.default_rng(6)
    d = 4
    wq, wk, wv = (rng.normal(size=(d, d)) for _ in range(3))
    lone = rng.normal(size=(1, d))
    out = interaction.inter_scale_attention(Tensor(lone), Tensor(wq), Tensor(wk), Tensor(wv)).data
    np.testing.assert_allclose(out, lone @ wv, atol=1e-14)
    e = rng.normal(size=(5, d))
    out = interaction.inter_scale_attention(Tensor(e), Tensor(np.zeros((d, d))), Tensor(wk), Tensor(wv)).data
    np.testing.assert_allclose(out, np.tile((e @ wv).mean(axis=0), (5, 1)), atol=1e-14)
    out = interaction.inter_scale_attention(Tensor(e), Tensor(wq), Tensor(wk), Tensor(wv)).data
    np.testing.assert_allclose(out, oracles.attention(e, wq, wk, wv), atol=1e-12)


def test_predict_bias_only_and_shapes():
    nodes = [Tensor(np.ones((2, 6, 3))), Tensor(np.ones((2, 3, 3)))]
    edges = Tensor(np.ones((2, 4, 3)))
    feats = (6 + 3 + 4) * 3
    for horizon in (96, 192, 336, 720, 24):
        b = np.linspace(-1, 1, horizon)
        out = interaction.predict(nodes, edges, Tensor(np.zeros((feats, horizon))), Tensor(b)).data
        assert out.shape == (2, horizon)
        np.testing.assert_array_equal(out, np.tile(b, (2, 1)))
    with pytest.raises(tn.ShapeError):
        interaction.predict(nodes, edges, Tensor(np.zeros((feats + 1, 4))), Tensor(np.zeros(4)))


def test_scatter_rows():
    vals = Tensor(np.arange(6.0).reshape(1, 2, 3))
    out = interaction.scatter_rows(vals, np.array([0, 3]), 4).data
    np.testing.assert_array_equal(out[0, 1], 0)
    np.testing.assert_array_equal(out[0, 3], [3, 4, 5])
