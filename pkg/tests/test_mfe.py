import numpy as np
import pytest

import oracles
from hyperforecast import mfe
from hyperforecast import tensor as tn
from hyperforecast.tensor import Tensor


def test_identity_embedding():
    x = Tensor(np.arange(5.0))
    out = mfe.embed_input(x, Tensor([[1.0]]), Tensor([0.0]))
    np.testing.assert_array_equal(out.data[:, 0], np.arange(5.0))


def test_embedding_shape_and_zero_input():
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(size=(1, 16)))
    out = mfe.embed_input(Tensor(np.zeros(96)), w, Tensor(np.zeros(16)))
    assert out.shape == (96, 16)
    assert np.all(out.data == 0)


@pytest.mark.parametrize("windows,counts", [((4, 2), (96, 24, 12)), ((8, 4), (96, 12, 3)), ((), (96,))])
def test_node_counts(windows, counts):
    cfg = mfe.ScaleConfig(96, windows, 4)
    assert cfg.node_counts == counts
    x1 = Tensor(np.random.default_rng(1).normal(size=(96, 4)))
    kernels = [Tensor(np.random.default_rng(2).normal(size=(w, 4, 4))) for w in windows]
    stack = mfe.build_pyramid(x1, cfg, kernels)
    assert stack.node_counts == counts


def test_zero_nodes_is_config_error():
    with pytest.raises(mfe.ConfigError):
        mfe.ScaleConfig(8, (4, 4), 2)


def test_average_pyramid_matches_window_mean_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 3))
    cfg = mfe.ScaleConfig(50, (4, 3), 3)
    stack = mfe.build_pyramid(Tensor(x), cfg, [mfe.average_kernel(w, 3) for w in cfg.windows])
    level2 = oracles.window_means(x.tolist(), 4)
    level3 = oracles.window_means(level2.tolist(), 3)
    np.testing.assert_allclose(stack.sequences[1].data, level2, atol=1e-12)
    np.testing.assert_allclose(stack.sequences[2].data, level3, atol=1e-12)


def test_pyramid_batched_gradient():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(2, 16, 2)), requires_grad=True)
    k = Tensor(rng.normal(size=(4, 2, 2)), requires_grad=True)
    cfg = mfe.ScaleConfig(16, (4,), 2)
    w = rng.normal(size=(2, 4, 2))
    report = tn.check_gradients(lambda: (mfe.build_pyramid(x, cfg, [k]).sequences[1] * w).sum(), [x, k])
    assert all(v <= 0 for v in report.values())
