import numpy as np
import pytest

from surformer.errors import (ConfigurationError, DimensionError, GradientCheckError, LoadError, ParameterError,
                              StateError)
from surformer.nn import functional as F
from surformer.nn.gradcheck import finite_difference_check, max_relative_error
from surformer.nn.io import is_container, load_tensors, save_tensors
from surformer.nn.layers import (AttentionConfig, BatchNorm, Dense, Dropout, FeedForward, LayerNorm,
                                 Module, MultiHeadAttention, Parameter, count_parameters)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_parameter_grad_shape_and_zeroing():
    p = Parameter(np.ones((2, 3)))
    assert p.grad.shape == p.value.shape
    p.grad += 1.0
    p.zero_grad()
    assert not p.grad.any()


def test_count_dense_7_to_128():
    assert count_parameters(Dense(7, 128, rng())) == 1024


def test_count_layer_norm_128():
    assert count_parameters(LayerNorm(128)) == 256


def test_batch_norm_running_stats_not_counted():
    bn = BatchNorm(10)
    assert count_parameters(bn) == 20
    names = dict(bn.named_parameters())
    assert not names["running_mean"].trainable


def test_glorot_init_is_seeded():
    a = Dense(5, 4, rng(3)).W.value
    b = Dense(5, 4, rng(3)).W.value
    np.testing.assert_array_equal(a, b)
    limit = np.sqrt(6.0 / 9)
    assert np.abs(a).max() <= limit
    np.testing.assert_array_equal(Dense(5, 4, rng(3)).b.value, 0.0)


def test_named_parameters_recurse_into_children_and_lists():
    class Net(Module):
        def __init__(self):
            super().__init__()
            self.ff = FeedForward(3, 4, 2, rng())
            self.norms = [LayerNorm(2), LayerNorm(2)]

    names = [n for n, _ in Net().named_parameters()]
    assert "ff.fc1.W" in names and "norms.1.beta" in names
    assert len(names) == len(set(names))


def test_train_eval_propagates():
    ff = FeedForward(3, 4, 2, rng())
    ff.eval()
    assert not any(m.training for m in ff.modules())
    ff.train()
    assert all(m.training for m in ff.modules())


def test_state_dict_round_trip_and_validation():
    a = FeedForward(3, 4, 2, rng(0))
    b = FeedForward(3, 4, 2, rng(1))
    b.load_state_dict(a.state_dict())
    x = rng(2).normal(size=(5, 3))
    np.testing.assert_array_equal(a(x), b(x))
    bad = a.state_dict()
    bad["fc1.W"] = np.zeros((2, 2))
    with pytest.raises(DimensionError):
        b.load_state_dict(bad)
    missing = a.state_dict()
    del missing["fc2.b"]
    with pytest.raises(StateError, match="fc2.b"):
        b.load_state_dict(missing)


def test_dropout_module_inference_identity():
    d = Dropout(0.5, rng())
    d.eval()
    x = rng(1).normal(size=(4, 4))
    np.testing.assert_array_equal(d(x), x)


def test_layer_norm_without_center_has_no_beta():
    ln = LayerNorm(4, center=False)
    assert [n for n, _ in ln.named_parameters()] == ["gamma"]


def test_attention_config_invariant():
    with pytest.raises(ConfigurationError):
        AttentionConfig(model_dim=128, num_heads=3, head_dim=64)
    AttentionConfig(128, 2, 64)


def test_mha_output_shape():
    mha = MultiHeadAttention(AttentionConfig(128, 2, 64), rng())
    out = mha(rng(1).normal(size=(2, 4, 128)), rng(2).normal(size=(2, 4, 128)))
    assert out.shape == (2, 4, 128)
    np.testing.assert_allclose(mha.last_weights.sum(axis=-1), 1.0, atol=1e-9)


def test_mha_single_head_identity_projections_reduce_to_sdpa():
    mha = MultiHeadAttention(AttentionConfig(6, 1, 6), rng())
    for p in (mha.Wq, mha.Wk, mha.Wv, mha.Wo):
        p.value[...] = np.eye(6)
    q = rng(1).normal(size=(2, 3, 6))
    kv = rng(2).normal(size=(2, 5, 6))
    expected, _ = F.scaled_dot_product_attention(q, kv, kv)
    np.testing.assert_allclose(mha(q, kv), expected, atol=1e-12)


def test_mha_gradients_all_projections():
    mha = MultiHeadAttention(AttentionConfig(8, 2, 4), rng(0))
    q = rng(1).normal(size=(2, 3, 8))
    kv = rng(2).normal(size=(2, 4, 8))
    c = rng(3).normal(size=(2, 3, 8))
    mha.zero_grad()
    mha(q, kv)
    dq, dkv = mha.backward(c)
    loss = lambda: float((mha(q, kv) * c).sum())
    params = [p for _, p in mha.named_parameters()]
    arrays = [p.value for p in params] + [q, kv]
    grads = [p.grad.copy() for p in params] + [dq, dkv]
    assert finite_difference_check(loss, arrays, grads) < 1e-4


def test_mha_rejects_wrong_width():
    mha = MultiHeadAttention(AttentionConfig(8, 2, 4), rng())
    with pytest.raises(DimensionError):
        mha(np.ones((1, 2, 6)), np.ones((1, 2, 8)))


def test_dense_module_gradient():
    d = Dense(4, 3, rng(0), activation="relu")
    d.b.value[...] = 0.1
    x = rng(1).normal(size=(5, 4))
    c = rng(2).normal(size=(5, 3))
    d.zero_grad()
    d(x)
    dx = d.backward(c)
    loss = lambda: float((d(x) * c).sum())
    err = finite_difference_check(loss, [d.W.value, d.b.value, x], [d.W.grad.copy(), d.b.grad.copy(), dx])
    assert err < 1e-6


def test_gradcheck_negative_control():
    x = rng(0).normal(size=(3, 4))
    W = rng(1).normal(size=(4, 2))
    y = F.dense_forward(x, W)
    _, dW, _ = F.dense_backward(np.ones_like(y), x, W, y, has_bias=False)
    corrupted = dW * 1.1 + 0.05
    loss = lambda: F.dense_forward(x, W).sum()
    assert finite_difference_check(loss, [W], [corrupted]) > 1e-2


def test_gradcheck_step_bounds():
    with pytest.raises(ParameterError):
        finite_difference_check(lambda: 0.0, [np.zeros(1)], [np.zeros(1)], h=1e-3)


def test_gradcheck_non_finite_is_reported():
    x = np.array([1.0])
    with pytest.raises(GradientCheckError):
        finite_difference_check(lambda: float(np.inf * x[0]), [x], [np.zeros(1)])


def test_max_relative_error_floor():
    assert max_relative_error([0.0], [0.0]) == 0.0
    assert max_relative_error([1.0], [0.5]) == pytest.approx(0.5)


def test_container_round_trip(tmp_path):
    tensors = {
        "a": rng().normal(size=(3, 4)),
        "b": np.arange(5, dtype=np.int64),
        "c": np.float32([1.5, -2.0]),
    }
    path = tmp_path / "w.bin"
    save_tensors(path, tensors, meta={"kind": "test"})
    assert is_container(path)
    loaded, meta = load_tensors(path)
    assert meta == {"kind": "test"}
    assert list(loaded) == list(tensors)
    for k in tensors:
        assert loaded[k].dtype == tensors[k].dtype
        np.testing.assert_array_equal(loaded[k], tensors[k])
    assert path.read_bytes()[:8] == b"SFV1-W1\n"


def test_container_rejects_truncation(tmp_path):
    path = tmp_path / "w.bin"
    save_tensors(path, {"a": np.ones(100)})
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(LoadError):
        load_tensors(path)


def test_container_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"not a container at all")
    assert not is_container(path)
    with pytest.raises(LoadError):
        load_tensors(path)
