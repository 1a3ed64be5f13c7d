import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergorisk.errors import ModelError
from ergorisk.ml.gru import (
    GruConfig, GruModel, clip_global_norm, _layer_forward, forward, gradient_check, init_params, loss_and_grad,
    mse, train_gru, zero_params,
)
from helpers import naive_gru_output

SMALL = GruConfig(hidden=4, head_width=6, sequence_length=12)


def small_instance(seed, batch=3, T=12, cfg=SMALL):
    rng = np.random.default_rng(seed)
    p = init_params(cfg, rng)
    for v in p.arrays.values():
        v *= 1.5
    X = rng.normal(size=(batch, T, cfg.input_width))
    y = rng.normal(size=batch)
    return p, X, y


# -- gradients ------------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check(seed):
    p, X, y = small_instance(seed)
    assert p.n_parameters() > 200
    assert gradient_check(p, X, y, n_samples=260, seed=seed) < 1e-3


def test_gradient_check_full_size_model():
    cfg = GruConfig(sequence_length=20)
    p, X, y = small_instance(5, batch=2, T=20, cfg=cfg)
    assert gradient_check(p, X, y, n_samples=200) < 1e-3


def test_gradient_check_catches_tampering():
    p, X, y = small_instance(0)
    _, grads = loss_and_grad(p, X, y)
    grads["gru1.W_h"] = np.zeros_like(grads["gru1.W_h"])
    assert gradient_check(p, X, y, n_samples=260, grads=grads) > 1e-1


def test_gradient_with_dropout_masks():
    p, X, y = small_instance(3)
    rng = np.random.default_rng(0)
    masks = ([(rng.random((3, 12, 4)) < 0.5) * 2.0 for _ in range(2)],
             (rng.random((3, 6)) < 0.5) * 2.0)
    _, grads = loss_and_grad(p, X, y, masks)
    name, j, h = "gru0.W_i", 5, 1e-6
    q = p.copy()
    q.arrays[name].flat[j] += h
    up = np.mean((forward(q, X, masks) - y) ** 2)
    q.arrays[name].flat[j] -= 2 * h
    down = np.mean((forward(q, X, masks) - y) ** 2)
    assert grads[name].flat[j] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-9)


def test_loss_matches_forward():
    p, X, y = small_instance(1)
    loss, _ = loss_and_grad(p, X, y)
    assert loss == mse(p, X, y) == float(np.mean((forward(p, X) - y) ** 2))


# -- forward pass -----------------------------------------------------------------

@settings(max_examples=5)
@given(st.integers(0, 10_000))
def test_matches_naive_loop(seed):
    cfg = GruConfig(sequence_length=15)
    rng = np.random.default_rng(seed)
    p = init_params(cfg, rng)
    window = rng.normal(size=(15, 6))
    fast = forward(p, window[None])[0]
    slow = naive_gru_output(p.arrays, window, cfg.layers, cfg.hidden)
    assert fast == pytest.approx(slow, abs=1e-9)


def test_zero_params_output_is_head_bias():
    cfg = GruConfig()
    p = zero_params(cfg)
    p.arrays["head.b3"][:] = 3.25
    X = np.random.default_rng(0).normal(size=(4, 250, 6))
    assert np.all(forward(p, X) == 3.25)
    hs, (_, _, r, z, n, _) = _layer_forward(p, 0, X)
    assert np.all(r == 0.5) and np.all(z == 0.5) and np.all(n == 0) and np.all(hs == 0)
    model = GruModel(p, cfg, np.zeros(6), np.ones(6))
    p.arrays["head.b3"][:] = 12.0
    assert np.all(model.predict(X) == 10.0)


def test_saturated_update_gate_carries_state():
    cfg = GruConfig(layers=1)
    p = init_params(cfg, np.random.default_rng(0))
    p.arrays["gru0.b"][10:20] = 1e4
    X = np.random.default_rng(1).normal(size=(2, 30, 6))
    h0 = np.random.default_rng(2).uniform(-1, 1, (2, 10))
    hs, _ = _layer_forward(p, 0, X, h0)
    for t in range(1, 31):
        assert np.array_equal(hs[:, t], h0)


@given(st.integers(0, 10_000), st.floats(0.1, 20))
def test_hidden_state_bound(seed, scale):
    rng = np.random.default_rng(seed)
    p = init_params(SMALL, rng)
    for v in p.arrays.values():
        v *= scale
    X = rng.normal(0, scale, (2, 12, 6))
    h0 = rng.uniform(-3, 3, (2, 4))
    hs, _ = _layer_forward(p, 0, X, h0)
    for t in range(1, hs.shape[1]):
        assert np.all(np.abs(hs[:, t]) <= np.maximum(np.abs(hs[:, t - 1]), 1.0) + 1e-12)


def test_wrong_window_shape():
    p = init_params(GruConfig())
    with pytest.raises(ModelError):
        forward(p, np.zeros((1, 250, 5)))
    model = GruModel(p, GruConfig(), np.zeros(6), np.ones(6))
    with pytest.raises(ModelError):
        model.predict(np.zeros((1, 200, 6)))


# -- training ------------------------------------------------------------------------

def test_constant_target_fit():
    cfg = GruConfig(sequence_length=50, epochs=200, dropout=0.0, learning_rate=1e-3)
    X = np.random.default_rng(0).normal(size=(1, 50, 6))
    model = train_gru(X, [5.0], cfg, standardize_targets=False)
    trace = model.loss_trace
    assert trace[-1] < 0.01 * trace[0]
    assert model.predict(X)[0] == pytest.approx(5.0, abs=0.5)


def test_zero_epochs_returns_initial_params():
    cfg = GruConfig(sequence_length=10, epochs=0, seed=4)
    X = np.random.default_rng(0).normal(size=(3, 10, 6))
    model = train_gru(X, [1.0, 2.0, 3.0], cfg)
    ref = init_params(cfg, np.random.default_rng(4))
    assert model.loss_trace == []
    for k, v in ref.arrays.items():
        assert np.array_equal(model.params[k], v)


def test_training_deterministic():
    cfg = GruConfig(sequence_length=10, epochs=3, batch_size=4)
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(10, 10, 6)), rng.uniform(0, 10, 10)
    a, b = train_gru(X, y, cfg), train_gru(X, y, cfg)
    assert a.loss_trace == b.loss_trace
    assert np.array_equal(a.predict(X), b.predict(X))


def test_empty_dataset():
    with pytest.raises(ModelError):
        train_gru(np.zeros((0, 250, 6)), [])


def test_json_round_trip(tmp_path):
    cfg = GruConfig(sequence_length=10, epochs=1)
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(5, 10, 6)), rng.uniform(0, 10, 5)
    model = train_gru(X, y, cfg)
    model.save(tmp_path / "g.json")
    back = GruModel.load(tmp_path / "g.json")
    assert np.array_equal(back.predict(X), model.predict(X))
    assert back.config == model.config and back.loss_trace == model.loss_trace


def test_clip_global_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    assert clip_global_norm(g, 10.0) == 5.0 and g["a"][0] == 3.0
    assert clip_global_norm(g, 1.0) == 5.0
    assert np.allclose(g["a"], [0.6, 0.0]) and np.allclose(g["b"], [[0.8]])
    assert clip_global_norm(g, 0.0) == pytest.approx(1.0)
    with pytest.raises(ModelError):
        GruConfig(clip_norm=-1.0)
