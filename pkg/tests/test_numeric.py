import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import max_rel_err, numerical_grad
from lanecoop.errors import ConfigError, DomainError, NumericError, ShapeError
from lanecoop.numeric import (
    AdamW, Layer, LstmParams, MlpParams, lognormal_cdf, lognormal_fit, lstm_backward,
    lstm_forward, lstm_step, lstm_step_backward, make_rng, mlp_backward, mlp_forward,
    pca_fit, rolling_median, savgol_filter,
)


# ---------------------------------------------------------------- MLP


def test_zero_identity_net_outputs_zero(rng):
    p = MlpParams.zeros([5, 3], ["identity"])
    out, _ = mlp_forward(p, rng.normal(size=5))
    assert np.array_equal(out, np.zeros(3))


def test_relu_identity_layer():
    p = MlpParams([Layer(np.eye(2), np.zeros(2), "relu")])
    out, _ = mlp_forward(p, [-1.0, 2.0])
    assert np.array_equal(out, [0.0, 2.0])


def test_softmax_net_normalised(rng):
    p = MlpParams.init([2, 64, 64, 3], ["relu", "relu", "softmax"], rng)
    out, _ = mlp_forward(p, rng.normal(size=2))
    assert abs(out.sum() - 1) < 1e-9
    assert np.all(out > 0)


def test_softmax_only_last():
    with pytest.raises(ConfigError):
        MlpParams([Layer(np.eye(2), np.zeros(2), "softmax"), Layer(np.eye(2), np.zeros(2))])


def test_shape_mismatch(rng):
    p = MlpParams.init([4, 3], ["relu"], rng)
    with pytest.raises(ShapeError):
        mlp_forward(p, np.ones(5))
    with pytest.raises(ShapeError):
        MlpParams([Layer(np.ones((3, 4)), np.zeros(3)), Layer(np.ones((2, 2)), np.zeros(2))])


def test_stale_cache_rejected(rng):
    a = MlpParams.init([4, 3], ["relu"], rng)
    b = MlpParams.init([5, 3], ["relu"], rng)
    _, cache = mlp_forward(b, np.ones(5))
    with pytest.raises(ShapeError):
        mlp_backward(a, cache, np.ones(3))


@pytest.mark.parametrize("acts", [
    ["relu", "relu", "softmax"], ["tanh", "sigmoid", "identity"], ["sigmoid", "tanh", "sigmoid"],
])
@pytest.mark.parametrize("batched", [False, True])
def test_mlp_backward_matches_fd(rng, acts, batched):
    p = MlpParams.init([6, 9, 7, 4], acts, rng)
    for layer in p.layers:
        layer.b[:] = rng.normal(scale=0.3, size=layer.b.shape)
    x = rng.normal(size=(3, 6) if batched else 6)
    weights = rng.normal(size=(3, 4) if batched else 4)

    def loss():
        out, _ = mlp_forward(p, x)
        return float(np.sum(out * weights))

    out, cache = mlp_forward(p, x)
    grads, gx = mlp_backward(p, cache, weights)
    for name, arr in p.arrays().items():
        assert max_rel_err(grads[name], numerical_grad(loss, arr)) < 1e-4, name
    assert max_rel_err(gx, numerical_grad(loss, x)) < 1e-4


def test_mlp_zero_grad_output(rng):
    p = MlpParams.init([3, 5, 2], ["relu", "identity"], rng)
    _, cache = mlp_forward(p, rng.normal(size=3))
    grads, gx = mlp_backward(p, cache, np.zeros(2))
    assert all(not np.any(g) for g in grads.values()) and not np.any(gx)


def test_identity_layer_gradient():
    p = MlpParams([Layer(np.eye(3), np.zeros(3))])
    x = np.array([1.0, -2.0, 0.5])
    _, cache = mlp_forward(p, x)
    grads, _ = mlp_backward(p, cache, np.ones(3))
    assert np.array_equal(grads["0.W"], np.outer(np.ones(3), x))
    assert np.array_equal(grads["0.b"], np.ones(3))


# --------------------------------------------------------------- LSTM


def test_lstm_zero_everything():
    p = LstmParams.zeros(3, 4)
    h, c, _ = lstm_step(p, np.zeros(3), np.zeros(4), np.zeros(4))
    assert not np.any(h) and not np.any(c)


def test_lstm_hidden_bounded_and_deterministic(rng):
    p = LstmParams.init(5, 8, rng)
    x = rng.normal(scale=5, size=(12, 5))
    h1, _ = lstm_forward(p, x)
    h2, _ = lstm_forward(p, x)
    assert np.array_equal(h1, h2)
    assert np.all(np.abs(h1) < 1)


def test_lstm_default_hidden_is_128():
    assert LstmParams.init(11).hidden_dim == 128


def test_lstm_nan_state_reports_step(rng):
    p = LstmParams.init(2, 3, rng)
    with pytest.raises(NumericError, match="step 7"):
        lstm_step(p, np.ones(2), np.array([np.nan, 0, 0]), np.zeros(3), step=7)


def test_lstm_step_backward_fd(rng):
    p = LstmParams.init(4, 5, rng)
    x, h0, c0 = rng.normal(size=4), rng.normal(size=5) * 0.5, rng.normal(size=5)
    wh, wc = rng.normal(size=5), rng.normal(size=5)

    def loss():
        h, c, _ = lstm_step(p, x, h0, c0)
        return float(h @ wh + c @ wc)

    _, _, cache = lstm_step(p, x, h0, c0)
    grads, dx, dh, dc = lstm_step_backward(p, cache, wh, wc)
    for name, arr in p.arrays().items():
        assert max_rel_err(grads[name], numerical_grad(loss, arr)) < 1e-4
    assert max_rel_err(dx, numerical_grad(loss, x)) < 1e-4
    assert max_rel_err(dh, numerical_grad(loss, h0)) < 1e-4
    assert max_rel_err(dc, numerical_grad(loss, c0)) < 1e-4


def test_lstm_bptt_fd(rng):
    p = LstmParams.init(3, 6, rng)
    xs = rng.normal(size=(2, 7, 3))
    w = rng.normal(size=(2, 6))

    def loss():
        return float(np.sum(lstm_forward(p, xs)[0] * w))

    _, caches = lstm_forward(p, xs)
    grads, dxs = lstm_backward(p, caches, w)
    for name, arr in p.arrays().items():
        assert max_rel_err(grads[name], numerical_grad(loss, arr)) < 1e-4
    assert max_rel_err(dxs, numerical_grad(loss, xs)) < 1e-4


# -------------------------------------------------------------- AdamW


def test_adamw_zero_grad_no_decay_is_fixed_point(rng):
    w = rng.normal(size=4)
    before = w.copy()
    opt = AdamW(lr=1e-2, weight_decay=0.0)
    for _ in range(5):
        opt.step({"w": w}, {"w": np.zeros(4)})
    assert np.array_equal(w, before)
    assert opt.step_count == 5


def test_adamw_first_step_closed_form():
    # m_hat = g, v_hat = g^2 after bias correction -> step = lr*g/(|g|+eps)
    g = np.array([0.3, -2.0, 1e-3])
    w = np.zeros(3)
    lr = 1e-3
    AdamW(lr=lr, weight_decay=0.0).step({"w": w}, {"w": g})
    expected = -lr * g / (np.abs(g) + 1e-8)
    assert np.allclose(w, expected, rtol=1e-12, atol=0)
    assert np.allclose(w, -lr * np.sign(g), rtol=1e-4)


def test_adamw_decoupled_decay():
    w = np.array([1.0, -3.0])
    opt = AdamW(lr=0.1, weight_decay=1e-3)
    for k in range(1, 4):
        opt.step({"w": w}, {"w": np.zeros(2)})
        assert np.allclose(w, np.array([1.0, -3.0]) * (1 - 0.1 * 1e-3) ** k, rtol=1e-14)


def test_adamw_rejects_nonfinite():
    with pytest.raises(NumericError):
        AdamW().step({"w": np.zeros(2)}, {"w": np.array([np.inf, 0])})


# ---------------------------------------------------------------- PCA


def test_pca_rank_one_line(rng):
    t = rng.normal(size=200)
    data = np.c_[t, 2 * t] + np.array([5.0, -1.0])
    pca = pca_fit(data, 2)
    assert np.allclose(np.abs(pca.components[0]), np.array([1, 2]) / math.sqrt(5), atol=1e-10)
    assert pca.explained_variance[1] < 1e-10


def test_pca_isotropic_sample():
    data = make_rng(7).normal(size=(10_000, 2))
    pca = pca_fit(data, 2)
    assert np.all(np.abs(pca.explained_variance - 1) < 0.1)


def test_pca_orthonormal_and_reconstruction(rng):
    data = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
    pca = pca_fit(data, 6)
    assert np.allclose(pca.components @ pca.components.T, np.eye(6), atol=1e-8)
    assert np.all(np.diff(pca.explained_variance) <= 1e-12)
    assert np.allclose(pca.inverse_transform(pca.transform(data)), data, atol=1e-8)
    # projection onto a sub-basis is idempotent
    sub = pca_fit(data, 3)
    once = sub.inverse_transform(sub.transform(data))
    assert np.allclose(sub.inverse_transform(sub.transform(once)), once, atol=1e-8)


def test_pca_too_many_components(rng):
    with pytest.raises(ConfigError):
        pca_fit(rng.normal(size=(10, 3)), 4)


# ------------------------------------------------------------ filters


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_savgol_reproduces_polynomials(degree, rng):
    x = np.linspace(-2, 3, 80)
    poly = np.polyval(rng.normal(size=degree + 1), x)
    assert np.allclose(savgol_filter(poly, 11, 3), poly, atol=1e-9)


def test_savgol_reduces_white_noise():
    for seed in range(100):
        noise = make_rng(seed).normal(size=300)
        assert savgol_filter(noise, 11, 3).var() < noise.var()


def test_savgol_bad_config():
    with pytest.raises(ConfigError):
        savgol_filter(np.ones(5), 11, 3)
    with pytest.raises(ConfigError):
        savgol_filter(np.ones(50), 10, 3)


def _median_oracle(signal, window):
    half = (window - 1) // 2
    n = len(signal)
    out = []
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out.append(sorted(signal[i - r:i + r + 1])[r])
    return np.array(out)


def test_rolling_median_monotone_unchanged(rng):
    sig = np.cumsum(rng.uniform(0, 1, 100))
    assert np.array_equal(rolling_median(sig, 51), sig)


def test_rolling_median_removes_spike():
    sig = np.full(30, 4.0)
    sig[12] = 100.0
    assert np.array_equal(rolling_median(sig, 5), np.full(30, 4.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60),
       st.integers(1, 12).map(lambda k: 2 * k - 1))
def test_rolling_median_matches_sort_oracle(values, window):
    sig = np.array(values)
    assert np.array_equal(rolling_median(sig, window), _median_oracle(sig, window))


# ---------------------------------------------------------- lognormal


def test_lognormal_degenerate():
    mu, sigma = lognormal_fit(np.full(10, math.e))
    assert mu == pytest.approx(1.0, abs=1e-15) and sigma == 0.0


def test_lognormal_recovers_parameters_and_cdf():
    s = make_rng(3).lognormal(1.5, 0.4, size=100_000)
    mu, sigma = lognormal_fit(s)
    assert abs(mu - 1.5) < 0.01 and abs(sigma - 0.4) < 0.01
    srt = np.sort(s)
    emp = (np.arange(len(srt)) + 0.5) / len(srt)
    assert np.max(np.abs(emp - lognormal_cdf(srt, mu, sigma))) < 0.02


@pytest.mark.parametrize("bad", [[1.0, 0.0], [2.0, -1.0], [1.0]])
def test_lognormal_domain(bad):
    with pytest.raises(DomainError):
        lognormal_fit(bad)
