import numpy as np
import pytest

from lanecoop import irl
from lanecoop.errors import ConfigError, FormatError, NumericError
from lanecoop.synthetic import yield_demos


def test_rollout_constant_accel():
    x, v = irl.rollout(0.0, 10.0, np.full(10, 1.0), 0.1)
    assert v[-1] == pytest.approx(11.0)
    assert x[-1] == pytest.approx(10.0 * 1.0 + 0.5 * 1.0 * 1.0 ** 2)


def test_rollout_speed_clamped():
    x, v = irl.rollout(0.0, 1.0, np.full(20, -3.0), 0.1)
    assert np.all(v >= 0) and np.all(np.diff(x) >= 0)


def test_features_by_hand():
    x = np.array([0.0, 1.0, 2.0])
    v = np.array([10.0, 10.0, 10.0])
    a = np.array([0.0, 1.0])
    lead = np.array([20.0, 21.0, 22.0])
    f, flagged = irl.traj_features(x, v, a, lead, 0.1)
    assert f[0] == pytest.approx(20.0)
    assert f[1] == pytest.approx(2 * np.exp(-20.0 / (10.0 + irl.EPS)))
    assert f[2] == pytest.approx(1 - np.exp(-10.0))
    assert not flagged


def test_negative_gap_flagged():
    cs = irl.generate_candidates(0.0, 15.0, np.full(11, 2.0), 10)
    assert cs.flagged and np.all(np.isfinite(cs.features))


def test_lattice_shape():
    cs = irl.generate_candidates(0.0, 10.0, 30 + 10 * np.arange(21) * 0.1, 20)
    assert len(cs) == 64 and cs.x.shape == (64, 21)
    with pytest.raises(ConfigError):
        irl.generate_candidates(0.0, 10.0, np.zeros(5), 20)


def test_zero_weights_uniform():
    p = irl.maxent_probs(np.random.default_rng(0).normal(size=(64, 3)), np.zeros(3))
    assert np.allclose(p, 1 / 64)


def test_single_demo_matches_expectation_at_optimum():
    demos, nz = yield_demos(1, 5, n_steps=20)
    res = irl.fit_weights(demos, iters=5000, normalizer=nz)
    assert np.all(np.diff(res.loglik) >= 0)


@pytest.fixture(scope="module")
def fitted():
    demos, nz = yield_demos(60, 11)
    return demos, irl.fit_weights(demos, normalizer=nz)


def test_feature_matching_and_monotone_ll(fitted):
    _, res = fitted
    assert np.max(np.abs(res.gradient)) <= 1e-3
    assert np.all(np.diff(res.loglik) >= 0)


def test_recovers_sign_of_generating_weights(fitted):
    _, res = fitted
    assert res.weights.omega[1] < 0 and res.weights.omega[2] < 0 and res.weights.omega[0] > 0


def test_reported_gradient_is_feature_gap(fitted):
    demos, res = fitted
    w = res.weights
    gaps = []
    for d in demos:
        f = w.normalizer(d.candidates.features)
        p = irl.maxent_probs(f, w.omega)
        gaps.append(f[d.expert_index()] - p @ f)
    assert np.allclose(np.mean(gaps, axis=0), res.gradient, atol=1e-10)


def test_divergence_raises():
    # the fastest candidate is separable: a huge step keeps raising the likelihood
    cs = irl.generate_candidates(0.0, 10.0, 200 + 10 * np.arange(11) * 0.1, 10)
    demo = irl.Demo(cs, cs.x[int(np.argmax(cs.features[:, 0]))].copy())
    with pytest.raises(NumericError):
        irl.fit_weights([demo], iters=50, step=1e3, normalizer=irl.Normalizer.identity(10))


def test_predict_and_round_trip(fitted):
    _, res = fitted
    back = irl.RewardWeights.from_dict(res.weights.to_dict())
    lead = 15 + 12 * np.arange(51) * 0.1
    a = irl.predict(0.0, 12.0, lead, res.weights, 50)
    b = irl.predict(0.0, 12.0, lead, back, 50)
    assert np.array_equal(a.x, b.x)
    assert a.probs.sum() == pytest.approx(1.0)
    with pytest.raises(FormatError):
        irl.RewardWeights.from_dict({"omega": [1, 2]})


def test_expert_index_exact():
    cs = irl.generate_candidates(0.0, 10.0, 30 + 10 * np.arange(11) * 0.1, 10)
    assert irl.Demo(cs, cs.x[17].copy()).expert_index() == 17
