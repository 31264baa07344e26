import numpy as np
import pytest

from lanecoop.errors import InputError
from lanecoop.style import (
    STYLES, StyleModel, extract_features, fit_clusters, fit_recognizer, kmeans, order_labels,
    predict_style, projection_rows,
)
from lanecoop.synthetic import style_feature_vector


def test_extract_features_constant_speed():
    f = extract_features(np.full(50, 12.0), np.zeros(50))
    assert f[0] == pytest.approx(12.0)
    assert len(f) == 6


def test_extract_features_too_short():
    with pytest.raises(InputError):
        extract_features(np.ones(5), np.zeros(5))


def test_kmeans_separated_blobs(rng):
    centers = np.array([[0, 0], [10, 0], [0, 10]])
    pts = np.concatenate([c + rng.normal(scale=0.3, size=(40, 2)) for c in centers])
    km = kmeans(pts, 3, seed=1)
    assert len(set(km.labels[:40])) == 1 and len(set(km.labels)) == 3
    assert km.inertia < 40
    assert np.all(np.diff(km.history) <= 1e-9)  # Lloyd never raises the inertia


def test_kmeans_is_seeded(rng):
    pts = rng.normal(size=(60, 3))
    a, b = kmeans(pts, 3, seed=7), kmeans(pts, 3, seed=7)
    assert np.array_equal(a.labels, b.labels)


def test_order_labels_fast_is_aggressive():
    # v_mean, a_mean, v_std, a_std, v_max, a_max
    cents = np.array([[10.0, 0, 1, 0.3, 12, 1], [16.0, 0, 2, 1.2, 19, 3], [13.0, 0, 1.5, 0.6, 15, 2]])
    order = order_labels(cents, cents.mean(axis=0), cents.std(axis=0))
    assert [STYLES[o] for o in order] == ["conservative", "aggressive", "normal"]


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(3)
    true = rng.integers(0, 3, 300)
    feats = np.array([style_feature_vector(int(s), rng) for s in true])
    model, styles, _ = fit_clusters(feats, 42)
    model = fit_recognizer(model, feats, styles, 42)
    return feats, true, styles, model


def test_clusters_recover_prototypes(fitted):
    _, true, styles, _ = fitted
    assert np.mean(styles == true) > 0.95


def test_recognizer_reproduces_clusters(fitted):
    feats, _, styles, model = fitted
    labels, probs = predict_style(model, feats)
    assert np.array_equal(labels, styles)
    assert np.allclose(probs.sum(axis=1), 1)


def test_model_round_trip(fitted):
    feats, _, _, model = fitted
    back = StyleModel.from_dict(model.to_dict())
    assert np.array_equal(predict_style(back, feats)[1], predict_style(model, feats)[1])
    assert np.array_equal(back.assign(feats), model.assign(feats))


def test_nonfinite_features_rejected(fitted):
    _, _, _, model = fitted
    bad = np.full(6, np.nan)
    with pytest.raises(InputError):
        predict_style(model, bad)


def test_projection_rows(fitted):
    feats, _, styles, model = fitted
    rows = projection_rows(model, feats[:5], styles[:5])
    assert len(rows) == 5 and all(r[2] in STYLES for r in rows)
