"""Driving-style features, PCA + k-means clustering and the MLP recognizer.

Styles are indexed 0 aggressive, 1 normal, 2 conservative. Cluster ids are
mapped to these labels by a standardized (v_mean + a_std) score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from lanecoop import checkpoint
from lanecoop.errors import ConfigError, FormatError, InputError
from lanecoop.numeric import (
    AdamW, MlpParams, Pca, make_rng, mlp_backward, mlp_forward, n_components_for_variance, pca_fit,
)

STYLES = ("aggressive", "normal", "conservative")
FEATURES = ("v_mean", "a_mean", "v_std", "a_std", "v_max", "a_max")
MODEL_FORMAT = "lanecoop.style/1"


def extract_features(v, a=None, min_frames: int = 20) -> np.ndarray:
    """``(v_mean, a_mean, v_std, a_std, v_max, a_max)``; accepts a trajectory or two arrays."""
    if a is None:
        v, a = v.v, v.a
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if len(v) < min_frames or len(a) != len(v):
        raise InputError(f"need >= {min_frames} aligned frames, got {len(v)}")
    return np.array([v.mean(), a.mean(), v.std(), a.std(), v.max(), np.abs(a).max()])


# ------------------------------------------------------------------ k-means


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: list  # inertia after every Lloyd iteration of the kept restart


def _sq_dist(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plusplus(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = _sq_dist(points, np.asarray(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
    return np.asarray(centers, dtype=float)


def _lloyd(points, centroids, max_iter, tol):
    history = []
    for _ in range(max_iter):
        labels = _sq_dist(points, centroids).argmin(axis=1)  # ties -> lowest index
        new = centroids.copy()
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        shift = float(np.max(np.abs(new - centroids)))
        centroids = new
        d2 = _sq_dist(points, centroids)
        history.append(float(d2.min(axis=1).sum()))
        if shift < tol:
            break
    labels = _sq_dist(points, centroids).argmin(axis=1)
    return centroids, labels, history


def kmeans(points, k: int = 3, seed: int = 42, n_init: int = 10, max_iter: int = 300,
           tol: float = 1e-8) -> KMeansResult:
    """k-means++ seeded Lloyd iterations; best of ``n_init`` restarts (first on ties)."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ConfigError("points must be a 2-D array")
    if not 1 <= k <= len(points):
        raise ConfigError(f"k={k} needs 1 <= k <= rows={len(points)}")
    rng = make_rng(seed)
    best = None
    for _ in range(n_init):
        cents, labels, hist = _lloyd(points, _plusplus(points, k, rng), max_iter, tol)
        inertia = float(_sq_dist(points, cents)[np.arange(len(points)), labels].sum())
        if best is None or inertia < best.inertia:
            best = KMeansResult(cents, labels, inertia, hist)
    return best


def order_labels(centroids, feature_mean, feature_std) -> np.ndarray:
    """``order[cluster] = style index``, from centroids in original feature units.

    Score = standardized v_mean + standardized a_std; highest is aggressive.
    Equal scores are ranked by v_max.
    """
    c = np.asarray(centroids, dtype=float)
    z = (c - feature_mean) / np.where(np.asarray(feature_std) > 0, feature_std, 1.0)
    score = np.round(z[:, 0] + z[:, 3], 12)
    rank = np.lexsort((-c[:, 4], -score))  # most aggressive first
    order = np.empty(len(c), dtype=int)
    order[rank] = np.arange(len(c))
    return order


# --------------------------------------------------------------- recognizer


def train_recognizer(x, labels, seed: int = 42, n_classes: int = 3, max_epochs: int = 2000,
                     lr: float = 3e-3, weight_decay: float = 1e-4, target_prob: float = 0.99):
    """Cross-entropy MLP 6-64-64-3 (softmax) trained full-batch with AdamW.

    Stops once every training point gives its own class at least
    ``target_prob``. Otherwise runs ``max_epochs``, warns, and returns the
    weights with the best training accuracy seen.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(x) < 30:
        raise ConfigError(f"need >= 30 labelled examples, got {len(x)}")
    rng = make_rng(seed)
    params = MlpParams.init([x.shape[1], 64, 64, n_classes], ["relu", "relu", "softmax"], rng)
    opt = AdamW(lr=lr, weight_decay=weight_decay)
    target = np.eye(n_classes)[labels]
    best, best_acc = params.copy(), -1.0
    for _ in range(max_epochs):
        p, cache = mlp_forward(params, x)
        acc = float(np.mean(p.argmax(axis=1) == labels))
        if acc > best_acc:
            best, best_acc = params.copy(), acc
        if np.min(p[np.arange(len(x)), labels]) >= target_prob:
            return params
        grad = -target / np.maximum(p, 1e-300) / len(x)
        grads, _ = mlp_backward(params, cache, grad)
        opt.step(params.arrays(), grads)
    warnings.warn(f"style recognizer did not converge in {max_epochs} epochs "
                  f"(best training accuracy {best_acc:.3f})", RuntimeWarning, stacklevel=2)
    return best


# -------------------------------------------------------------------- model


@dataclass
class StyleModel:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    pca: Pca
    centroids: np.ndarray  # in PCA space
    label_order: np.ndarray  # cluster -> style index
    recognizer: MlpParams | None = None

    def standardize(self, features):
        f = np.asarray(features, dtype=float)
        if not np.all(np.isfinite(f)):
            raise InputError("style features must be finite")
        return (f - self.feature_mean) / self.feature_std

    def project(self, features):
        return self.pca.transform(self.standardize(features))

    def assign(self, features) -> np.ndarray:
        """Style index via the nearest centroid (the clustering view)."""
        z = np.atleast_2d(self.project(features))
        return self.label_order[_sq_dist(z, self.centroids).argmin(axis=1)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "features": list(FEATURES),
            "styles": list(STYLES),
            "feature_mean": checkpoint.array_to_dict(self.feature_mean),
            "feature_std": checkpoint.array_to_dict(self.feature_std),
            "pca_mean": checkpoint.array_to_dict(self.pca.mean),
            "pca_components": checkpoint.array_to_dict(self.pca.components),
            "pca_explained_variance": checkpoint.array_to_dict(self.pca.explained_variance),
            "centroids": checkpoint.array_to_dict(self.centroids),
            "label_order": [int(k) for k in self.label_order],
            "recognizer": None if self.recognizer is None else checkpoint.mlp_to_dict(self.recognizer),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StyleModel":
        if d.get("format") != MODEL_FORMAT:
            raise FormatError(f"not a style model (format={d.get('format')!r})")
        a = checkpoint.array_from_dict
        rec = d.get("recognizer")
        return cls(a(d["feature_mean"]), a(d["feature_std"]),
                   Pca(a(d["pca_mean"]), a(d["pca_components"]), a(d["pca_explained_variance"])),
                   a(d["centroids"]), np.asarray(d["label_order"], dtype=int),
                   None if rec is None else checkpoint.mlp_from_dict(rec))


def fit_clusters(features, seed: int = 42, k: int = 3, variance: float = 0.95):
    """Standardize, PCA to ``variance`` explained, k-means, label ordering.

    Returns ``(model, styles, kmeans_result)``; the model has no recognizer yet.
    """
    f = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InputError("style features must be finite")
    mean = f.mean(axis=0)
    std = f.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (f - mean) / std
    pca = pca_fit(z, n_components_for_variance(z, variance))
    km = kmeans(pca.transform(z), k, seed)
    cent_orig = pca.inverse_transform(km.centroids) * std + mean
    order = order_labels(cent_orig, mean, std)
    model = StyleModel(mean, std, pca, km.centroids, order)
    return model, order[km.labels], km


def fit_recognizer(model: StyleModel, features, styles, seed: int = 42, **kw) -> StyleModel:
    model.recognizer = train_recognizer(model.standardize(features), styles, seed, **kw)
    return model


def predict_style(model: StyleModel, features):
    """``(labels, probabilities)`` for one feature vector or a batch of rows."""
    if model.recognizer is None:
        raise ConfigError("style model has no trained recognizer")
    f = np.asarray(features, dtype=float)
    p, _ = mlp_forward(model.recognizer, model.standardize(f))
    return p.argmax(axis=-1), p


def projection_rows(model: StyleModel, features, styles):
    """Rows ``(pc1, pc2, style)`` for the 2-D scatter export (pc2 = 0 when only one component)."""
    z = np.atleast_2d(model.project(features))
    if z.shape[1] == 1:
        z = np.column_stack([z, np.zeros(len(z))])
    return [(float(r[0]), float(r[1]), STYLES[int(s)]) for r, s in zip(z[:, :2], styles)]
