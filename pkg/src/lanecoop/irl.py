"""Max-Ent IRL prediction of the target-rear vehicle's longitudinal motion.

The trajectory space is approximated by a lattice of 64 piecewise-constant
acceleration profiles (8 levels, one switch at N/2). Each candidate gets a
feature vector (efficiency, safety, comfort); p(candidate) is a softmax of
omega . f. Omega is fitted by gradient ascent on the demos' log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from lanecoop import DT
from lanecoop.errors import ConfigError, FormatError, NumericError
from lanecoop.numeric import softmax

ACCELS = (-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
EPS = 1e-3
FEATURES = ("efficiency", "safety", "comfort")
_EXP_CAP = 50.0


def rollout(x0: float, v0: float, accels, dt: float = DT):
    """Point-mass rollout with speed clamped at zero (trapezoidal positions)."""
    accels = np.asarray(accels, dtype=float)
    n = len(accels)
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    x[0], v[0] = x0, v0
    for k in range(n):
        v[k + 1] = max(v[k] + accels[k] * dt, 0.0)
        x[k + 1] = x[k] + 0.5 * (v[k] + v[k + 1]) * dt
    return x, v


def traj_features(x, v, a, lead_x, dt: float = DT, eps: float = EPS, a_prev=None):
    """Summed per-step features over the horizon and a flag for negative gaps.

    ``x``, ``v``, ``lead_x`` have N+1 entries (index 0 is the initial state);
    ``a`` has N. Step k uses the state after it, k = 1..N.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    a = np.asarray(a, float)
    lead = np.asarray(lead_x, float)
    gap = lead[1:] - x[1:]
    expo = -gap / (v[1:] + eps)
    flagged = bool(np.any(gap < 0))
    f_safety = np.exp(np.minimum(expo, _EXP_CAP))
    prev = np.concatenate([[a[0] if a_prev is None else a_prev], a[:-1]])
    jerk = (a - prev) / dt
    f = np.array([np.abs(v[1:]).sum(), f_safety.sum(), (1.0 - np.exp(-np.abs(jerk))).sum()])
    return f, flagged


@dataclass
class CandidateSet:
    accels: np.ndarray  # (K, N)
    x: np.ndarray  # (K, N+1)
    v: np.ndarray  # (K, N+1)
    features: np.ndarray  # (K, 3) raw sums
    lead_x: np.ndarray
    dt: float = DT
    flagged: bool = False

    @property
    def horizon(self) -> int:
        return self.accels.shape[1]

    def __len__(self):
        return len(self.accels)


def generate_candidates(x0: float, v0: float, lead_x, n_steps: int, dt: float = DT,
                        levels=ACCELS) -> CandidateSet:
    if n_steps < 1:
        raise ConfigError("horizon must be >= 1 step")
    lead_x = np.asarray(lead_x, float)
    if len(lead_x) != n_steps + 1:
        raise ConfigError(f"lead trajectory needs {n_steps + 1} states, got {len(lead_x)}")
    switch = n_steps // 2
    profiles, xs, vs, fs = [], [], [], []
    flagged = False
    for a1 in levels:
        for a2 in levels:
            acc = np.where(np.arange(n_steps) < switch, a1, a2)
            x, v = rollout(x0, v0, acc, dt)
            f, fl = traj_features(x, v, acc, lead_x, dt)
            flagged |= fl
            profiles.append(acc)
            xs.append(x)
            vs.append(v)
            fs.append(f)
    return CandidateSet(np.array(profiles), np.array(xs), np.array(vs), np.array(fs), lead_x, dt, flagged)


def maxent_probs(features, omega) -> np.ndarray:
    f = np.atleast_2d(np.asarray(features, float))
    return softmax(f @ np.asarray(omega, float))


@dataclass
class Normalizer:
    """Per-horizon averaging, then standardization with pooled candidate statistics."""

    horizon: int
    mean: np.ndarray
    std: np.ndarray

    def __call__(self, raw_features):
        return (np.asarray(raw_features, float) / self.horizon - self.mean) / self.std

    @classmethod
    def fit(cls, candidate_sets) -> "Normalizer":
        n = candidate_sets[0].horizon
        pooled = np.concatenate([c.features for c in candidate_sets]) / n
        std = pooled.std(axis=0)
        return cls(n, pooled.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, horizon: int = 1) -> "Normalizer":
        return cls(horizon, np.zeros(3), np.ones(3))


@dataclass
class Demo:
    candidates: CandidateSet
    expert_x: np.ndarray  # realized positions, N+1

    def expert_index(self) -> int:
        d = np.sum((self.candidates.x - self.expert_x) ** 2, axis=1)
        return int(np.argmin(d))  # first minimum on ties


@dataclass
class RewardWeights:
    omega: np.ndarray
    normalizer: Normalizer

    def to_dict(self) -> dict:
        return {"omega": [float(w) for w in self.omega], "features": list(FEATURES),
                "normalization": {"horizon": self.normalizer.horizon,
                                  "mean": [float(m) for m in self.normalizer.mean],
                                  "std": [float(s) for s in self.normalizer.std]},
                "eps": EPS}

    @classmethod
    def from_dict(cls, d) -> "RewardWeights":
        try:
            nz = d["normalization"]
            omega = np.asarray(d["omega"], float)
            out = cls(omega, Normalizer(int(nz["horizon"]), np.asarray(nz["mean"], float),
                                        np.asarray(nz["std"], float)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad reward-weights record: {exc}") from None
        if omega.shape != (3,) or not np.all(np.isfinite(omega)):
            raise FormatError("omega must be 3 finite numbers")
        return out


@dataclass
class FitResult:
    weights: RewardWeights
    loglik: list = field(default_factory=list)
    gradient: np.ndarray | None = None  # mean over demos: f_expert - E[f]
    iterations: int = 0
    step: float = 0.0


def _loglik_grad(omega, feats, expert):
    """Summed log-likelihood and mean-per-demo gradient. ``feats`` is (D, K, 3)."""
    s = feats @ omega
    lse = logsumexp(s, axis=1)
    rows = np.arange(len(feats))
    p = np.exp(s - lse[:, None])
    grad = feats[rows, expert] - np.einsum("dk,dkj->dj", p, feats)
    return float(np.sum(s[rows, expert] - lse)), grad.mean(axis=0)


def fit_weights(demos, iters: int = 2000, step: float = 0.05, tol: float = 1e-6,
                normalizer: Normalizer | None = None, omega0=None) -> FitResult:
    """Gradient ascent on the summed demo log-likelihood with step halving.

    A step that would lower the likelihood is retried at half size, so the
    recorded log-likelihood never decreases.
    """
    if not demos:
        raise ConfigError("need at least one demo")
    nz = normalizer or Normalizer.fit([d.candidates for d in demos])
    feats = np.stack([nz(d.candidates.features) for d in demos])
    expert = np.array([d.expert_index() for d in demos])
    omega = np.zeros(3) if omega0 is None else np.asarray(omega0, float).copy()
    ll, grad = _loglik_grad(omega, feats, expert)
    history = [ll]
    D = len(demos)
    it = 0
    for it in range(1, iters + 1):
        if np.max(np.abs(grad)) < tol:
            it -= 1
            break
        while True:
            trial = omega + step * D * grad
            ll_t, grad_t = _loglik_grad(trial, feats, expert)
            if ll_t >= ll or step < 1e-12:
                break
            step *= 0.5
        if ll_t < ll:  # no ascent direction left at machine precision
            it -= 1
            break
        omega, ll, grad = trial, ll_t, grad_t
        history.append(ll)
        if np.linalg.norm(omega) > 1e3:
            raise NumericError("reward weights diverged (|omega| > 1e3); rescale the features")
    return FitResult(RewardWeights(omega, nz), history, grad, it, step)


@dataclass
class Prediction:
    t: np.ndarray
    x: np.ndarray  # probability-weighted mean
    v: np.ndarray
    x_argmax: np.ndarray
    v_argmax: np.ndarray
    probs: np.ndarray


def predict(x0: float, v0: float, lead_x, weights: RewardWeights, n_steps: int | None = None,
            dt: float = DT, candidates: CandidateSet | None = None) -> Prediction:
    cs = candidates if candidates is not None else generate_candidates(
        x0, v0, lead_x, n_steps or weights.normalizer.horizon, dt)
    p = maxent_probs(weights.normalizer(cs.features), weights.omega)
    k = int(np.argmax(p))
    t = np.arange(cs.horizon + 1) * dt
    return Prediction(t, p @ cs.x, p @ cs.v, cs.x[k].copy(), cs.v[k].copy(), p)


def demos_from_episodes(episodes, n_steps: int = 50, offsets=(0,)):
    """T-Rear demos starting at the lane-change start (plus offsets); ego is its lead."""
    demos = []
    for ep in episodes:
        for off in offsets:
            s = ep.lc_start_idx + off
            if s < 0 or s + n_steps >= len(ep.ego):
                continue
            tr = ep.t_rear
            cs = generate_candidates(float(tr.x_long[s]), max(float(tr.v[s]), 0.0),
                                     ep.ego.x_long[s:s + n_steps + 1], n_steps)
            demos.append(Demo(cs, np.asarray(tr.x_long[s:s + n_steps + 1], float)))
    return demos
