"""Cooperation scores: style-conditioned LCS, interaction-driven DCS and the gate.

All heads act on window summaries (feature means over the 20 frames), already
standardized. ``c_final = alpha * lcs + (1 - alpha) * dcs``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lanecoop.numeric import MlpParams, make_rng, mlp_backward, mlp_forward

HIDDEN = 32


def _head(n_in, rng):
    return MlpParams.init([n_in, HIDDEN, HIDDEN, 1], ["relu", "relu", "sigmoid"], rng)


@dataclass
class IntentionParams:
    intr: MlpParams  # 4 inner + 3 style one-hot -> 1
    inter: MlpParams  # 6 -> 1
    gate: MlpParams  # 10 -> 1

    @classmethod
    def init(cls, rng=None) -> "IntentionParams":
        rng = rng if rng is not None else make_rng(0)
        return cls(_head(7, rng), _head(6, rng), _head(10, rng))

    @classmethod
    def zeros(cls) -> "IntentionParams":
        z = lambda n: MlpParams.zeros([n, HIDDEN, HIDDEN, 1], ["relu", "relu", "sigmoid"])  # noqa: E731
        return cls(z(7), z(6), z(10))

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.intr.arrays("intr."))
        out.update(self.inter.arrays("inter."))
        out.update(self.gate.arrays("gate."))
        return out

    def copy(self) -> "IntentionParams":
        return IntentionParams(self.intr.copy(), self.inter.copy(), self.gate.copy())


@dataclass
class CoopScores:
    lcs: np.ndarray
    dcs: np.ndarray
    alpha: np.ndarray
    c_final: np.ndarray


def lcs_forward(params: IntentionParams, inner, style_onehot):
    x = np.concatenate([np.asarray(inner, float), np.asarray(style_onehot, float)], axis=-1)
    out, cache = mlp_forward(params.intr, x)
    return out[..., 0], cache


def dcs_forward(params: IntentionParams, inter):
    out, cache = mlp_forward(params.inter, np.asarray(inter, float))
    return out[..., 0], cache


@dataclass
class FuseCache:
    lcs: object
    dcs: object
    gate: object
    scores: CoopScores
    use_lcs: bool
    use_dcs: bool


def fuse(params: IntentionParams, inner, inter, style_onehot, use_lcs: bool = True,
         use_dcs: bool = True):
    """Scores for one summary (1-D inputs) or a batch (rows). Disabled heads read 0.5."""
    inner = np.asarray(inner, float)
    inter = np.asarray(inter, float)
    shape = inner.shape[:-1]
    if use_lcs:
        lcs, lc_cache = lcs_forward(params, inner, style_onehot)
    else:
        lcs, lc_cache = np.full(shape, 0.5), None
    if use_dcs:
        dcs, dc_cache = dcs_forward(params, inter)
    else:
        dcs, dc_cache = np.full(shape, 0.5), None
    g, g_cache = mlp_forward(params.gate, np.concatenate([inner, inter], axis=-1))
    alpha = g[..., 0]
    c = alpha * lcs + (1.0 - alpha) * dcs
    scores = CoopScores(lcs, dcs, alpha, c)
    return scores, FuseCache(lc_cache, dc_cache, g_cache, scores, use_lcs, use_dcs)


def fuse_backward(params: IntentionParams, cache: FuseCache, d_c):
    """Gradients of a loss w.r.t. all head parameters, given dL/dc_final."""
    s = cache.scores
    d_c = np.asarray(d_c, float)
    grads = {}
    d_alpha = d_c * (s.lcs - s.dcs)
    g, _ = mlp_backward(params.gate, cache.gate, d_alpha[..., None], "gate.")
    grads.update(g)
    if cache.use_lcs:
        g, _ = mlp_backward(params.intr, cache.lcs, (d_c * s.alpha)[..., None], "intr.")
    else:
        g = {k: np.zeros_like(v) for k, v in params.intr.arrays("intr.").items()}
    grads.update(g)
    if cache.use_dcs:
        g, _ = mlp_backward(params.inter, cache.dcs, (d_c * (1.0 - s.alpha))[..., None], "inter.")
    else:
        g = {k: np.zeros_like(v) for k, v in params.inter.arrays("inter.").items()}
    grads.update(g)
    return grads
