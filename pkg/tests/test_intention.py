import numpy as np
import pytest

from conftest import worst_fd_error
from lanecoop.intention import IntentionParams, fuse, fuse_backward


def _batch(rng, b=6):
    return rng.normal(size=(b, 4)), rng.normal(size=(b, 6)), np.eye(3)[rng.integers(0, 3, b)]


def test_zero_heads_give_half():
    p = IntentionParams.zeros()
    s, _ = fuse(p, np.ones(4), np.ones(6), [1, 0, 0])
    assert s.lcs == pytest.approx(0.5) and s.dcs == pytest.approx(0.5) and s.alpha == pytest.approx(0.5)
    assert s.c_final == pytest.approx(0.5)


def test_convex_fusion_bounds(rng):
    p = IntentionParams.init(rng)
    inner, inter, oh = _batch(rng, 50)
    s, _ = fuse(p, inner, inter, oh)
    lo = np.minimum(s.lcs, s.dcs) - 1e-12
    hi = np.maximum(s.lcs, s.dcs) + 1e-12
    assert np.all((s.c_final >= lo) & (s.c_final <= hi))
    assert np.all((s.alpha > 0) & (s.alpha < 1))


def test_lcs_depends_on_style(rng):
    p = IntentionParams.init(rng)
    inner = rng.normal(size=4)
    a, _ = fuse(p, inner, np.zeros(6), [1, 0, 0])
    b, _ = fuse(p, inner, np.zeros(6), [0, 0, 1])
    assert a.lcs != b.lcs


@pytest.mark.parametrize("use_lcs,use_dcs", [(True, True), (True, False), (False, True), (False, False)])
def test_fuse_backward_fd(rng, use_lcs, use_dcs):
    p = IntentionParams.init(rng)
    inner, inter, oh = _batch(rng)
    w = rng.normal(size=len(inner))

    def loss():
        s, _ = fuse(p, inner, inter, oh, use_lcs, use_dcs)
        return float(w @ s.c_final ** 2)

    s, cache = fuse(p, inner, inter, oh, use_lcs, use_dcs)
    grads = fuse_backward(p, cache, 2 * w * s.c_final)
    assert worst_fd_error(loss, p.arrays(), grads, n_per_array=15) <= 1e-4


def test_disabled_head_reads_half_and_gets_no_gradient(rng):
    p = IntentionParams.init(rng)
    inner, inter, oh = _batch(rng)
    s, cache = fuse(p, inner, inter, oh, use_lcs=False)
    assert np.all(s.lcs == 0.5)
    g = fuse_backward(p, cache, np.ones(len(inner)))
    assert all(not np.any(v) for k, v in g.items() if k.startswith("intr."))
