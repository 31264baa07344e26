"""The compiled kernels must agree with the pure-Python fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lanecoop import _pykernels
from lanecoop.planner import MpcConfig, sigmoid_path

ck = pytest.importorskip("lanecoop._ckernels")


@pytest.fixture
def problem(rng):
    cfg = MpcConfig()
    p = cfg.pack(sigmoid_path(0.0, 1.8, 50.0, 3.6), 12.0, 0.3, -0.01)
    s0 = np.array([0.5, 1.7, 0.02, 11.0])
    u = np.ascontiguousarray(rng.normal(scale=0.2, size=2 * cfg.horizon))
    lines = np.ascontiguousarray(np.arange(4) * 3.6576)
    obs = np.ascontiguousarray(np.column_stack([25 + np.arange(cfg.horizon * 2) * 0.5,
                                                np.tile([5.5, 1.8], cfg.horizon)]).ravel())
    return s0, u, p, lines, obs


def test_rolling_median_parity(rng):
    x = rng.normal(size=301)
    for w in (1, 5, 51):
        assert np.array_equal(ck.rolling_median(x, w), _pykernels.rolling_median(x, w))


def test_rollout_parity(problem):
    s0, u, p, *_ = problem
    assert np.allclose(ck.rollout(s0, u, 0.1, 2.7), _pykernels.rollout(s0, u, 0.1, 2.7), rtol=0, atol=1e-12)


def test_cost_parity(problem):
    s0, u, p, lines, obs = problem
    for m in (0, 2):
        a = ck.mpc_cost(s0, u, p, lines, obs, m)
        b = _pykernels.mpc_cost(s0, u, p, lines, obs, m)
        assert a == pytest.approx(b, rel=1e-12)


def test_gradient_parity(problem):
    s0, u, p, lines, obs = problem
    a = ck.mpc_gradient(s0, u, p, lines, obs, 2, 1e-6)
    b = _pykernels.mpc_gradient(s0, u, p, lines, obs, 2, 1e-6)
    assert np.allclose(a, b, rtol=1e-6, atol=1e-8)


def test_potential_parity(problem):
    _, _, p, lines, obs = problem
    for x, y in ((0.0, 3.6576), (25.0, 5.5), (100.0, 1.0)):
        assert ck.potential(x, y, lines, obs, 2, 0, p) == pytest.approx(
            _pykernels.potential(x, y, lines, obs, 2, 0, p), rel=1e-12)


def test_env_var_forces_fallback():
    env = dict(os.environ, LANECOOP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from lanecoop import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
