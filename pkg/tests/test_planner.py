import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from lanecoop import kernels
from lanecoop.errors import ConfigError
from lanecoop.planner import (
    MIN_TAU_FACTOR, BicycleState, MpcConfig, bicycle_step, collides, d_long, lane_lines, mpc_solve,
    potential_cost, sigmoid_path, track,
)


def test_d_long_constant_speed():
    x = 10 * np.arange(51) * 0.1
    assert d_long(x, 50, 0.1) == pytest.approx(50.0)


def test_d_long_fallback_warns():
    with pytest.warns(RuntimeWarning):
        assert d_long(np.zeros(11), 10, 0.1, ego_speed=8.0) == pytest.approx(8.0)
    with pytest.raises(ConfigError):
        d_long(np.zeros(11), 10, 0.1)


def test_sigmoid_endpoints_and_midpoint():
    p = sigmoid_path(0.0, 0.0, 50.0, 3.6576, tau=MIN_TAU_FACTOR / 50.0)
    assert p.y(0.0) == pytest.approx(0.01 * 3.6576, rel=1e-9)
    assert p.y(50.0) == pytest.approx(0.99 * 3.6576, rel=1e-9)
    assert p.y(25.0) == pytest.approx(3.6576 / 2)


def test_sigmoid_left_and_tau_rule():
    p = sigmoid_path(0.0, 5.0, 40.0, 3.6, direction="left")
    assert p.y(40.0) < 5.0 - 3.5
    assert np.all(np.diff(p.y(np.linspace(0, 40, 50))) < 0)
    with pytest.raises(ConfigError, match="tau"):
        sigmoid_path(0.0, 0.0, 40.0, tau=0.1)
    with pytest.raises(ConfigError):
        sigmoid_path(0.0, 0.0, -1.0)


def test_bicycle_straight_and_turn():
    s = bicycle_step(BicycleState(0, 0, 0, 10), 0.0, 0.0, 0.1)
    assert (s.x, s.y, s.psi, s.v) == pytest.approx((1.0, 0.0, 0.0, 10.0))
    s = bicycle_step(BicycleState(0, 0, 0, 10), 0.0, 0.1, 0.1, 2.7)
    assert s.psi == pytest.approx(10 / 2.7 * math.tan(0.1) * 0.1)
    assert bicycle_step(BicycleState(0, 0, 0, 0.1), -5.0, 0.0).v == 0.0


def test_potential_peaks_on_lines_and_obstacles():
    lines = lane_lines(3)
    on = potential_cost(0.0, lines[1], lines)
    mid = potential_cost(0.0, lines[1] + 1.8, lines)
    assert on > mid
    assert potential_cost(0.0, 1.8, lines, [[0.0, 1.8]]) > potential_cost(0.0, 1.8, lines, [[40.0, 1.8]])


def test_mpc_cost_monotone_and_bounded():
    path = sigmoid_path(0.0, 1.8, 50.0, 3.6)
    sol = mpc_solve(BicycleState(0.0, 1.8, 0.0, 12.0), path, None, MpcConfig(tol=1e-9))
    assert np.all(np.diff(sol.cost_history) <= 0)
    cfg = MpcConfig()
    assert np.all(np.abs(sol.controls[:, 1]) <= cfg.delta_max)
    assert np.all((sol.controls[:, 0] >= cfg.a_min) & (sol.controls[:, 0] <= cfg.a_max))


def test_mpc_obstacle_shape_checked():
    with pytest.raises(ConfigError):
        mpc_solve(BicycleState(0, 0, 0, 10), None, np.zeros((3, 1, 2)))


def test_closed_loop_tracking():
    path = sigmoid_path(0.0, 1.8, 60.0, 3.6)
    res = track(path, BicycleState(0.0, 1.8, 0.0, 12.0), 80)
    assert abs(res.states[-1, 1] - (1.8 + 3.6)) < 0.1
    assert np.max(np.abs(res.states[:, 1] - res.reference_y)) < 0.3


def test_obstacle_avoidance_beats_pure_tracking():
    path = sigmoid_path(0.0, 1.8, 60.0, 3.6)
    cfg = MpcConfig()
    ox = lambda k: 45.0 + 6.0 * k * 0.1  # noqa: E731

    def obs(k):
        xs = ox(k + np.arange(1, cfg.horizon + 1))
        return np.stack([xs, path.y(xs)], -1)[:, None, :]

    def min_gap(res):
        return min(math.hypot(s[0] - ox(k), s[1] - path.y(ox(k))) for k, s in enumerate(res.states))

    st = BicycleState(0.0, 1.8, 0.0, 12.0)
    avoid = track(path, st, 60, cfg, obstacle_fn=obs)
    plain = track(path, st, 60, replace(cfg, w_pot=0.0), obstacle_fn=obs)
    assert min_gap(avoid) > min_gap(plain)


def test_collides():
    assert collides((0, 0), (4.0, 1.0))
    assert not collides((0, 0), (5.0, 0.0))
    assert not collides((0, 0), (0.0, 2.0))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
