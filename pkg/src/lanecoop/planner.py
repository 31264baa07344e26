"""Sigmoid lane-change reference and receding-horizon MPC on a kinematic bicycle.

The MPC cost (tracking, control effort, control rate, lane-line and obstacle
potentials) is evaluated by the compiled kernels; the solver is projected
gradient descent with finite-difference gradients and a backtracking step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from lanecoop import DT, LANE_WIDTH, kernels
from lanecoop._pykernels import (
    P_AL, P_AO, P_APREV, P_DLAT, P_DLONG, P_DPREV, P_DT, P_LEN, P_RX0, P_RY0, P_SIGL, P_SIGX, P_SIGY,
    P_TAU, P_VREF, P_WA, P_WB, P_WDA, P_WDDELTA, P_WDELTA, P_WPOT, P_WPSI, P_WV, P_WY,
)
from lanecoop.errors import ConfigError, NumericError

MIN_TAU_FACTOR = 2.0 * math.log(99.0)  # tau * d_long below this breaks the 1 % endpoint rule
VEHICLE_LENGTH, VEHICLE_WIDTH = 4.5, 1.8


def d_long(pred_x, n_steps: int | None = None, dt: float = DT, ego_speed: float | None = None) -> float:
    """Expected longitudinal extent of the manoeuvre, mean T-Rear speed x N x dt."""
    x = np.asarray(pred_x, dtype=float)
    if len(x) < 2:
        raise ConfigError("predicted trajectory needs >= 2 states")
    n = len(x) - 1 if n_steps is None else n_steps
    v_bar = float(np.mean(np.diff(x))) / dt
    if v_bar <= 0:
        if ego_speed is None or ego_speed <= 0:
            raise ConfigError("non-positive predicted speed and no usable ego speed fallback")
        warnings.warn("predicted T-Rear speed <= 0; using ego speed for d_long", RuntimeWarning, stacklevel=2)
        v_bar = float(ego_speed)
    return v_bar * n * dt


@dataclass
class SigmoidPath:
    x0: float
    y0: float
    d_long: float
    d_lat: float
    tau: float
    b: float = 0.0
    sign: float = 1.0  # -1 moves toward smaller y

    def y(self, x):
        xt = np.asarray(x, float) - self.x0 - 0.5 * self.d_long
        return self.y0 + self.sign * self.d_lat / (1.0 + np.exp(-self.tau * (xt + self.b)))

    def heading(self, x):
        xt = np.asarray(x, float) - self.x0 - 0.5 * self.d_long
        s = 1.0 / (1.0 + np.exp(-self.tau * (xt + self.b)))
        return np.arctan(self.sign * self.d_lat * self.tau * s * (1 - s))

    def sample(self, spacing: float):
        xs = self.x0 + np.arange(0.0, self.d_long + 1e-9, spacing)
        return xs, self.y(xs)


def sigmoid_path(x0: float, y0: float, d_long_m: float, d_lat: float = LANE_WIDTH,
                 tau: float | None = None, direction: str = "right") -> SigmoidPath:
    if d_long_m <= 0 or d_lat <= 0:
        raise ConfigError("d_long and d_lat must be positive")
    min_tau = MIN_TAU_FACTOR / d_long_m
    if tau is None:
        tau = 12.0 / d_long_m
    if tau < min_tau * (1 - 1e-12):
        raise ConfigError(f"tau={tau:.6g} too small for the 1 % endpoint rule; use tau >= {min_tau:.6g}")
    if direction not in ("left", "right"):
        raise ConfigError("direction must be 'left' or 'right'")
    return SigmoidPath(x0, y0, d_long_m, d_lat, tau, 0.0, 1.0 if direction == "right" else -1.0)


@dataclass(frozen=True)
class BicycleState:
    x: float
    y: float
    psi: float
    v: float

    def array(self):
        return np.array([self.x, self.y, self.psi, self.v])


def bicycle_step(state: BicycleState, accel: float, steer: float, dt: float = DT,
                 wheelbase: float = 2.7) -> BicycleState:
    x = state.x + state.v * math.cos(state.psi) * dt
    y = state.y + state.v * math.sin(state.psi) * dt
    psi = state.psi + state.v / wheelbase * math.tan(steer) * dt
    v = max(state.v + accel * dt, 0.0)
    return BicycleState(x, y, psi, v)


def lane_lines(n_lanes: int = 4, lane_width: float = LANE_WIDTH):
    return np.arange(n_lanes + 1) * lane_width


@dataclass
class MpcConfig:
    horizon: int = 20
    dt: float = DT
    wheelbase: float = 2.7
    w_y: float = 2.0
    w_psi: float = 5.0
    w_v: float = 0.2
    w_a: float = 0.05
    w_delta: float = 1.0
    w_ddelta: float = 20.0
    w_da: float = 0.2
    w_pot: float = 1.0
    a_l: float = 2.0
    sigma_l: float = 0.5
    a_o: float = 10.0
    sigma_x: float = 8.0
    sigma_y: float = 1.2
    a_min: float = -4.0
    a_max: float = 3.0
    delta_max: float = 0.5
    max_iter: int = 200
    fd_step: float = 1e-6
    tol: float = 1e-5

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.a_min < self.a_max or self.delta_max <= 0:
            raise ConfigError("control bounds must be ordered")

    def pack(self, path: SigmoidPath | None, v_ref: float, a_prev: float = 0.0, d_prev: float = 0.0,
             y_hold: float = 0.0) -> np.ndarray:
        """Parameter vector for the kernels. ``path=None`` tracks the line ``y = y_hold``."""
        p = np.zeros(P_LEN)
        p[P_DT], p[P_WB] = self.dt, self.wheelbase
        if path is None:
            p[P_RX0], p[P_RY0], p[P_DLONG], p[P_DLAT], p[P_TAU] = 0.0, y_hold, 1.0, 0.0, 1.0
        else:
            p[P_RX0], p[P_RY0], p[P_DLONG] = path.x0, path.y0, path.d_long
            p[P_DLAT], p[P_TAU] = path.sign * path.d_lat, path.tau
        p[P_VREF] = v_ref
        p[P_WY], p[P_WPSI], p[P_WV], p[P_WA] = self.w_y, self.w_psi, self.w_v, self.w_a
        p[P_WDELTA], p[P_WDDELTA], p[P_WDA], p[P_WPOT] = self.w_delta, self.w_ddelta, self.w_da, self.w_pot
        p[P_AL], p[P_SIGL], p[P_AO], p[P_SIGX], p[P_SIGY] = (self.a_l, self.sigma_l, self.a_o,
                                                             self.sigma_x, self.sigma_y)
        p[P_APREV], p[P_DPREV] = a_prev, d_prev
        return p


def potential_cost(x: float, y: float, lines, obstacles=(), config: MpcConfig = MpcConfig()) -> float:
    """Lane-line plus obstacle potential at one point; ``obstacles`` is (M, 2)."""
    obs = np.ascontiguousarray(np.asarray(obstacles, float).reshape(-1))
    m = len(obs) // 2
    p = config.pack(None, 0.0)
    return kernels.potential(float(x), float(y), np.ascontiguousarray(lines, dtype=float), obs, m, 0, p)


@dataclass
class MpcSolution:
    controls: np.ndarray  # (H, 2): accel, steer
    cost_history: list = field(default_factory=list)
    iterations: int = 0

    @property
    def first(self):
        return float(self.controls[0, 0]), float(self.controls[0, 1])


def _project(u, cfg: MpcConfig):
    u = u.reshape(-1, 2)
    return np.column_stack([np.clip(u[:, 0], cfg.a_min, cfg.a_max),
                            np.clip(u[:, 1], -cfg.delta_max, cfg.delta_max)]).reshape(-1)


def mpc_solve(state: BicycleState, path: SigmoidPath | None, obstacles=None, config: MpcConfig = MpcConfig(),
              v_ref: float | None = None, warm=None, a_prev: float = 0.0, d_prev: float = 0.0,
              lines=None, y_hold: float | None = None) -> MpcSolution:
    """Projected gradient descent over the control sequence.

    ``obstacles`` is the predicted obstacle centres per horizon step,
    shape (H, M, 2), or None. Each accepted iterate lowers the cost.
    """
    H = config.horizon
    s0 = np.ascontiguousarray(state.array())
    p = config.pack(path, state.v if v_ref is None else v_ref, a_prev, d_prev,
                    state.y if y_hold is None else y_hold)
    ln = np.ascontiguousarray(np.zeros(0) if lines is None else lines, dtype=float)
    if obstacles is None or np.size(obstacles) == 0:
        obs, m = np.zeros(0), 0
    else:
        o = np.asarray(obstacles, float)
        if o.ndim != 3 or o.shape[0] < H or o.shape[2] != 2:
            raise ConfigError(f"obstacles must be (H>={H}, M, 2), got {o.shape}")
        obs, m = np.ascontiguousarray(o[:H].reshape(-1)), o.shape[1]
    u = np.zeros(2 * H) if warm is None else np.asarray(warm, float).reshape(-1)[:2 * H].copy()
    if len(u) < 2 * H:
        u = np.concatenate([u, np.tile(u[-2:] if len(u) else [0.0, 0.0], H - len(u) // 2)])
    u = np.ascontiguousarray(_project(u, config))
    cost = kernels.mpc_cost(s0, u, p, ln, obs, m)
    if not math.isfinite(cost):
        raise NumericError("MPC cost is not finite at the initial guess")
    history = [cost]
    step = 0.05
    it = 0
    for it in range(1, config.max_iter + 1):
        g = kernels.mpc_gradient(s0, u, p, ln, obs, m, config.fd_step)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"MPC gradient not finite at iteration {it}")
        accepted = False
        while step > 1e-10:
            trial = np.ascontiguousarray(_project(u - step * g, config))
            c_t = kernels.mpc_cost(s0, trial, p, ln, obs, m)
            if math.isfinite(c_t) and c_t <= cost - 1e-4 * float(g @ (u - trial)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        moved = float(np.max(np.abs(trial - u)))
        u, cost = trial, c_t
        history.append(cost)
        step *= 2.0
        if moved < config.tol:
            break
    return MpcSolution(u.reshape(H, 2), history, it)


def collides(ego_xy, other_xy, length: float = VEHICLE_LENGTH, width: float = VEHICLE_WIDTH) -> bool:
    """Axis-aligned footprint overlap of two equally sized vehicles."""
    return abs(ego_xy[0] - other_xy[0]) < length and abs(ego_xy[1] - other_xy[1]) < width


@dataclass
class TrackResult:
    states: np.ndarray  # (steps+1, 4)
    controls: np.ndarray  # (steps, 2)
    reference_y: np.ndarray
    solver_iterations: list


def track(path: SigmoidPath, state: BicycleState, steps: int, config: MpcConfig = MpcConfig(),
          v_ref: float | None = None, obstacle_fn=None, lines=None) -> TrackResult:
    """Closed-loop receding-horizon tracking; ``obstacle_fn(k)`` gives (H, M, 2) at step k."""
    states = [state.array()]
    controls, iters = [], []
    warm = None
    a_prev = d_prev = 0.0
    v_ref = state.v if v_ref is None else v_ref
    for k in range(steps):
        obs = obstacle_fn(k) if obstacle_fn is not None else None
        sol = mpc_solve(state, path, obs, config, v_ref, warm, a_prev, d_prev, lines)
        a, d = sol.first
        state = bicycle_step(state, a, d, config.dt, config.wheelbase)
        states.append(state.array())
        controls.append((a, d))
        iters.append(sol.iterations)
        warm = np.vstack([sol.controls[1:], sol.controls[-1:]])
        a_prev, d_prev = a, d
    st = np.array(states)
    return TrackResult(st, np.array(controls), path.y(st[:, 0]), iters)
