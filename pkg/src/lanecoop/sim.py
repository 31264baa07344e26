"""Closed-loop replay: surrounding vehicles follow recorded trajectories, the
ego runs decision -> T-Rear prediction -> sigmoid reference -> MPC.

Modes
  ours                      decision model, Max-Ent IRL prediction of the T-Rear
  ours_with_idm_prediction  decision model, IDM prediction of the T-Rear
  idm_mobil                 MOBIL decision, IDM prediction
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lanecoop import DT, LANE_WIDTH
from lanecoop.errors import ConfigError, FormatError
from lanecoop.planner import (
    VEHICLE_LENGTH, VEHICLE_WIDTH, BicycleState, MpcConfig, bicycle_step, collides, d_long, lane_lines,
    mpc_solve, sigmoid_path,
)

MODES = ("ours", "idm_mobil", "ours_with_idm_prediction")


@dataclass(frozen=True)
class IdmConfig:
    v0: float = 15.0
    T: float = 1.5
    a_max: float = 1.4
    b_comf: float = 2.0
    s0: float = 2.0
    delta: float = 4.0
    b_max: float = 8.0

    def __post_init__(self):
        if min(self.v0, self.T, self.a_max, self.b_comf, self.s0, self.delta, self.b_max) <= 0:
            raise ConfigError("IDM parameters must be positive")


@dataclass(frozen=True)
class MobilConfig:
    politeness: float = 0.3
    a_threshold: float = 0.2
    b_safe: float = 4.0

    def __post_init__(self):
        if not 0 <= self.politeness <= 1:
            raise ConfigError("politeness must lie in [0, 1]")
        if self.a_threshold <= 0 or self.b_safe <= 0:
            raise ConfigError("MOBIL thresholds must be positive")


def idm_accel(gap: float, v: float, v_lead: float, cfg: IdmConfig = IdmConfig()) -> float:
    """IDM acceleration; ``gap`` is bumper to bumper. The dynamic part of s* is floored at 0."""
    if gap <= 0:
        return -cfg.b_max
    s_star = cfg.s0 + max(0.0, v * cfg.T + v * (v - v_lead) / (2 * math.sqrt(cfg.a_max * cfg.b_comf)))
    a = cfg.a_max * (1 - (v / cfg.v0) ** cfg.delta - (s_star / gap) ** 2)
    return float(min(max(a, -cfg.b_max), cfg.a_max))


def idm_equilibrium_gap(v: float, cfg: IdmConfig = IdmConfig()) -> float:
    return (cfg.s0 + v * cfg.T) / math.sqrt(1 - (v / cfg.v0) ** cfg.delta)


def _acc(follower, leader, idm):
    """IDM accel of ``follower`` behind ``leader``; both (x, v) or None."""
    if follower is None:
        return 0.0
    if leader is None:
        return idm_accel(1e9, follower[1], follower[1], idm)
    return idm_accel(leader[0] - follower[0] - VEHICLE_LENGTH, follower[1], leader[1], idm)


def mobil_decide(ego, lead_cur=None, lead_tgt=None, follow_cur=None, follow_tgt=None,
                 idm: IdmConfig = IdmConfig(), mobil: MobilConfig = MobilConfig()):
    """Return ``(decision, details)``; decision 1 = LC. Vehicles are (x, v) or None."""
    a_ego = _acc(ego, lead_cur, idm)
    a_ego_new = _acc(ego, lead_tgt, idm)
    a_n = _acc(follow_tgt, lead_tgt, idm)
    a_n_new = _acc(follow_tgt, ego, idm)
    a_o = _acc(follow_cur, ego, idm)
    a_o_new = _acc(follow_cur, lead_cur, idm)
    safe = a_n_new >= -mobil.b_safe
    incentive = a_ego_new - a_ego + mobil.politeness * ((a_n_new - a_n) + (a_o_new - a_o))
    return int(safe and incentive > mobil.a_threshold), {"safe": safe, "incentive": incentive,
                                                         "new_follower_accel": a_n_new}


# ----------------------------------------------------------------- scenario


@dataclass
class Vehicle:
    vid: int
    lane: int  # 1-based, lane k spans [(k-1)L, kL]
    x: np.ndarray  # per step, replayed
    v: np.ndarray
    role: str = "other"
    style_features: np.ndarray | None = None

    def y(self, lane_width=LANE_WIDTH):
        return (self.lane - 0.5) * lane_width


@dataclass
class Scenario:
    name: str
    steps: int
    ego_x: float
    ego_v: float
    ego_lane: int
    target_lane: int
    vehicles: list
    lane_width: float = LANE_WIDTH
    n_lanes: int = 3
    dt: float = DT
    force_lc_at: float | None = None  # seconds; bypasses the decision model
    force_lk: bool = False
    history_steps: int = 20  # pre-roll frames available for the first decision window

    def vehicle(self, role):
        for v in self.vehicles:
            if v.role == role:
                return v
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name, "steps": self.steps, "dt": self.dt, "lane_width": self.lane_width,
            "n_lanes": self.n_lanes, "ego": {"x": self.ego_x, "v": self.ego_v, "lane": self.ego_lane},
            "target_lane": self.target_lane, "force_lc_at": self.force_lc_at, "force_lk": self.force_lk,
            "history_steps": self.history_steps,
            "vehicles": [{"id": v.vid, "lane": v.lane, "role": v.role, "x": [round(float(a), 6) for a in v.x],
                          "v": [round(float(a), 6) for a in v.v],
                          "style_features": None if v.style_features is None
                          else [float(a) for a in v.style_features]} for v in self.vehicles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            vehicles = [Vehicle(int(v["id"]), int(v["lane"]), np.asarray(v["x"], float),
                                np.asarray(v["v"], float), v.get("role", "other"),
                                None if v.get("style_features") is None
                                else np.asarray(v["style_features"], float)) for v in d["vehicles"]]
            sc = cls(d.get("name", "scenario"), int(d["steps"]), float(d["ego"]["x"]), float(d["ego"]["v"]),
                     int(d["ego"]["lane"]), int(d["target_lane"]), vehicles, float(d.get("lane_width", LANE_WIDTH)),
                     int(d.get("n_lanes", 3)), float(d.get("dt", DT)), d.get("force_lc_at"),
                     bool(d.get("force_lk", False)), int(d.get("history_steps", 20)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed scenario: {exc}") from None
        total = sc.steps + sc.history_steps + 1
        for v in sc.vehicles:
            if len(v.x) < total or len(v.v) < total:
                raise FormatError(f"vehicle {v.vid}: needs {total} samples (history + steps + 1)")
        if abs(sc.target_lane - sc.ego_lane) != 1:
            raise FormatError("target lane must be adjacent to the ego lane")
        return sc


# -------------------------------------------------------------- predictions


def idm_predict(tr_x, tr_v, leader, n_steps, idm: IdmConfig = IdmConfig(), dt: float = DT):
    """T-Rear rollout following ``leader`` = (x, v) extrapolated at constant speed, or a free road."""
    x = np.empty(n_steps + 1)
    v = np.empty(n_steps + 1)
    x[0], v[0] = tr_x, tr_v
    for k in range(n_steps):
        lead = None if leader is None else (leader[0] + leader[1] * k * dt, leader[1])
        a = _acc((x[k], v[k]), lead, idm)
        v[k + 1] = max(v[k] + a * dt, 0.0)
        x[k + 1] = x[k] + 0.5 * (v[k] + v[k + 1]) * dt
    return x, v


def idm_rollout(x0, v0, lead_x, lead_v, steps, idm: IdmConfig = IdmConfig(), dt: float = DT):
    """Ego car-following a replayed leader (Euler, same update as the simulator)."""
    x, v = [x0], [v0]
    for k in range(steps):
        lead = None if lead_x is None else (lead_x[k], lead_v[k])
        a = _acc((x[-1], v[-1]), lead, idm)
        x.append(x[-1] + v[-1] * dt)
        v.append(max(v[-1] + a * dt, 0.0))
    return np.array(x), np.array(v)


# ------------------------------------------------------------------- replay


@dataclass
class Models:
    style: object = None  # StyleModel
    decision: object = None  # DecisionModel
    omega: object = None  # RewardWeights


@dataclass
class RunReport:
    scenario: str
    mode: str
    decisions: list = field(default_factory=list)  # [step, t, decision, p_lc]
    lc_start_time: float | None = None
    completion_time: float | None = None
    min_gaps: dict = field(default_factory=dict)
    collision: bool = False
    max_abs_jerk: float = 0.0
    min_new_follower_accel: float | None = None
    predicted_d_long: float | None = None
    trajectory: list = field(default_factory=list)  # [t, x, y, psi, v, a, steer]
    snapshots: list = field(default_factory=list)
    reference: list = field(default_factory=list)  # LC steps: [t, y_ref, obstacle_x, obstacle_y]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _neighbors(sc: Scenario, k: int, ego_x: float, lane: int, target: int):
    """Nearest lead / follower in the current and target lanes at replay index ``k``."""
    out = {"lead_cur": None, "follow_cur": None, "lead_tgt": None, "follow_tgt": None}
    best = {key: math.inf for key in out}
    for veh in sc.vehicles:
        x = float(veh.x[k])
        for ln, lead_key, fol_key in ((lane, "lead_cur", "follow_cur"), (target, "lead_tgt", "follow_tgt")):
            if veh.lane != ln:
                continue
            d = x - ego_x
            key = lead_key if d > 0 else fol_key
            if abs(d) < best[key]:
                best[key] = abs(d)
                out[key] = veh
    return out


def _window(sc: Scenario, hist: list, k: int, lead, trear, lane_width):
    """The 10-feature window ending at replay index ``k`` (ego history in ``hist``)."""
    rows = []
    start = k - 19
    for j in range(start, k + 1):
        ex, ey, ev, ea, evl = hist[j]
        lx = lead.x[j] if lead is not None else ex + 200.0
        lv = lead.v[j] if lead is not None else ev
        tx = trear.x[j] if trear is not None else ex - 200.0
        tv = trear.v[j] if trear is not None else ev
        offset = ey - (math.floor(ey / lane_width) + 0.5) * lane_width
        rows.append([ev, ea, offset, evl, lv, tv, max(lx - ex, 0.0), max(ex - tx, 0.0), lv - ev, tv - ev])
    return np.array(rows)


def replay(sc: Scenario, models: Models = Models(), mode: str = "ours", mpc: MpcConfig = MpcConfig(),
           idm: IdmConfig = IdmConfig(), mobil: MobilConfig = MobilConfig(), n_pred: int = 50,
           snapshot_every: int = 10, capture_tol: float = 0.2, capture_hold: float = 1.0) -> RunReport:
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    needs_model = mode != "idm_mobil" and sc.force_lc_at is None and not sc.force_lk
    if needs_model and (models.decision is None or models.style is None):
        raise ConfigError(f"mode {mode!r} needs a style and a decision model")
    if mode == "ours" and not sc.force_lk and models.omega is None:
        raise ConfigError("mode 'ours' needs IRL reward weights")
    L = sc.lane_width
    lines = lane_lines(sc.n_lanes, L)
    h0 = sc.history_steps
    lane = sc.ego_lane
    target = sc.target_lane
    y_lane = (lane - 0.5) * L
    # ego pre-roll at constant speed so the first decision has a full window
    hist = [(sc.ego_x - sc.ego_v * (h0 - j) * sc.dt, y_lane, sc.ego_v, 0.0, 0.0) for j in range(h0 + 1)]
    state = BicycleState(sc.ego_x, y_lane, 0.0, sc.ego_v)
    rep = RunReport(sc.name, mode)
    phase = "LK"
    path = obs_trear = None
    v_ref_lc = sc.ego_v
    warm = None
    a_prev = d_prev = 0.0
    lc_step = None
    capture_run = 0
    hold_steps = int(round(capture_hold / sc.dt))
    y_target = (target - 0.5) * L
    min_gap = {}
    accs = []
    for step in range(sc.steps):
        k = h0 + step  # replay index of the current instant
        t = round(step * sc.dt, 10)
        nb = _neighbors(sc, k, state.x, lane, target)
        decision, p_lc = 0, None
        if phase == "LK" and not sc.force_lk:
            if sc.force_lc_at is not None:
                decision = int(t >= sc.force_lc_at - 1e-9)
            elif mode == "idm_mobil":
                pair = lambda v: None if v is None else (float(v.x[k]), float(v.v[k]))  # noqa: E731
                decision, info = mobil_decide((state.x, state.v), pair(nb["lead_cur"]), pair(nb["lead_tgt"]),
                                              pair(nb["follow_cur"]), pair(nb["follow_tgt"]), idm, mobil)
            else:
                from lanecoop.decision import predict_proba
                from lanecoop.style import predict_style

                trear = nb["follow_tgt"]
                sf = trear.style_features if trear is not None and trear.style_features is not None else None
                if sf is None:
                    raise ConfigError("target-rear vehicle has no style features in the scenario")
                label, _ = predict_style(models.style, sf)
                win = _window(sc, hist, k, nb["lead_cur"], trear, L)
                p, _ = predict_proba(models.decision, win[None], np.array([int(label)]))
                p_lc = float(p[0])
                decision = int(p_lc >= 0.5)
            rep.decisions.append([step, t, decision, p_lc])
        if phase == "LK" and decision == 1:
            phase, lc_step = "LC", step
            rep.lc_start_time = t
            trear = nb["follow_tgt"]
            if trear is None:
                pred_x = np.array([state.x - 100 + state.v * j * sc.dt for j in range(n_pred + 1)])
            elif mode == "ours":
                from lanecoop.irl import predict

                ego_future = state.x + state.v * np.arange(n_pred + 1) * sc.dt
                pred_x = predict(float(trear.x[k]), float(trear.v[k]), ego_future, models.omega, n_pred).x
            else:
                tl = _neighbors(sc, k, float(trear.x[k]), target, target)["lead_cur"]
                leader = None if tl is None else (float(tl.x[k]), float(tl.v[k]))
                pred_x, _ = idm_predict(float(trear.x[k]), float(trear.v[k]), leader, n_pred, idm, sc.dt)
            dl = d_long(pred_x, n_pred, sc.dt, ego_speed=state.v)
            rep.predicted_d_long = dl
            path = sigmoid_path(state.x, y_lane, dl, L, direction="right" if target > lane else "left")
            obs_trear = pred_x if trear is not None else None
            v_ref_lc = state.v
        if phase == "LC":
            obstacles = None
            if obs_trear is not None:
                off = step - lc_step
                idx = np.minimum(off + 1 + np.arange(mpc.horizon), len(obs_trear) - 1)
                obstacles = np.stack([obs_trear[idx], np.full(mpc.horizon, y_target)], axis=1)[:, None, :]
            sol = mpc_solve(state, path, obstacles, mpc, v_ref_lc, warm, a_prev, d_prev, lines)
            rep.reference.append([t, float(path.y(state.x)),
                                  None if obstacles is None else float(obstacles[0, 0, 0]),
                                  None if obstacles is None else y_target])
            a, d = sol.first
            warm = np.vstack([sol.controls[1:], sol.controls[-1:]])
        else:
            lead = nb["lead_cur"]
            a = _acc((state.x, state.v), None if lead is None else (float(lead.x[k]), float(lead.v[k])), idm)
            d = 0.0
        accs.append(a)
        new = bicycle_step(state, a, d, sc.dt, mpc.wheelbase)
        if phase == "LK":  # lane keeping: no lateral drift
            new = BicycleState(new.x, state.y, 0.0, new.v)
        rep.trajectory.append([t, state.x, state.y, state.psi, state.v, a, d])
        state = new
        a_prev, d_prev = a, d
        v_lat = (new.y - hist[-1][1]) / sc.dt
        hist.append((new.x, new.y, new.v, a, v_lat))
        k1 = k + 1
        for veh in sc.vehicles:
            vy = veh.y(L)
            dist = math.hypot(float(veh.x[k1]) - new.x, vy - new.y)
            min_gap[veh.vid] = min(min_gap.get(veh.vid, math.inf), dist)
            if collides((new.x, new.y), (float(veh.x[k1]), vy)):
                rep.collision = True
        if phase == "LC":
            trear = nb["follow_tgt"]
            if trear is not None:
                a_f = _acc((float(trear.x[k1]), float(trear.v[k1])), (new.x, new.v), idm)
                rep.min_new_follower_accel = a_f if rep.min_new_follower_accel is None \
                    else min(rep.min_new_follower_accel, a_f)
            if abs(new.y - y_target) < capture_tol:
                capture_run += 1
                if capture_run >= hold_steps:
                    rep.completion_time = round((step + 1 - hold_steps + 1 - lc_step) * sc.dt, 10)
                    phase = "DONE"
                    lane = target
                    state = BicycleState(state.x, y_target, 0.0, state.v)
            else:
                capture_run = 0
        if step % snapshot_every == 0:
            rep.snapshots.append({"step": step, "t": t, "ego": [new.x, new.y, new.psi, new.v],
                                  "vehicles": [[veh.vid, float(veh.x[k1]), veh.y(L)] for veh in sc.vehicles]})
    rep.min_gaps = {str(k): v for k, v in sorted(min_gap.items())}
    if len(accs) > 1:
        rep.max_abs_jerk = float(np.max(np.abs(np.diff(accs))) / sc.dt)
    return rep
