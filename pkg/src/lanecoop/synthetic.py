"""Synthetic data standing in for NGSIM: a rule-labelled sample corpus, an
NGSIM-format CSV generator and closed-loop scenarios.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from lanecoop import DT, LANE_WIDTH
from lanecoop.ingest import FEATURE_NAMES, FT, SampleSet, stratified_split
from lanecoop.numeric import make_rng

# per style (aggressive, normal, conservative): v_mean, v_std, a_std prototypes
STYLE_PROTOTYPES = np.array([[16.0, 2.0, 0.9], [13.0, 1.2, 0.5], [10.0, 0.6, 0.25]])
# minimum target-rear gap (m) the rule accepts for a lane change, per T-Rear style
GAP_THRESHOLDS = (30.0, 20.0, 12.0)
DV_THRESHOLD = 2.0  # T-Rear may not approach faster than this (m/s)


def style_feature_vector(style: int, rng) -> np.ndarray:
    v_mean, v_std, a_std = STYLE_PROTOTYPES[style] * (1 + 0.05 * rng.standard_normal(3))
    return np.array([v_mean, 0.02 * rng.standard_normal(), v_std, a_std,
                     v_mean + 2.5 * v_std, 3.0 * a_std])


def rule_label(gap: float, dv: float, style: int) -> int:
    """LC iff the target-rear gap clears its style threshold and it is not closing fast."""
    return int(gap > GAP_THRESHOLDS[style] and dv < DV_THRESHOLD)


def decision_corpus(n: int = 3000, seed: int = 42, window: int = 20, gap_margin: float = 2.0,
                    dv_margin: float = 0.3) -> SampleSet:
    """Rule-labelled windows. The gap threshold depends on the T-Rear style,
    which appears only through its style features, so the label needs both."""
    rng = make_rng(seed)
    T = window
    tt = (np.arange(T) - (T - 1)) * DT  # seconds relative to the final frame
    feats = np.empty((n, T, len(FEATURE_NAMES)))
    sfeat = np.empty((n, 6))
    styles = np.empty(n, dtype=np.uint8)
    action = np.empty(n, dtype=np.uint8)
    for i in range(n):
        s = int(rng.integers(3))
        while True:
            gap = rng.uniform(3.0, 45.0)
            dv = rng.uniform(-3.0, 4.0)
            if abs(gap - GAP_THRESHOLDS[s]) >= gap_margin and abs(dv - DV_THRESHOLD) >= dv_margin:
                break
        v_e = rng.uniform(10.0, 18.0)
        a_e = 0.3 * rng.standard_normal()
        v_ego = v_e + a_e * tt + 0.05 * rng.standard_normal(T)
        a_ego = a_e + 0.05 * rng.standard_normal(T)
        offset = 0.3 * rng.standard_normal() + 0.02 * rng.standard_normal(T)
        v_lat = 0.05 * rng.standard_normal(T)
        v_tr = v_ego + dv + 0.05 * rng.standard_normal(T)
        d_tr = np.maximum(gap + dv * tt, 0.0)  # gap shrinks when the T-Rear is faster
        d_f0 = rng.uniform(10.0, 60.0)
        v_f = v_ego + rng.normal(0.0, 1.5) + 0.05 * rng.standard_normal(T)
        d_f = np.maximum(d_f0 + (v_f - v_ego) * (tt - tt[0]), 0.0)
        feats[i] = np.column_stack([v_ego, a_ego, np.full(T, offset), v_lat, v_f, v_tr,
                                    d_f, d_tr, v_f - v_ego, v_tr - v_ego])
        sfeat[i] = style_feature_vector(s, rng)
        styles[i] = s
        action[i] = rule_label(gap, dv, s)
    return SampleSet(feats, sfeat, styles, action, stratified_split(action, 0.2, seed),
                     np.arange(n, dtype=np.uint32), {"source": "synthetic-rule"})


# --------------------------------------------------------------- scenarios


def _speed_profile(v0: float, v1: float, ramp_s: float, n: int, start: int = 0, dt: float = DT):
    """Speed easing linearly from v0 to v1 over ``ramp_s`` seconds after index ``start``."""
    k = np.arange(n)
    frac = np.clip((k - start) * dt / ramp_s, 0.0, 1.0) if ramp_s > 0 else (k >= start).astype(float)
    return v0 + (v1 - v0) * frac


def _positions(x0: float, v, dt: float = DT):
    x = np.empty(len(v))
    x[0] = x0
    x[1:] = x0 + np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)
    return x


def case_study_scene(steps: int = 150, history: int = 20):
    """Gap-closing replica: ego in lane 2 behind a slow leader, T-Rear in lane 1
    cooperating (easing off) while its own leader drives away ahead.

    An IDM prediction has the T-Rear chase its leader; the recorded T-Rear
    actually yields to the merging ego.
    """
    from lanecoop.sim import Scenario, Vehicle

    n = steps + history + 1
    h = history
    dt = DT
    rng = make_rng(0)
    v_tr = _speed_profile(13.0, 9.5, 3.0, n, start=h)
    v_lead = np.full(n, 11.0)
    v_tl = np.full(n, 15.0)
    vehicles = [
        Vehicle(1, 2, _positions(35.0 - 11.0 * h * dt, v_lead), v_lead, "lead", style_feature_vector(1, rng)),
        Vehicle(2, 1, _positions(-10.0 - 13.0 * h * dt, v_tr), v_tr, "t_rear", style_feature_vector(2, rng)),
        Vehicle(3, 1, _positions(70.0 - 15.0 * h * dt, v_tl), v_tl, "other", style_feature_vector(0, rng)),
    ]
    return Scenario("case-study-replica", steps, 0.0, 12.0, 2, 1, vehicles, n_lanes=3, force_lc_at=0.0,
                    history_steps=h)


def blocked_scene(steps: int = 80, history: int = 20, gap: float = 5.0):
    """T-Rear sits ``gap`` metres behind the ego at equal speed: no acceptable gap."""
    from lanecoop.sim import Scenario, Vehicle

    n = steps + history + 1
    rng = make_rng(1)
    v = np.full(n, 13.0)
    start = lambda x0: _positions(x0 - 13.0 * history * DT, v)  # noqa: E731
    vehicles = [Vehicle(1, 2, start(30.0), v.copy(), "lead", style_feature_vector(1, rng)),
                Vehicle(2, 1, start(-gap), v.copy(), "t_rear", style_feature_vector(2, rng))]
    return Scenario("blocked-gap", steps, 0.0, 13.0, 2, 1, vehicles, n_lanes=3, history_steps=history)


def open_gap_scene(steps: int = 120, history: int = 20, gap: float = 40.0):
    """Wide target gap, T-Rear slower than the ego: the rule corpus says LC."""
    from lanecoop.sim import Scenario, Vehicle

    n = steps + history + 1
    rng = make_rng(2)
    v_e, v_tr = 13.0, 12.0
    lead_v = np.full(n, v_e)
    tr_v = np.full(n, v_tr)
    vehicles = [Vehicle(1, 2, _positions(40.0 - v_e * history * DT, lead_v), lead_v, "lead",
                        style_feature_vector(1, rng)),
                Vehicle(2, 1, _positions(-gap - v_tr * history * DT, tr_v), tr_v, "t_rear",
                        style_feature_vector(2, rng))]
    return Scenario("open-gap", steps, 0.0, v_e, 2, 1, vehicles, n_lanes=3, history_steps=history)


# ------------------------------------------------------------------ IRL demos

COOPERATIVE_OMEGA = np.array([0.5, -3.0, -0.5])  # safety-dominated target-rear behaviour


def yield_demos(n: int = 120, seed: int = 42, n_steps: int = 50, omega=COOPERATIVE_OMEGA):
    """T-Rear demos behind a merging ego, realized trajectories drawn from a
    Max-Ent model with ``omega`` over the pooled normalizer.

    Returns ``(demos, normalizer)``.
    """
    from lanecoop.irl import Demo, Normalizer, generate_candidates, maxent_probs

    rng = make_rng(seed)
    sets = []
    for _ in range(n):
        v0 = rng.uniform(9.0, 15.0)
        gap = rng.uniform(5.0, 25.0)
        v_e = v0 + rng.uniform(-2.0, 1.0)
        lead = gap + v_e * np.arange(n_steps + 1) * DT
        sets.append(generate_candidates(0.0, v0, lead, n_steps))
    nz = Normalizer.fit(sets)
    demos = []
    for cs in sets:
        p = maxent_probs(nz(cs.features), omega)
        k = int(rng.choice(len(p), p=p))
        demos.append(Demo(cs, cs.x[k].copy()))
    return demos, nz


# ---------------------------------------------------------------- NGSIM CSV


def _lane_of(y_m: float, lane_width: float = LANE_WIDTH) -> int:
    return int(math.floor(y_m / lane_width)) + 1


def ngsim_csv(path, n_scenes: int = 12, seed: int = 42, frames: int = 450, noise_lat: float = 0.05,
              noise_long: float = 0.1):
    """Write an NGSIM-format CSV (feet, 10 Hz) of lane-change scenes.

    Every scene owns a block of frame ids. It holds one lane changer with a lead
    in its lane and a T-Rear in the target lane, a lane keeper, a truck, and in
    some scenes a second-change car or a T-Rear far out of range. Returns a
    dict with the ground truth per scene.
    """
    rng = make_rng(seed)
    L = LANE_WIDTH
    rows = []
    truth = []
    vid = 1
    for s in range(n_scenes):
        f0 = 1 + s * (frames + 50)
        t = np.arange(frames) * DT
        kind = ("far_rear" if s % 6 == 5 else "double" if s % 6 == 4 else "normal")
        lane = int(rng.integers(2, 4))
        target = lane - 1 if rng.random() < 0.5 else lane + 1
        v_e = rng.uniform(12.0, 15.0)
        x_e0 = rng.uniform(60.0, 80.0)
        dur = rng.uniform(3.5, 7.0)
        t_mid = rng.uniform(19.0, 21.0)
        k = 2 * math.log(99) / dur
        y_e = (lane - 0.5) * L + (target - lane) * L / (1 + np.exp(-k * (t - t_mid)))
        if kind == "double":
            y_e = y_e - (target - lane) * L / (1 + np.exp(-k * (t - t_mid - 12.0)))
        x_e = x_e0 + v_e * t
        style = int(rng.integers(3))
        v_mean, v_std, a_std = STYLE_PROTOTYPES[style]
        omega = rng.uniform(0.3, 0.6)
        a_tr = a_std * math.sqrt(2) * np.sin(omega * t + rng.uniform(0, 6.28))
        v_tr = v_e + (v_mean - 13.0) * 0.3 + np.concatenate([[0], np.cumsum(a_tr[:-1] * DT)])
        rear_gap = 200.0 if kind == "far_rear" else rng.uniform(15.0, 35.0)
        x_tr = x_e0 - rear_gap + _positions(0.0, v_tr)
        vehs = [
            (vid, 2, x_e, y_e, np.full(frames, v_e), np.zeros(frames)),
            (vid + 1, 2, x_e0 + rng.uniform(25, 45) + v_e * t, np.full(frames, (lane - 0.5) * L),
             np.full(frames, v_e), np.zeros(frames)),
            (vid + 2, 2, x_tr, np.full(frames, (target - 0.5) * L), v_tr, a_tr),
            (vid + 3, 2, x_e0 + 10 + 13.0 * t, np.full(frames, 3.5 * L), np.full(frames, 13.0), np.zeros(frames)),
            (vid + 4, 3, x_e0 - 30 + 12.0 * t, np.full(frames, 0.5 * L), np.full(frames, 12.0), np.zeros(frames)),
        ]
        truth.append({"scene": s, "ego": vid, "lead": vid + 1, "t_rear": vid + 2, "kind": kind,
                      "t_mid": t_mid, "duration": dur, "style": style, "frame0": f0})
        for (v_id, cls, xs, ys, vs, accs) in vehs:
            xs_n = xs + noise_long * rng.standard_normal(frames)
            ys_n = ys + noise_lat * rng.standard_normal(frames)
            for j in range(frames):
                lane_id = _lane_of(ys[j])
                rows.append((v_id, f0 + j, ys_n[j] / FT, xs_n[j] / FT, vs[j] / FT, accs[j] / FT,
                             lane_id, cls))
        vid += 5
    order = rng.permutation(len(rows))  # shuffled on purpose: the parser must sort
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Vehicle_ID", "Frame_ID", "Total_Frames", "Local_X", "Local_Y", "v_Vel", "v_Acc",
                    "Lane_ID", "v_Class"])
        for i in order:
            v_id, f, lx, ly, vv, va, ln, cl = rows[i]
            w.writerow([v_id, f, frames, f"{lx:.3f}", f"{ly:.3f}", f"{vv:.3f}", f"{va:.3f}", ln, cl])
    return truth
