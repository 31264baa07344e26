import json
import math
from dataclasses import replace

import numpy as np
import pytest

from lanecoop import irl, synthetic
from lanecoop.errors import ConfigError, FormatError
from lanecoop.report import validate
from lanecoop.sim import (
    IdmConfig, MobilConfig, Models, Scenario, Vehicle, idm_accel, idm_equilibrium_gap, idm_rollout,
    mobil_decide, replay,
)


def test_idm_free_road_equilibrium():
    assert idm_accel(1e9, 15.0, 15.0) == pytest.approx(0.0, abs=1e-9)


def test_idm_standstill():
    assert idm_accel(1e9, 0.0, 0.0) == pytest.approx(IdmConfig().a_max)


def test_idm_equilibrium_gap_closed_form():
    for v in (5.0, 10.0, 13.0):
        s = idm_equilibrium_gap(v)
        assert idm_accel(s, v, v) == pytest.approx(0.0, abs=1e-9)


def test_idm_emergency_brake():
    assert idm_accel(0.0, 10.0, 10.0) == -IdmConfig().b_max
    assert idm_accel(-1.0, 10.0, 10.0) == -IdmConfig().b_max


def test_idm_config_checked():
    with pytest.raises(ConfigError):
        IdmConfig(T=0)
    with pytest.raises(ConfigError):
        MobilConfig(politeness=1.5)


def test_mobil_empty_target_slow_leader():
    d, info = mobil_decide((0.0, 13.0), lead_cur=(15.0, 5.0))
    assert d == 1 and info["safe"]


def test_mobil_safety_veto():
    d, info = mobil_decide((0.0, 13.0), lead_cur=(15.0, 5.0), follow_tgt=(-3.0, 15.0))
    assert d == 0 and not info["safe"]


def test_mobil_zero_politeness_is_egoistic():
    ego, lc, ft = (0.0, 13.0), (20.0, 8.0), (-30.0, 13.0)
    _, a = mobil_decide(ego, lead_cur=lc, follow_tgt=ft, mobil=MobilConfig(politeness=0.0))
    a_ego = idm_accel(20.0 - 4.5, 13.0, 8.0)
    a_new = idm_accel(1e9, 13.0, 13.0)
    assert a["incentive"] == pytest.approx(a_new - a_ego)


def _follow_scene(steps=60, h=20):
    n = steps + h + 1
    v = np.full(n, 10.0)
    x = 30.0 - 10.0 * h * 0.1 + 10.0 * np.arange(n) * 0.1
    return Scenario("follow", steps, 0.0, 13.0, 2, 1, [Vehicle(1, 2, x, v, "lead")], force_lk=True,
                    history_steps=h)


def test_forced_lk_equals_idm_rollout():
    sc = _follow_scene()
    rep = replay(sc, Models(), "ours")
    x_ref, v_ref = idm_rollout(0.0, 13.0, sc.vehicles[0].x[20:], sc.vehicles[0].v[20:], sc.steps)
    traj = np.array(rep.trajectory)
    assert np.array_equal(traj[:, 1], x_ref[:-1]) and np.array_equal(traj[:, 4], v_ref[:-1])
    assert np.all(traj[:, 2] == traj[0, 2])
    assert rep.lc_start_time is None and rep.completion_time is None


def test_scenario_round_trip_and_validation():
    sc = synthetic.case_study_scene()
    back = Scenario.from_dict(json.loads(json.dumps(sc.to_dict())))
    assert back.steps == sc.steps and np.allclose(back.vehicles[1].x, sc.vehicles[1].x, atol=1e-6)
    d = sc.to_dict()
    d["target_lane"] = 4
    with pytest.raises(FormatError):
        Scenario.from_dict(d)
    d = sc.to_dict()
    d["vehicles"][0]["x"] = d["vehicles"][0]["x"][:10]
    with pytest.raises(FormatError):
        Scenario.from_dict(d)


@pytest.fixture(scope="module")
def omega():
    demos, nz = synthetic.yield_demos(80, 42)
    return irl.fit_weights(demos, normalizer=nz).weights


@pytest.fixture(scope="module")
def case_runs(omega):
    sc = synthetic.case_study_scene()
    m = Models(omega=omega)
    return replay(sc, m, "ours"), replay(sc, m, "ours_with_idm_prediction")


def test_case_study_irl_faster(case_runs):
    ours, base = case_runs
    assert ours.completion_time > 0 and base.completion_time > 0
    assert ours.completion_time <= 0.8 * base.completion_time
    assert ours.predicted_d_long < base.predicted_d_long
    assert not ours.collision


def test_snapshots_every_second(case_runs):
    ours, _ = case_runs
    steps = [s["step"] for s in ours.snapshots]
    assert steps == list(range(0, 150, 10))


def test_run_report_validates(case_runs):
    from lanecoop.io import provenance

    ours, _ = case_runs
    validate({"_provenance": provenance(42), **json.loads(json.dumps(ours.to_dict()))}, "run_report")
    bad = {"_provenance": provenance(42), **ours.to_dict(), "mode": "warp"}
    with pytest.raises(FormatError):
        validate(bad, "run_report")


def test_replay_deterministic(omega):
    sc = synthetic.case_study_scene(steps=60)
    a = replay(sc, Models(omega=omega), "ours").to_dict()
    b = replay(sc, Models(omega=omega), "ours").to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_idm_mobil_respects_safety():
    rep = replay(synthetic.open_gap_scene(), Models(), "idm_mobil")
    if rep.min_new_follower_accel is not None:
        assert rep.min_new_follower_accel >= -MobilConfig().b_safe
    assert not rep.collision


def test_modes_need_models():
    with pytest.raises(ConfigError):
        replay(synthetic.blocked_scene(), Models(), "ours")
    with pytest.raises(ConfigError):
        replay(synthetic.blocked_scene(), Models(), "teleport")
