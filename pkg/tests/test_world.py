import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _util import disc, load_doc, minimal_doc, scenario, square
from dynnav.scenario import ScenarioError, load_scenario
from dynnav.world import (
    ControlCommand,
    ObstacleScript,
    Pose2D,
    RobotConfig,
    RobotState,
    SensorConfig,
    WorldState,
    body_to_world,
    clearance,
    initial_world,
    obstacle_poses,
    path_length,
    simulate_lidar,
    step_world,
    wrap_angle,
)


# --- poses and angles ---------------------------------------------------

@given(st.floats(-1e4, 1e4))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_pose_theta_normalized():
    assert Pose2D(0, 0, -math.pi).theta == math.pi
    assert Pose2D(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)


# --- scenario loading ---------------------------------------------------

def test_minimal_scenario_round_trip(tmp_path):
    p = tmp_path / "one.json"
    p.write_text(json.dumps(minimal_doc()))
    sc = load_scenario(p)
    assert len(sc.static_obstacles) == 1 and not sc.dynamic_obstacles
    assert sc.static_obstacles[0].shape == "disc"
    assert sc.name == "one"
    assert len(sc.waypoints) == 5


def test_four_waypoints_rejected():
    doc = minimal_doc(waypoints=[[0, 0], [1, 0], [2, 0], [3, 0]])
    with pytest.raises(ScenarioError, match="waypoints: expected 5"):
        load_doc(doc)


@pytest.mark.parametrize("dt", [0, -0.1])
def test_nonpositive_dt_rejected(dt):
    with pytest.raises(ScenarioError, match="dt"):
        load_doc(minimal_doc(dt=dt))


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "map": {\n  "bounds": [0, 0, 1 1]\n}')
    with pytest.raises(ScenarioError, match=r"bad\.json:3:"):
        load_scenario(p)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d["obstacles"].append(
        {"shape": "disc", "radius": 0.3, "motion": "piecewise_linear",
         "waypath": [[0, 1, 1], [0, 2, 2]]}), "strictly increasing"),
    (lambda d: d["obstacles"].append(
        {"shape": "polygon", "motion": "static", "position": [3, 3],
         "vertices": [[0, 0], [0, 1], [1, 1], [1, 0]]}), "counterclockwise"),
    (lambda d: d["robot"].update(goal=[100, 0]), "robot.goal"),
    (lambda d: d["sensor"].update(z_band=[1.0, 0.5]), "z_band"),
    (lambda d: d["sensor"].update(n_beams=0), "n_beams"),
    (lambda d: d.pop("seed"), "seed"),
])
def test_validation_names_invariant(mutate, message):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(ScenarioError, match=message):
        load_doc(doc)


def test_canonical_scenarios_load():
    for name in ("freespace", "crossing", "dense-static", "dense-dynamic"):
        sc = load_scenario(name)
        assert sc.name == name and len(sc.waypoints) == 5 and sc.dt > 0


def test_jitter_is_seeded():
    a = load_scenario("crossing", seed=3).dynamic_obstacles[0].waypath
    b = load_scenario("crossing", seed=3).dynamic_obstacles[0].waypath
    c = load_scenario("crossing", seed=4).dynamic_obstacles[0].waypath
    assert a == b and a != c


# --- stepping -----------------------------------------------------------

def test_straight_step():
    sc = scenario()
    w = step_world(initial_world(sc), sc, ControlCommand(1.0, 0.0), 0.1)
    p = w.robot.pose
    assert (p.x, p.y, p.theta) == pytest.approx((0.1, 0.0, 0.0), abs=1e-12)
    assert w.time == pytest.approx(0.1)


def test_pure_rotation():
    sc = scenario(robot=RobotConfig(omega_max=4.0))
    w = step_world(initial_world(sc), sc, ControlCommand(0.0, math.pi), 1.0)
    p = w.robot.pose
    assert (p.x, p.y) == (0.0, 0.0)
    assert p.theta == pytest.approx(math.pi, abs=1e-12)


def test_controls_saturate():
    sc = scenario()
    w = step_world(initial_world(sc), sc, ControlCommand(5.0, -9.0), 0.1)
    assert w.robot.v == sc.robot.v_max
    assert w.robot.omega == -sc.robot.omega_max


def test_step_rejects_nonpositive_dt():
    sc = scenario()
    with pytest.raises(ValueError):
        step_world(initial_world(sc), sc, ControlCommand(1.0, 0.0), 0.0)


def test_overlap_sets_collided():
    sc = scenario(static=[disc(0.7, 0.0, 0.5)])
    assert initial_world(sc).collided
    sc = scenario(static=[disc(0.95, 0.0, 0.5)])
    w = initial_world(sc)
    assert not w.collided
    w = step_world(w, sc, ControlCommand(1.0, 0.0), 0.1)
    assert w.collided


def test_dynamic_obstacle_follows_waypath():
    ob = ObstacleScript("disc", ((0.0, 0.0, 5.0), (10.0, 10.0, 5.0)), radius=0.3)
    sc = scenario(dynamic=[ob])
    w = initial_world(sc)
    for _ in range(25):
        w = step_world(w, sc, ControlCommand(0.0, 0.0), 0.1)
    assert w.obstacles[0].position == pytest.approx([2.5, 5.0])
    assert w.obstacles[0].velocity == pytest.approx([1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.2, 1.2), st.floats(-math.pi, math.pi), st.integers(1, 30))
def test_kinematic_consistency_straight(v, theta, n):
    sc = scenario(start=(1.0, -2.0, theta))
    w = initial_world(sc)
    for _ in range(n):
        prev = w.robot.pose
        w = step_world(w, sc, ControlCommand(v, 0.0), 0.1)
        p = w.robot.pose
        assert p.theta == prev.theta
        assert abs(math.hypot(p.x - prev.x, p.y - prev.y) - abs(v) * 0.1) < 1e-12


def _rollout(sc, controls, seed):
    rng = np.random.default_rng(seed)
    w = initial_world(sc)
    states, scans = [w], []
    for v, om in controls:
        scans.append(simulate_lidar(w, sc, rng))
        w = step_world(w, sc, ControlCommand(v, om), sc.dt)
        states.append(w)
    return states, scans


def test_determinism_bitwise():
    sc = load_scenario("dense-dynamic")
    ctl = np.random.default_rng(5).uniform([-0.5, -1.0], [1.2, 1.0], size=(20, 2))
    a_states, a_scans = _rollout(sc, ctl, 11)
    b_states, b_scans = _rollout(sc, ctl, 11)
    for a, b in zip(a_states, b_states):
        assert a.robot == b.robot and a.time == b.time and a.collided == b.collided
        for oa, ob in zip(a.obstacles, b.obstacles):
            assert oa.position.tobytes() == ob.position.tobytes()
    for a, b in zip(a_scans, b_scans):
        assert a.points.tobytes() == b.points.tobytes()


# --- lidar --------------------------------------------------------------

def _quiet_sensor(**kw):
    return SensorConfig(range_noise_sigma=0.0, **kw)


def test_single_beam_hits_wall():
    wall = ObstacleScript("polygon", ((0.0, 2.5, 0.0),),
                          vertices=((-0.5, -5.0), (0.5, -5.0), (0.5, 5.0), (-0.5, 5.0)))
    sc = scenario(static=[wall], sensor=_quiet_sensor(n_beams=1, beam_z_levels=(0.5,)))
    scan = simulate_lidar(initial_world(sc), sc, np.random.default_rng(0))
    assert scan.points.shape == (1, 3)
    assert scan.points[0] == pytest.approx([2.0, 0.0, 0.5], abs=1e-12)


def test_no_obstacles_in_range_gives_empty_scan():
    sc = scenario(static=[disc(15.0, 0.0)])
    scan = simulate_lidar(initial_world(sc), sc, np.random.default_rng(0))
    assert scan.points.shape == (0, 3)


def test_scan_seeded():
    sc = scenario(static=[disc(3.0, 1.0), square(-2.0, -2.0)])
    w = initial_world(sc)
    a = simulate_lidar(w, sc, np.random.default_rng(4)).points
    b = simulate_lidar(w, sc, np.random.default_rng(4)).points
    assert a.tobytes() == b.tobytes()


def test_short_obstacle_invisible_above_its_height():
    sc = scenario(static=[disc(3.0, 0.0, height=0.3)], sensor=_quiet_sensor())
    scan = simulate_lidar(initial_world(sc), sc, np.random.default_rng(0))
    assert set(np.unique(scan.points[:, 2])) == {0.05}


@st.composite
def random_worlds(draw):
    obs = []
    for k in range(draw(st.integers(1, 5))):
        x = draw(st.floats(-8, 8))
        y = draw(st.floats(-8, 8))
        if math.hypot(x, y) < 1.5:
            x += 3.0
        if draw(st.booleans()):
            obs.append(disc(x, y, draw(st.floats(0.1, 1.0)), oid=k))
        else:
            obs.append(square(x, y, draw(st.floats(0.1, 0.8)), oid=k))
    theta = draw(st.floats(-math.pi, math.pi))
    return scenario(static=obs, start=(0.0, 0.0, theta), sensor=_quiet_sensor(n_beams=180))


@settings(max_examples=60, deadline=None)
@given(random_worlds())
def test_lidar_soundness(sc):
    w = initial_world(sc)
    scan = simulate_lidar(w, sc, np.random.default_rng(0))
    assert np.all(np.hypot(scan.points[:, 0], scan.points[:, 1]) <= sc.sensor.max_range)
    world_xy = body_to_world(scan.points[:, :2], w.robot.pose)
    for p in world_xy:
        d = min(abs(ob.script.signed_distance(ob.position, p)) for ob in w.obstacles)
        assert d < 1e-9


# --- metrics ------------------------------------------------------------

def test_path_length_examples():
    assert path_length([Pose2D(0, 0), Pose2D(3, 0), Pose2D(3, 4)]) == 7.0
    assert path_length([Pose2D(1, 2, 0.3)]) == 0.0
    assert path_length([(0.0, 0.0), (97.5, 0.0)]) == 97.5
    straight = [(0.1 * k, 0.0) for k in range(976)]
    assert path_length(straight) == pytest.approx(97.5, abs=1e-9)


def _two_disc_world(center_x, r_robot=0.5, r_ob=0.5):
    ob = disc(center_x, 0.0, r_ob)
    return WorldState(0.0, RobotState(Pose2D(0, 0)), obstacle_poses([ob], 0.0), robot_radius=r_robot)


def test_clearance_examples():
    assert clearance(_two_disc_world(2.0)) == pytest.approx(1.0, abs=1e-12)
    assert clearance(_two_disc_world(1.0)) == pytest.approx(0.0, abs=1e-12)
    assert clearance(_two_disc_world(0.9)) == pytest.approx(-0.1, abs=1e-12)


def test_clearance_polygon():
    ob = square(2.0, 0.0, 0.5)
    w = WorldState(0.0, RobotState(Pose2D(0, 0)), obstacle_poses([ob], 0.0), robot_radius=0.4)
    assert clearance(w) == pytest.approx(1.1)
    w = WorldState(0.0, RobotState(Pose2D(2, 0.2)), obstacle_poses([ob], 0.0), robot_radius=0.4)
    assert clearance(w) == pytest.approx(-0.7)


@settings(max_examples=40, deadline=None)
@given(random_worlds(), st.lists(st.tuples(st.floats(-1.2, 1.2), st.floats(-1.5, 1.5)),
                                 min_size=1, max_size=30))
def test_collided_iff_negative_clearance(sc, controls):
    w = initial_world(sc)
    assert w.collided == (clearance(w) < 0)
    for v, om in controls:
        w = step_world(w, sc, ControlCommand(v, om), 0.1)
        assert w.collided == (clearance(w) < 0)
