"""Kinematic stepping against exact box arithmetic."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from dismantle.assembly_io import build_problem
from dismantle.geometry import mesh_from_boxes
from dismantle.simulation import (ALL_ACTIONS, COLLISION, DISASSEMBLED,
                                  PATH_TIMEOUT, ROTATIONS, SIM_CALL_COST,
                                  SIM_STEP_COST, STALLED, TRANSLATIONS, Action,
                                  Pose, SimConfig, VirtualClock, WallClock,
                                  WorldState, action_from_name,
                                  is_disassembled, make_clock, max_penetration,
                                  simulate)

from _oracles import union_penetration

# authored channel: slider boxed in with 0.25 of clearance on -x/+x/-y,
# open above, free to slide out along z
ANCHOR_BOXES = [
    ((3.0, 3.0, 3.0), (6.0, 3.4, 5.0)),      # floor
    ((3.0, 3.4, 3.0), (3.4, 4.6, 5.0)),      # wall -x
    ((5.6, 3.4, 3.0), (6.0, 4.6, 5.0)),      # wall +x
]
SLIDER_BOXES = [((3.65, 3.65, 3.4), (5.35, 4.4, 4.6))]


def _channel_problem():
    return build_problem("channel", [
        ("anchor", mesh_from_boxes(ANCHOR_BOXES)),
        ("slider", mesh_from_boxes(SLIDER_BOXES)),
    ], normalize=False)


@pytest.fixture(scope="module")
def channel():
    return _channel_problem()


def _act(name: str) -> Action:
    return action_from_name(name)


def _steps(path) -> int:
    return len(path.waypoints) - 1


# ---------------------------------------------------------------------------
# translational stepping


@pytest.mark.parametrize("name,axis,sign", [("-X", 0, -1), ("+X", 0, 1),
                                            ("-Y", 1, -1)])
def test_translation_stops_one_step_before_penetration(channel, name, axis,
                                                       sign):
    cfg = SimConfig()
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act(name), cfg)
    assert outcome.tag == COLLISION
    assert outcome.blockers == ("anchor",)
    # oracle: largest step count whose exact penetration stays in contact
    k = _steps(path)
    accepted = np.zeros(3)
    accepted[axis] = sign * cfg.path_step * k
    rejected = np.zeros(3)
    rejected[axis] = sign * cfg.path_step * (k + 1)
    assert union_penetration(SLIDER_BOXES, ANCHOR_BOXES, accepted) <= \
        cfg.penetration_threshold
    assert union_penetration(SLIDER_BOXES, ANCHOR_BOXES, rejected) > \
        cfg.penetration_threshold
    assert k == 2                      # 0.25 gap, 0.1 steps, stop at 0.2
    assert np.allclose(path.displacement, accepted)


def test_free_direction_disassembles(channel):
    cfg = SimConfig()
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("+Y"), cfg)
    assert outcome.tag == DISASSEMBLED
    # slider bottom 3.65 must strictly clear the channel hull top 4.6
    assert _steps(path) == 10
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("+Z"), cfg)
    assert outcome.tag == DISASSEMBLED
    # slider back 3.4 must strictly clear the channel hull front 5.0
    assert _steps(path) == 17


def test_immediate_collision_keeps_start_pose():
    # same channel, slider dropped to a 0.05 floor gap: the very first
    # 0.1 step already penetrates, so no waypoint is ever accepted
    problem = build_problem("tight", [
        ("anchor", mesh_from_boxes(ANCHOR_BOXES)),
        ("slider", mesh_from_boxes([((3.65, 3.45, 3.4), (5.35, 4.2, 4.6))])),
    ], normalize=False)
    _, path, outcome = simulate(problem, problem.initial_state, "slider",
                                _act("-Y"), SimConfig())
    assert outcome.tag == COLLISION and outcome.blockers == ("anchor",)
    assert len(path.waypoints) == 1
    assert np.allclose(path.displacement, 0.0)


def test_collision_blockers_name_every_offender():
    # block wedged between two plates: moving +x penetrates both at once
    problem = build_problem("pinch", [
        ("left", mesh_from_boxes([((3.0, 3.0, 3.0), (3.4, 5.0, 5.0))])),
        ("right", mesh_from_boxes([((4.65, 3.0, 3.0), (5.0, 5.0, 5.0))])),
        ("block", mesh_from_boxes([((3.45, 3.6, 3.6), (4.6, 4.4, 4.4))])),
        ("far", mesh_from_boxes([((8.0, 8.0, 8.0), (8.5, 8.5, 8.5))])),
    ], normalize=False)
    _, _, outcome = simulate(problem, problem.initial_state, "block",
                             _act("+X"), SimConfig())
    assert outcome.tag == COLLISION
    assert outcome.blockers == ("right",)
    _, _, outcome = simulate(problem, problem.initial_state, "block",
                             _act("-X"), SimConfig())
    assert outcome.tag == COLLISION
    assert outcome.blockers == ("left",)


# ---------------------------------------------------------------------------
# rotation


def test_full_turn_stalls_against_touching_part():
    # spectator sits on top of the spinner, z-disjoint from its sweep
    problem = build_problem("spin", [
        ("spinner", mesh_from_boxes([((4.0, 4.0, 4.0), (5.0, 5.0, 5.0))])),
        ("lid", mesh_from_boxes([((3.8, 3.8, 5.0), (5.2, 5.2, 5.6))])),
    ], normalize=False)
    cfg = SimConfig()
    _, path, outcome = simulate(problem, problem.initial_state, "spinner",
                                _act("+RZ"), cfg)
    assert outcome.tag == STALLED
    assert outcome.blockers == ("lid",)
    k = _steps(path)
    assert k == int(np.ceil(2.0 * np.pi / cfg.rotation_step))
    # every waypoint must be the start pose spun about the posed center
    pivot = np.array([4.5, 4.5, 4.5])
    probe = np.array([[4.9, 4.1, 4.2]])
    for j, wp in enumerate(path.waypoints):
        want = Rotation.from_rotvec([0, 0, cfg.rotation_step * j]).apply(
            probe - pivot) + pivot
        assert np.allclose(wp.transform_points(probe), want, atol=1e-9)


# ---------------------------------------------------------------------------
# budgets and clocks


def test_path_timeout_interrupts_long_motion(channel):
    cfg = SimConfig(path_timeout=0.0035)
    clock = VirtualClock()
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("+Y"), cfg, clock=clock)
    assert outcome.tag == PATH_TIMEOUT
    assert _steps(path) == 4           # 1e-3 per proposed step

def test_max_travel_interrupts_long_motion(channel):
    cfg = SimConfig(max_travel=0.5)
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("+Z"), cfg)
    assert outcome.tag == PATH_TIMEOUT
    assert _steps(path) == 6           # aborts once travel exceeds 0.5


def test_virtual_clock_charges_per_call_and_step(channel):
    clock = VirtualClock()
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("-X"), SimConfig(), clock=clock)
    k = _steps(path)
    assert outcome.tag == COLLISION
    # k accepted steps plus the rejected one, each one step charge
    assert clock.now() == pytest.approx(SIM_CALL_COST
                                        + (k + 1) * SIM_STEP_COST)
    clock2 = VirtualClock()
    _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                _act("+Y"), SimConfig(), clock=clock2)
    assert outcome.tag == DISASSEMBLED
    assert clock2.now() == pytest.approx(SIM_CALL_COST
                                         + _steps(path) * SIM_STEP_COST)


def test_clock_kinds():
    assert isinstance(make_clock("virtual"), VirtualClock)
    assert isinstance(make_clock("wall"), WallClock)
    with pytest.raises(ValueError):
        make_clock("cpu")
    wall = WallClock()
    before = wall.now()
    wall.charge(100.0)                 # ignored by design
    assert wall.now() - before < 10.0


# ---------------------------------------------------------------------------
# separation and penetration measures


def test_is_disassembled_touching_counts_as_joined():
    touching = build_problem("touch", [
        ("a", mesh_from_boxes([((3.0, 3.0, 3.0), (4.0, 4.0, 4.0))])),
        ("b", mesh_from_boxes([((4.0, 3.0, 3.0), (5.0, 4.0, 4.0))])),
    ], normalize=False)
    state = touching.initial_state
    assert not is_disassembled(touching, state, "a", ("a", "b"))
    apart = state.replace(0, state[0].translated(np.array([-0.05, 0, 0])))
    assert is_disassembled(touching, apart, "a", ("a", "b"))
    # a part alone in the world is trivially out
    assert is_disassembled(touching, state, "a", ("a",))


def test_max_penetration_matches_box_oracle():
    depth = 0.15
    slabs = [
        ("lower", mesh_from_boxes([((3.0, 3.0, 3.0), (5.0, 4.0, 5.0))])),
        ("upper", mesh_from_boxes([((3.2, 4.0 - depth, 3.2),
                                    (4.8, 5.0, 4.8))])),
    ]
    problem = build_problem("overlap", slabs, normalize=False, audit=False)
    want = union_penetration([((3.0, 3.0, 3.0), (5.0, 4.0, 5.0))],
                             [((3.2, 4.0 - depth, 3.2), (4.8, 5.0, 4.8))])
    assert want == pytest.approx(depth)
    h = max(p.sdf.spacing for p in problem.parts)
    got = max_penetration(problem, problem.initial_state)
    assert got == pytest.approx(depth, abs=h)


def test_simulate_is_deterministic(channel):
    runs = []
    for _ in range(2):
        _, path, outcome = simulate(channel, channel.initial_state, "slider",
                                    _act("-X"), SimConfig())
        runs.append((outcome.tag, outcome.blockers,
                     tuple(tuple(w.translation) + tuple(w.rotation)
                           for w in path.waypoints)))
    assert runs[0] == runs[1]


# ---------------------------------------------------------------------------
# poses and actions


def test_pose_guards_and_composition():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.array([1.0, 0.0, 0.1, 0.0]))
    rng = np.random.default_rng(11)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    q = Rotation.from_rotvec(axis * 0.7).as_quat()
    pose = Pose(np.array([1.0, -2.0, 0.5]), np.roll(q, 1))   # wxyz order
    pts = rng.normal(size=(5, 3))
    assert np.allclose(pose.inverse_transform_points(
        pose.transform_points(pts)), pts, atol=1e-12)
    shifted = pose.translated(np.array([0.0, 0.0, 3.0]))
    assert np.allclose(shifted.transform_points(pts) -
                       pose.transform_points(pts), [0, 0, 3], atol=1e-12)


def test_action_catalog_order_and_names():
    assert tuple(a.name for a in TRANSLATIONS) == \
        ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
    assert tuple(a.name for a in ROTATIONS) == \
        ("+RX", "-RX", "+RY", "-RY", "+RZ", "-RZ")
    assert ALL_ACTIONS == TRANSLATIONS + ROTATIONS
    for action in ALL_ACTIONS:
        assert action_from_name(action.name) == action
        assert action.opposite().opposite() == action
        assert np.allclose(action.opposite().direction, -action.direction)
    with pytest.raises(ValueError):
        action_from_name("+Q")


def test_world_state_replace_is_persistent():
    s0 = WorldState([Pose(), Pose()])
    s1 = s0.replace(1, Pose(np.array([1.0, 0.0, 0.0])))
    assert np.allclose(s0[1].translation, 0.0)
    assert np.allclose(s1[1].translation, [1.0, 0.0, 0.0])
    assert len(s0) == len(s1) == 2
