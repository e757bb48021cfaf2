"""Kinematic motion checking for single-part extraction attempts.

A simulate call drives one part along one canonical action in fixed
increments, accepting each step only while the deepest sample
penetration stays under threshold. The first rejected step ends the
path in a collision that names every blocking part; a part whose
hull separates from the hull of everything else ends in success.

Time is read off a clock object: the default virtual clock advances
by fixed charges per call and per proposed step, which makes every
reported duration (and thus every timeout decision) a deterministic
function of the search itself. Wall-clock mode is available for
humans who want real seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import (
    Aabb,
    ConvexHull,
    Mesh,
    SdfGrid,
    aabb_of_points,
    aabb_overlap,
    build_sdf,
    gjk_distance,
)

TRANSLATION = "translation"
ROTATION = "rotation"

# outcome tags
COLLISION = "collision"
DISASSEMBLED = "disassembled"
STALLED = "stalled"
PATH_TIMEOUT = "path_timeout"

# virtual-time charges (seconds) per simulate call and per proposed step
SIM_CALL_COST = 1e-3
SIM_STEP_COST = 1e-3

_IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# quaternions (wxyz) via scipy rotations


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    rv = Rotation.from_rotvec(np.asarray(axis, dtype=np.float64) * angle)
    x, y, z, w = rv.as_quat()
    return np.array([w, x, y, z])

def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    r = Rotation.from_quat(np.roll(q1, -1)) * Rotation.from_quat(np.roll(q2, -1))
    return np.roll(r.as_quat(), 1)

def quat_rotate(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    if abs(q[0] - 1.0) < 1e-15 and abs(q[1]) + abs(q[2]) + abs(q[3]) < 1e-15:
        return np.array(pts, dtype=np.float64, copy=True)
    return Rotation.from_quat(np.roll(q, -1)).apply(pts)

def quat_geodesic(q1: np.ndarray, q2: np.ndarray) -> float:
    """Rotation angle between two unit quaternions, in [0, pi]."""
    d = abs(float(np.dot(q1, q2)))
    return 2.0 * float(np.arccos(min(1.0, d)))

def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Fix the q/-q ambiguity: first nonzero component made positive."""
    for c in q:
        if abs(c) > 1e-12:
            return q if c > 0 else -q
    return q


# ---------------------------------------------------------------------------
# poses and states


@dataclass(frozen=True)
class Pose:
    """Rigid transform applied to a part's rest geometry: x -> R x + t."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: _IDENTITY_QUAT.copy())

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4).copy()
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} drifted past 1e-9")
        q /= n
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @property
    def is_identity_rotation(self) -> bool:
        return bool(
            abs(self.rotation[0] - 1.0) < 1e-15
            and np.all(np.abs(self.rotation[1:]) < 1e-15)
        )

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rotation, pts) + self.translation

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        local = np.asarray(pts, dtype=np.float64) - self.translation
        if self.is_identity_rotation:
            return local
        inv = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        return quat_rotate(inv, local)

    def translated(self, delta: np.ndarray) -> "Pose":
        return Pose(self.translation + delta, self.rotation)

    def rotated_about(self, dq: np.ndarray, pivot: np.ndarray) -> "Pose":
        t = quat_rotate(dq, (self.translation - pivot)[None, :])[0] + pivot
        return Pose(t, quat_multiply(dq, self.rotation))


IDENTITY_POSE = Pose()


class WorldState:
    """Immutable tuple of per-part poses, indexed like problem.parts."""

    __slots__ = ("poses",)

    def __init__(self, poses):
        self.poses = tuple(poses)

    def replace(self, index: int, pose: Pose) -> "WorldState":
        p = list(self.poses)
        p[index] = pose
        return WorldState(p)

    def __getitem__(self, index: int) -> Pose:
        return self.poses[index]

    def __len__(self) -> int:
        return len(self.poses)


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True)
class Action:
    """One canonical motion: a signed axis translation or rotation."""

    kind: str
    axis: int
    sign: int

    def __post_init__(self):
        if self.kind not in (TRANSLATION, ROTATION):
            raise ValueError(f"bad action kind {self.kind!r}")
        if self.axis not in (0, 1, 2) or self.sign not in (-1, 1):
            raise ValueError("action needs axis in {0,1,2} and sign in {-1,+1}")

    @property
    def direction(self) -> np.ndarray:
        d = np.zeros(3)
        d[self.axis] = float(self.sign)
        return d

    @property
    def name(self) -> str:
        s = "+" if self.sign > 0 else "-"
        base = "XYZ"[self.axis]
        return f"{s}{base}" if self.kind == TRANSLATION else f"{s}R{base}"

    def opposite(self) -> "Action":
        return Action(self.kind, self.axis, -self.sign)


TRANSLATIONS = tuple(
    Action(TRANSLATION, ax, sg) for ax in (0, 1, 2) for sg in (1, -1)
)
ROTATIONS = tuple(Action(ROTATION, ax, sg) for ax in (0, 1, 2) for sg in (1, -1))
ALL_ACTIONS = TRANSLATIONS + ROTATIONS
_BY_NAME = {a.name: a for a in ALL_ACTIONS}


def action_from_name(name: str) -> Action:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ValueError(f"unknown action {name!r}") from None


# ---------------------------------------------------------------------------
# configuration, outcomes, clocks


@dataclass(frozen=True)
class SimConfig:
    path_step: float = 0.1
    rotation_step: float = 0.05
    penetration_threshold: float = 0.01
    path_timeout: float = 360.0
    max_travel: float = 25.0

    def __post_init__(self):
        if min(self.path_step, self.rotation_step, self.path_timeout) <= 0:
            raise ValueError("steps and timeout must be positive")
        if self.penetration_threshold < 0:
            raise ValueError("penetration threshold must be non-negative")


@dataclass(frozen=True)
class MotionPath:
    """Accepted waypoints of one action attempt; waypoint 0 is the start."""

    part: str
    action: Action
    waypoints: tuple

    @property
    def displacement(self) -> np.ndarray:
        return self.waypoints[-1].translation - self.waypoints[0].translation


@dataclass(frozen=True)
class SimOutcome:
    tag: str
    blockers: tuple = ()

    @property
    def is_removal(self) -> bool:
        return self.tag == DISASSEMBLED

    @property
    def is_collision_like(self) -> bool:
        return self.tag in (COLLISION, STALLED, PATH_TIMEOUT)


class VirtualClock:
    """Deterministic clock: advances only by explicit charges."""

    __slots__ = ("_t",)

    def __init__(self):
        self._t = 0.0

    def now(self) -> float:
        return self._t

    def charge(self, dt: float) -> None:
        self._t += dt


class WallClock:
    """Real elapsed time; charges are ignored."""

    __slots__ = ()

    def now(self) -> float:
        return time.perf_counter()

    def charge(self, dt: float) -> None:
        pass


def make_clock(time_mode: str):
    if time_mode == "virtual":
        return VirtualClock()
    if time_mode == "wall":
        return WallClock()
    raise ValueError(f"unknown time mode {time_mode!r}")


# ---------------------------------------------------------------------------
# assembly problems


@dataclass(frozen=True)
class PartGeometry:
    """One rigid part: mesh at rest coordinates plus derived queries."""

    id: str
    mesh: Mesh
    sdf: SdfGrid
    hull: ConvexHull
    samples: np.ndarray
    aabb: Aabb


def build_part_geometry(part_id: str, mesh: Mesh,
                        sdf_resolution: int = 64) -> PartGeometry:
    """Derive the per-part query structures from a rest-frame mesh.

    Surface samples are spaced relative to the SDF cell so penetration
    checks cannot step over a feature the grid can resolve.
    """
    sdf = build_sdf(mesh, sdf_resolution)
    samples = mesh.sample_points(2.0 * sdf.spacing)
    return PartGeometry(part_id, mesh, sdf, ConvexHull(mesh.vertices),
                        samples, mesh.aabb)


class AssemblyProblem:
    """Named set of parts with their initial poses."""

    def __init__(self, name: str, parts, initial_state: WorldState):
        if len(parts) != len(initial_state):
            raise ValueError("one pose per part required")
        ids = [p.id for p in parts]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate part ids")
        self.name = name
        self.parts = tuple(parts)
        self.initial_state = initial_state
        self._index = {p.id: i for i, p in enumerate(self.parts)}
        self._union_hulls: dict = {}

    @property
    def part_ids(self) -> tuple:
        return tuple(p.id for p in self.parts)

    def index_of(self, part_id: str) -> int:
        try:
            return self._index[part_id]
        except KeyError:
            raise KeyError(f"unknown part {part_id!r}") from None

    def part(self, part_id: str) -> PartGeometry:
        return self.parts[self.index_of(part_id)]

    def posed_aabb(self, state: WorldState, index: int) -> Aabb:
        pose = state[index]
        box = self.parts[index].aabb
        if pose.is_identity_rotation:
            return box.translated(pose.translation)
        lo, hi = box.lo, box.hi
        corners = np.array(
            [
                [x, y, z]
                for x in (lo[0], hi[0])
                for y in (lo[1], hi[1])
                for z in (lo[2], hi[2])
            ]
        )
        return aabb_of_points(pose.transform_points(corners))

    def union_hull_vertices(self, state: WorldState, indices) -> np.ndarray:
        """Hull vertex cloud of the union of the given posed parts (cached)."""
        key = tuple(
            (i, state[i].translation.tobytes(), state[i].rotation.tobytes())
            for i in sorted(indices)
        )
        cached = self._union_hulls.get(key)
        if cached is None:
            pts = np.concatenate(
                [state[i].transform_points(self.parts[i].hull.vertices) for i in sorted(indices)]
            )
            cached = ConvexHull(pts).vertices
            self._union_hulls[key] = cached
        return cached


# ---------------------------------------------------------------------------
# penetration and separation queries


def _pair_penetrations(problem: AssemblyProblem, state: WorldState,
                       mover: int, others, threshold: float) -> list:
    """Max sample penetration of the moved part against each other part.

    Symmetric sampling: the mover's samples are tested in each other
    part's distance field and the other part's samples (restricted to
    the AABB overlap) in the mover's field.
    """
    mover_pose = state[mover]
    mover_box = problem.posed_aabb(state, mover)
    mover_pts_world = None
    results = []
    for j in others:
        other_box = problem.posed_aabb(state, j)
        if aabb_overlap(mover_box.expanded(threshold), other_box) is None:
            results.append((j, 0.0))
            continue
        if mover_pts_world is None:
            mover_pts_world = mover_pose.transform_points(problem.parts[mover].samples)
        other_pose = state[j]
        pen = 0.0
        sel = other_box.expanded(threshold).contains_points(mover_pts_world)
        if sel.any():
            local = other_pose.inverse_transform_points(mover_pts_world[sel])
            pen = max(pen, -float(problem.parts[j].sdf.query_many(local).min()))
        other_pts = other_pose.transform_points(problem.parts[j].samples)
        sel2 = mover_box.expanded(threshold).contains_points(other_pts)
        if sel2.any():
            local2 = mover_pose.inverse_transform_points(other_pts[sel2])
            pen = max(pen, -float(problem.parts[mover].sdf.query_many(local2).min()))
        results.append((j, max(0.0, pen)))
    return results


def max_penetration(problem: AssemblyProblem, state: WorldState,
                    part_ids=None) -> float:
    """Deepest pairwise sample penetration among the given parts (>= 0)."""
    ids = list(part_ids) if part_ids is not None else list(problem.part_ids)
    idx = [problem.index_of(p) for p in ids]
    worst = 0.0
    for i in idx:
        rest = [j for j in idx if j != i]
        for _, pen in _pair_penetrations(problem, state, i, rest, 0.0):
            worst = max(worst, pen)
    return worst


def is_disassembled(problem: AssemblyProblem, state: WorldState,
                    part_id: str, remaining) -> bool:
    """True iff the part's hull is disjoint from the hull of the union
    of all other remaining parts (GJK, touching counts as not separated)."""
    i = problem.index_of(part_id)
    others = [problem.index_of(p) for p in remaining if p != part_id]
    if not others:
        return True
    moved = state[i].transform_points(problem.parts[i].hull.vertices)
    union_boxes = [problem.posed_aabb(state, j) for j in others]
    union_lo = np.min([b.lo for b in union_boxes], axis=0)
    union_hi = np.max([b.hi for b in union_boxes], axis=0)
    mbox = aabb_of_points(moved)
    # quick accept needs the same margin as the hull gate below, else
    # rotation roundoff (~1e-15) can flip a touching part to separated
    if np.any(mbox.hi < union_lo - 1e-9) or np.any(mbox.lo > union_hi + 1e-9):
        return True
    hull_pts = problem.union_hull_vertices(state, others)
    return gjk_distance(moved, hull_pts) > 1e-9


# ---------------------------------------------------------------------------
# the simulate step loop


def _advance(pose: Pose, action: Action, cfg: SimConfig, pivot: np.ndarray) -> Pose:
    if action.kind == TRANSLATION:
        return pose.translated(action.direction * cfg.path_step)
    dq = quat_from_axis_angle(action.direction, cfg.rotation_step)
    return pose.rotated_about(dq, pivot)


def simulate(problem: AssemblyProblem, state: WorldState, part_id: str,
             action: Action, cfg: SimConfig, remaining=None, clock=None):
    """Move one part along one action until separation or blockage.

    Returns (new_state, MotionPath, SimOutcome). The returned state
    holds the last accepted pose; on a collision the outcome lists
    every remaining part whose penetration at the rejected pose
    exceeded the threshold. A rotation that completes a full turn
    without escaping is reported as a stall against the parts whose
    posed AABBs still touch the mover; both stalls and path timeouts
    are treated downstream exactly like collisions.
    """
    if remaining is None:
        remaining = problem.part_ids
    remaining = tuple(remaining)
    if part_id not in remaining:
        raise ValueError(f"{part_id!r} is not among remaining parts")
    if clock is None:
        clock = VirtualClock()
    clock.charge(SIM_CALL_COST)
    started = clock.now()

    i = problem.index_of(part_id)
    others = [problem.index_of(p) for p in remaining if p != part_id]
    pose = state[i]
    cur = state
    waypoints = [pose]
    pivot = problem.posed_aabb(state, i).center
    thr = cfg.penetration_threshold
    travelled = 0.0
    turned = 0.0

    def finish(tag, blockers=()):
        path = MotionPath(part_id, action, tuple(waypoints))
        return cur, path, SimOutcome(tag, tuple(blockers))

    if is_disassembled(problem, cur, part_id, remaining):
        return finish(DISASSEMBLED)

    while True:
        if clock.now() - started > cfg.path_timeout:
            return finish(PATH_TIMEOUT)
        clock.charge(SIM_STEP_COST)
        nxt_pose = _advance(pose, action, cfg, pivot)
        nxt = cur.replace(i, nxt_pose)
        pens = _pair_penetrations(problem, nxt, i, others, thr)
        worst = max((p for _, p in pens), default=0.0)
        if worst > thr:
            blockers = [problem.parts[j].id for j, p in pens if p > thr]
            return finish(COLLISION, blockers)
        pose = nxt_pose
        cur = nxt
        waypoints.append(pose)
        if is_disassembled(problem, cur, part_id, remaining):
            return finish(DISASSEMBLED)
        if action.kind == TRANSLATION:
            travelled += cfg.path_step
            if travelled > cfg.max_travel:
                return finish(PATH_TIMEOUT)
        else:
            turned += cfg.rotation_step
            if turned >= 2.0 * np.pi:
                # tolerance mirrors is_disassembled: a touching neighbor
                # drifted apart by roundoff still counts as the obstacle
                mover_box = problem.posed_aabb(cur, i).expanded(1e-9)
                contacts = [
                    problem.parts[j].id
                    for j in others
                    if aabb_overlap(mover_box, problem.posed_aabb(cur, j)) is not None
                ]
                return finish(STALLED, contacts)
