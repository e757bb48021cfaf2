"""Directional blocking graphs and the static contact analysis that seeds them.

For every canonical action a state keeps one digraph whose edge
p -> q means "q blocks p from moving that way". The graphs start
from a cheap geometric scan of translational freedom: contact points
of a mobile part are pushed a few small steps along each axis and
probed against the stationary part's distance field. A part that is
larger than its neighbour along the motion axis additionally gets a
sweep-region test so that long parts cannot slip through the probe
net. Detected blocking inserts the mirrored edge in the opposite
graph as well.

Simulation outcomes refine the picture at search time: collisions
add edges, removals delete a part from every stored graph. Two
scalar readings drive the planner: f_c, how many distinct parts
block a part anywhere, and f_a, in how many actions the part is
currently unblocked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import aabb_overlap
from .simulation import (
    Action,
    AssemblyProblem,
    TRANSLATION,
    TRANSLATIONS,
    WorldState,
)

# virtual-time charges: one per SDF probe point, one per edge mutation.
# Probes are vectorized trilinear reads, orders of magnitude cheaper than
# a simulate call, and the rates keep that proportion in virtual time.
PROBE_COST = 1e-8
EDGE_COST = 1e-8


@dataclass(frozen=True)
class EvalScore:
    """Blocking summary of one part: (distinct blockers, free actions)."""

    f_c: float
    f_a: float

    @property
    def key(self):
        return (self.f_c, self.f_a)


class Dbg:
    """Blocking digraph for a single action."""

    __slots__ = ("action", "_out")

    def __init__(self, action: Action):
        self.action = action
        self._out: dict[str, set] = {}

    def add_edge(self, part: str, blocker: str) -> bool:
        if part == blocker:
            raise ValueError("a part cannot block itself")
        added = blocker not in self._out.setdefault(part, set())
        self._out[part].add(blocker)
        return added

    def out_neighbors(self, part: str) -> frozenset:
        return frozenset(self._out.get(part, ()))

    def is_sink(self, part: str) -> bool:
        return not self._out.get(part)

    def remove_part(self, part: str) -> None:
        self._out.pop(part, None)
        for targets in self._out.values():
            targets.discard(part)

    def edge_count(self) -> int:
        return sum(len(t) for t in self._out.values())


class DbgSet:
    """All per-action blocking graphs attached to one search state."""

    __slots__ = ("parts", "graphs")

    def __init__(self, parts, actions):
        self.parts = set(parts)
        self.graphs: dict[Action, Dbg] = {a: Dbg(a) for a in actions}

    @property
    def actions(self) -> tuple:
        return tuple(self.graphs.keys())

    def add_blocking(self, action: Action, part: str, blocker: str,
                     clock=None) -> None:
        if part not in self.parts or blocker not in self.parts:
            raise ValueError("edge endpoints must be remaining parts")
        if self.graphs[action].add_edge(part, blocker) and clock is not None:
            clock.charge(EDGE_COST)

    def remove_part(self, part: str, clock=None) -> None:
        self.parts.discard(part)
        for g in self.graphs.values():
            g.remove_part(part)
            if clock is not None:
                clock.charge(EDGE_COST)

    def eval(self, part: str) -> EvalScore:
        blockers = set()
        free = 0
        for g in self.graphs.values():
            out = g.out_neighbors(part)
            blockers |= out
            if not out:
                free += 1
        return EvalScore(float(len(blockers)), float(free))

    def allowed_actions(self, part: str) -> tuple:
        return tuple(a for a, g in self.graphs.items() if g.is_sink(part))


def evaluate(dbgs: DbgSet, part: str) -> EvalScore:
    return dbgs.eval(part)


def dump_graphs(dbgs: DbgSet) -> str:
    """Stable text listing `action blocked blocker` per edge, for debugging."""
    lines = []
    for action, g in dbgs.graphs.items():
        for part in sorted(g._out):
            for blocker in sorted(g._out[part]):
                lines.append(f"{action.name} {part} {blocker}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# static analysis


@dataclass(frozen=True)
class StaticAnalysisConfig:
    extension_steps: int = 5
    step_cap: float = 0.05
    length_divisor: float = 20.0

    def step_length(self, part_extent: float) -> float:
        """Per-step probe distance, adaptive to the moving part's size."""
        return min(self.step_cap, part_extent / self.length_divisor)


def contacting_pairs(problem: AssemblyProblem, state: WorldState,
                     remaining) -> set:
    """Unordered pairs of remaining parts whose posed AABBs touch or overlap."""
    ids = [p for p in problem.part_ids if p in set(remaining)]
    boxes = {p: problem.posed_aabb(state, problem.index_of(p)) for p in ids}
    pairs = set()
    for i, p in enumerate(ids):
        for q in ids[i + 1:]:
            if aabb_overlap(boxes[p], boxes[q]) is not None:
                pairs.add((p, q))
    return pairs


def _contact_points(problem: AssemblyProblem, state: WorldState,
                    mobile: str, stationary: str) -> np.ndarray:
    """Mobile-part surface samples inside the AABB overlap region."""
    mi = problem.index_of(mobile)
    si = problem.index_of(stationary)
    region = aabb_overlap(
        problem.posed_aabb(state, mi), problem.posed_aabb(state, si)
    )
    if region is None:
        return np.empty((0, 3))
    pts = state[mi].transform_points(problem.parts[mi].samples)
    return pts[region.contains_points(pts)]


def _extension_hits(problem: AssemblyProblem, state: WorldState,
                    points: np.ndarray, stationary: str, action: Action,
                    step: float, steps: int, clock=None) -> bool:
    """Do any of the points, pushed along the action, land inside stationary?"""
    if len(points) == 0:
        return False
    direction = action.direction
    offsets = direction[None, :] * (step * np.arange(1, steps + 1))[:, None]
    probe = (points[None, :, :] + offsets[:, None, :]).reshape(-1, 3)
    if clock is not None:
        clock.charge(PROBE_COST * len(probe))
    si = problem.index_of(stationary)
    local = state[si].inverse_transform_points(probe)
    return bool(problem.parts[si].sdf.query_many(local).min() < 0.0)


def extension_blocked(problem: AssemblyProblem, state: WorldState,
                      mobile: str, stationary: str, action: Action,
                      cfg: StaticAnalysisConfig, clock=None) -> bool:
    """Contact-point probe: blocked iff an extended contact point of the
    mobile part falls strictly inside the stationary part."""
    if action.kind != TRANSLATION:
        raise ValueError("static analysis only reasons about translations")
    pts = _contact_points(problem, state, mobile, stationary)
    extent = problem.posed_aabb(state, problem.index_of(mobile)).extents[action.axis]
    step = cfg.step_length(float(extent))
    return _extension_hits(problem, state, pts, stationary, action, step,
                           cfg.extension_steps, clock)


def potential_blocking(problem: AssemblyProblem, state: WorldState,
                       mobile: str, stationary: str, action: Action,
                       cfg: StaticAnalysisConfig, clock=None) -> bool:
    """Sweep-region probe for a mobile part longer than the stationary one.

    Only samples of the mobile part that still lie behind the
    stationary part along the motion (laterally within its AABB) are
    extended; they are the ones that a long travel would carry into it.
    """
    if action.kind != TRANSLATION:
        raise ValueError("static analysis only reasons about translations")
    mi = problem.index_of(mobile)
    si = problem.index_of(stationary)
    mbox = problem.posed_aabb(state, mi)
    sbox = problem.posed_aabb(state, si)
    ax = action.axis
    if mbox.extents[ax] <= sbox.extents[ax]:
        return False
    pts = state[mi].transform_points(problem.parts[mi].samples)
    lateral = [a for a in range(3) if a != ax]
    sel = np.ones(len(pts), dtype=bool)
    for a in lateral:
        sel &= (pts[:, a] >= sbox.lo[a]) & (pts[:, a] <= sbox.hi[a])
    if action.sign > 0:
        sel &= pts[:, ax] <= sbox.lo[ax]
    else:
        sel &= pts[:, ax] >= sbox.hi[ax]
    step = cfg.step_length(float(mbox.extents[ax]))
    return _extension_hits(problem, state, pts[sel], stationary, action, step,
                           cfg.extension_steps, clock)


def static_analysis(problem: AssemblyProblem, state: WorldState, remaining,
                    cfg: StaticAnalysisConfig = StaticAnalysisConfig(),
                    actions=TRANSLATIONS, clock=None) -> DbgSet:
    """Build the translational blocking graphs for one state.

    Every AABB-contacting pair is probed in both mobile/stationary
    roles for each translation; a hit adds the edge and its mirror in
    the opposite-direction graph. Deliberately incomplete: anything
    farther than the probe reach is left for simulation to discover.
    """
    for a in actions:
        if a.kind != TRANSLATION:
            raise ValueError("static analysis actions must be translations")
    dbgs = DbgSet(remaining, actions)
    for p, q in sorted(contacting_pairs(problem, state, remaining)):
        for action in actions:
            for mob, sta in ((p, q), (q, p)):
                hit = extension_blocked(problem, state, mob, sta, action, cfg, clock)
                if not hit:
                    hit = potential_blocking(problem, state, mob, sta, action,
                                             cfg, clock)
                if hit:
                    dbgs.add_blocking(action, mob, sta, clock)
                    dbgs.add_blocking(action.opposite(), sta, mob, clock)
    return dbgs


def empty_dbgs(remaining, actions) -> DbgSet:
    """Graphs with no prior knowledge (used for rotational states)."""
    return DbgSet(remaining, actions)


# ---------------------------------------------------------------------------
# search-time updates


def update_on_collision(dbgs: DbgSet, action: Action, part: str,
                        colliding_parts, clock=None) -> None:
    """A simulated collision proves every collider blocks `part` this way."""
    blockers = tuple(colliding_parts)
    if not blockers:
        raise ValueError("collision update requires at least one blocker")
    for blocker in blockers:
        dbgs.add_blocking(action, part, blocker, clock)


def update_on_disassembled(all_dbgs, part: str, clock=None) -> None:
    """A removed part stops existing: drop its vertex from every graph."""
    for dbgs in all_dbgs:
        dbgs.remove_part(part, clock)
