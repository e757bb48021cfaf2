"""Disassembly planners built on the kinematic motion simulator.

Two planner families share the simulate() primitive. The state-based
family (``sbdp``, ``sbdp_star``) keeps every blocked motion around as
a search node, so later passes resume from partially moved world
states instead of starting over; the guided variant additionally
consults per-state directional blocking graphs to rank candidate
parts and to restrict each part to the directions the graphs still
consider free. The depth-bounded family (``pdp_t``, ``pdp_r``,
``pdp_star``) runs a per-part breadth-first search over action
sequences that is rebuilt from scratch on every attempt and deepened
only after a full sweep over the remaining parts fails.

Both families report the same metrics: number of simulate calls,
accepted motion steps, time spent inside the simulator and total
planning time, measured on a virtual or wall clock.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dbg import (
    DbgSet,
    StaticAnalysisConfig,
    empty_dbgs,
    static_analysis,
    update_on_collision,
    update_on_disassembled,
)
from .simulation import (
    ALL_ACTIONS,
    COLLISION,
    DISASSEMBLED,
    STALLED,
    TRANSLATION,
    TRANSLATIONS,
    Action,
    AssemblyProblem,
    SimConfig,
    WorldState,
    is_disassembled,
    make_clock,
    quat_canonical,
    quat_from_axis_angle,
    quat_geodesic,
    simulate,
)
from .simulation import _pair_penetrations

PASS_TRANSLATIONAL = "translational"
PASS_ROTATIONAL = "rotational"

MODES = ("sbdp", "sbdp_star", "pdp_t", "pdp_r", "pdp_star")

_MODE_ALIASES = {
    "sbdp*": "sbdp_star",
    "pdp*": "pdp_star",
    "pdp": "pdp_t",
}


def normalize_mode(mode: str) -> str:
    key = mode.strip().lower().replace("-", "_")
    key = _MODE_ALIASES.get(key, key)
    if key not in MODES:
        raise ValueError(f"unknown planner mode {mode!r}")
    return key


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = "sbdp_star"
    global_timeout: float = 7200.0
    delta_t: float = 0.05
    delta_r: float = 0.5
    rng_seed: int = 0
    time_mode: str = "virtual"
    sim: SimConfig = field(default_factory=SimConfig)
    static: StaticAnalysisConfig = field(default_factory=StaticAnalysisConfig)

    def __post_init__(self):
        if self.global_timeout < 0:
            raise ValueError("timeout must be non-negative")
        if self.delta_t <= 0 or self.delta_r <= 0:
            raise ValueError("merge tolerances must be positive")


@dataclass(frozen=True)
class PlanEntry:
    """One part's fate: its extraction motions, or a remains flag."""

    part: str
    removed: bool
    paths: tuple


@dataclass(frozen=True)
class DisassemblyPlan:
    problem: str
    entries: tuple

    @property
    def removal_order(self) -> tuple:
        return tuple(e.part for e in self.entries if e.removed)

    @property
    def survivors(self) -> tuple:
        return tuple(e.part for e in self.entries if not e.removed)


@dataclass(frozen=True)
class SimEvent:
    """One simulate call: where it launched, what it tried, what happened."""

    stage: str
    pass_kind: str
    pass_index: int
    key: tuple
    part: str
    action: str
    outcome: str
    steps: int


@dataclass(frozen=True)
class PlanResult:
    problem: str
    mode: str
    solved: bool
    failure_reason: str
    plan: DisassemblyPlan
    sim_count: int
    sim_steps: int
    sim_time: float
    total_time: float
    events: tuple
    pass_snapshots: tuple

    @property
    def metrics(self) -> dict:
        return {
            "solved": int(self.solved),
            "sims": self.sim_count,
            "steps": self.sim_steps,
            "sim_time": self.sim_time,
            "total_time": self.total_time,
            "removals": len(self.plan.removal_order),
            "failure": self.failure_reason or "",
        }


def state_key(problem: AssemblyProblem, state: WorldState, remaining,
              delta_t: float, delta_r: float) -> tuple:
    """Quantized fingerprint of the remaining parts' poses.

    Translations are bucketed at delta_t, quaternion components at
    delta_r / 2, both rounded to the nearest bucket so that exact step
    multiples land robustly regardless of accumulated float error.
    """
    rem = set(remaining)
    ids = tuple(p for p in problem.part_ids if p in rem)
    qt = delta_t
    qr = 0.5 * delta_r
    snap = []
    for p in ids:
        pose = state[problem.index_of(p)]
        t = tuple(int(math.floor(c / qt + 0.5)) for c in pose.translation)
        q = quat_canonical(pose.rotation)
        r = tuple(int(math.floor(c / qr + 0.5)) for c in q)
        snap.append((t, r))
    return (ids, tuple(snap))


@dataclass(frozen=True)
class SearchNode:
    """A reachable world state plus the parts still worth moving there."""

    seq: int
    state: WorldState
    candidates: tuple
    trajectory: tuple

    @property
    def is_multi(self) -> bool:
        return len(self.candidates) != 1


_PINNED = (math.inf, math.inf)


def _states_close(problem: AssemblyProblem, a: WorldState, b: WorldState,
                  remaining, delta_t: float, delta_r: float) -> bool:
    for p in remaining:
        i = problem.index_of(p)
        pa, pb = a[i], b[i]
        if float(np.max(np.abs(pa.translation - pb.translation))) > delta_t:
            return False
        if quat_geodesic(pa.rotation, pb.rotation) > delta_r:
            return False
    return True


def remove_duplicates(problem: AssemblyProblem, nodes, remaining,
                      delta_t: float, delta_r: float) -> list:
    """Merge nodes that chase the same part from near-identical states.

    Only single-candidate nodes merge; the earliest survives. The
    multi-candidate root never merges because its candidate set is the
    search frontier itself.
    """
    rem = tuple(remaining)
    kept = []
    for node in sorted(nodes, key=lambda n: n.seq):
        duplicate = False
        if not node.is_multi:
            for other in kept:
                if other.is_multi or other.candidates != node.candidates:
                    continue
                if _states_close(problem, other.state, node.state, rem,
                                 delta_t, delta_r):
                    duplicate = True
                    break
        if not duplicate:
            kept.append(node)
    return kept


class _SbdpRun:
    """One planner invocation; holds the open/collision lists and graphs."""

    def __init__(self, problem: AssemblyProblem, cfg: PlannerConfig, guided: bool):
        self.problem = problem
        self.cfg = cfg
        self.guided = guided
        self.stage = "sbdp_star" if guided else "sbdp"
        self.clock = make_clock(cfg.time_mode)
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.remaining = set(problem.part_ids)
        self.memo = set()
        # per-state blocking graphs, one store per pass kind (guided only)
        self.stores = {PASS_TRANSLATIONAL: {}, PASS_ROTATIONAL: {}}
        self.open = {PASS_TRANSLATIONAL: [], PASS_ROTATIONAL: []}
        self.collided = {PASS_TRANSLATIONAL: [], PASS_ROTATIONAL: []}
        self.plan_entries = []
        self.events = []
        self.snapshots = []
        self.seq = 0
        self.pass_index = 0
        self.sim_count = 0
        self.sim_steps = 0
        self.sim_time = 0.0
        self.started = self.clock.now()
        root = problem.initial_state
        for kind in (PASS_TRANSLATIONAL, PASS_ROTATIONAL):
            self.open[kind].append(self._new_node(root, problem.part_ids, ()))

    # -- plumbing ----------------------------------------------------

    def _new_node(self, state, candidates, trajectory) -> SearchNode:
        node = SearchNode(self.seq, state, tuple(candidates), tuple(trajectory))
        self.seq += 1
        return node

    def _key(self, state: WorldState) -> tuple:
        return state_key(self.problem, state, self.remaining,
                         self.cfg.delta_t, self.cfg.delta_r)

    def _ensure_store(self, kind: str, key: tuple, state: WorldState) -> DbgSet:
        store = self.stores[kind]
        dbgs = store.get(key)
        if dbgs is None:
            rem = [p for p in self.problem.part_ids if p in self.remaining]
            if kind == PASS_TRANSLATIONAL:
                dbgs = static_analysis(self.problem, state, rem,
                                       self.cfg.static, TRANSLATIONS, self.clock)
            else:
                dbgs = empty_dbgs(rem, ALL_ACTIONS)
            store[key] = dbgs
        return dbgs

    def _score(self, kind: str, node: SearchNode) -> tuple:
        if node.is_multi:
            return _PINNED
        dbgs = self._ensure_store(kind, self._key(node.state), node.state)
        return dbgs.eval(node.candidates[0]).key

    def _extract(self, kind: str) -> SearchNode:
        nodes = self.open[kind]
        if not self.guided:
            best = min(range(len(nodes)), key=lambda i: nodes[i].seq)
            return nodes.pop(best)
        best = None
        best_key = None
        for i, node in enumerate(nodes):
            k = (self._score(kind, node), node.seq)
            if best is None or k < best_key:
                best, best_key = i, k
            elif k == best_key and self.rng.random() < 0.5:
                # seq is unique so this tie cannot occur; kept as a guard
                best, best_key = i, k
        return nodes.pop(best)

    def _snapshot(self, kind: str) -> None:
        if self.guided:
            order = sorted(self.open[kind],
                           key=lambda n: (self._score(kind, n), n.seq))
        else:
            order = sorted(self.open[kind], key=lambda n: n.seq)
        descs = []
        initial = self.problem.initial_state
        for node in order:
            moved = {}
            for p in self.problem.part_ids:
                if p not in self.remaining:
                    continue
                i = self.problem.index_of(p)
                dt = node.state[i].translation - initial[i].translation
                dr = quat_geodesic(node.state[i].rotation, initial[i].rotation)
                if float(np.max(np.abs(dt))) > 1e-12 or dr > 1e-12:
                    moved[p] = {"translation": tuple(float(c) for c in dt),
                                "angle": float(dr)}
            descs.append({
                "seq": node.seq,
                "parts": list(node.candidates),
                "initial": node.is_multi,
                "moved": moved,
            })
        self.snapshots.append({"pass": kind, "index": self.pass_index,
                               "nodes": descs})

    def _flush(self, kind: str) -> None:
        merged = remove_duplicates(
            self.problem, self.open[kind] + self.collided[kind],
            [p for p in self.problem.part_ids if p in self.remaining],
            self.cfg.delta_t, self.cfg.delta_r)
        self.open[kind] = merged
        self.collided[kind] = []

    def _delete_part_nodes(self, part: str) -> None:
        for kind in (PASS_TRANSLATIONAL, PASS_ROTATIONAL):
            for lists in (self.open, self.collided):
                pruned = []
                for node in lists[kind]:
                    if part in node.candidates:
                        rest = tuple(c for c in node.candidates if c != part)
                        if not rest:
                            continue
                        node = replace(node, candidates=rest)
                    pruned.append(node)
                lists[kind] = pruned

    def _rekey_stores(self, part: str) -> None:
        for kind in (PASS_TRANSLATIONAL, PASS_ROTATIONAL):
            old = self.stores[kind]
            fresh = {}
            for key, dbgs in old.items():
                ids, poses = key
                if part in ids:
                    j = ids.index(part)
                    key = (ids[:j] + ids[j + 1:], poses[:j] + poses[j + 1:])
                if key not in fresh:
                    fresh[key] = dbgs
            self.stores[kind] = fresh

    def _record_removal(self, part: str, paths: tuple) -> None:
        self.plan_entries.append(PlanEntry(part, True, paths))
        self.remaining.discard(part)
        if self.guided:
            all_dbgs = (list(self.stores[PASS_TRANSLATIONAL].values())
                        + list(self.stores[PASS_ROTATIONAL].values()))
            update_on_disassembled(all_dbgs, part, self.clock)
            self._rekey_stores(part)
        self._delete_part_nodes(part)

    def _simulate(self, node: SearchNode, kind: str, part: str, action: Action):
        before = self.clock.now()
        rem = tuple(p for p in self.problem.part_ids if p in self.remaining)
        new_state, path, outcome = simulate(
            self.problem, node.state, part, action, self.cfg.sim, rem, self.clock)
        self.sim_time += self.clock.now() - before
        self.sim_count += 1
        steps = len(path.waypoints) - 1
        self.sim_steps += steps
        self.events.append(SimEvent(self.stage, kind, self.pass_index,
                                    self._key(node.state), part, action.name,
                                    outcome.tag, steps))
        return new_state, path, outcome

    def _timed_out(self) -> bool:
        return self.clock.now() - self.started > self.cfg.global_timeout

    def _goal(self) -> bool:
        return len(self.remaining) <= 1

    # -- the pass loop -----------------------------------------------

    def _run_pass(self, kind: str):
        """Expand every open node once; returns (status, sims, removals)."""
        self.pass_index += 1
        actions = TRANSLATIONS if kind == PASS_TRANSLATIONAL else ALL_ACTIONS
        self._snapshot(kind)
        pass_sims = 0
        pass_removals = 0
        while self.open[kind]:
            node = self._extract(kind)
            self.collided[kind].append(node)
            if self._timed_out():
                return "timeout", pass_sims, pass_removals
            candidates = [p for p in node.candidates if p in self.remaining]
            if self.guided and len(candidates) > 1:
                dbgs = self._ensure_store(kind, self._key(node.state), node.state)
                candidates.sort(key=lambda p: (dbgs.eval(p).key,
                                               self.problem.index_of(p)))
            for part in candidates:
                if part not in self.remaining:
                    continue
                key = self._key(node.state)
                if self.guided:
                    dbgs = self._ensure_store(kind, key, node.state)
                    allowed = dbgs.allowed_actions(part)
                else:
                    allowed = actions
                for action in allowed:
                    memo_key = (key, part, action)
                    if memo_key in self.memo:
                        continue
                    self.memo.add(memo_key)
                    new_state, path, outcome = self._simulate(node, kind, part, action)
                    pass_sims += 1
                    if outcome.tag == DISASSEMBLED:
                        self._record_removal(part, node.trajectory + (path,))
                        pass_removals += 1
                        if self._goal():
                            return "goal", pass_sims, pass_removals
                        self._flush(kind)
                        if kind == PASS_ROTATIONAL:
                            return "removal", pass_sims, pass_removals
                        break  # this part is gone; move to the next candidate
                    if outcome.tag in (COLLISION, STALLED):
                        if self.guided and outcome.blockers:
                            update_on_collision(dbgs, action, part,
                                                outcome.blockers, self.clock)
                        child = self._new_node(new_state, (part,),
                                               node.trajectory + (path,))
                        self.collided[kind].append(child)
                    # PATH_TIMEOUT is a dead end: no node, no graph update
        self._flush(kind)
        return "done", pass_sims, pass_removals

    # -- top level ---------------------------------------------------

    def run(self) -> PlanResult:
        reason = ""
        solved = False
        if _initially_apart(self.problem):
            solved = True
        else:
            while True:
                st_t, sims_t, rem_t = self._run_pass(PASS_TRANSLATIONAL)
                if st_t in ("goal", "timeout"):
                    solved = st_t == "goal"
                    reason = "" if solved else "timeout"
                    break
                if sims_t > 0 or rem_t > 0:
                    continue  # translation is still productive; stay with it
                st_r, sims_r, rem_r = self._run_pass(PASS_ROTATIONAL)
                if st_r in ("goal", "timeout"):
                    solved = st_r == "goal"
                    reason = "" if solved else "timeout"
                    break
                if sims_r == 0 and rem_r == 0:
                    reason = "exhausted"
                    break
        return self._result(solved, reason)

    def _result(self, solved: bool, reason: str) -> PlanResult:
        entries = list(self.plan_entries)
        for p in self.problem.part_ids:
            if p in self.remaining:
                entries.append(PlanEntry(p, False, ()))
        plan_obj = DisassemblyPlan(self.problem.name, tuple(entries))
        return PlanResult(
            problem=self.problem.name,
            mode=self.stage,
            solved=solved,
            failure_reason=reason,
            plan=plan_obj,
            sim_count=self.sim_count,
            sim_steps=self.sim_steps,
            sim_time=self.sim_time,
            total_time=self.clock.now() - self.started,
            events=tuple(self.events),
            pass_snapshots=tuple(self.snapshots),
        )


def _initially_apart(problem: AssemblyProblem) -> bool:
    ids = problem.part_ids
    if len(ids) <= 1:
        return True
    if len(ids) == 2:
        return is_disassembled(problem, problem.initial_state, ids[0], ids)
    return False


class _PdpTimeout(Exception):
    pass


class _PdpRun:
    """Depth-bounded per-part search; phases share removals and metrics."""

    def __init__(self, problem: AssemblyProblem, cfg: PlannerConfig,
                 phases, mode: str):
        self.problem = problem
        self.cfg = cfg
        self.phases = phases
        self.mode = mode
        self.clock = make_clock(cfg.time_mode)
        self.remaining = set(problem.part_ids)
        self.plan_entries = []
        self.events = []
        self.sim_count = 0
        self.sim_steps = 0
        self.sim_time = 0.0
        self.started = self.clock.now()
        self.phase_started = self.started
        self.stage = mode
        self.d_max = 1

    def _goal(self) -> bool:
        return len(self.remaining) <= 1

    def _simulate(self, state, part, action, kind):
        if self.clock.now() - self.phase_started > self.cfg.global_timeout:
            raise _PdpTimeout
        before = self.clock.now()
        rem = tuple(p for p in self.problem.part_ids if p in self.remaining)
        key = state_key(self.problem, state, self.remaining,
                        self.cfg.delta_t, self.cfg.delta_r)
        new_state, path, outcome = simulate(
            self.problem, state, part, action, self.cfg.sim, rem, self.clock)
        self.sim_time += self.clock.now() - before
        self.sim_count += 1
        steps = len(path.waypoints) - 1
        self.sim_steps += steps
        self.events.append(SimEvent(self.stage, kind, self.d_max, key,
                                    part, action.name, outcome.tag, steps))
        return new_state, path, outcome

    def _attempt(self, part: str, actions, kind: str):
        """Breadth-first search of at most d_max chained motions of one part."""
        i = self.problem.index_of(part)
        root = self.problem.initial_state
        visited = {self._pose_bytes(root[i])}
        queue = [(root, 0, ())]
        head = 0
        while head < len(queue):
            state, depth, trajectory = queue[head]
            head += 1
            if depth >= self.d_max:
                continue
            for action in actions:
                new_state, path, outcome = self._simulate(state, part, action, kind)
                if outcome.tag == DISASSEMBLED:
                    return trajectory + (path,)
                if outcome.tag == COLLISION:
                    pb = self._pose_bytes(new_state[i])
                    if pb not in visited:
                        visited.add(pb)
                        queue.append((new_state, depth + 1,
                                      trajectory + (path,)))
                # stalls and path timeouts are dead ends
        return None

    @staticmethod
    def _pose_bytes(pose) -> bytes:
        return pose.translation.tobytes() + pose.rotation.tobytes()

    def _run_phase(self, actions, stage: str) -> str:
        self.stage = stage
        self.phase_started = self.clock.now()
        self.d_max = 1
        kind = PASS_TRANSLATIONAL if actions == TRANSLATIONS else PASS_ROTATIONAL
        try:
            while not self._goal():
                removed_one = False
                for part in [p for p in self.problem.part_ids
                             if p in self.remaining]:
                    paths = self._attempt(part, actions, kind)
                    if paths is not None:
                        self.plan_entries.append(PlanEntry(part, True, paths))
                        self.remaining.discard(part)
                        removed_one = True
                        break  # rescan from the first remaining part
                if not removed_one:
                    self.d_max += 1
        except _PdpTimeout:
            return "timeout"
        return "goal"

    def run(self) -> PlanResult:
        solved = False
        reason = ""
        if _initially_apart(self.problem):
            solved = True
        else:
            for actions, stage in self.phases:
                status = self._run_phase(actions, stage)
                if status == "goal":
                    solved = True
                    reason = ""
                    break
                reason = "timeout"
        entries = list(self.plan_entries)
        for p in self.problem.part_ids:
            if p in self.remaining:
                entries.append(PlanEntry(p, False, ()))
        plan_obj = DisassemblyPlan(self.problem.name, tuple(entries))
        return PlanResult(
            problem=self.problem.name,
            mode=self.mode,
            solved=solved,
            failure_reason=reason,
            plan=plan_obj,
            sim_count=self.sim_count,
            sim_steps=self.sim_steps,
            sim_time=self.sim_time,
            total_time=self.clock.now() - self.started,
            events=tuple(self.events),
            pass_snapshots=(),
        )


def plan(problem: AssemblyProblem, config: PlannerConfig = None,
         mode: str = None) -> PlanResult:
    """Run one planner mode against one assembly problem."""
    cfg = config if config is not None else PlannerConfig()
    chosen = normalize_mode(mode if mode is not None else cfg.mode)
    if chosen != cfg.mode:
        cfg = replace(cfg, mode=chosen)
    if chosen in ("sbdp", "sbdp_star"):
        return _SbdpRun(problem, cfg, guided=chosen == "sbdp_star").run()
    if chosen == "pdp_t":
        phases = [(TRANSLATIONS, "pdp_t")]
    elif chosen == "pdp_r":
        phases = [(ALL_ACTIONS, "pdp_r")]
    else:
        phases = [(TRANSLATIONS, "pdp_t"), (ALL_ACTIONS, "pdp_r")]
    return _PdpRun(problem, cfg, phases, chosen).run()


# ---------------------------------------------------------------------------
# plan validation


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    goal_reached: bool
    issues: tuple


def _advance_like(pose, action: Action, cfg: SimConfig, pivot):
    if action.kind == TRANSLATION:
        return pose.translated(action.direction * cfg.path_step)
    dq = quat_from_axis_angle(action.direction, cfg.rotation_step)
    return pose.rotated_about(dq, pivot)


def validate_plan(problem: AssemblyProblem, plan_obj: DisassemblyPlan,
                  sim_cfg: SimConfig = None) -> ValidationReport:
    """Replay a plan against the geometry it claims to disassemble.

    Every waypoint must be a legal fixed-size step from its
    predecessor, penetration along the way must stay within the
    contact threshold plus one SDF cell of slack, and each removed
    part must actually be separated when its last waypoint is reached.
    """
    cfg = sim_cfg if sim_cfg is not None else SimConfig()
    slack = max(p.sdf.spacing for p in problem.parts)
    limit = cfg.penetration_threshold + slack
    issues = []
    state = problem.initial_state
    remaining = [p for p in problem.part_ids]

    for entry in plan_obj.entries:
        if not entry.removed:
            if entry.paths:
                issues.append(f"{entry.part}: remains in place but has paths")
            continue
        if entry.part not in remaining:
            issues.append(f"{entry.part}: removed twice or unknown")
            continue
        i = problem.index_of(entry.part)
        others = [problem.index_of(p) for p in remaining if p != entry.part]
        for path in entry.paths:
            if path.part != entry.part:
                issues.append(f"{entry.part}: path belongs to {path.part}")
                break
            start = path.waypoints[0]
            cur = state[i]
            if (float(np.max(np.abs(start.translation - cur.translation))) > 1e-9
                    or quat_geodesic(start.rotation, cur.rotation) > 1e-9):
                issues.append(f"{entry.part}: discontinuous trajectory")
                break
            pivot = problem.posed_aabb(state, i).center
            pose = start
            for wp in path.waypoints[1:]:
                expect = _advance_like(pose, path.action, cfg, pivot)
                if (float(np.max(np.abs(wp.translation - expect.translation))) > 1e-9
                        or quat_geodesic(wp.rotation, expect.rotation) > 1e-9):
                    issues.append(
                        f"{entry.part}: waypoint is not a single "
                        f"{path.action.name} step")
                    break
                pose = wp
                probe = state.replace(i, wp)
                pens = _pair_penetrations(problem, probe, i, others,
                                          cfg.penetration_threshold)
                worst = max((p for _, p in pens), default=0.0)
                if worst > limit:
                    issues.append(
                        f"{entry.part}: penetration {worst:.4f} exceeds "
                        f"{limit:.4f} along {path.action.name}")
                    break
            else:
                state = state.replace(i, path.waypoints[-1])
                continue
            break
        if not is_disassembled(problem, state, entry.part, tuple(remaining)):
            issues.append(f"{entry.part}: not separated at end of its motion")
        remaining.remove(entry.part)

    goal = len(remaining) <= 1
    if not goal and len(remaining) == 2:
        goal = is_disassembled(problem, state, remaining[0], tuple(remaining))
    return ValidationReport(ok=not issues, goal_reached=goal,
                            issues=tuple(issues))
