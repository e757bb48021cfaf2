"""Assembly problem I/O plus the synthetic benchmark generators.

A problem on disk is a JSON manifest next to one ASCII OBJ file per
part.  Manifest layout:

    {
      "format_version": 1,
      "name": "tray-stack-2x1",
      "family": "sliding-tray-stack",        # generator echo, optional
      "params": {"trays": 2, "bends": 1},    # generator echo, optional
      "seed": 0,                             # generator echo, optional
      "parts": [
        {"id": "cabinet", "mesh": "cabinet.obj",
         "pose": {"translation": [0.0, 0.0, 0.0],
                  "rotation_wxyz": [1.0, 0.0, 0.0, 0.0]}},
        ...
      ],
      "expected_solvable": true,             # optional test hint
      "expected_order": ["keeper"]           # optional: removal prefix
    }

`expected_order`, when present, is a prefix every valid removal
sequence for the problem must begin with.  It is a hint for tests,
not an input to the planners.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .geometry import GeometryError, Mesh, mesh_from_boxes
from .simulation import (
    AssemblyProblem,
    Pose,
    WorldState,
    _pair_penetrations,
    action_from_name,
    build_part_geometry,
)

FORMAT_VERSION = 1

# Normalization target: assemblies live inside this axis-aligned cube.
WORKSPACE = 10.0


class ProblemError(Exception):
    """Raised for unloadable manifests, bad meshes, or invalid params."""


# ---------------------------------------------------------------------------
# mesh files


def save_mesh_obj(mesh: Mesh, path, name: str = None) -> None:
    """Write a triangle mesh as ASCII OBJ with full float precision."""
    lines = []
    if name:
        lines.append(f"o {name}")
    for v in mesh.vertices:
        lines.append("v %.17g %.17g %.17g" % (v[0], v[1], v[2]))
    for t in mesh.triangles:
        lines.append("f %d %d %d" % (t[0] + 1, t[1] + 1, t[2] + 1))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_mesh_obj(path) -> Mesh:
    """Read an OBJ file; polygon faces are fan-triangulated."""
    verts = []
    tris = []
    for raw in Path(path).read_text(encoding="ascii", errors="replace").splitlines():
        tokens = raw.split()
        if not tokens:
            continue
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise ProblemError(f"{path}: malformed vertex line: {raw!r}")
            verts.append([float(x) for x in tokens[1:4]])
        elif tokens[0] == "f":
            if len(tokens) < 4:
                raise ProblemError(f"{path}: malformed face line: {raw!r}")
            idx = []
            for tok in tokens[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
        # v/f are the only elements we emit; everything else is skipped
    if not verts or not tris:
        raise ProblemError(f"{path}: no triangle geometry found")
    return Mesh(np.asarray(verts, dtype=np.float64),
                np.asarray(tris, dtype=np.int64))


# ---------------------------------------------------------------------------
# workspace normalization


def normalize_parts(meshes, poses):
    """Uniformly rescale and shift an assembly into the workspace cube.

    Returns (meshes, poses, scale, offset).  An assembly already inside
    [0, WORKSPACE]^3 is returned untouched (scale 1, zero offset), so
    the map is idempotent.  Scaling is shrink-only and applied about the
    origin in each part's rest frame; the compensating offset lands the
    assembly centered in the cube.  Uniform scaling commutes with the
    pose rotations, so posed geometry transforms consistently.
    """
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for mesh, pose in zip(meshes, poses):
        pts = pose.transform_points(mesh.vertices)
        lo = np.minimum(lo, pts.min(axis=0))
        hi = np.maximum(hi, pts.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise ProblemError("assembly has no vertices to normalize")
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        raise ProblemError("assembly extent is degenerate")
    eps = 1e-12
    if np.all(lo >= -eps) and np.all(hi <= WORKSPACE + eps):
        return list(meshes), list(poses), 1.0, np.zeros(3)
    scale = 1.0 if extent <= WORKSPACE else WORKSPACE / extent
    center = 0.5 * (lo + hi)
    offset = np.full(3, 0.5 * WORKSPACE) - scale * center
    out_meshes = [Mesh(mesh.vertices * scale, mesh.triangles) for mesh in meshes]
    out_poses = [Pose(scale * p.translation + offset, p.rotation) for p in poses]
    return out_meshes, out_poses, scale, offset


# ---------------------------------------------------------------------------
# problem assembly


def build_problem(name, named_meshes, poses=None, sdf_resolution: int = 64,
                  normalize: bool = True, audit: bool = True,
                  manifest: dict = None) -> AssemblyProblem:
    """Assemble an AssemblyProblem from (id, Mesh) pairs.

    Audits reject the failure modes that otherwise surface as obscure
    planner behavior: non-watertight part meshes and initial states
    with contact deeper than the simulation threshold.
    """
    named_meshes = list(named_meshes)
    if not named_meshes:
        raise ProblemError(f"{name}: a problem needs at least one part")
    ids = [pid for pid, _ in named_meshes]
    if len(set(ids)) != len(ids):
        raise ProblemError(f"{name}: duplicate part ids")
    meshes = [mesh for _, mesh in named_meshes]
    if poses is None:
        poses = [Pose() for _ in meshes]
    poses = list(poses)
    if len(poses) != len(meshes):
        raise ProblemError(f"{name}: one pose per part required")
    for pid, mesh in named_meshes:
        if not mesh.is_watertight():
            raise ProblemError(f"{name}: part {pid!r}: mesh is not watertight")
    if normalize:
        meshes, poses, _, _ = normalize_parts(meshes, poses)
    parts = tuple(build_part_geometry(pid, mesh, sdf_resolution)
                  for pid, mesh in zip(ids, meshes))
    problem = AssemblyProblem(name, parts, WorldState(poses))
    if audit and len(parts) > 1:
        state = problem.initial_state
        for i in range(len(parts)):
            rest = [j for j in range(len(parts)) if j > i]
            for j, pen in _pair_penetrations(problem, state, i, rest, 0.0):
                slack = max(parts[i].sdf.spacing, parts[j].sdf.spacing)
                if pen > 0.01 + slack:
                    raise ProblemError(
                        f"{name}: parts {parts[i].id!r} and {parts[j].id!r} "
                        f"interpenetrate at the initial state "
                        f"(depth {pen:.4f})")
    problem.manifest = dict(manifest) if manifest else {}
    return problem


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ProblemError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProblemError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict) or "parts" not in data:
        raise ProblemError(f"{path}: manifest must be an object with 'parts'")
    version = data.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ProblemError(f"{path}: unsupported format_version {version}")
    return data


def _pose_from_doc(doc) -> Pose:
    if doc is None:
        return Pose()
    return Pose(np.asarray(doc.get("translation", (0.0, 0.0, 0.0)), dtype=np.float64),
                np.asarray(doc.get("rotation_wxyz", (1.0, 0.0, 0.0, 0.0)),
                           dtype=np.float64))


def _pose_to_doc(pose: Pose) -> dict:
    return {"translation": [float(c) for c in pose.translation],
            "rotation_wxyz": [float(c) for c in pose.rotation]}


def load_problem(manifest_path, sdf_resolution: int = 64,
                 normalize: bool = True) -> AssemblyProblem:
    """Load a manifest and its meshes into a ready-to-plan problem.

    The raw manifest dict is attached as `problem.manifest` so callers
    can read the optional expected_* hints.
    """
    path = Path(manifest_path)
    data = load_manifest(path)
    name = data.get("name", path.stem)
    named = []
    poses = []
    for entry in data["parts"]:
        pid = entry.get("id")
        if not pid:
            raise ProblemError(f"{path}: part entry missing 'id'")
        mesh_rel = entry.get("mesh")
        if not mesh_rel:
            raise ProblemError(f"{path}: part {pid!r} missing 'mesh'")
        mesh_path = path.parent / mesh_rel
        if not mesh_path.exists():
            raise ProblemError(
                f"{path}: part {pid!r}: mesh file not found: {mesh_path}")
        named.append((pid, load_mesh_obj(mesh_path)))
        poses.append(_pose_from_doc(entry.get("pose")))
    return build_problem(name, named, poses, sdf_resolution=sdf_resolution,
                         normalize=normalize, manifest=data)


def save_problem(name, named_meshes, out_dir, poses=None, family: str = None,
                 params: dict = None, seed: int = None,
                 expected_solvable=None, expected_order=None) -> Path:
    """Write one OBJ per part plus the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    named_meshes = list(named_meshes)
    if poses is None:
        poses = [Pose() for _ in named_meshes]
    doc = {"format_version": FORMAT_VERSION, "name": name}
    if family is not None:
        doc["family"] = family
    if params is not None:
        doc["params"] = dict(params)
    if seed is not None:
        doc["seed"] = seed
    doc["parts"] = []
    for (pid, mesh), pose in zip(named_meshes, poses):
        mesh_name = f"{name}.{pid}.obj"
        save_mesh_obj(mesh, out_dir / mesh_name, name=pid)
        doc["parts"].append({"id": pid, "mesh": mesh_name,
                             "pose": _pose_to_doc(pose)})
    if expected_solvable is not None:
        doc["expected_solvable"] = bool(expected_solvable)
    if expected_order is not None:
        doc["expected_order"] = list(expected_order)
    manifest_path = out_dir / f"{name}.json"
    manifest_path.write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


# ---------------------------------------------------------------------------
# synthetic families
#
# All generators author geometry directly inside the workspace cube so
# normalization is the identity and authored clearances survive intact.
# Clearances come in two bands: snug fits at 0.05 (five times the
# simulator's contact threshold) and sliding fits at 0.15-0.25.


def _box(lo, hi) -> tuple:
    return (tuple(float(c) for c in lo), tuple(float(c) for c in hi))


def _require(cond: bool, family: str, msg: str) -> None:
    if not cond:
        raise ProblemError(f"{family}: {msg}")


def _bolt_washer_pin(clearance: float = 0.05, pins: int = 1):
    """Bolt through a covering plate, locked by one or two cross pins.

    The cover cannot lift off the bolt head while a pin crosses the
    bolt shaft above it; pins slide along z but are fenced in by the
    cover's rim, so each must first travel sideways, then up.
    """
    fam = "bolt-washer-pin"
    c = float(clearance)
    _require(0.05 - 1e-12 <= c <= 0.1 + 1e-12, fam,
             f"clearance must be in [0.05, 0.1], got {c}")
    _require(pins in (1, 2), fam, f"pins must be 1 or 2, got {pins}")
    bolt_holes = [_box((4.8, 5.8, 4.6), (5.2, 6.2, 5.4))]
    if pins == 2:
        bolt_holes.append(_box((4.8, 5.0, 4.6), (5.2, 5.4, 5.4)))
    bolt = mesh_from_boxes(
        [
            _box((3.8, 3.0, 3.8), (6.2, 4.0, 6.2)),          # head
            _box((4.6, 4.0, 4.6), (5.4, 4.3 + c, 5.4)),      # shaft, in bore
            _box((4.6, 4.3 + c, 4.6), (5.4, 8.0, 5.4)),      # shaft, above
        ],
        bolt_holes,
    )
    cover = mesh_from_boxes(
        [
            _box((2.8, 4.0 + c, 2.8), (7.2, 4.6 + c, 7.2)),  # plate
            _box((2.8, 4.6 + c, 2.8), (7.2, 7.0, 7.2)),      # rim
        ],
        [
            _box((4.6 - c, 4.0 + c, 4.6 - c), (5.4 + c, 4.6 + c, 5.4 + c)),
            _box((3.2, 4.6 + c, 3.25), (6.8, 7.0, 6.75)),    # rim cavity
        ],
    )
    parts = [("bolt", bolt), ("cover", cover)]
    pin = mesh_from_boxes(
        [_box((4.8 + c, 5.8 + c, 4.55 - c), (5.2 - c, 6.2 - c, 5.45 + c))])
    parts.append(("pin", pin))
    if pins == 2:
        pin2 = mesh_from_boxes(
            [_box((4.8 + c, 5.0 + c, 4.55 - c), (5.2 - c, 5.4 - c, 5.45 + c))])
        parts.append(("pin2", pin2))
    hints = {"expected_solvable": True}
    if pins == 1:
        # with a single pin, no other part can move first
        hints["expected_order"] = ["pin"]
    return parts, hints


def _peg_board(pegs: int = 4):
    """Capped pegs through a board, inserted from alternating sides.

    Odd pegs wear their cap above the board and lift out +Y; even pegs
    hang cap-down and drop out -Y.  The caps overhang the holes on both
    faces, so the board is boxed in along every axis until the pegs are
    gone and is the one part that never needs to move.
    """
    fam = "peg-board"
    _require(2 <= pegs <= 8, fam, f"pegs must be in 2..8, got {pegs}")
    centers = [(2.2, 3.0), (4.0, 3.0), (5.8, 3.0), (7.6, 3.0),
               (2.2, 7.0), (4.0, 7.0), (5.8, 7.0), (7.6, 7.0)][:pegs]
    holes = [_box((cx - 0.45, 4.0, cz - 0.45), (cx + 0.45, 5.0, cz + 0.45))
             for cx, cz in centers]
    board = mesh_from_boxes([_box((1.2, 4.0, 1.6), (8.6, 5.0, 8.4))], holes)
    parts = [("board", board)]
    for i, (cx, cz) in enumerate(centers, start=1):
        shaft = _box((cx - 0.4, 3.7, cz - 0.4), (cx + 0.4, 5.3, cz + 0.4))
        if i % 2:                       # cap on top, gap 0.05 to the board
            cap = _box((cx - 0.7, 5.05, cz - 0.7), (cx + 0.7, 5.45, cz + 0.7))
        else:                           # cap underneath, mirrored
            cap = _box((cx - 0.7, 3.55, cz - 0.7), (cx + 0.7, 3.95, cz + 0.7))
        parts.append((f"peg{i}", mesh_from_boxes([shaft, cap])))
    return parts, {"expected_solvable": True}


def _nested_boxes(boxes: int = 5):
    """Open-top bins stacked rim-in-rim like nesting crates.

    Bin i+1's floor hangs inside bin i's rim with 0.1 of play on every
    side, so a middle bin can move nowhere: its rim is ringed by the
    rim below, its floor is capped by the floor above.  Only the top
    bin (straight lift) and the bottom bin (straight drop) are free,
    and each removal frees the next one inward.
    """
    fam = "nested-boxes"
    k = int(boxes)
    _require(2 <= k <= 9, fam, f"boxes must be in 2..9, got {k}")
    wall = 0.25
    clear = 0.1                       # rim-to-floor and floor-to-floor play
    rim_h = 0.8
    floor_h = 0.3
    w_top = 0.6
    parts = []
    for i in range(k):
        # cup1 is the biggest, at the bottom of the stack
        w = w_top + (wall + clear) * (k - 1 - i)
        y0 = 2.0 + (floor_h + clear) * i
        y1 = y0 + floor_h
        mesh = mesh_from_boxes([
            _box((5 - w, y0, 5 - w), (5 + w, y1, 5 + w)),
            _box((5 - w, y1, 5 - w), (5 - w + wall, y1 + rim_h, 5 + w)),
            _box((5 + w - wall, y1, 5 - w), (5 + w, y1 + rim_h, 5 + w)),
            _box((5 - w + wall, y1, 5 - w),
                 (5 + w - wall, y1 + rim_h, 5 - w + wall)),
            _box((5 - w + wall, y1, 5 + w - wall),
                 (5 + w - wall, y1 + rim_h, 5 + w)),
        ])
        parts.append((f"cup{i + 1}", mesh))
    return parts, {"expected_solvable": True}


def _sliding_tray_stack(trays: int = 2, bends: int = 1):
    """Trays in a slot, pinned down by a keeper that walks a stepped tunnel.

    The keeper's plate hovers over every tray; the keeper only leaves
    through a tunnel whose floor pockets and ceiling brows force an
    alternating lift/slide/drop walk (one lift-drop pair per bend plus
    the final lift).  Once it is out, each tray lifts over the front
    lip and slides free.
    """
    fam = "sliding-tray-stack"
    n = int(trays)
    b = int(bends)
    _require(1 <= n <= 5, fam, f"trays must be in 1..5, got {n}")
    _require(b in (1, 2), fam, f"bends must be 1 or 2, got {b}")
    xf = 5.5 + 2.0 * b                   # tunnel front face
    cab_solids = [
        _box((3.0, 3.0, 2.8), (6.6, 3.3, 7.2)),     # slot floor
        _box((3.0, 3.3, 2.8), (6.6, 4.4, 3.0)),     # slot wall, -z
        _box((3.0, 3.3, 7.0), (6.6, 4.4, 7.2)),     # slot wall, +z
        _box((3.0, 3.3, 3.0), (3.3, 4.4, 7.0)),     # slot back
        _box((6.3, 3.3, 3.0), (6.6, 3.65, 7.0)),    # front lip
        # mid slab between slot and tunnel, slit open for the keeper web
        _box((3.0, 4.4, 2.8), (xf, 5.0, 4.9)),
        _box((3.0, 4.4, 5.1), (xf, 5.0, 7.2)),
        _box((3.0, 4.4, 4.9), (4.3, 5.0, 5.1)),
        # tunnel walls, back, and ceiling
        _box((3.0, 5.0, 2.8), (xf, 5.9, 4.3)),
        _box((3.0, 5.0, 5.7), (xf, 5.9, 7.2)),
        _box((3.0, 5.0, 4.3), (4.35, 5.9, 5.7)),
        _box((3.0, 5.9, 2.8), (xf, 6.2, 7.2)),
    ]
    for kk in range(b + 1):              # pocket risers
        x0 = 5.05 + 2.0 * kk
        cab_solids.append(_box((x0, 5.0, 4.3), (x0 + 0.3, 5.2, 4.9)))
        cab_solids.append(_box((x0, 5.0, 5.1), (x0 + 0.3, 5.2, 5.7)))
    for kk in range(b):                  # ceiling brows
        x0 = 6.05 + 2.0 * kk
        cab_solids.append(_box((x0, 5.6, 4.3), (x0 + 0.3, 5.9, 5.7)))
    cabinet = mesh_from_boxes(cab_solids)
    keeper = mesh_from_boxes([
        _box((4.4, 5.05, 4.35), (5.0, 5.55, 5.65)),   # bar in the tunnel
        _box((4.55, 4.05, 4.95), (4.85, 5.05, 5.05)), # web through the slit
        _box((4.4, 3.9, 3.05), (5.0, 4.05, 6.95)),    # hold-down plate
    ])
    parts = [("cabinet", cabinet), ("keeper", keeper)]
    width = (3.9 - 0.1 * (n - 1)) / n
    z0 = 3.05
    for i in range(1, n + 1):
        tray = mesh_from_boxes(
            [_box((3.35, 3.35, z0), (6.25, 3.85, z0 + width))])
        parts.append((f"tray{i}", tray))
        z0 += width + 0.1
    return parts, {"expected_solvable": True, "expected_order": ["keeper"]}


def _rotation_hook(mirror: bool = False):
    """A tabbed rod bayonet-locked in a sleeve under a cap.

    The cap lifts off first.  The rod's tabs sit in side cavities that
    block every translation; only a quarter-ish turn about the vertical
    axis swings the tabs into the sleeve's slot so the rod can lift
    out.  No sequence of straight translations frees the rod, which is
    what makes this family rotation-required.
    """
    rod = mesh_from_boxes([
        _box((4.65, 3.4, 4.65), (5.35, 9.0, 5.35)),   # shaft
        _box((5.35, 5.1, 4.65), (6.45, 5.7, 5.35)),   # tab +x
        _box((3.55, 5.1, 4.65), (4.65, 5.7, 5.35)),   # tab -x
    ])
    sleeve = mesh_from_boxes(
        [_box((3.0, 3.8, 3.0), (7.0, 7.6, 7.0))],
        [
            _box((4.45, 3.8, 4.45), (5.55, 7.6, 5.55)),  # bore
            _box((4.5, 4.9, 4.5), (6.6, 5.9, 6.6)),      # cavity +x
            _box((3.4, 4.9, 3.4), (5.5, 5.9, 5.5)),      # cavity -x
            _box((4.35, 4.9, 3.4), (5.65, 7.6, 6.6)),    # exit slot
        ],
    )
    cap = mesh_from_boxes(
        [_box((3.0, 7.65, 3.0), (7.0, 8.05, 7.0))],
        [_box((4.6, 7.65, 4.6), (5.4, 8.05, 5.4))],
    )
    parts = [("rod", rod), ("sleeve", sleeve), ("cap", cap)]
    if mirror:
        parts = [(pid, _mirror_z(mesh)) for pid, mesh in parts]
    return parts, {"expected_solvable": True, "expected_order": ["cap"]}


def _mirror_z(mesh: Mesh) -> Mesh:
    """Reflect a mesh through the z = WORKSPACE/2 plane, fixing winding."""
    v = mesh.vertices.copy()
    v[:, 2] = WORKSPACE - v[:, 2]
    t = mesh.triangles[:, ::-1].copy()
    return Mesh(v, t)


FAMILIES = {
    "bolt-washer-pin": _bolt_washer_pin,
    "peg-board": _peg_board,
    "nested-boxes": _nested_boxes,
    "sliding-tray-stack": _sliding_tray_stack,
    "rotation-hook": _rotation_hook,
}


def synthetic_parts(family: str, **params):
    """Author one family instance in memory: ([(id, Mesh)], hints)."""
    try:
        builder = FAMILIES[family]
    except KeyError:
        known = ", ".join(sorted(FAMILIES))
        raise ProblemError(f"unknown family {family!r} (known: {known})")
    try:
        return builder(**params)
    except TypeError as exc:
        raise ProblemError(f"{family}: bad parameters {params!r} ({exc})")
    except GeometryError as exc:
        raise ProblemError(f"{family}: degenerate geometry for {params!r}: {exc}")


def synthetic_problem(family: str, name: str = None, sdf_resolution: int = 64,
                      **params) -> AssemblyProblem:
    """Build a family instance directly, skipping the file round trip."""
    parts, hints = synthetic_parts(family, **params)
    manifest = {"name": name or family, "family": family,
                "params": dict(params), **hints}
    return build_problem(name or family, parts,
                         sdf_resolution=sdf_resolution, manifest=manifest)


def generate_synthetic(family: str, out_dir, name: str = None, seed: int = 0,
                       **params) -> Path:
    """Write a family instance to disk; returns the manifest path.

    Geometry is a pure function of (family, params); the seed is echoed
    into the manifest for provenance.  Fixed inputs give byte-identical
    files.
    """
    parts, hints = synthetic_parts(family, **params)
    return save_problem(name or family, parts, out_dir, family=family,
                        params=params, seed=seed, **hints)


# ---------------------------------------------------------------------------
# benchmark suite

SUITE = (
    ("bolt-washer-pin-a", "bolt-washer-pin", {}),
    ("bolt-washer-pin-b", "bolt-washer-pin", {"pins": 2}),
    ("peg-board-4", "peg-board", {"pegs": 4}),
    ("peg-board-6", "peg-board", {"pegs": 6}),
    ("peg-board-8", "peg-board", {"pegs": 8}),
    ("nested-boxes-7", "nested-boxes", {"boxes": 7}),
    ("nested-boxes-8", "nested-boxes", {"boxes": 8}),
    ("nested-boxes-9", "nested-boxes", {"boxes": 9}),
    ("tray-stack-2x1", "sliding-tray-stack", {"trays": 2, "bends": 1}),
    ("tray-stack-3x1", "sliding-tray-stack", {"trays": 3, "bends": 1}),
    ("tray-stack-4x1", "sliding-tray-stack", {"trays": 4, "bends": 1}),
    ("tray-stack-2x2", "sliding-tray-stack", {"trays": 2, "bends": 2}),
    ("tray-stack-3x2", "sliding-tray-stack", {"trays": 3, "bends": 2}),
    ("tray-stack-4x2", "sliding-tray-stack", {"trays": 4, "bends": 2}),
    ("rotation-hook-a", "rotation-hook", {}),
    ("rotation-hook-b", "rotation-hook", {"mirror": True}),
)


def default_suite(out_dir, seed: int = 0) -> list:
    """Generate the benchmark suite; returns the manifest paths in order."""
    paths = []
    for name, family, params in SUITE:
        paths.append(generate_synthetic(family, out_dir, name=name,
                                        seed=seed, **params))
    return paths


# ---------------------------------------------------------------------------
# randomized contacting pairs (for exercising the static blocking analysis)

_GAPS = (0.05, 0.10, 0.15, 0.45, 0.60)


def random_blocking_pair(rng: np.random.Generator, sdf_resolution: int = 48):
    """One random channel-and-slider pair with known exact clearances.

    The anchor is a U-channel (floor plus two side walls); the slider
    is a block, sometimes with a second stacked box, seated in the
    channel.  Per-face gaps are drawn from a set that stays clear of
    the static probe's reach boundary, so exact box arithmetic gives
    unambiguous ground truth for which directions are blocked.

    Returns (problem, info) where info carries the authored box lists
    (in workspace coordinates, already axis-permuted) and the gap map
    for oracle checks.
    """
    axes = rng.permutation(3)            # channel up, across, along
    up, across, along = int(axes[0]), int(axes[1]), int(axes[2])
    gap_floor = float(rng.choice(_GAPS))
    gap_lo = float(rng.choice(_GAPS))
    gap_hi = float(rng.choice(_GAPS))
    # dimensions come from coarse grids, never a continuum: every part
    # extent stays >= 0.8 so the 5-step probe reach is always >= 0.2,
    # a clean 0.05 away from any gap in _GAPS on either side
    slider_w = float(rng.choice((0.8, 1.0, 1.2, 1.4, 1.6)))    # across
    slider_h = float(rng.choice((0.8, 1.0, 1.2, 1.4)))         # up
    slider_l = float(rng.choice((1.2, 1.6, 2.0)))              # along
    wall = float(rng.choice((0.4, 0.6)))
    floor = float(rng.choice((0.4, 0.6)))
    overhang = rng.random() < 0.4
    if overhang:
        # wall height derived so the overhang clears the wall top by a
        # gap from the same safe set, keeping the anchor >= 0.8 tall
        fits = [g for g in _GAPS
                if slider_h + gap_floor - g >= 0.3
                and floor + slider_h + gap_floor - g >= 0.8]
        v_over = float(rng.choice(fits))
        wall_h = slider_h + gap_floor - v_over
    else:
        wall_h = slider_h * float(rng.choice((0.65, 0.8, 0.95)))
    chan_l = slider_l * float(rng.choice((0.5, 0.65, 0.8)))

    def make_box(c_up, c_across, c_along):
        lo = np.zeros(3)
        hi = np.zeros(3)
        lo[up], hi[up] = c_up
        lo[across], hi[across] = c_across
        lo[along], hi[along] = c_along
        return _box(lo + 5.0 - 2.0, hi + 5.0 - 2.0)   # recentered later

    inner = gap_lo + slider_w + gap_hi
    anchor_boxes = [
        make_box((0.0, floor), (-wall, inner + wall), (0.0, chan_l)),
        make_box((floor, floor + wall_h), (-wall, 0.0), (0.0, chan_l)),
        make_box((floor, floor + wall_h), (inner, inner + wall), (0.0, chan_l)),
    ]
    s_up = (floor + gap_floor, floor + gap_floor + slider_h)
    s_ac = (gap_lo, gap_lo + slider_w)
    s_al = ((chan_l - slider_l) / 2.0, (chan_l + slider_l) / 2.0)
    slider_boxes = [make_box(s_up, s_ac, s_al)]
    if overhang:
        # stacked box reaching over one wall: extra overhang contact
        side = rng.random() < 0.5
        o_ac = (-wall - 0.2, gap_lo + slider_w) if side else \
               (gap_lo, inner + wall + 0.2)
        o_up = (s_up[1], s_up[1] + 0.4)
        slider_boxes.append(make_box(o_up, o_ac, s_al))
    anchor = mesh_from_boxes(anchor_boxes)
    slider = mesh_from_boxes(slider_boxes)
    problem = build_problem("pair", [("anchor", anchor), ("slider", slider)],
                            sdf_resolution=sdf_resolution, normalize=False)
    gaps = {}
    ax_names = "xyz"
    gaps["-" + ax_names[up]] = gap_floor
    gaps["-" + ax_names[across]] = gap_lo
    gaps["+" + ax_names[across]] = gap_hi
    info = {"anchor_boxes": anchor_boxes, "slider_boxes": slider_boxes,
            "gaps": gaps, "axes": {"up": up, "across": across, "along": along}}
    return problem, info


# ---------------------------------------------------------------------------
# plan files


def _config_to_doc(config) -> dict:
    return {
        "mode": config.mode,
        "global_timeout": config.global_timeout,
        "delta_t": config.delta_t,
        "delta_r": config.delta_r,
        "rng_seed": config.rng_seed,
        "time_mode": config.time_mode,
        "sim": {
            "path_step": config.sim.path_step,
            "rotation_step": config.sim.rotation_step,
            "penetration_threshold": config.sim.penetration_threshold,
            "path_timeout": config.sim.path_timeout,
            "max_travel": config.sim.max_travel,
        },
        "static": {
            "extension_steps": config.static.extension_steps,
            "step_cap": config.static.step_cap,
            "length_divisor": config.static.length_divisor,
        },
    }


def export_plan(path, result, config=None, manifest_path=None) -> None:
    """Write a PlanResult as replayable JSON.

    Waypoints are stored as [tx, ty, tz, qw, qx, qy, qz] with full
    precision, so a reloaded plan replays step-for-step.
    """
    doc = {
        "format_version": FORMAT_VERSION,
        "problem": result.problem,
        "mode": result.mode,
        "solved": result.solved,
        "failure_reason": result.failure_reason,
        "metrics": result.metrics,
    }
    if manifest_path is not None:
        doc["problem_manifest"] = str(manifest_path)
    if config is not None:
        doc["config"] = _config_to_doc(config)
    entries = []
    for entry in result.plan.entries:
        paths = []
        for mp in entry.paths:
            paths.append({
                "action": mp.action.name,
                "waypoints": [[float(c) for c in wp.translation]
                              + [float(c) for c in wp.rotation]
                              for wp in mp.waypoints],
            })
        entries.append({"part": entry.part, "removed": entry.removed,
                        "paths": paths})
    doc["entries"] = entries
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_plan(path):
    """Read a plan file; returns (doc, DisassemblyPlan)."""
    from .planner import DisassemblyPlan, PlanEntry
    from .simulation import MotionPath

    path = Path(path)
    if not path.exists():
        raise ProblemError(f"plan file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProblemError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ProblemError(f"{path}: unsupported plan format")
    entries = []
    for e in doc.get("entries", ()):
        paths = []
        for p in e.get("paths", ()):
            action = action_from_name(p["action"])
            wps = tuple(Pose(np.asarray(w[:3], dtype=np.float64),
                             np.asarray(w[3:7], dtype=np.float64))
                        for w in p["waypoints"])
            paths.append(MotionPath(e["part"], action, wps))
        entries.append(PlanEntry(e["part"], bool(e["removed"]), tuple(paths)))
    return doc, DisassemblyPlan(doc.get("problem", path.stem), tuple(entries))


# ---------------------------------------------------------------------------
# metrics tables


def export_metrics(rows, path) -> None:
    """Write per-run metrics as CSV with a fixed column order."""
    columns = ("problem", "mode", "seed", "solved", "sim_count",
               "path_time_s", "total_time_s", "failure_reason")
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row[c]) for c in columns])


def _cell(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.9f" % value
    return value
