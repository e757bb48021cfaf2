"""Disassembly sequence planning for rigid multi-part assemblies.

The package splits into layers: `geometry` (meshes, signed distance
grids, convex hulls), `simulation` (kinematic motion checking), `dbg`
(directional blocking graphs and the static analysis that seeds
them), `planner` (the state-based search itself plus depth-bounded
baselines), `assembly_io` (assembly file formats and synthetic
problem generators) and `bench_cli` (the `dismantle` command).
"""

__version__ = "0.1.0"
