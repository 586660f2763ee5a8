"""Core data types for location recovery from pairwise direction observations.

The unknowns are n points in R^d observed only through unit direction
vectors between selected pairs.  All observations are invariant under a
global translation and a positive global scaling, so recovered solutions
are pinned to the gauge

    sum_i t_i = 0   and   sum_{(i,j) in E} <t_i - t_j, v_ij> = 1.

Types here are immutable after construction and safe to share between
concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

# Stored edge directions must be unit vectors to this tolerance.
UNIT_NORM_TOL = 1e-12

# Reported solutions must satisfy the gauge constraints to this tolerance.
GAUGE_REPORT_TOL = 1e-8


def _locked(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered collection of n >= 2 points in R^d (rows of ``points``)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {pts.shape}")
        n, d = pts.shape
        if n < 2:
            raise ValueError("a point cloud needs at least two points")
        if d < 1:
            raise ValueError("point dimension must be positive")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _locked(pts))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]


def apply_gauge(cloud: PointCloud, alpha: float, w) -> PointCloud:
    """Return the gauge-transformed cloud ``{alpha * (t_i + w)}``.

    Two transforms compose into one:
    ``apply_gauge(apply_gauge(c, a, w), b, u) == apply_gauge(c, a*b, w + u/a)``.
    Pairwise directions are unchanged for every ``alpha > 0`` and ``w``.
    """
    alpha = float(alpha)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(w, dtype=float)
    if w.shape != (cloud.dimension,):
        raise ValueError(
            f"w must have shape ({cloud.dimension},), got {w.shape}"
        )
    return PointCloud(alpha * (cloud.points + w))


@dataclass(frozen=True, eq=False)
class DirectionGraph:
    """Vertex set [n] with one observed unit direction per edge.

    Edges are stored canonically with i < j, the direction oriented from j
    toward i (a true direction is ``(t_i - t_j) / ||t_i - t_j||``).
    Constructing with an edge given as (j, i) swaps the pair and flips the
    stored direction's sign, so every input orientation maps to the same
    canonical graph.

    ``partition``, when present, is a boolean mask over vertices (True =
    camera, False = structure point) and marks a bipartite instance.
    """

    n: int
    edges: np.ndarray          # (m, 2) int64, canonical i < j
    directions: np.ndarray     # (m, d) float
    partition: np.ndarray | None = None

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ValueError("graph needs at least two vertices")
        edges = np.array(self.edges, dtype=np.int64)
        dirs = np.array(self.directions, dtype=float)
        if edges.ndim != 2 or edges.shape[1] != 2:
            raise ValueError(f"edges must have shape (m, 2), got {edges.shape}")
        if dirs.ndim != 2 or dirs.shape[0] != edges.shape[0]:
            raise ValueError("need exactly one direction per edge")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoints must lie in [0, n)")
        # canonicalize orientation: i < j, direction points from j to i
        flip = edges[:, 0] > edges[:, 1]
        if np.any(flip):
            edges[flip] = edges[flip][:, ::-1]
            dirs[flip] = -dirs[flip]
        part = self.partition
        if part is not None:
            part = np.array(part, dtype=bool)
            if part.shape != (n,):
                raise ValueError(f"partition mask must have shape ({n},)")
            part = _locked(part)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", _locked(edges))
        object.__setattr__(self, "directions", _locked(dirs))
        object.__setattr__(self, "partition", part)

    @property
    def m(self) -> int:
        return self.edges.shape[0]

    @property
    def dimension(self) -> int:
        return self.directions.shape[1]

    def adjacency(self) -> sp.coo_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        ones = np.ones(self.m)
        return sp.coo_matrix((ones, (i, j)), shape=(self.n, self.n))

    def is_connected(self) -> bool:
        if self.m < self.n - 1:
            return False
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1


@dataclass(frozen=True)
class GenParams:
    """Generation metadata attached to synthetic instances."""

    p: float
    q: float
    sigma: float
    seed: int


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A direction graph plus optional ground truth and generation metadata."""

    graph: DirectionGraph
    truth: PointCloud | None = None
    corrupted_edges: np.ndarray | None = None
    gen_params: GenParams | None = None

    def __post_init__(self):
        bad = self.corrupted_edges
        if bad is not None:
            bad = np.unique(np.asarray(bad, dtype=np.int64))
            object.__setattr__(self, "corrupted_edges", _locked(bad))


def validate_instance(inst: ProblemInstance) -> list[str]:
    """Check every graph and instance invariant.

    Violations come back as human-readable strings naming the offending
    edge or vertex; an empty list means the instance is valid.  Violations
    are data, not errors: anything constructible can be inspected.
    """
    g = inst.graph
    out: list[str] = []

    loops = np.flatnonzero(g.edges[:, 0] == g.edges[:, 1])
    out += [f"edge {k}: self-loop at vertex {g.edges[k, 0]}" for k in loops]

    # duplicates after canonicalization
    if g.m:
        keys = g.edges[:, 0].astype(np.int64) * g.n + g.edges[:, 1]
        order = np.argsort(keys, kind="stable")
        dup = order[1:][keys[order][1:] == keys[order][:-1]]
        out += [
            f"edge {k}: duplicate of pair ({g.edges[k, 0]}, {g.edges[k, 1]})"
            for k in sorted(dup)
        ]

    norms = np.linalg.norm(g.directions, axis=1)
    for k in np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        out.append(f"edge {k}: direction norm {norms[k]:.6g} is not unit")

    if g.partition is not None:
        same = g.partition[g.edges[:, 0]] == g.partition[g.edges[:, 1]]
        out += [
            f"edge {k}: does not cross the camera/structure partition"
            for k in np.flatnonzero(same)
        ]

    if not g.is_connected():
        out.append("graph: not connected")

    if inst.truth is not None:
        if inst.truth.dimension != g.dimension:
            out.append(
                f"truth: dimension {inst.truth.dimension} != "
                f"direction dimension {g.dimension}"
            )
        if inst.truth.n != g.n:
            out.append(f"truth: has {inst.truth.n} points, graph has {g.n} vertices")

    if inst.corrupted_edges is not None and inst.corrupted_edges.size:
        lo, hi = inst.corrupted_edges.min(), inst.corrupted_edges.max()
        if lo < 0 or hi >= g.m:
            out.append(
                f"corrupted_edges: index out of range [0, {g.m}) "
                f"(found {lo if lo < 0 else hi})"
            )

    return out


def gauge_residuals(points, graph: DirectionGraph, target: float = 1.0):
    """Residuals of the two gauge constraints at the given locations.

    Returns ``(||sum_i t_i||_2, |sum_k <t_i - t_j, v_k> - target|)``.
    """
    T = points.points if isinstance(points, PointCloud) else np.asarray(points, float)
    trans = float(np.linalg.norm(T.sum(axis=0)))
    diffs = T[graph.edges[:, 0]] - T[graph.edges[:, 1]]
    scale = float(np.sum(diffs * graph.directions))
    return trans, abs(scale - target)


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of one solve: recovered locations plus diagnostics."""

    locations: PointCloud
    iterations: int
    final_primal_residual: float
    final_dual_residual: float
    objective: float
    wall_seconds: float
    converged: bool = True
    rfe: float | None = None

    def __post_init__(self):
        for name in ("final_primal_residual", "final_dual_residual",
                     "objective", "wall_seconds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.rfe is not None and self.rfe < 0:
            raise ValueError("rfe must be nonnegative")
