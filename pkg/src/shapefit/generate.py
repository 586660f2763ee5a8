"""Synthetic instance generation.

Model: n locations drawn i.i.d. from N(0, I_d); an Erdos-Renyi G(n, p)
observation graph (each unordered pair is an edge independently with
probability p); per edge, independently with probability q the observation
is replaced by a random Gaussian vector, otherwise Gaussian noise of level
sigma is added to the true direction; the result is normalized to the unit
sphere either way.  Corrupted edge indices are recorded on the instance.

Reproducibility
---------------
All randomness comes from a Philox 4x64 counter-based generator keyed by
the seed.  Uniforms are ``(random_raw() >> 11) * 2**-53`` in [0, 1) and
Gaussians use the Box-Muller cosine branch,

    z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2),

consuming exactly two uniforms per variate.  Draw order is fixed:

    1. locations            n*d Gaussians, row-major
    2. edge coins           one uniform per vertex pair, lexicographic order
    3. corruption coins     one uniform per realized edge, edge order
    4. noise vectors        m*d Gaussians, row-major

so identical configs produce bit-identical instances on any platform.
A draw is rejected (and retried with seed+1, up to 100 attempts) if the
graph comes out disconnected or any two locations nearly coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .model import DirectionGraph, GenParams, PointCloud, ProblemInstance

MASK64 = (1 << 64) - 1

# below this separation two locations count as coincident and the draw is retried
MIN_PAIR_DISTANCE = 1e-12

MAX_ATTEMPTS = 100


class GenerationError(RuntimeError):
    """No admissible instance within the attempt budget."""


class RandomStream:
    """Seeded, splittable, platform-independent random stream.

    Thin wrapper around ``numpy.random.Philox`` exposing only the raw
    64-bit output, with uniform/Gaussian transforms fixed by this module
    (see module docstring) rather than inherited from numpy's Generator
    methods, whose algorithms may change between releases.
    """

    def __init__(self, seed: int):
        self._bitgen = np.random.Philox(key=seed & MASK64)

    def uniforms(self, count: int) -> np.ndarray:
        raw = self._bitgen.random_raw(count)
        return (raw >> np.uint64(11)) * 2.0 ** -53

    def gaussians(self, count: int) -> np.ndarray:
        u1 = self.uniforms(count)
        u2 = self.uniforms(count)
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class BipartiteSpec:
    """Camera/structure split for bipartite generation."""

    n_cameras: int
    n_structure: int
    edge_prob: float

    def __post_init__(self):
        if self.n_cameras < 1 or self.n_structure < 1:
            raise ValueError("both sides of the partition need at least one vertex")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")


@dataclass(frozen=True)
class GenConfig:
    """Parameters of the synthetic model."""

    n: int
    p: float
    q: float = 0.0
    sigma: float = 0.0
    d: int = 3
    seed: int = 0
    bipartite: BipartiteSpec | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.d < 1:
            raise ValueError("d must be positive")
        bip = self.bipartite
        if bip is not None and bip.n_cameras + bip.n_structure != self.n:
            raise ValueError(
                f"bipartite sides sum to {bip.n_cameras + bip.n_structure}, "
                f"but n={self.n}"
            )


def _candidate_pairs(cfg: GenConfig) -> tuple[np.ndarray, float]:
    """All potential edges in lexicographic order, with their edge probability."""
    if cfg.bipartite is None:
        i, j = np.triu_indices(cfg.n, k=1)
        return np.column_stack([i, j]).astype(np.int64), cfg.p
    nc = cfg.bipartite.n_cameras
    cams = np.repeat(np.arange(nc), cfg.n - nc)
    structs = np.tile(np.arange(nc, cfg.n), nc)
    return np.column_stack([cams, structs]).astype(np.int64), cfg.bipartite.edge_prob


def _attempt(cfg: GenConfig, seed: int) -> ProblemInstance | None:
    rs = RandomStream(seed)
    n, d = cfg.n, cfg.d

    pts = rs.gaussians(n * d).reshape(n, d)
    if pdist(pts).min() < MIN_PAIR_DISTANCE:
        return None

    pairs, edge_p = _candidate_pairs(cfg)
    keep = rs.uniforms(len(pairs)) < edge_p
    edges = pairs[keep]
    m = len(edges)
    if m < n - 1:
        return None

    partition = None
    if cfg.bipartite is not None:
        partition = np.zeros(n, dtype=bool)
        partition[: cfg.bipartite.n_cameras] = True

    corrupted = rs.uniforms(m) < cfg.q
    eta = rs.gaussians(m * d).reshape(m, d)

    diffs = pts[edges[:, 0]] - pts[edges[:, 1]]
    true_dirs = diffs / np.linalg.norm(diffs, axis=1, keepdims=True)
    vtilde = np.where(corrupted[:, None], eta, true_dirs + cfg.sigma * eta)
    norms = np.linalg.norm(vtilde, axis=1, keepdims=True)
    if norms.min() < MIN_PAIR_DISTANCE:
        return None
    dirs = vtilde / norms

    graph = DirectionGraph(n=n, edges=edges, directions=dirs, partition=partition)
    if not graph.is_connected():
        return None
    return ProblemInstance(
        graph=graph,
        truth=PointCloud(pts),
        corrupted_edges=np.flatnonzero(corrupted),
        gen_params=GenParams(p=edge_p, q=cfg.q, sigma=cfg.sigma, seed=cfg.seed),
    )


def generate(cfg: GenConfig) -> ProblemInstance:
    """Draw a random instance; deterministic function of the config.

    Rejected draws (disconnected graph, coincident locations) retry with
    seed+1; after ``MAX_ATTEMPTS`` failures a :class:`GenerationError` is
    raised.  The recorded ``gen_params.seed`` is the config seed, so the
    instance can always be regenerated from its metadata.
    """
    if cfg.bipartite is not None:
        raise ValueError("config has a bipartite spec; use generate_bipartite")
    return _generate(cfg)


def generate_bipartite(cfg: GenConfig) -> ProblemInstance:
    """Like :func:`generate`, but edges only cross the camera/structure split."""
    if cfg.bipartite is None:
        raise ValueError("generate_bipartite needs cfg.bipartite")
    return _generate(cfg)


def _generate(cfg: GenConfig) -> ProblemInstance:
    for attempt in range(MAX_ATTEMPTS):
        inst = _attempt(cfg, (cfg.seed + attempt) & MASK64)
        if inst is not None:
            return inst
    raise GenerationError(
        f"no connected instance with distinct locations in {MAX_ATTEMPTS} "
        f"attempts (n={cfg.n}, p={cfg.p}, seed={cfg.seed})"
    )


def inject_corruption(
    inst: ProblemInstance,
    edge_indices,
    directions=None,
    seed: int = 0,
) -> ProblemInstance:
    """Adversarial hook: replace chosen edge observations on an instance.

    The Bernoulli model of :func:`generate` is what the phase experiments
    use; this hook covers the adversarial setting instead, corrupting an
    arbitrary user-chosen edge set.  ``directions`` supplies the replacement
    unit vectors (one row per index); when omitted, random directions are
    drawn from the seeded stream.  The returned instance records the union
    of old and new corrupted edges.
    """
    g = inst.graph
    idx = np.unique(np.asarray(edge_indices, dtype=np.int64))
    if idx.size and (idx.min() < 0 or idx.max() >= g.m):
        raise ValueError(f"edge indices must lie in [0, {g.m})")
    if directions is None:
        rs = RandomStream(seed)
        raw = rs.gaussians(idx.size * g.dimension).reshape(idx.size, g.dimension)
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if norms.min() < MIN_PAIR_DISTANCE:
            raise GenerationError("degenerate replacement direction draw")
        directions = raw / norms
    else:
        directions = np.asarray(directions, dtype=float)
        if directions.shape != (idx.size, g.dimension):
            raise ValueError(
                f"directions must have shape ({idx.size}, {g.dimension})"
            )
    dirs = g.directions.copy()
    dirs[idx] = directions
    graph = DirectionGraph(
        n=g.n, edges=g.edges.copy(), directions=dirs, partition=g.partition
    )
    old = inst.corrupted_edges
    bad = idx if old is None else np.union1d(old, idx)
    return ProblemInstance(
        graph=graph,
        truth=inst.truth,
        corrupted_edges=bad,
        gen_params=inst.gen_params,
    )
