"""Slow, independent reference minimizers for testing the ADMM solvers.

Both objectives are smoothed with a decreasing epsilon schedule,

    sum_k ||P_perp(r_k)||            ->  sum_k sqrt(||P_perp(r_k)||^2 + eps^2)
    sum_k min_{d>=1} ||r_k - d v_k|| ->  sum_k sqrt(||P_perp(r_k)||^2
                                                    + max(0, 1 - <r_k, v_k>)^2
                                                    + eps^2)

and minimized over the affine gauge set by projected gradient descent with
a Barzilai-Borwein step and Armijo backtracking, warm-starting each stage
at the previous stage's solution.  Deliberately shares no solver code with
the ADMM engine beyond the core data types: incidence is index arithmetic,
the feasible set is handled by exact affine projection, and the initial
point comes from a dense pseudoinverse.

Intended for small instances only (n <= 30 is enforced).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PointCloud, ProblemInstance, validate_instance

ORACLE_MAX_POINTS = 30

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60

# a stage ends when the objective improves by less than _STALL_RTOL
# (relative) over _STALL_WINDOW consecutive iterations
_STALL_WINDOW = 120
_STALL_RTOL = 1e-15


@dataclass(frozen=True)
class OracleConfig:
    """Smoothing schedule and inner-loop limits.

    The schedule must be positive and strictly decreasing; the default
    continues down to 1e-12.  ``grad_tol`` bounds the projected-gradient
    norm (relative to 1 + |objective|) accepted as stage convergence.
    """

    eps_schedule: tuple[float, ...] = (1e-1, 1e-3, 1e-6, 1e-9, 1e-12)
    max_inner: int = 20000
    grad_tol: float = 1e-10

    def __post_init__(self):
        eps = self.eps_schedule
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps_schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.max_inner < 1 or not self.grad_tol > 0:
            raise ValueError("max_inner and grad_tol must be positive")


def _edge_arrays(inst: ProblemInstance):
    g = inst.graph
    return g.edges[:, 0], g.edges[:, 1], g.directions


def _scatter(G_edges: np.ndarray, ei, ej, n: int) -> np.ndarray:
    out = np.zeros((n, G_edges.shape[1]))
    np.add.at(out, ei, G_edges)
    np.subtract.at(out, ej, G_edges)
    return out


def _constraint_gradient(ei, ej, V, n: int) -> np.ndarray:
    # C[i] = sum over edges at i of +/- v; <C, T> = sum_k <t_i - t_j, v_k>
    return _scatter(V, ei, ej, n)


def shapefit_value_grad(T, ei, ej, V, eps: float):
    """Smoothed orthogonal-deviation objective and its gradient in T."""
    R = T[ei] - T[ej]
    par = np.sum(R * V, axis=1, keepdims=True) * V
    orth = R - par
    s = np.sqrt(np.sum(orth * orth, axis=1) + eps * eps)
    grad_edges = orth / s[:, None]
    return float(s.sum()), _scatter(grad_edges, ei, ej, T.shape[0])


def lud_value_grad(T, ei, ej, V, eps: float):
    """Smoothed LUD objective (scales eliminated) and its gradient in T."""
    R = T[ei] - T[ej]
    p = np.sum(R * V, axis=1)
    orth = R - p[:, None] * V
    slack = np.maximum(0.0, 1.0 - p)
    s = np.sqrt(np.sum(orth * orth, axis=1) + slack * slack + eps * eps)
    grad_edges = (orth - slack[:, None] * V) / s[:, None]
    return float(s.sum()), _scatter(grad_edges, ei, ej, T.shape[0])


def shapefit_exact_objective(T, ei, ej, V) -> float:
    R = T[ei] - T[ej]
    orth = R - np.sum(R * V, axis=1, keepdims=True) * V
    return float(np.sum(np.linalg.norm(orth, axis=1)))


def lud_exact_objective(T, ei, ej, V) -> float:
    R = T[ei] - T[ej]
    p = np.sum(R * V, axis=1)
    orth = R - p[:, None] * V
    slack = np.maximum(0.0, 1.0 - p)
    return float(np.sum(np.sqrt(np.sum(orth * orth, axis=1) + slack * slack)))


class _GaugeSet:
    """Affine set {T : sum_i t_i = 0 and optionally <C, T> = target}.

    The constraint normals (one per coordinate of the centroid, plus C,
    which is itself mean-zero) are mutually orthogonal, so orthogonal
    projection is exact in two sequential steps.
    """

    def __init__(self, C: np.ndarray | None, target: float):
        self.C = C
        self.target = target
        self.c2 = float(np.sum(C * C)) if C is not None else 0.0

    def project_point(self, T: np.ndarray) -> np.ndarray:
        T = T - T.mean(axis=0)
        if self.C is not None:
            T = T + ((self.target - np.sum(self.C * T)) / self.c2) * self.C
        return T

    def project_direction(self, G: np.ndarray) -> np.ndarray:
        G = G - G.mean(axis=0)
        if self.C is not None:
            G = G - (np.sum(self.C * G) / self.c2) * self.C
        return G


def _golden_min(fn, a: float, b: float, iters: int = 55) -> float:
    """Golden-section minimizer of a scalar convex function on [a, b]."""
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    c1, c2 = b - golden * (b - a), a + golden * (b - a)
    f1, f2 = fn(c1), fn(c2)
    for _ in range(iters):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - golden * (b - a)
            f1 = fn(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + golden * (b - a)
            f2 = fn(c2)
    return 0.5 * (a + b)


def _ray_rescale(T, value_grad, eps: float):
    """Exact minimization of f(c T) over c > 0.

    The restriction of a convex objective to a ray is convex in c; this
    removes the near-flat global-scale valley of the LUD objective, where
    plain gradient steps crawl.
    """
    c = _golden_min(lambda c: value_grad(c * T, eps)[0], 0.5, 2.0)
    return c * T


def _descend(T, value_grad, gauge: _GaugeSet, eps: float, cfg: OracleConfig,
             rescale: bool = False):
    """BB-stepped projected gradient with Armijo backtracking, one stage.

    Two monotone refinements fight the zigzag of plain gradient descent in
    ill-conditioned valleys: an exact line search along the previous
    accepted move (a conjugate-direction flavor; any descent step is valid
    for a convex objective), and, when ``rescale`` is set, an exact
    minimization over the global scale.  Exits on a small projected
    gradient, on objective stagnation over ``_STALL_WINDOW`` iterations,
    or at the inner cap.
    """
    T = gauge.project_point(T)
    f, g = value_grad(T, eps)
    gp = gauge.project_direction(g)
    step = 1.0 / max(np.linalg.norm(gp), 1e-30)
    T_prev = None
    f_mark, mark_iter = f, 0
    for it in range(cfg.max_inner):
        gnorm = np.linalg.norm(gp)
        if gnorm <= cfg.grad_tol * (1.0 + abs(f)):
            break
        accepted = False
        t = step
        for _ in range(_MAX_HALVINGS):
            T_new = gauge.project_point(T - t * gp)
            f_new, g_new = value_grad(T_new, eps)
            if f_new <= f - _ARMIJO_C * t * gnorm * gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # gradient is at the numerical floor for this stage
            if abs(f_new - f) <= 1e-13 * (1.0 + abs(f)):
                break
            raise RuntimeError(
                f"line search failed at eps={eps:g} (|grad|={gnorm:.3g})"
            )
        if T_prev is not None:
            D = T_new - T_prev
            beta = _golden_min(
                lambda b: value_grad(T_new + b * D, eps)[0], 0.0, 8.0
            )
            if beta > 1e-12:
                T_try = gauge.project_point(T_new + beta * D)
                f_try, g_try = value_grad(T_try, eps)
                if f_try < f_new:
                    T_new, f_new, g_new = T_try, f_try, g_try
        if rescale and it % 25 == 0:
            T_resc = gauge.project_point(_ray_rescale(T_new, value_grad, eps))
            f_resc, g_resc = value_grad(T_resc, eps)
            if f_resc < f_new - 1e-14 * (1.0 + abs(f_new)):
                T_new, f_new, g_new = T_resc, f_resc, g_resc
        s = T_new - T
        gp_new = gauge.project_direction(g_new)
        y = gp_new - gp
        sy = float(np.sum(s * y))
        ss = float(np.sum(s * s))
        step = ss / sy if sy > 0 else t * 2.0  # BB1 with a growth fallback
        T_prev, T, f, gp = T, T_new, f_new, gp_new
        if f < f_mark - _STALL_RTOL * (1.0 + abs(f)):
            f_mark, mark_iter = f, it
        elif it - mark_iter >= _STALL_WINDOW:
            break
    return T, f


def _oracle(inst: ProblemInstance, cfg: OracleConfig, kind: str):
    violations = validate_instance(inst)
    if violations:
        raise ValueError("invalid instance: " + "; ".join(violations))
    g = inst.graph
    if g.n > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle accepts at most {ORACLE_MAX_POINTS} points, got {g.n}")
    ei, ej, V = _edge_arrays(inst)
    n, m = g.n, g.m

    C = _constraint_gradient(ei, ej, V, n)

    # independent initial point: dense pseudoinverse of the Laplacian
    R_dense = np.zeros((m, n))
    R_dense[np.arange(m), ei] = 1.0
    R_dense[np.arange(m), ej] = -1.0
    U = np.linalg.pinv(R_dense.T @ R_dense) @ C
    cU = float(np.sum(C * U))
    if cU <= 0:
        raise ValueError("scale constraint degenerate on this graph")

    if kind == "shapefit":
        gauge = _GaugeSet(C, 1.0)
        T = U / cU
        rescale = False  # the gauge pins the scale
        def value_grad(T, eps):
            return shapefit_value_grad(T, ei, ej, V, eps)
        exact = shapefit_exact_objective
    else:
        gauge = _GaugeSet(None, 0.0)
        T = (float(m) / cU) * U  # mean edge inner product 1, matching d >= 1
        rescale = True
        def value_grad(T, eps):
            return lud_value_grad(T, ei, ej, V, eps)
        exact = lud_exact_objective

    for eps in cfg.eps_schedule:
        T, _ = _descend(T, value_grad, gauge, eps, cfg, rescale=rescale)
    return PointCloud(T), exact(T, ei, ej, V)


def oracle_shapefit(
    inst: ProblemInstance, cfg: OracleConfig | None = None
) -> tuple[PointCloud, float]:
    """Reference minimizer of the ShapeFit program on a small instance.

    Returns the recovered cloud (in the unit gauge) and the exact,
    unsmoothed objective value at it.
    """
    return _oracle(inst, cfg or OracleConfig(), "shapefit")


def oracle_lud(
    inst: ProblemInstance, cfg: OracleConfig | None = None
) -> tuple[PointCloud, float]:
    """Reference minimizer of the LUD program (scales eliminated)."""
    return _oracle(inst, cfg or OracleConfig(), "lud")


def lud_oracle_scales(cloud: PointCloud, inst: ProblemInstance) -> np.ndarray:
    """Eliminated per-edge scales at a candidate solution: max(1, <r, v>)."""
    ei, ej, V = _edge_arrays(inst)
    R = cloud.points[ei] - cloud.points[ej]
    return np.maximum(1.0, np.sum(R * V, axis=1))
