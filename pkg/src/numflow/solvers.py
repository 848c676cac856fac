"""Iterative optimizers over single-path instances.

Three solvers share the aggregate-flow structure:

* ``solve_admm``: consensus splitting with per-class closed-form flow
  updates, a box projection for link loads, and a prefactored SPD solve
  for the aggregate rates.
* ``solve_cp``: primal-dual iteration with componentwise proximal maps.
* ``solve_gradproj``: projected gradient ascent on the N-variable
  aggregate problem, apportioned to flows at the end.

All three require weighted-log utilities (the closed-form case). A fourth
path, ``solve_pwl_aggregate``, handles piecewise-linear utilities at desk
scale via supremal convolution and a dense simplex LP.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, MaxIterExceeded, NotSupportedUtility
from .netmodel import Instance, RoutingMatrix
from .pwl import pwl_apportion, pwl_eval
from .utility import PwlUtility, WeightedLog


@dataclass(frozen=True)
class SolverParams:
    r: float = 20.0          # ADMM penalty
    pct: float = 1e-4        # ADMM relative change stopping threshold
    alpha: float = 1e-2      # gradient projection step size
    sigma: float = 1.0       # CP dual step
    tau: float = 0.015       # CP primal step
    theta: float = 1.0       # CP extrapolation
    max_iter: int = 20000
    tol: float = 1e-5        # KKT residual target (CP, gradient projection)

    def __post_init__(self):
        if self.r <= 0 or self.alpha <= 0 or self.sigma <= 0 or self.tau <= 0:
            raise ValueError("step/penalty parameters must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def to_json(self) -> dict:
        return {
            "r": self.r, "pct": self.pct, "alpha": self.alpha,
            "sigma": self.sigma, "tau": self.tau, "theta": self.theta,
            "max_iter": self.max_iter, "tol": self.tol,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SolverParams":
        return cls(**{k: doc[k] for k in doc if k in cls.__dataclass_fields__})


@dataclass
class Solution:
    x: np.ndarray                       # per-class aggregate rates
    u: tuple[np.ndarray, ...]           # per-class flow rates
    lam: np.ndarray | None              # class-consistency duals (ADMM only)
    rho: np.ndarray | None              # link duals
    objective: float
    l_max: float
    n_iter: int
    wall_time: float
    converged: bool

    def to_json(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "u": [[float(v) for v in ui] for ui in self.u],
            "lambda": None if self.lam is None else [float(v) for v in self.lam],
            "rho": None if self.rho is None else [float(v) for v in self.rho],
            "objective": self.objective,
            "l_max": self.l_max,
            "n_iter": self.n_iter,
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


class SpdFactor:
    """Cholesky factorization of A = I + R^T R, reusable across iterations."""

    def __init__(self, R: np.ndarray):
        A = np.eye(R.shape[1]) + R.T @ R
        self._cho = scipy.linalg.cho_factor(A)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho, b)


def spd_prefactor(R: RoutingMatrix | np.ndarray) -> SpdFactor:
    dense = R.dense() if isinstance(R, RoutingMatrix) else np.asarray(R, dtype=float)
    return SpdFactor(dense)


def _log_arrays(inst: Instance):
    """Dense routing, capacities, per-class weight vectors for log instances."""
    if inst.paths_per_class != 1:
        raise NotSupportedUtility("single-path instances only")
    ws = []
    for cls in inst.classes:
        if not all(isinstance(f, WeightedLog) for f in cls.flows):
            raise NotSupportedUtility("solver requires weighted-log utilities")
        ws.append(np.asarray([f.w for f in cls.flows], dtype=float))
    return inst.routing.dense(), inst.network.capacities, ws


def _log_objective(ws: list[np.ndarray], u: Sequence[np.ndarray]) -> float:
    return float(sum(np.sum(w * np.log(ui)) for w, ui in zip(ws, u)))


def _aggregate_kkt_residual(R, c, wbar, x, lam) -> float:
    """Max scaled violation of the aggregate problem's optimality conditions."""
    load = R @ x
    feas = np.max((load - c) / np.maximum(c, 1.0), initial=0.0)
    slack = np.max(np.abs(lam * (load - c)) / np.maximum(c, 1.0), initial=0.0)
    dual = np.max(-lam, initial=0.0)
    price = R.T @ lam
    grad = wbar / np.maximum(x, 1e-300)
    stat = np.max(np.abs(grad - price) / np.maximum(grad, 1e-12))
    return float(max(feas, slack, dual, stat))


# ---------------------------------------------------------------------------
# ADMM


def admm_u_update(psi: float, r: float, w: np.ndarray) -> np.ndarray:
    """Closed-form minimizer of the per-class flow subproblem.

    u_k = 2 w_k / (psi + sqrt(psi^2 + 4 r wbar)); always strictly positive.
    """
    w = np.asarray(w, dtype=float)
    wbar = float(w.sum())
    return 2.0 * w / (psi + np.sqrt(psi * psi + 4.0 * r * wbar))


def solve_admm(inst: Instance, params: SolverParams) -> Solution:
    """Consensus ADMM on the recast problem with weighted-log utilities.

    Stops when the augmented Lagrangian changes by less than ``params.pct``
    percent (relative change below pct/100) on three consecutive
    iterations, guarding against transient flat spots, or at ``max_iter``
    (non-convergence is flagged, not raised).
    """
    t0 = time.perf_counter()
    R, c, ws = _log_arrays(inst)
    n = len(ws)
    r = params.r
    wbar = np.asarray([w.sum() for w in ws])
    factor = spd_prefactor(inst.routing)

    u = [np.ones_like(w) for w in ws]
    s = np.asarray([ui.sum() for ui in u])
    x = s.copy()
    y = R @ x
    lam = np.zeros(n)
    rho = np.zeros(R.shape[0])

    def lagrangian() -> float:
        penalty = 0.5 * r * (np.dot(x - s, x - s) + np.dot(R @ x - y, R @ x - y))
        return (
            -_log_objective(ws, u)
            + float(lam @ (s - x))
            + float(rho @ (y - R @ x))
            + penalty
        )

    prev = lagrangian()
    threshold = params.pct / 100.0
    converged = False
    flat_streak = 0
    it = 0
    for it in range(1, params.max_iter + 1):
        psi = lam - r * x
        u = [admm_u_update(psi[i], r, ws[i]) for i in range(n)]
        s = np.asarray([ui.sum() for ui in u])
        y = np.minimum(R @ x - rho / r, c)
        x = factor.solve(s + lam / r + R.T @ (y + rho / r))
        lam = lam + r * (s - x)
        rho = rho + r * (y - R @ x)
        cur = lagrangian()
        if abs(cur - prev) < threshold * max(abs(prev), 1e-12):
            flat_streak += 1
            if flat_streak >= 3:
                converged = True
                break
        else:
            flat_streak = 0
        prev = cur

    u = tuple(u)
    # The splitting multiplier converges to minus the capacity dual (the
    # y-stationarity of the recast problem pairs rho with -eta), so the
    # reported link duals are negated.
    return Solution(
        x=x,
        u=u,
        lam=lam,
        rho=-rho,
        objective=_log_objective(ws, u),
        l_max=float(np.max(R @ x)),
        n_iter=it,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Euclidean projection onto the routing polytope


def _project_qp(z: np.ndarray, G: np.ndarray, h: np.ndarray, max_changes: int):
    """min 0.5*||x - z||^2 s.t. G x <= h, by a primal active-set method.

    Requires x = 0 feasible (h >= 0). Returns (x, nu) with nu the
    multipliers of all rows (zero off the final working set). Constraint
    selection ties break on the smallest row index for termination.
    """
    m = G.shape[0]
    x = np.zeros_like(z)
    work: list[int] = []
    scale = 1.0 + float(np.linalg.norm(z))
    for _ in range(max_changes):
        d = z - x
        if work:
            Gw = G[work]
            M = Gw @ Gw.T
            nu_w, *_ = np.linalg.lstsq(M, Gw @ d, rcond=None)
            p = d - Gw.T @ nu_w
        else:
            nu_w = np.empty(0)
            p = d
        if np.linalg.norm(p) <= 1e-12 * scale:
            if work and np.min(nu_w) < -1e-10:
                # drop the most negative multiplier (smallest index on ties)
                j = int(np.argmin(nu_w))
                work.pop(j)
                continue
            nu = np.zeros(m)
            for idx, row in enumerate(work):
                nu[row] = max(nu_w[idx], 0.0)
            return x, nu
        # longest feasible step along p
        alpha = 1.0
        blocker = -1
        Gp = G @ p
        slackness = h - G @ x
        for i in range(m):
            if i in work or Gp[i] <= 1e-14 * scale:
                continue
            a = max(slackness[i], 0.0) / Gp[i]
            if a < alpha - 1e-15:
                alpha = a
                blocker = i
        x = x + alpha * p
        if blocker >= 0:
            work.append(blocker)
    raise MaxIterExceeded("projection active-set loop did not settle")


def _polytope_constraints(R: np.ndarray, c: np.ndarray):
    n = R.shape[1]
    G = np.vstack([R, -np.eye(n)])
    h = np.concatenate([c, np.zeros(n)])
    return G, h


def project_polytope(x, R: RoutingMatrix | np.ndarray, c) -> np.ndarray:
    """Euclidean projection onto {x' : R x' <= c, x' >= 0}."""
    proj, _ = project_polytope_with_duals(x, R, c)
    return proj


def project_polytope_with_duals(x, R: RoutingMatrix | np.ndarray, c):
    """Projection plus multipliers (link rows first, nonnegativity rows after)."""
    dense = R.dense() if isinstance(R, RoutingMatrix) else np.asarray(R, dtype=float)
    c = np.asarray(c, dtype=float)
    z = np.asarray(x, dtype=float)
    if dense.shape[0] != c.shape[0] or dense.shape[1] != z.shape[0]:
        raise DimensionMismatch("projection dimensions inconsistent")
    G, h = _polytope_constraints(dense, c)
    max_changes = 10 * (dense.shape[0] + dense.shape[1])
    return _project_qp(z, G, h, max_changes)


# ---------------------------------------------------------------------------
# Gradient projection


def solve_gradproj(inst: Instance, params: SolverParams) -> Solution:
    """Projected gradient ascent on the aggregate problem, then apportionment."""
    t0 = time.perf_counter()
    R, c, ws = _log_arrays(inst)
    wbar = np.asarray([w.sum() for w in ws])
    n = len(ws)
    row_deg = np.maximum(R.sum(axis=1), 1.0)
    x = np.full(n, 0.5 * float(np.min(c / row_deg)))
    lam = np.zeros(R.shape[0])
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        grad = wbar / np.maximum(x, 1e-12)
        x, nu = project_polytope_with_duals(x + params.alpha * grad, R, c)
        lam = nu[: R.shape[0]] / params.alpha
        if _aggregate_kkt_residual(R, c, wbar, np.maximum(x, 1e-12), lam) <= params.tol:
            converged = True
            break
    u = tuple(ws[i] / wbar[i] * x[i] for i in range(n))
    return Solution(
        x=x,
        u=u,
        lam=None,
        rho=lam,
        objective=_log_objective(ws, u),
        l_max=float(np.max(R @ x)),
        n_iter=it,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Chambolle-Pock


def cp_prox_f(z: np.ndarray, tau: float, w: np.ndarray) -> np.ndarray:
    """Componentwise proximal map of the scaled negative-log objective."""
    z = np.asarray(z, dtype=float)
    return 0.5 * (z + np.sqrt(z * z + 4.0 * tau * np.asarray(w, dtype=float)))


def cp_prox_gstar(z: np.ndarray, sigma: float, c: np.ndarray) -> np.ndarray:
    """Proximal map of the conjugate box indicator: max(0, z - sigma*c)."""
    z = np.asarray(z, dtype=float)
    return np.maximum(0.0, z - sigma * np.asarray(c, dtype=float))


def solve_cp(inst: Instance, params: SolverParams) -> Solution:
    """Primal-dual iteration on the flow-level problem with per-flow columns.

    The primal step is capped at 0.95 / (sigma * ||Q||^2) when the supplied
    (sigma, tau) pair violates the step-product convergence bound.
    """
    t0 = time.perf_counter()
    R, c, ws = _log_arrays(inst)
    wbar = np.asarray([w.sum() for w in ws])
    sizes = [len(w) for w in ws]
    w_flat = np.concatenate(ws)
    # per-flow columns: class i's routing column repeated K_i times
    Q = np.repeat(R, sizes, axis=1)
    norm_sq = np.linalg.norm(Q, 2) ** 2
    tau = min(params.tau, 0.95 / (params.sigma * norm_sq))

    u = np.ones_like(w_flat)
    v = u.copy()
    y = np.zeros(R.shape[0])
    converged = False
    it = 0
    bounds = np.cumsum([0] + sizes)
    for it in range(1, params.max_iter + 1):
        y = cp_prox_gstar(y + params.sigma * (Q @ v), params.sigma, c)
        u_new = cp_prox_f(u - tau * (Q.T @ y), tau, w_flat)
        v = u_new + params.theta * (u_new - u)
        u = u_new
        if it % 10 == 0 or it == params.max_iter:
            x = np.asarray([u[bounds[i]:bounds[i + 1]].sum() for i in range(len(ws))])
            if _aggregate_kkt_residual(R, c, wbar, x, y) <= params.tol:
                converged = True
                break
    x = np.asarray([u[bounds[i]:bounds[i + 1]].sum() for i in range(len(ws))])
    u_cls = tuple(u[bounds[i]:bounds[i + 1]] for i in range(len(ws)))
    return Solution(
        x=x,
        u=u_cls,
        lam=None,
        rho=y,
        objective=_log_objective(ws, u_cls),
        l_max=float(np.max(R @ x)),
        n_iter=it,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Piecewise-linear path: supremal convolution + dense simplex


def simplex_maximize(obj: np.ndarray, A: np.ndarray, b: np.ndarray):
    """max obj^T t s.t. A t <= b, t >= 0, with b >= 0 (slack basis feasible).

    Dense tableau simplex with Bland's rule (smallest-index entering and
    leaving variables), which guarantees termination. Returns
    (t, value, duals, n_pivots).
    """
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("simplex requires b >= 0")
    # tableau rows: [A | I | b]; objective row: [-obj | 0 | 0]
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -obj
    basis = list(range(n, n + m))
    pivots = 0
    while True:
        enter = -1
        for j in range(n + m):
            if T[m, j] < -1e-10:
                enter = j
                break
        if enter < 0:
            break
        ratio = np.inf
        leave = -1
        for i in range(m):
            if T[i, enter] > 1e-12:
                r = T[i, -1] / T[i, enter]
                if r < ratio - 1e-12 or (abs(r - ratio) <= 1e-12 and (leave < 0 or basis[i] < basis[leave])):
                    ratio = r
                    leave = i
        if leave < 0:
            raise ValueError("unbounded linear program")
        piv = T[leave, enter]
        T[leave] /= piv
        for i in range(m + 1):
            if i != leave and T[i, enter] != 0.0:
                T[i] -= T[i, enter] * T[leave]
        basis[leave] = enter
        pivots += 1
    t = np.zeros(n)
    for i, bi in enumerate(basis):
        if bi < n:
            t[bi] = T[i, -1]
    duals = T[m, n:n + m].copy()
    return t, float(T[m, -1]), duals, pivots


def solve_pwl_aggregate(inst: Instance, params: SolverParams | None = None) -> Solution:
    """Aggregate LP for piecewise-linear utilities, then greedy apportionment.

    One variable per positive-slope segment of each class's supremal
    convolution; capacities bound per-segment lengths and link loads.
    """
    t0 = time.perf_counter()
    if inst.paths_per_class != 1:
        raise NotSupportedUtility("single-path instances only")
    from .utility import aggregate_class  # local to avoid cycle at import time

    members_per_class = []
    aggregates = []
    for cls in inst.classes:
        if not all(isinstance(f, PwlUtility) for f in cls.flows):
            raise NotSupportedUtility("solve_pwl_aggregate requires piecewise-linear utilities")
        members_per_class.append([f.fn for f in cls.flows])
        aggregates.append(aggregate_class(cls.flows).aggregate.fn)

    R = inst.routing.dense()
    c = inst.network.capacities
    L, n = R.shape

    # segment variables: (class, slope, length)
    seg_class: list[int] = []
    seg_slope: list[float] = []
    seg_len: list[float] = []
    for i, agg in enumerate(aggregates):
        bp, sl = agg.breakpoints, agg.slopes
        for bidx in range(len(bp) - 1):
            if sl[bidx] > 0:
                seg_class.append(i)
                seg_slope.append(sl[bidx])
                seg_len.append(bp[bidx + 1] - bp[bidx])
    nseg = len(seg_class)
    # rows: link loads, then one bound per segment
    A = np.zeros((L + nseg, nseg))
    b = np.concatenate([c, np.asarray(seg_len)])
    for j in range(nseg):
        A[:L, j] = R[:, seg_class[j]]
        A[L + j, j] = 1.0
    t, _, duals, pivots = simplex_maximize(np.asarray(seg_slope), A, b)

    x = np.zeros(n)
    for j in range(nseg):
        x[seg_class[j]] += t[j]
    u = tuple(
        np.asarray(pwl_apportion(members_per_class[i], x[i])) for i in range(n)
    )
    objective = float(
        sum(pwl_eval(f, ui) for fs, us in zip(members_per_class, u) for f, ui in zip(fs, us))
    )
    return Solution(
        x=x,
        u=u,
        lam=None,
        rho=duals[:L],
        objective=objective,
        l_max=float(np.max(R @ x)) if L else 0.0,
        n_iter=pivots,
        wall_time=time.perf_counter() - t0,
        converged=True,
    )
