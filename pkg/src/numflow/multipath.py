"""Multipath aggregation: per-path aggregate solving and subflow allocation.

Each flow class carries J paths. The aggregate problem optimizes the N*J
per-path rates; the per-flow allocation then solves the two-marginal system
(row sums equal per-path aggregates, column sums equal per-flow targets,
everything nonnegative) with the rank-one proportional solution
u[k, j] = x_j * g_k / x_bar, which satisfies both marginals exactly
whenever they are consistent.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InconsistentTargets,
    InsufficientPaths,
    NoPath,
    NotSupportedUtility,
    TooManyClasses,
)
from .netmodel import FlowClass, Instance, Network, admissible_pairs, dijkstra_path, routing_matrix
from .rng import MixRng
from .solvers import SolverParams, project_polytope_with_duals
from .utility import WeightedLog, conjugate_derivative, evaluate


@dataclass
class MultipathAllocation:
    x: np.ndarray                      # (N, J) per-class per-path aggregates
    u: tuple[np.ndarray, ...]          # per class: (K_i, J) flow-by-path rates
    lam: np.ndarray                    # link duals
    mu: np.ndarray                     # (N, J) path-nonnegativity duals
    objective: float
    l_max: float
    n_iter: int
    wall_time: float
    converged: bool

    def to_json(self) -> dict:
        return {
            "x": [[float(v) for v in row] for row in self.x],
            "u": [[[float(v) for v in row] for row in ui] for ui in self.u],
            "lambda": [float(v) for v in self.lam],
            "mu": [[float(v) for v in row] for row in self.mu],
            "objective": self.objective,
            "l_max": self.l_max,
            "n_iter": self.n_iter,
            "wall_time": self.wall_time,
            "converged": self.converged,
        }


def k_paths(net: Network, src: int, dst: int, count: int) -> tuple[tuple[int, ...], ...]:
    """count loop-free paths by repeated shortest-path with link exclusion.

    The first path equals the plain shortest path; each later path excludes
    every link already used.
    """
    paths = []
    excluded: set[int] = set()
    for _ in range(count):
        try:
            path = dijkstra_path(net, src, dst, excluded=frozenset(excluded))
        except NoPath as exc:
            raise InsufficientPaths(
                f"only {len(paths)} link-disjoint paths from {src} to {dst}"
            ) from exc
        paths.append(path)
        excluded.update(path)
    return tuple(paths)


def gen_multipath_instance(
    net: Network,
    n_classes: int,
    seed: int,
    paths_per_class: int,
    endpoint_rule: str = "all-pairs",
) -> Instance:
    """Seeded multipath instance with weighted-log flows.

    Same draw order as single-path generation; pairs without enough
    link-disjoint paths are skipped in selection order.
    """
    pairs = admissible_pairs(net, endpoint_rule)
    rng = MixRng(seed)
    order = rng.sample(len(pairs), len(pairs))
    chosen = []
    for idx in order:
        src, dst = pairs[idx]
        try:
            paths = k_paths(net, src, dst, paths_per_class)
        except InsufficientPaths:
            continue
        chosen.append((src, dst, paths))
        if len(chosen) == n_classes:
            break
    if len(chosen) < n_classes:
        raise TooManyClasses(f"only {len(chosen)} pairs admit {paths_per_class} disjoint paths")
    classes = []
    for src, dst, paths in chosen:
        k = rng.randint(10, 20)
        flows = tuple(WeightedLog(rng.uniform()) for _ in range(k))
        classes.append(FlowClass(src, dst, paths, flows))
    classes = tuple(classes)
    return Instance(net, classes, routing_matrix(net, classes), "multipath", paths_per_class, seed)


def _multipath_arrays(inst: Instance):
    ws = []
    for cls in inst.classes:
        if not all(isinstance(f, WeightedLog) for f in cls.flows):
            raise NotSupportedUtility("multipath solver requires weighted-log utilities")
        ws.append(np.asarray([f.w for f in cls.flows], dtype=float))
    return inst.routing.dense(), inst.network.capacities, ws


def _multipath_kkt_residual(R, c, wbar, x_flat, lam, mu_flat, J) -> float:
    load = R @ x_flat
    feas = np.max((load - c) / np.maximum(c, 1.0), initial=0.0)
    slack = np.max(np.abs(lam * (load - c)) / np.maximum(c, 1.0), initial=0.0)
    dual = max(np.max(-lam, initial=0.0), np.max(-mu_flat, initial=0.0))
    comp_mu = np.max(np.abs(mu_flat * x_flat), initial=0.0)
    price = R.T @ lam - mu_flat
    x_bar = x_flat.reshape(-1, J).sum(axis=1)
    grad = np.repeat(wbar / np.maximum(x_bar, 1e-300), J)
    stat = np.max(np.abs(grad - price) / np.maximum(grad, 1e-12))
    return float(max(feas, slack, dual, comp_mu, stat))


def solve_multipath_aggregate(inst: Instance, params: SolverParams):
    """Projected gradient on the N*J per-path aggregates.

    Returns (x as (N, J), lam, mu as (N, J), n_iter, converged); duals come
    from the final projection's active set scaled by the step size, with
    mu reported as 0 wherever the path rate is clearly positive.
    """
    R, c, ws = _multipath_arrays(inst)
    wbar = np.asarray([w.sum() for w in ws])
    n = len(ws)
    J = inst.paths_per_class
    L = R.shape[0]
    row_deg = np.maximum(R.sum(axis=1), 1.0)
    x = np.full(n * J, 0.5 * float(np.min(c / row_deg)))
    lam = np.zeros(L)
    mu = np.zeros(n * J)
    converged = False
    it = 0
    for it in range(1, params.max_iter + 1):
        x_bar = x.reshape(n, J).sum(axis=1)
        grad = np.repeat(wbar / np.maximum(x_bar, 1e-12), J)
        x, nu = project_polytope_with_duals(x + params.alpha * grad, R, c)
        x = np.maximum(x, 0.0)  # clear projection round-off
        lam = nu[:L] / params.alpha
        mu = nu[L:] / params.alpha
        mu[x > params.tol] = 0.0
        if _multipath_kkt_residual(R, c, wbar, x, lam, mu, J) <= params.tol:
            converged = True
            break
    return x.reshape(n, J), lam, mu.reshape(n, J), it, converged


def allocate_subflows(
    x_star: np.ndarray,
    g_bar: np.ndarray,
    tol: float = 1e-9,
    rescale_fallback: bool = False,
) -> np.ndarray:
    """Proportional solution of the two-marginal system for one class.

    Returns u with shape (len(g_bar), len(x_star)): flows as rows, paths as
    columns; row sums equal g_bar and column sums equal x_star whenever the
    two totals agree. With ``rescale_fallback`` the per-flow targets are
    renormalized to the path total instead of raising on a mismatch.
    """
    x_star = np.asarray(x_star, dtype=float)
    g_bar = np.asarray(g_bar, dtype=float)
    if np.any(x_star < 0) or np.any(g_bar < 0):
        raise ValueError("marginals must be nonnegative")
    x_bar = float(x_star.sum())
    if x_bar == 0.0:
        return np.zeros((g_bar.shape[0], x_star.shape[0]))
    gap = abs(x_bar - float(g_bar.sum()))
    if gap > tol * x_bar:
        if not rescale_fallback:
            raise InconsistentTargets(
                f"path total {x_bar} vs flow total {float(g_bar.sum())}"
            )
        g_bar = g_bar * (x_bar / float(g_bar.sum()))
    return np.outer(g_bar, x_star) / x_bar


def solve_multipath(inst: Instance, params: SolverParams) -> MultipathAllocation:
    """Aggregate solve plus per-class proportional subflow allocation."""
    t0 = time.perf_counter()
    R, c, ws = _multipath_arrays(inst)
    x, lam, mu, n_iter, converged = solve_multipath_aggregate(inst, params)
    x_bar = x.sum(axis=1)
    us = []
    objective = 0.0
    for i, cls in enumerate(inst.classes):
        w = ws[i]
        g_bar = (x_bar[i] / w.sum()) * w if x_bar[i] > 0 else np.zeros_like(w)
        u = allocate_subflows(x[i], g_bar, tol=1e-6, rescale_fallback=True)
        us.append(u)
        rates = u.sum(axis=1)
        objective += float(sum(evaluate(f, rate) for f, rate in zip(cls.flows, rates)))
    return MultipathAllocation(
        x=x,
        u=tuple(us),
        lam=lam,
        mu=mu,
        objective=objective,
        l_max=float(np.max(R @ x.reshape(-1))),
        n_iter=n_iter,
        wall_time=time.perf_counter() - t0,
        converged=converged,
    )


@dataclass(frozen=True)
class MultipathKktReport:
    link_feasibility: float
    flow_nonnegativity: float
    dual_nonnegativity: float
    link_slackness: float
    flow_slackness: float
    stationarity: float
    tol: float

    @property
    def max_residual(self) -> float:
        return max(
            self.link_feasibility,
            self.flow_nonnegativity,
            self.dual_nonnegativity,
            self.link_slackness,
            self.flow_slackness,
            self.stationarity,
        )

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def kkt_check_multipath(inst: Instance, alloc: MultipathAllocation, tol: float = 1e-5) -> MultipathKktReport:
    """Verify the seven multipath optimality conditions at the allocation.

    Link duals play the role of flow-level link duals and each path's
    nonnegativity dual is shared by all flows on that path; stationarity
    compares each flow's total rate with the conjugate derivative at its
    per-path price.
    """
    R = inst.routing.dense()
    c = inst.network.capacities
    n = len(inst.classes)
    J = inst.paths_per_class
    if alloc.x.shape != (n, J) or alloc.mu.shape != (n, J):
        raise DimensionMismatch("allocation shape inconsistent with instance")
    if alloc.lam.shape[0] != R.shape[0]:
        raise DimensionMismatch("link dual length mismatch")

    load = R @ np.asarray(
        [alloc.u[i][:, j].sum() for i in range(n) for j in range(J)]
    )
    feas = float(np.max((load - c) / np.maximum(c, 1.0), initial=0.0))
    u_neg = max(float(np.max(-ui, initial=0.0)) for ui in alloc.u)
    dual = max(
        float(np.max(-alloc.lam, initial=0.0)),
        float(np.max(-alloc.mu, initial=0.0)),
    )
    link_slack = float(np.max(np.abs(alloc.lam * (load - c)) / np.maximum(c, 1.0), initial=0.0))

    flow_slack = 0.0
    stat = 0.0
    for i, cls in enumerate(inst.classes):
        if alloc.u[i].shape != (len(cls.flows), J):
            raise DimensionMismatch(f"class {i} allocation shape mismatch")
        prices = R[:, i * J:(i + 1) * J].T @ alloc.lam  # [S_i^T lam]_j
        totals = alloc.u[i].sum(axis=1)
        for j in range(J):
            flow_slack = max(
                flow_slack,
                float(np.max(np.abs(alloc.mu[i, j] * alloc.u[i][:, j]), initial=0.0)),
            )
            v = prices[j] - alloc.mu[i, j]
            for k, fam in enumerate(cls.flows):
                if v > 0:
                    target = conjugate_derivative(fam)(v)
                    stat = max(stat, abs(totals[k] - target) / max(abs(target), 1e-12))
                else:
                    stat = max(stat, 1.0)
    return MultipathKktReport(feas, u_neg, dual, link_slack, flow_slack, stat, tol)
