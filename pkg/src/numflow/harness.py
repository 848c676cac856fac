"""Reference oracle, experiment runner, and report emission.

The oracle solves the link-price dual: per-flow rates are recovered as
conjugate derivatives of the path price, the price vector is optimized over
the nonnegative orthant (quasi-Newton with bound constraints, then a Newton
polish on the saturated links), and the result is accepted only if the
full KKT residual meets the tolerance. It shares no iteration machinery
with the first-order solvers and is intended for small instances.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import IoError, NonConvergence, NotSupportedUtility
from .netmodel import Instance, Network, gen_instance, iridium_topology, load_instance, small_topology
from .rng import mix
from .solvers import SolverParams, Solution, solve_admm, solve_cp, solve_gradproj
from .utility import NegPower, WeightedLog, evaluate, kkt_check_single_path

VERSION = "0.1.0"

SOLVERS = {
    "admm": solve_admm,
    "cp": solve_cp,
    "gradproj": solve_gradproj,
}


def _dual_terms(inst: Instance):
    """Per-class flow parameter arrays for the dual objective."""
    terms = []
    for cls in inst.classes:
        fams = cls.flows
        if all(isinstance(f, WeightedLog) for f in fams):
            terms.append(("log", np.asarray([f.w for f in fams]), None))
        elif all(isinstance(f, NegPower) for f in fams):
            a_vals = {f.a for f in fams}
            if len(a_vals) != 1:
                raise NotSupportedUtility("oracle requires a common exponent per class")
            terms.append(("power", np.asarray([f.w for f in fams]), fams[0].a))
        else:
            raise NotSupportedUtility("oracle handles weighted-log and negative-power classes")
    return terms


def _primal_rates(terms, v: np.ndarray):
    """u[i][k] = conjugate derivative of flow (i,k) at the path price v_i."""
    out = []
    for (tag, w, a), vi in zip(terms, v):
        if tag == "log":
            out.append(w / vi)
        else:
            out.append((a * w / vi) ** (1.0 / (a + 1.0)))
    return out

def _rate_slopes(terms, v: np.ndarray) -> np.ndarray:
    """d(sum_k u_{i,k})/dv_i, used by the Newton polish."""
    out = np.empty(len(terms))
    for i, ((tag, w, a), vi) in enumerate(zip(terms, v)):
        if tag == "log":
            out[i] = float(np.sum(-w / vi**2))
        else:
            p = 1.0 / (a + 1.0)
            out[i] = float(np.sum(-p * (a * w) ** p * vi ** (-p - 1.0)))
    return out


def oracle_solve(inst: Instance, tol: float = 1e-7) -> Solution:
    """Independent reference solution via the link-price dual."""
    t0 = time.perf_counter()
    if inst.paths_per_class != 1:
        raise NotSupportedUtility("oracle handles single-path instances")
    R = inst.routing.dense()
    c = inst.network.capacities
    terms = _dual_terms(inst)
    v_min = 1e-12

    def dual(rho: np.ndarray):
        v = np.maximum(R.T @ rho, v_min)
        val = float(rho @ c)
        grad_v = np.empty(len(terms))
        for i, (tag, w, a) in enumerate(terms):
            if tag == "log":
                val += float(np.sum(w * (np.log(w / v[i]) - 1.0)))
                grad_v[i] = -float(np.sum(w / v[i]))
            else:
                u = (a * w / v[i]) ** (1.0 / (a + 1.0))
                val += float(np.sum(-w * u ** (-a) - v[i] * u))
                grad_v[i] = -float(np.sum(u))
            # d(dual)/d(rho) = c + R * grad_v  (grad_v = -x_i)
        return val, c + R @ grad_v

    rho0 = np.full(R.shape[0], 0.1)
    res = scipy.optimize.minimize(
        dual,
        rho0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * R.shape[0],
        options={"maxiter": 20000, "ftol": 1e-18, "gtol": 1e-12},
    )
    rho = np.maximum(res.x, 0.0)
    rho = _newton_polish(rho, R, c, terms)

    v = np.maximum(R.T @ rho, v_min)
    u = tuple(_primal_rates(terms, v))
    x = np.asarray([ui.sum() for ui in u])
    report = kkt_check_single_path(inst, x, u, rho, tol=tol)
    if not report.passed:
        raise NonConvergence(
            f"oracle residual {report.max_residual:.3e} exceeds {tol:.1e}"
        )
    objective = float(
        sum(evaluate(f, r) for cls, ui in zip(inst.classes, u) for f, r in zip(cls.flows, ui))
    )
    return Solution(
        x=x,
        u=u,
        lam=None,
        rho=rho,
        objective=objective,
        l_max=float(np.max(R @ x)),
        n_iter=int(res.nit),
        wall_time=time.perf_counter() - t0,
        converged=True,
    )


def _newton_polish(rho, R, c, terms, rounds: int = 40):
    """Drive the saturated-link equations to machine precision.

    Solves R_A x(rho) = c_A over the links with positive price by damped
    Newton steps; leaves rho unchanged if the active set is degenerate.
    """
    rho = rho.copy()
    for _ in range(rounds):
        active = np.where(rho > 1e-9)[0]
        if len(active) == 0:
            return rho
        v = np.maximum(R.T @ rho, 1e-12)
        x = np.asarray([ui.sum() for ui in _primal_rates(terms, v)])
        resid = (R @ x - c)[active]
        if np.max(np.abs(resid)) < 1e-13:
            return rho
        slopes = _rate_slopes(terms, v)  # negative
        Ra = R[active]
        jac = (Ra * slopes) @ Ra.T
        try:
            step = np.linalg.solve(jac, resid)
        except np.linalg.LinAlgError:
            return rho
        rho_new = rho.copy()
        rho_new[active] = rho[active] - step
        if np.any(rho_new[active] < 0):
            # a link leaves the active set; take a damped step instead
            rho_new[active] = np.maximum(rho[active] - 0.5 * step, 0.0)
        rho = rho_new
    return rho


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "small"                  # small | iridium | instance file path
    n_values: tuple[int, ...] = (10, 15, 20, 25, 30)
    seed: int = 1
    solvers: tuple[str, ...] = ("admm", "cp", "gradproj")
    params: dict = field(default_factory=dict)   # solver name -> SolverParams
    repetitions: int = 10
    endpoint_rule: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ValueError(f"unknown solver: {s}")

    def solver_params(self, solver: str) -> SolverParams:
        return self.params.get(solver, SolverParams())

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        params = {
            name: SolverParams.from_json(p) for name, p in doc.get("params", {}).items()
        }
        return cls(
            topology=doc.get("topology", "small"),
            n_values=tuple(int(n) for n in doc.get("n_values", (10, 15, 20, 25, 30))),
            seed=int(doc.get("seed", 1)),
            solvers=tuple(doc.get("solvers", ("admm", "cp", "gradproj"))),
            params=params,
            repetitions=int(doc.get("repetitions", 10)),
            endpoint_rule=doc.get("endpoint_rule"),
        )


@dataclass(frozen=True)
class ReportRow:
    solver: str
    n: int
    f_star: float
    l_max: float
    n_iter: int
    t_sec: float       # median over repetitions
    t_mean_sec: float
    converged: bool


@dataclass(frozen=True)
class Report:
    rows: tuple[ReportRow, ...]
    version: str = VERSION
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "rows": [
                {
                    "solver": r.solver,
                    "N": r.n,
                    "f_star": r.f_star,
                    "l_max": r.l_max,
                    "n_iter": r.n_iter,
                    "t_sec": r.t_sec,
                    "t_mean_sec": r.t_mean_sec,
                    "converged": r.converged,
                }
                for r in self.rows
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Report":
        rows = tuple(
            ReportRow(
                solver=r["solver"],
                n=int(r["N"]),
                f_star=float(r["f_star"]),
                l_max=float(r["l_max"]),
                n_iter=int(r["n_iter"]),
                t_sec=float(r["t_sec"]),
                t_mean_sec=float(r["t_mean_sec"]),
                converged=bool(r["converged"]),
            )
            for r in doc["rows"]
        )
        return cls(rows=rows, version=doc.get("version", VERSION), seed=int(doc.get("seed", 0)))


def resolve_topology(name: str) -> tuple[Network, str]:
    """Topology plus its default endpoint rule."""
    if name == "small":
        return small_topology(), "all-pairs"
    if name == "iridium":
        return iridium_topology(), "gateway-constrained"
    inst = load_instance(name)
    return inst.network, "all-pairs"


def _recomputed_row(inst: Instance, solver: str, sol: Solution, times: list[float]) -> ReportRow:
    f_star = float(
        sum(evaluate(f, r) for cls, ui in zip(inst.classes, sol.u) for f, r in zip(cls.flows, ui))
    )
    load = inst.routing.dense() @ sol.x
    return ReportRow(
        solver=solver,
        n=inst.n_classes,
        f_star=f_star,
        l_max=float(np.max(load)),
        n_iter=sol.n_iter,
        t_sec=statistics.median(times),
        t_mean_sec=statistics.fmean(times),
        converged=sol.converged,
    )


def run_experiment(cfg: ExperimentConfig) -> Report:
    """One row per (solver, N); failed rows are flagged, not fatal.

    The per-N instance seed is mix(base seed, N), so adding N values never
    reshuffles existing instances. ``NUMFLOW_THREADS`` caps row parallelism
    (default: serial).
    """
    net, default_rule = resolve_topology(cfg.topology)
    rule = cfg.endpoint_rule or default_rule

    jobs = []
    for n in cfg.n_values:
        inst = gen_instance(net, n, mix(cfg.seed, n), endpoint_rule=rule)
        for solver in cfg.solvers:
            jobs.append((solver, n, inst))

    def run(job) -> ReportRow:
        solver, n, inst = job
        fn = SOLVERS[solver]
        params = cfg.solver_params(solver)
        try:
            times = []
            sol = None
            for _ in range(cfg.repetitions):
                t0 = time.perf_counter()
                sol = fn(inst, params)
                times.append(time.perf_counter() - t0)
            return _recomputed_row(inst, solver, sol, times)
        except Exception:
            return ReportRow(solver, n, float("nan"), float("nan"), 0, 0.0, 0.0, False)

    workers = int(os.environ.get("NUMFLOW_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(job) for job in jobs]
    rows.sort(key=lambda r: (r.solver, r.n))
    return Report(rows=tuple(rows), seed=cfg.seed)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def report_to_csv(rep: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["solver", "N", "f_star", "l_max", "n_iter", "t_sec", "converged"])
    for r in rep.rows:
        writer.writerow(
            [r.solver, r.n, _fmt(r.f_star), _fmt(r.l_max), r.n_iter, _fmt(r.t_sec), _fmt(r.converged)]
        )
    return buf.getvalue()


def emit_report(rep: Report, fmt: str, path: str) -> None:
    """Write the report as CSV or JSON with deterministic ordering."""
    if fmt == "csv":
        payload = report_to_csv(rep)
    elif fmt == "json":
        payload = json.dumps(rep.to_json(), indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format: {fmt}")
    try:
        with open(path, "w") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoError(str(exc)) from exc
