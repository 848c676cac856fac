"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The criteria are property-based (decomposition equivalences, cross-solver
agreement, structural reproduction of the benchmark tables' invariant
columns) rather than exact objective-value reproduction.
"""

import numpy as np

from numflow.multipath import kkt_check_multipath, solve_multipath
from numflow.netmodel import (
    FlowClass,
    Instance,
    Link,
    Network,
    gen_instance,
    instance_to_json,
    iridium_topology,
    routing_matrix,
    small_topology,
)
from numflow.harness import ExperimentConfig, oracle_solve, run_experiment
from numflow.pwl import PwlConcave, pwl_conjugate, pwl_eval, pwl_supconv
from numflow.rng import MixRng
from numflow.solvers import (
    SolverParams,
    admm_u_update,
    cp_prox_f,
    cp_prox_gstar,
    project_polytope,
    solve_admm,
    solve_cp,
    solve_gradproj,
    spd_prefactor,
)
from numflow.utility import (
    NegPower,
    Quadratic,
    WeightedLog,
    aggregate_class,
    apportion,
    evaluate,
)


def _verdict(name: str, ok: bool) -> None:
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")
    assert ok


def _random_small_instance(seed: int):
    """<= 6 nodes, <= 8 links, N <= 4 classes, K_i <= 5 flows."""
    rng = MixRng(seed)
    m = rng.randint(3, 4)  # bidirectional ring: 2m directed links (6 or 8)
    links = []
    for v in range(1, m + 1):
        nxt = v % m + 1
        links.append(Link(v, nxt, 10.0))
        links.append(Link(nxt, v, 10.0))
    net = Network(m, tuple(links))
    pairs = [(s, d) for s in range(1, m + 1) for d in range(1, m + 1) if s != d]
    n = rng.randint(1, 4)
    chosen = [pairs[i] for i in rng.sample(len(pairs), n)]
    classes = []
    for src, dst in chosen:
        k = rng.randint(1, 5)
        if rng.randint(0, 1) == 0:
            flows = tuple(WeightedLog(0.1 + rng.uniform()) for _ in range(k))
        else:
            a = float(rng.randint(1, 2))
            flows = tuple(NegPower(0.1 + rng.uniform(), a) for _ in range(k))
        from numflow.netmodel import dijkstra_path

        classes.append(FlowClass(src, dst, (dijkstra_path(net, src, dst),), flows))
    classes = tuple(classes)
    return Instance(net, classes, routing_matrix(net, classes))


def _split_into_singletons(inst: Instance) -> Instance:
    """The full K-variable problem: every flow becomes its own class."""
    classes = []
    for cls in inst.classes:
        for f in cls.flows:
            classes.append(FlowClass(cls.source, cls.destination, cls.paths, (f,)))
    classes = tuple(classes)
    return Instance(inst.network, classes, routing_matrix(inst.network, classes))


def _aggregate_instance(inst: Instance) -> Instance:
    """The N-variable problem: one aggregate flow per class."""
    classes = tuple(
        FlowClass(cls.source, cls.destination, cls.paths, (aggregate_class(cls.flows).aggregate,))
        for cls in inst.classes
    )
    return Instance(inst.network, classes, routing_matrix(inst.network, classes))


def test_criterion_1_aggregate_decomposition_equivalence():
    ok = True
    for seed in range(1, 51):
        inst = _random_small_instance(seed)
        full = oracle_solve(_split_into_singletons(inst))
        agg = oracle_solve(_aggregate_instance(inst))
        u_full = np.concatenate(full.u)
        u_apportioned = np.concatenate(
            [apportion(aggregate_class(cls.flows), agg.x[i]) for i, cls in enumerate(inst.classes)]
        )
        if np.max(np.abs(u_apportioned - u_full) / np.abs(u_full)) > 1e-5:
            ok = False
        obj_apportioned = float(
            sum(
                evaluate(f, r)
                for cls, ui in zip(
                    inst.classes,
                    np.split(u_apportioned, np.cumsum([len(c.flows) for c in inst.classes])[:-1]),
                )
                for f, r in zip(cls.flows, ui)
            )
        )
        if abs(obj_apportioned - full.objective) > 1e-6 * abs(full.objective):
            ok = False
    _verdict("1 single-path aggregate-decomposition equivalence", ok)


def test_criterion_2_multipath_allocation_equivalence():
    params = SolverParams(alpha=2.0, tol=1e-6, max_iter=5000)
    net = small_topology()
    ok = True
    for seed in range(1, 31):
        rng = MixRng(seed)
        from numflow.multipath import k_paths
        from numflow.errors import InsufficientPaths

        pairs = [(s, d) for s in range(1, 7) for d in range(1, 7) if s != d]
        order = rng.sample(len(pairs), len(pairs))
        n_target = rng.randint(1, 3)
        classes = []
        for idx in order:
            if len(classes) == n_target:
                break
            src, dst = pairs[idx]
            try:
                paths = k_paths(net, src, dst, 2)
            except InsufficientPaths:
                continue
            k = rng.randint(1, 4)
            flows = tuple(WeightedLog(0.1 + rng.uniform()) for _ in range(k))
            classes.append(FlowClass(src, dst, paths, flows))
        classes = tuple(classes)
        inst = Instance(net, classes, routing_matrix(net, classes), "multipath", 2, seed)
        alloc = solve_multipath(inst, params)
        if not alloc.converged:
            ok = False
            continue
        x_bar = alloc.x.sum(axis=1)
        for i in range(len(classes)):
            scale = max(x_bar[i], 1e-12)
            if np.max(np.abs(alloc.u[i].sum(axis=0) - alloc.x[i])) > 1e-9 * scale:
                ok = False
            if np.min(alloc.u[i]) < 0:
                ok = False
        if not kkt_check_multipath(inst, alloc, tol=1e-5).passed:
            ok = False
    _verdict("2 multipath aggregate-allocation equivalence", ok)


# shared runs for criteria 3 and 4
_SMALL_RUNS = {}


def _small_sweep():
    if not _SMALL_RUNS:
        net = small_topology()
        params = SolverParams(r=20.0, pct=1e-4)
        for n in (10, 15, 20, 25, 30):
            inst = gen_instance(net, n, seed=n)
            _SMALL_RUNS[n] = {
                "admm": solve_admm(inst, params),
                "cp": solve_cp(inst, params),
                "gradproj": solve_gradproj(inst, params),
                "inst": inst,
            }
    return _SMALL_RUNS


def _recomputed_objective(inst, sol):
    return float(
        sum(evaluate(f, r) for cls, ui in zip(inst.classes, sol.u) for f, r in zip(cls.flows, ui))
    )


def test_criterion_3_cross_solver_agreement():
    ok = True
    for n, runs in _small_sweep().items():
        inst = runs["inst"]
        objs = {}
        for name in ("admm", "cp", "gradproj"):
            sol = runs[name]
            if not sol.converged:
                ok = False
            objs[name] = _recomputed_objective(inst, sol)
            l_max = float(np.max(inst.routing.dense() @ sol.x))
            if not (10.0 - 1e-3 <= l_max <= 10.0 + 1e-3):
                ok = False
        spread = max(objs.values()) - min(objs.values())
        if spread > 1e-3 * abs(min(objs.values())):
            ok = False
    _verdict("3 cross-solver objective and l_max agreement", ok)


def test_criterion_4_admm_iteration_magnitude():
    ok = all(50 <= runs["admm"].n_iter <= 1000 for runs in _small_sweep().values())
    _verdict("4 ADMM iteration-count magnitude", ok)


def test_criterion_5_large_graph_scaling():
    net = iridium_topology()
    params = SolverParams(r=40.0, pct=1e-4)
    ok = True
    for n in (50, 75):
        inst = gen_instance(net, n, seed=n, endpoint_rule="gateway-constrained")
        sol = solve_admm(inst, params)
        l_max = float(np.max(inst.routing.dense() @ sol.x))
        if not sol.converged or l_max > 10.0 + 1e-2 or sol.n_iter > 1000:
            ok = False
    _verdict("5 large-graph ADMM scaling", ok)


def _random_pwl(rng: MixRng) -> PwlConcave:
    nseg = rng.randint(1, 4)
    breaks = [0.0]
    for _ in range(nseg):
        breaks.append(breaks[-1] + 0.1 + 3.0 * rng.uniform())
    slopes = sorted((5.0 * rng.uniform() for _ in range(nseg)), reverse=True)
    return PwlConcave(tuple(breaks), tuple(slopes) + (0.0,))


def test_criterion_6_pwl_algebra():
    rng = MixRng(101)
    ok = True
    for _ in range(200):
        f = _random_pwl(rng)
        ff = pwl_conjugate(pwl_conjugate(f))
        grid = np.linspace(0.0, f.breakpoints[-1] + 2.0, 25)
        if any(abs(pwl_eval(ff, x) - pwl_eval(f, x)) > 1e-12 for x in grid):
            ok = False
    step = 0.01
    for _ in range(50):
        a, b = _random_pwl(rng), _random_pwl(rng)
        s = pwl_supconv([a, b])
        max_slope = max(a.slopes[0], b.slopes[0])
        for x in np.linspace(0.0, a.breakpoints[-1] + b.breakpoints[-1], 7):
            splits = np.arange(0.0, x + step / 2, step)
            best = max(pwl_eval(a, t) + pwl_eval(b, x - t) for t in splits)
            if abs(pwl_eval(s, x) - best) > 2 * step * max_slope:
                ok = False
    f = PwlConcave((0.0, 2.0), (3.0, 0.0))
    s = pwl_supconv([f, f])
    if s.breakpoints != (0.0, 4.0) or s.slopes != (3.0, 0.0) or pwl_eval(s, 4.0) != 12.0:
        ok = False
    _verdict("6 PWL conjugation and supremal convolution", ok)


def test_criterion_7_quadratic_projection():
    rng = MixRng(103)
    ok = True
    for trial in range(50):
        k = rng.randint(2, 5)
        z = np.asarray([0.1 + 4.9 * rng.uniform() for _ in range(k)])
        cu = aggregate_class([Quadratic(v) for v in z])
        agg = cu.aggregate
        lower = max(agg.lower, 0.0)
        if trial % 5 == 0:
            cap = lower  # forces the smallest-target flow to u_k = 0 exactly
        else:
            cap = lower + (z.sum() + 1.0 - lower) * rng.uniform()
        x_star = min(max(agg.z_bar, lower), cap)
        u_agg = np.asarray(apportion(cu, x_star))
        u_qp = project_polytope(z, np.ones((1, k)), np.asarray([cap]))
        if np.max(np.abs(u_agg - u_qp)) > 1e-8:
            ok = False
        if trial % 5 == 0 and abs(u_agg[int(np.argmin(z))]) > 1e-12:
            ok = False
    _verdict("7 quadratic aggregate-then-apportion projection", ok)


def test_criterion_8_prox_and_update_identities():
    rng = MixRng(107)
    ok = True
    for _ in range(100):
        w = np.asarray([0.1 + rng.uniform() for _ in range(rng.randint(1, 5))])
        psi = 4.0 * rng.uniform() - 2.0
        r = 0.5 + 3.0 * rng.uniform()
        u = admm_u_update(psi, r, w)
        s = float(u.sum())
        if np.max(np.abs(w / u - psi - r * s)) > 1e-10 * max(1.0, abs(psi) + r * s):
            ok = False
        z = np.asarray([6.0 * rng.uniform() - 3.0 for _ in range(len(w))])
        tau = 0.01 + rng.uniform()
        uf = cp_prox_f(z, tau, w)
        if np.max(np.abs(uf - z - tau * w / uf)) > 1e-12 * max(1.0, float(np.max(np.abs(uf)))):
            ok = False
        sigma = 0.1 + 2.0 * rng.uniform()
        c = np.asarray([0.5 + 10.0 * rng.uniform() for _ in range(len(w))])
        zg = np.asarray([30.0 * rng.uniform() - 10.0 for _ in range(len(w))])
        if not np.array_equal(cp_prox_gstar(zg, sigma, c), np.maximum(0.0, zg - sigma * c)):
            ok = False
    npr = np.random.default_rng(5)
    for _ in range(10):
        R = (npr.random((8, 5)) < 0.4).astype(float)
        A = np.eye(5) + R.T @ R
        factor = spd_prefactor(R)
        b = npr.standard_normal(5)
        x = factor.solve(b)
        if np.linalg.norm(A @ x - b) > 1e-10 * np.linalg.norm(b):
            ok = False
    _verdict("8 prox and update identities", ok)


def test_criterion_9_determinism():
    net = small_topology()
    a = instance_to_json(gen_instance(net, 8, seed=42))
    b = instance_to_json(gen_instance(net, 8, seed=42))
    ok = a == b
    cfg = ExperimentConfig(
        topology="small", n_values=(5,), seed=7, solvers=("admm",), repetitions=1
    )
    strip = lambda r: (r.solver, r.n, r.f_star, r.l_max, r.n_iter, r.converged)
    r1 = [strip(r) for r in run_experiment(cfg).rows]
    r2 = [strip(r) for r in run_experiment(cfg).rows]
    ok = ok and r1 == r2
    _verdict("9 bit-identical reproducibility", ok)
