"""Acceptance criteria 1-10.

Each test prints one "PASS criterion k: ..." or "FAIL criterion k: ..." line
and then asserts.  The lines are also collected for pytest's terminal
summary; ``python tests/test_acceptance.py`` runs them without pytest.
"""

import math
import time

import numpy as np
import pytest

from abreu.classify import Asymptote, Branch, Origin, TheoremCase, classify_backward, classify_forward, scan
from abreu.geometry import PolytopePotential, curvature_scan, fd_convergence_order, pde_residual_radial
from abreu.integrate import BlowUp, Trajectory, integrate, seed_from_origin
from abreu.model import ClosedFormN1Params, ModelParams, State, closed_form_n1, exact_lambda0, first_integral_residual
from abreu.series import Algebraic, Logarithmic, RegularA, RegularB, Vanishing
from abreu.singularity import classify_branch
from abreu.verify import PDE_CONFIG, box_grid, closed_form_run, cuboid_oracle, exact_solution_run, hessian_suite, max_first_integral

P3 = ModelParams(3, 1, 1)
GRID = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
REPORT: list[str] = []


def report(k, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    REPORT.append(line)
    print(line)
    assert ok, line


def test_criterion_1_exact_solution():
    worst_err = worst_time = 0.0
    for n in (1, 2, 3):
        t0 = time.perf_counter()
        traj, err = exact_solution_run(n, kappa=1.0, r0=0.5, r1=50.0)
        worst_time = max(worst_time, time.perf_counter() - t0)
        assert traj.termination.tag == "reached_bound"
        worst_err = max(worst_err, err)
    report(1, worst_err <= 1e-8 and worst_time < 1.0, f"max rel error {worst_err:.2e} (<= 1e-8), slowest case {worst_time:.3f} s (< 1 s)")


def test_criterion_2_closed_form_n1():
    p = ClosedFormN1Params(1.0, 0.0, 0.0, 1.0, 0.0)
    traj, err, g_err = closed_form_run(p, margin=0.05)
    assert traj.domain == pytest.approx((p.r_minus + 0.05, p.r_plus - 0.05))
    report(2, err <= 1e-8 and g_err <= 1e-6, f"f, f' rel error {err:.2e} (<= 1e-8), potential error {g_err:.2e} (<= 1e-6)")


def test_criterion_3_first_integral():
    rng = np.random.default_rng(3)
    cloud = 0.0
    for _ in range(200):
        p = ModelParams(int(rng.integers(1, 7)), rng.uniform(0.1, 5), rng.uniform(-3, 3))
        s = State(rng.uniform(0.05, 5), rng.choice([-1, 1]) * rng.uniform(0.05, 20), rng.choice([-1, 1]) * rng.uniform(0.05, 20))
        cloud = max(cloud, abs(first_integral_residual(p, s, relative=True)))
    trajs = [exact_solution_run(n)[0] for n in (1, 2, 3)]
    trajs.append(closed_form_run()[0])
    for f in (-1.0, 1.0):
        for fp in (-1.0, 1.0):
            fwd = classify_forward(P3, f, fp)
            trajs.append(fwd.trajectory)
    nodes = max(max_first_integral(t) for t in trajs)
    report(3, cloud <= 1e-10 and nodes <= 1e-7, f"state cloud {cloud:.2e} (<= 1e-10), trajectory nodes {nodes:.2e} (<= 1e-7)")


def test_criterion_4_lemma():
    rng = np.random.default_rng(4)
    flips = 0
    for k in range(200):
        p = ModelParams(int(rng.choice([2, 3, 5])), 1.0, float(rng.choice([-1.0, 1.0])))
        f = rng.choice([-1, 1]) * rng.uniform(0.1, 10)
        fp = rng.choice([-1, 1]) * rng.uniform(0.1, 10)
        traj = integrate(p, State(0.1, f, fp), 100.0 if k % 2 == 0 else 0.0)
        flips += int(np.any(np.sign(traj.f) != np.sign(f)) or np.any(np.sign(traj.fp) != np.sign(fp)))
    report(4, flips == 0, f"{flips} sign changes over 200 random trajectories (100 forward, 100 backward)")


def test_criterion_5_section3_experiments():
    t0 = time.perf_counter()
    problems = []
    for (f, fp), case, kind, sign in [
        ((1, 1), "i", Logarithmic, -1),
        ((-1, 1), "ii", Algebraic, -1),
        ((1, -1), "iii", None, None),
        ((-1, -1), "iv", None, None),
    ]:
        res = classify_forward(P3, f, fp, 0.1)
        if res.case is not TheoremCase(case) or res.membership is not True:
            problems.append(f"({f},{fp}): case {res.case.value}, membership {res.membership}")
        if kind is not None:
            o = res.outcome
            if not (isinstance(o, Branch) and isinstance(o.report.kind, kind) and math.copysign(1, o.report.coefficient) == sign):
                problems.append(f"({f},{fp}): {o}")
    result = scan(P3, GRID, GRID, 0.1)
    elapsed = time.perf_counter() - t0
    ok = not problems and not result.violations and len(result.rows) == 36 and elapsed < 30
    detail = f"quadrants ok={not problems}, 6x6 scan {len(result.violations)} violations, {elapsed:.1f} s (< 30 s)"
    if problems:
        detail += "; " + "; ".join(problems)
    report(5, ok, detail)


def _algebraic(n, r0=1.0, c0=-1.0):
    d = np.geomspace(0.1, 1e-10, 60)
    q = 1.0 / n
    return Trajectory.from_samples(
        ModelParams(n, 1, 1), r0 - d, c0 * d**q, -c0 * q * d ** (q - 1), c0 * q * (q - 1) * d ** (q - 2), BlowUp(r0 - 1e-10, r0)
    )


def test_criterion_6_branch_calibration():
    ind_err = r0_err = 0.0
    for n in (2, 3, 4, 5):
        rep = classify_branch(ModelParams(n, 1, 1), _algebraic(n))
        assert isinstance(rep.kind, Algebraic)
        ind_err = max(ind_err, abs(rep.indicator_limit - (1 - n)) / (n - 1))
        r0_err = max(r0_err, abs(rep.kind.r0 - 1.0))
    d = np.geomspace(0.1, 1e-12, 60)
    c = 1.5
    syn = classify_branch(P3, Trajectory.from_samples(P3, 1 - d, c * np.log(d), -c / d, -c / d**2, BlowUp(1 - 1e-12, 1.0)))
    syn_dev = syn.chat_law_deviation
    slope_err = abs(syn.c_hat - c) / c
    integrated = []
    for f in (0.5, 1.0, 2.0):
        for fp in (0.5, 1.0, 2.0):
            rep = classify_branch(P3, integrate(P3, State(0.1, f, fp), 10.0))
            assert isinstance(rep.kind, Logarithmic)
            integrated.append(rep.chat_law_deviation)
    worst = max(integrated)
    ok = ind_err <= 0.02 and r0_err <= 1e-3 and syn_dev <= 1e-2 and slope_err <= 1e-2 and worst <= 0.05
    report(
        6,
        ok,
        f"indicator {ind_err:.1e} (<= 2%), r0 {r0_err:.1e} (<= 1e-3), synthetic c_hat law {syn_dev:.1e} slope {slope_err:.1e} (<= 1%), "
        f"integrated case i law {worst:.2%} (<= 5%)",
    )


ROUND_TRIPS = [
    (ModelParams(3, 1, 1), RegularA(1, 1)),
    (ModelParams(3, 1, 1), RegularA(-0.5, -2)),
    (ModelParams(3, 1, 1), RegularB(1)),
    (ModelParams(3, 1, 1), Vanishing()),
    (ModelParams(3, 1, -1), RegularA(2, -1)),
    (ModelParams(3, 1, -1), RegularB(-2)),
    (ModelParams(3, 1, -1), Vanishing()),
    (ModelParams(2, 1, 1), RegularB(1)),
    (ModelParams(2, 1, -1), RegularB(0.5)),
]


def test_criterion_7_backward_round_trips():
    worst = 0.0
    misses = []
    for params, b in ROUND_TRIPS:
        fwd = integrate(params, seed_from_origin(params, b, 1e-3), 0.05)
        res = classify_backward(params, fwd.f[-1], fwd.fp[-1], 0.05)
        o = res.outcome
        if not (isinstance(o, Origin) and type(o.behavior) is type(b)) or res.membership is not True:
            misses.append(f"{b} at n={params.n}, lambda={params.lam:g} -> {o.to_dict().get('kind', o.tag)}")
            continue
        for name in ("f0", "a"):
            if hasattr(b, name):
                want = getattr(b, name)
                worst = max(worst, abs(getattr(o.behavior, name) - want) / abs(want))
    detail = f"{len(ROUND_TRIPS) - len(misses)}/{len(ROUND_TRIPS)} behaviours recovered, worst constant error {worst:.1e} (<= 1e-3)"
    if misses:
        detail += "; " + "; ".join(misses)
    report(7, not misses and worst <= 1e-3, detail)


def test_criterion_8_pde():
    p2 = ModelParams(2, 1, 0)
    exact = integrate(p2, State(0.4, *exact_lambda0(p2, 0.4)), 2.5, PDE_CONFIG)
    e_exact = pde_residual_radial(p2, exact, np.linspace(0.5, 2.0, 7), h=1e-3).max_residual
    cp = ClosedFormN1Params(1.0)
    n1 = integrate(cp.model, State(-0.95, *closed_form_n1(cp, -0.95)[:2]), 0.95, PDE_CONFIG)
    e_n1 = pde_residual_radial(cp.model, n1, np.linspace(-0.8, 0.8, 9)).max_residual
    traj = integrate(P3, State(0.1, 1, 1), 10.0, PDE_CONFIG)
    r_star = traj.termination.r_star
    e_int = pde_residual_radial(P3, traj, np.linspace(0.2, 0.8 * r_star, 12)).max_residual
    order = min(fd_convergence_order(P3, traj, np.linspace(0.3, 0.8 * r_star, 8), [0.02, 0.01, 0.005]))
    ok = e_exact <= 1e-4 and e_n1 <= 1e-4 and e_int <= 1e-3 and order >= 1.9
    report(
        8,
        ok,
        f"exact {e_exact:.1e}, n=1 closed form {e_n1:.1e} (<= 1e-4), integrated case i on [0.2, {0.8 * r_star:.3f}] "
        f"{e_int:.1e} (<= 1e-3), FD order {order:.2f} (>= 1.9)",
    )


def test_criterion_9_polytope_curvature():
    boxes = [[(0.0, 1.0)], [(0.0, 1.0), (0.0, 2.0)], [(-1.0, 1.0), (0.0, 0.5), (2.0, 5.0)]]
    s_err = aff = 0.0
    for bounds in boxes:
        rep = curvature_scan(PolytopePotential.cuboid(bounds), box_grid(bounds))
        s_err = max(s_err, float(np.max(np.abs(rep.S - cuboid_oracle(bounds)))))
        aff = max(aff, rep.affine_deviation)
    report(9, s_err <= 1e-5 and aff <= 1e-5, f"max |S - sum 4/(b-a)| {s_err:.1e}, affine deviation {aff:.1e} (<= 1e-5) for n = 1, 2, 3")


def test_criterion_10_hessian_structure():
    checks = hessian_suite(seed=10, count=100)
    worst = max(c.measured for c in checks)
    report(10, all(c.passed for c in checks), f"{len(checks)} checks over n = 2..6, worst {worst:.1e} (<= 1e-10)")


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
