import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from abreu.integrate import integrate
from abreu.model import (
    ClosedFormN1Params,
    DomainError,
    ModelParams,
    State,
    closed_form_n1,
    exact_lambda0,
    first_integral_residual,
    inner_expression,
    rhs_log_form,
    rhs_second_order,
    third_order_residual,
)

nonzero = st.floats(0.05, 20.0).flatmap(lambda x: st.sampled_from([x, -x]))
admissible = st.builds(
    lambda n, kappa, lam, r, f, fp: (ModelParams(n, kappa, lam), State(r, f, fp)),
    st.integers(1, 6),
    st.floats(0.1, 5.0),
    st.floats(-3.0, 3.0),
    st.floats(0.05, 5.0),
    nonzero,
    nonzero,
)


class TestParams:
    def test_rejects_non_integer_dimension(self):
        with pytest.raises(DomainError):
            ModelParams(2.5, 1, 1)
        with pytest.raises(DomainError):
            ModelParams(0, 1, 1)

    def test_casts_fields(self):
        p = ModelParams(3.0, 1, 2)
        assert p.n == 3 and isinstance(p.n, int)
        assert isinstance(p.kappa, float)

    def test_theorem_gate(self):
        assert ModelParams(3, 1, 1).theorems_apply
        assert not ModelParams(3, 1, 0).theorems_apply
        assert not ModelParams(3, -1, 1).theorems_apply


class TestRhs:
    def test_exact_solution_curvature(self):
        # f = 8/r at r = 1: f'' = 16/r^3
        assert rhs_second_order(ModelParams(2, 1, 0), State(1, 8, -8)) == pytest.approx(16, rel=1e-14)

    def test_constant_solution(self):
        for params in (ModelParams(2, 1, 0), ModelParams(5, 2, -1)):
            assert rhs_second_order(params, State(1, 3, 0)) == 0

    def test_n1_closed_form_point(self):
        # f = log((1+r)/(1-r)): f'' = 4r/(1-r^2)^2 = 32/9 at r = 1/2
        s = State(0.5, math.log(3), 8 / 3)
        assert rhs_second_order(ModelParams(1, 1, 0), s) == pytest.approx(32 / 9, rel=1e-14)
        assert rhs_log_form(ModelParams(1, 1, 0), s) == pytest.approx(32 / 9, rel=1e-14)

    def test_log_form_exact_solution(self):
        assert rhs_log_form(ModelParams(2, 1, 0), State(1, 8, -8)) == pytest.approx(16, rel=1e-14)

    def test_log_form_matches_explicit(self):
        p, s = ModelParams(3, 1, 1), State(2, 1, 1)
        assert rhs_log_form(p, s) == pytest.approx(rhs_second_order(p, s), rel=1e-14)

    @pytest.mark.parametrize("state", [State(0, 1, 1), State(-1, 1, 1), State(1, 0, 1)])
    def test_domain(self, state):
        with pytest.raises(DomainError):
            rhs_second_order(ModelParams(2, 1, 1), state)

    def test_log_form_needs_nonzero_slope(self):
        with pytest.raises(DomainError):
            rhs_log_form(ModelParams(2, 1, 1), State(1, 1, 0))

    def test_n1_is_regular_at_zero(self):
        assert rhs_second_order(ModelParams(1, 1, 0), State(0.0, 0.0, 2.0)) == 0.0

    @given(admissible)
    def test_two_forms_agree(self, case):
        params, s = case
        a, b = rhs_second_order(params, s), rhs_log_form(params, s)
        assert abs(a - b) <= 1e-10 * (1 + abs(a))


class TestFirstIntegral:
    def test_symbolic_expansion(self):
        # the residual with f'' from the explicit form vanishes identically
        r, f, fp, n, kappa, lam = sp.symbols("r f fp n kappa lam", nonzero=True)
        F = sp.Function("F")
        A = r / F(r)
        B = 1 / (r**2 * F(r).diff(r)) - 1 / (r * F(r))
        expr = A.diff(r) / r + r * B.diff(r) + (n + 1) * B - lam * r**-n + kappa / n
        fpp = (kappa / n * r - lam * r ** (1 - n) - (n - 1) / f) * fp**2 + (n - 1) / r * fp
        expr = expr.subs(F(r).diff(r, 2), fpp).subs(F(r).diff(r), fp).subs(F(r), f)
        assert sp.simplify(expr) == 0

    def test_exact_solution(self):
        assert abs(first_integral_residual(ModelParams(2, 1, 0), State(1, 8, -8))) <= 1e-12

    def test_generic_state(self):
        assert abs(first_integral_residual(ModelParams(3, 1, 1), State(1.5, 2, 0.7))) <= 1e-12

    def test_n1_closed_form(self):
        f, fp, _ = closed_form_n1(ClosedFormN1Params(1.0), 0.5)
        assert abs(first_integral_residual(ModelParams(1, 1, 0), State(0.5, f, fp))) <= 1e-12

    @given(admissible)
    def test_vanishes_relative(self, case):
        params, s = case
        assert abs(first_integral_residual(params, s, relative=True)) <= 1e-10

    def test_domain(self):
        with pytest.raises(DomainError):
            first_integral_residual(ModelParams(3, 1, 1), State(1, 1, 0))


class TestThirdOrder:
    def test_exact_solution(self):
        p = ModelParams(2, 1, 0)
        traj = integrate(p, State(0.5, *exact_lambda0(p, 0.5)), 2.0)
        assert abs(third_order_residual(p, traj, 1.0)) <= 1e-6

    def test_n1_closed_form(self):
        cp = ClosedFormN1Params(1.0)
        traj = integrate(cp.model, State(-0.9, *closed_form_n1(cp, -0.9)[:2]), 0.9)
        for r in (-0.5, 0.3, 0.7):
            scale = 1 + abs(inner_expression(cp.model, r, *traj(r), traj.derivative(r)[1]))
            assert abs(third_order_residual(cp.model, traj, r)) / scale <= 1e-5

    def test_integrated_case_i(self):
        p = ModelParams(3, 1, 1)
        traj = integrate(p, State(0.1, 1, 1), 2.0)
        for r in (0.2, 0.3, 1.0, 1.7):
            # scaled by the size of the terms being cancelled
            scale = 1 + abs(p.n * inner_expression(p, r, *traj(r), traj.derivative(r)[1]))
            assert abs(third_order_residual(p, traj, r)) / scale <= 1e-5

    def test_near_end_rejected(self):
        p = ModelParams(2, 1, 0)
        traj = integrate(p, State(0.5, *exact_lambda0(p, 0.5)), 2.0)
        with pytest.raises(DomainError):
            third_order_residual(p, traj, 2.0)


class TestClosedForms:
    def test_n1_origin(self):
        f, fp, _ = closed_form_n1(ClosedFormN1Params(1.0), 0.0)
        assert f == 0.0 and fp == pytest.approx(2.0, rel=1e-15)

    def test_n1_half(self):
        f, fp, _ = closed_form_n1(ClosedFormN1Params(1.0), 0.5)
        assert f == pytest.approx(math.log(3), rel=1e-15)
        assert fp == pytest.approx(8 / 3, rel=1e-15)

    @given(st.floats(0.2, 3), st.floats(-2, 2), st.floats(0.2, 3), st.floats(-2, 2))
    def test_midpoint_symmetry(self, rho, alpha, kappa, lam):
        p = ClosedFormN1Params(rho, alpha, 0.0, kappa, lam)
        assert closed_form_n1(p, lam / kappa)[0] == pytest.approx(alpha, abs=1e-12)

    def test_endpoints(self):
        p = ClosedFormN1Params(2.0, kappa=2.0, lam=1.0)
        assert (p.r_minus, p.r_plus) == (-0.5, 1.5)
        with pytest.raises(DomainError):
            closed_form_n1(p, 1.5)

    def test_n1_satisfies_ode(self):
        p = ClosedFormN1Params(1.3, 0.2, 0.0, 1.7, 0.4)
        for r in np.linspace(p.r_minus, p.r_plus, 102)[1:-1]:
            f, fp, _ = closed_form_n1(p, r)
            assert fp > 0
            want = (p.kappa * r - p.lam) * fp * fp
            got = rhs_second_order(p.model, State(r, f, fp))
            assert got == pytest.approx(want, rel=1e-12, abs=1e-300)

    def test_potential_derivative_is_f(self):
        p = ClosedFormN1Params(1.0, 0.3, 0.1)
        h = 1e-6
        for r in (-0.5, 0.1, 0.7):
            g_plus, g_minus = closed_form_n1(p, r + h)[2], closed_form_n1(p, r - h)[2]
            assert (g_plus - g_minus) / (2 * h) == pytest.approx(closed_form_n1(p, r)[0], abs=1e-8)

    @pytest.mark.parametrize(
        "n,kappa,r,want",
        [(2, 1, 1, (8, -8)), (3, 1, 18, (1, -1 / 18)), (1, 2, 1, (1, -1))],
    )
    def test_exact_lambda0(self, n, kappa, r, want):
        assert exact_lambda0(ModelParams(n, kappa, 0), r) == pytest.approx(want, rel=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_exact_lambda0_second_derivative(self, n):
        p = ModelParams(n, 1.5, 0)
        for r in (0.3, 1.0, 7.0):
            f, fp = exact_lambda0(p, r)
            want = 4 * n * n / (p.kappa * r**3)
            assert rhs_second_order(p, State(r, f, fp)) == pytest.approx(want, rel=1e-12)

    def test_exact_lambda0_domain(self):
        with pytest.raises(DomainError):
            exact_lambda0(ModelParams(2, 1, 1), 1.0)
        with pytest.raises(DomainError):
            exact_lambda0(ModelParams(2, 1, 0), 0.0)
