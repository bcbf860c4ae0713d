import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from abreu.integrate import BlowUp, Trajectory, integrate
from abreu.model import DomainError, ModelParams, State
from abreu.series import Algebraic, Logarithmic
from abreu.singularity import SingularityReport, UnclassifiedBranch, branch_sign_check, classify_branch

P3 = ModelParams(3, 1, 1)


def algebraic_trajectory(n, r0=1.0, c0=-1.0, count=60):
    d = np.geomspace(0.1, 1e-10, count)
    r = r0 - d
    p = 1.0 / n
    f = c0 * d**p
    fp = -c0 * p * d ** (p - 1)
    fpp = c0 * p * (p - 1) * d ** (p - 2)
    return Trajectory.from_samples(ModelParams(n, 1, 1), r, f, fp, fpp, BlowUp(r[-1], r0))


def log_trajectory(params, r0, c_hat, count=60):
    d = np.geomspace(0.1, 1e-12, count)
    r = r0 - d
    return Trajectory.from_samples(params, r, c_hat * np.log(d), -c_hat / d, -c_hat / d**2, BlowUp(r[-1], r0))


class TestAlgebraic:
    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_indicator_and_root(self, n):
        rep = classify_branch(ModelParams(n, 1, 1), algebraic_trajectory(n))
        assert isinstance(rep.kind, Algebraic)
        assert rep.indicator_limit == pytest.approx(1 - n, rel=2e-2)
        assert rep.kind.r0 == pytest.approx(1.0, abs=1e-3)
        assert rep.kind.c0 == pytest.approx(-1.0, rel=1e-3)
        assert rep.fit_residual <= 1e-2
        assert rep.chat_law_deviation is None

    def test_spec_example(self):
        rep = classify_branch(ModelParams(2, 1, 1), algebraic_trajectory(2, c0=-1))
        assert rep.indicator_limit == pytest.approx(-1, rel=1e-6)
        assert rep.regime == "asymptotic"

    @given(st.integers(2, 5), st.floats(0.1, 100))
    def test_scale_robust(self, n, scale):
        base = algebraic_trajectory(n, c0=0.7)
        t = Trajectory.from_samples(base.params, base.r, scale * base.f, scale * base.fp, scale * base.fpp, base.termination)
        rep0, rep = classify_branch(base.params, base), classify_branch(base.params, t)
        assert type(rep.kind) is type(rep0.kind)
        assert rep.kind.r0 == pytest.approx(rep0.kind.r0, abs=1e-9)
        assert rep.kind.c0 == pytest.approx(scale * rep0.kind.c0, rel=1e-6)

    @given(st.floats(0.3, 5), st.floats(-3, 3).filter(lambda c: abs(c) > 0.05))
    def test_recovers_location(self, r0, c0):
        rep = classify_branch(ModelParams(3, 1, 1), algebraic_trajectory(3, r0, c0))
        assert rep.kind.r0 == pytest.approx(r0, abs=1e-3)
        assert rep.kind.c0 == pytest.approx(c0, rel=1e-3)


class TestLogarithmic:
    def test_law_example(self):
        rep = classify_branch(P3, log_trajectory(P3, 1.0, 1.5))
        assert isinstance(rep.kind, Logarithmic)
        assert rep.kind.r0 == pytest.approx(1.0, abs=1e-3)
        assert rep.chat_law_deviation <= 1e-3

    @pytest.mark.parametrize("c_hat", [-2.0, -0.5, 0.8, 3.0])
    def test_slope_within_one_percent(self, c_hat):
        rep = classify_branch(P3, log_trajectory(P3, 2.0, c_hat))
        assert isinstance(rep.kind, Logarithmic)
        assert rep.c_hat == pytest.approx(c_hat, rel=1e-2)

    @given(
        st.floats(0.3, 3).flatmap(lambda x: st.sampled_from([x, -x])),
        st.floats(0.5, 3),
        st.sampled_from([1e-8, 1e-10, 1e-12]),
    )
    def test_slope_and_root(self, c_hat, r0, closest):
        d = np.geomspace(0.1, closest, 60)
        t = Trajectory.from_samples(P3, r0 - d, c_hat * np.log(d), -c_hat / d, -c_hat / d**2, BlowUp(r0 - closest, r0))
        rep = classify_branch(P3, t)
        assert isinstance(rep.kind, Logarithmic)
        assert rep.c_hat == pytest.approx(c_hat, rel=1e-2)
        assert rep.kind.r0 == pytest.approx(r0, abs=1e-3)

    def test_integrated_case_i(self):
        traj = integrate(P3, State(0.1, 1, 1), 10)
        rep = classify_branch(P3, traj)
        assert isinstance(rep.kind, Logarithmic)
        assert rep.c_hat < 0
        assert rep.chat_law_deviation <= 0.05
        assert rep.kind.r0 == pytest.approx(traj.termination.r_star, rel=1e-6)


class TestIntegrated:
    @pytest.mark.parametrize("init", [(1, 1), (-1, 1), (-0.5, -2), (2, 2), (-2, 0.5)])
    def test_forward_blow_ups_classify(self, init):
        traj = integrate(P3, State(0.1, *init), 10)
        assert classify_branch(P3, traj).kind.r0 > 0.1

    def test_case_ii_algebraic(self):
        rep = classify_branch(P3, integrate(P3, State(0.1, -1, 1), 10))
        assert isinstance(rep.kind, Algebraic)
        assert rep.kind.c0 < 0


class TestPreconditions:
    def test_reached_bound(self):
        traj = integrate(P3, State(0.1, 1, 1), 0.5)
        with pytest.raises(DomainError):
            classify_branch(P3, traj)

    def test_too_short(self):
        t = algebraic_trajectory(3, count=10)
        with pytest.raises(DomainError):
            classify_branch(t.params, t)

    def test_unclassified(self):
        r = np.linspace(0.5, 0.99, 40)
        f = 2 + np.sin(30 * r)
        t = Trajectory.from_samples(P3, r, f, 30 * np.cos(30 * r), -900 * np.sin(30 * r), BlowUp(0.99, 1.0))
        with pytest.raises(UnclassifiedBranch):
            classify_branch(P3, t)


def report(kind, c_hat=None):
    return SingularityReport(kind, 0.0, 0.0, None if c_hat is None else 0.0, c_hat)


class TestSignCheck:
    def test_case_i_log(self):
        assert branch_sign_check(report(Logarithmic(1), -0.8), "i")[0]

    def test_case_ii_algebraic(self):
        assert branch_sign_check(report(Algebraic(1, -0.5)), "ii")[0]

    def test_case_i_algebraic(self):
        ok, why = branch_sign_check(report(Algebraic(1, 0.5)), "i")
        assert not ok and "logarithmic" in why

    @pytest.mark.parametrize(
        "kind,case",
        [
            (Logarithmic(1), "iv"),
            (Algebraic(1, 0.5), "ii"),
            (Algebraic(1, -0.5), "iii"),
        ],
    )
    def test_wrong_sign(self, kind, case):
        rep = report(kind, 0.8 if isinstance(kind, Logarithmic) else None)
        if case == "iv":
            rep = report(kind, -0.8)
        ok, why = branch_sign_check(rep, case)
        assert not ok and why

    def test_right_signs(self):
        assert branch_sign_check(report(Algebraic(1, 0.5)), "iii")[0]
        assert branch_sign_check(report(Logarithmic(1), 0.8), "iv")[0]

    def test_unknown_case(self):
        with pytest.raises(ValueError):
            branch_sign_check(report(Logarithmic(1), 1.0), "v")
