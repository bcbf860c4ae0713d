"""Locate and classify the movable branch point that ends a trajectory.

Near a branch point r0 the data follow either f ~ c0 |r - r0|^(1/n)
(algebraic, f -> 0) or f ~ c_hat log|r - r0| (logarithmic, |f| -> inf).
The discriminator is I = f f''/f'^2, which tends to 1 - n for algebraic
branching and diverges for logarithmic branching, where instead f''/f'^2
settles to -1/c_hat.

Some algebraic branch points sit behind a long logarithmic-looking
transient: with K0 = kappa r0/n - lambda r0^(1-n) large and negative, |f|
only reaches the f^(1/n) regime once |r - r0| is far below double
precision.  There the classifier continues the solution analytically from
the last reliable node, using the invariant f^(n-1) f' exp(-K0 f) that the
equation conserves once r is frozen at r0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate as sp_integrate

from .integrate import BlowUp, StepCollapse, Trajectory, VanishingF
from .model import DomainError, ModelParams
from .series import Algebraic, BranchKind, Logarithmic, log_branch_coefficient

WINDOW = 30
SKIP_LAST = 2
CONVERGE_POINTS = 10
CONVERGE_SPREAD = 0.1
# decades of |r - r0| used for the c_hat regression
SLOPE_DECADES = 4.0
MIN_SAMPLES = 15
RESOLVED_ULPS = 256
LOGLOG_GAIN = 0.1


class UnclassifiedBranch(RuntimeError):
    """Neither indicator settles on the terminal window."""

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or {}


@dataclass(frozen=True)
class SingularityReport:
    kind: BranchKind
    indicator_limit: float
    fit_residual: float
    chat_law_deviation: Optional[float] = None
    c_hat: Optional[float] = None
    # "asymptotic" when the leading-order form was reached on the window,
    # "continued" when r0 and c0 come from the frozen-coefficient continuation
    regime: str = "asymptotic"

    @property
    def coefficient(self) -> float:
        """c0 for algebraic branches, c_hat for logarithmic ones."""
        return self.kind.c0 if isinstance(self.kind, Algebraic) else self.c_hat

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.tag,
            "r0": self.kind.r0,
            "c0": getattr(self.kind, "c0", None),
            "c_hat": self.c_hat,
            "indicator_limit": self.indicator_limit,
            "fit_residual": self.fit_residual,
            "chat_law_deviation": self.chat_law_deviation,
            "regime": self.regime,
        }


def _spread(x):
    x = np.asarray(x)
    scale = float(np.max(np.abs(x)))
    return float(np.ptp(x)) / scale if scale else 0.0


def _linear_root(r, y):
    """Fit y = s r + b and return (root, slope, rms residual / rms y)."""
    # centred abscissa: terminal windows can span only a few ulps of r
    mid = float(np.mean(r))
    dx = r - mid
    b = float(np.mean(y))
    s = float(np.dot(dx, y - b) / np.dot(dx, dx))
    resid = y - (s * dx + b)
    scale = math.sqrt(float(np.mean(y * y))) or 1.0
    return mid - b / s, s, math.sqrt(float(np.mean(resid * resid))) / scale


def _continue_to_zero(params, r_l, f_l, fp_l, direction):
    """Follow the frozen invariant from (r_l, f_l, fp_l) down to f = 0.

    Returns (r0, c0).  With K0 frozen, dr/df = (1/fp_l)(f/f_l)^(n-1) exp(-K0 (f - f_l)).
    """
    n = params.n
    k0 = params.radial_coefficient(r_l)
    a = k0 * f_l
    # J = int_0^1 t^(n-1) exp(a (1 - t)) dt, scaled by exp(-max(a, 0)) against overflow
    shift = max(a, 0.0)
    j_scaled, _ = sp_integrate.quad(lambda t: t ** (n - 1) * math.exp(a * (1 - t) - shift), 0.0, 1.0, epsabs=0, epsrel=1e-12, limit=200)
    dr = f_l / fp_l * j_scaled * math.exp(shift)
    r0 = float(r_l - dr)
    # near f = 0: |f|^n = n |f_l|^(n-1) |fp_l| exp(-K0 f_l) |r - r0|
    log_c = (math.log(n) + (n - 1) * math.log(abs(f_l)) + math.log(abs(fp_l)) - a) / n
    return r0, math.copysign(math.exp(log_c), f_l)


def _fit_log(params, r, f, fp, q, window_idx):
    """Estimate (r0, c_hat, loglog coefficient, residual) for a logarithmic approach."""
    n = params.n
    c_hat = -1.0 / float(np.mean(q[window_idx][-CONVERGE_POINTS:]))
    # roots come from the nodes nearest the branch point: over the whole
    # window a small error in c_hat bends the linearised ansatz enough to
    # move the root by a sizeable fraction of the window
    near = window_idx[-CONVERGE_POINTS:]
    rw = r[near]
    # starting r0: root of 1/f', linear to leading order
    r0, _, _ = _linear_root(rw, 1.0 / fp[near])
    d = 0.0
    resid = math.inf
    end = window_idx[-1] + 1
    for _ in range(6):
        dist = np.abs(r[:end] - r0)
        d_end = float(np.min(dist[window_idx[0]:end]))
        sel = np.nonzero((dist > 0) & (dist <= d_end * 10**SLOPE_DECADES))[0]
        if len(sel) < 8:
            sel = np.arange(window_idx[0], end)
        # distances within a few hundred ulps of r carry no usable log
        sel = sel[dist[sel] > RESOLVED_ULPS * np.spacing(abs(r0))] if len(sel) else sel
        if len(sel) < 8:
            break
        L = np.log(dist[sel])
        fs = f[sel]
        scale = math.sqrt(float(np.mean(fs * fs))) or 1.0
        best = None
        col_sets = [[L, np.ones_like(L)]]
        if n > 1 and np.ptp(L) > 2.0:
            col_sets.append([L, np.log(np.abs(fs)), np.ones_like(L)])
        for cols in col_sets:
            design = np.stack(cols, axis=1)
            coef, *_ = np.linalg.lstsq(design, fs, rcond=None)
            res = fs - design @ coef
            rms = math.sqrt(float(np.mean(res * res))) / scale
            # the log|f| column is nearly collinear with log|r - r0|; keep it
            # only when it removes most of the misfit
            if best is None or rms < LOGLOG_GAIN * best[1]:
                best = (coef, rms)
        coef, resid = best
        c_hat = float(coef[0])
        d = float(coef[1]) if len(coef) == 3 else 0.0
        const = float(coef[-1])
        # r0 from the linearised ansatz exp((f - d log|f| - const)/c_hat) = |r - r0|
        lin = np.exp((f[near] - d * (np.log(np.abs(f[near])) if d else 0.0) - const) / c_hat)
        new_r0, _, _ = _linear_root(rw, lin)
        if not math.isfinite(new_r0):
            break
        if abs(new_r0 - r0) <= 1e-15 * max(1.0, abs(r0)):
            r0 = new_r0
            break
        r0 = new_r0
    return r0, c_hat, d, resid


def classify_branch(params: ModelParams, traj: Trajectory) -> SingularityReport:
    """Classify the branch point at the end of ``traj``.

    The window is the last WINDOW nodes before termination, minus the final
    SKIP_LAST.  Raises DomainError if the trajectory did not end singularly
    or is too short, UnclassifiedBranch if neither indicator converges.
    """
    if not isinstance(traj.termination, (BlowUp, StepCollapse, VanishingF)):
        raise DomainError(f"no singularity to classify: trajectory ended with {traj.termination.tag}")
    if len(traj) < MIN_SAMPLES:
        raise DomainError(f"need at least {MIN_SAMPLES} samples, got {len(traj)}")
    n = params.n
    r, f, fp, fpp = traj.r, traj.f, traj.fp, traj.fpp
    m = len(r) - SKIP_LAST
    window_idx = np.arange(max(0, m - WINDOW), m)
    wf = np.abs(f[window_idx])
    q = fpp / (fp * fp)
    ind = f * q
    tail = window_idx[-CONVERGE_POINTS:]
    shrinking = wf[-1] < wf[0]

    if shrinking:
        i_lim = float(np.mean(ind[tail]))
        if _spread(ind[tail]) <= CONVERGE_SPREAD and abs(i_lim - (1 - n)) <= CONVERGE_SPREAD * abs(1 - n):
            rw = r[window_idx]
            r0, slope, _ = _linear_root(rw, wf**n)
            c0 = math.copysign(abs(slope) ** (1.0 / n), f[-1])
            # linearity of |f|^n over the last decade of approach
            dist = np.abs(r[:m] - r0)
            sel = np.nonzero(dist <= 10 * dist[m - 1])[0]
            if len(sel) < 3:
                sel = window_idx
            _, _, resid = _linear_root(r[sel], np.abs(f[sel]) ** n)
            return SingularityReport(Algebraic(r0, c0), i_lim, resid)
        # the f^(1/n) regime is out of reach: continue analytically
        k0 = np.array([params.radial_coefficient(x) for x in r[tail]])
        log_inv = (n - 1) * np.log(np.abs(f[tail])) + np.log(np.abs(fp[tail])) - k0 * f[tail]
        inv_spread = float(np.ptp(log_inv))
        if n > 1 and inv_spread <= math.log1p(CONVERGE_SPREAD):
            last = m - 1
            r0, c0 = _continue_to_zero(params, r[last], f[last], fp[last], traj.direction)
            return SingularityReport(Algebraic(r0, c0), float(ind[last]), inv_spread, regime="continued")
        raise UnclassifiedBranch(
            "|f| decreases but neither I -> 1-n nor the frozen invariant holds",
            {"indicator": float(ind[window_idx[-1]]), "invariant_spread": inv_spread},
        )

    if _spread(q[tail]) <= CONVERGE_SPREAD:
        r0, c_hat, _, resid = _fit_log(params, r, f, fp, q, window_idx)
        if not (math.isfinite(r0) and r0 > 0):
            raise UnclassifiedBranch(f"logarithmic fit gave r0={r0}")
        law = log_branch_coefficient(params, r0)
        dev = abs(c_hat - law) / abs(law)
        return SingularityReport(Logarithmic(r0), float(ind[window_idx[-1]]), resid, dev, c_hat)
    raise UnclassifiedBranch(
        "|f| grows but f''/f'^2 does not settle",
        {"q_spread": _spread(q[tail]), "indicator": float(ind[window_idx[-1]])},
    )


def branch_sign_check(report: SingularityReport, case: str) -> tuple[bool, str]:
    """Compare a classified branch against the forward-direction annotations.

    Case i needs a logarithmic branch with c_hat < 0, ii an algebraic branch
    with c0 < 0, iii an algebraic branch with c0 > 0, iv a logarithmic
    branch with c_hat > 0.  Returns (ok, diagnostic).
    """
    want = {"i": ("logarithmic", -1), "ii": ("algebraic", -1), "iii": ("algebraic", 1), "iv": ("logarithmic", 1)}
    if case not in want:
        raise ValueError(f"unknown case {case!r}")
    kind, sign = want[case]
    if report.kind.tag != kind:
        return False, f"case {case} admits only a {kind} branch, got {report.kind.tag}"
    coef = report.coefficient
    if coef is None or math.copysign(1, coef) != sign:
        return False, f"case {case} needs coefficient sign {'+' if sign > 0 else '-'}, got {coef}"
    return True, ""
