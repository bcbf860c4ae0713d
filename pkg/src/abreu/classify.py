"""Executable form of the sign-preservation lemma and the two classification
theorems: forward and backward solves from data at r = epsilon, outcome
labelling against the permitted sets, and grid scans.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .integrate import (
    AsymptoteFit,
    BlowUp,
    IntegrationError,
    IntegratorConfig,
    ReachedBound,
    StepCollapse,
    Trajectory,
    VanishingF,
    detect_asymptote,
    integrate,
    termination_dict,
)
from .model import DomainError, ModelParams, State
from .series import (
    Algebraic,
    ConstAsymptote,
    DecayAsymptote,
    InfinityBehavior,
    Logarithmic,
    OriginBehavior,
    RegularA,
    RegularB,
    UnidentifiedBehavior,
    Vanishing,
    fit_origin_behavior,
)
from .singularity import SingularityReport, UnclassifiedBranch, classify_branch

# origin windows: one decade wide, sliding down by half a decade
ORIGIN_WINDOW_TOP = 0.1
ORIGIN_WINDOW_STEP = 10**0.5
ORIGIN_WINDOW_POINTS = 24
ORIGIN_GOOD_SCORE = 1e-3
# f' below this many abs_tol is too noisy for the relative f' misfit
ORIGIN_FP_MARGIN = 1e4
# extra decades beyond the horizon when the 1/r fit has not yet settled
HORIZON_EXTENSIONS = 2


class TheoremCase(str, enum.Enum):
    I = "i"
    II = "ii"
    III = "iii"
    IV = "iv"


def theorem_case(f: float, fp: float) -> TheoremCase:
    """Case label from the signs of (f, f'): (+,+) i, (-,+) ii, (+,-) iii, (-,-) iv."""
    if f == 0 or fp == 0 or not (math.isfinite(f) and math.isfinite(fp)):
        raise DomainError(f"case needs nonzero finite data, got f={f}, f'={fp}")
    if fp > 0:
        return TheoremCase.I if f > 0 else TheoremCase.II
    return TheoremCase.III if f > 0 else TheoremCase.IV


# -- outcomes ----------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    report: SingularityReport
    location: float
    tag = "branch"

    def to_dict(self):
        return {"tag": self.tag, "location": self.location, **self.report.to_dict()}


@dataclass(frozen=True)
class Asymptote:
    behavior: InfinityBehavior
    coefficient: float
    fit: AsymptoteFit
    tag = "asymptote"

    def to_dict(self):
        return {
            "tag": self.tag,
            "kind": self.behavior.tag,
            "f_inf": getattr(self.behavior, "f_inf", 0.0),
            "coefficient": self.coefficient,
            "expected_coefficient": self.fit.expected_coefficient,
            "coefficient_deviation": self.fit.coefficient_deviation,
            "fit_residual": self.fit.residual,
        }


@dataclass(frozen=True)
class Origin:
    behavior: OriginBehavior
    score: float
    window: tuple[float, float]
    tag = "origin"

    def to_dict(self):
        b = self.behavior
        return {
            "tag": self.tag,
            "kind": b.tag,
            "f0": getattr(b, "f0", None),
            "a": getattr(b, "a", None),
            "score": self.score,
            "window": list(self.window),
        }


@dataclass(frozen=True)
class Inconclusive:
    """The run ended without a classifiable terminal behaviour."""

    reason: str
    termination: dict
    tag = "inconclusive"

    def to_dict(self):
        return {"tag": self.tag, "reason": self.reason, "termination": self.termination}


ForwardOutcome = Union[Branch, Asymptote, Inconclusive]
BackwardOutcome = Union[Branch, Origin, Inconclusive]


@dataclass(frozen=True)
class DirectionResult:
    """One direction of a classification run.

    ``membership`` is True/False against the theorem's permitted set, or
    None when the theorems do not apply (kappa <= 0 or lambda = 0).
    """

    case: TheoremCase
    outcome: Union[ForwardOutcome, BackwardOutcome]
    membership: Optional[bool]
    diagnostic: str
    lemma_ok: bool
    trajectory: Optional[Trajectory] = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "case": self.case.value,
            "outcome": self.outcome.to_dict(),
            "membership": _membership_field(self.membership),
            "diagnostic": self.diagnostic,
            "lemma_ok": self.lemma_ok,
        }


@dataclass(frozen=True)
class ClassificationOutcome:
    case: TheoremCase
    forward: DirectionResult
    backward: DirectionResult

    @property
    def lemma_ok(self) -> bool:
        return self.forward.lemma_ok and self.backward.lemma_ok

    @property
    def membership(self) -> Optional[bool]:
        vals = (self.forward.membership, self.backward.membership)
        if None in vals:
            return None
        return all(vals)

    def to_dict(self):
        return {
            "case": self.case.value,
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
            "lemma_ok": self.lemma_ok,
            "membership": _membership_field(self.membership),
        }


def _membership_field(m):
    return "not_applicable" if m is None else m


# -- lemma -------------------------------------------------------------------


def check_lemma(traj: Trajectory, tol: float = 1e-12) -> tuple[bool, Optional[dict]]:
    """True iff sign(f) and sign(f') never change along the samples.

    Values within ``tol`` of zero do not count as a sign.  For n = 1 the
    equation is regular at f = 0, so only f' is checked.  On failure the
    detail names the quantity, the sample index and r.
    """
    if len(traj) == 0:
        raise DomainError("empty trajectory")
    checks = [("fp", traj.fp)]
    if traj.params.n > 1:
        checks.insert(0, ("f", traj.f))
    for name, values in checks:
        ref = 0.0
        for i, v in enumerate(values):
            if abs(v) <= tol:
                continue
            s = math.copysign(1.0, v)
            if ref == 0.0:
                ref = s
            elif s != ref:
                return False, {"quantity": name, "index": i, "r": float(traj.r[i]), "value": float(v)}
    return True, None


# -- permitted sets ----------------------------------------------------------


def forward_permitted(case: TheoremCase, outcome: ForwardOutcome) -> tuple[bool, str]:
    """Membership in the forward permitted set, including coefficient signs."""
    if isinstance(outcome, Inconclusive):
        return False, f"inconclusive: {outcome.reason}"
    if isinstance(outcome, Branch):
        kind = outcome.report.kind
        coef = outcome.report.coefficient
        want = {
            TheoremCase.I: (Logarithmic, -1),
            TheoremCase.II: (Algebraic, -1),
            TheoremCase.III: (Algebraic, 1),
            TheoremCase.IV: (Logarithmic, 1),
        }[case]
        if not isinstance(kind, want[0]):
            return False, f"case {case.value} excludes a {kind.tag} branch"
        if coef is None or math.copysign(1.0, coef) != want[1]:
            return False, f"case {case.value} branch coefficient has the wrong sign ({coef})"
        return True, ""
    beh = outcome.behavior
    if case in (TheoremCase.I, TheoremCase.II):
        return False, f"case {case.value} excludes an asymptote"
    if case is TheoremCase.III:
        if isinstance(beh, DecayAsymptote) or beh.f_inf > 0:
            return True, ""
        return False, f"case iii needs f_inf >= 0, got {beh.f_inf}"
    if isinstance(beh, ConstAsymptote) and beh.f_inf < 0:
        return True, ""
    return False, f"case iv needs a negative constant asymptote, got {beh.tag}"


def backward_permitted(case: TheoremCase, outcome: BackwardOutcome, params: ModelParams) -> tuple[bool, str]:
    """Membership in the backward permitted set, including lambda gating."""
    if isinstance(outcome, Inconclusive):
        return False, f"inconclusive: {outcome.reason}"
    if isinstance(outcome, Branch):
        kind = outcome.report.kind
        if case is TheoremCase.I:
            ok = isinstance(kind, Algebraic) and kind.c0 > 0
        elif case is TheoremCase.IV:
            ok = isinstance(kind, Algebraic) and kind.c0 < 0
        else:
            ok = isinstance(kind, Logarithmic)
        return ok, "" if ok else f"case {case.value} excludes {kind.tag} branch {kind}"
    beh = outcome.behavior
    lam = params.lam
    f_pos = case in (TheoremCase.I, TheoremCase.III)
    fp_pos = case in (TheoremCase.I, TheoremCase.II)
    if isinstance(beh, RegularA):
        ok = (beh.f0 > 0) == f_pos and (beh.a > 0) == fp_pos
    elif isinstance(beh, RegularB):
        # f' ~ r^(n-2)/lambda, so lambda carries the sign of f'
        ok = (beh.f0 > 0) == f_pos and (lam > 0) == fp_pos
    elif isinstance(beh, Vanishing):
        ok = (case is TheoremCase.I and lam < 0) or (case is TheoremCase.IV and lam > 0)
    else:
        ok = False
    return ok, "" if ok else f"case {case.value} excludes origin behaviour {beh} at lambda={lam}"


# -- forward -----------------------------------------------------------------


def asymptote_horizon(params: ModelParams) -> float:
    return max(1e3, 1e3 / params.kappa) if params.kappa > 0 else 1e3


def _check_inputs(params, f_eps, fp_eps, epsilon):
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    return theorem_case(f_eps, fp_eps)


def _branch_or_none(params, traj):
    try:
        report = classify_branch(params, traj)
    except (UnclassifiedBranch, DomainError) as exc:
        return None, str(exc)
    return Branch(report, float(report.kind.r0)), ""


def classify_forward(
    params: ModelParams,
    f_eps: float,
    fp_eps: float,
    epsilon: float = 0.1,
    cfg: Optional[IntegratorConfig] = None,
    horizon: Optional[float] = None,
) -> DirectionResult:
    """Integrate forward from (epsilon, f_eps, fp_eps) and label the end.

    A singular termination is classified as a branch point; reaching the
    horizon hands the run to detect_asymptote.  Slowly settling asymptotes
    get up to HORIZON_EXTENSIONS further decades before giving up.  Anything else, or a failed
    fit, yields an Inconclusive outcome rather than an exception.
    """
    case = _check_inputs(params, f_eps, fp_eps, epsilon)
    horizon = asymptote_horizon(params) if horizon is None else horizon
    for extension in range(HORIZON_EXTENSIONS + 1):
        try:
            traj = integrate(params, State(epsilon, f_eps, fp_eps), horizon * 10**extension, cfg)
        except IntegrationError as exc:
            return _finish(params, case, Inconclusive(str(exc), {}), None, forward=True)
        term = traj.termination
        if not isinstance(term, ReachedBound):
            break
        fit = detect_asymptote(traj)
        if fit is not None:
            return _finish(params, case, Asymptote(fit.behavior, fit.coefficient, fit), traj, forward=True)
    if isinstance(term, (BlowUp, StepCollapse, VanishingF)):
        outcome, why = _branch_or_none(params, traj)
        if outcome is None:
            outcome = Inconclusive(why, termination_dict(term))
    elif isinstance(term, ReachedBound):
        outcome = Inconclusive("no asymptote fits the last decade", termination_dict(term))
    else:
        outcome = Inconclusive(f"run ended with {term.tag}", termination_dict(term))
    return _finish(params, case, outcome, traj, forward=True)


def _finish(params, case, outcome, traj, forward):
    lemma_ok = True if traj is None else check_lemma(traj)[0]
    if not params.theorems_apply:
        return DirectionResult(case, outcome, None, "theorems assume kappa > 0 and lambda != 0", lemma_ok, traj)
    ok, why = forward_permitted(case, outcome) if forward else backward_permitted(case, outcome, params)
    return DirectionResult(case, outcome, ok, why, lemma_ok, traj)


# -- backward ----------------------------------------------------------------


def fit_origin_windows(params: ModelParams, traj: Trajectory, abs_tol: float):
    """Slide one-decade windows down from min(0.1, r_start) and fit each.

    The first window (from the top) scoring at most ORIGIN_GOOD_SCORE is
    taken, then moved down for as long as the same expansion keeps fitting
    better; failing that, the best window under the fit threshold.  Windows where
    |f'| falls below ORIGIN_FP_MARGIN * abs_tol are skipped.
    """
    lo, hi = traj.domain
    top = min(ORIGIN_WINDOW_TOP, hi)
    best = good = None
    last_error: Optional[Exception] = None
    while top / 10 >= lo * (1 - 1e-12):
        r = np.geomspace(top / 10, top, ORIGIN_WINDOW_POINTS)
        top /= ORIGIN_WINDOW_STEP
        f, fp = traj(r)
        if np.min(np.abs(fp)) < ORIGIN_FP_MARGIN * abs_tol:
            continue
        samples = [State(float(a), float(b), float(c)) for a, b, c in zip(r, f, fp)]
        try:
            beh, score = fit_origin_behavior(params, samples)
        except UnidentifiedBehavior as exc:
            last_error = exc
            continue
        window = (float(r[0]), float(r[-1]))
        if good is not None:
            # keep descending while the same expansion fits ever better
            if beh.tag != good[0].tag or score >= good[1]:
                return good
            good = (beh, score, window)
            continue
        if score <= ORIGIN_GOOD_SCORE:
            good = (beh, score, window)
            continue
        if best is None or score < best[1]:
            best = (beh, score, window)
    if good is not None:
        return good
    if best is not None:
        return best
    raise UnidentifiedBehavior(
        "no origin window admits an expansion" + (f" (last: {last_error})" if last_error else ""),
        getattr(last_error, "scores", {}),
    )


def classify_backward(
    params: ModelParams,
    f_eps: float,
    fp_eps: float,
    epsilon: float = 0.1,
    cfg: Optional[IntegratorConfig] = None,
) -> DirectionResult:
    """Integrate from epsilon toward the origin and label the end.

    A singular termination at r0 in (0, epsilon) is classified as a branch
    point.  A run that reaches the origin floor, or stops because f' has
    become negligible there, is matched against the origin expansions.
    """
    case = _check_inputs(params, f_eps, fp_eps, epsilon)
    cfg = cfg or IntegratorConfig()
    try:
        traj = integrate(params, State(epsilon, f_eps, fp_eps), 0.0, cfg)
    except IntegrationError as exc:
        return _finish(params, case, Inconclusive(str(exc), {}), None, forward=False)
    term = traj.termination
    outcome = None
    why = ""
    if isinstance(term, (BlowUp, StepCollapse)):
        outcome, why = _branch_or_none(params, traj)
    if outcome is None:
        try:
            beh, score, window = fit_origin_windows(params, traj, cfg.abs_tol)
            outcome = Origin(beh, score, window)
        except (UnidentifiedBehavior, DomainError) as exc:
            reason = f"{why}; {exc}" if why else str(exc)
            outcome = Inconclusive(reason, termination_dict(term))
    return _finish(params, case, outcome, traj, forward=False)


def classify(params, f_eps, fp_eps, epsilon=0.1, cfg=None) -> ClassificationOutcome:
    fwd = classify_forward(params, f_eps, fp_eps, epsilon, cfg)
    bwd = classify_backward(params, f_eps, fp_eps, epsilon, cfg)
    return ClassificationOutcome(fwd.case, fwd, bwd)


# -- scans -------------------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    index: tuple[int, int]
    f_eps: float
    fp_eps: float
    outcome: Optional[ClassificationOutcome]
    error: Optional[str] = None

    @property
    def inadmissible(self) -> bool:
        return self.outcome is None


@dataclass(frozen=True)
class ScanResult:
    rows: list
    counts: dict
    violations: list

    def to_dict(self):
        return {
            "points": len(self.rows),
            "inadmissible": sum(r.inadmissible for r in self.rows),
            "counts": [{"case": k[0], "forward": k[1], "backward": k[2], "count": v} for k, v in sorted(self.counts.items())],
            "violations": self.violations,
        }


def _outcome_label(res: DirectionResult) -> str:
    o = res.outcome
    if isinstance(o, Branch):
        return o.report.kind.tag
    if isinstance(o, (Asymptote, Origin)):
        return o.behavior.tag
    return o.tag


def _scan_point(args):
    params, i, j, f, fp, epsilon, cfg = args
    if f == 0 or fp == 0:
        return ScanRow((i, j), f, fp, None, "inadmissible: f and f' must be nonzero")
    try:
        out = classify(params, f, fp, epsilon, cfg)
    except Exception as exc:  # recorded per point, never aborts the scan
        return ScanRow((i, j), f, fp, None, f"{type(exc).__name__}: {exc}")
    # trajectories are dropped to keep rows light when shipped between processes
    out = ClassificationOutcome(
        out.case,
        DirectionResult(**{**out.forward.__dict__, "trajectory": None}),
        DirectionResult(**{**out.backward.__dict__, "trajectory": None}),
    )
    return ScanRow((i, j), f, fp, out)


def scan(
    params: ModelParams,
    f_values: Sequence[float],
    fp_values: Sequence[float],
    epsilon: float = 0.1,
    cfg: Optional[IntegratorConfig] = None,
    workers: int = 1,
) -> ScanResult:
    """Classify every point of the grid f_values x fp_values.

    Rows are ordered by grid index regardless of ``workers``.  Per-point
    failures are recorded on the row.
    """
    if len(f_values) == 0 or len(fp_values) == 0:
        raise DomainError("scan grid is empty")
    jobs = [(params, i, j, float(f), float(fp), epsilon, cfg) for i, f in enumerate(f_values) for j, fp in enumerate(fp_values)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_point, jobs))
    else:
        rows = [_scan_point(job) for job in jobs]
    rows.sort(key=lambda row: row.index)
    counts: Counter = Counter()
    violations = []
    for row in rows:
        if row.outcome is None:
            continue
        o = row.outcome
        counts[(o.case.value, _outcome_label(o.forward), _outcome_label(o.backward))] += 1
        for name, res in (("forward", o.forward), ("backward", o.backward)):
            if res.membership is False:
                violations.append({"f_eps": row.f_eps, "fp_eps": row.fp_eps, "direction": name, "diagnostic": res.diagnostic})
            if not res.lemma_ok:
                violations.append({"f_eps": row.f_eps, "fp_eps": row.fp_eps, "direction": name, "diagnostic": "lemma violated"})
    return ScanResult(rows, dict(counts), violations)
