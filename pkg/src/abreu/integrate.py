"""Adaptive integration of the radial ODE in either direction.

The stepper is the Dormand-Prince 5(4) pair with a PI step-size controller
and its fourth-order continuous extension for dense output.  The state is
two scalars, so everything runs on Python floats.  Steps whose end point
flips the sign of f or f' are rejected: a smooth solution cannot do that
(it would need f' = 0 first, which only the constant solution reaches), so
a flip means the step jumped across a singularity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .model import DomainError, ModelParams, State
from .series import (
    ConstAsymptote,
    DecayAsymptote,
    InfinityBehavior,
    OriginBehavior,
    check_origin_behavior,
    infinity_coefficient,
    origin_series_eval,
)

# backward runs never go below this radius
ORIGIN_FLOOR = 1e-8


class IntegrationError(RuntimeError):
    """The integrator could not produce a valid trajectory."""


# -- termination tags ----------------------------------------------------------


@dataclass(frozen=True)
class ReachedBound:
    r: float
    tag = "reached_bound"


@dataclass(frozen=True)
class BlowUp:
    r_last: float
    r_star: float
    tag = "blow_up"


@dataclass(frozen=True)
class VanishingF:
    r: float
    tag = "vanishing_f"


@dataclass(frozen=True)
class StationaryF:
    r: float
    tag = "stationary_f"


@dataclass(frozen=True)
class StepCollapse:
    r: float
    tag = "step_collapse"


Termination = Union[ReachedBound, BlowUp, VanishingF, StationaryF, StepCollapse]


def termination_dict(t: Termination) -> dict:
    return {"tag": t.tag, **asdict(t)}


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: Optional[float] = None
    blowup_threshold: float = 1e12
    min_step_factor: float = 1e-16
    origin_floor: float = ORIGIN_FLOOR
    max_steps: int = 2_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "blowup_threshold", "min_step_factor", "origin_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")


# -- Dormand-Prince 5(4) tableau -------------------------------------------------

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6] + (0.0,)
# fifth-order minus embedded fourth-order weights
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# continuous extension: y(t0 + th h) = y0 + h sum_i k_i sum_j P[i][j] th^(j+1)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


def _make_rhs(params: ModelParams):
    n = params.n
    k_over_n = params.kappa / n
    lam = params.lam
    nm1 = n - 1

    if n == 1:

        def rhs(r, f, fp):
            return (k_over_n * r - lam) * fp * fp

    else:

        def rhs(r, f, fp):
            return (k_over_n * r - lam * r ** (-nm1) - nm1 / f) * fp * fp + nm1 / r * fp

    return rhs


# -- dense output ----------------------------------------------------------------


class _DenseDOPRI:
    """Piecewise quartic continuous extension of accepted steps."""

    def __init__(self, r0, h, y0, q):
        self.r0 = np.asarray(r0)
        self.h = np.asarray(h)
        self.y0 = np.asarray(y0).reshape(-1, 2)
        self.q = np.asarray(q).reshape(-1, 2, 4)

    def _locate(self, r):
        key = self.r0 * np.sign(self.h[0])
        idx = np.searchsorted(key, r * np.sign(self.h[0]), side="right") - 1
        idx = np.clip(idx, 0, len(self.r0) - 1)
        th = (r - self.r0[idx]) / self.h[idx]
        return idx, th

    def value(self, r):
        idx, th = self._locate(r)
        powers = np.stack([th, th**2, th**3, th**4], axis=-1)
        inc = np.einsum("...cj,...j->...c", self.q[idx], powers)
        return self.y0[idx] + self.h[idx][..., None] * inc

    def slope(self, r):
        idx, th = self._locate(r)
        powers = np.stack([np.ones_like(th), 2 * th, 3 * th**2, 4 * th**3], axis=-1)
        return np.einsum("...cj,...j->...c", self.q[idx], powers)


class _DenseHermite:
    """Piecewise quintic Hermite interpolant through (f, f', f'') node data."""

    def __init__(self, r, f, fp, fpp):
        order = np.argsort(r)
        self.r = np.asarray(r)[order]
        self.f = np.asarray(f)[order]
        self.fp = np.asarray(fp)[order]
        self.fpp = np.asarray(fpp)[order]

    def _coeffs(self, r):
        i = np.clip(np.searchsorted(self.r, r, side="right") - 1, 0, len(self.r) - 2)
        h = self.r[i + 1] - self.r[i]
        t = (r - self.r[i]) / h
        return i, h, t

    def _basis(self, t, deriv):
        # quintic Hermite basis functions and their derivatives in t
        polys = [
            np.poly1d([-6, 15, -10, 0, 0, 1]),
            np.poly1d([-3, 8, -6, 0, 1, 0]),
            np.poly1d([-0.5, 1.5, -1.5, 0.5, 0, 0]),
            np.poly1d([6, -15, 10, 0, 0, 0]),
            np.poly1d([-3, 7, -4, 0, 0, 0]),
            np.poly1d([0.5, -1, 0.5, 0, 0, 0]),
        ]
        return [p.deriv(deriv)(t) if deriv else p(t) for p in polys]

    def _eval(self, r, deriv):
        i, h, t = self._coeffs(r)
        b = self._basis(t, deriv)
        val = (
            b[0] * self.f[i]
            + b[1] * h * self.fp[i]
            + b[2] * h * h * self.fpp[i]
            + b[3] * self.f[i + 1]
            + b[4] * h * self.fp[i + 1]
            + b[5] * h * h * self.fpp[i + 1]
        )
        return val / h**deriv

    def value(self, r):
        return np.stack([self._eval(r, 0), self._eval(r, 1)], axis=-1)

    def slope(self, r):
        return np.stack([self._eval(r, 1), self._eval(r, 2)], axis=-1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Accepted nodes of one integration, its dense output and how it ended.

    ``r``, ``f``, ``fp``, ``fpp`` are node arrays in integration order; ``fpp``
    holds the second derivative recorded at each node (the right-hand side
    for integrated runs).  Calling the trajectory evaluates (f, f') anywhere
    in its domain.
    """

    params: ModelParams
    r: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    fpp: np.ndarray
    termination: Termination
    dense: object = field(repr=False)
    n_rejected: int = 0

    @classmethod
    def from_samples(cls, params, r, f, fp, fpp, termination=None):
        """Build a trajectory from tabulated data (synthetic or read from disk)."""
        r, f, fp, fpp = (np.asarray(a, dtype=float) for a in (r, f, fp, fpp))
        if termination is None:
            termination = ReachedBound(float(r[-1]))
        return cls(params, r, f, fp, fpp, termination, _DenseHermite(r, f, fp, fpp))

    @property
    def direction(self) -> int:
        return 1 if self.r[-1] > self.r[0] else -1

    @property
    def domain(self) -> tuple[float, float]:
        return float(min(self.r[0], self.r[-1])), float(max(self.r[0], self.r[-1]))

    def __len__(self):
        return len(self.r)

    def _check(self, r):
        lo, hi = self.domain
        arr = np.asarray(r, dtype=float)
        if np.any(arr < lo - 1e-12 * max(1.0, abs(lo))) or np.any(arr > hi + 1e-12 * max(1.0, abs(hi))):
            raise DomainError(f"r outside trajectory domain [{lo}, {hi}]")
        return arr

    def __call__(self, r):
        """(f, f') at r; arrays in give arrays out."""
        out = self.dense.value(self._check(r))
        return out[..., 0], out[..., 1]

    def derivative(self, r):
        """(f', f'') of the dense interpolant at r."""
        out = self.dense.slope(self._check(r))
        return out[..., 0], out[..., 1]

    def states(self):
        return [State(float(a), float(b), float(c)) for a, b, c in zip(self.r, self.f, self.fp)]


# -- the stepper -------------------------------------------------------------------


def _initial_step(rhs, r, f, fp, k1f, k1p, direction, rtol, atol, max_step):
    sf = atol + rtol * abs(f)
    sp = atol + rtol * abs(fp)
    d0 = math.hypot(f / sf, fp / sp) / math.sqrt(2)
    d1 = math.hypot(k1f / sf, k1p / sp) / math.sqrt(2)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    # for n > 1 the step must not reach r = 0
    if direction < 0 and r > 0:
        h0 = min(h0, 0.5 * r)
    yf = f + direction * h0 * k1f
    yp = fp + direction * h0 * k1p
    try:
        k2p = rhs(r + direction * h0, yf, yp)
    except (ZeroDivisionError, OverflowError, ValueError):
        return h0 * 1e-3
    d2 = math.hypot((yp - k1f) / sf, (k2p - k1p) / sp) / math.sqrt(2) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def _sign(x):
    return 1 if x > 0 else (-1 if x < 0 else 0)


def integrate(params: ModelParams, init: State, r_target: float, cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate the radial ODE from ``init`` towards ``r_target``.

    Stops at the first of: reaching the target; |f| or |f'| above
    ``cfg.blowup_threshold``; |f| or |f'| within ``cfg.abs_tol`` of zero;
    the step size dropping below ``cfg.min_step_factor`` times the interval
    length.  Backward runs are clipped at ``cfg.origin_floor`` for n > 1.

    Raises:
        DomainError: inadmissible initial state or target.
        IntegrationError: an event fires at the initial point, or the step
            budget is exhausted.
    """
    cfg = cfg or IntegratorConfig()
    r0, f0, fp0 = float(init.r), float(init.f), float(init.fp)
    if not (math.isfinite(r0) and math.isfinite(f0) and math.isfinite(fp0) and math.isfinite(r_target)):
        raise DomainError("non-finite initial data or target")
    if params.n > 1 and not r0 > 0:
        raise DomainError(f"initial radius must be positive, got {r0}")
    singular_f = params.n > 1
    if f0 == 0 and singular_f:
        raise DomainError("initial f must be nonzero")
    if r_target == r0:
        raise DomainError("target equals the initial radius")
    direction = 1 if r_target > r0 else -1
    r_end = float(r_target)
    if direction < 0 and params.n > 1:
        if r_target < 0:
            raise DomainError("backward target must be >= 0")
        r_end = max(r_end, cfg.origin_floor)
        if r_end >= r0:
            raise DomainError("initial radius is already below the origin floor")
    if (singular_f and abs(f0) <= cfg.abs_tol) or abs(fp0) <= cfg.abs_tol:
        raise IntegrationError("initial point already triggers a vanishing-f or stationary-f event")
    if abs(f0) > cfg.blowup_threshold or abs(fp0) > cfg.blowup_threshold:
        raise IntegrationError("initial point already exceeds the blow-up threshold")

    rhs = _make_rhs(params)
    rtol, atol = cfg.rel_tol, cfg.abs_tol
    interval = abs(r_end - r0)
    h_min = cfg.min_step_factor * interval
    max_step = min(cfg.max_step or interval, interval)
    thr = cfg.blowup_threshold

    sgn_f, sgn_p = _sign(f0), _sign(fp0)
    r, f, fp = r0, f0, fp0
    k1p = rhs(r, f, fp)
    k1f = fp

    rs, fs, fps, fpps = [r], [f], [fp], [k1p]
    p_r0, p_h, p_y0, p_q = [], [], [], []
    h = _initial_step(rhs, r, f, fp, k1f, k1p, direction, rtol, atol, max_step)
    facold = 1e-4
    n_rej = 0
    termination = None
    a, c = _A, _C

    for _ in range(cfg.max_steps):
        last = False
        if h >= abs(r_end - r):
            h = abs(r_end - r)
            last = True
        hs = direction * h
        kf = [k1f, 0, 0, 0, 0, 0, 0]
        kp = [k1p, 0, 0, 0, 0, 0, 0]
        ok = True
        try:
            for i in range(1, 7):
                ai = a[i]
                yf = f + hs * sum(ai[j] * kf[j] for j in range(i))
                yp = fp + hs * sum(ai[j] * kp[j] for j in range(i))
                kf[i] = yp
                kp[i] = rhs(r + c[i] * hs if i < 6 else (r_end if last else r + hs), yf, yp)
            f_new, fp_new = yf, yp
            ok = math.isfinite(f_new) and math.isfinite(fp_new) and all(map(math.isfinite, kp))
        except (ZeroDivisionError, OverflowError, ValueError):
            ok = False
        if ok and (_sign(fp_new) != sgn_p or (singular_f and _sign(f_new) != sgn_f)):
            ok = False
        if not ok:
            n_rej += 1
            h *= 0.25
            if h < h_min:
                termination = StepCollapse(r)
                break
            continue

        ef = hs * sum(e * k for e, k in zip(_E, kf))
        ep = hs * sum(e * k for e, k in zip(_E, kp))
        sf = atol + rtol * max(abs(f), abs(f_new))
        sp = atol + rtol * max(abs(fp), abs(fp_new))
        err = math.sqrt(0.5 * ((ef / sf) ** 2 + (ep / sp) ** 2))

        if err > 1.0:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < h_min:
                termination = StepCollapse(r)
                break
            continue

        r_new = r_end if last else r + hs
        if r_new == r:
            termination = StepCollapse(r)
            break
        qf = [sum(kf[i] * _P[i][j] for i in range(7)) for j in range(4)]
        qp = [sum(kp[i] * _P[i][j] for i in range(7)) for j in range(4)]
        p_r0.append(r)
        p_h.append(r_new - r)
        p_y0.append((f, fp))
        p_q.append((qf, qp))

        event = None
        if abs(f_new) > thr or abs(fp_new) > thr:
            event = "blow"
        elif singular_f and abs(f_new) <= atol:
            event = "vanish"
        elif abs(fp_new) <= atol:
            event = "stationary"

        if event is not None:
            hh = r_new - r

            def dense(th):
                pw = (th, th * th, th**3, th**4)
                return (
                    f + hh * sum(q * w for q, w in zip(qf, pw)),
                    fp + hh * sum(q * w for q, w in zip(qp, pw)),
                )

            if event == "blow":
                g = lambda th: max(abs(dense(th)[0]), abs(dense(th)[1])) - thr  # noqa: E731
            elif event == "vanish":
                g = lambda th: atol - abs(dense(th)[0])  # noqa: E731
            else:
                g = lambda th: atol - abs(dense(th)[1])  # noqa: E731
            lo, hi = 0.0, 1.0
            if g(lo) < 0:
                while (hi - lo) * abs(hh) > 1e-12 * max(1.0, abs(r)) * 1e-4 and hi - lo > 1e-16:
                    mid = 0.5 * (lo + hi)
                    if g(mid) >= 0:
                        hi = mid
                    else:
                        lo = mid
            r_ev = r + hi * hh
            f_ev, fp_ev = dense(hi)
            if _sign(fp_ev) != sgn_p or (singular_f and _sign(f_ev) != sgn_f):
                f_ev, fp_ev, r_ev = f_new, fp_new, r_new
            try:
                fpp_ev = rhs(r_ev, f_ev, fp_ev)
            except ZeroDivisionError:
                fpp_ev = math.inf
            rs.append(r_ev)
            fs.append(f_ev)
            fps.append(fp_ev)
            fpps.append(fpp_ev)
            if event == "blow":
                est = abs(fp_ev / fpp_ev) if fpp_ev not in (0.0, math.inf) else 0.0
                termination = BlowUp(r_ev, r_ev + direction * est)
            elif event == "vanish":
                termination = VanishingF(r_ev)
            else:
                termination = StationaryF(r_ev)
            break

        r, f, fp = r_new, f_new, fp_new
        k1f, k1p = kf[6], kp[6]
        rs.append(r)
        fs.append(f)
        fps.append(fp)
        fpps.append(k1p)
        if last:
            termination = ReachedBound(r)
            break

        # PI controller (Hairer & Wanner, DOPRI5 constants)
        fac11 = err**0.17
        fac = fac11 / facold**0.04
        fac = min(10.0, max(0.2, fac / 0.9))
        h = min(h / fac, max_step)
        facold = max(err, 1e-4)
        if h < h_min:
            termination = StepCollapse(r)
            break
    else:
        raise IntegrationError(f"step budget of {cfg.max_steps} exhausted at r={r}")

    if not p_r0:
        raise IntegrationError(f"no step accepted from r={r0} ({termination})")

    r_arr = np.array(rs)
    f_arr = np.array(fs)
    fp_arr = np.array(fps)
    if np.any(np.sign(fp_arr) != sgn_p) or (singular_f and np.any(np.sign(f_arr) != sgn_f)):
        raise IntegrationError("sign of f or f' changed along an accepted trajectory")
    dense = _DenseDOPRI(p_r0, p_h, p_y0, p_q)
    return Trajectory(params, r_arr, f_arr, fp_arr, np.array(fpps), termination, dense, n_rej)


# -- seeding and asymptotes ----------------------------------------------------------


def seed_from_origin(params: ModelParams, b: OriginBehavior, epsilon: float) -> State:
    """The state the truncated origin expansion ``b`` gives at r = epsilon."""
    if not 0 < epsilon <= 0.1:
        raise DomainError(f"epsilon must lie in (0, 0.1], got {epsilon}")
    check_origin_behavior(params, b)
    f, fp = origin_series_eval(params, b, epsilon)
    if f == 0:
        raise DomainError("seeded f vanishes")
    return State(float(epsilon), float(f), float(fp))


@dataclass(frozen=True)
class AsymptoteFit:
    behavior: InfinityBehavior
    coefficient: float
    expected_coefficient: float
    coefficient_deviation: float
    residual: float


# relative size of f_inf against the 1/r term at the window start below which
# the asymptote counts as decaying
DECAY_RATIO = 1e-3
ASYMPTOTE_RESIDUAL = 1e-3


def detect_asymptote(traj: Trajectory, decades: float = 1.0) -> Optional[AsymptoteFit]:
    """Fit f ~ c + b/r over the last decade of a forward run.

    Returns None when the two-parameter fit misses the data by more than
    ASYMPTOTE_RESIDUAL (rms misfit over the range of f in the window).
    """
    if traj.direction < 0:
        raise DomainError("asymptotes are detected on forward runs")
    r_hi = traj.r[-1]
    mask = traj.r >= r_hi / 10**decades
    r, f = traj.r[mask], traj.f[mask]
    if len(r) < 4:
        # too few nodes in the window; resample the dense output
        r = np.geomspace(r_hi / 10**decades, r_hi, 64)
        f, _ = traj(r)
    design = np.stack([np.ones_like(r), 1.0 / r], axis=1)
    (c, b), *_ = np.linalg.lstsq(design, f, rcond=None)
    fit = design @ np.array([c, b])
    spread = float(np.ptp(f)) or float(np.max(np.abs(f))) or 1.0
    residual = math.sqrt(float(np.mean((f - fit) ** 2))) / spread
    if residual > ASYMPTOTE_RESIDUAL:
        return None
    params = traj.params
    if abs(c) <= DECAY_RATIO * abs(b) / r[0]:
        beh: InfinityBehavior = DecayAsymptote()
    else:
        beh = ConstAsymptote(float(c))
    expected = infinity_coefficient(params, beh)
    return AsymptoteFit(beh, float(b), expected, abs(b - expected) / abs(expected), residual)


# five Gauss-Legendre nodes integrate the degree-4 dense output of a step exactly
_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def _gauss(traj: Trajectory, a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = mid[..., None] + half[..., None] * _GL_X
    f, _ = traj(nodes)
    return half * (f @ _GL_W)


def potential(traj: Trajectory, r, r_ref: float, g_ref: float = 0.0):
    """g(r) = g_ref + integral of f from r_ref to r along the dense output.

    Quadrature runs node interval by node interval so each piece sees a
    single polynomial of the interpolant.
    """
    nodes = np.sort(traj.r)
    r = np.atleast_1d(np.asarray(traj._check(r), dtype=float))
    r_ref = float(traj._check(r_ref))
    cum = np.concatenate([[0.0], np.cumsum(_gauss(traj, nodes[:-1], nodes[1:]))])

    def from_start(x):
        i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
        return cum[i] + _gauss(traj, nodes[i], x)

    return g_ref + from_start(r) - from_start(np.array([r_ref]))[0]
