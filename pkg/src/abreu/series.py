"""Local expansions of the radial ODE at the origin, at infinity and at
movable branch points, plus the inverse problem of recognising which
origin expansion a set of near-origin samples follows.

All expansions are carried exactly to the order at which they are known;
no higher-order coefficients are generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
from scipy.optimize import least_squares

from .model import DomainError, ModelParams, State

# acceptance threshold for fit_origin_behavior's normalised residual
ORIGIN_FIT_THRESHOLD = 1e-2


# -- origin ------------------------------------------------------------------


@dataclass(frozen=True)
class RegularA:
    """f ~ f0 + a r^n - lambda a^2 n^2/(n+1) r^(n+1); exists for every lambda."""

    f0: float
    a: float
    tag = "regular_a"

    def __post_init__(self):
        if self.f0 == 0:
            raise DomainError("RegularA needs f0 != 0")


@dataclass(frozen=True)
class RegularB:
    """f ~ f0 + r^(n-1)/(lambda (n-1)), or the n = 2 variant; needs lambda != 0."""

    f0: float
    tag = "regular_b"

    def __post_init__(self):
        if self.f0 == 0:
            raise DomainError("RegularB needs f0 != 0")


@dataclass(frozen=True)
class Vanishing:
    """f ~ -n(n-2)/(lambda (n-1)) r^(n-1); needs lambda != 0 and n != 2."""

    tag = "vanishing"


@dataclass(frozen=True)
class ExactPole:
    """f = 2n^2/(kappa r), the exact lambda = 0 solution."""

    tag = "exact_pole"


OriginBehavior = Union[RegularA, RegularB, Vanishing, ExactPole]


def check_origin_behavior(params: ModelParams, b: OriginBehavior) -> None:
    """Raise DomainError if ``b`` cannot occur for ``params``."""
    n, lam = params.n, params.lam
    if isinstance(b, RegularA):
        return
    if isinstance(b, RegularB):
        if lam == 0:
            raise DomainError("RegularB requires lambda != 0")
        if n < 2:
            raise DomainError("RegularB requires n >= 2")
        return
    if isinstance(b, Vanishing):
        if lam == 0:
            raise DomainError("Vanishing requires lambda != 0")
        if n < 3:
            raise DomainError("Vanishing requires n >= 3 (n = 2 makes the coefficient vanish)")
        return
    if isinstance(b, ExactPole):
        if lam != 0:
            raise DomainError("ExactPole requires lambda = 0")
        if params.kappa == 0:
            raise DomainError("ExactPole requires kappa != 0")
        return
    raise TypeError(f"not an origin behaviour: {b!r}")


def origin_series_eval(params: ModelParams, b: OriginBehavior, r):
    """Evaluate a truncated origin expansion and its derivative at r.

    Works elementwise on arrays of r.
    """
    check_origin_behavior(params, b)
    n, lam, kappa = params.n, params.lam, params.kappa
    r = np.asarray(r, dtype=float) if not np.isscalar(r) else float(r)
    if isinstance(b, RegularA):
        c2 = lam * b.a**2 * n**2 / (n + 1)
        f = b.f0 + b.a * r**n - c2 * r ** (n + 1)
        fp = n * b.a * r ** (n - 1) - (n + 1) * c2 * r**n
    elif isinstance(b, RegularB):
        if n == 2:
            f = b.f0 + r / lam - r * r / (4 * lam**2 * b.f0)
            fp = 1 / lam - r / (2 * lam**2 * b.f0) + 0 * r
        else:
            f = b.f0 + r ** (n - 1) / (lam * (n - 1))
            fp = r ** (n - 2) / lam
    elif isinstance(b, Vanishing):
        c = -n * (n - 2) / (lam * (n - 1))
        f = c * r ** (n - 1)
        fp = c * (n - 1) * r ** (n - 2)
    else:
        c = 2.0 * n**2 / kappa
        f = c / r
        fp = -c / (r * r)
    return f, fp


# -- infinity ----------------------------------------------------------------


@dataclass(frozen=True)
class ConstAsymptote:
    """f ~ f_inf + n(n+1)/(kappa r) as r -> infinity."""

    f_inf: float
    tag = "const_asymptote"

    def __post_init__(self):
        if self.f_inf == 0:
            raise DomainError("ConstAsymptote needs f_inf != 0")


@dataclass(frozen=True)
class DecayAsymptote:
    """f ~ 2n^2/(kappa r) as r -> infinity."""

    tag = "decay_asymptote"


InfinityBehavior = Union[ConstAsymptote, DecayAsymptote]


def infinity_coefficient(params: ModelParams, b: InfinityBehavior) -> float:
    """The 1/r coefficient the expansion prescribes."""
    n = params.n
    if isinstance(b, ConstAsymptote):
        return n * (n + 1) / params.kappa
    return 2.0 * n * n / params.kappa


def infinity_series_eval(params: ModelParams, b: InfinityBehavior, r):
    coef = infinity_coefficient(params, b)
    base = b.f_inf if isinstance(b, ConstAsymptote) else 0.0
    return base + coef / r, -coef / (r * r)


# -- movable branch points ---------------------------------------------------


@dataclass(frozen=True)
class Algebraic:
    """f ~ c0 |r - r0|^(1/n)."""

    r0: float
    c0: float
    tag = "algebraic"

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError("branch point must lie at r0 > 0")
        if self.c0 == 0:
            raise DomainError("Algebraic needs c0 != 0")


@dataclass(frozen=True)
class Logarithmic:
    """f ~ c_hat log|r - r0| with c_hat fixed by r0."""

    r0: float
    tag = "logarithmic"

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError("branch point must lie at r0 > 0")


BranchKind = Union[Algebraic, Logarithmic]


def log_branch_coefficient(params: ModelParams, r0: float) -> float:
    """c_hat = (lambda / r0^(n-1) - kappa r0 / n)^-1."""
    denom = params.lam / r0 ** (params.n - 1) - params.kappa * r0 / params.n
    if denom == 0:
        raise DomainError(f"logarithmic coefficient undefined at r0={r0}")
    return 1.0 / denom


def branch_series_eval(params: ModelParams, b: BranchKind, r):
    """Leading-order branch behaviour for r approaching r0 from below."""
    r = np.asarray(r, dtype=float) if not np.isscalar(r) else float(r)
    if np.any(np.asarray(r) >= b.r0):
        raise DomainError("branch expansions are evaluated from below, need r < r0")
    d = b.r0 - r
    if isinstance(b, Algebraic):
        p = 1.0 / params.n
        return b.c0 * d**p, -b.c0 * p * d ** (p - 1)
    c_hat = log_branch_coefficient(params, b.r0)
    return c_hat * np.log(d), -c_hat / d


# -- recognising origin behaviour --------------------------------------------


def _candidates(params: ModelParams):
    out = [RegularA]
    if params.lam != 0 and params.n >= 2:
        out.append(RegularB)
    if params.lam != 0 and params.n >= 3:
        out.append(Vanishing)
    if params.lam == 0 and params.kappa != 0:
        out.append(ExactPole)
    return out


def _fit_one(params, kind, r, f, fp):
    """Return (behaviour, score) for one expansion fitted to the samples."""
    f_scale = math.sqrt(float(np.mean(f * f)))
    fp_scale = np.abs(fp)
    floor = max(float(np.max(fp_scale)) * 1e-300, 1e-300)
    fp_scale = np.maximum(fp_scale, floor)
    if float(np.max(np.abs(fp))) == 0.0:
        fp_scale = np.ones_like(fp)

    def resid(beh):
        F, FP = origin_series_eval(params, beh, r)
        return np.concatenate([(f - F) / f_scale, (fp - FP) / fp_scale])

    def score(beh):
        e = resid(beh)
        m = len(r)
        return max(math.sqrt(float(np.mean(e[:m] ** 2))), math.sqrt(float(np.mean(e[m:] ** 2))))

    n = params.n
    if kind is RegularA:
        # linear start from the leading terms, then the full nonlinear form
        a0 = float(np.median(fp / (n * r ** (n - 1))))
        f00 = float(np.median(f - a0 * r**n))
        if f00 == 0:
            return None, math.inf

        def vec(p):
            if p[0] == 0:
                return np.full(2 * len(r), 1e300)
            return resid(RegularA(p[0], p[1]))

        sol = least_squares(vec, [f00, a0], x_scale=[abs(f00) or 1.0, abs(a0) or 1.0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if sol.x[0] == 0:
            return None, math.inf
        beh = RegularA(float(sol.x[0]), float(sol.x[1]))
        return beh, score(beh)
    if kind is RegularB:
        shape = RegularB(1.0)
        F, _ = origin_series_eval(params, shape, r)
        f00 = float(np.median(f - (F - 1.0)))
        if f00 == 0:
            return None, math.inf
        if n == 2:

            def vec(p):
                if p[0] == 0:
                    return np.full(2 * len(r), 1e300)
                return resid(RegularB(p[0]))

            sol = least_squares(vec, [f00], x_scale=[abs(f00)], xtol=1e-15, ftol=1e-15, gtol=1e-15)
            f00 = float(sol.x[0])
            if f00 == 0:
                return None, math.inf
        beh = RegularB(f00)
        return beh, score(beh)
    beh = kind()
    return beh, score(beh)


def fit_origin_behavior(params: ModelParams, samples: Iterable[State]):
    """Identify the origin expansion followed by near-origin samples.

    Every expansion admissible for ``params`` has its free constants fitted;
    the score is the larger of the rms relative misfit of f' and the rms
    misfit of f normalised by rms(f).  Returns ``(behaviour, score)`` for the
    best fit, preferring fewer free constants on near-ties.

    Raises:
        DomainError: too few samples, or not spanning a decade below 0.1.
        UnidentifiedBehavior: no expansion fits within ORIGIN_FIT_THRESHOLD.
    """
    samples = list(samples)
    if len(samples) < 8:
        raise DomainError(f"need at least 8 samples, got {len(samples)}")
    r = np.array([s.r for s in samples], dtype=float)
    f = np.array([s.f for s in samples], dtype=float)
    fp = np.array([s.fp for s in samples], dtype=float)
    if np.any(r <= 0):
        raise DomainError("samples must have r > 0")
    if r.max() > 0.1 * (1 + 1e-12) or r.max() < 10 * r.min() * (1 - 1e-12):
        raise DomainError("samples must span at least one decade below r = 0.1")

    fits = []
    for kind in _candidates(params):
        beh, sc = _fit_one(params, kind, r, f, fp)
        if beh is not None and math.isfinite(sc):
            fits.append((sc, _n_free(beh), beh))
    if not fits:
        raise UnidentifiedBehavior("no admissible origin expansion", {})
    best = min(sc for sc, _, _ in fits)
    near = [t for t in fits if t[0] <= 1.1 * best + 1e-14]
    sc, _, beh = min(near, key=lambda t: (t[1], t[0]))
    if sc > ORIGIN_FIT_THRESHOLD:
        raise UnidentifiedBehavior(
            f"best origin fit {beh} has residual {sc:.3g} > {ORIGIN_FIT_THRESHOLD}",
            {type(b).__name__: s for s, _, b in fits},
        )
    return beh, sc


def _n_free(b) -> int:
    return {RegularA: 2, RegularB: 1, Vanishing: 0, ExactPole: 0}[type(b)]


class UnidentifiedBehavior(RuntimeError):
    """No origin expansion matches the data; ``scores`` maps candidate to residual."""

    def __init__(self, message, scores):
        super().__init__(message)
        self.scores = scores
