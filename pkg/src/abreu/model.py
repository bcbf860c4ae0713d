"""Radial reduction of Abreu's equation.

For a potential g(r), r = |x|, the inverse Hessian depends on f = g' and f'
only, and the fourth-order PDE collapses to the second-order ODE

    f'' = (kappa/n * r - lambda * r**(1-n) - (n-1)/f) * f'**2 + (n-1)/r * f'

where lambda is the constant introduced when integrating the third-order
radial equation once.  This module holds the ODE instance, its two
equivalent right-hand sides, the residual functionals used for
verification, and the two closed-form solutions used as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


@dataclass(frozen=True)
class ModelParams:
    """The triple (n, kappa, lambda) fixing one instance of the radial ODE."""

    n: int
    kappa: float
    lam: float

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def theorems_apply(self) -> bool:
        """True when the classification theorems' hypotheses hold."""
        return self.kappa > 0 and self.lam != 0

    def radial_coefficient(self, r: float) -> float:
        """kappa/n * r - lambda * r**(1-n), the coefficient of f' in the log form."""
        return self.kappa / self.n * r - self.lam * r ** (1 - self.n)


@dataclass(frozen=True)
class State:
    """A point (r, f, f') on a solution curve."""

    r: float
    f: float
    fp: float


def _check_state(params: ModelParams, s: State, need_fp: bool = False) -> None:
    # n = 1 is regular at r = 0 and at f = 0, so the closed form may be followed across both
    if params.n > 1 and not s.r > 0:
        raise DomainError(f"r must be positive, got {s.r}")
    if s.f == 0 and params.n > 1:
        raise DomainError("f = 0 is a singular point of the ODE")
    if need_fp and s.fp == 0:
        raise DomainError("f' = 0 is outside the domain of this form")
    if not (math.isfinite(s.r) and math.isfinite(s.f) and math.isfinite(s.fp)):
        raise DomainError(f"non-finite state {s}")


def rhs_second_order(params: ModelParams, s: State) -> float:
    """Return f'' from the explicit second-order form of the ODE."""
    _check_state(params, s)
    n = params.n
    quad = params.radial_coefficient(s.r) - ((n - 1) / s.f if n > 1 else 0.0)
    lin = (n - 1) / s.r * s.fp if n > 1 else 0.0
    return quad * s.fp * s.fp + lin


def rhs_log_form(params: ModelParams, s: State) -> float:
    """Return f'' by solving the logarithmic-derivative form for it.

    d/dr log(f**(n-1) f' / r**(n-1)) = (n-1) f'/f + f''/f' - (n-1)/r, so
    f'' = f' * (K(r) f' - (n-1) f'/f + (n-1)/r).
    """
    _check_state(params, s, need_fp=True)
    n = params.n
    log_derivative = params.radial_coefficient(s.r) * s.fp
    chain = (n - 1) * (s.fp / s.f - 1 / s.r) if n > 1 else 0.0
    return s.fp * (log_derivative - chain)


def _first_integral_terms(params: ModelParams, s: State) -> tuple[float, ...]:
    _check_state(params, s, need_fp=True)
    if s.f == 0 or s.r == 0:
        raise DomainError("A = r/f and B need r != 0 and f != 0")
    n, r, f, fp = params.n, s.r, s.f, s.fp
    fpp = rhs_second_order(params, s)
    a_prime = 1.0 / f - r * fp / f**2
    b = 1.0 / (r * r * fp) - 1.0 / (r * f)
    b_prime = -2.0 / (r**3 * fp) - fpp / (r * r * fp * fp) + 1.0 / (r * r * f) + fp / (r * f * f)
    return (a_prime / r, r * b_prime, (n + 1) * b, -params.lam * r ** (-n), params.kappa / n)


def first_integral_residual(params: ModelParams, s: State, relative: bool = False) -> float:
    """Residual A'/r + rB' + (n+1)B - lambda r^-n + kappa/n of the first integral.

    A = r/f and B = 1/(r^2 f') - 1/(r f); A' and B' are expanded analytically
    with f'' taken from :func:`rhs_second_order`, so the residual vanishes to
    rounding for every admissible state.  With ``relative=True`` the residual
    is divided by the sum of the magnitudes of its terms.
    """
    terms = _first_integral_terms(params, s)
    total = math.fsum(terms)
    if relative:
        return total / math.fsum(abs(t) for t in terms)
    return total


def inner_expression(params: ModelParams, r: float, f: float, fp: float, fpp: float) -> float:
    """A'/r + rB' + (n+1)B evaluated with an externally supplied f''."""
    n = params.n
    a_prime = 1.0 / f - r * fp / f**2
    b = 1.0 / (r * r * fp) - 1.0 / (r * f)
    b_prime = -2.0 / (r**3 * fp) - fpp / (r * r * fp * fp) + 1.0 / (r * r * f) + fp / (r * f * f)
    return a_prime / r + r * b_prime + (n + 1) * b


# five-point central first derivative weights at offsets -2..2
_D1_WEIGHTS = (1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12)


def third_order_residual(params: ModelParams, traj, r: float, rel_step: float = 1e-3) -> float:
    """Residual of (n + r d/dr)(A'/r + rB' + (n+1)B) + kappa along a trajectory.

    The inner expression is built from the trajectory's dense output (f, f'
    and the interpolant's own derivative for f''), then differentiated with
    a five-point central stencil of width ``rel_step * r``.
    """
    h = rel_step * abs(r)
    lo, hi = traj.domain
    if not (lo + 2 * h < r < hi - 2 * h):
        raise DomainError(f"r={r} is within one stencil width of the trajectory ends [{lo}, {hi}]")

    def inner(x):
        f, fp = traj(x)
        fpp = traj.derivative(x)[1]
        return inner_expression(params, x, f, fp, fpp)

    values = [inner(r + k * h) for k in (-2, -1, 0, 1, 2)]
    d_inner = sum(w * v for w, v in zip(_D1_WEIGHTS, values)) / h
    return params.n * values[2] + r * d_inner + params.kappa


@dataclass(frozen=True)
class ClosedFormN1Params:
    """Constants of the general n = 1 solution; ``r_minus < r < r_plus``."""

    rho: float
    alpha: float = 0.0
    beta: float = 0.0
    kappa: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.kappa == 0:
            raise DomainError("kappa must be nonzero")

    @property
    def r_minus(self) -> float:
        return min(self.lam - self.rho, self.lam + self.rho) / self.kappa

    @property
    def r_plus(self) -> float:
        return max(self.lam - self.rho, self.lam + self.rho) / self.kappa

    @property
    def model(self) -> ModelParams:
        return ModelParams(1, self.kappa, self.lam)


def closed_form_n1(p: ClosedFormN1Params, r: float) -> tuple[float, float, float]:
    """Return (f, f', g) of the n = 1 general solution at r."""
    r_lo, r_hi = p.r_minus, p.r_plus
    if not r_lo < r < r_hi:
        raise DomainError(f"r={r} outside ({r_lo}, {r_hi})")
    u = p.lam - p.kappa * r
    f = math.log((p.rho - u) / (p.rho + u)) / p.rho + p.alpha
    fp = 2.0 * p.kappa / (p.rho**2 - u * u)
    g = ((r - r_lo) * math.log(r - r_lo) + (r_hi - r) * math.log(r_hi - r)) / p.rho + p.alpha * r + p.beta
    return f, fp, g


def exact_lambda0(params: ModelParams, r: float) -> tuple[float, float]:
    """The lambda = 0 solution f = 2n^2/(kappa r), singular at the origin."""
    if params.lam != 0:
        raise DomainError("exact solution requires lambda = 0")
    if not r > 0:
        raise DomainError(f"r must be positive, got {r}")
    c = 2.0 * params.n**2 / params.kappa
    return c / r, -c / (r * r)
