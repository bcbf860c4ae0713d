"""Hessian metrics of radial and polytope potentials, and finite-difference
checks of the fourth-order equation sum_jk d_j d_k g^{jk} = -kappa and of
the scalar curvature S = -sum_jk d_j d_k g^{jk}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .integrate import Trajectory
from .model import DomainError, ModelParams

# fixed pseudo-random directions per shell, on top of the 2n axis directions
RANDOM_DIRECTIONS = 10
DEFAULT_SEED = 20240607
# default FD step relative to the shell radius
REL_STEP = 1e-3
# condition number beyond which a polytope Hessian counts as singular
MAX_CONDITION = 1e13

Profile = Callable[[np.ndarray], tuple]


# -- radial Hessian pair -----------------------------------------------------


@dataclass(frozen=True)
class HessianPair:
    n: int
    G: np.ndarray
    Ginv: np.ndarray
    # (f/r, multiplicity n - 1) and f'
    eigen_summary: tuple

    @property
    def positive_definite(self) -> bool:
        (tangential, _), radial = self.eigen_summary
        return tangential > 0 and radial > 0

    def inverse_error(self) -> float:
        """max |G Ginv - 1|."""
        return float(np.max(np.abs(self.G @ self.Ginv - np.eye(self.n))))


def hessian_from_radial(n: int, f: float, fp: float, x) -> HessianPair:
    """Hessian of a radial potential with g' = f at the point x.

    G = (f/r) 1 + (f/r)'/r x x^T and its closed-form inverse
    (r/f) 1 + (1/(r^2 f') - 1/(r f)) x x^T.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) != n:
        raise DomainError(f"point has dimension {len(x)}, expected {n}")
    r = float(np.linalg.norm(x))
    if r == 0:
        raise DomainError("the radial Hessian is undefined at the origin")
    if f == 0 or fp == 0:
        raise DomainError("need f != 0 and f' != 0")
    xx = np.outer(x, x)
    G = (f / r) * np.eye(n) + ((fp * r - f) / r**3) * xx
    Ginv = (r / f) * np.eye(n) + (1.0 / (r * r * fp) - 1.0 / (r * f)) * xx
    return HessianPair(n, G, Ginv, ((f / r, n - 1), fp))


def numeric_inverse(G: np.ndarray) -> np.ndarray:
    """Inverse by LU with partial pivoting; raises DomainError when singular."""
    cond = np.linalg.cond(G)
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise DomainError(f"matrix is numerically singular (condition {cond:.3g})")
    return np.linalg.inv(G)


def inverse_cross_check(pair: HessianPair) -> float:
    """Relative max gap between the closed-form and eliminated inverses."""
    num = numeric_inverse(pair.G)
    return float(np.max(np.abs(num - pair.Ginv)) / np.max(np.abs(pair.Ginv)))


# -- finite-difference divergence --------------------------------------------


def _stencil(n: int):
    """Offsets (in units of h) and weights for sum_jk d_j d_k F_jk.

    Diagonal entries use the three-point second difference, off-diagonal
    pairs the four-point cross difference.  Each entry is (offset, j, k, w).
    """
    terms = []
    eye = np.eye(n)
    for j in range(n):
        terms += [(eye[j], j, j, 1.0), (np.zeros(n), j, j, -2.0), (-eye[j], j, j, 1.0)]
        for k in range(n):
            if k == j:
                continue
            for sj in (1, -1):
                for sk in (1, -1):
                    terms.append((sj * eye[j] + sk * eye[k], j, k, 0.25 * sj * sk))
    return terms


def double_divergence(inv_hessian: Callable[[np.ndarray], np.ndarray], points, h) -> np.ndarray:
    """sum_jk d_j d_k g^{jk} at each row of ``points`` by central differences.

    ``inv_hessian`` maps an (m, n) array of points to an (m, n, n) array.
    ``h`` is a scalar or one step per point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = pts.shape
    h = np.broadcast_to(np.asarray(h, dtype=float), (m,))
    terms = _stencil(n)
    offsets = np.array([t[0] for t in terms])
    shifted = pts[:, None, :] + h[:, None, None] * offsets[None, :, :]
    values = inv_hessian(shifted.reshape(-1, n)).reshape(m, len(terms), n, n)
    total = np.zeros(m)
    for idx, (_, j, k, w) in enumerate(terms):
        total += w * values[:, idx, j, k]
    return total / (h * h)


def radial_inverse_hessian(n: int, profile: Profile) -> Callable[[np.ndarray], np.ndarray]:
    """Batch g^{jk}(x) for a radial potential whose g' = f is given by ``profile``.

    ``profile`` maps an array of radii to (f, f'); a Trajectory qualifies.
    For n = 1 the coordinate is used with its sign, g^{11} = 1/f'(x), so
    profiles defined for negative r are honoured.
    """

    def ginv(X):
        X = np.atleast_2d(X)
        if n == 1:
            _, fp = profile(X[:, 0])
            return (1.0 / np.asarray(fp)).reshape(-1, 1, 1)
        r = np.linalg.norm(X, axis=1)
        f, fp = (np.asarray(v, dtype=float) for v in profile(r))
        iso = r / f
        rank1 = 1.0 / (r * r * fp) - 1.0 / (r * f)
        return iso[:, None, None] * np.eye(n)[None] + rank1[:, None, None] * X[:, :, None] * X[:, None, :]

    return ginv


def shell_points(n: int, radii: Sequence[float], seed: int = DEFAULT_SEED, n_random: int = RANDOM_DIRECTIONS) -> np.ndarray:
    """Sample points: each radius times the 2n axis directions and
    ``n_random`` seeded random unit vectors (the same vectors on every shell)."""
    if n == 1:
        return np.asarray(radii, dtype=float).reshape(-1, 1)
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((n_random, n))
    rand /= np.linalg.norm(rand, axis=1)[:, None]
    dirs = np.concatenate([np.eye(n), -np.eye(n), rand])
    return np.concatenate([R * dirs for R in radii])


@dataclass(frozen=True)
class PDEResidual:
    max_residual: float
    points: np.ndarray
    residuals: np.ndarray
    steps: np.ndarray


def pde_residual_radial(
    params: ModelParams,
    traj: Union[Trajectory, Profile],
    radii: Sequence[float],
    h: Optional[float] = None,
    seed: int = DEFAULT_SEED,
) -> PDEResidual:
    """max over shell points of |sum_jk d_j d_k g^{jk} + kappa|.

    ``traj`` is a Trajectory or any callable r -> (f, f').  The FD step
    defaults to REL_STEP times each shell radius.  For n = 1 the radii are
    coordinates and may be negative or zero.
    """
    n = params.n
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 0:
        raise DomainError("no shells")
    mags = np.abs(radii)
    # n = 1 coordinates may sit at or near 0, so the step is never scaled below REL_STEP
    scale = mags if n > 1 else np.maximum(mags, 1.0)
    steps_per_shell = REL_STEP * scale if h is None else np.full(len(radii), float(h))
    if isinstance(traj, Trajectory):
        lo, hi = traj.domain
        reach = radii if n == 1 else mags
        # the off-diagonal stencil reaches sqrt(2) h from the point
        margin = 2 * steps_per_shell
        if np.any(reach - margin < lo) or np.any(reach + margin > hi):
            raise DomainError(f"shells need a 2h margin inside the trajectory domain [{lo}, {hi}]")
    if n > 1 and np.any(steps_per_shell >= 0.5 * mags):
        raise DomainError("FD step too large for the shell radius")
    if len(radii) > 1:
        gap = float(np.min(np.diff(np.sort(radii))))
        if gap > 0 and np.max(steps_per_shell) > gap:
            raise DomainError("FD step exceeds the shell spacing")
    pts = shell_points(n, radii, seed)
    per_point = np.repeat(steps_per_shell, len(pts) // len(radii))
    div = double_divergence(radial_inverse_hessian(n, traj), pts, per_point)
    res = np.abs(div + params.kappa)
    return PDEResidual(float(np.max(res)), pts, res, per_point)


def fd_convergence_order(params: ModelParams, traj, radii, h_values: Sequence[float]) -> list[float]:
    """Observed orders log2(e(h)/e(h/2)) for a halving sequence of steps."""
    errs = [pde_residual_radial(params, traj, radii, h).max_residual for h in h_values]
    return [math.log(errs[i] / errs[i + 1]) / math.log(h_values[i] / h_values[i + 1]) for i in range(len(errs) - 1)]


# -- polytope potentials -----------------------------------------------------


@dataclass(frozen=True)
class PolytopePotential:
    """g = 1/2 sum_l l_l(x) log l_l(x), with l_l(x) = c_l . x + d_l."""

    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if c.shape[0] != d.shape[0]:
            raise DomainError("one offset per facet")
        if np.any(np.all(c == 0, axis=1)):
            raise DomainError("facet normals must be nonzero")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.c.shape[1]

    @classmethod
    def cuboid(cls, bounds: Sequence[tuple[float, float]]) -> "PolytopePotential":
        """Facets x_j - a_j and b_j - x_j for each interval (a_j, b_j)."""
        n = len(bounds)
        rows, offs = [], []
        for j, (a, b) in enumerate(bounds):
            if not a < b:
                raise DomainError(f"empty interval ({a}, {b})")
            e = np.zeros(n)
            e[j] = 1.0
            rows += [e, -e]
            offs += [-a, b]
        return cls(np.array(rows), np.array(offs))

    @classmethod
    def simplex(cls, n: int) -> "PolytopePotential":
        """The standard simplex x_j > 0, 1 - sum x_j > 0."""
        return cls(np.vstack([np.eye(n), -np.ones((1, n))]), np.concatenate([np.zeros(n), [1.0]]))

    def facets(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.c.T + self.d

    def value(self, x) -> float:
        ell = self._interior(x)[0]
        return 0.5 * float(np.sum(ell * np.log(ell)))

    def _interior(self, X):
        ell = self.facets(X)
        if np.any(ell <= 0):
            raise DomainError("point is not strictly inside the polytope")
        return ell

    def hessian_batch(self, X) -> np.ndarray:
        """G = 1/2 sum_l c_l c_l^T / l_l(x) for each row of X."""
        w = 0.5 / self._interior(X)
        return np.einsum("ml,lj,lk->mjk", w, self.c, self.c)

    def inverse_hessian_batch(self, X) -> np.ndarray:
        G = self.hessian_batch(X)
        return np.stack([numeric_inverse(g) for g in G])


def polytope_hessian(p: PolytopePotential, x) -> tuple[np.ndarray, np.ndarray]:
    """(G, G^-1) at an interior point; G^-1 by elimination."""
    G = p.hessian_batch(x)[0]
    return G, numeric_inverse(G)


# -- curvature ---------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureReport:
    points: np.ndarray
    S: np.ndarray
    # S ~ affine[0] + affine[1:] . x
    affine: np.ndarray
    affine_deviation: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.S))

    @property
    def spread(self) -> float:
        return float(np.ptp(self.S))


def curvature_scan(
    source: Union[PolytopePotential, Callable[[np.ndarray], np.ndarray]],
    points,
    h: float = 1e-3,
) -> CurvatureReport:
    """S = -sum_jk d_j d_k g^{jk} on a grid, plus the best affine fit of S.

    ``source`` is a PolytopePotential or any batch inverse-Hessian callable
    (for instance from :func:`radial_inverse_hessian`).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if isinstance(source, PolytopePotential):
        # every stencil point must stay inside the polytope
        n = pts.shape[1]
        for offset, *_ in _stencil(n):
            source._interior(pts + h * offset)
        ginv = source.inverse_hessian_batch
    else:
        ginv = source
    S = -double_divergence(ginv, pts, h)
    design = np.hstack([np.ones((len(pts), 1)), pts])
    coef, *_ = np.linalg.lstsq(design, S, rcond=None)
    dev = float(np.max(np.abs(S - design @ coef)))
    return CurvatureReport(pts, S, coef, dev)
