"""Disc probabilities and the expected counts of r-separate points.

``mu1(model, n, r)`` is ``n * E[exp(-n F(S(X; r)))]``, the expected number
of Poisson points whose nearest neighbor is farther than ``r``.  Homogeneous
models are integrated in level coordinates ``(theta, u)`` over a window
around ``U = log n``; the unit square splits into interior, edge strips and
corners, each with the exact disc-square overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .densities import TWO_PI, HomogeneousModel, ParallelCurveModel, UniformSquareModel, make_rng

__all__ = [
    "Mu1Result",
    "Mu2Result",
    "SphereProbApprox",
    "Strip",
    "disc_square_area",
    "lemma9_approx",
    "mu1",
    "mu2_ratio",
    "sector_strip",
    "sphere_prob",
]

SPHERE_RTOL = 1e-8
MU1_RTOL = 1e-3
WINDOW_B0 = 6.0
EPS_BOUNDARY_POINTS = 64
_CHUNK = 4_000_000  # density evaluations per batch


# unit square ---------------------------------------------------------------

def _chord_height(x, r):
    # sqrt(r**2 - x**2) without cancellation near |x| = r
    x = np.clip(x, -r, r)
    return np.sqrt(np.maximum((r - x) * (r + x), 0.0))


def _half_plane(a, r):
    # area of the centered disc with x >= a
    a = np.clip(a, -r, r)
    s = _chord_height(a, r)
    return r * r * np.arctan2(s, a) - a * s


def _quadrant_upper(a, b, r):
    # area of the centered disc with x >= a, y >= b, for b >= 0
    w = _chord_height(b, r)
    lo = np.clip(a, -w, w)
    # the circle's height at lo; exactly b where lo was clipped to +-w
    h_lo = np.where(np.abs(a) >= w, b, _chord_height(lo, r))

    def prim(x, y):
        # integral of sqrt(r**2 - t**2) from 0 to x, with y = sqrt(r**2 - x**2)
        return 0.5 * (x * y + r * r * np.arctan2(x, y))

    return np.where(b < r, prim(w, b) - prim(lo, h_lo) - b * (w - lo), 0.0)


def _quadrant(a, b, r):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    upper = _quadrant_upper(a, np.abs(b), r)
    return np.where(b >= 0, upper, _half_plane(a, r) - upper)


def disc_square_area(x, r: float, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Exact area of ``S(x; r)`` inside the square ``[lo, hi]**2``."""
    x = np.asarray(x, dtype=float)
    ax0, ax1 = lo - x[..., 0], hi - x[..., 0]
    ay0, ay1 = lo - x[..., 1], hi - x[..., 1]
    area = _quadrant(ax0, ay0, r) - _quadrant(ax1, ay0, r) - _quadrant(ax0, ay1, r) + _quadrant(ax1, ay1, r)
    return np.maximum(area, 0.0)


# disc probabilities ---------------------------------------------------------

def _homogeneous(model) -> HomogeneousModel:
    if isinstance(model, HomogeneousModel):
        return model
    if isinstance(model, ParallelCurveModel):
        return model._closed_form()
    raise TypeError(f"no polar form for {type(model).__name__}")


def _is_standard_normal(h: HomogeneousModel) -> bool:
    if h.alpha != 2.0:
        return False
    grid = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    return bool(np.all(np.abs(h.g(grid) - 0.5) < 1e-15))


def _is_isotropic(h: HomogeneousModel) -> bool:
    grid = np.linspace(0.0, TWO_PI, 256, endpoint=False)
    gv = h.g(grid)
    return bool(np.ptp(gv) <= 1e-14 * gv.max())


def _disc_rule(r: float, nr: int, nphi: int):
    t, w = np.polynomial.legendre.leggauss(nr)
    rho = 0.5 * r * (t + 1.0)
    wr = 0.5 * r * w * rho
    phi = TWO_PI * np.arange(nphi) / nphi
    dx = (rho[:, None] * np.cos(phi)[None, :]).ravel()
    dy = (rho[:, None] * np.sin(phi)[None, :]).ravel()
    wt = (wr[:, None] * np.full(nphi, TWO_PI / nphi)[None, :]).ravel()
    return dx, dy, wt


def _disc_mass(h: HomogeneousModel, pts: np.ndarray, r: float, nr: int, nphi: int) -> np.ndarray:
    """Fixed-rule disc probabilities for many centers (Gauss radial, trapezoid angular)."""
    dx, dy, wt = _disc_rule(r, nr, nphi)
    out = np.empty(len(pts))
    step = max(1, _CHUNK // len(wt))
    for s in range(0, len(pts), step):
        p = pts[s:s + step]
        y = np.stack([p[:, 0:1] + dx, p[:, 1:2] + dy], axis=-1)
        out[s:s + step] = np.exp(-h.U(y)) @ wt
    return out


def _disc_mass_adaptive(h, pts, r, rtol, nr=16, nphi=32, max_nphi=4096):
    prev = _disc_mass(h, pts, r, nr, nphi)
    while True:
        nr, nphi = 2 * nr, 2 * nphi
        cur = _disc_mass(h, pts, r, nr, nphi)
        if np.all(np.abs(cur - prev) <= rtol * np.abs(cur)):
            return cur
        if nphi >= max_nphi:
            raise ArithmeticError(
                f"disc quadrature missed relative tolerance {rtol:g} with {nr}x{nphi} nodes"
            )
        prev = cur


def _disc_prob(model, pts: np.ndarray, r: float, method: str, rtol: float) -> np.ndarray:
    if isinstance(model, UniformSquareModel):
        return disc_square_area(pts, r)
    h = _homogeneous(model)
    if method == "auto" and _is_standard_normal(h):
        return stats.ncx2.cdf(r * r, 2, np.einsum("ij,ij->i", pts, pts))
    if method not in ("auto", "quadrature"):
        raise ValueError(f"method must be 'auto' or 'quadrature', got {method!r}")
    return _disc_mass_adaptive(h, pts, r, rtol)


def sphere_prob(model, x, r: float, method: str = "auto", rtol: float = SPHERE_RTOL):
    """``F(S(x; r))``, the probability of the closed disc of radius ``r`` at ``x``.

    The unit square uses the exact overlap area and the standard normal the
    noncentral chi-square law unless ``method="quadrature"``; everything
    else goes through polar quadrature centered at ``x``.
    """
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.all(np.isfinite(pts)):
        raise ValueError("centers must be finite")
    if isinstance(model, UniformSquareModel) and method == "quadrature":
        raise ValueError("the uniform square uses its exact disc overlap")
    out = _disc_prob(model, pts, float(r), method, rtol)
    return float(out[0]) if scalar else out


# tangent-plane approximation -------------------------------------------------

@dataclass(frozen=True)
class SphereProbApprox:
    """Linearized disc probability with its multiplicative error envelope."""

    main_term: float
    xi: float
    epsilon_bound: float
    zeta: float
    r: float

    @property
    def xi_r(self) -> float:
        return self.xi * self.r

    @property
    def envelope(self) -> tuple[float, float]:
        """Bounds on ``F(S) / main_term``."""
        slack = (2.0 / (1.0 + self.zeta) + 0.5) / self.xi_r
        return math.exp(-self.epsilon_bound) * (1.0 - slack), math.exp(self.epsilon_bound)

    @property
    def bounds(self) -> tuple[float, float]:
        lo, hi = self.envelope
        return lo * self.main_term, hi * self.main_term

    @property
    def linearized(self) -> float:
        """Exact mass of the linearized density: ``2 pi r I1(xi r) / xi * exp(-U)``."""
        z = self.xi_r
        return self.main_term * TWO_PI * self.r * special.ive(1, z) / self.xi / (
            math.sqrt(TWO_PI * self.r) * self.xi**-1.5
        )


def lemma9_approx(model, x, r: float, zeta: float = 1.0) -> SphereProbApprox:
    """``sqrt(2 pi r) exp(-U(x)) xi**-1.5 exp(xi r)`` with ``xi = |grad U(x)|``.

    ``epsilon_bound`` is the largest deviation of ``U`` from its tangent plane
    over 64 points on the circle of radius ``r``, so it is a sampled lower
    estimate of the supremum over the disc.
    """
    if not -1.0 < zeta <= 1.0:
        raise ValueError(f"zeta must lie in (-1, 1], got {zeta}")
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    h = _homogeneous(model)
    x = np.asarray(x, dtype=float)
    grad = h.grad_U(x)
    xi = float(np.hypot(grad[0], grad[1]))
    if not xi * r > 1:
        raise ValueError(f"xi * r = {xi * r:.4g} <= 1: outside the linearization regime")
    u = float(h.U(x))
    phi = TWO_PI * np.arange(EPS_BOUNDARY_POINTS) / EPS_BOUNDARY_POINTS
    d = r * np.column_stack([np.cos(phi), np.sin(phi)])
    eps = float(np.max(np.abs(h.U(x + d) - u - d @ grad)))
    main = math.sqrt(TWO_PI * r) * xi**-1.5 * math.exp(xi * r - u)
    return SphereProbApprox(main, xi, eps, float(zeta), float(r))


def _lemma9_main(h: HomogeneousModel, pts: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    grad = h.grad_U(pts)
    xi = np.hypot(grad[:, 0], grad[:, 1])
    main = np.sqrt(TWO_PI * r) * xi**-1.5 * np.exp(xi * r - h.U(pts))
    return main, xi * r


# mu1 -----------------------------------------------------------------------

@dataclass(frozen=True)
class Mu1Result:
    value: float
    window_b: float
    excluded: float  # bound on the mass left outside the window
    method: str

    def __float__(self):
        return self.value


def _window(h: HomogeneousModel, n: float, b: float) -> tuple[float, float]:
    logn = math.log(n)
    ll = math.log(logn) if logn > 1 else 1.0
    return max(logn - b * ll, h.c + 1e-9), logn + b * ll


def _level_grid(h, u_lo, u_hi, n_theta, panel=0.5, order=10):
    panels = max(1, int(math.ceil((u_hi - u_lo) / panel)))
    edges = np.linspace(u_lo, u_hi, panels + 1)
    t, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    u = (edges[:-1, None] + half[:, None] * (t + 1.0)).ravel()
    wu = (half[:, None] * w).ravel()
    theta = TWO_PI * np.arange(n_theta) / n_theta
    wt = TWO_PI / n_theta
    T, Uu = np.meshgrid(theta, u, indexing="ij")
    rho = h.level_radius(T, Uu)
    pts = np.stack([rho * np.cos(T), rho * np.sin(T)], axis=-1).reshape(-1, 2)
    # dF = exp(-u) rho**2 / (alpha v) du dtheta
    jac = np.exp(-Uu) * rho**2 / (h.alpha * (Uu - h.c))
    weights = (jac * wu[None, :] * wt).ravel()
    return pts, weights, T.ravel(), Uu.ravel()


def _mu1_level(h, n, r, b, method, n_theta, nr, nphi):
    u_lo, u_hi = _window(h, n, b)
    pts, wts, _, _ = _level_grid(h, u_lo, u_hi, n_theta)
    if _is_standard_normal(h) and method == "quadrature":
        F = stats.ncx2.cdf(r * r, 2, np.einsum("ij,ij->i", pts, pts))
    else:
        F = _disc_mass(h, pts, r, nr, nphi)
    if method == "lemma9":
        main, xr = _lemma9_main(h, pts, r)
        F = np.where(xr > 1.0, main, F)
    value = float(n * np.sum(np.exp(-n * F) * wts))
    upper = float(n * h.tail_prob(u_hi))
    # below the window the disc mass only grows inward; bound by the edge value
    edge = _level_grid(h, u_lo, u_lo + 1e-12, n_theta)[0]
    F_edge = _disc_mass(h, edge, r, nr, nphi)
    lower = float(n * (1.0 - h.tail_prob(u_lo)) * np.exp(-n * F_edge.min()))
    return value, upper + lower


def mu1(model, n: float, r: float, method: str = "quadrature", rtol: float = MU1_RTOL) -> Mu1Result:
    """Expected number of ``r``-separate points of a Poisson(``n F``) process.

    ``method="quadrature"`` computes every disc probability numerically
    (exactly for the square and the standard normal); ``method="lemma9"``
    swaps in the linearized main term wherever ``xi r > 1``.
    """
    if not n > 0 or not r > 0:
        raise ValueError(f"n and r must be positive, got n={n}, r={r}")
    if method not in ("quadrature", "lemma9"):
        raise ValueError(f"method must be 'quadrature' or 'lemma9', got {method!r}")
    if isinstance(model, UniformSquareModel):
        return Mu1Result(_mu1_square(n, r), 0.0, 0.0, "exact-overlap")
    h = _homogeneous(model)
    iso = _is_isotropic(h)
    b = WINDOW_B0
    for _ in range(6):
        n_theta, nr, nphi = (1 if iso else 64), 16, 32
        value, excluded = _mu1_level(h, n, r, b, method, n_theta, nr, nphi)
        while True:
            n_theta, nr, nphi = (1 if iso else 2 * n_theta), 2 * nr, 2 * nphi
            finer, excluded = _mu1_level(h, n, r, b, method, n_theta, nr, nphi)
            done = abs(finer - value) <= 0.1 * rtol * abs(finer)
            value = finer
            if done:
                break
            if nphi > 2048:
                raise ArithmeticError(f"mu1 quadrature missed relative tolerance {rtol:g}")
        if excluded <= rtol * max(value, 1e-300):
            return Mu1Result(value, b, excluded, method)
        b *= 2
    raise ArithmeticError(f"window truncation still excludes {excluded:.3g} at b = {b / 2:g}")


def _mu1_square(n: float, r: float, order: int = 48) -> float:
    if r >= 0.5:
        # no interior; plain tensor Gauss rule on the square
        t, w = np.polynomial.legendre.leggauss(4 * order)
        z, wz = 0.5 * (t + 1), 0.5 * w
        X, Y = np.meshgrid(z, z, indexing="ij")
        A = disc_square_area(np.stack([X, Y], -1), r)
        return float(n * np.sum(np.exp(-n * A) * np.outer(wz, wz)))
    t, w = np.polynomial.legendre.leggauss(order)
    z, wz = 0.5 * r * (t + 1), 0.5 * r * w
    interior = (1 - 2 * r) ** 2 * n * math.exp(-n * math.pi * r * r)
    edge_pts = np.column_stack([z, np.full_like(z, 0.5)])
    edge = 4 * (1 - 2 * r) * n * np.sum(np.exp(-n * disc_square_area(edge_pts, r)) * wz)
    X, Y = np.meshgrid(z, z, indexing="ij")
    A = disc_square_area(np.stack([X, Y], -1), r)
    corner = 4 * n * np.sum(np.exp(-n * A) * np.outer(wz, wz))
    return float(interior + edge + corner)


# mu2 -----------------------------------------------------------------------

@dataclass(frozen=True)
class Strip:
    """Angular sector ``theta_lo <= theta < theta_hi`` of the level window ``[u_lo, u_hi]``."""

    theta_lo: float
    theta_hi: float
    u_lo: float
    u_hi: float

    def __post_init__(self):
        if not (self.theta_hi > self.theta_lo and self.u_hi > self.u_lo):
            raise ValueError("degenerate strip: empty angular or level range")
        if self.theta_hi - self.theta_lo > TWO_PI:
            raise ValueError("strip spans more than a full turn")

    def contains(self, h: HomogeneousModel, y: np.ndarray) -> np.ndarray:
        th = np.mod(np.arctan2(y[:, 1], y[:, 0]) - self.theta_lo, TWO_PI)
        u = h.U(y)
        return (th < self.theta_hi - self.theta_lo) & (u >= self.u_lo) & (u <= self.u_hi)


def sector_strip(model, n: float, theta: float, arc_width: float, b: float = WINDOW_B0) -> Strip:
    """Sector centered at ``theta`` spanning ``arc_width`` along the level curve ``U = log n``."""
    h = _homogeneous(model)
    rho = float(h.level_radius(theta, math.log(n)))
    half = 0.5 * arc_width / rho
    u_lo, u_hi = _window(h, n, b)
    return Strip(theta - half, theta + half, u_lo, u_hi)


@dataclass(frozen=True)
class Mu2Result:
    ratio: float
    se: float
    mu1: float
    pairs: int


def _lens_mass(h: HomogeneousModel, x: np.ndarray, y: np.ndarray, r: float, order: int = 16) -> np.ndarray:
    """``F(S(x; r) & S(y; r))`` for ``|x - y| < 2r`` by a smooth tensor Gauss rule."""
    d = y - x
    dist = np.hypot(d[:, 0], d[:, 1])
    a = 0.5 * dist
    e = d / dist[:, None]
    perp = np.column_stack([-e[:, 1], e[:, 0]])
    mid = 0.5 * (x + y)
    half_h = np.sqrt(np.maximum(r * r - a * a, 0.0))
    t, w = np.polynomial.legendre.leggauss(order)
    # perpendicular offset q = half_h sin(phi) removes the square-root endpoint
    phi = 0.5 * np.pi * t
    q = half_h[:, None] * np.sin(phi)[None, :]
    dq = half_h[:, None] * np.cos(phi)[None, :] * (0.5 * np.pi * w)[None, :]
    s_max = np.sqrt(np.maximum(r * r - q * q, 0.0)) - a[:, None]
    s = s_max[:, :, None] * t[None, None, :]
    ws = s_max[:, :, None] * w[None, None, :]
    z = (
        mid[:, None, None, :]
        + q[:, :, None, None] * perp[:, None, None, :]
        + s[..., None] * e[:, None, None, :]
    )
    f = np.exp(-h.U(z))
    return np.einsum("pij,pij,pi->p", f, ws, dq)


def mu2_ratio(model, n: float, r: float, strip: Strip, pairs: int = 100_000, seed=0,
              n_theta: int = 64, n_u: int = 256) -> Mu2Result:
    """Importance-sampled ``mu2(strip, r) / mu1(strip, r)`` with its standard error.

    First points come from a piecewise-constant proposal proportional to the
    ``mu1`` integrand on a ``(theta, u)`` grid over the strip; partners are
    uniform on the annulus ``r < |x - y| <= 2r``, the only place the pair
    indicator is nonzero.
    """
    if not pairs >= 2:
        raise ValueError("need at least two pairs")
    h = _homogeneous(model)
    normal = _is_standard_normal(h)
    rng = make_rng(seed)

    def disc(p):
        if normal:
            return stats.ncx2.cdf(r * r, 2, np.einsum("ij,ij->i", p, p))
        return _disc_mass(h, p, r, 32, 64)

    th_edges = np.linspace(strip.theta_lo, strip.theta_hi, n_theta + 1)
    u_edges = np.linspace(strip.u_lo, strip.u_hi, n_u + 1)
    tc, uc = 0.5 * (th_edges[1:] + th_edges[:-1]), 0.5 * (u_edges[1:] + u_edges[:-1])
    T, Uc = np.meshgrid(tc, uc, indexing="ij")
    rho = h.level_radius(T, Uc)
    centers = np.stack([rho * np.cos(T), rho * np.sin(T)], -1).reshape(-1, 2)
    dth, du = th_edges[1] - th_edges[0], u_edges[1] - u_edges[0]
    cell = (np.exp(-n * disc(centers)) * (np.exp(-Uc) * rho**2 / (h.alpha * (Uc - h.c))).ravel()) * dth * du
    if not cell.sum() > 0:
        raise ValueError("degenerate strip: no mass of r-separate points")
    prob = cell / cell.sum()

    idx = rng.choice(len(prob), size=pairs, p=prob)
    i_th, i_u = np.divmod(idx, n_u)
    th = th_edges[i_th] + dth * rng.random(pairs)
    u = u_edges[i_u] + du * rng.random(pairs)
    rx = h.level_radius(th, u)
    x = np.column_stack([rx * np.cos(th), rx * np.sin(th)])
    # f(x) / p(x) with p the proposal density in the plane
    jac = np.exp(-u) * rx**2 / (h.alpha * (u - h.c))
    w_x = jac * dth * du / prob[idx]

    s = r * np.sqrt(1.0 + 3.0 * rng.random(pairs))
    phi = TWO_PI * rng.random(pairs)
    y = x + s[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])
    ann = 3.0 * math.pi * r * r

    Fx = disc(x)
    a_term = np.exp(-n * Fx) * w_x
    inside = strip.contains(h, y)
    b_term = np.zeros(pairs)
    if inside.any():
        xi, yi = x[inside], y[inside]
        Fy = disc(yi)
        lens = np.zeros(len(xi))
        near = s[inside] < 2 * r
        if near.any():
            lens[near] = _lens_mass(h, xi[near], yi[near], r)
        union = Fx[inside] + Fy - lens
        b_term[inside] = n * ann * np.exp(-n * union - h.U(yi)) * w_x[inside]

    ma, mb = a_term.mean(), b_term.mean()
    ratio = mb / ma
    # delta-method standard error of a ratio of means
    cov = np.cov(np.vstack([b_term, a_term]))
    var = (cov[0, 0] - 2 * ratio * cov[0, 1] + ratio**2 * cov[1, 1]) / (pairs * ma**2)
    return Mu2Result(float(ratio), float(math.sqrt(max(var, 0.0))), float(n * ma), int(pairs))
