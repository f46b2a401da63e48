"""Planar density families with log densities ``-U(x)``.

Homogeneous exponents have ``U(x) = r**alpha * g(theta) + c`` in polar
coordinates.  Elliptical and Weibull-margin densities are the two named
members.  Parallel level curves push a convex base curve out along its
normals; only the circle instance (the standard bivariate normal) carries
a log density and a sampler.  The uniform square is the bounded-support
reference case.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy import integrate, special

from .geometry import as_points

__all__ = [
    "DensityModel",
    "EllipticalModel",
    "HomogeneousModel",
    "ParallelCurveModel",
    "UniformSquareModel",
    "WeibullMarginModel",
    "log_density",
    "make_rng",
    "model_from_spec",
    "normalize",
    "sample",
    "sample_poissonized",
]

TWO_PI = 2.0 * np.pi
ANGULAR_TABLE_BINS = 4096
_VALIDATION_GRID = 4096

Angular = Callable[[np.ndarray], np.ndarray]
SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_xy(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != 2:
        raise ValueError(f"points must have a trailing axis of length 2, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def _polar(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)
    return r, theta


@dataclass(frozen=True)
class HomogeneousModel:
    """``f(x) = exp(-r**alpha g(theta) - c)`` with ``c`` derived.

    ``g`` and its first three derivatives are vectorized callables on
    angles; the third derivative feeds the curvature of the gradient
    profile at its minima.
    """

    alpha: float
    g: Angular
    dg: Angular
    d2g: Angular
    d3g: Angular
    name: str = "homogeneous"

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValueError(f"homogeneity exponent must exceed 1, got {self.alpha}")
        grid = np.linspace(0.0, TWO_PI, _VALIDATION_GRID, endpoint=False)
        gv = np.asarray(self.g(grid), dtype=float)
        if not np.all(np.isfinite(gv)) or gv.min() <= 0:
            raise ValueError("angular function g must be finite and bounded away from zero")
        end = float(self.g(np.nextafter(TWO_PI, 0.0)))
        if abs(float(self.g(0.0)) - end) >= 1e-12:
            raise ValueError("angular function g is not 2*pi periodic")

    # level-set geometry -----------------------------------------------------

    @cached_property
    def c(self) -> float:
        """Log-normalizer: ``log[(Gamma(2/alpha)/alpha) * int g**(-2/alpha) dtheta]``."""
        p = -2.0 / self.alpha
        total = 0.0
        quarter = np.pi / 2
        for k in range(4):
            val, err = integrate.quad(
                lambda t: float(self.g(t)) ** p, k * quarter, (k + 1) * quarter,
                epsabs=0.0, epsrel=1e-13, limit=200,
            )
            if not err <= 1e-10 * abs(val):
                raise ArithmeticError("angular normalization integral did not converge")
            total += val
        return math.log(special.gamma(2.0 / self.alpha) / self.alpha * total)

    def U(self, x) -> np.ndarray:
        r, theta = _polar(_as_xy(x))
        return r**self.alpha * self.g(theta) + self.c

    def log_density(self, x) -> np.ndarray:
        return -self.U(x)

    def grad_U(self, x) -> np.ndarray:
        xy = _as_xy(x)
        r, theta = _polar(xy)
        gv, dgv = self.g(theta), self.dg(theta)
        ct, st = np.cos(theta), np.sin(theta)
        scale = r ** (self.alpha - 1.0)
        gx = scale * (self.alpha * gv * ct - dgv * st)
        gy = scale * (self.alpha * gv * st + dgv * ct)
        return np.stack([gx, gy], axis=-1)

    def level_radius(self, theta, u) -> np.ndarray:
        """Radius of the level curve ``U = u`` in direction ``theta``."""
        v = np.maximum(np.asarray(u, dtype=float) - self.c, 0.0)
        return (v / self.g(theta)) ** (1.0 / self.alpha)

    def tail_prob(self, u) -> np.ndarray:
        """``P(U(X) > u)``: a regularized upper incomplete gamma in ``u - c``."""
        v = np.maximum(np.asarray(u, dtype=float) - self.c, 0.0)
        return special.gammaincc(2.0 / self.alpha, v)

    # sampling ----------------------------------------------------------------

    @cached_property
    def _angle_table(self) -> tuple[np.ndarray, np.ndarray]:
        edges = np.linspace(0.0, TWO_PI, ANGULAR_TABLE_BINS + 1)
        w = self.g(edges) ** (-2.0 / self.alpha)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(edges))])
        return cdf / cdf[-1], edges

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cdf, edges = self._angle_table
        theta = np.interp(rng.random(count), cdf, edges)
        s = rng.gamma(2.0 / self.alpha, 1.0, size=count)
        r = (s / self.g(theta)) ** (1.0 / self.alpha)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    @property
    def homogeneous(self) -> "HomogeneousModel":
        return self


def _elliptical_g(rho: float, d: float):
    def g(t):
        return (1.0 - rho * np.sin(2 * t)) / d

    def dg(t):
        return -2.0 * rho * np.cos(2 * t) / d

    def d2g(t):
        return 4.0 * rho * np.sin(2 * t) / d

    def d3g(t):
        return 8.0 * rho * np.cos(2 * t) / d

    return g, dg, d2g, d3g


class EllipticalModel(HomogeneousModel):
    """Elliptically contoured: ``g = (1 - 2 rho cos sin) / d``.

    ``alpha = 2`` with ``d = 2 (1 - rho**2)`` is the bivariate normal with
    unit variances and correlation ``rho``.
    """

    def __init__(self, rho: float, alpha: float = 2.0, d: float | None = None):
        rho = float(rho)
        if rho == 0.0:
            raise ValueError(
                "rho = 0 gives a rotation-invariant density whose gradient profile is "
                "constant; use the 'parallel-circle' family for the independent normal"
            )
        if not -1.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {rho}")
        if d is None:
            d = 2.0 * (1.0 - rho * rho)
        if not d > 0:
            raise ValueError(f"scale d must be positive, got {d}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "d", float(d))
        super().__init__(float(alpha), *_elliptical_g(rho, float(d)), name="elliptical")

    def __repr__(self):
        return f"EllipticalModel(rho={self.rho!r}, alpha={self.alpha!r}, d={self.d!r})"

    @classmethod
    def normal(cls, rho: float) -> "EllipticalModel":
        return cls(rho, 2.0, 2.0 * (1.0 - rho * rho))


def _abs_pow_derivs(alpha: float):
    """|cos t|**alpha and its first three derivatives."""

    def spow(c, e):
        # sign(c) * |c|**e, with 0**e = 0 for e > 0
        return np.sign(c) * np.abs(c) ** e

    def p0(t):
        return np.abs(np.cos(t)) ** alpha

    def p1(t):
        c, s = np.cos(t), np.sin(t)
        return -alpha * spow(c, alpha - 1.0) * s

    def p2(t):
        c, s = np.cos(t), np.sin(t)
        a = np.abs(c)
        return alpha * ((alpha - 1.0) * a ** (alpha - 2.0) * s * s - a**alpha)

    def p3(t):
        c, s = np.cos(t), np.sin(t)
        return alpha * spow(c, alpha - 3.0) * s * (
            -(alpha - 2.0) * ((alpha - 1.0) * s * s - c * c) + 2.0 * alpha * c * c
        )

    return p0, p1, p2, p3


class WeibullMarginModel(HomogeneousModel):
    """Independent margins ``const * exp(-|x1|**alpha - |x2|**alpha)``.

    Strict mode requires ``alpha > 4`` (three continuous derivatives of g);
    permissive mode accepts ``alpha > 2`` with a warning.
    """

    def __init__(self, alpha: float, strict: bool = True):
        alpha = float(alpha)
        if strict and not alpha > 4:
            raise ValueError(
                f"Weibull margins need alpha > 4 in strict mode, got {alpha}; "
                "pass strict=False to accept 2 < alpha <= 4"
            )
        if not alpha > 2:
            raise ValueError(f"Weibull margins need alpha > 2, got {alpha}")
        if not strict and alpha <= 4:
            warnings.warn(
                f"alpha = {alpha} <= 4: g is not three times continuously differentiable",
                stacklevel=2,
            )
        object.__setattr__(self, "strict", strict)
        p = _abs_pow_derivs(alpha)
        quarter = np.pi / 2

        def shifted(f):
            return lambda t: f(np.asarray(t) - quarter)

        fs = [lambda t, a=a, b=b: a(t) + shifted(b)(t) for a, b in zip(p, p)]
        super().__init__(alpha, *fs, name="weibull")

    def __repr__(self):
        return f"WeibullMarginModel(alpha={self.alpha!r}, strict={self.strict!r})"

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        mag = rng.gamma(1.0 / self.alpha, 1.0, size=(count, 2)) ** (1.0 / self.alpha)
        sign = np.where(rng.random((count, 2)) < 0.5, -1.0, 1.0)
        return sign * mag


def _const(value):
    return lambda t: np.full(np.shape(t), value, dtype=float)


@dataclass(frozen=True)
class ParallelCurveModel:
    """Level curves ``{c(t) + omega(u) n(t)}`` for ``u >= u_o``.

    The spread is given in reduced form: ``omega(u) = spread(u - shift)``,
    where ``shift`` plays the role of the log-normalizer.  ``curve`` is
    parameterized by arc length on ``[0, length]`` and traversed
    counterclockwise, so ``n(t)`` (the tangent turned clockwise) points
    outward.
    """

    curve: Callable[[np.ndarray], np.ndarray]
    curve_d1: Callable[[np.ndarray], np.ndarray]
    curve_d2: Callable[[np.ndarray], np.ndarray]
    length: float
    spread: Callable[[np.ndarray], np.ndarray]
    spread_d1: Callable[[np.ndarray], np.ndarray]
    shift: float
    u_o: float
    name: str = "parallel"
    # optional closed forms; without them the model is constants-only
    homogeneous: HomogeneousModel | None = field(default=None, compare=False)

    def __post_init__(self):
        t = np.linspace(0.0, self.length, 1024, endpoint=False)
        speed = np.linalg.norm(np.asarray(self.curve_d1(t)), axis=0)
        if np.max(np.abs(speed - 1.0)) > 1e-9:
            raise ValueError("base curve is not parameterized by arc length")
        curv = np.linalg.norm(np.asarray(self.curve_d2(t)), axis=0)
        if not (np.all(np.isfinite(curv)) and curv.min() > 0):
            raise ValueError("base curve must be strictly convex (|c''| in (0, inf))")
        if abs(float(self.omega(self.u_o))) > 1e-12:
            raise ValueError("omega(u_o) must vanish")
        u = self.u_o + np.geomspace(1e-6, 1e6, 256)
        if np.any(np.asarray(self.spread_d1(u - self.shift)) <= 0):
            raise ValueError("omega must be increasing")

    def omega(self, u):
        return self.spread(np.asarray(u, dtype=float) - self.shift)

    def omega_d1(self, u):
        return self.spread_d1(np.asarray(u, dtype=float) - self.shift)

    def normal(self, t) -> np.ndarray:
        d1 = np.asarray(self.curve_d1(t))
        return np.stack([d1[1], -d1[0]])

    @cached_property
    def total_curvature(self) -> float:
        val, err = integrate.quad(
            lambda t: float(np.linalg.norm(self.curve_d2(t))), 0.0, self.length,
            epsabs=0.0, epsrel=1e-12, limit=200,
        )
        if not err <= 1e-9 * max(abs(val), 1.0):
            raise ArithmeticError("curvature quadrature did not converge")
        return val

    def level_length(self, u) -> float:
        """Length of the level curve ``U = u``: ``L + omega(u) * int |c''|``."""
        return self.length + float(self.omega(u)) * self.total_curvature

    def _closed_form(self) -> HomogeneousModel:
        if self.homogeneous is None:
            raise NotImplementedError(
                f"{self.name} model has no closed-form density or sampler; "
                "it supports the constants pipeline only"
            )
        return self.homogeneous

    @property
    def c(self) -> float:
        return self._closed_form().c

    def U(self, x):
        return self._closed_form().U(x)

    def log_density(self, x):
        return self._closed_form().log_density(x)

    def grad_U(self, x):
        return self._closed_form().grad_U(x)

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        self._closed_form()
        r = np.sqrt(2.0 * rng.standard_exponential(count))
        phi = TWO_PI * rng.random(count)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi)])

    @classmethod
    def standard_normal(cls) -> "ParallelCurveModel":
        """Independent standard normal margins: unit circle, ``omega(u) = sqrt(2(u - log 2 pi)) - 1``."""
        log2pi = math.log(TWO_PI)
        normal = HomogeneousModel(
            2.0, _const(0.5), _const(0.0), _const(0.0), _const(0.0), name="standard-normal"
        )
        normal.__dict__["c"] = log2pi

        return cls(
            curve=lambda t: np.stack([np.cos(t), np.sin(t)]),
            curve_d1=lambda t: np.stack([-np.sin(t), np.cos(t)]),
            curve_d2=lambda t: np.stack([-np.cos(t), -np.sin(t)]),
            length=TWO_PI,
            spread=lambda v: np.sqrt(2.0 * np.asarray(v, dtype=float)) - 1.0,
            spread_d1=lambda v: 1.0 / np.sqrt(2.0 * np.asarray(v, dtype=float)),
            shift=log2pi,
            u_o=log2pi + 0.5,
            name="parallel-circle",
            homogeneous=normal,
        )


@dataclass(frozen=True)
class UniformSquareModel:
    """Uniform distribution on the unit square."""

    name: str = "uniform-square"
    c: float = 0.0
    homogeneous = None

    def log_density(self, x) -> np.ndarray:
        xy = _as_xy(x)
        inside = np.all((xy >= 0.0) & (xy <= 1.0), axis=-1)
        return np.where(inside, 0.0, -np.inf)

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((count, 2))


DensityModel = Union[HomogeneousModel, ParallelCurveModel, UniformSquareModel]


def log_density(model: DensityModel, x) -> np.ndarray:
    """``-U(x)``; ``-inf`` outside the support of the uniform square."""
    return model.log_density(x)


def normalize(model: DensityModel) -> float:
    """The constant ``c`` making ``exp(-U)`` integrate to one."""
    return float(model.c)


def sample(model: DensityModel, count: int, seed: SeedLike) -> np.ndarray:
    """``count`` i.i.d. draws, deterministic in ``seed``."""
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    if count == 0:
        return np.empty((0, 2))
    return as_points(model.draw(int(count), make_rng(seed)))


def sample_poissonized(model: DensityModel, n: float, seed: SeedLike) -> np.ndarray:
    """A Poisson(n) number of draws.

    The count and the coordinates come from two spawned children of
    ``seed``, so neither stream shifts when the other changes.
    """
    if not n > 0:
        raise ValueError(f"Poisson mean must be positive, got {n}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    count_ss, coord_ss = ss.spawn(2)
    count = int(np.random.default_rng(count_ss).poisson(n))
    return sample(model, count, np.random.default_rng(coord_ss))


FAMILIES = ("elliptical", "weibull", "parallel-circle", "uniform-square")


def model_from_spec(spec: dict) -> DensityModel:
    """Build a model from a plain mapping such as ``{"family": "weibull", "alpha": 6}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family == "elliptical":
        rho = spec.pop("rho")
        alpha = spec.pop("alpha", 2.0)
        d = spec.pop("d", None)
        model = EllipticalModel(rho, alpha, d)
    elif family == "weibull":
        model = WeibullMarginModel(spec.pop("alpha"), strict=not spec.pop("permissive", False))
    elif family == "parallel-circle":
        model = ParallelCurveModel.standard_normal()
    elif family == "uniform-square":
        model = UniformSquareModel()
    else:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    if spec:
        raise ValueError(f"unexpected parameters for {family}: {sorted(spec)}")
    return model
