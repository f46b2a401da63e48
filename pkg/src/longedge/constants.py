"""Gumbel norming constants for the longest-edge statistics.

For a homogeneous exponent ``U = r**alpha g(theta) + c`` the gradient on the
level curve ``U = u`` in direction ``theta`` has size
``(u - c)**(1 - 1/alpha) k(theta)``.  The minima of ``k`` set the scale and
their curvature sets ``c2``.  Parallel level curves get their constants from
the spread ``omega`` and the level-curve length instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .densities import TWO_PI, HomogeneousModel, ParallelCurveModel

__all__ = [
    "AngularProfile",
    "DegenerateProfileError",
    "NormingConstants",
    "angular_profile",
    "c2_homogeneous",
    "norming_circle_closed_form",
    "norming_homogeneous",
    "norming_parallel",
    "r_uniform_square",
]

PROFILE_GRID = 8192
MERGE_RADIUS = 1e-6
TIE_TOL = 1e-9
FLAT_TOL = 1e-10
MIN_CURVATURE = 1e-8
STATIONARY_TOL = 1e-10
FD_STEP = 1e-4
FD_RTOL = 1e-5
SQRT_2PI = math.sqrt(TWO_PI)


class DegenerateProfileError(ValueError):
    """The gradient profile has no isolated nondegenerate minima."""


@dataclass(frozen=True)
class AngularProfile:
    """Gradient profile ``k`` with its minima ``(theta_i, k, k'')``."""

    k: Callable[[np.ndarray], np.ndarray]
    dk: Callable[[np.ndarray], np.ndarray]
    d2k: Callable[[np.ndarray], np.ndarray]
    m: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    minima: tuple[tuple[float, float, float], ...]
    alpha: float

    @property
    def d(self) -> int:
        return len(self.minima)

    @property
    def k_min(self) -> float:
        return self.minima[0][1]

    @property
    def angles(self) -> np.ndarray:
        return np.array([t for t, _, _ in self.minima])


def _profile_functions(model: HomogeneousModel):
    a = model.alpha
    e = -1.0 + 1.0 / a

    def parts(t):
        t = np.asarray(t, dtype=float)
        return model.g(t), model.dg(t), model.d2g(t), model.d3g(t)

    def h(t):
        g, g1, _, _ = parts(t)
        return np.sqrt(a * a * g * g + g1 * g1)

    def k(t):
        g, g1, _, _ = parts(t)
        return g**e * np.sqrt(a * a * g * g + g1 * g1)

    def dk(t):
        g, g1, g2, _ = parts(t)
        hv = np.sqrt(a * a * g * g + g1 * g1)
        h1 = g1 * (a * a * g + g2) / hv
        return e * g ** (e - 1) * g1 * hv + g**e * h1

    def d2k(t):
        g, g1, g2, g3 = parts(t)
        hv = np.sqrt(a * a * g * g + g1 * g1)
        h1 = g1 * (a * a * g + g2) / hv
        h2 = (a * a * (g1 * g1 + g * g2) + g2 * g2 + g1 * g3 - h1 * h1) / hv
        return (
            e * (e - 1) * g ** (e - 2) * g1 * g1 * hv
            + e * g ** (e - 1) * (g2 * hv + 2 * g1 * h1)
            + g**e * h2
        )

    def m(t):
        g, g1, _, _ = parts(t)
        return g ** (-1.0 / a) * np.sqrt((g1 / (a * g)) ** 2 + 1.0)

    return k, dk, d2k, m, h


def _polish(theta: float, dk, d2k) -> float:
    t = theta
    for _ in range(50):
        curv = float(d2k(t))
        if curv <= 0:
            break
        step = float(dk(t)) / curv
        step = max(-1e-2, min(1e-2, step))
        t -= step
        if abs(step) < 1e-15:
            break
    return t % TWO_PI


def angular_profile(model: HomogeneousModel, grid: int = PROFILE_GRID) -> AngularProfile:
    """Locate every global minimum of the gradient profile ``k``.

    A dense scan brackets local minima, Newton on ``k'`` polishes them, and
    ``k''`` at each minimum is cross-checked against a central second
    difference of ``k``.
    """
    if not isinstance(model, HomogeneousModel):
        raise TypeError(f"expected a homogeneous model, got {type(model).__name__}")
    k, dk, d2k, m, h = _profile_functions(model)
    theta = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    kv = k(theta)
    if not np.all(np.isfinite(kv)):
        raise ArithmeticError("gradient profile is not finite on the grid")
    if kv.max() - kv.min() < FLAT_TOL:
        raise DegenerateProfileError(
            "gradient profile is constant, so its minima are not isolated; "
            "rotation-invariant densities belong to the parallel-curve pipeline"
        )
    local = np.flatnonzero((kv <= np.roll(kv, 1)) & (kv < np.roll(kv, -1)))

    found: list[float] = []
    for i in local:
        t = _polish(float(theta[i]), dk, d2k)
        if all(min(abs(t - s), TWO_PI - abs(t - s)) > MERGE_RADIUS for s in found):
            found.append(t)
    found.sort()
    values = np.array([float(k(t)) for t in found])
    k0 = values.min()
    keep = [t for t, v in zip(found, values) if v - k0 <= TIE_TOL * k0]

    minima = []
    for t in keep:
        slope = float(dk(t))
        curv = float(d2k(t))
        if abs(slope) >= STATIONARY_TOL:
            raise ArithmeticError(f"Newton polish left k'({t:.12g}) = {slope:.3g}")
        if curv <= MIN_CURVATURE:
            raise DegenerateProfileError(f"k''({t:.12g}) = {curv:.3g} is not positive enough")
        fd = float(k(t + FD_STEP) - 2 * k(t) + k(t - FD_STEP)) / FD_STEP**2
        if abs(fd - curv) > FD_RTOL * abs(curv):
            raise ArithmeticError(
                f"coded k''({t:.12g}) = {curv:.12g} disagrees with finite difference {fd:.12g}"
            )
        minima.append((t, float(k(t)), curv))
    return AngularProfile(k, dk, d2k, m, h, tuple(minima), model.alpha)


def c2_homogeneous(profile: AngularProfile) -> float:
    """``sqrt(2 pi) k0**1.5 * sum_i m(theta_i) / sqrt(k''(theta_i))``."""
    if profile.d < 1:
        raise DegenerateProfileError("profile has no minima")
    total = sum(float(profile.m(t)) / math.sqrt(curv) for t, _, curv in profile.minima)
    return SQRT_2PI * profile.k_min**1.5 * total


@dataclass(frozen=True)
class NormingConstants:
    """``M_n`` is approximately Gumbel with location ``mu_n`` and scale ``sigma_n``."""

    n: float
    tau: float
    xi_n: float
    eta_n: float
    c1: float
    c2: float
    r_n: float
    mu_n: float
    sigma_n: float
    v_c: float | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n, "tau": self.tau, "xi_n": self.xi_n, "eta_n": self.eta_n,
            "c1": self.c1, "c2": self.c2, "r_n": self.r_n, "mu_n": self.mu_n,
            "sigma_n": self.sigma_n, "v_c": self.v_c,
        }


def _assemble(n, tau, xi, eta, c1, c2, v_c=None, mu=None) -> NormingConstants:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if mu is None:
        mu = (eta - c1 * math.log(eta) - math.log(SQRT_2PI / c2)) / xi
    sigma = 1.0 / xi
    return NormingConstants(
        n=float(n), tau=float(tau), xi_n=xi, eta_n=eta, c1=c1, c2=c2,
        r_n=mu - sigma * math.log(tau), mu_n=mu, sigma_n=sigma, v_c=v_c,
    )


def _check_n(n: float) -> float:
    n = float(n)
    if not n > math.e**math.e:
        raise ValueError(f"n must exceed e**e (so log log log n is defined and positive), got {n}")
    return math.log(n)


def norming_homogeneous(
    model: HomogeneousModel, n: float, tau: float = 1.0, profile: AngularProfile | None = None
) -> NormingConstants:
    """Constants with ``xi_n = (log n)**(1 - 1/alpha) k0``, ``eta_n = log log n``, ``c1 = 1``."""
    logn = _check_n(n)
    if profile is None:
        profile = angular_profile(model)
    xi = logn ** (1.0 - 1.0 / model.alpha) * profile.k_min
    return _assemble(n, tau, xi, math.log(logn), 1.0, c2_homogeneous(profile), v_c=logn - model.c)


def _check_regular_variation(model: ParallelCurveModel) -> None:
    # u (log omega)'(u) should settle to a constant index
    u = model.u_o + np.array([1e6, 1e8, 1e10])
    idx = u * model.omega_d1(u) / model.omega(u)
    if not (np.all(np.isfinite(idx)) and np.all(idx > 0) and abs(idx[-1] - idx[-2]) < 1e-2):
        raise ValueError("omega is not regularly varying: u * (log omega)'(u) does not settle")


def norming_parallel(
    model: ParallelCurveModel, n: float, tau: float = 1.0, xi: str = "reduced"
) -> NormingConstants:
    """Constants with ``eta_n = log[xi * lambda(log n)]``, ``c1 = 1/2``, ``c2 = 1``.

    ``lambda(log n)`` is the exact level-curve length.  ``xi="reduced"``
    evaluates ``1/omega'`` with the normalizer dropped from the level (the
    same ``log n - c ~ log n`` replacement used for homogeneous models);
    ``xi="exact"`` uses ``1/omega'(log n)``.
    """
    logn = _check_n(n)
    _check_regular_variation(model)
    if xi == "reduced":
        xi_n = 1.0 / float(model.spread_d1(logn))
    elif xi == "exact":
        xi_n = 1.0 / float(model.omega_d1(logn))
    else:
        raise ValueError(f"xi must be 'reduced' or 'exact', got {xi!r}")
    eta = math.log(xi_n * model.level_length(logn))
    return _assemble(n, tau, xi_n, eta, 0.5, 1.0, v_c=logn - model.shift)


def norming_circle_closed_form(n: float, tau: float = 1.0) -> NormingConstants:
    """Standard normal: ``xi_n = sqrt(2 log n)`` and the closed-form location."""
    logn = _check_n(n)
    log2 = math.log(logn)
    xi = math.sqrt(2.0 * logn)
    mu = (log2 - 0.5 * math.log(log2) + math.log(2.0 * SQRT_2PI)) / xi
    return _assemble(n, tau, xi, math.log(4 * math.pi) + log2, 0.5, 1.0, v_c=logn - math.log(TWO_PI), mu=mu)


def r_uniform_square(n: float, tau: float = 1.0) -> float:
    """Threshold ``sqrt((log n - log tau) / (n pi))`` for the unit square."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    rad = (math.log(n) - math.log(tau)) / (n * math.pi)
    if not rad > 0:
        raise ValueError(f"n must exceed tau (got n={n}, tau={tau})")
    return math.sqrt(rad)
