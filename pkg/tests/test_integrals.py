from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from longedge.constants import norming_circle_closed_form, norming_homogeneous, r_uniform_square
from longedge.densities import (
    EllipticalModel,
    ParallelCurveModel,
    UniformSquareModel,
    WeibullMarginModel,
    sample,
    sample_poissonized,
)
from longedge.geometry import nn_distances
from longedge.integrals import (
    Strip,
    _lens_mass,
    _mu1_level,
    disc_square_area,
    lemma9_approx,
    mu1,
    mu2_ratio,
    sector_strip,
    sphere_prob,
)

NORMAL = ParallelCurveModel.standard_normal()
SQUARE = UniformSquareModel()


def level_point(n, theta=0.0, offset=0.0):
    rho = math.sqrt(2 * (math.log(n) + offset - math.log(2 * math.pi)))
    return np.array([rho * math.cos(theta), rho * math.sin(theta)])


def chord_area(cx, cy, r):
    """Disc-square overlap by one-dimensional quadrature, with x = cx + r sin(phi)."""
    def chord(phi):
        half = r * math.cos(phi)
        return max(0.0, min(1.0, cy + half) - max(0.0, cy - half)) * half

    lo = math.asin(min(1.0, max(-1.0, -cx / r)))
    hi = math.asin(min(1.0, max(-1.0, (1 - cx) / r)))
    if hi <= lo:
        return 0.0
    # the chord length has kinks where the circle crosses y = 0 or y = 1
    kinks = [s * math.acos(abs(a) / r) for a in (cy, 1 - cy) if abs(a) < r for s in (-1, 1)]
    kinks = sorted(k for k in kinks if lo < k < hi)
    return integrate.quad(chord, lo, hi, points=kinks or None, epsabs=1e-14, epsrel=1e-12, limit=200)[0]


def test_square_interior_disc():
    assert sphere_prob(SQUARE, [0.5, 0.5], 0.1) == pytest.approx(math.pi * 0.01, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5), st.floats(1e-3, 1.5))
@example(0.0, 1e-8, 0.625)
@example(0.0, 0.984375, 0.96875)
@example(-0.5, -0.5, 1.479428647828521)
def test_disc_square_area_matches_chords(cx, cy, r):
    got = float(disc_square_area(np.array([cx, cy]), r))
    assert got == pytest.approx(chord_area(cx, cy, r), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("r", [0.05, 0.5, 1.0, 3.0])
def test_normal_origin(r):
    expect = -math.expm1(-r * r / 2)
    assert sphere_prob(NORMAL, [0, 0], r) == pytest.approx(expect, rel=1e-12)
    assert sphere_prob(NORMAL, [0, 0], r, method="quadrature") == pytest.approx(expect, rel=1e-8)


@pytest.mark.parametrize("x", [(1.0, 2.0), (3.0, -4.0), (-5.5, 0.2)])
@pytest.mark.parametrize("r", [0.1, 0.7, 2.0])
def test_quadrature_matches_noncentral_chi2(x, r):
    exact = stats.ncx2.cdf(r * r, 2, x[0] ** 2 + x[1] ** 2)
    assert sphere_prob(NORMAL, x, r, method="quadrature") == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("model", [EllipticalModel.normal(0.6), WeibullMarginModel(6.0)])
def test_quadrature_matches_direct_integration(model):
    x, r = np.array([0.8, -0.3]), 0.6

    def inner(y, z):
        return math.exp(float(model.log_density(np.array([z, y]))))

    ref = integrate.dblquad(inner, x[0] - r, x[0] + r,
                            lambda z: x[1] - math.sqrt(max(r * r - (z - x[0]) ** 2, 0)),
                            lambda z: x[1] + math.sqrt(max(r * r - (z - x[0]) ** 2, 0)),
                            epsabs=1e-13, epsrel=1e-11)[0]
    assert sphere_prob(model, x, r) == pytest.approx(ref, rel=1e-8)


def test_monotone_and_limit():
    model = EllipticalModel.normal(0.4)
    rs = [0.1, 0.3, 1.0, 2.0, 4.0, 9.0]
    vals = [sphere_prob(model, [1.0, 1.0], r) for r in rs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0, abs=1e-9)


def test_sphere_prob_rejects():
    with pytest.raises(ValueError):
        sphere_prob(NORMAL, [0, 0], 0.0)
    with pytest.raises(ValueError):
        sphere_prob(NORMAL, [np.nan, 0], 1.0)


def test_tangent_plane_main_term_formula():
    x = level_point(1e8)
    r = 0.7
    a = lemma9_approx(NORMAL, x, r)
    xi = float(np.linalg.norm(x))
    u = float(NORMAL.U(x))
    assert a.xi == pytest.approx(xi, rel=1e-14)
    assert a.main_term == pytest.approx(math.sqrt(2 * math.pi * r) * math.exp(-u) * xi**-1.5 * math.exp(xi * r), rel=1e-12)
    # for the normal the tangent-plane error on the circle of radius r is exactly r**2 / 2
    assert a.epsilon_bound == pytest.approx(r * r / 2, rel=1e-12)


def test_tangent_plane_linearized_mass():
    x = level_point(1e6, theta=0.4)
    r = 1.1
    a = lemma9_approx(NORMAL, x, r)
    grad = NORMAL.grad_U(x)
    u = float(NORMAL.U(x))

    def lin(rho, phi):
        d = rho * np.array([math.cos(phi), math.sin(phi)])
        return rho * math.exp(-u - float(grad @ d))

    ref = integrate.dblquad(lin, 0, 2 * math.pi, 0, r, epsabs=0, epsrel=1e-11)[0]
    assert a.linearized == pytest.approx(ref, rel=1e-9)


def test_tangent_plane_zeta_and_tightening():
    x = level_point(1e8)
    a, b = lemma9_approx(NORMAL, x, 0.8, zeta=1.0), lemma9_approx(NORMAL, x, 0.8, zeta=0.5)
    assert a.main_term == b.main_term
    assert b.envelope[0] < a.envelope[0] and b.envelope[1] == a.envelope[1]
    x_far = x * 2
    c = lemma9_approx(NORMAL, x_far, 0.8)
    assert c.xi_r == pytest.approx(2 * a.xi_r)
    slack = lambda s: (2 / (1 + s.zeta) + 0.5) / s.xi_r
    assert slack(c) == pytest.approx(slack(a) / 2)


def test_tangent_plane_regime_checks():
    with pytest.raises(ValueError, match="linearization"):
        lemma9_approx(NORMAL, [0.5, 0.0], 0.5)
    with pytest.raises(ValueError):
        lemma9_approx(NORMAL, level_point(1e8), 1.0, zeta=-1.0)


def test_tangent_plane_envelope_holds_across_window():
    n = 1e8
    L, LL = math.log(n), math.log(math.log(n))
    rng = np.random.default_rng(1)
    for u in np.linspace(L - LL, L + LL, 25):
        theta = rng.uniform(0, 2 * math.pi)
        x = level_point(math.exp(u), theta)
        xi = float(np.linalg.norm(x))
        for r in (8 / xi, 10 / xi):
            a = lemma9_approx(NORMAL, x, r)
            lo, hi = a.bounds
            assert lo <= sphere_prob(NORMAL, x, r, method="quadrature") <= hi


def test_tangent_plane_envelope_for_weibull():
    model = WeibullMarginModel(6.0)
    x = np.array([1.9, 1.7])
    a = lemma9_approx(model, x, 0.08)
    lo, hi = a.bounds
    assert a.xi_r > 1
    assert lo <= sphere_prob(model, x, 0.08) <= hi


@pytest.mark.xfail(strict=True, reason="curvature error exp(-r**2/2) is not small at r = r_n; see decisions ledger")
def test_tangent_plane_main_term_at_threshold_radius():
    n = 1e8
    x = level_point(n)
    r = norming_circle_closed_form(n).r_n
    a = lemma9_approx(NORMAL, x, r)
    assert a.main_term == pytest.approx(sphere_prob(NORMAL, x, r, method="quadrature"), rel=0.10)


@pytest.mark.parametrize("model,n,seed", [(NORMAL, 1e4, 5), (SQUARE, 1e4, 6)])
def test_mu1_matches_simulated_count(model, n, seed):
    if isinstance(model, UniformSquareModel):
        r = r_uniform_square(n)
    else:
        r = norming_circle_closed_form(n).r_n
    counts = [np.sum(nn_distances(sample_poissonized(model, n, s)) > r)
              for s in np.random.SeedSequence(seed).spawn(400)]
    se = np.std(counts) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - mu1(model, n, r).value) < 4 * se


def test_mu1_elliptical_matches_simulated_count():
    model = EllipticalModel.normal(0.5)
    n = 3000.0
    r = norming_homogeneous(model, n).r_n
    counts = [np.sum(nn_distances(sample_poissonized(model, n, s)) > r)
              for s in np.random.SeedSequence(8).spawn(300)]
    se = np.std(counts) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - mu1(model, n, r).value) < 4 * se


def test_mu1_square_decomposition():
    # the square value at the threshold: interior term near 1 plus a boundary excess
    n = 1e6
    r = r_uniform_square(n)
    val = mu1(SQUARE, n, r).value
    assert 0.99 < (1 - 2 * r) ** 2 < 1
    assert val == pytest.approx(1.98089, abs=1e-4)


def test_mu1_square_decreasing_in_r():
    n = 1e5
    rs = np.linspace(0.5, 2.0, 16) * r_uniform_square(n)
    vals = [mu1(SQUARE, n, r).value for r in rs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    # decay rate lies between the corner rate n pi / 4 and the interior rate n pi
    slope = np.polyfit(rs**2, np.log(vals), 1)[0]
    assert -n * math.pi < slope < -n * math.pi / 4


def test_mu1_square_large_radius():
    assert mu1(SQUARE, 100.0, 0.6).value == pytest.approx(
        100 * integrate.dblquad(lambda y, x: math.exp(-100 * chord_area(x, y, 0.6)), 0, 1, 0, 1, epsabs=1e-10)[0],
        rel=1e-6)


def test_mu1_vanishes_for_large_radius():
    assert mu1(NORMAL, 1e6, 6.0).value < 1e-12
    assert mu1(SQUARE, 1e6, 0.3).value < 1e-12


def test_mu1_normal_ladder():
    vals = [mu1(NORMAL, n, norming_circle_closed_form(n).r_n).value for n in (1e4, 1e6, 1e8, 1e12)]
    np.testing.assert_allclose(vals, [1.21044, 1.17191, 1.14756, 1.11803], atol=1e-4)


def test_mu1_window_captures_mass():
    h = NORMAL.homogeneous
    n = 1e8
    r = norming_circle_closed_form(n).r_n
    v6 = _mu1_level(h, n, r, 6.0, "quadrature", 1, 16, 32)[0]
    v12 = _mu1_level(h, n, r, 12.0, "quadrature", 1, 16, 32)[0]
    assert v6 >= 0.99 * v12


def test_mu1_general_quadrature_agrees_with_exact():
    # the anisotropic code path on an isotropic model against the chi-square shortcut
    model = EllipticalModel(0.0 + 1e-12, 2.0, 2.0)
    n = 1e4
    r = norming_circle_closed_form(n).r_n
    assert mu1(model, n, r).value == pytest.approx(mu1(NORMAL, n, r).value, rel=2e-3)


@pytest.mark.xfail(strict=True, reason="main term overshoots by the neglected curvature factor; see decisions ledger")
def test_mu1_fast_path_agrees_with_quadrature():
    n = 1e6
    r = norming_circle_closed_form(n).r_n
    assert mu1(NORMAL, n, r, method="lemma9").value == pytest.approx(mu1(NORMAL, n, r).value, rel=0.05)


def test_mu1_rejects():
    with pytest.raises(ValueError):
        mu1(NORMAL, 0, 1.0)
    with pytest.raises(ValueError):
        mu1(NORMAL, 1e4, 0.5, method="other")


def test_lens_mass():
    h = NORMAL.homogeneous
    rng = np.random.default_rng(0)
    x = np.array([[1.2, 0.4]])
    r = 0.8
    y = x + np.array([[0.9, 0.3]])
    z = rng.standard_normal((4_000_000, 2))
    inside = (np.hypot(*(z - x).T) <= r) & (np.hypot(*(z - y).T) <= r)
    p = inside.mean()
    se = math.sqrt(p * (1 - p) / len(z))
    assert abs(_lens_mass(h, x, y, r)[0] - p) < 4 * se
    # coincident centers give the full disc, tangent ones give nothing
    full = _lens_mass(h, x, x + 1e-12, r)[0]
    assert full == pytest.approx(stats.ncx2.cdf(r * r, 2, float(x @ x.T)), rel=1e-6)
    assert _lens_mass(h, x, x + np.array([[2 * r, 0]]), r)[0] == pytest.approx(0, abs=1e-15)


def test_mu2_ratio_small():
    n = 1e6
    r = norming_circle_closed_form(n).r_n
    res = mu2_ratio(NORMAL, n, r, sector_strip(NORMAL, n, 0.3, 10 * r), seed=1)
    assert res.ratio + 3 * res.se < 0.2
    assert res.pairs == 100_000


def test_mu2_ratio_decreases():
    vals = []
    for n in (1e4, 1e6, 1e8):
        r = norming_circle_closed_form(n).r_n
        vals.append(mu2_ratio(NORMAL, n, r, sector_strip(NORMAL, n, 0.3, 10 * r), pairs=40_000, seed=2).ratio)
    assert vals[0] > vals[1] > vals[2]


def test_mu2_ratio_matches_simulation():
    # pairs of r-separate points closer than 2r, against the expected pair count in the strip
    n, r, reps = 2000.0, 0.6, 3000
    strip = Strip(-0.6, 0.6, math.log(n) - 3, math.log(n) + 6)
    res = mu2_ratio(NORMAL, n, r, strip, pairs=60_000, seed=4)
    h = NORMAL.homogeneous
    singles, pairs = 0, 0
    for s in np.random.SeedSequence(9).spawn(reps):
        pts = sample_poissonized(NORMAL, n, s)
        sep = pts[(nn_distances(pts) > r) & strip.contains(h, pts)]
        singles += len(sep)
        if len(sep) > 1:
            dd = np.hypot(*(sep[:, None] - sep[None]).transpose(2, 0, 1))
            pairs += int(np.sum(dd <= 2 * r) - len(sep)) // 2
    assert singles / reps == pytest.approx(res.mu1, rel=0.1)
    expected = reps * res.ratio * res.mu1 / 2
    assert abs(pairs - expected) < 4 * math.sqrt(expected)


def test_degenerate_strip():
    with pytest.raises(ValueError):
        Strip(1.0, 1.0, 0.0, 1.0)
    far = Strip(0.0, 0.1, 1000.0, 1001.0)
    with pytest.raises(ValueError, match="degenerate"):
        mu2_ratio(NORMAL, 1e4, 5.0, far, pairs=100)
