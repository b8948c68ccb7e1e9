"""Approximate-solution ingredients: distance products, cutoff, the
mass-balancing correction, and the far-field log corrections."""

import math

import numpy as np
import pytest

from csvortex.approx import (
    assemble_V,
    cutoff,
    cutoff_laplacian,
    cutoff_radial_derivative,
    eval_A,
    eval_H,
    eval_PQ,
    eval_phi,
    far_field_radius,
    phi_laplacian,
    quadrupole_coefficients,
)
from csvortex.grid import DiskGrid
from csvortex.liouville import LiouvilleProfile
from csvortex.model import GaugeModel
from csvortex.topological import solve_topological


def su3(p=(), q=()):
    return GaugeModel(1, 1, tuple(p), tuple(q))


def test_distance_products():
    m = su3()
    P, Q = eval_PQ(m, 0.1, 1.0, 0.0)
    assert P == 1.0 and Q == 1.0

    m = su3(p=[(1.0, 0.0)])
    P, _ = eval_PQ(m, 0.1, 1.0, 0.0)
    assert P == pytest.approx(0.9)

    m = GaugeModel(1, 2, (), ((0.0, 0.0), (0.0, 0.0)))
    _, Q = eval_PQ(m, 0.1, 0.0, 2.0)
    assert Q == pytest.approx(4.0)


def test_cutoff_plateaus_and_smoothness():
    assert cutoff(0.3) == 0.0
    assert cutoff(2.0) == 1.0
    assert 0.0 < cutoff(0.75) < 1.0
    # C^2 seams: one-sided second differences agree at r = 1/2 and r = 1
    for seam in (0.5, 1.0):
        h = 1e-5
        left = (cutoff(seam) - 2 * cutoff(seam - h) + cutoff(seam - 2 * h)) / h**2
        right = (cutoff(seam + 2 * h) - 2 * cutoff(seam + h) + cutoff(seam)) / h**2
        assert abs(left - right) < 1e-2
    # closed-form derivatives match finite differences in the collar
    r = np.linspace(0.55, 0.95, 9)
    h = 1e-6
    fd1 = (cutoff(r + h) - cutoff(r - h)) / (2 * h)
    assert np.allclose(cutoff_radial_derivative(r), fd1, atol=1e-5)
    fd2 = (cutoff(r + h) - 2 * cutoff(r) + cutoff(r - h)) / h**2
    assert np.allclose(cutoff_laplacian(r) - cutoff_radial_derivative(r) / r, fd2, atol=5e-3)


def test_phi_sign_and_cutoff_region():
    m = su3()
    prof = LiouvilleProfile(m.lam, m.a, m.b)
    assert eval_phi(prof, m, 0.1, 0.3, 0.0) == 0.0
    vals = eval_phi(prof, m, 0.1, np.array([0.6, 1.0, 10.0]), np.zeros(3))
    assert np.all(vals <= 0.0)
    # direct substitution at |z| = 10, eps = 0.1: chi = 1
    got = eval_phi(prof, m, 0.1, 10.0, 0.0)
    expect = -0.5 * prof.exp_value(np.array([1.0 + 0j]))[0]
    assert got == pytest.approx(expect, rel=1e-14)


def test_phi_laplacian_matches_finite_differences():
    m = GaugeModel(1, 2, ((0.5, 0.0), (-0.5, 0.0)))
    prof = LiouvilleProfile(m.lam, m.a, m.b, alpha=0.1 + 0.05j)
    eps = 0.07
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.6, 6.0, size=12)
    ang = rng.uniform(0, 2 * math.pi, size=12)
    px, py = pts * np.cos(ang), pts * np.sin(ang)
    h = 1e-4
    fd = (
        eval_phi(prof, m, eps, px + h, py)
        + eval_phi(prof, m, eps, px - h, py)
        + eval_phi(prof, m, eps, px, py + h)
        + eval_phi(prof, m, eps, px, py - h)
        - 4.0 * eval_phi(prof, m, eps, px, py)
    ) / h**2
    assert np.allclose(phi_laplacian(prof, m, eps, px, py), fd, atol=1e-5)


def test_far_field_radius():
    m = GaugeModel(1, 2, ((0.5, 0.0), (-0.3, 0.4)))
    assert far_field_radius(m) == pytest.approx(1.0 + 5.0 * 0.5)


def test_H_and_A_vanish_for_origin_vortices():
    m = GaugeModel(1, 2, ((0.0, 0.0), (0.0, 0.0)))
    x = np.array([0.5, 1.0, 3.0])
    assert np.allclose(eval_H(m, 0.01, x, 0 * x), 0.0, atol=1e-15)
    assert np.allclose(eval_A(m, x, 0 * x), 0.0, atol=1e-15)


def test_H_vanishes_for_single_centred_vortex():
    # b = N1 = 1, N2 = 0: centering forces p1 = 0, so H = 0 identically
    m = GaugeModel(1, 1, ((0.0, 0.0),))
    x = np.linspace(0.2, 5.0, 7)
    assert np.allclose(eval_H(m, 0.01, x, 0 * x), 0.0, atol=1e-15)


def test_A_for_mirrored_pair():
    m = GaugeModel(1, 2, ((1.0, 0.0), (-1.0, 0.0)))
    # A(x) = 2/|x|^2 - 4 x1^2/|x|^4; at x = (0, 1): A = 2
    assert eval_A(m, 0.0, 1.0) == pytest.approx(2.0)
    assert eval_A(m, 1.0, 0.0) == pytest.approx(-2.0)
    a1, a2 = quadrupole_coefficients(m)
    assert (a1, a2) == pytest.approx((-2.0, 0.0))


def test_H_requires_far_field():
    m = GaugeModel(1, 2, ((0.5, 0.0), (-0.5, 0.0)))
    with pytest.raises(ValueError):
        eval_H(m, 0.1, 0.1, 0.0)


def test_H_matches_quadrupole_expansion():
    m = GaugeModel(1, 2, ((0.7, 0.2), (-0.7, -0.2)))
    rng = np.random.default_rng(2)
    ang = rng.uniform(0, 2 * math.pi, 40)
    px, py = np.cos(ang), np.sin(ang)  # |x| = 1
    bounds = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        h = eval_H(m, eps, px, py)
        a = eval_A(m, px, py)
        bounds.append(np.max(np.abs(h - eps**2 * a)) / eps**3)
    # |H - eps^2 A| <= C eps^3 on |x| = 1: the scaled sup stays bounded
    assert max(bounds) < 10.0 * min(bounds) + 1.0


def test_A_is_pure_second_harmonic():
    m = GaugeModel(1, 2, ((0.7, 0.2), (-0.7, -0.2)), ())
    theta = np.linspace(0, 2 * math.pi, 32, endpoint=False)
    r = 2.3
    vals = eval_A(m, r * np.cos(theta), r * np.sin(theta)) * r**2
    a1, a2 = quadrupole_coefficients(m)
    fit = a1 * np.cos(2 * theta) + a2 * np.sin(2 * theta)
    assert np.max(np.abs(vals - fit)) < 1e-10


def test_far_field_identity_regular_plus_logs():
    # W_reg(eps x) + b ln P + 2 ln Q = W(eps x) + H(eps x) outside the core
    m = GaugeModel(1, 2, ((0.5, 0.0), (-0.5, 0.0)))
    prof = LiouvilleProfile(m.lam, m.a, m.b, alpha=0.1)
    eps = 0.05
    rng = np.random.default_rng(9)
    rr = rng.uniform(far_field_radius(m) + 0.1, 30.0, size=50)
    tt = rng.uniform(0, 2 * math.pi, size=50)
    px, py = rr * np.cos(tt), rr * np.sin(tt)
    from csvortex.approx import log_PQ

    lnP, lnQ = log_PQ(m, eps, eps * px, eps * py)
    z = eps * (px + 1j * py)
    lhs = prof.regular_value(z) + m.b * lnP + 2 * lnQ
    rhs = prof.value(z) + eval_H(m, eps, eps * px, eps * py)
    assert np.max(np.abs(lhs - rhs)) < 1e-11


@pytest.fixture(scope="module")
def assembled_setup():
    m = GaugeModel(1, 2, ((0.45, 0.2), (-0.45, -0.2)))
    grid = DiskGrid(30.0, 160, 48)
    topo = solve_topological(m.p_points, grid, tol=1e-10)
    prof = LiouvilleProfile(m.lam, m.a, m.b, alpha=0.08 + 0.02j)
    return m, topo, prof


class TestAssembledPair:
    @pytest.fixture()
    def setup(self, assembled_setup):
        return assembled_setup

    def test_identity_and_limit(self, setup):
        m, topo, prof = setup
        va = assemble_V(topo.interpolator(), prof, m, eps=0.05)
        rng = np.random.default_rng(21)
        assert va.identity_defect(rng) < 1e-12
        # eps -> 0 at fixed x: V1 -> U - ln 2
        x, y = 3.0, 1.0
        u_val = topo.interpolator()(x, y)
        for eps in (0.1, 0.01):
            va_eps = assemble_V(topo.interpolator(), prof, m, eps)
            assert abs(va_eps.v1(x, y) - (u_val - math.log(2))) < 0.5 * eps**2

    def test_far_field_slope(self, setup):
        m, topo, prof = setup
        eps = 0.02
        va = assemble_V(topo.interpolator(), prof, m, eps)
        # fit V2 against ln|x| far outside both scales (y between 20 and 35)
        y_r = np.linspace(20.0, 35.0, 40)
        vals = va.v2_fast(y_r, np.zeros_like(y_r))
        slope = np.polyfit(np.log(y_r / eps), vals, 1)[0]
        expected = -(m.b * m.N1 + 2 * m.N2 + 4)
        assert abs(slope - expected) / abs(expected) < 0.02

    def test_mismatched_profile_rejected(self, setup):
        m, topo, _ = setup
        bad = LiouvilleProfile(m.lam, 1, 1)  # wrong gauge pair
        with pytest.raises(ValueError):
            assemble_V(topo.interpolator(), bad, m, 0.05)
