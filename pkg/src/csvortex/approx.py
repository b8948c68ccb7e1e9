"""Assembly of the two-scale approximate solution: distance products for the
vortex families, the smooth cutoff, the mass-balancing correction phi, the
far-field log correction of the vortex positions and its quadrupole limit,
and the pair of leading profiles (V1, V2).

Everything here is closed-form except the topological field U, which enters
through an evaluator; log-singular terms are floored so exponentials of the
combinations degrade to exact zeros instead of NaNs at vortex points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from csvortex.liouville import LiouvilleProfile
from csvortex.model import GaugeModel

_LOG_FLOOR = -700.0

LN2 = math.log(2.0)


def far_field_radius(model: GaugeModel) -> float:
    """1 + 5 max_j,k(|p_j|, |q_k|); the log correction is defined outside
    this radius times epsilon."""
    return 1.0 + 5.0 * model.max_vortex_radius()


# -- distance products -------------------------------------------------------


def eval_PQ(model: GaugeModel, eps: float, px, py):
    """Products of distances to the scaled vortex points; empty families
    give the constant 1."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    P = np.ones(np.broadcast(px, py).shape)
    Q = np.ones(np.broadcast(px, py).shape)
    for x0, y0 in model.p_points:
        P = P * np.hypot(px - eps * x0, py - eps * y0)
    for x0, y0 in model.q_points:
        Q = Q * np.hypot(px - eps * x0, py - eps * y0)
    return P, Q


def log_PQ(model: GaugeModel, eps: float, px, py):
    """(ln P, ln Q), floored so downstream exponentials vanish cleanly at
    vortex points."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    lnP = np.zeros(np.broadcast(px, py).shape)
    lnQ = np.zeros(np.broadcast(px, py).shape)
    with np.errstate(divide="ignore"):
        for x0, y0 in model.p_points:
            d2 = (px - eps * x0) ** 2 + (py - eps * y0) ** 2
            lnP = lnP + 0.5 * np.log(np.maximum(d2, 1e-300))
        for x0, y0 in model.q_points:
            d2 = (px - eps * x0) ** 2 + (py - eps * y0) ** 2
            lnQ = lnQ + 0.5 * np.log(np.maximum(d2, 1e-300))
    return np.maximum(lnP, _LOG_FLOOR), np.maximum(lnQ, _LOG_FLOOR)


# -- smooth cutoff ------------------------------------------------------------

# quintic smoothstep on the collar 1/2 <= |x| <= 1


def _collar_s(r):
    return np.clip(2.0 * np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)


def cutoff(r):
    """chi(|x|): 0 inside radius 1/2, 1 outside radius 1, C^2 across the seams."""
    s = _collar_s(r)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def cutoff_radial_derivative(r):
    s = _collar_s(r)
    inside = (np.asarray(r) > 0.5) & (np.asarray(r) < 1.0)
    return np.where(inside, 2.0 * 30.0 * s**2 * (1.0 - s) ** 2, 0.0)


def cutoff_laplacian(r):
    """lap chi for the radial cutoff: chi'' + chi'/r."""
    r = np.asarray(r, dtype=float)
    s = _collar_s(r)
    inside = (r > 0.5) & (r < 1.0)
    d1 = 2.0 * 30.0 * s**2 * (1.0 - s) ** 2
    d2 = 4.0 * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    return np.where(inside, d2 + d1 / np.maximum(r, 0.25), 0.0)


# -- the mass-balancing correction phi ----------------------------------------


def _dW_dy(profile: LiouvilleProfile, y: np.ndarray) -> np.ndarray:
    """Wirtinger derivative of the profile, away from the origin."""
    lam = profile.lam_float
    emu = math.exp(profile.mu)
    if profile.lam_is_integer:
        n = int(profile.lam)
        F = y**n + profile.alpha
        dF = n * y ** (n - 1)
        return (lam - 1.0) / y - 2.0 * emu * np.conj(F) * dF / (1.0 + emu * np.abs(F) ** 2)
    r = np.abs(y)
    dr_W = (2 * lam - 2.0) / r - 4.0 * lam * emu * r ** (2 * lam - 1) / (1.0 + emu * r ** (2 * lam))
    return 0.5 * dr_W * np.conj(y) / r


def eval_phi(profile: LiouvilleProfile, model: GaugeModel, eps: float, px, py):
    """phi(z) = -(ab/2) e^{W(eps z)} chi(z); vanishes inside radius 1/2."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    z = px + 1j * py
    chi = cutoff(np.abs(z))
    out = np.zeros(np.broadcast(px, py).shape)
    mask = chi > 0.0
    ab = model.a * model.b
    out[mask] = -0.5 * ab * profile.exp_value(eps * z[mask]) * chi[mask]
    return out


def phi_laplacian(profile: LiouvilleProfile, model: GaugeModel, eps: float, px, py):
    """Closed-form lap phi using lap e^W = e^W (lap W + |grad W|^2) and
    lap W = -(1/4)(4-ab)(2+b) e^W away from the singular point."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    z = px + 1j * py
    r = np.abs(z)
    out = np.zeros(np.broadcast(px, py).shape)
    mask = r > 0.5
    if not np.any(mask):
        return out
    zm = z[mask]
    rm = r[mask]
    y = eps * zm
    expW = profile.exp_value(y)
    dW = _dW_dy(profile, y)
    lapW = -0.25 * (4 - model.a * model.b) * (2 + model.b) * expW
    lap_expW = expW * (lapW + 4.0 * np.abs(dW) ** 2)  # |grad W|^2 = 4 |dW/dy|^2
    radial_dW = 2.0 * np.real((zm / rm) * dW)  # dW/dr along the ray, in y units
    chi = cutoff(rm)
    chi_r = cutoff_radial_derivative(rm)
    chi_lap = cutoff_laplacian(rm)
    val = (
        eps**2 * chi * lap_expW
        + 2.0 * eps * expW * radial_dW * chi_r
        + expW * chi_lap
    )
    out[mask] = -0.5 * model.a * model.b * val
    return out


# -- far-field corrections -----------------------------------------------------


def eval_H(model: GaugeModel, eps: float, px, py):
    """b ln P + 2 ln Q - (b N1 + 2 N2) ln|x|, through the cancellation-free
    log1p form; only defined for |x| >= (far-field radius) * eps."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    r2 = px**2 + py**2
    r0 = far_field_radius(model)
    if np.any(r2 < (r0 * eps) ** 2 * (1.0 - 1e-12)):
        raise ValueError(f"far-field correction undefined inside radius {r0 * eps:.3g}")
    out = np.zeros(np.broadcast(px, py).shape)
    for x0, y0 in model.p_points:
        phi_j = (-2.0 * eps * (x0 * px + y0 * py) + eps**2 * (x0**2 + y0**2)) / r2
        out = out + 0.5 * model.b * np.log1p(phi_j)
    for x0, y0 in model.q_points:
        psi_k = (-2.0 * eps * (x0 * px + y0 * py) + eps**2 * (x0**2 + y0**2)) / r2
        out = out + np.log1p(psi_k)
    return out


def eval_A(model: GaugeModel, px, py):
    """Quadrupole limit of the far-field correction: H = eps^2 A + O(eps^3/|x|^3)."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    r2 = px**2 + py**2
    c = 0.5 * model.b * sum(x0**2 + y0**2 for x0, y0 in model.p_points) + sum(
        x0**2 + y0**2 for x0, y0 in model.q_points
    )
    proj = np.zeros(np.broadcast(px, py).shape)
    for x0, y0 in model.p_points:
        proj = proj + model.b * (x0 * px + y0 * py) ** 2
    for x0, y0 in model.q_points:
        proj = proj + 2.0 * (x0 * px + y0 * py) ** 2
    return c / r2 - proj / r2**2


def quadrupole_coefficients(model: GaugeModel) -> tuple[float, float]:
    """(A1, A2) with A(x) = (A1 cos 2 theta + A2 sin 2 theta)/|x|^2."""
    a1 = -(
        0.5 * model.b * sum(x0**2 - y0**2 for x0, y0 in model.p_points)
        + sum(x0**2 - y0**2 for x0, y0 in model.q_points)
    )
    a2 = -(
        model.b * sum(x0 * y0 for x0, y0 in model.p_points)
        + 2.0 * sum(x0 * y0 for x0, y0 in model.q_points)
    )
    return float(a1), float(a2)


# -- the approximate solution pair ---------------------------------------------


@dataclass(frozen=True)
class ApproxSolution:
    """Evaluators for the leading pair (V1, V2).

    V1(x) = U(x) - ln 2 + eps^2 phi(x) lives on the unit scale; V2 is the
    rescaled-component profile, evaluated natively in the fast variable
    y = eps x so the log-singular terms combine before exponentiation.
    The pair actually used downstream is (V1, V2 + 2 ln eps).
    """

    model: GaugeModel
    profile: LiouvilleProfile
    eps: float
    u_topological: object  # callable (px, py) -> U

    def phi(self, px, py):
        return eval_phi(self.profile, self.model, self.eps, px, py)

    def v1(self, px, py):
        return self.u_topological(px, py) - LN2 + self.eps**2 * self.phi(px, py)

    def v2_fast(self, yx, yy):
        """V2 at x = y/eps, written entirely in the fast variable y."""
        yx = np.asarray(yx, dtype=float)
        yy = np.asarray(yy, dtype=float)
        lnP, lnQ = log_PQ(self.model, self.eps, yx, yy)
        z = yx + 1j * yy
        wreg = self.profile.regular_value(z)
        xb, yb = yx / self.eps, yy / self.eps
        u_vals = self.u_topological(xb, yb)
        phi_vals = eval_phi(self.profile, self.model, self.eps, xb, yb)
        b = self.model.b
        return (
            wreg + b * lnP + 2.0 * lnQ - 0.5 * b * (u_vals + self.eps**2 * phi_vals)
        )

    def v2_slow(self, px, py):
        """V2 on the unit scale: identical to v2_fast at y = eps x."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        return self.v2_fast(self.eps * px, self.eps * py)

    def identity_defect(self, rng: np.random.Generator, n: int = 100) -> float:
        """Max violation of the defining combination
        V2 + (b/2)(U + eps^2 phi) - b ln P - 2 ln Q - W_reg = 0 at random points."""
        pts_r = rng.uniform(0.2, 20.0, size=n)
        pts_t = rng.uniform(0.0, 2 * math.pi, size=n)
        px, py = pts_r * np.cos(pts_t), pts_r * np.sin(pts_t)
        v2 = self.v2_slow(px, py)
        lnP, lnQ = log_PQ(self.model, self.eps, self.eps * px, self.eps * py)
        z = self.eps * (px + 1j * py)
        rhs = (
            self.profile.regular_value(z)
            + self.model.b * lnP
            + 2.0 * lnQ
            - 0.5 * self.model.b * (self.u_topological(px, py) + self.eps**2 * self.phi(px, py))
        )
        return float(np.max(np.abs(v2 - rhs)))


def assemble_V(u_topological, profile: LiouvilleProfile, model: GaugeModel, eps: float) -> ApproxSolution:
    """Bundle the approximate-solution evaluators; ``u_topological`` is any
    (px, py) -> U callable, typically a TopologicalSolution interpolator."""
    if float(profile.lam) != float(model.lam):
        raise ValueError("profile flux parameter does not match the model")
    if (profile.a, profile.b) != (model.a, model.b):
        raise ValueError("profile gauge pair does not match the model")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return ApproxSolution(model=model, profile=profile, eps=eps, u_topological=u_topological)
