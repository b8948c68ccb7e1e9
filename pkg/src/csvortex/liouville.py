"""The explicit two-parameter family of finite-mass blow-up profiles, the
kernel of its linearisation, the Gram system, and the projection that
removes the two obstruction directions from a right-hand side.

All closed forms live here; everything is evaluated through the bounded
combinations (the log-singular prefactor is kept separate from the regular
part), so fields never see infinities away from the singular point itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from csvortex.grid import ScalarField, WeightParams, sigma_r, weighted_l2
from csvortex.model import GaugeModel


def _as_fraction(lam) -> Fraction:
    if isinstance(lam, Fraction):
        return lam
    if isinstance(lam, int):
        return Fraction(lam)
    f = Fraction(lam).limit_denominator(10**6)
    if abs(float(f) - float(lam)) > 1e-12:
        raise ValueError(f"flux parameter {lam!r} is not a small rational")
    return f


@dataclass(frozen=True)
class LiouvilleProfile:
    """Profile W(z) = ln( 32 e^mu lam^2 |z|^(2 lam - 2)
    / ((4-ab)(2+b) (1 + e^mu |z^lam + alpha|^2)^2) ).

    ``alpha`` must vanish when lam is not an integer; the matching parameter
    only exists in the integer regime.
    """

    lam: Fraction
    a: int
    b: int
    mu: float = 0.0
    alpha: complex = 0.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_fraction(self.lam))
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.lam < 1:
            raise ValueError("flux parameter must satisfy lam >= 1")
        if self.lam.denominator != 1 and self.alpha != 0:
            raise ValueError("alpha must be zero when lam is not an integer")
        if self.prefactor <= 0:
            raise ValueError("profile prefactor must be positive")

    @property
    def lam_float(self) -> float:
        return float(self.lam)

    @property
    def lam_is_integer(self) -> bool:
        return self.lam.denominator == 1

    @property
    def prefactor(self) -> float:
        return 32.0 * math.exp(self.mu) * self.lam_float**2 / ((4 - self.a * self.b) * (2 + self.b))

    @classmethod
    def for_model(cls, model: GaugeModel, mu: float = 0.0, alpha: complex = 0.0) -> "LiouvilleProfile":
        return cls(lam=model.lam, a=model.a, b=model.b, mu=mu, alpha=alpha)

    # -- evaluation --------------------------------------------------------

    def _power_term(self, z: np.ndarray) -> np.ndarray:
        """|z^lam + alpha|^2 via the principal branch r^lam e^(i lam theta)."""
        z = np.asarray(z, dtype=complex)
        lam = self.lam_float
        if self.lam_is_integer:
            F = z ** int(self.lam) + self.alpha
        else:
            # alpha = 0 here, so only |z|^lam matters; the branch is moot
            F = np.abs(z) ** lam + 0.0j
        return np.abs(F) ** 2

    def value(self, z) -> np.ndarray:
        """W(z); raises when evaluated at the log singularity (lam > 1)."""
        z = np.asarray(z, dtype=complex)
        lam = self.lam_float
        if lam > 1.0 and np.any(z == 0):
            raise ValueError("profile is singular at z = 0 for lam > 1")
        const = math.log(self.prefactor)
        with np.errstate(divide="ignore"):
            log_r = np.where(np.abs(z) > 0, np.log(np.abs(z)), 0.0)
        return const + (2 * lam - 2) * log_r - 2.0 * np.log1p(math.exp(self.mu) * self._power_term(z))

    def regular_value(self, z) -> np.ndarray:
        """W(z) - (2 lam - 2) ln|z|, continuous through the origin."""
        const = math.log(self.prefactor)
        return const - 2.0 * np.log1p(math.exp(self.mu) * self._power_term(np.asarray(z, dtype=complex)))

    def exp_value(self, z) -> np.ndarray:
        """e^W(z), continuous (0 at the origin when lam > 1)."""
        z = np.asarray(z, dtype=complex)
        lam = self.lam_float
        r_pow = np.abs(z) ** (2 * lam - 2)
        return self.prefactor * r_pow / (1.0 + math.exp(self.mu) * self._power_term(z)) ** 2

    def mass_density(self, z) -> np.ndarray:
        """(1/4)(4-ab)(2+b) e^W, the quantity whose total integral is 8 pi lam."""
        return 0.25 * (4 - self.a * self.b) * (2 + self.b) * self.exp_value(z)


def eval_kernel(alpha: complex, lam, j: int, z) -> np.ndarray:
    """Bounded kernel functions of the linearised profile equation.

    j = 0: (1 - |F|^2)/(1 + |F|^2), j = 1: Re F/(1 + |F|^2),
    j = 2: Im F/(1 + |F|^2), with F = z^lam + alpha.
    """
    lam = _as_fraction(lam)
    z = np.asarray(z, dtype=complex)
    if lam.denominator == 1:
        F = z ** int(lam) + complex(alpha)
    else:
        if complex(alpha) != 0:
            raise ValueError("alpha must vanish for non-integer lam")
        F = np.abs(z) ** float(lam) + 0.0j
    den = 1.0 + np.abs(F) ** 2
    if j == 0:
        return (1.0 - np.abs(F) ** 2) / den
    if j == 1:
        return F.real / den
    if j == 2:
        return F.imag / den
    raise ValueError(f"kernel index must be 0, 1 or 2, got {j}")


@dataclass(frozen=True)
class KernelTriple:
    """Evaluators for the three kernel functions at fixed (alpha, lam)."""

    alpha: complex
    lam: Fraction

    def __call__(self, j: int, z) -> np.ndarray:
        return eval_kernel(self.alpha, self.lam, j, z)


# ---------------------------------------------------------------------------
# residual and mass checks
# ---------------------------------------------------------------------------


def liouville_residual(profile: LiouvilleProfile, grid) -> ScalarField:
    """Discrete residual lap W + (1/4)(4-ab)(2+b) e^W at interior nodes.

    The grid must exclude a neighbourhood of the origin when lam > 1 (the
    profile has a log singularity there).
    """
    if profile.lam_float > 1.0 and getattr(grid, "has_origin", False):
        raise ValueError("grid touches the profile singularity; use an annulus grid")
    z = grid.node_z if hasattr(grid, "node_z") else grid.r.astype(complex)
    w_vals = profile.value(z)
    res = grid.laplacian_apply(w_vals) + profile.mass_density(z)
    res[~grid.interior] = 0.0
    return ScalarField(grid, res)


def mass_integral(profile: LiouvilleProfile, grid, tail: bool = True) -> float:
    """Quadrature of the mass density over the grid plus the analytic tail
    correction beyond the truncation radius (the density decays like
    8 lam^2 e^-mu r^(-2 lam - 2))."""
    z = grid.node_z if hasattr(grid, "node_z") else grid.r.astype(complex)
    total = grid.integrate(profile.mass_density(z))
    if tail:
        lam = profile.lam_float
        r_out = grid.r_out
        total += 8.0 * math.pi * lam * math.exp(-profile.mu) * r_out ** (-2 * lam)
    return float(total)


# ---------------------------------------------------------------------------
# Gram system and projection
# ---------------------------------------------------------------------------


@lru_cache(maxsize=32)
def gram_diag_reference(lam: Fraction, d: float) -> float:
    """a_11(0) = pi * int_0^inf r^(2 lam + 1) / ((1 + r^(2 lam))^2 (1+r)^(2+2d)) dr,
    by adaptive quadrature (the independent 1D oracle)."""
    lam_f = float(lam)

    def f(r):
        return r ** (2 * lam_f + 1) / ((1.0 + r ** (2 * lam_f)) ** 2 * (1.0 + r) ** (2 + 2 * d))

    val, _ = quad(f, 0.0, np.inf, limit=400)
    return math.pi * val


def _gram_tail(lam: float, d: float, r_out: float) -> float:
    """Tail of the diagonal Gram entries: the angular average of Z_j^2 decays
    like r^(-2 lam)/2."""

    def f(r):
        return r ** (1 - 2 * lam) * (1.0 + r) ** (-2 - 2 * d)

    val, _ = quad(f, r_out, np.inf, limit=200)
    return math.pi * val


def gram_matrix(alpha: complex, lam, grid, w: WeightParams, tail: bool = True) -> np.ndarray:
    """2x2 matrix a_jk = int sigma^(-2-2d) Z_j Z_k dx by grid quadrature.

    Only defined in the integer regime (the projection is trivial otherwise).
    With ``tail`` the analytic diagonal tail beyond the truncation radius is
    added; the projection uses the raw grid values so that the discrete
    orthogonality identities hold exactly.
    """
    lam = _as_fraction(lam)
    if lam.denominator != 1:
        raise ValueError("Gram system only exists for integer lam")
    z = grid.node_z
    s_pow = sigma_r(grid.node_r) ** (-2.0 - 2.0 * w.d)
    z1 = eval_kernel(alpha, lam, 1, z)
    z2 = eval_kernel(alpha, lam, 2, z)
    wq = grid.weights
    a11 = float(wq @ (s_pow * z1 * z1))
    a12 = float(wq @ (s_pow * z1 * z2))
    a22 = float(wq @ (s_pow * z2 * z2))
    if tail:
        t = _gram_tail(float(lam), w.d, grid.r_out)
        a11 += t
        a22 += t
    return np.array([[a11, a12], [a12, a22]])


#: Gram determinant threshold, relative to a_11(0)^2, below which the
#: projection refuses to solve (solvability only holds for small |alpha|).
GRAM_DET_RELATIVE_FLOOR = 1e-6


@dataclass(frozen=True)
class ProjectionResult:
    field: ScalarField
    c1: float
    c2: float


def project_out_kernel(alpha: complex, lam, h: ScalarField, w: WeightParams) -> ProjectionResult:
    """Remove the two kernel directions from h:
    T h = h - c1 sigma^(-2-2d) Z_1 - c2 sigma^(-2-2d) Z_2, the constants
    solving the Gram system; identity in the non-integer regime.

    The output satisfies int (T h) Z_j dx = 0 (j = 1, 2) at the quadrature
    level exactly, because the same weights build both sides.
    """
    lam = _as_fraction(lam)
    if lam.denominator != 1:
        return ProjectionResult(h, 0.0, 0.0)
    grid = h.grid
    z = grid.node_z
    s_pow = sigma_r(grid.node_r) ** (-2.0 - 2.0 * w.d)
    z1 = eval_kernel(alpha, lam, 1, z)
    z2 = eval_kernel(alpha, lam, 2, z)
    gram = gram_matrix(alpha, lam, grid, w, tail=False)
    ref = gram_diag_reference(lam, w.d)
    det = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    if det < GRAM_DET_RELATIVE_FLOOR * ref**2:
        raise ValueError(
            f"Gram system numerically singular (det = {det:.3e}); |alpha| too large"
        )
    wq = grid.weights
    b = np.array([float(wq @ (h.values * z1)), float(wq @ (h.values * z2))])
    c = np.linalg.solve(gram, b)
    out = h.values - c[0] * s_pow * z1 - c[1] * s_pow * z2
    return ProjectionResult(ScalarField(grid, out), float(c[0]), float(c[1]))


def kernel_pairing(alpha: complex, lam, h: ScalarField) -> np.ndarray:
    """int h Z_j dx for j = 1, 2 (the obstruction functionals)."""
    z = h.grid.node_z
    wq = h.grid.weights
    return np.array(
        [
            float(wq @ (h.values * eval_kernel(alpha, lam, 1, z))),
            float(wq @ (h.values * eval_kernel(alpha, lam, 2, z))),
        ]
    )


def kernel_residual_norm(alpha: complex, lam, grid, w: WeightParams, j: int) -> float:
    """Y norm of the discrete image of kernel function j under the linearised
    operator lap + (1/4)(4-ab)(2+b) e^W; vanishes at the discretisation rate.

    The potential is evaluated from the closed form, so the result isolates
    the stencil error.
    """
    lam = _as_fraction(lam)
    # the potential (1/4)(4-ab)(2+b) e^W = 8 lam^2 |z|^(2l-2)/(1+|z^l+a|^2)^2
    # does not depend on (a, b); use the SU(3)-normalised profile
    profile = LiouvilleProfile(lam=lam, a=1, b=1, alpha=alpha)
    z = grid.node_z
    zj = eval_kernel(alpha, lam, j, z)
    res = grid.laplacian_apply(zj) + profile.mass_density(z) * zj
    res[~grid.interior] = 0.0
    svals = sigma_r(grid.node_r) ** (1.0 + w.d) * res
    return weighted_l2(grid, svals)
