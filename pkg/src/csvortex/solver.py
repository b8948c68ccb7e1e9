"""Two-scale contraction solver for the mixed-type construction.

The unknown corrections live on two grids: xi on the unit-scale disk (where
the topological field varies) and eta on the fast-scale disk (where the
blow-up profile varies, in the variable y = eps * x).  One Picard step maps
(xi, eta) to (L1^-1 g1(xi, eta), L2^-1 T g2(xi, eta)): L1 = lap + f'(U) is
solved with a Dirichlet closure, L2 = lap + (1/4)(4-ab)(2+b) e^W through a
bordered system that carries the kernel constraints, the two obstruction
multipliers, and the logarithmic boundary slope as explicit unknowns.

In the integer-flux regime the two obstruction coefficients survive; the
outer loop moves the profile parameter alpha by a damped Newton iteration on
the pairing of g2 against the kernel, whose small-alpha linearisation has
the closed-form slope computed in ``obstruction_slope``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad

from csvortex.approx import (
    ApproxSolution,
    LN2,
    assemble_V,
    cutoff,
    eval_H,
    eval_phi,
    far_field_radius,
    phi_laplacian,
)
from csvortex.grid import DiskGrid, RadialGrid, ScalarField, WeightParams, h2_norm, norm_X, sigma_r, weighted_l2
from csvortex.liouville import LiouvilleProfile, eval_kernel, project_out_kernel
from csvortex.model import GaugeModel, reject_excluded_case
from csvortex.topological import TopologicalSolution, f_eval, f_prime, solve_topological

#: Any exponential argument beyond this signals a diverging iterate.
EXPONENT_GUARD = 40.0


class SolverDivergenceError(RuntimeError):
    pass


class BallViolationError(SolverDivergenceError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    picard_tol: float = 1e-9
    max_picard: int = 200
    alpha_tol: float = 1e-8
    max_alpha_steps: int = 25
    #: contraction-ball radius; None sizes it from the first iterate (with a
    #: floor of 10), since the fast-profile amplitude 32 lam^2/((4-ab)(2+b))
    #: legitimately drives |eta|_X to order 10^2 for lam = 3
    ball_radius: float | None = None
    system_tol: float = 1e-6
    nondegeneracy_floor: float = 1e-3
    weight: WeightParams = field(default_factory=WeightParams)
    strict: bool = False


def existence_case(model: GaugeModel) -> int | None:
    """1 for heavy vortex mass (b N1 + 2 N2 >= 3), 2 for light mass with all
    vortices at the origin, None outside both (construction unproven there)."""
    mass = model.b * model.N1 + 2 * model.N2
    if mass >= 3:
        return 1
    if model.all_vortices_at_origin():
        return 2
    return None


def _guard_exponents(*arrays):
    for arr in arrays:
        m = np.max(arr)
        if m > EXPONENT_GUARD:
            raise SolverDivergenceError(
                f"exponential argument reached {m:.2f} > {EXPONENT_GUARD}; iterate diverging"
            )


@dataclass
class IterationState:
    xi: ScalarField
    eta: ScalarField
    eps: float
    alpha: complex
    g1_norm: float
    g2_norm: float
    iterations: int
    c1: float
    c2: float
    mu: tuple
    diff_history: list[float]
    converged: bool

    @property
    def contraction_ratios(self) -> list[float]:
        h = self.diff_history
        return [b / a for a, b in zip(h, h[1:]) if a > 0]


@dataclass
class SolveReport:
    epsilon: float
    alpha_solved: complex
    beta: float
    picard_iterations: int
    alpha_iterations: int
    g1_norm: float
    g2_norm: float
    defect_c: tuple
    sup_u1_deviation: float
    system_residual: float
    converged: bool
    xi_norm: float
    eta_norm: float

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "alpha_re": self.alpha_solved.real,
            "alpha_im": self.alpha_solved.imag,
            "beta": self.beta,
            "picard_iterations": self.picard_iterations,
            "alpha_iterations": self.alpha_iterations,
            "g1_norm": self.g1_norm,
            "g2_norm": self.g2_norm,
            "defect_c1": self.defect_c[0],
            "defect_c2": self.defect_c[1],
            "sup_u1_deviation": self.sup_u1_deviation,
            "system_residual": self.system_residual,
            "converged": self.converged,
            "xi_norm": self.xi_norm,
            "eta_norm": self.eta_norm,
        }


# ---------------------------------------------------------------------------
# far-field flux exponent
# ---------------------------------------------------------------------------


def extract_beta(u2_values: np.ndarray, radii: np.ndarray, annulus: tuple[float, float]) -> float:
    """Least-squares fit of u2 ~ -2 beta ln r + const over the annulus."""
    lo, hi = annulus
    mask = (radii >= lo) & (radii <= hi)
    if mask.sum() < 8:
        raise ValueError("annulus under-resolved: fewer than 8 sample radii")
    x = -2.0 * np.log(radii[mask])
    design = np.stack([x, np.ones(mask.sum())], axis=-1)
    coef, *_ = np.linalg.lstsq(design, u2_values[mask], rcond=None)
    return float(coef[0])


# ---------------------------------------------------------------------------
# the closed-form linearisation slope of the matching map
# ---------------------------------------------------------------------------


def obstruction_slope(model: GaugeModel) -> float:
    """Leading coefficient of the matching map at alpha = 0:
    64 lam^4 (a b^3 - 16)(lam - 1) pi / ((4-ab)(2+b)^2 lam) * I(lam),
    I(lam) = int_0^inf t^(2 lam - 2)/(1 + t^lam)^5 dt.

    Defined for integer lam >= 2 (it vanishes identically at lam = 1)."""
    if not model.lam_is_integer:
        raise ValueError("the matching map only exists for integer flux parameter")
    lam = int(model.lam)
    if lam == 1:
        raise ValueError("leading coefficient vanishes at lam = 1")
    a, b = model.a, model.b
    integral, _ = quad(lambda t: t ** (2 * lam - 2) / (1.0 + t**lam) ** 5, 0.0, np.inf, limit=200)
    return (
        64.0 * lam**4 * (a * b**3 - 16.0) * (lam - 1.0) * math.pi
        / ((4.0 - a * b) * (2.0 + b) ** 2 * lam)
        * integral
    )


# ---------------------------------------------------------------------------
# the two-scale problem
# ---------------------------------------------------------------------------


class _AlphaContext:
    """Per-alpha arrays and factorisations on the fast grid."""

    def __init__(self, problem: "TwoScaleProblem", alpha: complex):
        self.alpha = complex(alpha)
        model = problem.model
        self.profile = LiouvilleProfile(model.lam, model.a, model.b, alpha=self.alpha)
        g = problem.y_grid
        z = g.node_z
        self.exp_w = self.profile.exp_value(z)
        self.potential = 0.25 * model.prefactor * self.exp_w
        lam = model.lam
        if model.lam_is_integer:
            self.kernels = [eval_kernel(self.alpha, lam, j, z) for j in (0, 1, 2)]
        else:
            self.kernels = [eval_kernel(0.0, lam, 0, z)]
        s_pow = sigma_r(g.node_r) ** (-2.0 - 2.0 * problem.options.weight.d)
        self.defect_dirs = [s_pow * k for k in self.kernels[1:3]]
        self.lu = self._factorise(problem)

    def _factorise(self, problem: "TwoScaleProblem"):
        g = problem.y_grid
        n = g.n
        nt = g.n_theta
        interior = g.interior
        A = g.laplacian_matrix
        main = (A + sp.diags(self.potential)).tolil()
        # boundary closure: eta grows like c ln r; the slope c is an unknown
        # read off the outermost ring pair
        last = (g.n_r - 1) * nt + np.arange(nt)
        prev = (g.n_r - 2) * nt + np.arange(nt)
        dlog = math.log(g.r_rings[-1] / g.r_rings[-2])
        for row, col in zip(last, prev):
            main.rows[row] = [int(col), int(row)]
            main.data[row] = [-1.0, 1.0]
        main = main.tocsr()
        c_col = np.zeros((n, 1))
        c_col[last, 0] = -dlog
        extra_cols = [c_col]
        for d in self.defect_dirs:
            col = np.where(interior, d, 0.0)[:, None]
            extra_cols.append(col)
        cols = np.hstack(extra_cols)
        w = g.weights
        rows = [w * (self.exp_w * k) for k in self.kernels]
        C = np.stack(rows)
        k_extra = cols.shape[1]
        m_extra = C.shape[0]
        if k_extra != m_extra:
            raise AssertionError("bordered system is not square")
        bordered = sp.bmat(
            [[main, sp.csr_matrix(cols)], [sp.csr_matrix(C), None]], format="csc"
        )
        self.n_extra = k_extra
        return spla.splu(bordered)

    def solve(self, rhs_interior: np.ndarray):
        """Solve the bordered system; rhs given on all nodes (boundary and
        constraint rows are homogeneous).  Returns (eta, c, mu)."""
        g_rhs = np.concatenate([rhs_interior, np.zeros(self.n_extra)])
        sol = self.lu.solve(g_rhs)
        n = len(rhs_interior)
        eta = sol[:n]
        c = float(sol[n])
        mu = tuple(float(v) for v in sol[n + 1 :])
        return eta, c, mu


class TwoScaleProblem:
    """Workspace for the contraction construction at flux parameter >= 3/2."""

    def __init__(
        self,
        model: GaugeModel,
        options: SolverOptions | None = None,
        x_grid: DiskGrid | None = None,
        y_grid: DiskGrid | None = None,
        topo: TopologicalSolution | None = None,
        topo_radial_n: int = 3200,
    ):
        reject_excluded_case(model)
        if not model.is_centered():
            model = model.centered()
        if float(model.lam) < 1.5:
            raise ValueError("two-scale path requires flux parameter >= 3/2")
        self.model = model
        self.options = options or SolverOptions()
        r_out_x = 30.0 + 2.0 * model.max_vortex_radius()
        self.x_grid = x_grid or DiskGrid(r_out_x, 192, 64)
        self.y_grid = y_grid or DiskGrid(40.0, 224, 64)

        if topo is None:
            if model.all_vortices_at_origin():
                rg = RadialGrid(self.x_grid.r_out, topo_radial_n)
                topo = solve_topological(model.p_points, rg, tol=1e-10)
            else:
                topo = solve_topological(model.p_points, self.x_grid, tol=1e-10)
        self.topo = topo
        self.u_interp = topo.interpolator()
        if topo.radial or topo.grid is not self.x_grid:
            self.U_x = self.u_interp(self.x_grid.node_x, self.x_grid.node_y)
        else:
            self.U_x = topo.U.values
        self.fprime_U = f_prime(self.U_x)
        # U evaluated from the fast grid: y/eps is eps-dependent, cached per eps
        self._l1_lu = None
        self._alpha_cache: dict[complex, _AlphaContext] = {}
        self._eps_cache: dict[float, dict] = {}

    # -- linear solves -----------------------------------------------------

    def _l1(self):
        if self._l1_lu is None:
            g = self.x_grid
            interior = g.interior
            ii = np.where(interior)[0]
            A = g.laplacian_matrix
            L = A[ii][:, ii] + sp.diags(self.fprime_U[ii])
            self._l1_lu = (spla.splu(L.tocsc()), ii, L)
        return self._l1_lu

    def solve_l1(self, rhs: np.ndarray) -> np.ndarray:
        """L1 xi = rhs with decay (Dirichlet) closure on the outer ring."""
        lu, ii, L = self._l1()
        out = np.zeros(self.x_grid.n)
        out[ii] = lu.solve(rhs[ii])
        return out

    def apply_l1(self, xi: np.ndarray) -> np.ndarray:
        g = self.x_grid
        out = g.laplacian_apply(xi) + self.fprime_U * xi
        out[~g.interior] = 0.0
        return out

    def alpha_context(self, alpha: complex) -> _AlphaContext:
        key = complex(alpha)
        ctx = self._alpha_cache.get(key)
        if ctx is None:
            ctx = _AlphaContext(self, key)
            if len(self._alpha_cache) > 12:
                self._alpha_cache.clear()
            self._alpha_cache[key] = ctx
        return ctx

    def solve_l2(self, alpha: complex, rhs: np.ndarray, rel_tol: float = 1e-3):
        """Kernel-constrained solve of L2 eta = rhs on the fast grid.

        Returns (eta, c, mu).  A right-hand side with a component along the
        obstruction directions surfaces as multipliers mu; a defect that is
        not small relative to the rhs (projection skipped or misapplied)
        reports the inconsistency.  Discretisation-level defects sit many
        orders below the threshold."""
        ctx = self.alpha_context(alpha)
        g = self.y_grid
        rhs_masked = np.where(g.interior, rhs, 0.0)
        eta, c, mu = ctx.solve(rhs_masked)
        if mu:
            w = self.options.weight
            defect = sum(
                m * d for m, d in zip(mu, ctx.defect_dirs)
            )
            defect_norm = weighted_l2(g, sigma_r(g.node_r) ** (1 + w.d) * defect)
            rhs_norm = weighted_l2(g, sigma_r(g.node_r) ** (1 + w.d) * rhs_masked)
            if defect_norm > rel_tol * max(rhs_norm, 1e-30):
                raise SolverDivergenceError(
                    f"rhs inconsistent with the constrained range: defect {defect_norm:.3e} "
                    f"against rhs norm {rhs_norm:.3e}"
                )
        return eta, c, mu

    def apply_l2(self, alpha: complex, eta: np.ndarray) -> np.ndarray:
        ctx = self.alpha_context(alpha)
        g = self.y_grid
        out = g.laplacian_apply(eta) + ctx.potential * eta
        out[~g.interior] = 0.0
        return out

    # -- per-epsilon cached geometry ----------------------------------------

    def _eps_data(self, eps: float) -> dict:
        data = self._eps_cache.get(eps)
        if data is not None:
            return data
        m = self.model
        gy = self.y_grid
        r0eps = far_field_radius(m) * eps
        far = gy.node_r >= r0eps
        data = {
            "ux_over": self.u_interp(gy.node_x / eps, gy.node_y / eps),
            "far": far,
            "H_far": eval_H(m, eps, gy.node_x[far], gy.node_y[far]),
            "chi_over": cutoff(gy.node_r / eps),
        }
        if len(self._eps_cache) > 8:
            self._eps_cache.clear()
        self._eps_cache[eps] = data
        return data

    # -- residuals -----------------------------------------------------------

    def residual_g1(self, eps: float, alpha: complex, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """First-component residual on the unit-scale grid (five terms)."""
        m = self.model
        ctx = self.alpha_context(alpha)
        gx = self.x_grid
        va = self._approx(eps, ctx)
        eta_interp = self.y_grid.interpolator(eta)
        eta_at = eta_interp(eps * gx.node_x, eps * gx.node_y)
        U = self.U_x
        phi = eval_phi(ctx.profile, m, eps, gx.node_x, gx.node_y)
        lap_phi = phi_laplacian(ctx.profile, m, eps, gx.node_x, gx.node_y)
        v2 = va.v2_slow(gx.node_x, gx.node_y)
        v1 = U - LN2 + eps**2 * phi
        a, b = m.a, m.b

        delta = eps**2 * (phi + xi)
        _guard_exponents(delta, U + delta, eps**2 * np.abs(eta_at))
        expU = np.exp(U)
        term1 = -(expU * (np.expm1(delta) - delta) - expU**2 * (np.expm1(2 * delta) - 2 * delta)) / eps**2
        term2 = -lap_phi - self.fprime_U * phi
        e3 = v2 - 0.5 * b * eps**2 * xi + eps**2 * eta_at
        e4 = v1 + v2 + 0.5 * (2 - b) * eps**2 * xi + eps**2 * eta_at
        e5 = 2.0 * v2 - b * eps**2 * xi + 2.0 * eps**2 * eta_at
        _guard_exponents(e3, e4, e5)
        term3 = a * np.exp(e3)
        term4 = a * (b - 2) * np.exp(e4)
        term5 = -2.0 * a * eps**2 * np.exp(e5)
        return term1 + term2 + term3 + term4 + term5

    def residual_g2(self, eps: float, alpha: complex, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Second-component residual on the fast grid (four terms); outside
        the vortex-core radius the three near-cancelling terms are combined
        analytically, inside they are evaluated through the bounded
        log-combined exponents."""
        m = self.model
        ctx = self.alpha_context(alpha)
        gy = self.y_grid
        data = self._eps_data(eps)
        va = self._approx(eps, ctx)
        a, b = m.a, m.b
        coeff = 4.0 - a * b

        xi_interp = self.x_grid.interpolator(xi)
        xi_at = xi_interp(gy.node_x / eps, gy.node_y / eps)
        U_at = data["ux_over"]
        phi_at = -0.5 * a * b * ctx.exp_w * data["chi_over"]

        far = data["far"]
        out = np.zeros(gy.n)

        # far region: J-form
        slow = (U_at + eps**2 * phi_at + eps**2 * xi_at)[far]
        eta_f = eta[far]
        H = data["H_far"]
        eW = ctx.exp_w[far]
        r1 = H - 0.5 * b * slow + eps**2 * eta_f
        r2 = H + 0.5 * (2.0 - b) * slow + eps**2 * eta_f
        _guard_exponents(r1, r2)
        j1 = -0.5 / eps**2 * eW * (np.expm1(r1) - eps**2 * eta_f)
        j2 = -0.25 * b / eps**2 * eW * (np.expm1(r2) - eps**2 * eta_f)
        j3 = eW**2 * np.exp(2.0 * r1)
        out[far] = coeff * (j1 + j2 + j3)

        # vortex-core region: direct four-term form
        near = ~far
        if np.any(near):
            ynx, yny = gy.node_x[near], gy.node_y[near]
            v2n = va.v2_fast(ynx, yny)
            v1n = U_at[near] - LN2 + eps**2 * phi_at[near]
            eta_n = eta[near]
            xi_n = xi_at[near]
            t1 = v2n - 0.5 * b * eps**2 * xi_n + eps**2 * eta_n
            t2 = v1n + v2n + 0.5 * (2.0 - b) * eps**2 * xi_n + eps**2 * eta_n
            t3 = 2.0 * v2n - b * eps**2 * xi_n + 2.0 * eps**2 * eta_n
            _guard_exponents(t1, t2, t3)
            out[near] = (
                -0.5 * coeff / eps**2 * np.exp(t1)
                - 0.5 * b * coeff / eps**2 * np.exp(t2)
                + 0.25 * coeff * (2.0 + b) / eps**2 * ctx.exp_w[near] * (1.0 + eps**2 * eta_n)
                + coeff * np.exp(t3)
            )
        out[~gy.interior] = 0.0
        return out

    def _approx(self, eps: float, ctx: _AlphaContext) -> ApproxSolution:
        return assemble_V(self.u_interp, ctx.profile, self.model, eps)

    # -- norms ----------------------------------------------------------------

    def norm_xi(self, xi: np.ndarray) -> float:
        return h2_norm(self.x_grid, xi)

    def norm_eta(self, eta: np.ndarray) -> float:
        return norm_X(ScalarField(self.y_grid, eta), self.options.weight)

    def norm_y(self, values: np.ndarray) -> float:
        w = self.options.weight
        return weighted_l2(self.y_grid, sigma_r(self.y_grid.node_r) ** (1 + w.d) * values)

    def norm_l2x(self, values: np.ndarray) -> float:
        return weighted_l2(self.x_grid, values)

    # -- the contraction iteration ---------------------------------------------

    def picard(self, eps: float, alpha: complex, warm: IterationState | None = None) -> IterationState:
        opts = self.options
        lam = self.model.lam
        gx, gy = self.x_grid, self.y_grid
        xi = warm.xi.values.copy() if warm is not None else np.zeros(gx.n)
        eta = warm.eta.values.copy() if warm is not None else np.zeros(gy.n)
        diff_history: list[float] = []
        c1 = c2 = 0.0
        mu: tuple = ()
        g1n = g2n = math.inf
        grow = 0
        ball = opts.ball_radius
        if ball is None and warm is not None:
            ball = max(10.0, 4.0 * (self.norm_xi(xi) + self.norm_eta(eta)))
        for it in range(1, opts.max_picard + 1):
            g1 = self.residual_g1(eps, alpha, xi, eta)
            g2 = self.residual_g2(eps, alpha, xi, eta)
            proj = project_out_kernel(alpha, lam, ScalarField(gy, g2), opts.weight)
            c1, c2 = proj.c1, proj.c2
            xi_new = self.solve_l1(g1)
            eta_new, c_slope, mu = self.solve_l2(alpha, proj.field.values)
            diff = self.norm_xi(xi_new - xi) + self.norm_eta(eta_new - eta)
            diff_history.append(diff)
            xi, eta = xi_new, eta_new
            nxi, neta = self.norm_xi(xi), self.norm_eta(eta)
            if ball is None:
                ball = max(10.0, 4.0 * (nxi + neta))
            if nxi + neta > ball:
                raise BallViolationError(
                    f"iterate left the contraction ball: |xi| + |eta| = {nxi + neta:.3f} "
                    f"> {ball}"
                )
            if len(diff_history) >= 2 and diff > diff_history[-2]:
                grow += 1
                if grow >= 3:
                    raise SolverDivergenceError(
                        f"successive differences grew 3 times in a row (last {diff:.3e})"
                    )
            else:
                grow = 0
            if diff <= opts.picard_tol:
                g1n = self.norm_l2x(self.residual_g1(eps, alpha, xi, eta))
                g2_fin = self.residual_g2(eps, alpha, xi, eta)
                proj_fin = project_out_kernel(alpha, lam, ScalarField(gy, g2_fin), opts.weight)
                g2n = self.norm_y(proj_fin.field.values)
                return IterationState(
                    xi=ScalarField(gx, xi), eta=ScalarField(gy, eta), eps=eps, alpha=alpha,
                    g1_norm=g1n, g2_norm=g2n, iterations=it, c1=proj_fin.c1, c2=proj_fin.c2,
                    mu=mu, diff_history=diff_history, converged=True,
                )
        raise SolverDivergenceError(
            f"contraction did not reach tolerance in {opts.max_picard} iterations "
            f"(last difference {diff_history[-1]:.3e})"
        )

    # -- matching in alpha --------------------------------------------------------

    def obstruction_integral(self, eps: float, alpha: complex, state: IterationState | None = None) -> complex:
        """Pairing of the converged second-component residual with the kernel:
        int g2(xi*, eta*) (Z1 + i Z2) dx."""
        if not self.model.lam_is_integer:
            raise ValueError("matching integral only exists for integer flux parameter")
        if state is None:
            state = self.picard(eps, alpha)
        ctx = self.alpha_context(alpha)
        g2 = self.residual_g2(eps, alpha, state.xi.values, state.eta.values)
        w = self.y_grid.weights
        z1, z2 = ctx.kernels[1], ctx.kernels[2]
        return complex(w @ (g2 * z1), w @ (g2 * z2))

    def solve_alpha(self, eps: float, warm: IterationState | None = None):
        """Damped Newton on alpha -> obstruction integral, warm-starting the
        inner contraction at every evaluation.  Coincident-vortex
        configurations accept alpha = 0 directly (the integral vanishes by
        symmetry); non-integer flux skips the loop entirely."""
        opts = self.options
        if not self.model.lam_is_integer:
            state = self.picard(eps, 0.0, warm)
            return 0.0 + 0.0j, state, 0
        if self.model.all_vortices_at_origin():
            state = self.picard(eps, 0.0, warm)
            return 0.0 + 0.0j, state, 0

        alpha = 0.0 + 0.0j
        state = self.picard(eps, alpha, warm)
        F = self.obstruction_integral(eps, alpha, state)
        scale = max(abs(obstruction_slope(self.model)), 1.0)
        fd = 1e-4
        for step in range(1, opts.max_alpha_steps + 1):
            if abs(F) <= opts.alpha_tol * scale:
                return alpha, state, step - 1
            # finite-difference Jacobian in (Re, Im)
            sp_re = self.picard(eps, alpha + fd, state)
            F_re = self.obstruction_integral(eps, alpha + fd, sp_re)
            sp_im = self.picard(eps, alpha + 1j * fd, state)
            F_im = self.obstruction_integral(eps, alpha + 1j * fd, sp_im)
            J = np.array(
                [
                    [(F_re.real - F.real) / fd, (F_im.real - F.real) / fd],
                    [(F_re.imag - F.imag) / fd, (F_im.imag - F.imag) / fd],
                ]
            )
            if abs(np.linalg.det(J)) < 1e-12 * scale**2:
                raise SolverDivergenceError("matching Jacobian numerically singular")
            d = np.linalg.solve(J, -np.array([F.real, F.imag]))
            damping = 1.0
            for _ in range(9):
                trial = alpha + damping * complex(d[0], d[1])
                state_t = self.picard(eps, trial, state)
                F_t = self.obstruction_integral(eps, trial, state_t)
                if abs(F_t) < abs(F):
                    break
                damping *= 0.5
            else:
                raise SolverDivergenceError("matching Newton stagnated")
            alpha, state, F = trial, state_t, F_t
            fd = max(1e-5, 0.1 * abs(alpha) + 1e-5)
        if abs(F) <= opts.alpha_tol * scale:
            return alpha, state, opts.max_alpha_steps
        raise SolverDivergenceError(
            f"matching loop did not converge: |integral| = {abs(F):.3e}"
        )

    # -- assembly -------------------------------------------------------------

    def assemble(self, eps: float, alpha: complex, state: IterationState) -> "MixedSolution":
        ctx = self.alpha_context(alpha)
        va = self._approx(eps, ctx)
        xi_interp = self.x_grid.interpolator(state.xi.values)
        eta_interp = self.y_grid.interpolator(state.eta.values)
        m = self.model

        def u1(px, py):
            return va.v1(px, py) + eps**2 * xi_interp(px, py)

        def u2_fast(yx, yy):
            yx = np.asarray(yx, dtype=float)
            yy = np.asarray(yy, dtype=float)
            return (
                va.v2_fast(yx, yy)
                + 2.0 * math.log(eps)
                - 0.5 * m.b * eps**2 * xi_interp(yx / eps, yy / eps)
                + eps**2 * eta_interp(yx, yy)
            )

        def u2(px, py):
            return u2_fast(eps * np.asarray(px, dtype=float), eps * np.asarray(py, dtype=float))

        # far-field flux exponent from the fast-grid representation
        gy = self.y_grid
        lo, hi = 0.45 * gy.r_out, 0.85 * gy.r_out
        u2_vals = u2_fast(gy.node_x, gy.node_y)
        beta = extract_beta(u2_vals, gy.node_r, (lo, hi))

        phi_vals = eval_phi(ctx.profile, m, eps, self.x_grid.node_x, self.x_grid.node_y)
        sup_u1 = float(np.max(np.abs(eps**2 * (phi_vals + state.xi.values))))

        # discrete defects of both component equations at the fixed point
        g1 = self.residual_g1(eps, alpha, state.xi.values, state.eta.values)
        d1 = self.apply_l1(state.xi.values) - np.where(self.x_grid.interior, g1, 0.0)
        g2 = self.residual_g2(eps, alpha, state.xi.values, state.eta.values)
        proj = project_out_kernel(alpha, m.lam, ScalarField(gy, g2), self.options.weight)
        d2 = self.apply_l2(alpha, state.eta.values) - np.where(gy.interior, proj.field.values, 0.0)
        for mu_k, dk in zip(state.mu, ctx.defect_dirs):
            d2 -= mu_k * np.where(gy.interior, dk, 0.0)
        system_residual = float(
            max(eps**2 * np.max(np.abs(d1)), eps**2 * np.max(np.abs(d2))) + self.topo.residual_norm
        )

        report = SolveReport(
            epsilon=eps,
            alpha_solved=complex(alpha),
            beta=beta,
            picard_iterations=state.iterations,
            alpha_iterations=0,
            g1_norm=state.g1_norm,
            g2_norm=state.g2_norm,
            defect_c=(state.c1, state.c2),
            sup_u1_deviation=sup_u1,
            system_residual=system_residual,
            converged=state.converged,
            xi_norm=self.norm_xi(state.xi.values),
            eta_norm=self.norm_eta(state.eta.values),
        )
        return MixedSolution(
            problem=self, eps=eps, alpha=complex(alpha), state=state,
            u1=u1, u2=u2, u2_fast=u2_fast, report=report,
        )


@dataclass
class MixedSolution:
    problem: TwoScaleProblem
    eps: float
    alpha: complex
    state: IterationState
    u1: object
    u2: object
    u2_fast: object
    report: SolveReport
