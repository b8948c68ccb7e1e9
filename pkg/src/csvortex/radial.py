"""Radial machinery: the vortex-free mixed construction at unit flux
parameter (first-order scalings, 1D grids), the shooting integrator for the
coupled radial system, and the trajectory classifier used as the
cross-module oracle.

The radial construction looks for
    u1(r) = -ln 2 + eps xi(r),
    u2(r) = W0(eps r) + 2 ln eps - (b/2) eps xi(r) + eps eta(eps r),
with W0 the unit-flux profile; the linear operators are lap - 1 for xi and
lap + (1/4)(4-ab)(2+b) e^W0 for eta, the latter solved with the kernel
constraint of the radial zero mode and the logarithmic boundary slope as a
bordered unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from csvortex.grid import RadialGrid, ScalarField, WeightParams, h2_norm, norm_X, weighted_l2
from csvortex.liouville import LiouvilleProfile, eval_kernel
from csvortex.model import GaugeModel, solution_type_limits
from csvortex.solver import (
    EXPONENT_GUARD,
    BallViolationError,
    IterationState,
    SolveReport,
    SolverDivergenceError,
    SolverOptions,
    extract_beta,
)

LN2 = math.log(2.0)


class RadialMixedSolver:
    """Vortex-free construction (N1 = N2 = 0, unit flux parameter)."""

    def __init__(
        self,
        model: GaugeModel,
        options: SolverOptions | None = None,
        n_x: int = 2400,
        n_y: int = 3200,
        r_out_x: float = 30.0,
        r_out_y: float = 70.0,
    ):
        if model.N1 != 0 or model.N2 != 0:
            raise ValueError("radial unit-flux path requires an empty vortex configuration")
        self.model = model
        self.options = options or SolverOptions()
        self.profile = LiouvilleProfile(model.lam, model.a, model.b)
        self.x_grid = RadialGrid(r_out_x, n_x)
        self.y_grid = RadialGrid(r_out_y, n_y)
        gy = self.y_grid
        self.exp_w = self.profile.exp_value(gy.r.astype(complex))
        self.potential = 0.25 * model.prefactor * self.exp_w
        self.kernel0 = eval_kernel(0.0, model.lam, 0, gy.r.astype(complex))
        self._l1_lu = None
        self._l2_lu = None

    # -- linear solves -------------------------------------------------------

    def _l1(self):
        if self._l1_lu is None:
            g = self.x_grid
            A, interior = g.laplacian()
            ii = np.where(interior)[0]
            L = A[ii][:, ii] - sp.identity(len(ii))
            self._l1_lu = (spla.splu(L.tocsc()), ii)
        return self._l1_lu

    def solve_l1(self, rhs: np.ndarray) -> np.ndarray:
        lu, ii = self._l1()
        out = np.zeros(self.x_grid.n)
        out[ii] = lu.solve(rhs[ii])
        return out

    def _l2(self):
        if self._l2_lu is None:
            g = self.y_grid
            A, interior = g.laplacian()
            main = (A + sp.diags(self.potential)).tolil()
            n = g.n
            dlog = math.log(g.r[-1] / g.r[-2])
            main.rows[n - 1] = [n - 2, n - 1]
            main.data[n - 1] = [-1.0, 1.0]
            main = main.tocsr()
            c_col = np.zeros((n, 1))
            c_col[n - 1, 0] = -dlog
            constraint = (g.weights * self.exp_w * self.kernel0)[None, :]
            bordered = sp.bmat(
                [[main, sp.csr_matrix(c_col)], [sp.csr_matrix(constraint), None]], format="csc"
            )
            self._l2_lu = spla.splu(bordered)
        return self._l2_lu

    def solve_l2(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        g = self.y_grid
        lu = self._l2()
        rhs_full = np.concatenate([np.where(g.interior, rhs, 0.0), [0.0]])
        sol = lu.solve(rhs_full)
        return sol[: g.n], float(sol[g.n])

    def apply_l2(self, eta: np.ndarray) -> np.ndarray:
        g = self.y_grid
        out = g.laplacian_apply(eta) + self.potential * eta
        out[~g.interior] = 0.0
        return out

    # -- residuals -------------------------------------------------------------

    def residual_h1(self, eps: float, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        m = self.model
        a, b = m.a, m.b
        gx = self.x_grid
        eta_at = np.interp(np.log1p(eps * gx.r), self.y_grid.t, eta)
        expw_at = self.profile.exp_value((eps * gx.r).astype(complex))
        t = eps * xi
        _guard(t, eps * eta_at)
        term1 = ((np.expm1(2 * t) - 2 * t) - (np.expm1(t) - t)) / eps
        e2 = -0.5 * b * eps * xi + eps * eta_at
        e3 = 0.5 * (2 - b) * eps * xi + eps * eta_at
        e4 = -b * eps * xi + 2 * eps * eta_at
        _guard(e2, e3, e4)
        term2 = a * eps * expw_at * np.exp(e2)
        term3 = 0.5 * a * (b - 2) * eps * expw_at * np.exp(e3)
        term4 = -2.0 * a * eps**3 * expw_at**2 * np.exp(e4)
        return term1 + term2 + term3 + term4

    def residual_h2(self, eps: float, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        m = self.model
        a, b = m.a, m.b
        gy = self.y_grid
        xi_at = np.interp(np.log1p(gy.r / eps), self.x_grid.t, xi, right=0.0)
        coeff = a * b - 4.0
        s1 = -0.5 * b * eps * xi_at + eps * eta
        s2 = 0.5 * (2 - b) * eps * xi_at + eps * eta
        s3 = -b * eps * xi_at + 2 * eps * eta
        _guard(s1, s2, s3)
        out = (
            0.5 * coeff / eps * self.exp_w * (np.expm1(s1) - eps * eta)
            + 0.25 * b * coeff / eps * self.exp_w * (np.expm1(s2) - eps * eta)
            - coeff * eps * self.exp_w**2 * np.exp(s3)
        )
        out[~gy.interior] = 0.0
        return out

    # -- norms -------------------------------------------------------------------

    def norm_xi(self, xi: np.ndarray) -> float:
        return h2_norm(self.x_grid, xi)

    def norm_eta(self, eta: np.ndarray) -> float:
        return norm_X(ScalarField(self.y_grid, eta), self.options.weight)

    # -- iteration ------------------------------------------------------------------

    def picard(self, eps: float, warm: IterationState | None = None) -> IterationState:
        opts = self.options
        gx, gy = self.x_grid, self.y_grid
        xi = warm.xi.values.copy() if warm is not None else np.zeros(gx.n)
        eta = warm.eta.values.copy() if warm is not None else np.zeros(gy.n)
        history: list[float] = []
        grow = 0
        ball = opts.ball_radius if opts.ball_radius is not None else None
        for it in range(1, opts.max_picard + 1):
            h1 = self.residual_h1(eps, xi, eta)
            h2 = self.residual_h2(eps, xi, eta)
            xi_new = self.solve_l1(h1)
            eta_new, _ = self.solve_l2(h2)
            diff = self.norm_xi(xi_new - xi) + self.norm_eta(eta_new - eta)
            history.append(diff)
            xi, eta = xi_new, eta_new
            nsum = self.norm_xi(xi) + self.norm_eta(eta)
            if ball is None:
                ball = max(10.0, 4.0 * nsum)
            if nsum > ball:
                raise BallViolationError(f"iterate left the contraction ball ({nsum:.2f} > {ball})")
            if len(history) >= 2 and diff > history[-2]:
                grow += 1
                if grow >= 3:
                    raise SolverDivergenceError("successive differences grew 3 times in a row")
            else:
                grow = 0
            if diff <= opts.picard_tol:
                g1n = weighted_l2(gx, self.residual_h1(eps, xi, eta))
                w = opts.weight
                from csvortex.grid import sigma_r

                g2n = weighted_l2(gy, sigma_r(gy.r) ** (1 + w.d) * self.residual_h2(eps, xi, eta))
                return IterationState(
                    xi=ScalarField(gx, xi), eta=ScalarField(gy, eta), eps=eps, alpha=0.0,
                    g1_norm=g1n, g2_norm=g2n, iterations=it, c1=0.0, c2=0.0, mu=(),
                    diff_history=history, converged=True,
                )
        raise SolverDivergenceError(
            f"radial contraction did not converge in {opts.max_picard} iterations"
        )

    # -- assembly ----------------------------------------------------------------------

    def assemble(self, eps: float, state: IterationState) -> "RadialMixedSolution":
        m = self.model
        xi_sp = CubicSpline(self.x_grid.r, state.xi.values)
        eta_sp = CubicSpline(self.y_grid.r, state.eta.values)
        r_out_x, r_out_y = self.x_grid.r_out, self.y_grid.r_out
        prof = self.profile

        def xi_f(r):
            r = np.asarray(r, dtype=float)
            return np.where(r <= r_out_x, xi_sp(np.clip(r, 0.0, r_out_x)), 0.0)

        def eta_f(s):
            s = np.asarray(s, dtype=float)
            return np.where(s <= r_out_y, eta_sp(np.clip(s, 0.0, r_out_y)), 0.0)

        def u1(r):
            return -LN2 + eps * xi_f(r)

        def u2(r):
            # unit flux parameter: the profile equals its regular part
            r = np.asarray(r, dtype=float)
            w0 = prof.regular_value((eps * r).astype(complex)).real
            return w0 + 2 * math.log(eps) - 0.5 * m.b * eps * xi_f(r) + eps * eta_f(eps * r)

        gy = self.y_grid
        lo = min(0.5 / eps, 0.6 * r_out_y)
        hi = min(0.8 / eps, 0.9 * r_out_y)
        u2_y = (
            prof.regular_value(gy.r.astype(complex)).real
            + 2 * math.log(eps)
            - 0.5 * m.b * eps * xi_f(gy.r / eps)
            + eps * state.eta.values
        )
        beta = extract_beta(u2_y, gy.r, (lo, hi))
        sup_u1 = float(eps * np.max(np.abs(state.xi.values)))

        d1 = self.x_grid.laplacian_apply(state.xi.values) - state.xi.values - np.where(
            self.x_grid.interior, self.residual_h1(eps, state.xi.values, state.eta.values), 0.0
        )
        d1[~self.x_grid.interior] = 0.0
        d2 = self.apply_l2(state.eta.values) - np.where(
            self.y_grid.interior, self.residual_h2(eps, state.xi.values, state.eta.values), 0.0
        )
        system_residual = float(max(eps * np.max(np.abs(d1)), eps * np.max(np.abs(d2))))

        report = SolveReport(
            epsilon=eps,
            alpha_solved=0.0,
            beta=beta,
            picard_iterations=state.iterations,
            alpha_iterations=0,
            g1_norm=state.g1_norm,
            g2_norm=state.g2_norm,
            defect_c=(0.0, 0.0),
            sup_u1_deviation=sup_u1,
            system_residual=system_residual,
            converged=state.converged,
            xi_norm=self.norm_xi(state.xi.values),
            eta_norm=self.norm_eta(state.eta.values),
        )
        return RadialMixedSolution(
            solver=self, eps=eps, state=state, u1=u1, u2=u2, report=report,
            xi_f=xi_f, eta_f=eta_f,
        )


def _guard(*arrays):
    for arr in arrays:
        m = np.max(arr)
        if m > EXPONENT_GUARD:
            raise SolverDivergenceError(
                f"exponential argument reached {m:.2f} > {EXPONENT_GUARD}"
            )


@dataclass
class RadialMixedSolution:
    solver: RadialMixedSolver
    eps: float
    state: IterationState
    u1: object
    u2: object
    report: SolveReport
    xi_f: object
    eta_f: object

    def ode_residual(self, r_lo: float = 0.5, r_hi: float | None = None, n: int = 2000) -> float:
        """Max residual of the coupled radial system along the assembled pair.

        The profile Laplacian enters in closed form (lap W0 = -(1/4)(4-ab)(2+b) e^W0);
        the corrections are differentiated through their splines, so this is an
        independent restatement of the equations, not the solver's own defect."""
        m = self.solver.model
        eps = self.eps
        if r_hi is None:
            r_hi = min(0.8 * self.solver.x_grid.r_out, 0.8 * self.solver.y_grid.r_out / eps)
        r = np.linspace(r_lo, r_hi, n)
        prof = self.solver.profile
        xi_sp = CubicSpline(self.solver.x_grid.r, self.state.xi.values)
        eta_sp = CubicSpline(self.solver.y_grid.r, self.state.eta.values)

        def lap_spline(spline, rr):
            return spline(rr, 2) + spline(rr, 1) / rr

        lap_u1 = eps * lap_spline(xi_sp, r)
        expw = prof.exp_value((eps * r).astype(complex))
        lap_w0 = -0.25 * m.prefactor * expw
        lap_u2 = eps**2 * lap_w0 - 0.5 * m.b * eps * lap_spline(xi_sp, r) + eps**3 * lap_spline(eta_sp, eps * r)
        u1v = self.u1(r)
        u2v = self.u2(r)
        rhs1, rhs2 = _system_rhs(m, u1v, u2v)
        return float(max(np.max(np.abs(lap_u1 - rhs1)), np.max(np.abs(lap_u2 - rhs2))))


def radial_mixed_solve(model: GaugeModel, eps: float, options: SolverOptions | None = None,
                       warm: IterationState | None = None, **grid_kw) -> RadialMixedSolution:
    solver = RadialMixedSolver(model, options, **grid_kw)
    state = solver.picard(eps, warm)
    return solver.assemble(eps, state)


# ---------------------------------------------------------------------------
# shooting oracle
# ---------------------------------------------------------------------------


class TrajectoryClass(Enum):
    TOPOLOGICAL = "Topological"
    NON_TOPOLOGICAL = "NonTopological"
    MIXED_I = "MixedI"  # u1 -> -ln 2, u2 -> -inf
    MIXED_II = "MixedII"  # u1 -> -inf, u2 -> -ln 2
    UNDETERMINED = "Undetermined"


@dataclass
class ShootingState:
    r: np.ndarray
    u1: np.ndarray
    du1: np.ndarray
    u2: np.ndarray
    du2: np.ndarray
    s1: float
    s2: float
    classification: TrajectoryClass
    horizon: float
    blow_up_radius: float | None = None
    dense: object | None = None  # the integrator's dense output (r -> state)

    def at(self, r):
        """Evaluate (u1, du1, u2, du2) anywhere on the integrated arc."""
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        return self.dense(np.asarray(r, dtype=float))


def _system_rhs(model: GaugeModel, u1, u2):
    """Right-hand sides of lap u_j = ... for the coupled radial system."""
    a, b = model.a, model.b
    e1, e2 = np.exp(u1), np.exp(u2)
    rhs1 = 4.0 * e1**2 - 2.0 * e1 + a * e2 - 2.0 * a * e2**2 + a * (b - 2.0) * e1 * e2
    rhs2 = 4.0 * e2**2 - 2.0 * e2 + b * e1 - 2.0 * b * e1**2 + b * (a - 2.0) * e1 * e2
    return rhs1, rhs2


def _classify(model: GaugeModel, r_h: float, u1, du1, u2, du2) -> TrajectoryClass:
    limits = solution_type_limits(model)
    m1, m2 = r_h * du1, r_h * du2  # logarithmic slopes
    flat1, flat2 = abs(m1) < 0.2, abs(m2) < 0.2
    near_top1 = flat1 and abs(u1 - limits.topological_limit_1) < 0.15
    near_top2 = flat2 and abs(u2 - limits.topological_limit_2) < 0.15
    if near_top1 and near_top2:
        return TrajectoryClass.TOPOLOGICAL
    down1 = m1 <= -1.0 or u1 < -8.0
    down2 = m2 <= -1.0 or u2 < -8.0
    near_mixed1 = flat1 and abs(u1 + LN2) < 0.15
    near_mixed2 = flat2 and abs(u2 + LN2) < 0.15
    if near_mixed1 and down2:
        return TrajectoryClass.MIXED_I
    if near_mixed2 and down1:
        return TrajectoryClass.MIXED_II
    if down1 and down2:
        return TrajectoryClass.NON_TOPOLOGICAL
    return TrajectoryClass.UNDETERMINED


def radial_shoot(
    model: GaugeModel,
    s1: float,
    s2: float,
    horizon: float = 20.0,
    r_start: float = 1e-4,
    initial: tuple | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> ShootingState:
    """Integrate the coupled radial system from the local expansion
    u_j(r) = 2 N_j ln r + s_j + o(r) (all vortices at the origin) and
    classify the far-field behaviour at the horizon.

    ``initial`` overrides the series start with explicit data
    (r0, u1, du1, u2, du2), used by the cross-module consistency oracle.
    """
    if not model.all_vortices_at_origin():
        raise ValueError("shooting requires all vortices at the origin")
    n1, n2 = model.N1, model.N2

    if initial is not None:
        r0, u1_0, du1_0, u2_0, du2_0 = initial
    else:
        r0 = r_start
        u1_0 = 2 * n1 * math.log(r0) + s1
        u2_0 = 2 * n2 * math.log(r0) + s2
        du1_0 = 2 * n1 / r0
        du2_0 = 2 * n2 / r0
        if n1 == 0 and n2 == 0:
            rhs1, rhs2 = _system_rhs(model, np.asarray(s1), np.asarray(s2))
            u1_0 += float(rhs1) * r0**2 / 4.0
            u2_0 += float(rhs2) * r0**2 / 4.0
            du1_0 = float(rhs1) * r0 / 2.0
            du2_0 = float(rhs2) * r0 / 2.0

    def rhs(r, y):
        u1, p1, u2, p2 = y
        r1, r2 = _system_rhs(model, np.asarray(u1), np.asarray(u2))
        return [p1, float(r1) - p1 / r, p2, float(r2) - p2 / r]

    def blow_up(r, y):
        return 60.0 - max(abs(y[0]), abs(y[2]))

    blow_up.terminal = True
    blow_up.direction = -1

    sol = solve_ivp(
        rhs,
        (r0, horizon),
        [u1_0, du1_0, u2_0, du2_0],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=blow_up,
    )
    r_end = float(sol.t[-1])
    blew_up = sol.status == 1
    u1, du1, u2, du2 = sol.y[:, -1]
    if blew_up:
        cls = TrajectoryClass.UNDETERMINED
    else:
        cls = _classify(model, r_end, u1, du1, u2, du2)
    return ShootingState(
        r=sol.t, u1=sol.y[0], du1=sol.y[1], u2=sol.y[2], du2=sol.y[3],
        s1=s1, s2=s2, classification=cls, horizon=r_end,
        blow_up_radius=r_end if blew_up else None, dense=sol.sol,
    )


def classify_assembled(model: GaugeModel, u1_f, u2_f, r_h: float, dr: float = 1e-3) -> TrajectoryClass:
    """Apply the trajectory classifier to an assembled solution at radius r_h."""
    du1 = (u1_f(r_h + dr) - u1_f(r_h - dr)) / (2 * dr)
    du2 = (u2_f(r_h + dr) - u2_f(r_h - dr)) / (2 * dr)
    return _classify(model, r_h, float(u1_f(r_h)), float(du1), float(u2_f(r_h)), float(du2))
