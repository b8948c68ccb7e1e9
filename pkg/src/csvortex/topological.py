"""Topological solutions of the scalar vortex equation
lap u + e^u (1 - e^u) = 4 pi sum_j delta_{p_j},  u -> 0 at infinity,
and the nondegeneracy diagnostics of the linearisation around them.

The delta sources never reach the grid: the explicit background
u0 = sum_j ln(|x-p_j|^2 / (1+|x-p_j|^2)) absorbs them, leaving the smooth
correction problem lap v + f(u0 + v) = g with g = sum_j 4/(1+|x-p_j|^2)^2,
which is solved by a damped Newton iteration with sparse direct linear
algebra.  The outer Dirichlet data fixes U = u0 + v = 0 on the boundary
ring, where the true solution is exponentially small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from csvortex.grid import DiskGrid, RadialGrid, ScalarField, weighted_l2

_LOG_FLOOR = -700.0  # keeps exp() at exact zero without propagating -inf


class NewtonDivergenceError(RuntimeError):
    def __init__(self, message: str, last_residual: float):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


def f_eval(t):
    """Double-well nonlinearity e^t (1 - e^t)."""
    et = np.exp(t)
    return et * (1.0 - et)


def f_prime(t):
    """Derivative e^t - 2 e^(2t); equals -1 at t = 0."""
    et = np.exp(t)
    return et - 2.0 * et**2


def build_background(p_points):
    """Evaluators (u0, g) for the log background absorbing the vortex sources.

    u0 <= 0, u0 -> 0 at infinity, and lap u0 = 4 pi sum_j delta_{p_j} - g
    with the smooth g = sum_j 4/(1+|x-p_j|^2)^2, int g = 4 pi N1.
    """
    pts = [(float(p[0]), float(p[1])) for p in p_points]

    def u0(px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        acc = np.zeros(np.broadcast(px, py).shape)
        for x0, y0 in pts:
            d2 = (px - x0) ** 2 + (py - y0) ** 2
            with np.errstate(divide="ignore"):
                acc += np.log(np.maximum(d2, 1e-300)) - np.log1p(d2)
        return np.maximum(acc, _LOG_FLOOR)

    def g(px, py):
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        acc = np.zeros(np.broadcast(px, py).shape)
        for x0, y0 in pts:
            d2 = (px - x0) ** 2 + (py - y0) ** 2
            acc += 4.0 / (1.0 + d2) ** 2
        return acc

    return u0, g


@dataclass
class TopologicalSolution:
    """Background + correction + total field, with solve diagnostics."""

    grid: object
    p_points: tuple
    u0: ScalarField
    v: ScalarField
    U: ScalarField
    flux: float
    residual_norm: float
    residual_history: list[float] = field(default_factory=list)
    newton_iterations: int = 0
    radial: bool = False

    def interpolator(self):
        """Evaluator of U; zero beyond the truncation radius (U decays like e^-r)."""
        if isinstance(self.grid, RadialGrid):
            ev_r = self.grid.interpolator(self.U.values, fill_value=0.0)

            def ev(px, py):
                return ev_r(np.hypot(px, py))

            return ev
        return self.grid.interpolator(self.U.values, fill_value=0.0)


def _newton_solve(grid, u0_vals, g_vals, tol, max_iter=50, history=None):
    """Damped Newton on lap v + f(u0+v) = g with U = 0 on the boundary ring."""
    A, interior = grid._lap if hasattr(grid, "_lap") else grid.laplacian()
    if isinstance(grid, DiskGrid):
        A = grid.laplacian_matrix
        interior = grid.interior
    ii = np.where(interior)[0]
    bb = np.where(~interior)[0]
    A_ii = A[ii][:, ii].tocsc()
    A_ib = A[ii][:, bb]
    v = np.zeros(grid.n)
    v[bb] = -u0_vals[bb]  # U = 0 on the boundary ring
    bdry_term = A_ib @ v[bb]

    def residual(vi):
        return A_ii @ vi + bdry_term + f_eval(u0_vals[ii] + vi) - g_vals[ii]

    vi = v[ii]
    res = residual(vi)
    rnorm = weighted_l2(grid, _embed(grid.n, ii, res))
    if history is not None:
        history.append(rnorm)
    # roundoff floor of the residual norm: the stiffest rows scale like the
    # largest diagonal entry of the operator
    row_scale = np.max(np.abs(A_ii.diagonal()))
    floor = 8.0 * np.finfo(float).eps * row_scale
    for it in range(max_iter):
        if rnorm <= tol:
            v[ii] = vi
            return v, rnorm, it
        J = A_ii + sp.diags(f_prime(u0_vals[ii] + vi))
        lu = spla.splu(J.tocsc())
        delta = lu.solve(-res)
        delta += lu.solve(-(J @ delta + res))  # one step of iterative refinement
        lin_res = np.linalg.norm(J @ delta + res) / max(
            spla.norm(J, np.inf) * np.linalg.norm(delta) + np.linalg.norm(res), 1e-300
        )
        if lin_res > 1e-10:
            raise NewtonDivergenceError(
                f"linear solve too inaccurate (backward error {lin_res:.2e})", rnorm
            )
        step = 1.0
        for _ in range(30):
            trial = vi + step * delta
            res_trial = residual(trial)
            rnorm_trial = weighted_l2(grid, _embed(grid.n, ii, res_trial))
            if rnorm_trial <= (1.0 - 1e-4 * step) * rnorm:
                break
            step *= 0.5
        else:
            if rnorm <= max(tol, floor):  # stagnation at the roundoff floor
                v[ii] = vi
                return v, rnorm, it
            raise NewtonDivergenceError("line search failed to reduce the residual", rnorm)
        vi, res, rnorm = trial, res_trial, rnorm_trial
        if history is not None:
            history.append(rnorm)
    if rnorm <= tol:
        v[ii] = vi
        return v, rnorm, max_iter
    raise NewtonDivergenceError("Newton iteration did not converge", rnorm)


def _embed(n, idx, vals):
    out = np.zeros(n)
    out[idx] = vals
    return out


def solve_topological(p_points, grid, tol: float = 1e-10) -> TopologicalSolution:
    """Topological solution on a DiskGrid (or RadialGrid when all vortices
    coincide at the origin).  N1 = 0 returns the zero solution exactly."""
    u0_fn, g_fn = build_background(p_points)
    if isinstance(grid, RadialGrid):
        if any(math.hypot(*p) > 0 for p in p_points):
            raise ValueError("radial solve requires all vortices at the origin")
        px, py = grid.r, np.zeros_like(grid.r)
        radial = True
    else:
        px, py = grid.node_x, grid.node_y
        radial = False
        if p_points:
            sep = min(
                (math.hypot(p[0] - q[0], p[1] - q[1])
                 for i, p in enumerate(p_points) for q in list(p_points)[i + 1:]),
                default=math.inf,
            )
            h_core = grid.r_rings[0]
            if 0 < sep < 4 * h_core:
                raise ValueError("grid too coarse to resolve the minimum vortex separation")
    u0_vals = u0_fn(px, py)
    g_vals = g_fn(px, py)
    history: list[float] = []
    if len(p_points) == 0:
        v = np.zeros(grid.n)
        U = np.zeros(grid.n)
        return TopologicalSolution(
            grid, tuple(p_points), ScalarField(grid, u0_vals), ScalarField(grid, v),
            ScalarField(grid, U), flux=0.0, residual_norm=0.0, residual_history=[0.0],
            newton_iterations=0, radial=radial,
        )
    v, rnorm, iters = _newton_solve(grid, u0_vals, g_vals, tol, history=history)
    U = u0_vals + v
    flux = grid.integrate(f_eval(U)) / (4.0 * math.pi)
    return TopologicalSolution(
        grid, tuple(p_points), ScalarField(grid, u0_vals), ScalarField(grid, v),
        ScalarField(grid, np.maximum(U, _LOG_FLOOR)), flux=flux, residual_norm=rnorm,
        residual_history=history, newton_iterations=iters, radial=radial,
    )


def decay_fit(solution: TopologicalSolution, annulus=None, floor: float = 1e-12) -> float:
    """Least-squares slope of ln|U| against |x| over a far annulus; the
    topological solution decays like e^-|x|, so the slope sits near -1."""
    grid = solution.grid
    if isinstance(grid, RadialGrid):
        r = grid.r
        if annulus is None:
            # keep away from the outer ring (Dirichlet) and from the far
            # tail, where |U| approaches the roundoff floor of the solve
            annulus = (grid.r_out - 16.0, grid.r_out - 8.0)
    else:
        r = grid.node_r
        if annulus is None:
            # the stretched 2D grid loses relative accuracy in the
            # exponential tail like (r h)^2; fit in the mid field
            annulus = (0.4 * grid.r_out, 0.6 * grid.r_out)
    lo, hi = annulus
    mask = (r >= lo) & (r <= hi) & (np.abs(solution.U.values) > floor)
    if mask.sum() < 8:
        raise ValueError("annulus empty: no usable nodes for the decay fit")
    rr = r[mask]
    ln_u = np.log(np.abs(solution.U.values[mask]))
    coeffs = np.polyfit(rr, ln_u, 1)
    return float(coeffs[0])


# ---------------------------------------------------------------------------
# nondegeneracy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NondegeneracyReport:
    value: float
    value_refined: float
    resolutions: tuple
    ratio: float

    @property
    def stable(self) -> bool:
        return 0.8 <= self.ratio <= 1.25


def smallest_singular_value(grid, potential_values: np.ndarray) -> float:
    """Smallest singular value of lap + diag(potential) restricted to the
    interior (Dirichlet closure), in the cell-volume-weighted inner product.

    The flux-form Laplacian is self-adjoint there, so this is the magnitude
    of the eigenvalue closest to zero; computed by shift-invert Lanczos.
    """
    if isinstance(grid, DiskGrid):
        A = grid.laplacian_matrix
        interior = grid.interior
        vols = grid.cell_volumes
    else:
        A, interior = grid.laplacian()
        faces = grid._fv[0]
        vols = np.zeros(grid.n)
        i0 = 1 if grid.has_origin else 0
        vols[i0:] = (faces[1:] ** 2 - faces[:-1] ** 2) / 2.0
        if grid.has_origin:
            vols[0] = faces[0] ** 2 / 2.0
    ii = np.where(interior)[0]
    d = np.sqrt(vols[ii])
    A_ii = A[ii][:, ii]
    sym = sp.diags(d) @ A_ii @ sp.diags(1.0 / d) + sp.diags(potential_values[ii])
    sym = (sym + sym.T) / 2.0
    try:
        vals = spla.eigsh(sym.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    except RuntimeError as exc:
        raise RuntimeError(f"eigenvalue solver failed: {exc}") from exc
    return float(abs(vals[0]))


def nondegeneracy_estimate(solution: TopologicalSolution, tol: float = 1e-10) -> NondegeneracyReport:
    """Smallest singular value of lap + f'(U), re-measured once on a finer
    grid to check stability of the estimate."""
    grid = solution.grid
    value = smallest_singular_value(grid, f_prime(solution.U.values))

    if isinstance(grid, RadialGrid):
        fine = RadialGrid(grid.r_out, int(grid.n_r * 1.5), grid.r_in)
        res_fine = (fine.n_r,)
        res_base = (grid.n_r,)
    else:
        fine = DiskGrid(grid.r_out, int(grid.n_r * 1.5), 2 * ((int(grid.n_theta * 1.5) + 1) // 2), grid.r_in)
        res_fine = (fine.n_r, fine.n_theta)
        res_base = (grid.n_r, grid.n_theta)
    sol_fine = solve_topological(solution.p_points, fine, tol=tol)
    value_fine = smallest_singular_value(fine, f_prime(sol_fine.U.values))
    ratio = value / value_fine if value_fine > 0 else math.inf
    return NondegeneracyReport(
        value=value, value_refined=value_fine, resolutions=(res_base, res_fine), ratio=ratio
    )
