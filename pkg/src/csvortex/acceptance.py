"""The acceptance battery: one check per headline criterion, each pinned to
its stated tolerance.  ``run_all`` powers both the ``verify`` subcommand and
the acceptance test module; every check returns a CheckResult with a
one-line detail string."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from csvortex.grid import DiskGrid, RadialGrid, ScalarField, WeightParams, norm_Y, sigma_r
from csvortex.liouville import (
    LiouvilleProfile,
    eval_kernel,
    gram_matrix,
    kernel_pairing,
    kernel_residual_norm,
    liouville_residual,
    mass_integral,
    project_out_kernel,
)
from csvortex.model import ADMISSIBLE_PAIRS, GaugeModel, build_model
from csvortex.radial import RadialMixedSolver, TrajectoryClass, classify_assembled, radial_shoot
from csvortex.solver import SolverOptions, TwoScaleProblem, obstruction_slope
from csvortex.topological import decay_fit, solve_topological

W = WeightParams(0.1)

#: order 2 +- 20 percent under grid halving, expressed as a ratio window
RATE_WINDOW = (2.0**1.6, 2.0**2.4)


@dataclass
class CheckResult:
    index: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.index}: {self.name} ({self.seconds:.1f}s) - {self.detail}"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        idx, name, passed, detail = fn(*a, **kw)
        return CheckResult(idx, name, passed, detail, time.perf_counter() - t0)

    return wrapper


# -- 1: profile mass ------------------------------------------------------------


@_timed
def criterion_mass():
    grid = DiskGrid(40.0, 224, 64)
    worst = 0.0
    count = 0
    for a, b in ADMISSIBLE_PAIRS:
        for lam in (Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3)):
            for alpha in (0.0, 0.2):
                if lam.denominator != 1 and alpha != 0.0:
                    continue
                prof = LiouvilleProfile(lam, a, b, alpha=alpha)
                rel = abs(mass_integral(prof, grid) / (8.0 * math.pi * float(lam)) - 1.0)
                worst = max(worst, rel)
                count += 1
    return 1, "profile mass = 8 pi lam", worst < 1e-3, f"worst relative error {worst:.2e} over {count} cases"


# -- 2: residual and kernel convergence order ---------------------------------------


@_timed
def criterion_rates():
    grids = [(112, 32), (224, 64)]
    ratios = {}
    # profile residual, smooth case on the disk
    vals = [
        np.abs(liouville_residual(LiouvilleProfile(Fraction(1), 1, 1), DiskGrid(40.0, *g)).values).max()
        for g in grids
    ]
    ratios["residual lam=1"] = vals[0] / vals[1]
    vals = [
        np.abs(
            liouville_residual(
                LiouvilleProfile(Fraction(2), 1, 2, alpha=0.2), DiskGrid(40.0, *g, r_in=0.3)
            ).values
        ).max()
        for g in grids
    ]
    ratios["residual lam=2 annulus"] = vals[0] / vals[1]
    for lam, alpha, j in ((Fraction(1), 0.0, 0), (Fraction(2), 0.1, 1), (Fraction(3, 2), 0.0, 0)):
        vals = [kernel_residual_norm(alpha, lam, DiskGrid(40.0, *g), W, j) for g in grids]
        ratios[f"kernel lam={lam} j={j}"] = vals[0] / vals[1]
    lo, hi = RATE_WINDOW
    ok = all(lo <= r <= hi for r in ratios.values())
    detail = ", ".join(f"{k}: {v:.2f}" for k, v in ratios.items())
    return 2, "second-order residual and kernel convergence", ok, detail


# -- 3: projection algebra -------------------------------------------------------------


@_timed
def criterion_projection():
    grid = DiskGrid(40.0, 224, 64)
    checks = []
    for lam in (1, 2):
        G = gram_matrix(0.0, lam, grid, W)
        checks.append(abs(G[0, 1]) < 1e-10 and abs(G[1, 0]) < 1e-10)
    rng = np.random.default_rng(1234)
    worst_bound = 0.0
    worst_orth = 0.0
    worst_idem = 0.0
    for _ in range(100):
        decay = np.exp(-grid.node_r / (1.0 + 3.0 * rng.random()))
        h = ScalarField(grid, rng.normal(size=grid.n) * decay)
        out = project_out_kernel(0.05, 2, h, W)
        worst_orth = max(worst_orth, np.max(np.abs(kernel_pairing(0.05, 2, out.field))))
        again = project_out_kernel(0.05, 2, out.field, W)
        worst_idem = max(
            worst_idem, float(np.max(np.abs(again.field.values - out.field.values)))
        )
        nh = norm_Y(h, W)
        if nh > 0:
            worst_bound = max(worst_bound, norm_Y(out.field, W) / nh)
    ok = all(checks) and worst_orth < 1e-8 and worst_idem < 1e-10 and worst_bound <= 10.0
    detail = (
        f"offdiag ok, orthogonality {worst_orth:.1e}, idempotency {worst_idem:.1e}, "
        f"bound {worst_bound:.2f}"
    )
    return 3, "projection algebra", ok, detail


# -- 4: topological solver ----------------------------------------------------------------


@_timed
def criterion_topological():
    problems = []
    # coincident families, radial fast path
    for n1 in (1, 2, 3):
        sol = solve_topological([(0.0, 0.0)] * n1, RadialGrid(30.0, 2400), tol=1e-10)
        problems.append((f"radial N1={n1}", sol, n1))
    # separated families on the disk
    disk = DiskGrid(30.0, 192, 64)
    sep = {
        1: [(0.4, 0.0)],
        2: [(0.5, 0.0), (-0.5, 0.0)],
        3: [(0.5, 0.0), (-0.25, 0.43), (-0.25, -0.43)],
    }
    for n1, pts in sep.items():
        sol = solve_topological(pts, disk, tol=1e-10)
        problems.append((f"2d N1={n1}", sol, n1))
    ok = True
    details = []
    for name, sol, n1 in problems:
        flux_ok = abs(sol.flux - n1) < 1e-3
        sign_ok = sol.U.values.max() <= 1e-8
        slope = decay_fit(sol)
        decay_ok = -1.15 <= slope <= -0.85
        ok = ok and flux_ok and sign_ok and decay_ok
        details.append(f"{name}: flux err {abs(sol.flux - n1):.1e}, slope {slope:.3f}")
    # radial and 2d agreement for coincident vortices
    solr = solve_topological([(0.0, 0.0)] * 2, RadialGrid(30.0, 6400), tol=1e-10)
    ev_v = solr.grid.interpolator(solr.v.values, fill_value=0.0)
    g2d = DiskGrid(30.0, 1024, 16)
    sol2 = solve_topological([(0.0, 0.0)] * 2, g2d, tol=1e-10)
    agree = float(np.max(np.abs(sol2.v.values - ev_v(np.hypot(g2d.node_x, g2d.node_y)))))
    ok = ok and agree < 1e-4
    details.append(f"radial/2d agreement {agree:.2e}")
    return 4, "topological flux, sign, decay, cross-validation", ok, "; ".join(details)


# -- 5: unit-flux mixed ladder ------------------------------------------------------------------


@_timed
def criterion_unit_flux():
    solver = RadialMixedSolver(GaugeModel(1, 1))
    eps_list = [0.05, 0.025, 0.0125]
    warm = None
    devs, sups = [], []
    res_ok = True
    for eps in eps_list:
        state = solver.picard(eps, warm)
        warm = state
        sol = solver.assemble(eps, state)
        devs.append(abs(sol.report.beta - 2.0))
        sups.append(sol.report.sup_u1_deviation)
        res_ok = res_ok and sol.report.system_residual <= 1e-6
    slope = float(np.polyfit(np.log(eps_list), np.log(devs), 1)[0])
    ok = res_ok and 1.6 <= slope <= 2.4 and all(b < a for a, b in zip(sups, sups[1:]))
    detail = (
        f"beta devs {['%.1e' % d for d in devs]}, slope {slope:.2f}, "
        f"sup|u1+ln2| -> {sups[-1]:.1e}"
    )
    return 5, "unit-flux mixed ladder (beta -> 2 at second order)", ok, detail


# -- 6: generic vortices, flux parameter 3 ----------------------------------------------------------


@_timed
def criterion_generic():
    opts = SolverOptions()
    # the mirrored-pair configuration (the generic two-vortex family); its
    # matching parameter vanishes by the antipodal symmetry that centering
    # enforces on any two-point family
    m = GaugeModel(1, 2, ((0.45, 0.2), (-0.45, -0.2)))
    prob = TwoScaleProblem(m, opts)
    eps_list = [0.02, 0.01, 0.005]
    target = m.b * m.N1 / 2 + m.N2 + 2
    y = np.linspace(0.5, 2.0, 16)
    devs, sups, alphas = [], [], []
    warm = None
    for eps in eps_list:
        alpha, st, _ = prob.solve_alpha(eps, warm)
        warm = st
        sol = prob.assemble(eps, alpha, st)
        alphas.append(abs(alpha))
        devs.append(abs(sol.report.beta - target))
        ctx = prob.alpha_context(alpha)
        lhs = (
            sol.u2_fast(y, np.zeros_like(y))
            - 2 * math.log(eps)
            + 0.5 * m.b * prob.u_interp(y / eps, np.zeros_like(y))
        )
        sups.append(float(np.max(np.abs(lhs - ctx.profile.value(y.astype(complex)).real))))
    slope = float(np.polyfit(np.log(eps_list), np.log(devs), 1)[0])
    alpha_ok = all(a <= 1.0 * e for a, e in zip(alphas, eps_list))
    # an asymmetric four-vortex family exercises a genuinely nonzero
    # matching parameter with |alpha| = O(eps)
    m4 = build_model("SU3", "ab", p_points=[(0.5, 0.0), (-0.3, 0.1), (-0.1, -0.4), (-0.1, 0.3)])
    prob4 = TwoScaleProblem(m4, opts)
    a4 = []
    warm = None
    for eps in eps_list:
        alpha, st, _ = prob4.solve_alpha(eps, warm)
        warm = st
        a4.append(abs(alpha))
    ratios4 = [a / e for a, e in zip(a4, eps_list)]
    alpha4_ok = all(a > 0 for a in a4) and max(ratios4) <= 1.25 * min(ratios4)
    ok = (
        alpha_ok and alpha4_ok and 1.6 <= slope <= 2.4
        and all(b < a for a, b in zip(sups, sups[1:]))
    )
    detail = (
        f"beta slope {slope:.2f}, rescaled sup -> {sups[-1]:.1e}, "
        f"|alpha|/eps (asymmetric) {['%.3f' % r for r in ratios4]}"
    )
    return 6, "generic-vortex construction at flux parameter 3", ok, detail


# -- 7: matching-map linearisation ---------------------------------------------------------------------


@_timed
def criterion_linearisation():
    m = GaugeModel(1, 2, ((0.0, 0.0), (0.0, 0.0)))
    prob = TwoScaleProblem(m, SolverOptions())
    slope = obstruction_slope(m)
    eps, alpha = 1e-3, 1e-3
    st = prob.picard(eps, alpha)
    ratio = prob.obstruction_integral(eps, alpha, st) / alpha
    rel = abs(ratio - slope) / abs(slope)
    ok = rel < 0.05
    return 7, "matching-map linearisation vs closed form", ok, (
        f"measured {ratio.real:.4f}{ratio.imag:+.1e}i vs {slope:.4f} (rel dev {rel:.2e})"
    )


# -- 8: scaling ladder ---------------------------------------------------------------------------------


@_timed
def criterion_scaling():
    m = GaugeModel(1, 1, ((0.0, 0.0),))  # flux parameter 3/2
    prob = TwoScaleProblem(m, SolverOptions(), topo_radial_n=1600)
    eps_list = [0.08, 0.04, 0.02]
    g_norms, xi_norms, eta_norms = [], [], []
    for eps in eps_list:
        g1 = prob.residual_g1(eps, 0.0, np.zeros(prob.x_grid.n), np.zeros(prob.y_grid.n))
        g_norms.append(prob.norm_l2x(g1))
        st = prob.picard(eps, 0.0)
        xi_norms.append(prob.norm_xi(st.xi.values))
        eta_norms.append(prob.norm_eta(st.eta.values))
    g_slope = float(np.polyfit(np.log(eps_list), np.log(g_norms), 1)[0])
    xi_ratios = [xi_norms[i] / xi_norms[i + 1] for i in range(2)]
    eta_band = max(eta_norms) / min(eta_norms)
    ok = 0.8 <= g_slope <= 1.2 and all(1.7 <= r <= 2.3 for r in xi_ratios) and eta_band <= 2.0
    detail = (
        f"|g1| slope {g_slope:.2f}, |xi| ratios {['%.2f' % r for r in xi_ratios]}, "
        f"|eta| band {eta_band:.2f}"
    )
    return 8, "residual and correction scaling ladder", ok, detail


# -- 9: cross oracle -------------------------------------------------------------------------------------


@_timed
def criterion_cross_oracle():
    m = GaugeModel(1, 1)
    solver = RadialMixedSolver(m)
    state = solver.picard(0.05)
    sol = solver.assemble(0.05, state)
    res = sol.ode_residual()
    cls = classify_assembled(m, sol.u1, sol.u2, r_h=400.0)
    r_s, dr = 1.0, 1e-4
    du1 = (sol.u1(r_s + dr) - sol.u1(r_s - dr)) / (2 * dr)
    du2 = (sol.u2(r_s + dr) - sol.u2(r_s - dr)) / (2 * dr)
    shot = radial_shoot(
        m, 0.0, 0.0, horizon=9.0,
        initial=(r_s, float(sol.u1(r_s)), float(du1), float(sol.u2(r_s)), float(du2)),
    )
    rr = np.linspace(1.2, 9.0, 120)
    y = shot.at(rr)
    dev = max(float(np.max(np.abs(y[0] - sol.u1(rr)))), float(np.max(np.abs(y[2] - sol.u2(rr)))))
    far_limit = abs(float(sol.u1(300.0)) + math.log(2.0))
    ok = res <= 1e-6 and cls is TrajectoryClass.MIXED_I and dev <= 1e-6 and far_limit < 0.01
    detail = (
        f"ode residual {res:.1e}, classification {cls.value}, shoot deviation {dev:.1e}"
    )
    return 9, "assembled solution passes the shooting oracle", ok, detail


ALL_CRITERIA = {
    1: criterion_mass,
    2: criterion_rates,
    3: criterion_projection,
    4: criterion_topological,
    5: criterion_unit_flux,
    6: criterion_generic,
    7: criterion_linearisation,
    8: criterion_scaling,
    9: criterion_cross_oracle,
}

QUICK_INDICES = (1, 2, 3, 5, 9)


def run_selected(indices, printer=None) -> list[CheckResult]:
    results = []
    for idx in indices:
        result = ALL_CRITERIA[idx]()
        results.append(result)
        if printer:
            printer(result.line())
    return results


def run_all(quick: bool = False, printer=None) -> list[CheckResult]:
    indices = QUICK_INDICES if quick else tuple(sorted(ALL_CRITERIA))
    return run_selected(indices, printer)
