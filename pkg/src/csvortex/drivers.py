"""Run orchestration behind the CLI subcommands: grid construction from a
RunConfig, solver dispatch (radial unit-flux path versus the two-scale
construction), the epsilon sweep, and output emission (JSON report + CSV
fields + figures per run)."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from csvortex import report as rep
from csvortex.config import RunConfig
from csvortex.grid import DiskGrid, RadialGrid, WeightParams
from csvortex.liouville import LiouvilleProfile, gram_diag_reference, gram_matrix, mass_integral
from csvortex.model import UnsupportedConfigurationError, reject_excluded_case
from csvortex.radial import RadialMixedSolver, radial_shoot
from csvortex.solver import SolverDivergenceError, TwoScaleProblem, existence_case
from csvortex.topological import decay_fit, nondegeneracy_estimate, solve_topological


def thread_cap() -> int:
    env = os.environ.get("CSVORTEX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _x_r_out(cfg: RunConfig) -> float:
    if cfg.x_grid.r_out is not None:
        return cfg.x_grid.r_out
    return 30.0 + 2.0 * cfg.model.max_vortex_radius()


def _grids(cfg: RunConfig) -> tuple[DiskGrid, DiskGrid]:
    gx = DiskGrid(_x_r_out(cfg), cfg.x_grid.n_r, cfg.x_grid.n_theta)
    gy = DiskGrid(cfg.y_grid.r_out or 40.0, cfg.y_grid.n_r, cfg.y_grid.n_theta)
    return gx, gy


# -- solve-topological -------------------------------------------------------------


def run_topological(cfg: RunConfig, out_prefix: str) -> dict:
    model = cfg.model
    radial = model.all_vortices_at_origin() and model.N1 > 0
    if radial:
        grid = RadialGrid(_x_r_out(cfg), cfg.radial_n_x)
    else:
        grid = _grids(cfg)[0]
    sol = solve_topological(model.p_points, grid, tol=1e-10)
    try:
        decay = decay_fit(sol)
    except ValueError:
        decay = None
    nondeg = nondegeneracy_estimate(sol) if model.N1 <= 3 else None
    payload = {
        "command": "solve-topological",
        "config_hash": cfg.config_hash,
        "grid_hash": grid.grid_hash,
        "n_vortices": model.N1,
        "flux": sol.flux,
        "decay_fit": decay,
        "nondegeneracy": None if nondeg is None else {
            "value": nondeg.value,
            "value_refined": nondeg.value_refined,
            "ratio": nondeg.ratio,
            "stable": nondeg.stable,
        },
        "residual_norm": sol.residual_norm,
        "newton_iterations": sol.newton_iterations,
        "residual_history": sol.residual_history,
        "radial_fast_path": sol.radial,
    }
    rep.write_report(out_prefix + "_report.json", payload)
    rep.write_field_csv(out_prefix + "_U.csv", "U", grid, sol.U.values)
    if sol.residual_history:
        rep.save_convergence_plot(
            out_prefix + "_newton.png", {"newton residual": sol.residual_history},
            title="topological solve",
        )
    if isinstance(grid, RadialGrid):
        rep.save_radial_profiles(
            out_prefix + "_U.png", grid.r, {"U": sol.U.values}, ylabel="U",
            title=f"topological solution, {model.N1} vortices",
        )
    else:
        rep.save_disk_heatmap(out_prefix + "_U.png", grid, sol.U.values,
                              title="topological solution", r_max=10.0)
    return payload


# -- solve-mixed ------------------------------------------------------------------------


def _mixed_report_payload(cfg: RunConfig, solver_kind: str, grid_hashes: dict, rep_obj) -> dict:
    payload = {
        "command": "solve-mixed",
        "config_hash": cfg.config_hash,
        "solver": solver_kind,
    }
    payload.update(grid_hashes)
    payload.update(rep_obj.as_dict())
    return payload


def run_mixed(cfg: RunConfig, out_prefix: str) -> list[dict]:
    model = cfg.model
    reject_excluded_case(model)
    opts = cfg.solver_options()
    case = existence_case(model)
    warnings: list[str] = []
    if case is None:
        msg = (
            "configuration outside the proven existence cases "
            "(need b*N1 + 2*N2 >= 3, or all vortices coincident at the origin)"
        )
        if cfg.strict:
            raise UnsupportedConfigurationError(msg)
        warnings.append(msg)

    payloads: list[dict] = []
    if model.lam == 1:
        solver = RadialMixedSolver(
            model, opts, n_x=cfg.radial_n_x, n_y=cfg.radial_n_y, r_out_y=cfg.radial_r_out_y
        )
        hashes = {"x_grid_hash": solver.x_grid.grid_hash, "y_grid_hash": solver.y_grid.grid_hash}
        warm = None
        for eps in cfg.epsilons:
            state = solver.picard(eps, warm)
            warm = state
            sol = solver.assemble(eps, state)
            payload = _mixed_report_payload(cfg, "radial-unit-flux", hashes, sol.report)
            payload["warnings"] = warnings
            payloads.append(payload)
            tag = f"{out_prefix}_eps{eps:g}"
            rep.write_report(tag + "_report.json", payload)
            rep.write_field_csv(tag + "_u1.csv", "u1", solver.x_grid,
                                sol.u1(solver.x_grid.r))
            rep.write_field_csv(tag + "_u2.csv", "u2", solver.x_grid,
                                sol.u2(solver.x_grid.r))
            rep.save_convergence_plot(tag + "_picard.png",
                                      {"successive difference": state.diff_history},
                                      title=f"contraction, eps={eps:g}")
            rep.save_radial_profiles(
                tag + "_profiles.png", solver.x_grid.r[1:],
                {"u1": sol.u1(solver.x_grid.r[1:]), "u2": sol.u2(solver.x_grid.r[1:])},
                ylabel="u", title=f"mixed solution, eps={eps:g}", logx=True,
            )
    else:
        gx, gy = _grids(cfg)
        problem = TwoScaleProblem(model, opts, x_grid=gx, y_grid=gy, topo_radial_n=cfg.radial_n_x)
        if not cfg.allow_degenerate:
            nd = nondegeneracy_estimate(problem.topo)
            if nd.value < opts.nondegeneracy_floor:
                raise UnsupportedConfigurationError(
                    f"topological background near-degenerate (estimate {nd.value:.3e} < "
                    f"{opts.nondegeneracy_floor:g}); pass allow_degenerate to override"
                )
        hashes = {"x_grid_hash": gx.grid_hash, "y_grid_hash": gy.grid_hash}

        def solve_one(eps: float, warm=None):
            alpha, state, a_iters = problem.solve_alpha(eps, warm)
            sol = problem.assemble(eps, alpha, state)
            sol.report.alpha_iterations = a_iters
            return sol

        n_workers = min(thread_cap(), len(cfg.epsilons))
        sols = {}
        if n_workers > 1 and len(cfg.epsilons) > 1:
            # one lightweight problem per worker thread; the topological
            # solve and the (immutable) grids are shared.  Touch the lazy
            # grid caches once before the fan-out.
            gx.laplacian_matrix, gy.laplacian_matrix, gy.cell_volumes
            import threading

            workers: dict[int, TwoScaleProblem] = {}
            lock = threading.Lock()

            def run_eps(eps):
                key = threading.get_ident()
                with lock:
                    prob = workers.get(key)
                    if prob is None:
                        prob = TwoScaleProblem(model, opts, x_grid=gx, y_grid=gy, topo=problem.topo)
                        workers[key] = prob
                alpha, state, a_iters = prob.solve_alpha(eps)
                sol = prob.assemble(eps, alpha, state)
                sol.report.alpha_iterations = a_iters
                return eps, sol

            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                for eps, sol in pool.map(run_eps, cfg.epsilons):
                    sols[eps] = sol
        else:
            warm = None
            for eps in cfg.epsilons:
                sol = solve_one(eps, warm)
                warm = sol.state
                sols[eps] = sol

        for eps in cfg.epsilons:
            sol = sols[eps]
            payload = _mixed_report_payload(cfg, "two-scale", hashes, sol.report)
            payload["warnings"] = warnings
            payloads.append(payload)
            tag = f"{out_prefix}_eps{eps:g}"
            rep.write_report(tag + "_report.json", payload)
            rep.write_field_csv(tag + "_u1.csv", "u1", gx, sol.u1(gx.node_x, gx.node_y))
            rep.write_field_csv(tag + "_u2fast.csv", "u2_fast", gy,
                                sol.u2_fast(gy.node_x, gy.node_y))
            rep.save_convergence_plot(tag + "_picard.png",
                                      {"successive difference": sol.state.diff_history},
                                      title=f"contraction, eps={eps:g}")
        eps_list = list(cfg.epsilons)
        rep.save_loglog_slopes(
            out_prefix + "_sweep.png", eps_list,
            {
                "|beta - target|": [
                    abs(sols[e].report.beta - (model.b * model.N1 / 2 + model.N2 + 2))
                    for e in eps_list
                ],
                "|alpha|": [max(abs(sols[e].report.alpha_solved), 1e-18) for e in eps_list],
                "|xi|": [sols[e].report.xi_norm for e in eps_list],
            },
            title="sweep diagnostics",
        )
    return payloads


# -- shoot-radial -----------------------------------------------------------------------


def run_shoot(cfg: RunConfig, s1: float, s2: float, horizon: float, out_prefix: str) -> dict:
    shot = radial_shoot(cfg.model, s1, s2, horizon=horizon)
    payload = {
        "command": "shoot-radial",
        "config_hash": cfg.config_hash,
        "s1": s1,
        "s2": s2,
        "horizon": shot.horizon,
        "classification": shot.classification.value,
        "blow_up_radius": shot.blow_up_radius,
        "u1_end": float(shot.u1[-1]),
        "u2_end": float(shot.u2[-1]),
    }
    rep.write_report(out_prefix + "_report.json", payload)
    rep.write_table_csv(
        out_prefix + "_trajectory.csv",
        ["r", "u1", "du1", "u2", "du2"],
        list(zip(shot.r, shot.u1, shot.du1, shot.u2, shot.du2)),
    )
    rep.save_radial_profiles(
        out_prefix + "_trajectory.png", shot.r,
        {"u1": shot.u1, "u2": shot.u2}, ylabel="u",
        title=f"shoot: s1={s1:g}, s2={s2:g} -> {shot.classification.value}", logx=True,
    )
    return payload


# -- dump-approx -------------------------------------------------------------------------


def run_dump_approx(cfg: RunConfig, eps: float, out_prefix: str) -> dict:
    from csvortex.approx import assemble_V, eval_A, eval_H, far_field_radius

    model = cfg.model
    gx, gy = _grids(cfg)
    if model.all_vortices_at_origin() and model.N1 > 0:
        topo = solve_topological(model.p_points, RadialGrid(_x_r_out(cfg), cfg.radial_n_x))
    else:
        topo = solve_topological(model.p_points, gx)
    prof = LiouvilleProfile(model.lam, model.a, model.b)
    va = assemble_V(topo.interpolator(), prof, model, eps)
    v1 = va.v1(gx.node_x, gx.node_y)
    v2 = va.v2_fast(gy.node_x, gy.node_y)
    rep.write_field_csv(out_prefix + "_V1.csv", "V1", gx, v1)
    rep.write_field_csv(out_prefix + "_V2_fast.csv", "V2_fast", gy, v2)
    r0 = far_field_radius(model)
    radii = np.geomspace(max(r0 * eps * 1.01, 1e-3), gy.r_out * 0.9, 40)
    rows = []
    for r in radii:
        h = float(eval_H(model, eps, r, 0.0))
        a = float(eval_A(model, r, 0.0))
        rows.append((float(r), h, a, h - eps**2 * a))
    rep.write_table_csv(out_prefix + "_farfield.csv", ["r", "H", "A", "H_minus_eps2_A"], rows)
    payload = {
        "command": "dump-approx",
        "config_hash": cfg.config_hash,
        "eps": eps,
        "x_grid_hash": gx.grid_hash,
        "y_grid_hash": gy.grid_hash,
        "far_field_radius": r0,
    }
    rep.write_report(out_prefix + "_report.json", payload)
    rep.save_disk_heatmap(out_prefix + "_V2.png", gy, v2, title="fast-scale profile V2", r_max=5.0)
    return payload


# -- liouville-table -------------------------------------------------------------------------


def run_liouville_table(cfg: RunConfig, out_prefix: str) -> dict:
    grid = DiskGrid(cfg.y_grid.r_out or 40.0, cfg.y_grid.n_r, cfg.y_grid.n_theta)
    lams = [Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3)]
    alphas = [0.0, 0.2]
    ds = [0.05, cfg.weight_d, 0.2]
    a, b = cfg.model.a, cfg.model.b
    rows = []
    for lam in lams:
        for alpha in alphas:
            if lam.denominator != 1 and alpha != 0.0:
                continue
            prof = LiouvilleProfile(lam, a, b, alpha=alpha)
            mass = mass_integral(prof, grid)
            target = 8.0 * math.pi * float(lam)
            for d in ds:
                w = WeightParams(d)
                if lam.denominator == 1:
                    G = gram_matrix(alpha, lam, grid, w)
                    a11, a12, a22 = G[0, 0], G[0, 1], G[1, 1]
                    ref = gram_diag_reference(lam, d)
                else:
                    a11 = a12 = a22 = ref = float("nan")
                rows.append(
                    (float(lam), alpha, d, mass, mass / target - 1.0, a11, a12, a22, ref)
                )
    rep.write_table_csv(
        out_prefix + "_table.csv",
        ["lam", "alpha", "d", "mass", "mass_rel_err", "a11", "a12", "a22", "a11_reference"],
        rows,
    )
    masses = {}
    for lam in lams:
        prof = LiouvilleProfile(lam, a, b)
        masses[f"lam={lam}"] = [mass_integral(prof, grid) / (8 * math.pi * float(lam))]
    rep.save_loglog_slopes(
        out_prefix + "_mass.png", [1.0], masses, xlabel="",
        title="mass / (8 pi lam) per profile",
    )
    payload = {
        "command": "liouville-table",
        "config_hash": cfg.config_hash,
        "grid_hash": grid.grid_hash,
        "rows": len(rows),
    }
    rep.write_report(out_prefix + "_report.json", payload)
    return payload
