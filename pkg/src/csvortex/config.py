"""Run configuration: JSON schema, validation, and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from csvortex.grid import WeightParams
from csvortex.model import GaugeModel, build_model
from csvortex.solver import SolverOptions


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"config field '{field_path}': {message}")
        self.field_path = field_path


@dataclass
class GridSpec:
    n_r: int
    n_theta: int
    r_out: float | None = None  # None: chosen from the model


@dataclass
class RunConfig:
    model: GaugeModel
    epsilons: list[float]
    weight_d: float = 0.1
    x_grid: GridSpec = field(default_factory=lambda: GridSpec(192, 64))
    y_grid: GridSpec = field(default_factory=lambda: GridSpec(224, 64, 40.0))
    radial_n_x: int = 2400
    radial_n_y: int = 3200
    radial_r_out_y: float = 70.0
    picard_tol: float = 1e-9
    max_picard: int = 200
    alpha_tol: float = 1e-8
    system_tol: float = 1e-6
    ball_radius: float | None = None
    nondegeneracy_floor: float = 1e-3
    allow_degenerate: bool = False
    strict: bool = False
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            picard_tol=self.picard_tol,
            max_picard=self.max_picard,
            alpha_tol=self.alpha_tol,
            system_tol=self.system_tol,
            ball_radius=self.ball_radius,
            nondegeneracy_floor=self.nondegeneracy_floor,
            weight=WeightParams(self.weight_d),
            strict=self.strict,
        )

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _expect(data: dict, key: str, types, path: str, default=None, required=False):
    if key not in data:
        if required:
            raise ConfigError(f"{path}{key}", "missing required field")
        return default
    val = data[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"{path}{key}", f"expected {types}, got {type(val).__name__}")
    return val


def _grid_spec(data: dict, path: str, default: GridSpec) -> GridSpec:
    if not data:
        return default
    n_r = int(_expect(data, "n_r", (int,), path, default.n_r))
    n_theta = int(_expect(data, "n_theta", (int,), path, default.n_theta))
    r_out = _expect(data, "r_out", (int, float), path, default.r_out)
    if n_r < 8:
        raise ConfigError(f"{path}n_r", "resolution below the minimum of 8")
    if n_theta < 8 or n_theta % 2:
        raise ConfigError(f"{path}n_theta", "angular count must be even and >= 8")
    return GridSpec(n_r, n_theta, None if r_out is None else float(r_out))


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a JSON object")
    mdl = _expect(data, "model", dict, "", required=True)
    group = _expect(mdl, "group", str, "model.", required=True)
    orientation = _expect(mdl, "orientation", str, "model.", "ab")
    p_points = _expect(mdl, "p_points", list, "model.", [])
    q_points = _expect(mdl, "q_points", list, "model.", [])
    for name, pts in (("p_points", p_points), ("q_points", q_points)):
        for i, pt in enumerate(pts):
            if not (isinstance(pt, (list, tuple)) and len(pt) == 2):
                raise ConfigError(f"model.{name}[{i}]", "expected a [x, y] pair")
    try:
        model = build_model(group, orientation, p_points, q_points)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc

    eps = _expect(data, "epsilons", list, "", required=True)
    if not eps or not all(isinstance(e, (int, float)) and e > 0 for e in eps):
        raise ConfigError("epsilons", "need a non-empty list of positive values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilons", "values must be strictly decreasing")

    weight_d = float(_expect(data, "weight_d", (int, float), "", 0.1))
    if not 0.0 < weight_d < 0.25:
        raise ConfigError("weight_d", "must lie in (0, 1/4)")

    grids = _expect(data, "grids", dict, "", {})
    x_spec = _grid_spec(_expect(grids, "x", dict, "grids.", {}) or {}, "grids.x.", GridSpec(192, 64))
    y_spec = _grid_spec(
        _expect(grids, "y", dict, "grids.", {}) or {}, "grids.y.", GridSpec(224, 64, 40.0)
    )
    radial = _expect(grids, "radial", dict, "grids.", {}) or {}
    radial_n_x = int(_expect(radial, "n_x", (int,), "grids.radial.", 2400))
    radial_n_y = int(_expect(radial, "n_y", (int,), "grids.radial.", 3200))
    radial_r_out_y = float(_expect(radial, "r_out_y", (int, float), "grids.radial.", 70.0))

    solver = _expect(data, "solver", dict, "", {}) or {}
    cfg = RunConfig(
        model=model,
        epsilons=[float(e) for e in eps],
        weight_d=weight_d,
        x_grid=x_spec,
        y_grid=y_spec,
        radial_n_x=radial_n_x,
        radial_n_y=radial_n_y,
        radial_r_out_y=radial_r_out_y,
        picard_tol=float(_expect(solver, "picard_tol", (int, float), "solver.", 1e-9)),
        max_picard=int(_expect(solver, "max_picard", (int,), "solver.", 200)),
        alpha_tol=float(_expect(solver, "alpha_tol", (int, float), "solver.", 1e-8)),
        system_tol=float(_expect(solver, "system_tol", (int, float), "solver.", 1e-6)),
        ball_radius=_expect(solver, "ball_radius", (int, float), "solver.", None),
        nondegeneracy_floor=float(
            _expect(solver, "nondegeneracy_floor", (int, float), "solver.", 1e-3)
        ),
        allow_degenerate=bool(_expect(data, "allow_degenerate", bool, "", False)),
        strict=bool(_expect(data, "strict", bool, "", False)),
        seed=int(_expect(data, "seed", (int,), "", 0)),
        raw=data,
    )
    if cfg.ball_radius is not None:
        cfg.ball_radius = float(cfg.ball_radius)
    for tol_name in ("picard_tol", "alpha_tol", "system_tol"):
        if getattr(cfg, tol_name) <= 0:
            raise ConfigError(f"solver.{tol_name}", "tolerances must be positive")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(path, f"cannot read file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)
