"""CLI and configuration: schema validation, exit codes, output formats,
determinism of the emitted reports."""

import json
import os

import numpy as np
import pytest

from csvortex.cli import main
from csvortex.config import ConfigError, config_from_dict, load_config
from csvortex.report import canonical_json


BASE = {
    "model": {"group": "SU3", "orientation": "ab", "p_points": [], "q_points": []},
    "epsilons": [0.05],
}


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# -- configuration ------------------------------------------------------------


def test_config_roundtrip():
    cfg = config_from_dict(dict(BASE))
    assert cfg.model.N1 == 0
    assert cfg.epsilons == [0.05]
    assert len(cfg.config_hash) == 16


def test_config_rejects_increasing_eps():
    bad = dict(BASE, epsilons=[0.01, 0.05])
    with pytest.raises(ConfigError) as err:
        config_from_dict(bad)
    assert "epsilons" in str(err.value)


def test_config_rejects_bad_weight():
    with pytest.raises(ConfigError) as err:
        config_from_dict(dict(BASE, weight_d=0.3))
    assert "weight_d" in str(err.value)


def test_config_rejects_bad_group():
    bad = dict(BASE, model={"group": "SU4", "p_points": [], "q_points": []})
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_config_rejects_malformed_point():
    bad = dict(BASE, model={"group": "SU3", "p_points": [[1.0]], "q_points": []})
    with pytest.raises(ConfigError) as err:
        config_from_dict(bad)
    assert "p_points[0]" in str(err.value)


def test_load_config_reports_json_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "model": ,\n}')
    with pytest.raises(ConfigError) as err:
        load_config(str(path))
    assert "line 2" in str(err.value)


def test_malformed_config_exit_code(tmp_path):
    path = write_cfg(tmp_path, {"model": {"group": "SU3"}})  # missing epsilons
    code = main(["solve-mixed", "--config", path, "--out", str(tmp_path / "o")])
    assert code == 2


def test_excluded_configuration_exit_code(tmp_path):
    cfg = {
        "model": {"group": "SU3", "p_points": [[1.0, 0.0], [-1.0, 0.0]], "q_points": []},
        "epsilons": [0.05],
    }
    path = write_cfg(tmp_path, cfg)
    code = main(["solve-mixed", "--config", path, "--out", str(tmp_path / "o")])
    assert code == 2


def test_every_centered_configuration_has_a_case():
    # after centering, a supported configuration always lands in one of the
    # two proven regimes: light vortex mass forces coincidence at the origin
    # (the distinct mirrored pair is rejected separately)
    from csvortex.model import build_model, is_excluded_case
    from csvortex.solver import existence_case

    configs = [
        ("SU3", [], []),
        ("SU3", [[0.7, 0.3]], []),
        ("SO5", [[0.4, 0.0]], []),
        ("SO5", [], [[0.3, 0.0]]),
        ("G2", [[0.2, 0.1], [0.5, -0.1]], []),
    ]
    for group, p, q in configs:
        m = build_model(group, "ab", p, q)
        if is_excluded_case(m):
            continue
        assert existence_case(m) is not None


def test_strict_divergence_exit_code(tmp_path):
    # starve the contraction of iterations: strict mode exits 3, plain 0
    cfg = dict(
        BASE,
        grids={"radial": {"n_x": 800, "n_y": 800}},
        solver={"max_picard": 2},
    )
    path = write_cfg(tmp_path, cfg)
    code = main(["solve-mixed", "--config", path, "--out", str(tmp_path / "o"), "--strict"])
    assert code == 3
    code = main(["solve-mixed", "--config", path, "--out", str(tmp_path / "o2")])
    assert code == 0


# -- report format -------------------------------------------------------------


def test_canonical_json_fixed_precision():
    s = canonical_json({"a": 1.0 / 3.0, "b": [1, True, None], "c": "x"})
    assert s == '{"a":0.33333333333333331,"b":[1,true,null],"c":"x"}'


def test_canonical_json_complex_and_special():
    s = canonical_json({"z": complex(1, -2), "n": float("nan")})
    assert s == '{"z":{"re":1,"im":-2},"n":"nan"}'


# -- end-to-end runs ----------------------------------------------------------------


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = dict(
        BASE,
        epsilons=[0.05, 0.025],
        grids={"radial": {"n_x": 1200, "n_y": 1600}},
    )
    path = write_cfg(tmp, cfg)
    code = main(["solve-mixed", "--config", path, "--out", str(tmp / "run")])
    assert code == 0
    return tmp, path


def test_solve_mixed_outputs(run_dir):
    tmp, _ = run_dir
    report = json.loads((tmp / "run_eps0.05_report.json").read_text())
    assert report["command"] == "solve-mixed"
    assert report["converged"] is True
    assert abs(report["beta"] - 2.0) < 0.05
    assert "config_hash" in report and "x_grid_hash" in report
    # field dump format: provenance header then r,theta,value
    lines = (tmp / "run_eps0.05_u1.csv").read_text().splitlines()
    assert lines[0].startswith("# field=u1 grid=sha256:")
    assert lines[1] == "r,theta,value"
    assert len(lines[2].split(",")) == 3
    # figures rendered alongside the delimited output
    assert (tmp / "run_eps0.05_picard.png").stat().st_size > 1000
    assert (tmp / "run_eps0.05_profiles.png").stat().st_size > 1000


def test_solve_mixed_deterministic(run_dir):
    tmp, path = run_dir
    code = main(["solve-mixed", "--config", path, "--out", str(tmp / "again")])
    assert code == 0
    a = (tmp / "run_eps0.05_report.json").read_bytes()
    b = (tmp / "again_eps0.05_report.json").read_bytes()
    assert a == b


def test_eps_override_validation(run_dir):
    tmp, path = run_dir
    code = main(["solve-mixed", "--config", path, "--out", str(tmp / "x"), "--eps", "0.01", "0.05"])
    assert code == 2


def test_shoot_radial_outputs(tmp_path):
    path = write_cfg(tmp_path, BASE)
    code = main([
        "shoot-radial", "--config", path, "--out", str(tmp_path / "shot"),
        "--s1", "-6", "--s2", "-6", "--horizon", "120",
    ])
    assert code == 0
    report = json.loads((tmp_path / "shot_report.json").read_text())
    assert report["classification"] == "NonTopological"
    rows = (tmp_path / "shot_trajectory.csv").read_text().splitlines()
    assert rows[0] == "r,u1,du1,u2,du2"
    assert (tmp_path / "shot_trajectory.png").exists()


def test_liouville_table_outputs(tmp_path):
    path = write_cfg(tmp_path, dict(BASE, grids={"y": {"n_r": 128, "n_theta": 32}}))
    code = main(["liouville-table", "--config", path, "--out", str(tmp_path / "lt")])
    assert code == 0
    rows = (tmp_path / "lt_table.csv").read_text().splitlines()
    assert rows[0].startswith("lam,alpha,d,mass")
    # mass accurate for every row
    for row in rows[1:]:
        rel = float(row.split(",")[4])
        assert abs(rel) < 1e-3


def test_dump_approx_outputs(tmp_path):
    cfg = {
        "model": {"group": "SO5", "p_points": [[0.45, 0.2], [-0.45, -0.2]], "q_points": []},
        "epsilons": [0.02],
        "grids": {"x": {"n_r": 96, "n_theta": 32}, "y": {"n_r": 96, "n_theta": 32}},
    }
    path = write_cfg(tmp_path, cfg)
    code = main(["dump-approx", "--config", path, "--out", str(tmp_path / "da"), "--eps", "0.02"])
    assert code == 0
    assert (tmp_path / "da_V1.csv").exists()
    assert (tmp_path / "da_farfield.csv").exists()
    assert (tmp_path / "da_V2.png").exists()


def test_thread_cap_env(monkeypatch):
    from csvortex.drivers import thread_cap

    monkeypatch.setenv("CSVORTEX_THREADS", "2")
    assert thread_cap() == 2
    monkeypatch.setenv("CSVORTEX_THREADS", "junk")
    assert thread_cap() >= 1
