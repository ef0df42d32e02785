"""Scenario configs, pipeline artifacts, determinism, and the CLI surface."""

import json

import numpy as np
import pytest

from stimfield.cli import main
from stimfield.errors import ConfigError
from stimfield.scenario import load_scenario, stage_compare
from stimfield.volume import MaskVolume, VoxelGrid, load_volume, save_volume


def mini_config(tmp_path, *, n_contacts=4, ef_th=0.15, af_th=0.03,
                with_target=True, with_optimization=False, lambda_max=4.0,
                max_iterations=20000):
    cfg = {
        "output_dir": "out",
        "domain": {"spacing_mm": 1.0, "padding_mm": 6.0},
        "leads": [
            {"name": "lead1", "tip_mm": [-1.0, 0.0, 0.0], "axis": [0, 0, 1],
             "template": {"n_contacts": n_contacts, "insulated_length_mm": 16.0}},
            {"name": "lead2", "tip_mm": [1.0, 0.0, 0.0], "axis": [0, 0, 1],
             "template": {"n_contacts": n_contacts, "insulated_length_mm": 16.0}},
        ],
        "stimulation": {
            "pulse_width_us": 60,
            "contacts": [
                {"lead": "lead1", "contact": 0, "role": "cathode", "voltage_v": -3.0},
                {"lead": "lead2", "contact": 0, "role": "cathode", "voltage_v": -3.0},
            ],
        },
        "conductivity": {"mode": "homogeneous", "sigma_s_per_mm": 2.0e-4},
        "evaluation": {"side_mm": 8.0, "spacing_mm": 0.8},
        "axons": {"length_mm": 1.0, "step_mm": 0.1,
                  "orientation": "worst_case_perpendicular"},
        "thresholds": {
            "ef_v_per_mm": {"pairs": [[60, ef_th]]},
            "af_v_per_mm2": {"pairs": [[60, af_th]]},
        },
        "solver": {"relative_tolerance": 1e-8, "max_iterations": max_iterations,
                   "preconditioner": "diagonal"},
    }
    if with_target:
        grid = VoxelGrid((9, 9, 9), (1.0, 1.0, 1.0), (-4.0, -4.0, -1.75))
        vals = np.zeros(grid.dims, dtype=bool)
        vals[2:7, 2:7, 3:6] = True
        save_volume(MaskVolume(grid, vals), tmp_path / "target.vol")
        cfg["targets"] = {"mask_volume": "target.vol"}
    if with_optimization:
        cfg["optimization"] = {
            "strategy": "both", "metric": "EF", "theta": 0.3,
            "lambda_max_v": lambda_max, "lambda_step_v": 0.5,
            "bank_geometry": "dual_geometry",
        }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg, indent=1))
    return path


@pytest.fixture(scope="module")
def compare_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("compare")
    cfg = mini_config(tmp)
    scenario = load_scenario(cfg)
    arms, fields, masks = stage_compare(scenario)
    return tmp, scenario, arms, fields, masks


def test_compare_artifacts_on_disk(compare_run):
    tmp, scenario, arms, fields, masks = compare_run
    out = scenario.output_dir
    mask_files = sorted(p.name for p in out.glob("vta_*.vol"))
    assert mask_files == ["vta_c_af.vol", "vta_c_ef.vol", "vta_dual_af.vol",
                          "vta_dual_ef.vol", "vta_v_af.vol", "vta_v_ef.vol"]
    assert (out / "comparison.csv").exists()
    assert (out / "coverage.csv").exists()
    assert (out / "manifest.json").exists()
    for arm in ("dual", "single_lead1", "single_lead2",
                "induced_lead1", "induced_lead2"):
        assert (out / f"potential_{arm}.vol").exists()
        assert (out / f"activation_{arm}.vol").exists()
        assert (out / f"solution_{arm}.txt").exists()


def test_manifest_records_solver_and_arms(compare_run):
    _, scenario, arms, _, _ = compare_run
    manifest = json.loads((scenario.output_dir / "manifest.json").read_text())
    assert manifest["solver"]["relative_tolerance"] == 1e-8
    assert manifest["config_digest_sha256"] == scenario.config_digest
    for arm in arms:
        assert manifest["arms"][arm]["iterations"] > 0
    induced = manifest["arms"]["induced_lead1"]["floating_potentials_V"]
    lead2_vals = [v for k, v in induced.items() if k.startswith("lead2")]
    assert len(lead2_vals) == 4
    assert all(abs(v) > 1e-3 for v in lead2_vals)


def test_comparison_csv_contents(compare_run):
    _, scenario, _, _, masks = compare_run
    text = (scenario.output_dir / "comparison.csv").read_text().splitlines()
    assert text[0] == "method,total,exclusive,missed,total_pct_of_dual"
    methods = [line.split(",")[0] for line in text[1:]]
    assert methods == ["dual_EF", "V_EF", "C_EF", "dual_AF", "V_AF", "C_AF"]
    dual_row = text[1].split(",")
    assert int(dual_row[1]) == masks["dual_EF"].count
    assert float(dual_row[4]) == 100.0


def test_rerun_is_byte_identical(tmp_path):
    cfg = mini_config(tmp_path)
    assert main(["compare", str(cfg), "-o", str(tmp_path / "o1")]) == 0
    assert main(["compare", str(cfg), "-o", str(tmp_path / "o2")]) == 0
    for name in ("comparison.csv", "coverage.csv", "manifest.json"):
        assert (tmp_path / "o1" / name).read_bytes() == \
            (tmp_path / "o2" / name).read_bytes(), name
    for vol in ("vta_dual_ef", "vta_c_af"):
        assert (tmp_path / "o1" / f"{vol}.raw").read_bytes() == \
            (tmp_path / "o2" / f"{vol}.raw").read_bytes()


def test_threads_flag_preserves_outputs(tmp_path):
    cfg = mini_config(tmp_path)
    assert main(["compare", str(cfg), "-o", str(tmp_path / "s")]) == 0
    assert main(["compare", str(cfg), "-o", str(tmp_path / "t"), "--threads", "3"]) == 0
    assert (tmp_path / "s" / "comparison.csv").read_bytes() == \
        (tmp_path / "t" / "comparison.csv").read_bytes()
    # manifests differ only in the recorded thread count
    m_s = json.loads((tmp_path / "s" / "manifest.json").read_text())
    m_t = json.loads((tmp_path / "t" / "manifest.json").read_text())
    m_s.pop("threads")
    m_t.pop("threads")
    assert m_s == m_t


def test_solve_and_activation_subcommands(tmp_path):
    cfg = mini_config(tmp_path, with_target=False)
    assert main(["solve", str(cfg), "-o", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "potential_dual.vol").exists()
    assert main(["activation", str(cfg), "-o", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "activation_dual.vol").exists()


def test_optimize_cli(tmp_path):
    cfg = mini_config(tmp_path, n_contacts=2, with_optimization=True)
    code = main(["optimize", str(cfg), "-o", str(tmp_path / "opt")])
    assert code == 0
    out = tmp_path / "opt"
    assert (out / "ranking_strategy2.csv").exists()
    assert (out / "winner_strategy2.txt").exists()
    assert (out / "ranking_strategy1.csv").exists()
    header = (out / "ranking_strategy2.csv").read_text().splitlines()[0]
    assert header == "config,lambda_v,objective,coverage_pct"


def test_optimize_infeasible_exit_code(tmp_path):
    cfg = mini_config(tmp_path, n_contacts=2, with_optimization=True,
                      ef_th=1e6, lambda_max=0.5)
    code = main(["optimize", str(cfg), "-o", str(tmp_path / "opt")])
    assert code == 3


def test_solver_nonconvergence_exit_code(tmp_path):
    cfg = mini_config(tmp_path, with_target=False, max_iterations=2)
    assert main(["solve", str(cfg), "-o", str(tmp_path / "x")]) == 2


def test_config_errors_name_fields(tmp_path):
    cfg_path = mini_config(tmp_path)
    cfg = json.loads(cfg_path.read_text())

    bad = dict(cfg)
    bad["targets"] = {"mask_volume": "missing.vol"}
    p = tmp_path / "bad1.json"
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="targets.mask_volume"):
        load_scenario(p)

    bad = json.loads(cfg_path.read_text())
    bad["leads"][0]["axis"] = [0, 0, 0]
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="leads"):
        load_scenario(p)

    bad = json.loads(cfg_path.read_text())
    bad["stimulation"]["contacts"][0]["lead"] = "nope"
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="stimulation.contacts"):
        load_scenario(p)

    bad = json.loads(cfg_path.read_text())
    del bad["thresholds"]
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="thresholds"):
        load_scenario(p)

    bad = json.loads(cfg_path.read_text())
    bad["solver"]["relative_tolerance"] = 2.0
    p.write_text(json.dumps(bad))
    with pytest.raises(ConfigError, match="solver"):
        load_scenario(p)


def test_cli_config_error_exit_code(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert main(["compare", str(p)]) == 1
    assert main(["compare", str(tmp_path / "missing.json")]) == 1


def test_validate_cli(capsys):
    assert main(["validate", "properties"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out
    assert main(["validate", "nope"]) == 1
    assert main(["validate", "properties", "--tolerance-factor", "0"]) == 1
    out = capsys.readouterr().out
    assert "[FAIL]" in out


def test_slice_cli(tmp_path, compare_run):
    run_tmp, scenario, _, _, _ = compare_run
    out = scenario.output_dir

    pgm = tmp_path / "slice.pgm"
    code = main(["slice", str(out / "activation_dual.vol"), "--axis", "z",
                 "--index", "5", "--component", "3", "-o", str(pgm)])
    assert code == 0
    data = pgm.read_bytes()
    assert data.startswith(b"P5\n")
    assert pgm.with_suffix(".csv").exists()

    # EF-norm slice through the contact plane: bright near the leads
    vol = load_volume(out / "activation_dual.vol")
    plane = vol.values[..., 3][:, :, 5]
    corner = plane[0, 0]
    assert plane.max() > 5.0 * max(corner, 1e-12)

    assert main(["slice", str(out / "activation_dual.vol"), "--axis", "z",
                 "--index", "999", "-o", str(pgm)]) == 1


def test_slice_constant_volume_uniform(tmp_path):
    from stimfield.volume import ScalarVolume

    grid = VoxelGrid((4, 4, 4), (1, 1, 1), (0, 0, 0))
    save_volume(ScalarVolume(grid, np.full(grid.dims, 2.5)), tmp_path / "c.vol")
    pgm = tmp_path / "c.pgm"
    assert main(["slice", str(tmp_path / "c.vol"), "--axis", "x", "--index", "1",
                 "-o", str(pgm)]) == 0
    body = pgm.read_bytes().split(b"255\n", 1)[1]
    assert set(body) == {0}
