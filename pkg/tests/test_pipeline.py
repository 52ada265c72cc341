import json
from pathlib import Path

import numpy as np
import pytest

from layoutslam import config as config_mod
from layoutslam import pipeline as pl
from layoutslam.cli import main
from layoutslam.export import export_map, map_from_dict, map_to_dict
from layoutslam.geometry import Axis, Rect
from layoutslam.solver import LayoutStructure

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def corridor_run():
    cfg = config_mod.load_config("corridor_loop")
    scn = config_mod.build_scenario(cfg)
    sim = pl.simulate(scn)
    solution, artifacts = pl.reconstruct(sim, cfg, "convex")
    return cfg, scn, sim, solution, artifacts


class TestConfig:
    def test_bundled(self):
        assert set(config_mod.bundled_scenarios()) >= {"corridor_loop", "clean_loop", "glass_hall", "replica_hall", "desk_room"}
        for name in config_mod.bundled_scenarios():
            cfg = config_mod.load_config(name)
            assert cfg["schema_version"] == config_mod.SCHEMA_VERSION
            config_mod.build_scenario(cfg)

    def test_unknown_key_named(self):
        cfg = config_mod.load_config("clean_loop")
        cfg["solver"]["muu"] = 0.3
        with pytest.raises(config_mod.ConfigError, match=r"solver\.muu"):
            config_mod.validate_config(cfg)

    def test_wrong_type_named(self):
        cfg = config_mod.load_config("clean_loop")
        cfg["noise"]["range_sigma"] = "loud"
        with pytest.raises(config_mod.ConfigError, match=r"noise\.range_sigma"):
            config_mod.validate_config(cfg)

    def test_missing_required(self):
        with pytest.raises(config_mod.ConfigError, match="schema_version"):
            config_mod.load_config({"name": "x"})

    def test_other_residual_norms_rejected(self):
        cfg = config_mod.load_config("clean_loop")
        cfg["solver"]["residual_norm"] = "linf"
        with pytest.raises(config_mod.ConfigError, match="residual_norm"):
            config_mod.validate_config(cfg)

    def test_missing_file(self):
        with pytest.raises(config_mod.ConfigError, match="no such config"):
            config_mod.load_config("does_not_exist")

    def test_defaults_filled(self):
        cfg = config_mod.load_config("clean_loop")
        assert cfg["solver"]["epsilon"] == 0.02 and cfg["solver"]["mu"] == 0.3 and cfg["solver"]["max_gap"] == 1.0

    def test_random_configs_are_valid(self):
        for seed in range(5):
            cfg = config_mod.load_config(config_mod.random_scenario_config(seed))
            assert cfg["solver"]["delta_mode"] == "noise"


class TestStages:
    def test_ls_stage_has_no_convex_fields(self):
        report = pl.run_pipeline("clean_loop", stage="ls")
        assert report.stage == "ls"
        assert report.hypotheses_considered is None and report.delta is None and report.solver_converged is None
        assert report.drift["convex"] is None and report.drift["least_squares"] is not None

    def test_reg_stage(self):
        report = pl.run_pipeline("clean_loop", stage="reg")
        assert report.residual_least_squares is None
        assert report.final_structures == report.initial_segments

    def test_unknown_stage(self):
        with pytest.raises(ValueError):
            pl.run_pipeline("clean_loop", stage="full")

    def test_stage_error_tagged(self):
        cfg = config_mod.load_config("clean_loop")
        cfg["trajectory"]["waypoints"] = [[30, 30], [31, 30]]
        with pytest.raises(pl.PipelineError, match=r"^\[config\]"):
            pl.run_pipeline(cfg)


class TestDrift:
    def test_perfect_loop(self):
        assert pl.compute_drift([[0, 0, 0], [1, 0, 0], [0, 0, 0]]) == 0.0

    def test_biased_odometry(self):
        bias = np.array([0.003, -0.004, 0.0])
        n = 41
        steps = np.tile([[0.25, 0.0, 0.0]], (20, 1))
        truth = np.vstack([steps, -steps])
        path = pl.integrate([0, 0, 0], truth + bias)
        assert len(path) == n
        assert pl.compute_drift(path) == pytest.approx(np.linalg.norm(bias) * (n - 1))

    def test_open_path(self):
        assert pl.compute_drift([[0, 0, 0], [1, 0, 0]], closed=False) is None

    def test_path_length(self):
        assert pl.path_length([[0, 0, 0], [3, 4, 0], [3, 4, 1]]) == pytest.approx(6.0)


class TestSurfaceDistances:
    def test_cross_axis_rejected(self):
        s = [LayoutStructure(Axis.X, 1, 0.0, [0]), LayoutStructure(Axis.Y, 1, 1.0, [1])]
        with pytest.raises(ValueError):
            pl.surface_distance_check(s, [(0, 1)], [1.0])

    def test_zero_noise_exact(self):
        report = pl.run_pipeline("clean_loop")
        assert report.surface_distances
        assert all(abs(r["delta"]) <= 1e-6 for r in report.surface_distances)

    def test_replica_hall_width(self):
        report = pl.run_pipeline("replica_hall")
        widths = [r for r in report.surface_distances if abs(r["ground_truth"] - 6.48) < 1e-9]
        assert widths
        assert all(abs(r["model"] - 6.48) <= 0.05 for r in widths)
        assert report.drift["convex"] is None  # straight walk, not a loop

    def test_row_fields(self):
        s = [LayoutStructure(Axis.X, 1, 0.0, [0]), LayoutStructure(Axis.X, -1, 4.1, [1])]
        rows = pl.surface_distance_check(s, [(0, 1)], [4.0])
        assert rows[0]["model"] == pytest.approx(4.1)
        assert rows[0]["delta"] == pytest.approx(0.1)
        assert rows[0]["relative_error"] == pytest.approx(0.025)


class TestExport:
    def model(self):
        return [
            LayoutStructure(Axis.X, 1, 0.0, [0, 2], Rect(0.0, 5.0, 0.0, 2.5)),
            LayoutStructure(Axis.Y, -1, 5.0, [1], Rect(0.0, 3.0, 0.0, 2.5)),
            LayoutStructure(Axis.Z, 1, 0.0, [3], None),
        ]

    def test_json_round_trip(self):
        structures, poses = self.model(), np.array([[1.0, 1.0, 1.2], [2.0, 1.0, 1.2]])
        text = export_map(structures, poses, "json")
        back, back_poses = map_from_dict(json.loads(text))
        assert back == structures
        assert np.array_equal(back_poses, poses)
        assert map_to_dict(back, back_poses) == json.loads(text)

    def test_empty_model_svg(self):
        svg = export_map([], [[0, 0, 0], [1, 0, 0], [1, 1, 0]], "svg")
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "<polyline" in svg and "<line" not in svg

    def test_colors(self):
        svg = export_map(self.model(), [[1, 1, 1]], "svg")
        assert svg.count('stroke="red"') == 1 and svg.count('stroke="green"') == 1

    def test_unknown_format(self):
        with pytest.raises(ValueError, match="unknown map format"):
            export_map([], [[0, 0, 0]], "png")

    def test_corridor_golden_svg(self, corridor_run):
        _, _, _, _, artifacts = corridor_run
        svg = export_map(artifacts["structures"], artifacts["positions"], "svg")
        assert svg == (DATA / "corridor_loop_map.svg").read_text()


class TestEndToEnd:
    def test_corridor_matches_ground_truth(self, corridor_run):
        cfg, _, sim, solution, _ = corridor_run
        report = pl.evaluate(sim, solution, cfg)
        assert report.final_structures == report.ground_truth_planes
        assert report.warnings == []

    def test_wall_lengths(self, corridor_run):
        _, scn, _, _, artifacts = corridor_run
        for s in artifacts["structures"]:
            pieces = [p for p in scn.world.planes if p.axis == s.axis and p.facing == s.facing and abs(p.offset - s.offset) < 0.3]
            true_len = max(p.extent.umax for p in pieces) - min(p.extent.umin for p in pieces)
            assert abs(s.extent.width - true_len) <= 0.02 * true_len

    def test_zero_noise_least_squares_residual(self):
        cfg = config_mod.load_config("clean_loop")
        solution, _ = pl.reconstruct(pl.simulate(config_mod.build_scenario(cfg)), cfg, "ls")
        assert solution["least_squares"]["residual"] <= 1e-9

    def test_report_arithmetic(self, corridor_run):
        cfg, _, sim, solution, _ = corridor_run
        r = pl.evaluate(sim, solution, cfg)
        assert r.complexity_reduction == pytest.approx(100 * (1 - r.final_structures / r.initial_segments))
        assert r.hypotheses_accepted <= r.hypotheses_considered
        assert all(v is None or v >= 0 for v in r.drift.values())
        classes = solution["convex"]["classes"]
        assert r.final_structures == r.initial_segments - sum(len(c) - 1 for c in classes)
        assert r.n_frames == len(sim.positions)

    @pytest.mark.parametrize("name", ["corridor_loop", "clean_loop", "desk_room"])
    def test_convex_not_worse_than_least_squares(self, name):
        report = pl.run_pipeline(name)
        assert report.drift["convex"] <= report.drift["least_squares"] + 1e-9

    def test_glass_hall_warns(self):
        report = pl.run_pipeline("glass_hall")
        assert report.warnings
        assert any("likely false" in w for w in report.warnings)

    def test_outputs_written(self, tmp_path):
        pl.run_pipeline("clean_loop", tmp_path)
        for name in pl.OUTPUT_FILES:
            assert (tmp_path / name).is_file()
        assert (tmp_path / "odometry.csv").is_file()
        sim = pl.read_simulation(tmp_path)
        assert sim.n_frames == json.loads((tmp_path / "report.json").read_text())["n_frames"]

    def test_overrides(self):
        cfg = pl.apply_overrides(config_mod.load_config("clean_loop"), seed=7, epsilon=0.05, mu=0.2, max_gap=0.5)
        assert cfg["noise"]["seed"] == 7
        assert (cfg["solver"]["epsilon"], cfg["solver"]["mu"], cfg["solver"]["max_gap"]) == (0.05, 0.2, 0.5)


class TestCli:
    def test_all(self, tmp_path, capsys):
        assert main(["all", "--config", "clean_loop", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "layout segments" in out and "drift" in out
        assert (tmp_path / "report.json").is_file()

    def test_split_commands_match_all(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["all", "--config", "corridor_loop", "--seed", "2", "--out", str(a)]) == 0
        for cmd in ("simulate", "solve", "evaluate"):
            assert main([cmd, "--config", "corridor_loop", "--seed", "2", "--out", str(b)]) == 0
        assert main(["plot", "--out", str(b)]) == 0
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "map.svg").read_bytes() == (b / "map.svg").read_bytes()

    def test_stage_flag(self, tmp_path):
        assert main(["all", "--config", "clean_loop", "--stage", "ls", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["stage"] == "ls" and report["hypotheses_considered"] is None

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        cfg = config_mod.load_config("clean_loop")
        cfg["trajectory"]["stride"] = 2
        path.write_text(json.dumps(cfg))
        assert main(["all", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert "trajectory.stride" in capsys.readouterr().err

    def test_scenarios(self, capsys):
        assert main(["scenarios"]) == 0
        assert "corridor_loop" in capsys.readouterr().out
