import numpy as np
import pytest

from uwbanchor.anchorplanner import build_info_matrix, det_info
from uwbanchor.errors import ConfigError
from uwbanchor.geometry3d import so3_exp
from uwbanchor.harness.report import (
    CSV_COLUMNS,
    PLANNER_COLUMNS,
    export_results,
    format_comparison,
    format_summary,
    read_csv,
)
from uwbanchor.harness.runner import compare, compute_rmse, monte_carlo, run_scenario
from uwbanchor.harness.scenario import (
    FilterModel,
    MotionModel,
    NoiseModel,
    Segment,
    canonical_scenario,
    dump_scenario,
    load_scenario,
    parse_scenario,
)


def _short(mobile=True, duration=2.0, **update):
    cfg = canonical_scenario(mobile=mobile)
    return cfg.model_copy(update={"duration": duration, **update})


@pytest.fixture(scope="module")
def short_run():
    return run_scenario(_short())


class TestRmse:
    def test_identical(self):
        p = np.random.default_rng(0).normal(size=(10, 3))
        R = np.array([so3_exp(v) for v in p])
        assert compute_rmse(p, p, p, p, R, R) == (0.0, 0.0, 0.0)

    def test_345_offset(self):
        z = np.zeros((7, 3))
        I = np.repeat(np.eye(3)[None], 7, axis=0)
        pos, vel, att = compute_rmse(z + [0.3, 0.4, 0], z, z, z, I, I)
        assert pos == pytest.approx(0.5, abs=1e-15)
        assert vel == 0.0

    def test_fixed_attitude_error(self):
        z = np.zeros((5, 3))
        I = np.repeat(np.eye(3)[None], 5, axis=0)
        R = np.repeat(so3_exp([0.1, 0, 0])[None], 5, axis=0)
        assert compute_rmse(z, z, z, z, R, I)[2] == pytest.approx(5.729577951308232, rel=1e-12)

    def test_length_mismatch(self):
        I = np.repeat(np.eye(3)[None], 3, axis=0)
        with pytest.raises(ValueError):
            compute_rmse(np.zeros((3, 3)), np.zeros((4, 3)), np.zeros((3, 3)),
                         np.zeros((3, 3)), I, I)


class TestRunScenario:
    def test_noiseless_hover_converges(self):
        # sensors are perfect; the filter keeps nominal noise assumptions
        cfg = _short(mobile=False, duration=10.0,
                     noise=NoiseModel(sigma_accel=0.0, sigma_gyro=0.0, sigma_range=0.0),
                     motion=MotionModel(position=(0.0, 0.0, 1.0)),
                     filter=FilterModel(init_pos_var=0.25, init_vel_var=0.1, init_att_var=0.01,
                                        sigma_accel=0.5, sigma_gyro=0.01, sigma_range=0.01))
        res = run_scenario(cfg)
        assert np.linalg.norm(res.est_pos[0] - res.true_pos[0]) > 0.05
        assert np.linalg.norm(res.est_pos[-1] - res.true_pos[-1]) < 1e-3

    def test_fixed_network_never_moves(self):
        cfg = _short(mobile=False)
        res = run_scenario(cfg)
        assert res.planner_trace == []
        anchors = cfg.anchor_list()
        standoff = cfg.planner.standoff
        for k in range(0, len(res.t), 97):
            expect = det_info(build_info_matrix(res.est_pos[k], anchors, standoff))
            assert res.det[k] == pytest.approx(expect, rel=1e-12)

    def test_mobile_anchor_moves_in_plane(self, short_run):
        track = short_run.anchor_track
        assert np.linalg.norm(track[-1] - track[0]) > 0.1
        np.testing.assert_array_equal(track[:, 2], track[0, 2])

    def test_series_lengths(self, short_run):
        n = 2.0 * 500 + 1
        for arr in (short_run.t, short_run.est_pos, short_run.std, short_run.det,
                    short_run.nees_pos, short_run.anchor_track):
            assert len(arr) == n
        assert len(short_run.planner_trace) == 20
        assert short_run.n_updates == 160
        assert all(v >= 0 for v in short_run.rmse)

    def test_segments_motion(self):
        cfg = _short(mobile=False, duration=1.0, motion=MotionModel(
            type="segments", position=(0, 0, 1), velocity=(0.1, 0, 0),
            segments=[Segment(duration=0.5, accel=(0, 0.2, 0))]))
        res = run_scenario(cfg)
        np.testing.assert_allclose(res.true_vel[-1], [0.1, 0.1, 0], atol=1e-12)
        np.testing.assert_allclose(res.true_pos[-1], [0.1, 0.075, 1.0], atol=1e-3)

    def test_rates_above_imu_rejected(self):
        data = _short().model_dump()
        data["rates"] = {"imu": 50.0, "ranging": 80.0, "planner": 10.0}
        with pytest.raises(ConfigError):
            run_scenario(parse_scenario(data))

    def test_filter_needs_positive_range_noise(self):
        cfg = _short(noise=NoiseModel(sigma_range=0.0))
        with pytest.raises(ConfigError, match="sigma_range"):
            run_scenario(cfg)

    def test_filter_noise_defaults_to_sensor_noise(self):
        cfg = _short(noise=NoiseModel(sigma_accel=0.3, sigma_range=0.1),
                     filter=FilterModel(sigma_range=0.02))
        fc = cfg.filter_config()
        assert fc.sigma_accel == 0.3
        assert fc.range_var == pytest.approx(0.02 ** 2)

    def test_deterministic(self):
        a, b = run_scenario(_short(duration=1.0)), run_scenario(_short(duration=1.0))
        assert a.est_pos.tobytes() == b.est_pos.tobytes()
        assert a.std.tobytes() == b.std.tobytes()
        c = run_scenario(_short(duration=1.0, seed=1))
        assert a.est_pos.tobytes() != c.est_pos.tobytes()


class TestExport:
    def test_round_trip_and_shape(self, short_run, tmp_path):
        paths = export_results(short_run, tmp_path)
        with open(paths["trajectory"]) as fh:
            assert fh.readline().strip() == ",".join(CSV_COLUMNS)
        data = read_csv(paths["trajectory"])
        assert len(data["t"]) == 2.0 * 500 + 1
        np.testing.assert_array_equal(data["x"], short_run.est_pos[:, 0])
        np.testing.assert_array_equal(data["svz"], short_run.std[:, 5])
        np.testing.assert_array_equal(data["det"], short_run.det)
        np.testing.assert_array_equal(data["anchor_y"], short_run.anchor_track[:, 1])
        assert "position [m]" in paths["summary"].read_text()

    def test_det_column_matches_planner_trace(self, short_run, tmp_path):
        paths = export_results(short_run, tmp_path)
        traj = read_csv(paths["trajectory"])
        plan = read_csv(paths["planner"])
        assert list(plan) == PLANNER_COLUMNS
        idx = np.searchsorted(traj["t"], plan["t"])
        np.testing.assert_array_equal(traj["t"][idx], plan["t"])
        np.testing.assert_array_equal(traj["det"][idx], plan["det"])
        assert np.all(np.isfinite(plan["grad_norm"]))

    def test_byte_identical_on_repeat(self, tmp_path):
        for d in ("a", "b"):
            export_results(run_scenario(_short(duration=1.0)), tmp_path / d)
        for name in ("trial.csv", "trial_planner.csv", "trial_summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unwritable_destination(self, short_run, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            export_results(short_run, blocker / "sub")


class TestMonteCarlo:
    def test_single_trial_equals_run(self):
        cfg = _short(duration=1.0, seed=3)
        s = monte_carlo(cfg, 1)
        res = run_scenario(cfg)
        assert s.completed == 1 and s.n_failed == 0
        assert s.mean["rmse_pos"] == res.rmse_pos
        assert s.mean["rmse_att"] == res.rmse_att
        assert s.std["rmse_vel"] == 0.0

    def test_deterministic_and_seeded_per_trial(self):
        cfg = _short(duration=0.5)
        a, b = monte_carlo(cfg, 3), monte_carlo(cfg, 3)
        assert a.per_trial == b.per_trial
        assert len(set(a.per_trial["rmse_pos"])) == 3
        assert a.per_trial["rmse_pos"][2] == run_scenario(cfg.with_seed(2)).rmse_pos
        assert "3/3 trials" in format_summary(a)

    def test_compare_uses_common_random_numbers(self):
        mob, fix = _short(duration=0.5), _short(mobile=False, duration=0.5)
        c = compare(mob, fix, 2)
        # identical anchors at t=0 and the planner acting only from the first tick:
        # before the anchor moves, both configs see the same noise and estimates
        r_m, r_f = run_scenario(mob), run_scenario(fix)
        k = 49  # last step before the first planner tick at 0.1 s
        assert r_m.est_pos[k].tobytes() == r_f.est_pos[k].tobytes()
        assert set(c.diff_pct) == {"rmse_pos", "rmse_vel", "rmse_att"}
        assert "common-random-number" in format_comparison(c)

    def test_rejects_zero_trials(self):
        with pytest.raises(ConfigError):
            monte_carlo(_short(), 0)


class TestScenarioFiles:
    def test_round_trip(self, tmp_path):
        cfg = canonical_scenario()
        p = tmp_path / "s.yaml"
        p.write_text(dump_scenario(cfg))
        assert load_scenario(p) == cfg

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "s.yaml"
        p.write_text(dump_scenario(canonical_scenario()) + "colour: blue\n")
        with pytest.raises(ConfigError, match="colour"):
            load_scenario(p)

    def test_nested_unknown_key_rejected(self):
        data = canonical_scenario().model_dump()
        data["noise"]["sigma_baro"] = 1.0
        with pytest.raises(ConfigError):
            parse_scenario(data)

    @pytest.mark.parametrize("patch", [
        {"anchors": []},
        {"duration": 0},
        {"rates": {"imu": -1}},
        {"anchors": [{"id": 0, "position": [0, 0, 0]}, {"id": 0, "position": [1, 0, 0]}]},
    ])
    def test_invalid_rejected(self, patch):
        data = canonical_scenario().model_dump()
        data.update(patch)
        with pytest.raises(ConfigError):
            parse_scenario(data)

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "missing.yaml")
        p = tmp_path / "bad.yaml"
        p.write_text("[1, 2")
        with pytest.raises(ConfigError):
            load_scenario(p)
        p.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_scenario(p)

    def test_canonical_layout(self):
        mob, fix = canonical_scenario(True), canonical_scenario(False)
        assert mob.has_mobile and not fix.has_mobile
        assert [a.position for a in mob.anchors] == [a.position for a in fix.anchors]
        assert all(a.position[2] == 0.0 for a in mob.anchors[:4])
        assert mob.with_fixed_anchors().anchors == fix.anchors
        with pytest.raises(ConfigError):
            canonical_scenario(motion="loop")
