"""Command line tests: subcommands, exit codes, and the end-to-end pipeline."""

from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest

from vector.cli import main
from vector.dataset import parse_cameras, parse_tracks, serialize
from vector.session import load_session

from conftest import looking_down_pose, make_camera, observe


SYNTH_CONFIG = {
    "n_cameras": 8,
    "n_points": 70,
    "pixel_noise_sigma": 0.4,
    "pose_perturbation": {"rotation_deg": 0.5, "translation_frac": 0.0},
    "seed": 5,
}

OUTLIER_CONFIG = {
    "n_cameras": 12,
    "n_points": 150,
    "pixel_noise_sigma": 0.5,
    "n_outlier_tracks": 5,
    "outlier_magnitude": 50.0,
    "pose_perturbation": {"rotation_deg": 1.0, "translation_frac": 0.0},
    "seed": 0,
}


def write_json(path, doc) -> str:
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def synth_dir(tmp_path):
    """A generated dataset directory: cameras.xml + tracks.xml."""
    config = write_json(tmp_path / "config.json", SYNTH_CONFIG)
    out = tmp_path / "data"
    assert main(["synth", "--config", config, "--out", str(out)]) == 0
    return out


class TestSynth:
    def test_writes_parseable_dataset(self, synth_dir):
        cameras = parse_cameras(str(synth_dir / "cameras.xml"))
        tracks = parse_tracks(str(synth_dir / "tracks.xml"), cameras)
        assert len(cameras) == SYNTH_CONFIG["n_cameras"]
        assert len(tracks) == SYNTH_CONFIG["n_points"]

    def test_same_seed_same_bytes(self, tmp_path):
        config = write_json(tmp_path / "config.json", SYNTH_CONFIG)
        main(["synth", "--config", config, "--out", str(tmp_path / "a")])
        main(["synth", "--config", config, "--out", str(tmp_path / "b")])
        for name in ("cameras.xml", "tracks.xml"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        config = write_json(tmp_path / "config.json", SYNTH_CONFIG)
        main(["synth", "--config", config, "--out", str(tmp_path / "a")])
        main(["synth", "--config", config, "--seed", "99", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "tracks.xml").read_bytes() != (
            tmp_path / "b" / "tracks.xml"
        ).read_bytes()

    def test_outlier_ids_written(self, tmp_path):
        config = write_json(tmp_path / "config.json", OUTLIER_CONFIG)
        out = tmp_path / "data"
        assert main(["synth", "--config", config, "--out", str(out)]) == 0
        ids = (out / "outlier_ids.txt").read_text().split()
        assert len(ids) == OUTLIER_CONFIG["n_outlier_tracks"]

    def test_unreadable_config_is_a_data_error(self, tmp_path):
        assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out", "x"]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["synth", "--config", str(bad), "--out", "x"]) == 2

    def test_infeasible_config_is_a_data_error(self, tmp_path):
        doc = dict(SYNTH_CONFIG, n_outlier_tracks=1000)
        config = write_json(tmp_path / "config.json", doc)
        assert main(["synth", "--config", config, "--out", str(tmp_path / "x")]) == 2

    def test_missing_out_is_a_usage_error(self, tmp_path, capsys):
        assert main(["synth"]) == 1
        assert "required" in capsys.readouterr().err


class TestBa:
    def test_zero_noise_final_cost_is_tiny(self, tmp_path):
        config = write_json(
            tmp_path / "config.json",
            {"n_cameras": 6, "n_points": 40, "pixel_noise_sigma": 0.0, "seed": 2},
        )
        data = tmp_path / "data"
        main(["synth", "--config", config, "--out", str(data)])
        out = tmp_path / "run"
        code = main(
            ["ba", "--cameras", str(data / "cameras.xml"),
             "--tracks", str(data / "tracks.xml"), "--out", str(out)]
        )
        assert code == 0
        session = load_session(str(out / "session.json"))
        assert session.runs[0].final_cost < 1e-12

    def test_writes_final_state_and_session(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        code = main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"), "--out", str(out)]
        )
        assert code == 0
        cameras = parse_cameras(str(out / "cameras.xml"))
        assert all(c.pose_final is not None for c in cameras)
        tracks = parse_tracks(str(out / "tracks.xml"), cameras)
        assert all(t.point_final is not None for t in tracks)
        session = load_session(str(out / "session.json"))
        assert [r.run_id for r in session.runs] == ["run_000"]

    def test_solver_config_file_is_honored(self, synth_dir, tmp_path):
        solver = write_json(tmp_path / "solver.json", {"max_iterations": 1})
        out = tmp_path / "run"
        main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"),
             "--config", solver, "--out", str(out)]
        )
        session = load_session(str(out / "session.json"))
        assert session.runs[0].config.max_iterations == 1
        assert session.runs[0].iterations <= 1

    def test_missing_input_file_is_a_data_error(self, tmp_path):
        code = main(
            ["ba", "--cameras", str(tmp_path / "none.xml"),
             "--tracks", str(tmp_path / "none2.xml"), "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_session_and_files_are_mutually_exclusive(self, synth_dir, tmp_path, capsys):
        code = main(
            ["ba", "--session", "s.json", "--cameras", str(synth_dir / "cameras.xml"),
             "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert "--session" in capsys.readouterr().err

    def test_no_inputs_is_a_usage_error(self, tmp_path):
        assert main(["ba", "--out", str(tmp_path / "o")]) == 1

    def test_cheirality_failure_exits_3(self, tmp_path):
        cams = [
            make_camera("cam_000", looking_down_pose([0.0, 0.0, 10.0])),
            make_camera("cam_001", looking_down_pose([2.0, 0.0, 10.0])),
        ]
        track = observe(cams, [1.0, 0.0, 0.5], "trk_000")
        # Swap the stored point for one behind both cameras.
        track = replace(track, point_initial=np.array([1.0, 0.0, 30.0]))
        from vector.dataset import Dataset

        cam_xml, trk_xml = serialize(Dataset(cameras=tuple(cams), tracks=(track,)))
        (tmp_path / "cameras.xml").write_bytes(cam_xml)
        (tmp_path / "tracks.xml").write_bytes(trk_xml)
        code = main(
            ["ba", "--cameras", str(tmp_path / "cameras.xml"),
             "--tracks", str(tmp_path / "tracks.xml"), "--out", str(tmp_path / "o")]
        )
        assert code == 3


class TestReport:
    def test_report_after_run(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"), "--out", str(out)]
        )
        report_path = tmp_path / "report.json"
        assert main(["report", "--session", str(out / "session.json"),
                     "--out", str(report_path)]) == 0
        doc = json.loads(report_path.read_text())
        assert doc["n_cameras"] == SYNTH_CONFIG["n_cameras"]
        assert doc["rms_final"] < doc["rms_initial"]
        assert len(doc["top_tracks"]) == 10
        assert len(doc["top_images"]) == 8
        assert [r["id"] for r in doc["runs"]] == ["run_000"]
        assert sum(doc["histogram_final"]["counts"]) == doc["n_observations"]

    def test_report_without_runs_has_no_final_figures(self, synth_dir, tmp_path):
        # Build a session file by hand around the raw XMLs.
        from vector.session import open_session, save_session

        session = open_session(
            str(synth_dir / "cameras.xml"), str(synth_dir / "tracks.xml")
        )
        session_path = synth_dir / "session.json"
        save_session(session, str(session_path))
        report_path = tmp_path / "report.json"
        assert main(["report", "--session", str(session_path),
                     "--out", str(report_path)]) == 0
        doc = json.loads(report_path.read_text())
        assert doc["rms_final"] is None
        assert "top_tracks" not in doc
        assert doc["rms_initial"] > 0

    def test_missing_session_is_a_data_error(self, tmp_path):
        assert main(["report", "--session", str(tmp_path / "no.json"),
                     "--out", str(tmp_path / "r.json")]) == 2

    def test_tampered_session_is_a_data_error(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"), "--out", str(out)]
        )
        session_path = out / "session.json"
        doc = json.loads(session_path.read_text())
        doc["base"]["digest"] = "0" * 64
        session_path.write_text(json.dumps(doc))
        assert main(["report", "--session", str(session_path),
                     "--out", str(tmp_path / "r.json")]) == 2


class TestEdit:
    def test_deletions_applied_and_saved(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"), "--out", str(out)]
        )
        tracks = parse_tracks(
            str(synth_dir / "tracks.xml"),
            parse_cameras(str(synth_dir / "cameras.xml")),
        )
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text(f"{tracks[0].id}\n\n{tracks[1].id}\n")
        session_path = str(out / "session.json")
        assert main(["edit", "--session", session_path,
                     "--delete-tracks", str(ids_file)]) == 0
        session = load_session(session_path)
        assert [op.target_id for op in session.edit_log] == [tracks[0].id, tracks[1].id]

    def test_unknown_id_is_a_data_error(self, synth_dir, tmp_path):
        out = tmp_path / "run"
        main(
            ["ba", "--cameras", str(synth_dir / "cameras.xml"),
             "--tracks", str(synth_dir / "tracks.xml"), "--out", str(out)]
        )
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text("no_such_track\n")
        assert main(["edit", "--session", str(out / "session.json"),
                     "--delete-tracks", str(ids_file)]) == 2

    def test_edit_without_id_files_is_a_usage_error(self, tmp_path):
        assert main(["edit", "--session", "s.json"]) == 1


class TestPipeline:
    def test_outlier_removal_halves_rms(self, tmp_path):
        """synth -> ba -> report -> edit -> ba -> report, RMS drop >= 2x."""
        config = write_json(tmp_path / "config.json", OUTLIER_CONFIG)
        data = tmp_path / "data"
        assert main(["synth", "--config", config, "--out", str(data)]) == 0

        run1 = tmp_path / "run1"
        assert main(["ba", "--cameras", str(data / "cameras.xml"),
                     "--tracks", str(data / "tracks.xml"), "--out", str(run1)]) == 0
        report1 = tmp_path / "report1.json"
        assert main(["report", "--session", str(run1 / "session.json"),
                     "--out", str(report1)]) == 0

        session_path = str(run1 / "session.json")
        assert main(["edit", "--session", session_path,
                     "--delete-tracks", str(data / "outlier_ids.txt")]) == 0
        run2 = tmp_path / "run2"
        assert main(["ba", "--session", session_path, "--out", str(run2)]) == 0
        report2 = tmp_path / "report2.json"
        assert main(["report", "--session", session_path, "--out", str(report2)]) == 0

        rms_before = json.loads(report1.read_text())["rms_final"]
        rms_after = json.loads(report2.read_text())["rms_final"]
        assert rms_before / rms_after >= 2.0

        # The second report reflects the post-edit run, not the stale file
        # finals left over from run_000.
        doc2 = json.loads(report2.read_text())
        session = load_session(session_path)
        expected_rms = (session.runs[-1].final_cost / doc2["n_observations"]) ** 0.5
        assert rms_after == pytest.approx(expected_rms, rel=1e-9)
        assert doc2["n_tracks"] == OUTLIER_CONFIG["n_points"] - OUTLIER_CONFIG["n_outlier_tracks"]
        assert [r["id"] for r in doc2["runs"]] == ["run_000", "run_001"]


class TestTopLevel:
    def test_no_subcommand_is_a_usage_error(self, capsys):
        assert main([]) == 1

    def test_unknown_subcommand_is_a_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "invalid choice" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        assert "synth" in out and "serve" in out
