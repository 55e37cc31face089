"""CLI commands and exit codes."""

import json
import os

import pytest

from blockmend import fixtures as fixture_lib
from blockmend.cli import main


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    fixture_lib.write_all(str(root))
    return root


def path_of(fixture_dir, name, variant="buggy"):
    return str(fixture_dir / name / ("%s.sb3" % variant))


def scenario_of(fixture_dir, name):
    return str(fixture_dir / name / "scenario.json")


def test_inspect_prints_findings(fixture_dir, capsys):
    code = main(["inspect", path_of(fixture_dir, "broadcast_fanout")])
    out = capsys.readouterr().out
    assert code == 0
    assert "GlobalBroadcastFanout" in out


def test_run_writes_trace_and_frames(fixture_dir, tmp_path, capsys):
    trace_path = tmp_path / "out.jsonl"
    frames_dir = tmp_path / "frames"
    code = main(["run", path_of(fixture_dir, "hide_show_race"),
                 "--scenario", scenario_of(fixture_dir, "hide_show_race"),
                 "--trace", str(trace_path), "--frames", str(frames_dir),
                 "--budget", "4"])
    assert code == 0
    assert trace_path.exists()
    pngs = list(frames_dir.glob("frame_*.png"))
    assert len(pngs) == 4
    out = capsys.readouterr().out
    assert "Flicker" in out


def test_diagnose_prints_two_line_format(fixture_dir, capsys):
    code = main(["diagnose", path_of(fixture_dir, "script_race"),
                 "--scenario", scenario_of(fixture_dir, "script_race")])
    out = capsys.readouterr().out.strip().splitlines()
    assert code == 0
    assert out[-2].startswith("Bug description: ")
    assert out[-1].startswith("Fix options: A-")


def test_diagnose_clean_project_reports_no_evidence(fixture_dir, capsys):
    code = main(["diagnose", path_of(fixture_dir, "script_race", "fixed"),
                 "--scenario", scenario_of(fixture_dir, "script_race")])
    assert code == 0
    assert "NoEvidence" in capsys.readouterr().out


def test_repair_invalid_fix_label_is_usage_error(fixture_dir):
    with pytest.raises(SystemExit) as exc:
        main(["repair", path_of(fixture_dir, "hide_show_race"),
              "--scenario", scenario_of(fixture_dir, "hide_show_race"),
              "--fix", "Z"])
    assert exc.value.code == 2


def test_repair_writes_fixed_and_patches(fixture_dir, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = main(["repair", path_of(fixture_dir, "broadcast_name_mismatch"),
                 "--scenario", scenario_of(fixture_dir, "broadcast_name_mismatch"),
                 "--fix", "A", "--out", str(out_dir)])
    assert code == 0
    assert (out_dir / "fixed_1.sb3").exists()
    assert (out_dir / "patch_1.txt").exists()
    assert "pass@1" in capsys.readouterr().out


def test_pipeline_non_interactive_exit_codes(fixture_dir, tmp_path, capsys):
    code = main(["pipeline", path_of(fixture_dir, "broadcast_fanout"),
                 "--scenario", scenario_of(fixture_dir, "broadcast_fanout"),
                 "--non-interactive", "--auto-fix", "A", "--out", str(tmp_path / "w")])
    assert code == 0
    assert "pass@1" in capsys.readouterr().out


def test_pipeline_interactive_reject_then_select(fixture_dir, tmp_path, capsys,
                                                 monkeypatch):
    answers = iter(["n", "the count jumps by three", "y", "A"])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
    code = main(["pipeline", path_of(fixture_dir, "broadcast_fanout"),
                 "--scenario", scenario_of(fixture_dir, "broadcast_fanout"),
                 "--out", str(tmp_path / "w2")])
    out = capsys.readouterr().out
    assert code == 0
    assert out.count("Bug description:") == 2  # re-diagnosed after the hint
    assert "pass@" in out


def test_missing_input_file_is_input_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["inspect", str(tmp_path / "nope.sb3")])
    assert exc.value.code == 3


def test_remote_backend_unreachable_is_exit_4(fixture_dir, monkeypatch):
    monkeypatch.setenv("BLOCKMEND_ENDPOINT", "http://127.0.0.1:1/never")
    monkeypatch.setenv("BLOCKMEND_TIMEOUT", "1")
    code = main(["diagnose", path_of(fixture_dir, "script_race"),
                 "--scenario", scenario_of(fixture_dir, "script_race"),
                 "--backend", "remote"])
    assert code == 4


def test_verify_command(fixture_dir, capsys):
    code = main(["verify", path_of(fixture_dir, "missing_reset", "fixed"),
                 "--scenario", scenario_of(fixture_dir, "missing_reset")])
    assert code == 0
    code = main(["verify", path_of(fixture_dir, "missing_reset"),
                 "--scenario", scenario_of(fixture_dir, "missing_reset")])
    assert code == 1


def test_fixtures_command(tmp_path, capsys):
    code = main(["fixtures", str(tmp_path / "fx")])
    assert code == 0
    assert (tmp_path / "fx" / "wrong_edge_color" / "buggy.sb3").exists()
    assert (tmp_path / "fx" / "wrong_edge_color" / "fixture.meta.json").exists()


def test_config_file_feeds_backend_settings(fixture_dir, tmp_path, capsys):
    cfg = tmp_path / "bm.json"
    cfg.write_text(json.dumps({
        "backend": {"endpoint": "http://127.0.0.1:1/never", "timeout": 1}}))
    code = main(["diagnose", path_of(fixture_dir, "script_race"),
                 "--scenario", scenario_of(fixture_dir, "script_race"),
                 "--backend", "remote", "--config", str(cfg)])
    assert code == 4  # endpoint came from the file and is unreachable
