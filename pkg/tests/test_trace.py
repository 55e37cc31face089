"""Symptom detectors, keyframe selection, rasterization, trace files."""

from blockmend import fixtures as fixture_lib
from blockmend import vm as vm_mod
from blockmend.raster import Image, keyframes, rasterize
from blockmend.trace import (
    FrameTrace,
    detect_symptoms,
    keyframe_ticks,
    resample,
)


def run_fixture(name, fixed=False):
    scenario = fixture_lib.get_scenario(name)
    project = fixture_lib.build_fixture(name, fixed=fixed)[0]
    return project, vm_mod.run(project, scenario, scenario.vm_config())


def top_symptom(trace, project=None):
    symptoms = detect_symptoms(trace, project)
    return symptoms[0] if symptoms else None


def test_flicker_detected_with_toggle_threshold():
    _p, trace = run_fixture("hide_show_race")
    top = top_symptom(trace)
    assert top is not None and top.kind == "Flicker"
    assert top.evidence["toggles_in_window"] >= 6
    vis = [f.sprite("Ghost").visible for f in trace.frames]
    toggles = sum(1 for i in range(1, len(vis)) if vis[i] != vis[i - 1])
    assert toggles / len(vis) >= 0.25


def test_stuck_variable_on_race_fixture():
    _p, trace = run_fixture("script_race")
    top = top_symptom(trace)
    assert top.kind == "StuckVariable"
    assert top.subject == "Stage:score"
    assert top.evidence["contact_frames"] >= 1


def test_jump_variable_on_fanout_fixture():
    _p, trace = run_fixture("broadcast_fanout")
    top = top_symptom(trace)
    assert top.kind == "JumpVariable"
    assert top.evidence["delta"] == 3


def test_fixed_counterparts_show_no_matching_symptom():
    expected = {"hide_show_race": "Flicker", "script_race": "StuckVariable",
                "broadcast_fanout": "JumpVariable"}
    for name, kind in expected.items():
        project, trace = run_fixture(name, fixed=True)
        kinds = {s.kind for s in detect_symptoms(trace, project)}
        assert kind not in kinds, name


def test_quiescent_trace_yields_nothing(empty_stage_project):
    trace = vm_mod.run(empty_stage_project, [], vm_mod.VmConfig(max_ticks=40))
    assert detect_symptoms(trace) == []


def test_continuous_accrual_and_offstage():
    _p, trace = run_fixture("continuous_accrual")
    kinds = [s.kind for s in detect_symptoms(trace)]
    assert "ContinuousAccrual" in kinds
    _p, trace = run_fixture("wrong_edge_color")
    kinds = [s.kind for s in detect_symptoms(trace)]
    assert "OffStageLoss" in kinds


def test_trace_jsonl_round_trip():
    _p, trace = run_fixture("broadcast_fanout")
    data = trace.to_jsonl()
    again = FrameTrace.from_jsonl(data)
    assert again.to_jsonl() == data
    assert [f.tick for f in again.frames] == [f.tick for f in trace.frames]


def test_frame_ticks_strictly_increasing():
    for name in fixture_lib.FIXTURES:
        _p, trace = run_fixture(name)
        ticks = [f.tick for f in trace.frames]
        assert ticks == sorted(set(ticks))
        assert ticks[0] == 0


def test_resample_identity_at_same_rate():
    _p, trace = run_fixture("hide_show_race")
    again = resample(trace, 30)
    assert again.to_jsonl() == trace.to_jsonl()


def test_keyframes_budget_two_gives_endpoints():
    _p, trace = run_fixture("cat_movement")
    ticks = keyframe_ticks(trace, 2)
    assert ticks == [trace.frames[0].tick, trace.frames[-1].tick]


def test_keyframes_cover_click_and_jump_ticks():
    _p, trace = run_fixture("broadcast_fanout")
    ticks = keyframe_ticks(trace, 4)
    assert {10, 11} <= set(ticks)  # the click tick and the count-jump tick


def test_keyframes_uniform_trace_evenly_spaced(empty_stage_project):
    from blockmend.builder import ProjectBuilder, flag, forever, wait

    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [forever([wait(10)])])
    trace = vm_mod.run(pb.build(), [{"tick": 0, "kind": "flag"}],
                       vm_mod.VmConfig(max_ticks=100))
    ticks = keyframe_ticks(trace, 5)
    assert len(ticks) == 5
    gaps = [b - a for a, b in zip(ticks, ticks[1:])]
    assert max(gaps) - min(gaps) <= max(2, max(gaps) // 2)


def test_rasterize_empty_frame_uniform_background(empty_stage_project):
    trace = vm_mod.run(empty_stage_project, [], vm_mod.VmConfig(max_ticks=3))
    img = rasterize(trace.frames[0], empty_stage_project)
    assert img.pixel(0, 0) == img.pixel(240, 180) == (245, 245, 245)


def test_rasterize_overlap_shows_top_layer():
    project, trace = run_fixture("script_race")
    frame = trace.frames[0]
    img = rasterize(frame, project)
    # Bat (layer above Cat) wins the overlap region around x=8
    assert img.pixel(240 + 8, 180) == (60, 60, 90)
    # Cat-only region to the left
    assert img.pixel(240 - 6, 180) == (230, 140, 40)


def test_rasterize_clamps_corner_sprite():
    from blockmend.builder import ProjectBuilder, flag, goto_xy

    pb = ProjectBuilder()
    cat = pb.sprite("Cat", width=32, height=32, color=(10, 200, 10))
    cat.script(flag(), [goto_xy(240, 180)])
    project = pb.build()
    trace = vm_mod.run(project, [{"tick": 0, "kind": "flag"}], vm_mod.VmConfig(max_ticks=3))
    img = rasterize(trace.frames[-1], project)
    assert img.pixel(479, 0) == (10, 200, 10)
    assert img.pixel(0, 359) != (10, 200, 10)


def test_rasterize_deterministic_bytes():
    project, trace = run_fixture("script_race")
    a = rasterize(trace.frames[5], project).to_ppm()
    b = rasterize(trace.frames[5], project).to_ppm()
    assert a == b
    png_a = rasterize(trace.frames[5], project).to_png()
    png_b = rasterize(trace.frames[5], project).to_png()
    assert png_a == png_b


def test_clone_explosion_symptom():
    from blockmend.builder import ProjectBuilder, clone_of, flag, start_as_clone

    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [clone_of()], hat_id="a_seed")
    cat.script(start_as_clone(), [clone_of()], hat_id="b_grow")
    trace = vm_mod.run(pb.build(), [{"tick": 0, "kind": "flag"}],
                       vm_mod.VmConfig(max_ticks=50, clone_cap=20))
    kinds = [s.kind for s in detect_symptoms(trace)]
    assert "CloneExplosion" in kinds
