"""Archive parsing, serialization, and graph isomorphism."""

import io
import json
import zipfile

import pytest

from blockmend import fixtures as fixture_lib
from blockmend import sb3
from blockmend.builder import ProjectBuilder, change_var, clicked, flag, forever, wait
from blockmend.model import Literal


def _project_json(data):
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        return zf.read("project.json")


def test_empty_stage_round_trip(empty_stage_project):
    data = sb3.serialize_sb3(empty_stage_project)
    again = sb3.parse_sb3(data)
    assert again.load_warnings == []
    assert len(again.targets) == 1
    assert again.targets[0].is_stage
    # canonical serialization is a fixed point byte-for-byte
    assert _project_json(data) == _project_json(sb3.serialize_sb3(again))


def test_flicker_fixture_parses_with_two_broadcasts():
    project = fixture_lib.build_fixture("hide_show_race")[0]
    data = sb3.serialize_sb3(project)
    again = sb3.parse_sb3(data)
    ghost = again.target("Ghost")
    recv_hats = [b for b in ghost.blocks.values()
                 if b.opcode == "event_whenbroadcastreceived"]
    assert len(recv_hats) == 2
    assert sorted(again.broadcasts.values()) == ["hide_force", "show_force"]


def test_not_an_archive():
    with pytest.raises(sb3.NotAnArchive):
        sb3.parse_sb3(b"this is not a zip")


def test_missing_project_json():
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("readme.txt", "hello")
    with pytest.raises(sb3.MissingProjectJson):
        sb3.parse_sb3(buf.getvalue())


def test_malformed_json_carries_entry_name():
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("project.json", "{not json")
    with pytest.raises(sb3.MalformedJson) as exc:
        sb3.parse_sb3(buf.getvalue())
    assert exc.value.entry_name == "project.json"


def test_dangling_next_cleared_with_warning(tiny_project):
    data = sb3.serialize_sb3(tiny_project)
    doc = json.loads(_project_json(data))
    # point one block's next at a nonexistent id
    blocks = doc["targets"][1]["blocks"]
    some_id = sorted(blocks)[0]
    blocks[some_id]["next"] = "gone-forever"
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("project.json", json.dumps(doc))
    again = sb3.parse_sb3(buf.getvalue())
    assert sum("gone-forever" in w for w in again.load_warnings) == 1
    assert again.target("Cat").blocks[some_id].next is None


def test_unknown_broadcast_id_synthesized():
    project = fixture_lib.build_fixture("broadcast_fanout")[0]
    data = sb3.serialize_sb3(project)
    doc = json.loads(_project_json(data))
    doc["targets"][0]["broadcasts"] = {}
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr("project.json", json.dumps(doc))
    again = sb3.parse_sb3(buf.getvalue())
    assert any("synthesized" in w for w in again.load_warnings)
    # the synthesized entry uses the id as its name
    assert all(bid == name for bid, name in again.broadcasts.items())


def test_orphan_script_is_flagged_not_rejected():
    pb = ProjectBuilder()
    pb.stage_var("count", 0)
    cat = pb.sprite("Cat")
    cat.script(clicked(), [change_var("count", 1)], hat_id="a_click")
    project = pb.build()
    # detach the body so the change block becomes a top-level orphan
    target = project.target("Cat")
    body_id = target.blocks["a_click"].next
    target.blocks["a_click"] = target.blocks["a_click"].with_(next=None)
    target.blocks[body_id] = target.blocks[body_id].with_(parent=None, top_level=True)
    again = sb3.parse_sb3(sb3.serialize_sb3(project))
    assert any("orphan script" in w for w in again.load_warnings)


def test_assets_preserved_byte_for_byte():
    project = fixture_lib.build_fixture("wrong_edge_color")[0]
    data = sb3.serialize_sb3(project)
    again = sb3.parse_sb3(data)
    assert again.assets == project.assets


def test_round_trip_isomorphism_all_fixtures():
    for name in fixture_lib.FIXTURES:
        for fixed in (False, True):
            project, meta = fixture_lib.build_fixture(name, fixed=fixed)
            again = sb3.parse_sb3(sb3.serialize_sb3(project), meta=meta)
            result = sb3.graph_isomorphic(project, again)
            assert result, "%s fixed=%s: %s" % (name, fixed, result.difference)


def test_iso_reflexive(tiny_project):
    assert sb3.graph_isomorphic(tiny_project, tiny_project)


def test_iso_reports_changed_literal_input_path():
    a = fixture_lib.build_fixture("script_race")[0]
    b = fixture_lib.build_fixture("script_race")[0]
    cat = b.target("Cat")
    for bid, block in cat.blocks.items():
        if block.opcode == "motion_changexby":
            inputs = dict(block.inputs)
            inputs["DX"] = Literal(-5)
            cat.blocks[bid] = block.with_(inputs=inputs)
    result = sb3.graph_isomorphic(a, b)
    assert not result
    assert "DX" in result.difference


def test_iso_detects_missing_script():
    a = fixture_lib.build_fixture("broadcast_fanout")[0]
    b = fixture_lib.build_fixture("broadcast_fanout", fixed=True)[0]
    assert not sb3.graph_isomorphic(a, b)


def test_permissive_loading_survives_random_damage():
    """Structural damage in valid JSON degrades to warnings, never a crash."""
    from hypothesis import given, settings, strategies as st

    project = fixture_lib.build_fixture("broadcast_fanout")[0]
    base_doc = json.loads(_project_json(sb3.serialize_sb3(project)))

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def damage(data):
        doc = json.loads(json.dumps(base_doc))
        target = data.draw(st.sampled_from(doc["targets"]))
        blocks = target.get("blocks") or {}
        for bid in list(blocks):
            action = data.draw(st.sampled_from(
                ("keep", "drop", "bad_next", "bad_parent", "bad_input")))
            if action == "drop":
                del blocks[bid]
            elif action == "bad_next" and bid in blocks:
                blocks[bid]["next"] = data.draw(st.text(max_size=6))
            elif action == "bad_parent" and bid in blocks:
                blocks[bid]["parent"] = "ghost-" + data.draw(st.text(max_size=4))
            elif action == "bad_input" and bid in blocks:
                blocks[bid].setdefault("inputs", {})["X"] = [2, "missing-block"]
        if data.draw(st.booleans()):
            doc["targets"][0]["broadcasts"] = {}
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            zf.writestr("project.json", json.dumps(doc))
        loaded = sb3.parse_sb3(buf.getvalue())
        from blockmend.model import check_project
        assert check_project(loaded) == []

    damage()
