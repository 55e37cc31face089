"""Instruction grammar, edit-kind ladder, and offline patch lowering."""

import pytest
from hypothesis import given, settings, strategies as st

from blockmend import fixtures as fixture_lib
from blockmend.diagnose import FixOption, FormatViolation
from blockmend.edits import AnchorAmbiguous, AnchorNotFound, EDIT_KINDS
from blockmend.normalize import normalize
from blockmend.repair import (
    DisallowedEdit,
    OracleRepairBackend,
    RepairRequest,
    UnresolvableFix,
    parse_instructions,
    propose_patch,
    render_instructions,
)


def norm_fixture(name, fixed=False):
    return normalize(fixture_lib.build_fixture(name, fixed=fixed)[0])


@pytest.fixture
def single_wait_project():
    from blockmend.builder import ProjectBuilder, flag, forever, show, wait

    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [forever([wait(0.01), show()])], hat_id="a_main")
    return normalize(pb.build())


def test_parse_tweak_literal(single_wait_project):
    edits = parse_instructions(
        "Step 1: Cat - tweak wait literal 0.01 to 0.5 inside forever",
        single_wait_project)
    assert len(edits) == 1
    assert edits[0].kind == "TweakLiteral"
    assert edits[0].payload["new"] == 0.5


def test_parse_accepts_em_dash(single_wait_project):
    edits = parse_instructions(
        "Step 1: Cat — tweak wait literal 0.01 to 0.5",
        single_wait_project)
    assert edits[0].kind == "TweakLiteral"


def test_four_lines_rejected(single_wait_project):
    text = "\n".join("Step %d: Cat - delete forever" % k for k in range(1, 5))
    with pytest.raises(FormatViolation) as exc:
        parse_instructions(text, single_wait_project)
    assert exc.value.line_number == 4


def test_rewrite_request_is_disallowed(single_wait_project):
    with pytest.raises(DisallowedEdit):
        parse_instructions("Step 1: Cat - rewrite all scripts", single_wait_project)


def test_add_sprite_is_disallowed(single_wait_project):
    with pytest.raises(DisallowedEdit):
        parse_instructions("Step 1: Cat - add sprite Enemy", single_wait_project)


def test_overlong_edit_rejected(single_wait_project):
    words = " ".join(["blocks"] * 21)
    with pytest.raises(FormatViolation):
        parse_instructions("Step 1: Cat - delete %s" % words, single_wait_project)


def test_bad_step_numbering_rejected(single_wait_project):
    with pytest.raises(FormatViolation):
        parse_instructions("Step 2: Cat - delete forever", single_wait_project)


def test_anchor_must_resolve(single_wait_project):
    with pytest.raises(AnchorNotFound):
        parse_instructions("Step 1: Cat - delete broadcast(go)", single_wait_project)


def test_ambiguous_anchor_surfaces():
    norm = norm_fixture("hide_show_race")
    with pytest.raises(AnchorAmbiguous):
        parse_instructions("Step 1: Ghost - delete forever", norm)


def test_parse_insert_and_delete_quoted_names():
    norm = norm_fixture("broadcast_fanout")
    edits = parse_instructions(
        'Step 1: Cat1 - insert change_variable(count, 1) inside when_clicked\n'
        'Step 2: Cat1 - delete broadcast("cat caught")',
        norm)
    assert [e.kind for e in edits] == ["InsertBlock", "DeleteBlock"]


def test_parse_add_hat():
    norm = norm_fixture("missing_reset")
    edits = parse_instructions(
        "Step 1: Stage - add hat when_flag_clicked then set_variable(count, 0)", norm)
    assert edits[0].kind == "AddHat"


def test_parse_replace():
    norm = norm_fixture("broadcast_fanout")
    edits = parse_instructions(
        'Step 1: Cat1 - replace broadcast("cat caught") with change_variable(count, 1)',
        norm)
    assert edits[0].kind == "ReplaceBlock"


def test_parse_wrap():
    norm = norm_fixture("cat_movement")
    edits = parse_instructions("Step 1: Cat - wrap change_x in repeat(3)", norm)
    assert edits[0].kind == "WrapBlocks"


@settings(max_examples=80, deadline=None)
@given(extra=st.integers(min_value=4, max_value=8))
def test_line_budget_property(extra):
    norm = norm_fixture("hide_show_race")
    text = "\n".join("Step %d: Ghost - delete show" % k for k in range(1, extra))
    if extra - 1 > 3:
        with pytest.raises(FormatViolation):
            parse_instructions(text, norm)


def test_rendered_instructions_reparse():
    norm = norm_fixture("broadcast_fanout")
    edits = parse_instructions(
        'Step 1: Cat1 - insert change_variable(count, 1) inside when_clicked\n'
        'Step 2: Cat1 - delete broadcast("cat caught")',
        norm)
    rendered = render_instructions(edits)
    reparsed = parse_instructions(rendered, norm)
    assert [e.kind for e in reparsed] == [e.kind for e in edits]


# -- offline lowering -----------------------------------------------------------

def oracle_fix(name, label="A"):
    from blockmend import vm as vm_mod
    from blockmend.diagnose import diagnose

    scenario = fixture_lib.get_scenario(name)
    norm = norm_fixture(name)
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    d = diagnose(norm, trace)
    return norm, d, d.option(label)


def test_propose_uses_sketch_at_attempt_one():
    norm, _d, fix = oracle_fix("broadcast_fanout")
    patch = propose_patch(RepairRequest(fix=fix, project=norm, attempt_index=1))
    assert len(patch.edits) <= 3
    assert patch.provenance.startswith("Step 1:")


def test_attempt_ladder_switches_lowering():
    norm, _d, fix = oracle_fix("no_termination")
    p1 = propose_patch(RepairRequest(fix=fix, project=norm, attempt_index=1))
    p2 = propose_patch(RepairRequest(fix=fix, project=norm, attempt_index=2))
    assert p1.provenance != p2.provenance


def test_new_feature_fix_is_disallowed():
    norm = norm_fixture("broadcast_fanout")
    fix = FixOption("A", "add a new enemy sprite that blocks the player")
    with pytest.raises(DisallowedEdit):
        propose_patch(RepairRequest(fix=fix, project=norm))


def test_sketchless_fix_unresolvable_offline():
    norm = norm_fixture("broadcast_fanout")
    fix = FixOption("A", "think about the design differently")
    with pytest.raises(UnresolvableFix):
        propose_patch(RepairRequest(fix=fix, project=norm))


def test_every_oracle_patch_respects_kind_ladder():
    from blockmend import vm as vm_mod
    from blockmend.diagnose import NoEvidence, diagnose

    backend = OracleRepairBackend()
    for name in fixture_lib.FIXTURES:
        scenario = fixture_lib.get_scenario(name)
        norm = norm_fixture(name)
        trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
        try:
            d = diagnose(norm, trace)
        except NoEvidence:
            continue
        for attempt in (1, 2):
            try:
                patch = backend.propose(RepairRequest(
                    fix=d.option("A"), project=norm, attempt_index=attempt))
            except UnresolvableFix:
                continue
            assert len(patch.edits) <= 3
            for e in patch.edits:
                assert e.kind in EDIT_KINDS


def test_scope_confinement_edited_sprites_are_mentioned():
    """Every sprite an oracle patch edits appears in the diagnosis evidence,
    the bug description, or the fix text."""
    from blockmend import vm as vm_mod
    from blockmend.diagnose import NoEvidence, diagnose

    backend = OracleRepairBackend()
    for name in fixture_lib.FIXTURES:
        scenario = fixture_lib.get_scenario(name)
        norm = norm_fixture(name)
        trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
        try:
            d = diagnose(norm, trace)
        except NoEvidence:
            continue
        fix = d.option("A")
        try:
            patch = backend.propose(RepairRequest(fix=fix, project=norm))
        except (UnresolvableFix, DisallowedEdit):
            continue
        mentioned = d.bug_description + " " + fix.text
        for e in d.evidence:
            mentioned += " " + getattr(e, "sprite", "") + " " + getattr(e, "subject", "")
        for edit in patch.edits:
            assert edit.target_sprite in mentioned, (
                "%s: edit on %s not grounded in diagnosis" % (name, edit.target_sprite))
