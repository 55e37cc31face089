"""Static detectors and the taxonomy routing audit."""

from blockmend import fixtures as fixture_lib
from blockmend import taxonomy
from blockmend.builder import (
    ProjectBuilder,
    broadcast,
    change_var,
    clicked,
    clone_of,
    eq,
    flag,
    forever,
    lt,
    receive,
    repeat,
    say,
    start_as_clone,
    t,
    wait_until,
)
from blockmend.lint import DETECTORS, analyze
from blockmend.normalize import normalize
from blockmend.trace import SYMPTOM_KINDS


def detectors_for(project):
    return [f.detector for f in analyze(normalize(project))]


def test_empty_project_clean(empty_stage_project):
    assert analyze(normalize(empty_stage_project)) == []


def test_fanout_finding_names_listeners():
    project = fixture_lib.build_fixture("broadcast_fanout")[0]
    findings = analyze(normalize(project))
    fan = [f for f in findings if f.detector == "GlobalBroadcastFanout"]
    assert len(fan) == 1
    assert len(fan[0].block_ids) == 3
    assert "3 sprites" in fan[0].explanation


def test_broadcast_name_mismatch_names_both_sides():
    project = fixture_lib.build_fixture("broadcast_name_mismatch")[0]
    findings = analyze(normalize(project))
    msg = [f for f in findings if f.detector == "MessageNeverReceived"]
    assert len(msg) == 1
    assert len(msg[0].block_ids) == 2  # sender block and receiver hat
    assert msg[0].fix_sketch


def test_receiver_with_no_sender_flagged():
    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(receive("never sent"), [say("hi")], hat_id="a_recv")
    findings = analyze(normalize(pb.build()))
    assert any(f.detector == "MessageNeverReceived" and "never gets" in f.explanation
               for f in findings)


def test_variable_name_mismatch_suggests_retarget():
    project = fixture_lib.build_fixture("name_mismatch")[0]
    findings = analyze(normalize(project))
    w = [f for f in findings if f.detector == "VariableWrittenNeverRead"]
    assert len(w) == 1
    assert "'Count'" in w[0].explanation
    assert w[0].fix_sketch
    assert w[0].fix_sketch[0].payload["new"] == "count"


def test_missing_reset_detected_and_suggests_hat():
    project = fixture_lib.build_fixture("missing_reset")[0]
    findings = analyze(normalize(project))
    m = [f for f in findings if f.detector == "MissingResetScript"]
    assert len(m) == 1
    assert m[0].fix_sketch[0].kind == "AddHat"


def test_missing_termination_detected():
    project = fixture_lib.build_fixture("no_termination")[0]
    assert "MissingTermination" in detectors_for(project)


def test_recursive_cloning_detected():
    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [clone_of()], hat_id="a_seed")
    cat.script(start_as_clone(), [clone_of()], hat_id="b_grow")
    assert "RecursiveCloning" in detectors_for(pb.build())


def test_forever_inside_repeat_detected():
    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [repeat(10, [forever([say("stuck")])])], hat_id="a_loop")
    assert "ForeverInsideLoop" in detectors_for(pb.build())


def test_comparing_literals_detected():
    pb = ProjectBuilder()
    pb.stage_var("x", 0)
    cat = pb.sprite("Cat")
    cat.script(flag(), [wait_until(lt(1, 2))], hat_id="a_wait")
    assert "ComparingLiterals" in detectors_for(pb.build())


def test_custom_block_with_forever_detected():
    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [say("main")], hat_id="a_main")
    project = pb.build()
    target = project.target("Cat")
    from blockmend.model import Block, BlockRef

    target.blocks["def1"] = Block(id="def1", opcode="procedures_definition",
                                  next="loop1", top_level=True)
    target.blocks["loop1"] = Block(id="loop1", opcode="control_forever", parent="def1")
    assert "CustomBlockWithForever" in detectors_for(project)


def test_no_working_scripts_detected():
    pb = ProjectBuilder()
    pb.sprite("Cat")
    project = pb.build()
    target = project.target("Cat")
    from blockmend.model import Block

    target.blocks["stray"] = Block(id="stray", opcode="looks_show", top_level=True)
    assert "NoWorkingScripts" in detectors_for(project)


def test_zero_false_positives_on_fixed_suite():
    for name in fixture_lib.FIXTURES:
        project = fixture_lib.build_fixture(name, fixed=True)[0]
        findings = analyze(normalize(project))
        assert findings == [], "%s: %s" % (name, [f.detector for f in findings])


def test_analyze_is_total_on_damaged_projects():
    project = fixture_lib.build_fixture("broadcast_fanout")[0]
    target = project.target("Cat1")
    # damage: clear fields and inputs on every block
    for bid, block in list(target.blocks.items()):
        target.blocks[bid] = block.with_(fields={}, inputs={})
    analyze(normalize(project))  # must not raise


def test_taxonomy_audit_is_sound():
    assert taxonomy.audit(DETECTORS, SYMPTOM_KINDS) == []


def test_taxonomy_audit_catches_gaps():
    problems = taxonomy.audit(DETECTORS - {"MessageNeverReceived"}, SYMPTOM_KINDS)
    assert problems
    problems = taxonomy.audit(DETECTORS, ())
    assert problems


def test_every_row_routed():
    for row in taxonomy.ROWS:
        assert row in taxonomy.ROUTES
