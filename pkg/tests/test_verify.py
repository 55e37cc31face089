"""Verdicts, assertion evaluation, and the bounded repair loop."""

import pytest

from blockmend import fixtures as fixture_lib
from blockmend import vm as vm_mod
from blockmend.builder import change_var, set_var
from blockmend.diagnose import FixOption, diagnose
from blockmend.edits import EditOp, Patch
from blockmend.normalize import normalize
from blockmend.repair import OracleRepairBackend, DisallowedEdit
from blockmend.scenario import Assertion, Scenario, ScenarioError, load_scenario, save_scenario
from blockmend.verify import repair_loop, verify


def test_fanout_fixed_passes_buggy_fails_with_measured_delta():
    scenario = fixture_lib.get_scenario("broadcast_fanout")
    fixed = fixture_lib.build_fixture("broadcast_fanout", fixed=True)[0]
    buggy = fixture_lib.build_fixture("broadcast_fanout")[0]
    assert verify(fixed, [scenario]).passed
    verdict = verify(buggy, [scenario])
    assert not verdict.passed
    delta_results = [r for r in verdict.failed_assertions
                     if r.assertion.kind == "VarChangedBy"]
    assert delta_results and delta_results[0].measured == 3


def test_fail_log_names_assertion_and_counterexample_tick():
    scenario = fixture_lib.get_scenario("missing_reset")
    buggy = fixture_lib.build_fixture("missing_reset")[0]
    verdict = verify(buggy, [scenario])
    assert not verdict.passed
    for r in verdict.failed_assertions:
        assert r.counterexample_tick is not None
        assert r.measured is not None
    assert verdict.log["failed"]


def test_race_flagged_scenario_requires_both_orders():
    scenario = fixture_lib.get_scenario("script_race")
    buggy = fixture_lib.build_fixture("script_race")[0]
    verdict = verify(buggy, [scenario])
    orders = {r["scheduler_order"] for r in verdict.log["runs"]}
    assert orders == {"declaration", "reverse"}


def test_empty_assertions_rejected_at_load(tmp_path):
    scenario = Scenario(name="empty", events=[{"tick": 0, "kind": "flag"}])
    path = tmp_path / "s.json"
    save_scenario(scenario, path)
    with pytest.raises(ScenarioError):
        load_scenario(path, require_assertions=True)
    # plain load (for bare trace runs) is fine
    assert load_scenario(path).name == "empty"


def test_assertion_tick_beyond_max_ticks_rejected():
    with pytest.raises(ScenarioError):
        Scenario(name="bad", events=[],
                 assertions=[Assertion("VarEquals", "x", 0, at_tick=500)],
                 config={"max_ticks": 100})


def test_clone_count_assertion():
    from blockmend.builder import ProjectBuilder, clone_of, flag, repeat

    pb = ProjectBuilder()
    cat = pb.sprite("Cat")
    cat.script(flag(), [repeat(5, [clone_of()])], hat_id="a_spawn")
    project = pb.build()
    scenario = Scenario(
        name="clones", events=[{"tick": 0, "kind": "flag"}],
        assertions=[Assertion("CloneCountAtMost", "Cat", 3)],
        config={"max_ticks": 20})
    verdict = verify(project, [scenario])
    assert not verdict.passed
    assert verdict.failed_assertions[0].measured == 6


class ScriptedBackend:
    """Produces failing patches exactly fail_times, then the good one."""

    def __init__(self, fail_times, good_patch_edits, bad_patch_edits):
        self.fail_times = fail_times
        self.good = good_patch_edits
        self.bad = bad_patch_edits
        self.requests = []

    def propose(self, request):
        self.requests.append(request)
        if len(self.requests) <= self.fail_times:
            return Patch(edits=list(self.bad), budget=3, provenance="bad attempt")
        return Patch(edits=list(self.good), budget=3, provenance="good attempt")


def _reset_patch_edits():
    good = [EditOp("AddHat", "Stage",
                   payload={"hat": __import__("blockmend.builder", fromlist=["flag"]).flag(),
                            "body": (set_var("count", 0),)})]
    bad = [EditOp("AddHat", "Stage",
                  payload={"hat": __import__("blockmend.builder", fromlist=["flag"]).flag(),
                           "body": (set_var("count", 3),)})]
    return good, bad


@pytest.mark.parametrize("fail_times,expect_pass_at", [(0, 1), (1, 2), (4, 5), (5, None)])
def test_retry_protocol_pass_at_k(fail_times, expect_pass_at):
    scenario = fixture_lib.get_scenario("missing_reset")
    norm = normalize(fixture_lib.build_fixture("missing_reset")[0])
    good, bad = _reset_patch_edits()
    backend = ScriptedBackend(fail_times, good, bad)
    repaired, history, pass_at = repair_loop(
        norm, None, FixOption("A", "add a reset script"), [scenario], backend, k=5)
    assert pass_at == expect_pass_at
    expected_len = (expect_pass_at if expect_pass_at else 5)
    assert len(history) == expected_len
    if expect_pass_at is None:
        assert history.entries[-1].verdict.status == "Fail"


def test_failure_logs_flow_into_next_request():
    scenario = fixture_lib.get_scenario("missing_reset")
    norm = normalize(fixture_lib.build_fixture("missing_reset")[0])
    good, bad = _reset_patch_edits()
    backend = ScriptedBackend(1, good, bad)
    _repaired, history, pass_at = repair_loop(
        norm, None, FixOption("A", "add a reset script"), [scenario], backend, k=5)
    assert pass_at == 2
    assert backend.requests[0].failure_log is None
    assert backend.requests[1].failure_log == history.entries[0].verdict.log


class AlwaysDisallowedBackend:
    def __init__(self):
        self.calls = 0

    def propose(self, request):
        self.calls += 1
        raise DisallowedEdit("asked for a new sprite")


def test_exhaustion_after_k_disallowed_attempts():
    scenario = fixture_lib.get_scenario("missing_reset")
    norm = normalize(fixture_lib.build_fixture("missing_reset")[0])
    backend = AlwaysDisallowedBackend()
    repaired, history, pass_at = repair_loop(
        norm, None, FixOption("A", "whatever"), [scenario], backend, k=5)
    assert pass_at is None
    assert repaired is None
    assert backend.calls == 5
    assert len(history) == 5
    assert all(e.failure_log for e in history.entries)


def test_non_regression_symptom_check_blocks_bad_fix():
    """A patch that silences the assertion but keeps the diagnosed symptom fails."""
    scenario = fixture_lib.get_scenario("hide_show_race")
    norm = normalize(fixture_lib.build_fixture("hide_show_race")[0])
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    d = diagnose(norm, trace)
    assert d.evidence[0].kind == "Flicker"
    # a do-nothing patch: tweak one wait to the same period; flicker remains
    noop = [EditOp(
        "TweakLiteral", "Ghost",
        anchor=next(b.id for b in norm.project.target("Ghost").blocks.values()
                    if b.opcode == "control_wait"),
        payload={"new": 0.01})]

    class NoopBackend:
        def propose(self, request):
            return Patch(edits=list(noop), budget=3, provenance="noop")

    _repaired, history, pass_at = repair_loop(
        norm, d, d.option("A"), [scenario], NoopBackend(), k=1)
    assert pass_at is None
    failed_kinds = [r["assertion"] for r in history.entries[-1].verdict.log["failed"]]
    assert any("SymptomAbsent(Flicker" in a for a in failed_kinds)


def test_oracle_loop_passes_motivating_fixtures_first_try():
    backend = OracleRepairBackend()
    for name in ("hide_show_race", "script_race", "broadcast_fanout"):
        scenario = fixture_lib.get_scenario(name)
        norm = normalize(fixture_lib.build_fixture(name)[0])
        trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
        d = diagnose(norm, trace)
        repaired, history, pass_at = repair_loop(
            norm, d, d.option("A"), [scenario], backend, k=5)
        assert pass_at == 1, name
        assert verify(repaired.project, [scenario]).passed


def test_oracle_patch_minimality_on_motivating_fixtures():
    """Dropping any single edit from a passing oracle patch must break it."""
    backend = OracleRepairBackend()
    for name in ("hide_show_race", "script_race", "broadcast_fanout"):
        scenario = fixture_lib.get_scenario(name)
        norm = normalize(fixture_lib.build_fixture(name)[0])
        trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
        d = diagnose(norm, trace)
        repaired, _history, pass_at = repair_loop(
            norm, d, d.option("A"), [scenario], backend, k=5)
        assert pass_at == 1
        edits = repaired.patch.edits
        if len(edits) < 2:
            continue
        from blockmend.edits import apply_patch, PatchApplyError

        for drop in range(len(edits)):
            partial = Patch(edits=[e for i, e in enumerate(edits) if i != drop])
            try:
                candidate = apply_patch(norm, partial)
            except PatchApplyError:
                continue
            assert not verify(candidate.project, [scenario]).passed, (
                "%s: dropping edit %d still passes" % (name, drop))
