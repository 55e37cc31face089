"""Diagnosis: strict grammar, offline oracle, history, prompt assembly."""

import pytest
from hypothesis import given, settings, strategies as st

from blockmend import fixtures as fixture_lib
from blockmend import vm as vm_mod
from blockmend.diagnose import (
    Diagnosis,
    FixOption,
    FormatViolation,
    NoEvidence,
    RetryHistory,
    UserHint,
    build_prompt,
    diagnose,
    parse_diagnosis,
)
from blockmend.normalize import normalize
from blockmend.raster import keyframes


def oracle_inputs(name, fixed=False):
    scenario = fixture_lib.get_scenario(name)
    project = fixture_lib.build_fixture(name, fixed=fixed)[0]
    norm = normalize(project)
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    return norm, trace


# -- strict two-line grammar ---------------------------------------------------

def test_parse_minimal_conforming():
    d = parse_diagnosis(
        "Bug description: score never updates\n"
        "Fix options: A-merge scripts, B-use broadcast")
    assert d.bug_description == "score never updates"
    assert [o.label for o in d.fix_options] == ["A", "B"]


def test_parse_three_options_with_commas_inside():
    d = parse_diagnosis(
        "Bug description: clicks over-count\n"
        "Fix options: A-move the change, drop the broadcast, B-guard receivers, C-reset first")
    assert [o.label for o in d.fix_options] == ["A", "B", "C"]
    assert d.option("A").text == "move the change, drop the broadcast"


def test_three_lines_rejected_at_line_three():
    with pytest.raises(FormatViolation) as exc:
        parse_diagnosis("Bug description: x\nFix options: A-a, B-b\nextra line")
    assert exc.value.line_number == 3


def test_one_line_rejected():
    with pytest.raises(FormatViolation):
        parse_diagnosis("Bug description: lonely")


def test_duplicate_labels_rejected():
    with pytest.raises(FormatViolation):
        parse_diagnosis("Bug description: x\nFix options: A-first, A-second")


def test_out_of_order_labels_rejected():
    with pytest.raises(FormatViolation):
        parse_diagnosis("Bug description: x\nFix options: B-first, A-second")


def test_missing_prefix_rejected():
    with pytest.raises(FormatViolation):
        parse_diagnosis("Bug: x\nFix options: A-a, B-b")


def test_overlong_option_rejected():
    long_text = " ".join(["word"] * 31)
    with pytest.raises(FormatViolation):
        parse_diagnosis("Bug description: x\nFix options: A-%s, B-b" % long_text)


_word = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1, max_size=8)
_phrase = st.lists(_word, min_size=1, max_size=6).map(" ".join)


@settings(max_examples=120, deadline=None)
@given(bug=_phrase, opts=st.lists(_phrase, min_size=2, max_size=3))
def test_grammar_accepts_exactly_conforming_strings(bug, opts):
    labels = "ABC"
    line2 = ", ".join("%s-%s" % (labels[i], text) for i, text in enumerate(opts))
    d = parse_diagnosis("Bug description: %s\nFix options: %s" % (bug, line2))
    assert d.bug_description == bug
    assert len(d.fix_options) == len(opts)


@settings(max_examples=120, deadline=None)
@given(bug=_phrase, opts=st.lists(_phrase, min_size=2, max_size=3),
       perturb=st.sampled_from(["extra_line", "dup_label", "no_options", "bad_prefix"]))
def test_grammar_rejects_perturbations(bug, opts, perturb):
    labels = "ABC"
    line2 = ", ".join("%s-%s" % (labels[i], text) for i, text in enumerate(opts))
    text = "Bug description: %s\nFix options: %s" % (bug, line2)
    if perturb == "extra_line":
        text += "\nand one more thing"
    elif perturb == "dup_label":
        text = text.replace("B-", "A-", 1)
    elif perturb == "no_options":
        text = text.splitlines()[0]
    else:
        text = text.replace("Bug description:", "Diagnosis:", 1)
    with pytest.raises(FormatViolation):
        parse_diagnosis(text)


# -- offline oracle -------------------------------------------------------------

def test_flicker_diagnosis_shape():
    norm, trace = oracle_inputs("hide_show_race")
    d = diagnose(norm, trace)
    assert "flicker" in d.bug_description.lower() or "toggling" in d.bug_description.lower()
    assert 2 <= len(d.fix_options) <= 3
    assert d.option("A").sketch
    parse_diagnosis(d.two_line())


def test_fanout_diagnosis_names_fanout():
    norm, trace = oracle_inputs("broadcast_fanout")
    d = diagnose(norm, trace)
    assert "broadcast" in d.bug_description.lower()
    assert d.option("A").sketch


def test_clean_project_gives_no_evidence():
    norm, trace = oracle_inputs("hide_show_race", fixed=True)
    with pytest.raises(NoEvidence):
        diagnose(norm, trace)


def test_oracle_deterministic():
    norm, trace = oracle_inputs("script_race")
    a = diagnose(norm, trace)
    b = diagnose(norm, trace)
    assert a.two_line() == b.two_line()


def test_rejected_description_not_repeated():
    norm, trace = oracle_inputs("script_race")
    history = RetryHistory()
    first = diagnose(norm, trace, history)
    history.record_rejection(first, UserHint(text="that is not it"))
    second = diagnose(norm, trace, history)
    assert second.bug_description != first.bug_description


def test_rejected_option_text_never_reemitted():
    norm, trace = oracle_inputs("broadcast_fanout")
    history = RetryHistory()
    first = diagnose(norm, trace, history)
    rejected = first.option("A").text
    history.record_rejection(first, UserHint(text="no", rejected_options=(rejected,)))
    second = diagnose(norm, trace, history)
    assert all(o.text != rejected for o in second.fix_options)


def test_history_is_append_only_and_monotonic():
    history = RetryHistory()
    assert len(history) == 0
    d = Diagnosis("bug one", [FixOption("A", "fix it"), FixOption("B", "other way")])
    history.record_rejection(d, UserHint(text="nope"))
    history.record_attempt(1, d.fix_options[0], None, None, failure_log={"error": "x"})
    assert len(history) == 2
    assert [e.attempt_index for e in history.entries] == [1, 2]


# -- prompt bundle ---------------------------------------------------------------

def make_bundle(history=None, hint=None):
    norm, trace = oracle_inputs("broadcast_fanout")
    frames = keyframes(trace, norm.project, 4)
    return build_prompt(norm, frames, history=history, hint=hint)


def test_prompt_contains_project_and_frames():
    bundle = make_bundle()
    assert "Strict output: exactly 2 lines." in bundle.system_text
    assert any("Project JSON:" in t for t in bundle.text_parts())
    images = [p for p in bundle.parts if p["kind"] == "image_png_b64"]
    assert len(images) == 4


def test_prompt_omits_history_when_empty():
    bundle = make_bundle(history=RetryHistory())
    assert not any("Attempt history" in t for t in bundle.text_parts())


def test_prompt_quotes_rejected_fix():
    history = RetryHistory()
    d = Diagnosis("bug", [FixOption("A", "do the thing"), FixOption("B", "alternative")])
    history.record_rejection(d, UserHint(text="try again"))
    bundle = make_bundle(history=history)
    joined = "\n".join(bundle.text_parts())
    assert "Previously rejected" in joined
    assert '"do the thing"' in joined


def test_prompt_taxonomy_byte_stable():
    a = make_bundle().system_text
    b = make_bundle().system_text
    assert a == b
    assert "Bug taxonomy" in a
