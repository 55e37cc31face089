"""Diagnosis: fuse trace symptoms, static findings, hints, and history into
exactly one bug description plus two or three labeled fix options.

Two interchangeable backends exist: the offline rule oracle in this module
(a pure function of its inputs) and the remote HTTP backend in backends.py.
Both produce the same strict two-line output format, parsed by
parse_diagnosis():

    Bug description: <brief>
    Fix options: A-<fix>, B-<fix>, C-<fix or omit>
"""

from dataclasses import dataclass, field, replace
import base64
import json
import re

from .builder import eq, hide, if_, set_var, stop, touching, varr, change_var, flag
from .edits import EditOp, Locator
from .lint import analyze
from .model import BlockRef, Literal
from .trace import detect_symptoms


class DiagnoseError(Exception):
    pass


class BackendUnavailable(DiagnoseError):
    pass


class NoEvidence(DiagnoseError):
    """The offline oracle found no symptoms and no findings; it will not guess."""


class FormatViolation(DiagnoseError):
    def __init__(self, message, line_number=None, line=""):
        super().__init__(message)
        self.line_number = line_number
        self.line = line


MAX_OPTION_WORDS = 30


@dataclass(frozen=True)
class FixOption:
    label: str
    text: str
    sketch: tuple = ()          # EditOps; the oracle's direct lowering
    alternates: tuple = ()      # later-attempt lowerings, tried in order
    template_key: str = ""

    def __post_init__(self):
        if self.label not in ("A", "B", "C"):
            raise DiagnoseError("fix option label must be A, B, or C")
        if not self.text.strip():
            raise DiagnoseError("fix option text must be nonempty")
        if len(self.text.split()) > MAX_OPTION_WORDS:
            raise DiagnoseError("fix option text exceeds %d words" % MAX_OPTION_WORDS)

    def sketch_ladder(self):
        ladder = [self.sketch] if self.sketch else []
        ladder.extend(alt for alt in self.alternates if alt)
        return ladder


@dataclass
class Diagnosis:
    bug_description: str
    fix_options: list
    backend: str = "oracle"
    evidence: tuple = ()

    def __post_init__(self):
        if "\n" in self.bug_description or not self.bug_description.strip():
            raise DiagnoseError("bug description must be one nonempty line")
        labels = [o.label for o in self.fix_options]
        if not 2 <= len(labels) <= 3:
            raise DiagnoseError("a diagnosis carries 2 or 3 fix options, got %d" % len(labels))
        if labels != ["A", "B", "C"][:len(labels)]:
            raise DiagnoseError("fix option labels must be A, B then C in order")

    def option(self, label):
        for o in self.fix_options:
            if o.label == label:
                return o
        return None

    def two_line(self):
        opts = ", ".join("%s-%s" % (o.label, o.text) for o in self.fix_options)
        return "Bug description: %s\nFix options: %s" % (self.bug_description, opts)

    def to_dict(self):
        return {
            "bug_description": self.bug_description,
            "fix_options": [
                {"label": o.label, "text": o.text, "has_sketch": bool(o.sketch)}
                for o in self.fix_options
            ],
            "backend": self.backend,
            "evidence": [getattr(e, "describe", lambda: str(e))() for e in self.evidence],
            "rendered": self.two_line(),
        }


@dataclass(frozen=True)
class UserHint:
    text: str = ""
    rejected_options: tuple = ()


@dataclass
class HistoryEntry:
    attempt_index: int
    diagnosis: object = None
    selected_fix: object = None
    patch: object = None
    verdict: object = None
    user_hint: object = None
    failure_log: object = None

    def to_dict(self):
        return {
            "attempt_index": self.attempt_index,
            "diagnosis": self.diagnosis.to_dict() if self.diagnosis else None,
            "selected_fix": ({"label": self.selected_fix.label, "text": self.selected_fix.text}
                             if self.selected_fix else None),
            "patch": getattr(self.patch, "provenance", None),
            "verdict": getattr(self.verdict, "status", None),
            "user_hint": (self.user_hint.text if self.user_hint else None),
            "failure_log": self.failure_log,
        }


class RetryHistory:
    """Append-only record of rejected diagnoses and repair attempts."""

    def __init__(self):
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def record_rejection(self, diagnosis, hint):
        self.entries.append(HistoryEntry(
            attempt_index=len(self.entries) + 1,
            diagnosis=diagnosis,
            user_hint=hint,
        ))

    def record_attempt(self, attempt, fix, patch, verdict, failure_log=None):
        self.entries.append(HistoryEntry(
            attempt_index=len(self.entries) + 1,
            selected_fix=fix,
            patch=patch,
            verdict=verdict,
            failure_log=failure_log,
        ))

    def rejected_descriptions(self):
        return {e.diagnosis.bug_description for e in self.entries
                if e.diagnosis is not None and e.user_hint is not None}

    def rejected_option_texts(self):
        out = set()
        for e in self.entries:
            if e.diagnosis is not None and e.user_hint is not None:
                out.update(o.text for o in e.diagnosis.fix_options)
            if e.user_hint is not None:
                out.update(e.user_hint.rejected_options)
        return out

    def latest_hint(self):
        for e in reversed(self.entries):
            if e.user_hint is not None and e.user_hint.text:
                return e.user_hint
        return None

    def to_dict(self):
        return [e.to_dict() for e in self.entries]


# ---------------------------------------------------------------------------
# Strict output grammar
# ---------------------------------------------------------------------------

_BUG_RE = re.compile(r"^Bug description:\s*(\S.*)$")
_OPTS_RE = re.compile(r"^Fix options:\s*(\S.*)$")


def parse_diagnosis(raw_text):
    """Parse the strict two-line format; anything else is a FormatViolation."""
    lines = [ln for ln in raw_text.strip().splitlines()]
    if len(lines) < 2:
        raise FormatViolation("expected 2 lines, got %d" % len(lines),
                              line_number=len(lines) + 1)
    if len(lines) > 2:
        raise FormatViolation("expected exactly 2 lines", line_number=3, line=lines[2])
    m = _BUG_RE.match(lines[0])
    if not m:
        raise FormatViolation("line 1 must be 'Bug description: <brief>'",
                              line_number=1, line=lines[0])
    bug = m.group(1).strip()
    m = _OPTS_RE.match(lines[1])
    if not m:
        raise FormatViolation("line 2 must be 'Fix options: A-..., B-..., C-...'",
                              line_number=2, line=lines[1])
    body = m.group(1).strip()
    tokens = re.split(r",\s*(?=[ABC]-)", body)
    options = []
    for token in tokens:
        tm = re.match(r"^([ABC])-(\S.*)$", token.strip())
        if not tm:
            raise FormatViolation("malformed fix option %r" % token.strip(),
                                  line_number=2, line=lines[1])
        label, text = tm.group(1), tm.group(2).strip()
        if any(o.label == label for o in options):
            raise FormatViolation("duplicate option label %s" % label,
                                  line_number=2, line=lines[1])
        if len(text.split()) > MAX_OPTION_WORDS:
            raise FormatViolation("option %s exceeds %d words" % (label, MAX_OPTION_WORDS),
                                  line_number=2, line=lines[1])
        options.append(FixOption(label=label, text=text))
    try:
        return Diagnosis(bug_description=bug, fix_options=options, backend="parsed")
    except DiagnoseError as exc:
        raise FormatViolation(str(exc), line_number=2, line=lines[1]) from exc


# ---------------------------------------------------------------------------
# Offline oracle
# ---------------------------------------------------------------------------

def diagnose(normalized, trace, history=None, hint=None):
    """Rule-based diagnosis: dynamic symptoms outrank static findings.

    Deterministic given its inputs; never re-emits a bug description or an
    option text that the history records as user-rejected.
    """
    project = normalized.project
    symptoms = detect_symptoms(trace, project)
    findings = analyze(normalized)
    rejected_desc = history.rejected_descriptions() if history else set()
    rejected_texts = history.rejected_option_texts() if history else set()
    if hint is not None:
        rejected_texts = rejected_texts | set(hint.rejected_options)

    candidates = []
    for symptom in symptoms:
        template = _SYMPTOM_TEMPLATES.get(symptom.kind)
        if template:
            candidates.append((symptom, template))
    for finding in findings:
        template = _FINDING_TEMPLATES.get(finding.detector)
        if template:
            candidates.append((finding, template))
    if not candidates:
        raise NoEvidence("no symptoms and no findings to reason from")

    built = []
    last_error = None
    for evidence, template in candidates:
        try:
            bug, options = template(evidence, normalized, trace, findings)
        except _TemplateInapplicable as exc:
            last_error = exc
            continue
        built.append((evidence, bug, options))
    if not built:
        raise NoEvidence("no candidate template applies"
                         + (": %s" % last_error if last_error else ""))

    # first pass: only candidates with at least one un-rejected option text;
    # second pass: re-offer rejected lowerings under variant-numbered texts
    for require_fresh in (True, False):
        for evidence, bug, options in built:
            bug_text = bug
            retry_tag = 0
            while bug_text in rejected_desc and retry_tag < 10:
                retry_tag += 1
                bug_text = "%s (alternative %d)" % (bug.split(" (alternative")[0], retry_tag)
            if bug_text in rejected_desc:
                continue
            fresh = [o for o in options if o.text not in rejected_texts]
            if require_fresh and not fresh:
                continue
            assembled = list(fresh)
            taken = {o.text for o in assembled} | rejected_texts
            for o in options:
                if len(assembled) >= 3:
                    break
                if o.text in rejected_texts:
                    variant = _variant_text(o.text, taken)
                    taken.add(variant)
                    assembled.append(replace(o, text=variant))
            if len(assembled) < 2:
                assembled += _generic_options(evidence, exclude=taken)
            if len(assembled) < 2:
                continue
            assembled = [replace(o, label="ABC"[i]) for i, o in enumerate(assembled[:3])]
            return Diagnosis(bug_description=bug_text, fix_options=assembled,
                             backend="oracle", evidence=(evidence,))
    raise NoEvidence("every candidate diagnosis was rejected by history")


def _variant_text(text, taken):
    base = re.sub(r" \(variant \d+\)$", "", text)
    n = 1
    while True:
        candidate = "%s (variant %d)" % (base, n)
        if candidate not in taken and len(candidate.split()) <= MAX_OPTION_WORDS:
            return candidate
        if len(candidate.split()) > MAX_OPTION_WORDS:
            # trim the base to keep the word budget
            base = " ".join(base.split()[:MAX_OPTION_WORDS - 2])
        n += 1


class _TemplateInapplicable(Exception):
    pass


def _split_subject(subject):
    if ":" in subject:
        return subject.split(":", 1)
    return None, subject


def _sprite_of_instance(instance_id):
    return instance_id.split("#", 1)[0]


def _find_blocks(project, sprite=None, opcode=None, pred=None):
    out = []
    for target in project.targets:
        if sprite is not None and target.name != sprite:
            continue
        for block in target.blocks.values():
            if opcode is not None and block.opcode != opcode:
                continue
            if pred is not None and not pred(target, block):
                continue
            out.append((target, block))
    return out


def _var_change_blocks(project, var_name, sprite=None):
    def is_write(target, block):
        pair = block.fields.get("VARIABLE")
        return bool(pair and pair[0] == var_name)
    return (_find_blocks(project, sprite, "data_changevariableby", is_write)
            + _find_blocks(project, sprite, "data_setvariableto", is_write))


def _hat_of(target, block):
    cur = block
    while cur is not None and cur.parent is not None:
        cur = target.blocks.get(cur.parent)
    return cur


def _tmpl_flicker(symptom, normalized, trace, findings):
    project = normalized.project
    sprite = _sprite_of_instance(symptom.subject)
    loops = []
    for opcode in ("looks_show", "looks_hide"):
        for target, block in _find_blocks(project, sprite, opcode):
            cur = block
            while cur is not None and cur.parent is not None:
                parent = target.blocks.get(cur.parent)
                if parent is not None and parent.opcode == "control_forever":
                    loops.append(parent.id)
                    break
                cur = parent
    loops = sorted(set(loops))
    if not loops:
        raise _TemplateInapplicable("flicker without show/hide loops")
    bug = ("two looping scripts keep toggling %s between show and hide every frame,"
           " which reads as flicker" % sprite)
    sketch_a = tuple(EditOp("DeleteBlock", sprite, anchor=bid) for bid in loops[:3])
    waits = _find_blocks(project, sprite, "control_wait")
    sketch_b = tuple(
        EditOp("TweakLiteral", sprite, anchor=b.id, payload={"input": "DURATION", "new": 0.5})
        for _t, b in waits[:3])
    options = [
        FixOption("A", "Drop the forever wrappers so each message shows or hides %s once"
                  % sprite,
                  sketch=sketch_a, alternates=(sketch_b,) if sketch_b else (),
                  template_key="flicker/unwrap"),
        FixOption("B", "Slow both loops down so the sprite is not redrawn every frame",
                  sketch=sketch_b, template_key="flicker/slow"),
    ]
    return bug, options


def _tmpl_stuck_variable(symptom, normalized, trace, findings):
    project = normalized.project
    _tgt, var_name = _split_subject(symptom.subject)
    changes = _var_change_blocks(project, var_name)
    changes = [(t, b) for t, b in changes if b.opcode == "data_changevariableby"]
    if not changes:
        raise _TemplateInapplicable("no change block for %s" % var_name)
    for target, change_block in changes:
        motions = _find_blocks(project, target.name,
                               pred=lambda t, b: b.opcode.startswith("motion_"))
        others = [(t, b) for t, b in motions
                  if _hat_of(t, b) is not None
                  and _hat_of(t, b).id != (_hat_of(target, change_block) or change_block).id]
        if not others:
            continue
        motion_target, motion_block = others[0]
        delta_in = change_block.inputs.get("VALUE")
        delta = delta_in.value if isinstance(delta_in, Literal) else 1
        bug = ("%s reacts to contact in two separate loops; the position update runs first "
               "and breaks the condition before %s can change" % (target.name, var_name))
        sketch_a = (
            EditOp("DeleteBlock", target.name, anchor=change_block.id),
            EditOp("InsertBlock", motion_target.name, anchor=motion_block.id,
                   relation="after",
                   payload={"templates": (change_var(var_name, delta),)}),
        )
        sketch_b = (
            EditOp("DeleteBlock", target.name, anchor=change_block.id),
            EditOp("InsertBlock", motion_target.name, anchor=motion_block.id,
                   relation="before",
                   payload={"templates": (change_var(var_name, delta),)}),
        )
        options = [
            FixOption("A", "Move the %s change into the script that updates the position "
                      "so both happen on the same contact" % var_name,
                      sketch=sketch_a, alternates=(sketch_b,),
                      template_key="stuck/merge"),
            FixOption("B", "Change %s before moving the sprite away" % var_name,
                      sketch=sketch_b, template_key="stuck/reorder"),
        ]
        return bug, options
    raise _TemplateInapplicable("no racing motion script found")


def _tmpl_jump_variable(symptom, normalized, trace, findings):
    project = normalized.project
    _tgt, var_name = _split_subject(symptom.subject)
    fanout = [f for f in findings if f.detector == "GlobalBroadcastFanout"]
    clicked_sprite = None
    for frame_events in (trace.scenario_echo.get("events") or []):
        if frame_events.get("kind") == "click" and frame_events.get("sprite"):
            clicked_sprite = frame_events["sprite"]
            break
    clicked = _find_blocks(project, clicked_sprite, "event_whenthisspriteclicked")
    if not clicked:
        clicked = _find_blocks(project, None, "event_whenthisspriteclicked")
    if not clicked:
        raise _TemplateInapplicable("no clicked script to anchor on")
    target, hat = clicked[0]
    bcast = None
    for block in target.script_blocks(hat):
        if block.opcode in ("event_broadcast", "event_broadcastandwait"):
            bcast = block
            break
    if bcast is None:
        raise _TemplateInapplicable("clicked script does not broadcast")
    listeners = len(_find_blocks(project, None, "event_whenbroadcastreceived"))
    changes = _var_change_blocks(project, var_name)
    delta_in = None
    for _t, b in changes:
        if b.opcode == "data_changevariableby":
            delta_in = b.inputs.get("VALUE")
            break
    delta = delta_in.value if isinstance(delta_in, Literal) else 1
    bug = ("one click on %s broadcasts to every listener and each of the %d receivers "
           "changes %s, so a single click multiplies the update"
           % (target.name, listeners, var_name))
    sketch_a = (
        EditOp("InsertBlock", target.name, anchor=hat.id, relation="inside",
               payload={"templates": (change_var(var_name, delta),)}),
        EditOp("DeleteBlock", target.name, anchor=bcast.id),
    )
    other_receiver_changes = []
    for t, b in changes:
        if b.opcode != "data_changevariableby":
            continue
        h = _hat_of(t, b)
        if h is not None and h.opcode == "event_whenbroadcastreceived" and t.name != target.name:
            other_receiver_changes.append(EditOp("DeleteBlock", t.name, anchor=b.id))
    options = [
        FixOption("A", "Change %s directly in the clicked sprite's own script and drop "
                  "the broadcast" % var_name,
                  sketch=sketch_a, template_key="fanout/localize"),
        FixOption("B", "Keep the broadcast but let only the clicked sprite's listener "
                  "change %s" % var_name,
                  sketch=tuple(other_receiver_changes[:3]) if 0 < len(other_receiver_changes) <= 3 else (),
                  template_key="fanout/prune"),
    ]
    return bug, options


def _tmpl_accrual(symptom, normalized, trace, findings):
    project = normalized.project
    _tgt, var_name = _split_subject(symptom.subject)
    changes = [(t, b) for t, b in _var_change_blocks(project, var_name)
               if b.opcode == "data_changevariableby"]
    if not changes:
        raise _TemplateInapplicable("no change block for %s" % var_name)
    target, change_block = changes[0]
    bug = ("%s keeps changing every single frame while the contact lasts; the collect "
           "step that should end the touch never happens" % var_name)
    sketch_a = (EditOp("InsertBlock", target.name, anchor=change_block.id,
                       relation="after", payload={"templates": (hide(),)}),)
    sketch_b = (EditOp("InsertBlock", target.name, anchor=change_block.id,
                       relation="after",
                       payload={"templates": (if_(eq(varr(var_name), 0), [stop("all")]),)}),)
    options = [
        FixOption("A", "Hide %s right after it scores so one touch counts once"
                  % target.name,
                  sketch=sketch_a, alternates=(sketch_b,), template_key="accrual/hide"),
        FixOption("B", "Stop everything once %s reaches its bound" % var_name,
                  sketch=sketch_b, template_key="accrual/stop"),
    ]
    return bug, options


def _tmpl_offstage(symptom, normalized, trace, findings):
    project = normalized.project
    sprite = _sprite_of_instance(symptom.subject)
    checks = _find_blocks(project, sprite, "sensing_touchingcolor")
    if not checks:
        raise _TemplateInapplicable("no color check on %s" % sprite)
    target, check = checks[0]
    observed = _observed_contact_color(trace, project, symptom.subject)
    if observed is None:
        raise _TemplateInapplicable("no overlapping sprite color observed")
    current = check.inputs.get("COLOR")
    current_text = str(current.value) if isinstance(current, Literal) else "?"
    bug = ("%s slides right off the stage because its surface check looks for color %s, "
           "which never appears under it" % (sprite, current_text))
    sketch_a = (EditOp("TweakLiteral", sprite, anchor=check.id,
                       payload={"input": "COLOR", "new": observed}),)
    sketch_b = (EditOp("ReplaceBlock", sprite, anchor=check.id, relation="replace",
                       payload={"templates": (touching("_edge_"),)}),)
    options = [
        FixOption("A", "Check for the color actually under the sprite, %s" % observed,
                  sketch=sketch_a, alternates=(sketch_b,), template_key="offstage/color"),
        FixOption("B", "Stop the fall with an edge check instead of a color check",
                  sketch=sketch_b, template_key="offstage/edge"),
    ]
    return bug, options


def _observed_contact_color(trace, project, instance_id):
    for frame in reversed(trace.frames):
        me = frame.sprite(instance_id)
        if me is None:
            continue
        for other in frame.sprites:
            if other.instance_id == instance_id or not other.visible:
                continue
            if me.overlaps(other) or _loose_overlap(me, other):
                target = project.target(other.sprite)
                if target is None:
                    continue
                for costume in target.costumes:
                    if costume.name == other.costume:
                        return "#%02x%02x%02x" % tuple(costume.fill_color)
    return None


def _loose_overlap(a, b):
    return (abs(a.x - b.x) <= (a.width + b.width) / 2 + 1
            and abs(a.y - b.y) <= (a.height + b.height) / 2 + 1)


def _tmpl_clone_explosion(symptom, normalized, trace, findings):
    project = normalized.project
    recursive = [f for f in findings if f.detector == "RecursiveCloning"]
    if recursive:
        f = recursive[0]
        clone_block = f.block_ids[-1]
        bug = ("every new clone of %s immediately creates another clone, so clones "
               "multiply until the cap" % f.sprite)
        options = [
            FixOption("A", "Remove the clone-making block from the clone-start script",
                      sketch=(EditOp("DeleteBlock", f.sprite, anchor=clone_block),),
                      template_key="clones/cut"),
            FixOption("B", "Create clones from a flag script with a fixed repeat count"),
        ]
        return bug, options
    bug = "clone count explodes during the run; clone creation has no working bound"
    options = [
        FixOption("A", "Guard clone creation with a counter variable"),
        FixOption("B", "Create clones from a flag script with a fixed repeat count"),
    ]
    return bug, options


def _generic_template(kind, subject_phrase):
    def build(evidence, normalized, trace, findings):
        subject = getattr(evidence, "subject", "")
        bug = "%s (%s)" % (subject_phrase % subject if "%s" in subject_phrase
                           else subject_phrase, kind)
        return bug, _generic_options(evidence, exclude=set())
    return build


def _generic_options(evidence, exclude):
    base = [
        "Restructure the affected script so state changes happen in one sequence",
        "Split the behavior into one script per event and re-test",
        "Initialize the affected state when the flag is clicked",
    ]
    candidates = list(base)
    # rejected texts are never re-emitted; numbered variants keep the pool open
    for n in range(1, 10):
        candidates.extend("%s (variant %d)" % (t, n) for t in base)
    out = []
    for text in candidates:
        if text in exclude:
            continue
        out.append(FixOption("ABC"[len(out)], text))
        if len(out) == 3:
            break
    return out


_SYMPTOM_TEMPLATES = {
    "Flicker": _tmpl_flicker,
    "StuckVariable": _tmpl_stuck_variable,
    "JumpVariable": _tmpl_jump_variable,
    "ContinuousAccrual": _tmpl_accrual,
    "OffStageLoss": _tmpl_offstage,
    "CloneExplosion": _tmpl_clone_explosion,
    "NoMotion": _generic_template("NoMotion", "%s never moves even though it has motion scripts"),
    "NeverVisible": _generic_template("NeverVisible", "%s never becomes visible during the run"),
    "InstantTermination": _generic_template(
        "InstantTermination", "all scripts stop within a couple of ticks of starting"),
}


def _tmpl_from_finding_sketch(bug_fn):
    def build(finding, normalized, trace, findings):
        bug = bug_fn(finding)
        options = []
        if finding.fix_sketch:
            options.append(FixOption("A", finding.fix_hint or "Apply the suggested rewrite",
                                     sketch=tuple(finding.fix_sketch),
                                     template_key="finding/" + finding.detector))
        options.extend(_generic_options(finding, exclude={o.text for o in options}))
        return bug, options[:3]
    return build


def _tmpl_message_mismatch(finding, normalized, trace, findings):
    bug = finding.explanation
    options = []
    if finding.fix_sketch:
        options.append(FixOption("A", finding.fix_hint,
                                 sketch=tuple(finding.fix_sketch),
                                 template_key="message/rename-sender"))
        tweak = finding.fix_sketch[0]
        old, new = tweak.payload.get("old"), tweak.payload.get("new")
        receiver_hats = [bid for bid in finding.block_ids[1:]]
        if receiver_hats and old and new:
            sketch_b = tuple(
                EditOp("TweakLiteral", finding.sprite, anchor=bid,
                       payload={"field": "BROADCAST_OPTION", "old": new, "new": old})
                for bid in receiver_hats[:3])
            options.append(FixOption("B", "Rename the receiver to match the broadcast instead",
                                     sketch=sketch_b, template_key="message/rename-receiver"))
    options.extend(_generic_options(finding, exclude={o.text for o in options}))
    return bug, options[:3]


def _tmpl_fanout_finding(finding, normalized, trace, findings):
    """Same lowering family as the JumpVariable symptom, offered as the
    static-evidence view of the bug (a fresh direction after rejections)."""
    project = normalized.project
    var_name = None
    m = re.search(r"changes '([^']+)'", finding.explanation)
    if m:
        var_name = m.group(1)
    if var_name is None:
        raise _TemplateInapplicable("fanout finding names no variable")
    clicked = _find_blocks(project, None, "event_whenthisspriteclicked")
    target = hat = bcast = None
    for t, h in clicked:
        for block in t.script_blocks(h):
            if block.opcode in ("event_broadcast", "event_broadcastandwait"):
                target, hat, bcast = t, h, block
                break
        if bcast is not None:
            break
    if bcast is None:
        raise _TemplateInapplicable("no clicked script broadcasts")
    changes = [(t, b) for t, b in _var_change_blocks(project, var_name)
               if b.opcode == "data_changevariableby"]
    delta_in = changes[0][1].inputs.get("VALUE") if changes else None
    delta = delta_in.value if isinstance(delta_in, Literal) else 1
    sketch = (
        EditOp("InsertBlock", target.name, anchor=hat.id, relation="inside",
               payload={"templates": (change_var(var_name, delta),)}),
        EditOp("DeleteBlock", target.name, anchor=bcast.id),
    )
    bug = finding.explanation
    options = [
        FixOption("A", "Score the click locally: update %s in the clicked script, "
                  "not in the listeners" % var_name,
                  sketch=sketch, template_key="fanout/localize-static"),
        FixOption("B", "Remove the duplicated listener updates in the other sprites"),
    ]
    return bug, options


def _tmpl_missing_termination(finding, normalized, trace, findings):
    project = normalized.project
    loop_id, change_id = finding.block_ids
    target = project.target(finding.sprite)
    change_block = target.blocks.get(change_id) if target else None
    var_name = change_block.field_value("VARIABLE") if change_block else "the variable"
    bug = finding.explanation
    sketch = (EditOp("InsertBlock", finding.sprite, anchor=change_id, relation="after",
                     payload={"templates": (if_(eq(varr(var_name), 0), [stop("all")]),)}),)
    options = [
        FixOption("A", "Stop everything once %s reaches 0" % var_name,
                  sketch=sketch, template_key="termination/stop-at-zero"),
        FixOption("B", "Wrap the loop body in a repeat-until bound on %s" % var_name),
    ]
    return bug, options


_FINDING_TEMPLATES = {
    "MessageNeverReceived": _tmpl_message_mismatch,
    "VariableWrittenNeverRead": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "MissingResetScript": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "MissingTermination": _tmpl_missing_termination,
    "GlobalBroadcastFanout": _tmpl_fanout_finding,
    "RecursiveCloning": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "ForeverInsideLoop": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "CustomBlockWithForever": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "ComparingLiterals": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "ReadNeverWritten": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "NoWorkingScripts": _tmpl_from_finding_sketch(lambda f: f.explanation),
    "OrphanScripts": _tmpl_from_finding_sketch(lambda f: f.explanation),
}


# ---------------------------------------------------------------------------
# Prompt construction for the remote backend
# ---------------------------------------------------------------------------

DIAGNOSIS_TASK_TEXT = """Step 1 - Diagnosis (project code + rendered trace frames)
Inputs: the project's JSON, rendered frames from a deterministic run, the latest user hint, and prior attempt history.
Reason silently; output only the answer. Locate the single most critical flaw.
Tasks: (1) enumerate the sprite behaviors visible across the frames and cross-check them against the project JSON; (2) identify the primary bug; (3) propose 2-3 concise fixes.
Strict output: exactly 2 lines.
1) Bug description: <brief>
2) Fix options: A-<fix>, B-<fix>, C-<fix or omit>
Guidelines: align the frames with the code; look for missing or extra logic; adapt to the user's feedback and the attempt history.
Bug taxonomy: {block misuse/order/value; orphaned code; event conflicts; loops/branches/init; broadcast mismatch; clone lifecycle; layering/visibility; collision/bounds; scene transitions; audio-visual timing}.
"""


@dataclass
class PromptBundle:
    system_text: str
    parts: list = field(default_factory=list)

    def text_parts(self):
        return [p["text"] for p in self.parts if p["kind"] == "text"]

    def to_dict(self):
        return {"system_text": self.system_text, "parts": self.parts}


def build_prompt(normalized, keyframe_images, history=None, hint=None):
    """Assemble the diagnosis request: task text, project JSON, frames,
    hint, and a digest of prior rejected attempts."""
    from .sb3 import serialize_sb3
    import io
    import json as json_mod
    import zipfile

    archive = serialize_sb3(normalized.project)
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        project_json = zf.read("project.json").decode("utf-8")

    parts = [{"kind": "text", "text": "Project JSON:\n" + project_json}]
    for tick, image in keyframe_images:
        parts.append({
            "kind": "image_png_b64",
            "tick": tick,
            "data": base64.b64encode(image.to_png()).decode("ascii"),
        })
    if hint is not None and hint.text:
        parts.append({"kind": "text", "text": "User hint: %s" % hint.text})
    digest = _history_digest(history)
    if digest:
        parts.append({"kind": "text", "text": digest})
    return PromptBundle(system_text=DIAGNOSIS_TASK_TEXT, parts=parts)


def _history_digest(history):
    if history is None or not len(history):
        return ""
    lines = ["Attempt history:"]
    rejected = sorted(history.rejected_option_texts())
    if rejected:
        lines.append("Previously rejected: " + "; ".join('"%s"' % t for t in rejected))
    for e in history.entries:
        if e.verdict is not None and getattr(e.verdict, "status", "") == "Fail":
            lines.append("Attempt %d failed verification: %s"
                         % (e.attempt_index,
                            "; ".join(r["assertion"] for r in e.verdict.log.get("failed", []))))
        if e.failure_log and isinstance(e.failure_log, dict) and "error" in e.failure_log:
            lines.append("Attempt %d errored: %s" % (e.attempt_index, e.failure_log["error"]))
    return "\n".join(lines) if len(lines) > 1 else ""
