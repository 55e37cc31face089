"""Turn a selected fix into a bounded patch.

The offline path lowers the fix's edit sketch directly (with progressively
different lowerings on later attempts); the remote path asks the backend for
instruction lines in the strict grammar and parses them:

    Step <k>: <sprite> - <edit>        (1-3 lines, <=20 words per edit)

Edit templates: tweak / insert / replace / add hat / delete / wrap.  The full
grammar, with the opcode alias table, is documented in docs/grammars.md.
"""

from dataclasses import dataclass
import re

from . import builder as B
from .diagnose import FormatViolation
from .edits import EditOp, Locator, Patch


class RepairError(Exception):
    pass


class DisallowedEdit(RepairError):
    """The requested change falls outside the allowed edit ladder."""


class UnresolvableFix(RepairError):
    """No lowering exists for the selected fix."""


MAX_EDIT_WORDS = 20
MAX_LINES = 3

_DISALLOWED_FIX_RE = re.compile(
    r"\b(add|create|draw|import)\b.{0,24}\bnew\b.{0,24}\b(sprite|asset|costume|sound|backdrop|feature|enemy|level)\b"
    r"|\bnew (sprite|asset|costume|sound|backdrop|feature|enemy|level)\b"
    r"|\brewrite\b|\bwholesale\b|\bfrom scratch\b",
    re.IGNORECASE)


@dataclass
class RepairRequest:
    fix: object
    project: object                 # NormalizedProject
    failure_log: object = None
    attempt_index: int = 1

    def __post_init__(self):
        if self.attempt_index < 1:
            raise RepairError("attempt_index starts at 1")


def propose_patch(request):
    """Offline lowering: pick the fix's sketch for this attempt."""
    fix = request.fix
    if _DISALLOWED_FIX_RE.search(fix.text or ""):
        raise DisallowedEdit(
            "fix %r asks for new features or a rewrite, which edits never do" % fix.text)
    ladder = fix.sketch_ladder()
    if not ladder:
        raise UnresolvableFix("no lowering available for fix %r" % fix.text)
    edits = list(ladder[min(request.attempt_index - 1, len(ladder) - 1)])
    return Patch(edits=edits, budget=3, provenance=render_instructions(edits))


class OracleRepairBackend:
    name = "oracle"

    def propose(self, request):
        return propose_patch(request)


# ---------------------------------------------------------------------------
# Opcode aliases shared by the parser and the renderer
# ---------------------------------------------------------------------------

ALIAS_TO_OPCODE = {
    "wait": "control_wait",
    "wait_until": "control_wait_until",
    "forever": "control_forever",
    "repeat": "control_repeat",
    "repeat_until": "control_repeat_until",
    "if": "control_if",
    "if_else": "control_if_else",
    "stop": "control_stop",
    "create_clone": "control_create_clone_of",
    "delete_clone": "control_delete_this_clone",
    "when_flag_clicked": "event_whenflagclicked",
    "when_clicked": "event_whenthisspriteclicked",
    "when_key": "event_whenkeypressed",
    "when_receive": "event_whenbroadcastreceived",
    "when_clone_starts": "control_start_as_clone",
    "broadcast": "event_broadcast",
    "broadcast_and_wait": "event_broadcastandwait",
    "move": "motion_movesteps",
    "goto_xy": "motion_gotoxy",
    "change_x": "motion_changexby",
    "change_y": "motion_changeyby",
    "set_x": "motion_setx",
    "set_y": "motion_sety",
    "point_direction": "motion_pointindirection",
    "turn_right": "motion_turnright",
    "turn_left": "motion_turnleft",
    "bounce_on_edge": "motion_ifonedgebounce",
    "show": "looks_show",
    "hide": "looks_hide",
    "say": "looks_say",
    "switch_costume": "looks_switchcostumeto",
    "next_costume": "looks_nextcostume",
    "set_size": "looks_setsizeto",
    "change_size": "looks_changesizeby",
    "to_front": "looks_gotofrontback",
    "to_back": "looks_gotofrontback",
    "set_variable": "data_setvariableto",
    "change_variable": "data_changevariableby",
    "touching": "sensing_touchingobject",
    "touching_color": "sensing_touchingcolor",
    "key_pressed": "sensing_keypressed",
}

OPCODE_TO_ALIAS = {}
for _alias, _op in ALIAS_TO_OPCODE.items():
    OPCODE_TO_ALIAS.setdefault(_op, _alias)

_TEMPLATE_FACTORIES = {
    "wait": lambda args: B.wait(_num(args[0])),
    "forever": lambda args: B.forever([]),
    "repeat": lambda args: B.repeat(_num(args[0]), []),
    "stop": lambda args: B.stop(args[0] if args else "all"),
    "broadcast": lambda args: B.broadcast(args[0]),
    "broadcast_and_wait": lambda args: B.broadcast_wait(args[0]),
    "move": lambda args: B.move(_num(args[0])),
    "goto_xy": lambda args: B.goto_xy(_num(args[0]), _num(args[1])),
    "change_x": lambda args: B.change_x(_num(args[0])),
    "change_y": lambda args: B.change_y(_num(args[0])),
    "set_x": lambda args: B.set_x(_num(args[0])),
    "set_y": lambda args: B.set_y(_num(args[0])),
    "point_direction": lambda args: B.point_dir(_num(args[0])),
    "turn_right": lambda args: B.turn_right(_num(args[0])),
    "turn_left": lambda args: B.turn_left(_num(args[0])),
    "bounce_on_edge": lambda args: B.bounce(),
    "show": lambda args: B.show(),
    "hide": lambda args: B.hide(),
    "say": lambda args: B.say(args[0] if args else ""),
    "switch_costume": lambda args: B.switch_costume(args[0]),
    "next_costume": lambda args: B.next_costume(),
    "set_size": lambda args: B.set_size(_num(args[0])),
    "change_size": lambda args: B.change_size(_num(args[0])),
    "to_front": lambda args: B.to_front(),
    "to_back": lambda args: B.to_back(),
    "set_variable": lambda args: B.set_var(args[0], _num(args[1])),
    "change_variable": lambda args: B.change_var(args[0], _num(args[1])),
    "touching": lambda args: B.touching(args[0]),
    "touching_color": lambda args: B.touching_color(args[0]),
    "key_pressed": lambda args: B.key_pressed(args[0]),
    "when_flag_clicked": lambda args: B.flag(),
    "when_clicked": lambda args: B.clicked(),
    "when_receive": lambda args: B.receive(args[0]),
    "when_key": lambda args: B.key_hat(args[0]),
    "when_clone_starts": lambda args: B.start_as_clone(),
    "create_clone": lambda args: B.clone_of(args[0] if args else "_myself_"),
    "delete_clone": lambda args: B.delete_clone(),
}


def _num(text):
    try:
        f = float(text)
        return int(f) if f.is_integer() else f
    except (TypeError, ValueError):
        return text


_LINE_RE = re.compile(r"^Step (\d+):\s*(?P<sprite>.+?)\s+[—-]\s+(?P<edit>\S.*)$")
_CALL_RE = re.compile(r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\((?P<args>.*)\)$")
_HEAD_KEYWORDS = ("tweak", "insert", "replace", "add", "delete", "wrap")
_SLOT_WORDS = ("literal", "field", "name", "color", "value")


def parse_instructions(raw_text, normalized):
    """Strict instruction lines -> resolved EditOps.

    Raises FormatViolation on grammar breaks, DisallowedEdit on actions
    outside the ladder, and anchor errors when a locator does not resolve.
    """
    from .edits import resolve_anchor, AnchorNotFound

    lines = [ln for ln in raw_text.strip().splitlines() if ln.strip()]
    if not lines:
        raise FormatViolation("no instruction lines", line_number=1)
    if len(lines) > MAX_LINES:
        raise FormatViolation("more than %d instruction lines" % MAX_LINES,
                              line_number=MAX_LINES + 1, line=lines[MAX_LINES])
    edits = []
    for i, line in enumerate(lines, start=1):
        m = _LINE_RE.match(line.strip())
        if not m:
            raise FormatViolation("line must read 'Step k: <sprite> - <edit>'",
                                  line_number=i, line=line)
        if int(m.group(1)) != i:
            raise FormatViolation("step numbers must run 1..n in order",
                                  line_number=i, line=line)
        sprite = m.group("sprite").strip()
        edit_text = m.group("edit").strip()
        if len(edit_text.split()) > MAX_EDIT_WORDS:
            raise FormatViolation("edit exceeds %d words" % MAX_EDIT_WORDS,
                                  line_number=i, line=line)
        edits.append(_parse_edit(sprite, edit_text, i, line))

    project = normalized.project
    for edit in edits:
        target = project.target(edit.target_sprite)
        if target is None:
            raise AnchorNotFound("no sprite named %s" % edit.target_sprite)
        if edit.anchor is not None:
            resolve_anchor(project, target, edit.anchor)
    return edits


def _tokenize(text):
    """Whitespace split that keeps quoted strings and (...) groups intact."""
    tokens, cur, depth, quote = [], "", 0, None
    for ch in text:
        if quote:
            cur += ch
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            cur += ch
        elif ch == "(":
            depth += 1
            cur += ch
        elif ch == ")":
            depth = max(0, depth - 1)
            cur += ch
        elif ch.isspace() and depth == 0:
            if cur:
                tokens.append(cur)
            cur = ""
        else:
            cur += ch
    if quote:
        raise ValueError("unbalanced quote")
    if cur:
        tokens.append(cur)
    return tokens


def _parse_edit(sprite, text, line_number, line):
    try:
        tokens = _tokenize(text)
    except ValueError as exc:
        raise FormatViolation("unbalanced quoting: %s" % exc, line_number, line) from exc
    if not tokens:
        raise FormatViolation("empty edit", line_number, line)
    head = tokens[0].lower()
    if head not in _HEAD_KEYWORDS:
        raise DisallowedEdit(
            "%r is not one of the allowed edit kinds (tweak/insert/replace/"
            "add hat/delete/wrap)" % head)
    try:
        if head == "tweak":
            return _parse_tweak(sprite, tokens[1:])
        if head == "insert":
            return _parse_insert(sprite, tokens[1:])
        if head == "replace":
            return _parse_replace(sprite, tokens[1:])
        if head == "add":
            return _parse_add(sprite, tokens[1:])
        if head == "delete":
            return _parse_delete(sprite, tokens[1:])
        return _parse_wrap(sprite, tokens[1:])
    except (IndexError, _Bad) as exc:
        raise FormatViolation("cannot parse %s edit: %s" % (head, exc),
                              line_number, line) from exc


class _Bad(Exception):
    pass


def _parse_anchor(token, context=None):
    if token.startswith("#"):
        return token[1:]
    m = _CALL_RE.match(token)
    name, arg = (m.group("name"), m.group("args")) if m else (token, None)
    opcode = ALIAS_TO_OPCODE.get(name.lower())
    if opcode is None:
        raise _Bad("unknown block name %r" % name)
    arg = arg.strip().strip('"').strip("'") if arg else None
    return Locator(opcode=opcode, arg=arg or None, within=context)


def _parse_call(token):
    m = _CALL_RE.match(token)
    if not m:
        raise _Bad("expected a block call like name(args), got %r" % token)
    name = m.group("name").lower()
    factory = _TEMPLATE_FACTORIES.get(name)
    if factory is None:
        raise _Bad("unknown block name %r" % name)
    raw_args = m.group("args").strip()
    args = []
    if raw_args:
        args = [a.strip().strip('"').strip("'") for a in _split_args(raw_args)]
    try:
        return factory(args)
    except IndexError as exc:
        raise _Bad("wrong argument count for %s" % name) from exc


def _split_args(raw):
    out, depth, cur, quote = [], 0, "", None
    for ch in raw:
        if quote:
            cur += ch
            if ch == quote:
                quote = None
            continue
        if ch in "\"'":
            quote = ch
            cur += ch
        elif ch == "(":
            depth += 1
            cur += ch
        elif ch == ")":
            depth -= 1
            cur += ch
        elif ch == "," and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur)
    return out


def _take_context(tokens, i):
    """Optional trailing '(inside|after|before) <anchor>' on a tweak."""
    if i < len(tokens) and tokens[i].lower() in ("inside", "after", "before"):
        if i + 1 >= len(tokens):
            raise _Bad("missing context anchor after %r" % tokens[i])
        return _parse_anchor(tokens[i + 1]), i + 2
    return None, i


def _parse_tweak(sprite, tokens):
    anchor_token = tokens[0]
    i = 1
    if i < len(tokens) and tokens[i].lower() in _SLOT_WORDS:
        slot = tokens[i].lower()
        i += 1
    else:
        slot = "literal"
    if i + 2 >= len(tokens) + 1 and "to" not in [t.lower() for t in tokens[i:]]:
        raise _Bad("expected '<old> to <new>'")
    old = tokens[i]
    if tokens[i + 1].lower() != "to":
        raise _Bad("expected 'to' after the old value")
    new = tokens[i + 2]
    context, i = _take_context(tokens, i + 3)
    if i != len(tokens):
        raise _Bad("unexpected trailing words %r" % " ".join(tokens[i:]))
    anchor = _parse_anchor(anchor_token, context)
    payload = {"old": _num(old), "new": _num(new)}
    if slot == "field":
        payload = {"field": "VARIABLE", "old": old, "new": new}
    elif slot == "name":
        payload = {"old": old, "new": new}
    elif slot == "color":
        payload = {"input": "COLOR", "old": old, "new": new}
    return EditOp("TweakLiteral", sprite, anchor=anchor, payload=payload)


def _parse_insert(sprite, tokens):
    call = _parse_call(tokens[0])
    if len(tokens) < 3:
        raise _Bad("expected '(after|before|inside) <anchor>'")
    relation = tokens[1].lower()
    if relation not in ("after", "before", "inside"):
        raise _Bad("insert relation must be after/before/inside")
    context, j = _take_context(tokens, 3)
    anchor = _parse_anchor(tokens[2], context)
    if j != len(tokens):
        raise _Bad("unexpected trailing words")
    return EditOp("InsertBlock", sprite, anchor=anchor, relation=relation,
                  payload={"templates": (call,)})


def _parse_replace(sprite, tokens):
    if len(tokens) != 3 or tokens[1].lower() != "with":
        raise _Bad("expected 'replace <anchor> with <block>'")
    anchor = _parse_anchor(tokens[0])
    call = _parse_call(tokens[2])
    return EditOp("ReplaceBlock", sprite, anchor=anchor, relation="replace",
                  payload={"templates": (call,)})


def _parse_add(sprite, tokens):
    if not tokens or tokens[0].lower() != "hat":
        raise DisallowedEdit("only 'add hat ...' is allowed; new sprites/assets are not")
    if len(tokens) < 4 or tokens[2].lower() != "then":
        raise _Bad("expected 'add hat <hat> then <block> [then <block>]'")
    hat = _parse_call(tokens[1]) if "(" in tokens[1] else _parse_call(tokens[1] + "()")
    body = []
    i = 3
    while i < len(tokens):
        body.append(_parse_call(tokens[i]))
        i += 1
        if i < len(tokens):
            if tokens[i].lower() != "then":
                raise _Bad("expected 'then' between body blocks")
            i += 1
    return EditOp("AddHat", sprite, payload={"hat": hat, "body": tuple(body)})


def _parse_delete(sprite, tokens):
    subtree = False
    toks = list(tokens)
    if toks and toks[-1].lower() == "subtree":
        subtree = True
        toks.pop()
    context, j = _take_context(toks, 1)
    if not toks or j != len(toks):
        raise _Bad("expected 'delete <anchor> [inside <context>] [subtree]'")
    anchor = _parse_anchor(toks[0], context)
    return EditOp("DeleteBlock", sprite, anchor=anchor, payload={"subtree": subtree})


def _parse_wrap(sprite, tokens):
    through = None
    if len(tokens) == 3 and tokens[1].lower() == "in":
        anchor = _parse_anchor(tokens[0])
        call = _parse_call(tokens[2])
    elif len(tokens) == 5 and tokens[1].lower() == "through" and tokens[3].lower() == "in":
        anchor = _parse_anchor(tokens[0])
        through = _parse_anchor(tokens[2])
        call = _parse_call(tokens[4])
    else:
        raise _Bad("expected 'wrap <anchor> [through <anchor>] in <c-block>'")
    return EditOp("WrapBlocks", sprite, anchor=anchor, relation="wrap",
                  payload={"template": call, "through": through})


# ---------------------------------------------------------------------------
# Rendering (provenance text for sketch-lowered patches)
# ---------------------------------------------------------------------------

def render_instructions(edits):
    lines = []
    for k, edit in enumerate(edits, start=1):
        lines.append("Step %d: %s - %s" % (k, edit.target_sprite, _render_edit(edit)))
    return "\n".join(lines)


def _render_anchor(anchor):
    if isinstance(anchor, str):
        return "#%s" % anchor
    alias = OPCODE_TO_ALIAS.get(anchor.opcode, anchor.opcode)
    text = alias
    if anchor.arg:
        text += "(%s)" % _quote(anchor.arg)
    if anchor.within is not None:
        text += " inside %s" % _render_anchor(anchor.within)
    return text


def _quote(value):
    text = str(value)
    return '"%s"' % text if " " in text else text


def _render_call(template):
    alias = OPCODE_TO_ALIAS.get(template.opcode, template.opcode)
    args = []
    for _name, value in template.fields:
        args.append(getattr(value, "name", value))
    for name, value in template.inputs:
        if isinstance(value, (B.BlockTemplate, list, tuple)):
            continue
        args.append(getattr(value, "name", value))
    return "%s(%s)" % (alias, ", ".join(_quote(a) for a in args))


def _render_edit(edit):
    if edit.kind == "TweakLiteral":
        p = edit.payload
        slot = "field" if "field" in p else ("color" if p.get("input") == "COLOR" else "literal")
        return "tweak %s %s %s to %s" % (
            _render_anchor(edit.anchor), slot, _quote(p.get("old", "?")), _quote(p.get("new")))
    if edit.kind == "InsertBlock":
        calls = " then ".join(_render_call(t) for t in edit.payload.get("templates", ()))
        return "insert %s %s %s" % (calls, edit.relation, _render_anchor(edit.anchor))
    if edit.kind == "ReplaceBlock":
        call = _render_call(edit.payload["templates"][0])
        return "replace %s with %s" % (_render_anchor(edit.anchor), call)
    if edit.kind == "AddHat":
        hat = _render_call(edit.payload["hat"])
        body = " then ".join(_render_call(t) for t in edit.payload.get("body", ()))
        return "add hat %s then %s" % (hat, body) if body else "add hat %s" % hat
    if edit.kind == "DeleteBlock":
        tail = " subtree" if edit.payload.get("subtree") else ""
        return "delete %s%s" % (_render_anchor(edit.anchor), tail)
    template = edit.payload.get("template")
    rng = _render_anchor(edit.anchor)
    if edit.payload.get("through") is not None:
        rng += " through %s" % _render_anchor(edit.payload["through"])
    return "wrap %s in %s" % (rng, _render_call(template))


# ---------------------------------------------------------------------------
# Remote repair backend
# ---------------------------------------------------------------------------

REPAIR_TASK_TEXT = """Step 2 - Patch (atomic block edits)
Inputs: the diagnosis and chosen fix, the normalized project JSON, and the last verification log.
Apply the smallest safe edits; modify only the sprites and scripts the fix requires.
Allowed, in priority order: (1) tweak a literal or operator; (2) insert a minimal block; (3) replace a block with a peer; (4) add a missing hat; (5) delete a harmful block.
Disallowed: new features, new assets, wholesale rewrites, unrelated reorderings.
Anchoring: cite block names and relations (after, before, inside, wrap); cross-sprite edits only if necessary.
Strict output format: 1-3 lines; each line: Step k: <sprite> - <edit> (at most 20 words).
"""


class RemoteRepairBackend:
    """Asks an HTTP backend for instruction lines, then parses them."""

    name = "remote"

    def __init__(self, transport, diagnosis=None, max_format_retries=2):
        self.transport = transport
        self.diagnosis = diagnosis
        self.max_format_retries = max_format_retries

    def propose(self, request):
        import io
        import zipfile

        from .diagnose import PromptBundle
        from .sb3 import serialize_sb3

        if _DISALLOWED_FIX_RE.search(request.fix.text or ""):
            raise DisallowedEdit(
                "fix %r asks for new features or a rewrite" % request.fix.text)
        archive = serialize_sb3(request.project.project)
        with zipfile.ZipFile(io.BytesIO(archive)) as zf:
            project_json = zf.read("project.json").decode("utf-8")
        parts = [{"kind": "text", "text": "Project JSON:\n" + project_json}]
        if self.diagnosis is not None:
            parts.append({"kind": "text",
                          "text": "Diagnosis:\n" + self.diagnosis.two_line()})
        parts.append({"kind": "text",
                      "text": "Chosen fix: %s-%s" % (request.fix.label, request.fix.text)})
        if request.failure_log:
            import json as json_mod
            parts.append({"kind": "text",
                          "text": "Last verification log:\n"
                          + json_mod.dumps(request.failure_log, sort_keys=True)[:4000]})
        bundle = PromptBundle(system_text=REPAIR_TASK_TEXT, parts=parts)
        attempt_parts = list(bundle.parts)
        last_violation = None
        for _try in range(1 + self.max_format_retries):
            text = self.transport.complete(
                PromptBundle(system_text=bundle.system_text, parts=attempt_parts))
            try:
                edits = parse_instructions(text, request.project)
                return Patch(edits=edits, budget=3, provenance=text)
            except FormatViolation as exc:
                last_violation = exc
                attempt_parts = attempt_parts + [{
                    "kind": "text",
                    "text": "Format violation: %s. Reply again using exactly the "
                            "required output format." % exc,
                }]
        raise last_violation
