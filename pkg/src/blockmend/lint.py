"""Static bug-pattern detectors over the block graph.

Syntactic and dataflow-lite checks (reachability over next links and
substacks, no fixpoint analysis): enough precision to prime the offline
diagnoser, not a sound program analysis.  Findings never auto-apply.
"""

from dataclasses import dataclass, field

from .builder import flag, set_var
from .edits import EditOp, Locator
from .model import BlockRef, Literal, VariableRef, is_hat_opcode, substack_inputs
from .taxonomy import row_for_detector

DETECTOR_PRIORITY = (
    "GlobalBroadcastFanout",
    "MessageNeverReceived",
    "VariableWrittenNeverRead",
    "MissingResetScript",
    "MissingTermination",
    "RecursiveCloning",
    "ForeverInsideLoop",
    "CustomBlockWithForever",
    "ComparingLiterals",
    "ReadNeverWritten",
    "NoWorkingScripts",
    "OrphanScripts",
)

_COMPARISON_OPS = ("operator_lt", "operator_equals", "operator_gt")
_VAR_WRITE_OPS = ("data_setvariableto", "data_changevariableby")
_SELF_LIMITING_PREFIXES = ("motion_",)
_SELF_LIMITING_OPS = ("looks_hide", "looks_show", "control_stop",
                      "control_delete_this_clone")


@dataclass(frozen=True)
class Finding:
    pattern: str
    detector: str
    sprite: str
    block_ids: tuple
    explanation: str
    fix_hint: str = ""
    fix_sketch: tuple = ()

    def describe(self):
        return "[%s] %s: %s" % (self.detector, self.sprite, self.explanation)

    def to_dict(self):
        return {
            "pattern": self.pattern,
            "detector": self.detector,
            "sprite": self.sprite,
            "block_ids": list(self.block_ids),
            "explanation": self.explanation,
            "fix_hint": self.fix_hint,
        }


def _finding(detector, sprite, block_ids, explanation, fix_hint="", fix_sketch=()):
    return Finding(
        pattern=row_for_detector(detector) or detector,
        detector=detector,
        sprite=sprite,
        block_ids=tuple(block_ids),
        explanation=explanation,
        fix_hint=fix_hint,
        fix_sketch=tuple(fix_sketch),
    )


def edit_distance(a, b):
    a, b = a.lower(), b.lower()
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def analyze(normalized):
    """All detectors over a normalized project; deterministic output order."""
    project = normalized.project
    findings = []
    findings += _detect_message_never_received(project)
    findings += _detect_variable_flow(project)
    findings += _detect_fanout(project)
    findings += _detect_missing_reset(project)
    findings += _detect_missing_termination(project)
    findings += _detect_recursive_cloning(project)
    findings += _detect_forever_inside_loop(project)
    findings += _detect_custom_block_forever(project)
    findings += _detect_comparing_literals(project)
    findings += _detect_script_health(project)
    findings.sort(key=lambda f: (DETECTOR_PRIORITY.index(f.detector), f.sprite, f.block_ids))
    return findings


# -- shared walks -------------------------------------------------------------

def _all_blocks(project):
    for target in project.targets:
        for block in target.blocks.values():
            yield target, block


def _broadcast_senders(project):
    out = []
    for target, block in _all_blocks(project):
        if block.opcode in ("event_broadcast", "event_broadcastandwait"):
            val = block.inputs.get("BROADCAST_INPUT")
            name = None
            if hasattr(val, "name"):
                name = val.name
            elif isinstance(val, Literal):
                name = str(val.value)
            if name is not None:
                out.append((name, target, block))
    return out


def _broadcast_receivers(project):
    out = []
    for target, block in _all_blocks(project):
        if block.opcode == "event_whenbroadcastreceived":
            out.append((block.field_value("BROADCAST_OPTION", ""), target, block))
    return out


def _variable_registry(project):
    """var id -> (name, owner target)."""
    reg = {}
    for target in project.targets:
        for vid, (name, _val) in target.variables.items():
            reg[vid] = (name, target)
    return reg


def _var_writes(project):
    out = []
    for target, block in _all_blocks(project):
        if block.opcode in _VAR_WRITE_OPS:
            pair = block.fields.get("VARIABLE")
            if pair:
                out.append((pair[1] or pair[0], pair[0], target, block))
    return out


def _var_reads(project):
    """Var ids read by any expression."""
    read = set()
    for _target, block in _all_blocks(project):
        if block.opcode == "data_variable":
            pair = block.fields.get("VARIABLE")
            if pair:
                read.add(pair[1] or pair[0])
        for val in block.inputs.values():
            if isinstance(val, VariableRef):
                read.add(val.var_id)
    return read


def _subtree_opcodes(target, head_id):
    seen = set()
    ops = []
    stack = [head_id]
    while stack:
        bid = stack.pop()
        if bid in seen or bid not in target.blocks:
            continue
        seen.add(bid)
        block = target.blocks[bid]
        ops.append(block)
        for val in block.inputs.values():
            if isinstance(val, BlockRef):
                stack.append(val.block_id)
        if block.next:
            stack.append(block.next)
    return ops


# -- detectors ----------------------------------------------------------------

def _detect_message_never_received(project):
    senders = _broadcast_senders(project)
    receivers = _broadcast_receivers(project)
    sent_names = {name for name, _t, _b in senders}
    recv_names = {name for name, _t, _b in receivers}
    findings = []
    orphan_sends = sorted(sent_names - recv_names)
    orphan_recvs = sorted(recv_names - sent_names)
    paired = set()
    for sname in orphan_sends:
        best = None
        for rname in orphan_recvs:
            if rname in paired:
                continue
            d = edit_distance(sname, rname)
            if d <= max(2, len(rname) // 3) and (best is None or d < best[0]):
                best = (d, rname)
        sender_blocks = [b for name, _t, b in senders if name == sname]
        sender_sprites = [t.name for name, t, _b in senders if name == sname]
        if best:
            _d, rname = best
            paired.add(rname)
            recv_blocks = [b for name, _t, b in receivers if name == rname]
            findings.append(_finding(
                "MessageNeverReceived", sender_sprites[0],
                [b.id for b in sender_blocks] + [b.id for b in recv_blocks],
                "broadcast %r is sent but only %r is received; the names do not match"
                % (sname, rname),
                fix_hint="rename the broadcast %r to %r so sender and receiver match"
                % (sname, rname),
                fix_sketch=[EditOp(
                    "TweakLiteral", sender_sprites[0],
                    anchor=sender_blocks[0].id,
                    payload={"input": "BROADCAST_INPUT", "old": sname, "new": rname},
                )],
            ))
        else:
            findings.append(_finding(
                "MessageNeverReceived", sender_sprites[0],
                [b.id for b in sender_blocks],
                "broadcast %r has no receiver anywhere" % sname,
            ))
    for rname in orphan_recvs:
        if rname in paired:
            continue
        recv_blocks = [(t, b) for name, t, b in receivers if name == rname]
        findings.append(_finding(
            "MessageNeverReceived", recv_blocks[0][0].name,
            [b.id for _t, b in recv_blocks],
            "receiver for %r never gets the message; nothing broadcasts it" % rname,
        ))
    return findings


def _detect_variable_flow(project):
    reg = _variable_registry(project)
    writes = _var_writes(project)
    reads = _var_reads(project)
    displayed = {name for _sprite, name in project.displayed_variables()}
    written_ids = {vid for vid, _n, _t, _b in writes}
    findings = []
    for vid, (name, owner) in sorted(reg.items()):
        if vid in written_ids and vid not in reads and name not in displayed:
            near = _nearest_variable(reg, reads, displayed, name, vid)
            blocks = [b for wvid, _n, _t, b in writes if wvid == vid]
            sprite = [t.name for wvid, _n, t, _b in writes if wvid == vid][0]
            hint = ""
            sketch = []
            if near:
                hint = "point the write at %r instead of %r" % (near, name)
                sketch = [EditOp(
                    "TweakLiteral", sprite, anchor=blocks[0].id,
                    payload={"field": "VARIABLE", "old": name, "new": near},
                )]
            findings.append(_finding(
                "VariableWrittenNeverRead", sprite, [b.id for b in blocks],
                "variable %r is written but never read or displayed" % name,
                fix_hint=hint, fix_sketch=sketch,
            ))
        if vid in reads and vid not in written_ids:
            findings.append(_finding(
                "ReadNeverWritten", owner.name, (),
                "variable %r is read but never written" % name,
            ))
    return findings


def _nearest_variable(reg, reads, displayed, name, exclude_vid):
    best = None
    for vid, (cand, _owner) in reg.items():
        if vid == exclude_vid:
            continue
        if vid not in reads and cand not in displayed:
            continue
        d = edit_distance(name, cand)
        if d <= max(2, len(cand) // 3) and (best is None or d < best[0]):
            best = (d, cand)
    return best[1] if best else None


def _detect_fanout(project):
    receivers = _broadcast_receivers(project)
    stage = project.stage
    global_names = {vid: name for vid, (name, _v) in (stage.variables.items() if stage else ())}
    by_message = {}
    for name, target, hat in receivers:
        by_message.setdefault(name, []).append((target, hat))
    findings = []
    for message, hats in sorted(by_message.items()):
        sprites = {t.name for t, _h in hats}
        if len(sprites) < 2:
            continue
        mutated = {}
        for target, hat in hats:
            for block in target.script_blocks(hat):
                if block.opcode in _VAR_WRITE_OPS:
                    pair = block.fields.get("VARIABLE")
                    if pair and (pair[1] in global_names):
                        mutated.setdefault(pair[0], []).append((target, hat, block))
        for var_name, sites in sorted(mutated.items()):
            if len({t.name for t, _h, _b in sites}) < 2:
                continue
            findings.append(_finding(
                "GlobalBroadcastFanout", sorted(sprites)[0],
                [h.id for _t, h, _b in sites],
                "message %r is received by %d sprites and each one changes %r; "
                "one trigger updates it %d times"
                % (message, len(sprites), var_name, len(sites)),
                fix_hint="update %r in the triggering sprite's own script instead of "
                "broadcasting to every listener" % var_name,
            ))
    return findings


def _detect_missing_reset(project):
    reg = _variable_registry(project)
    writes = _var_writes(project)
    findings = []
    flag_set_ids = set()
    for target in project.targets:
        for hat in target.hat_blocks():
            if hat.opcode != "event_whenflagclicked":
                continue
            for block in target.script_blocks(hat):
                if block.opcode == "data_setvariableto":
                    pair = block.fields.get("VARIABLE")
                    if pair:
                        flag_set_ids.add(pair[1] or pair[0])
    changed_ids = {vid for vid, _n, _t, b in writes if b.opcode == "data_changevariableby"}
    for sprite_name, var_name in sorted(project.displayed_variables(), key=lambda p: (str(p[0]), p[1])):
        owner = project.target(sprite_name) if sprite_name else project.stage
        if owner is None:
            continue
        vid = None
        for cand, (name, tgt) in reg.items():
            if name == var_name and tgt is owner:
                vid = cand
                break
        if vid is None:
            continue
        if vid in changed_ids and vid not in flag_set_ids:
            findings.append(_finding(
                "MissingResetScript", owner.name, (),
                "displayed variable %r is changed during play but never reset "
                "when the flag is clicked" % var_name,
                fix_hint="add a flag script on %s that sets %r to 0" % (owner.name, var_name),
                fix_sketch=[EditOp(
                    "AddHat", owner.name,
                    payload={"hat": flag(), "body": (set_var(var_name, 0),)},
                )],
            ))
    return findings


def _detect_missing_termination(project):
    reads = _var_reads(project)
    findings = []
    for target, block in _all_blocks(project):
        if block.opcode != "control_forever":
            continue
        sub = block.inputs.get("SUBSTACK")
        if not isinstance(sub, BlockRef):
            continue
        body = _subtree_opcodes(target, sub.block_id)
        if any(b.opcode in _SELF_LIMITING_OPS or
               b.opcode.startswith(_SELF_LIMITING_PREFIXES) for b in body):
            continue
        for b in body:
            if b.opcode in _VAR_WRITE_OPS:
                pair = b.fields.get("VARIABLE")
                if pair and (pair[1] or pair[0]) not in reads:
                    findings.append(_finding(
                        "MissingTermination", target.name, (block.id, b.id),
                        "a forever loop keeps changing %r but nothing ever tests it, "
                        "so the loop never stops" % pair[0],
                        fix_hint="stop the loop when %r reaches its bound" % pair[0],
                    ))
    return findings


def _detect_recursive_cloning(project):
    findings = []
    for target in project.targets:
        for hat in target.hat_blocks():
            if hat.opcode != "control_start_as_clone":
                continue
            for block in target.script_blocks(hat):
                if block.opcode != "control_create_clone_of":
                    continue
                val = block.inputs.get("CLONE_OPTION")
                name = "_myself_"
                if isinstance(val, BlockRef):
                    menu = target.blocks.get(val.block_id)
                    if menu:
                        name = menu.field_value("CLONE_OPTION", "_myself_")
                elif isinstance(val, Literal):
                    name = str(val.value)
                if name in ("_myself_", target.name):
                    findings.append(_finding(
                        "RecursiveCloning", target.name, (hat.id, block.id),
                        "a clone of %s creates another clone of itself; clones multiply "
                        "until the cap" % target.name,
                        fix_hint="create clones from a normal script, not from the "
                        "clone-start script",
                    ))
    return findings


def _detect_forever_inside_loop(project):
    findings = []
    for target, block in _all_blocks(project):
        if block.opcode != "control_forever":
            continue
        if block.next is not None:
            findings.append(_finding(
                "ForeverInsideLoop", target.name, (block.id, block.next),
                "blocks after a forever loop can never run",
                fix_hint="move the trailing blocks inside the loop or delete the loop",
            ))
        cur = block.parent
        while cur is not None:
            parent = target.blocks.get(cur)
            if parent is None:
                break
            if parent.opcode in ("control_repeat", "control_repeat_until"):
                findings.append(_finding(
                    "ForeverInsideLoop", target.name, (parent.id, block.id),
                    "a forever loop inside %s keeps the outer loop from ever advancing"
                    % parent.opcode.replace("control_", ""),
                    fix_hint="replace the inner forever with the outer loop's body",
                ))
                break
            cur = parent.parent
    return findings


def _detect_custom_block_forever(project):
    findings = []
    for target, block in _all_blocks(project):
        if block.opcode != "procedures_definition":
            continue
        body = _subtree_opcodes(target, block.id)
        for b in body:
            if b.opcode == "control_forever":
                findings.append(_finding(
                    "CustomBlockWithForever", target.name, (block.id, b.id),
                    "a custom block contains a forever loop; callers never get control back",
                    fix_hint="loop at the call site instead of inside the definition",
                ))
                break
    return findings


def _detect_comparing_literals(project):
    findings = []
    for target, block in _all_blocks(project):
        if block.opcode not in _COMPARISON_OPS or block.shadow:
            continue
        operands = [block.inputs.get("OPERAND1"), block.inputs.get("OPERAND2")]
        if all(isinstance(v, Literal) for v in operands):
            findings.append(_finding(
                "ComparingLiterals", target.name, (block.id,),
                "comparison %r vs %r is between two constants and never changes"
                % (operands[0].value, operands[1].value),
                fix_hint="compare against a variable or sensor value",
            ))
    return findings


def _detect_script_health(project):
    findings = []
    for target in project.targets:
        if not target.blocks:
            continue
        hats = target.hat_blocks()
        orphans = [b for b in target.blocks.values()
                   if b.top_level and not b.shadow and not is_hat_opcode(b.opcode)]
        if not hats and orphans:
            findings.append(_finding(
                "NoWorkingScripts", target.name, [b.id for b in orphans],
                "%s has blocks but no event hat; nothing ever runs" % target.name,
                fix_hint="attach the scripts to an event hat",
            ))
        elif orphans:
            findings.append(_finding(
                "OrphanScripts", target.name, [b.id for b in orphans],
                "%d script(s) in %s have no event hat and never run"
                % (len(orphans), target.name),
                fix_hint="attach the orphan scripts to an event hat or delete them",
            ))
    return findings


DETECTORS = frozenset(DETECTOR_PRIORITY)
