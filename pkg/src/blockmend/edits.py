"""Anchor-based block edits with link-integrity preservation.

Edits come in six kinds: TweakLiteral, InsertBlock, ReplaceBlock, AddHat,
DeleteBlock, WrapBlocks.  Each edit names a target sprite and an anchor
(exact block id, or an opcode locator that must resolve uniquely), applies
atomically, and returns an inverse that restores an isomorphic graph.
Patches bundle up to `budget` edits and roll back entirely on any failure.
"""

from dataclasses import dataclass, field as dc_field

from .builder import (
    BlockTemplate,
    IdGen,
    materialize_chain,
    resolve_broadcast,
    resolve_variable,
)
from .model import (
    BlockRef,
    BroadcastRef,
    Literal,
    check_link_integrity,
    is_hat_opcode,
    substack_inputs,
)
from .normalize import normalize

EDIT_KINDS = ("TweakLiteral", "InsertBlock", "ReplaceBlock", "AddHat", "DeleteBlock", "WrapBlocks")
RELATIONS = ("after", "before", "inside", "wrap", "replace", "at")


class EditError(Exception):
    pass


class AnchorNotFound(EditError):
    pass


class AnchorAmbiguous(EditError):
    def __init__(self, message, matches):
        super().__init__("%s (matches: %s)" % (message, ", ".join(matches)))
        self.matches = matches


class InvariantViolated(EditError):
    pass


class PatchApplyError(EditError):
    def __init__(self, index, cause):
        super().__init__("edit %d failed: %s" % (index, cause))
        self.index = index
        self.cause = cause


@dataclass(frozen=True)
class Locator:
    """Opcode-based anchor: must match exactly one block in the sprite.

    `arg` narrows by any field value, literal input, or var/broadcast name on
    the block; `within` narrows to blocks inside the script of a matching
    context block (its hat or any enclosing block).
    """
    opcode: str
    arg: str | None = None
    within: "Locator | None" = None

    def describe(self):
        s = self.opcode
        if self.arg is not None:
            s += "(%s)" % self.arg
        if self.within is not None:
            s += " within %s" % self.within.describe()
        return s


@dataclass
class EditOp:
    kind: str
    target_sprite: str
    anchor: object = None            # block id str | Locator | None (AddHat)
    relation: str = "at"
    payload: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise InvariantViolated("unknown edit kind %r" % self.kind)
        if self.relation not in RELATIONS:
            raise InvariantViolated("unknown relation %r" % self.relation)
        if self.kind != "AddHat" and self.anchor is None:
            raise InvariantViolated("%s requires an anchor" % self.kind)


@dataclass
class InverseEditOp:
    """Restores one target's block graph (and the broadcast table) exactly."""
    target_sprite: str
    blocks: dict
    broadcasts: dict


@dataclass
class Patch:
    edits: list
    budget: int = 3
    provenance: str = ""

    def __post_init__(self):
        if len(self.edits) > self.budget:
            raise InvariantViolated(
                "patch has %d edits, budget is %d" % (len(self.edits), self.budget))
        by_anchor = {}
        for e in self.edits:
            if isinstance(e.anchor, str):
                by_anchor.setdefault(e.anchor, set()).add(e.kind)
        for anchor, kinds in by_anchor.items():
            if len(kinds) > 1:
                raise InvariantViolated(
                    "edits of kinds %s conflict on block %s" % (sorted(kinds), anchor))


@dataclass
class RepairedProject:
    project: object
    normalized: object
    patch: Patch


# ---------------------------------------------------------------------------
# Anchor resolution
# ---------------------------------------------------------------------------

def _script_head(target, bid):
    seen = set()
    cur = target.blocks.get(bid)
    while cur is not None and cur.parent is not None and cur.id not in seen:
        seen.add(cur.id)
        cur = target.blocks.get(cur.parent)
    return cur


def _block_matches(target, project, block, locator):
    if block.opcode != locator.opcode or block.shadow:
        return False
    if locator.arg is not None:
        arg = str(locator.arg)
        hay = []
        for value, _fid in block.fields.values():
            hay.append(str(value))
        for val in block.inputs.values():
            if isinstance(val, Literal):
                hay.append(str(val.value))
            elif isinstance(val, BroadcastRef):
                hay.append(val.name)
            elif isinstance(val, BlockRef):
                child = target.blocks.get(val.block_id)
                if child is not None and child.shadow:
                    for value, _fid in child.fields.values():
                        hay.append(str(value))
            elif hasattr(val, "name"):
                hay.append(val.name)
        if arg not in hay:
            return False
    if locator.within is not None:
        head = _script_head(target, block.id)
        if head is None:
            return False
        in_script = target.script_blocks(head)
        context = [b for b in in_script
                   if b.id != block.id and _block_matches(target, project, b, locator.within)]
        if not context:
            return False
    return True


def resolve_anchor(project, target, anchor):
    """Anchor -> block id.  Exact ids win; locators must be unique."""
    if isinstance(anchor, str):
        if anchor in target.blocks:
            return anchor
        raise AnchorNotFound("no block %s in sprite %s" % (anchor, target.name))
    if isinstance(anchor, Locator):
        matches = [b.id for b in target.blocks.values()
                   if _block_matches(target, project, b, anchor)]
        if not matches:
            raise AnchorNotFound(
                "no block matching %s in sprite %s" % (anchor.describe(), target.name))
        if len(matches) > 1:
            raise AnchorAmbiguous(
                "locator %s in sprite %s" % (anchor.describe(), target.name), sorted(matches))
        return matches[0]
    raise AnchorNotFound("unusable anchor %r" % (anchor,))


# ---------------------------------------------------------------------------
# Edit application
# ---------------------------------------------------------------------------

def apply_edit(normalized, edit, id_prefix="fix-0"):
    """Apply one edit; returns (new NormalizedProject, InverseEditOp).

    The input is never mutated.  On any integrity violation the candidate is
    discarded and InvariantViolated raised.
    """
    project = normalized.project.copy()
    target = project.target(edit.target_sprite)
    if target is None:
        raise AnchorNotFound("no sprite named %s" % edit.target_sprite)
    inverse = InverseEditOp(
        target_sprite=target.name,
        blocks=dict(normalized.project.target(edit.target_sprite).blocks),
        broadcasts=dict(normalized.project.broadcasts),
    )
    idgen = _fresh_idgen(target, id_prefix)

    if edit.kind == "TweakLiteral":
        anchor_id = resolve_anchor(project, target, edit.anchor)
        _tweak(project, target, anchor_id, edit.payload)
    elif edit.kind == "InsertBlock":
        anchor_id = resolve_anchor(project, target, edit.anchor)
        _insert(project, target, anchor_id, edit.relation, edit.payload, idgen)
    elif edit.kind == "ReplaceBlock":
        anchor_id = resolve_anchor(project, target, edit.anchor)
        _replace(project, target, anchor_id, edit.payload, idgen)
    elif edit.kind == "DeleteBlock":
        anchor_id = resolve_anchor(project, target, edit.anchor)
        _delete(project, target, anchor_id, bool(edit.payload.get("subtree", False)))
    elif edit.kind == "AddHat":
        _add_hat(project, target, edit.payload, idgen)
    elif edit.kind == "WrapBlocks":
        anchor_id = resolve_anchor(project, target, edit.anchor)
        _wrap(project, target, anchor_id, edit.payload, idgen)

    problems = check_link_integrity(target)
    if problems:
        raise InvariantViolated("edit would break links: %s" % "; ".join(problems))
    return normalize(project), inverse


def apply_inverse(normalized, inverse):
    project = normalized.project.copy()
    target = project.target(inverse.target_sprite)
    if target is None:
        raise AnchorNotFound("no sprite named %s" % inverse.target_sprite)
    target.blocks = dict(inverse.blocks)
    project.broadcasts = dict(inverse.broadcasts)
    return normalize(project)


def apply_patch(normalized, patch, attempt=1):
    """All edits in order, atomically; failures roll the whole patch back."""
    Patch(list(patch.edits), patch.budget, patch.provenance)  # re-check invariants
    current = normalized
    for i, edit in enumerate(patch.edits, start=1):
        try:
            current, _inv = apply_edit(current, edit, id_prefix="fix-%d-%d" % (attempt, i))
        except EditError as exc:
            raise PatchApplyError(i, exc) from exc
    return RepairedProject(project=current.project, normalized=current, patch=patch)


def _fresh_idgen(target, prefix):
    gen = IdGen(prefix)
    existing = set(target.blocks)

    def next_id():
        nid = gen()
        while nid in existing:
            nid = gen()
        existing.add(nid)
        return nid

    return next_id


# -- kind implementations -----------------------------------------------------

def _tweak(project, target, anchor_id, payload):
    block = target.blocks[anchor_id]
    new = payload.get("new")
    old = payload.get("old")
    input_name = payload.get("input")
    field_name = payload.get("field")

    if input_name is None and field_name is None:
        candidates = []
        for iname, ival in block.inputs.items():
            if isinstance(ival, (Literal, BroadcastRef)) and _value_eq(ival, old):
                candidates.append(("input", iname))
        for fname, (value, _fid) in block.fields.items():
            if old is not None and str(value) == str(old):
                candidates.append(("field", fname))
        if not candidates:
            raise AnchorNotFound(
                "no literal with value %r on block %s" % (old, anchor_id))
        if len(candidates) > 1:
            raise AnchorAmbiguous(
                "literal %r on block %s" % (old, anchor_id),
                ["%s %s" % c for c in candidates])
        slot_kind, slot = candidates[0]
        if slot_kind == "input":
            input_name = slot
        else:
            field_name = slot

    if input_name is not None:
        current = block.inputs.get(input_name)
        if current is None:
            raise AnchorNotFound("block %s has no input %s" % (anchor_id, input_name))
        if old is not None and not _value_eq(current, old):
            raise AnchorNotFound(
                "input %s on block %s is %s, expected %r"
                % (input_name, anchor_id, current.describe(), old))
        if isinstance(current, BroadcastRef):
            bcid = resolve_broadcast(project, str(new), create=True)
            replacement = BroadcastRef(bcid, str(new))
        elif isinstance(current, Literal):
            replacement = Literal(new)
        else:
            raise InvariantViolated(
                "input %s on block %s holds a block, not a literal" % (input_name, anchor_id))
        new_inputs = dict(block.inputs)
        new_inputs[input_name] = replacement
        target.blocks[anchor_id] = block.with_(inputs=new_inputs)
        return

    pair = block.fields.get(field_name)
    if pair is None:
        raise AnchorNotFound("block %s has no field %s" % (anchor_id, field_name))
    if old is not None and str(pair[0]) != str(old):
        raise AnchorNotFound(
            "field %s on block %s is %r, expected %r" % (field_name, anchor_id, pair[0], old))
    if field_name == "VARIABLE":
        vid, _owner = resolve_variable(project, target, str(new))
        if vid is None:
            raise InvariantViolated("no variable named %r to point at" % new)
        replacement = (str(new), vid)
    elif field_name == "BROADCAST_OPTION":
        bcid = resolve_broadcast(project, str(new), create=True)
        replacement = (str(new), bcid)
    else:
        replacement = (str(new), None)
    new_fields = dict(block.fields)
    new_fields[field_name] = replacement
    target.blocks[anchor_id] = block.with_(fields=new_fields)


def _value_eq(input_value, expected):
    if expected is None:
        return True
    if isinstance(input_value, Literal):
        return str(input_value.value) == str(expected)
    if isinstance(input_value, BroadcastRef):
        return input_value.name == str(expected)
    return False


def _materialize(project, target, templates, idgen, parent=None):
    head, tail, new_ids = materialize_chain(
        list(templates), project, target, idgen, parent=parent,
        allow_create_broadcast=False)
    if head is None:
        raise InvariantViolated("empty block template")
    return head, tail, new_ids


def _insert(project, target, anchor_id, relation, payload, idgen):
    templates = payload.get("templates") or ()
    if not templates:
        raise InvariantViolated("InsertBlock needs at least one template")
    anchor = target.blocks[anchor_id]

    if relation == "after":
        head, tail, _ids = _materialize(project, target, templates, idgen, parent=anchor_id)
        old_next = anchor.next
        target.blocks[anchor_id] = anchor.with_(next=head)
        target.blocks[tail] = target.blocks[tail].with_(next=old_next)
        if old_next:
            target.blocks[old_next] = target.blocks[old_next].with_(parent=tail)
        return

    if relation == "before":
        if anchor.parent is None:
            raise InvariantViolated("cannot insert before a script head")
        parent = target.blocks[anchor.parent]
        head, tail, _ids = _materialize(project, target, templates, idgen, parent=anchor.parent)
        target.blocks[tail] = target.blocks[tail].with_(next=anchor_id)
        if parent.next == anchor_id:
            target.blocks[parent.id] = parent.with_(next=head)
        else:
            slot = None
            for iname, ival in parent.inputs.items():
                if isinstance(ival, BlockRef) and ival.block_id == anchor_id:
                    slot = iname
                    break
            if slot is None:
                raise InvariantViolated(
                    "block %s is not linked from its parent %s" % (anchor_id, parent.id))
            new_inputs = dict(parent.inputs)
            new_inputs[slot] = BlockRef(head)
            target.blocks[parent.id] = parent.with_(inputs=new_inputs)
        target.blocks[anchor_id] = anchor.with_(parent=tail)
        return

    if relation == "inside":
        if is_hat_opcode(anchor.opcode):
            tail_id = anchor_id
            while target.blocks[tail_id].next:
                tail_id = target.blocks[tail_id].next
            head, tail, _ids = _materialize(project, target, templates, idgen, parent=tail_id)
            target.blocks[tail_id] = target.blocks[tail_id].with_(next=head)
            return
        subs = substack_inputs(anchor.opcode)
        if not subs:
            raise InvariantViolated(
                "relation 'inside' needs a hat or a C-block, not %s" % anchor.opcode)
        slot = subs[0]
        existing = anchor.inputs.get(slot)
        if isinstance(existing, BlockRef):
            tail_id = existing.block_id
            while target.blocks[tail_id].next:
                tail_id = target.blocks[tail_id].next
            head, tail, _ids = _materialize(project, target, templates, idgen, parent=tail_id)
            target.blocks[tail_id] = target.blocks[tail_id].with_(next=head)
        else:
            head, tail, _ids = _materialize(project, target, templates, idgen, parent=anchor_id)
            new_inputs = dict(anchor.inputs)
            new_inputs[slot] = BlockRef(head)
            target.blocks[anchor_id] = anchor.with_(inputs=new_inputs)
        return

    raise InvariantViolated("InsertBlock relation must be after/before/inside, not %r" % relation)


def _subtree_ids(target, root_id, include_chain=False):
    """Ids of root plus everything hanging off its inputs (substack bodies
    follow their own next-chains); root's own next-chain only when asked."""
    out = set()
    stack = [(root_id, include_chain)]
    while stack:
        bid, follow = stack.pop()
        if bid in out or bid not in target.blocks:
            continue
        out.add(bid)
        block = target.blocks[bid]
        for val in block.inputs.values():
            if isinstance(val, BlockRef):
                stack.append((val.block_id, True))
        if follow and block.next:
            stack.append((block.next, True))
    return out


def _unlink(target, block):
    """Detach `block` from its predecessor, rewiring to `replacement_id=None`."""
    if block.parent is None:
        return None, None
    parent = target.blocks[block.parent]
    if parent.next == block.id:
        return parent.id, "next"
    for iname, ival in parent.inputs.items():
        if isinstance(ival, BlockRef) and ival.block_id == block.id:
            return parent.id, iname
    return None, None


def _relink(target, parent_id, slot, new_id):
    if parent_id is None:
        if new_id is not None:
            target.blocks[new_id] = target.blocks[new_id].with_(parent=None, top_level=True)
        return
    parent = target.blocks[parent_id]
    if slot == "next":
        target.blocks[parent_id] = parent.with_(next=new_id)
    else:
        new_inputs = dict(parent.inputs)
        if new_id is None:
            new_inputs.pop(slot, None)
        else:
            new_inputs[slot] = BlockRef(new_id)
        target.blocks[parent_id] = parent.with_(inputs=new_inputs)
    if new_id is not None:
        target.blocks[new_id] = target.blocks[new_id].with_(parent=parent_id, top_level=False)


def _delete(project, target, anchor_id, subtree):
    block = target.blocks[anchor_id]
    if is_hat_opcode(block.opcode):
        if not subtree:
            raise InvariantViolated("deleting a hat requires subtree=true")
        for bid in _subtree_ids(target, anchor_id, include_chain=True):
            target.blocks.pop(bid, None)
        return
    parent_id, slot = _unlink(target, block)
    successor = block.next
    if subtree:
        doomed = _subtree_ids(target, anchor_id)
        doomed.discard(successor)
        splice_head = successor
        splice_tail = None
    else:
        # splice substack chains up into the deleted block's position
        doomed = {anchor_id}
        for iname, ival in block.inputs.items():
            if iname not in substack_inputs(block.opcode) and isinstance(ival, BlockRef):
                doomed |= _subtree_ids(target, ival.block_id)
        chain_heads = []
        for iname in substack_inputs(block.opcode):
            ival = block.inputs.get(iname)
            if isinstance(ival, BlockRef):
                chain_heads.append(ival.block_id)
        splice_head = None
        splice_tail = None
        for head in chain_heads:
            if splice_head is None:
                splice_head = head
            else:
                target.blocks[splice_tail] = target.blocks[splice_tail].with_(next=head)
                target.blocks[head] = target.blocks[head].with_(parent=splice_tail)
            tail = head
            while target.blocks[tail].next:
                tail = target.blocks[tail].next
            splice_tail = tail
        if splice_head is None:
            splice_head = successor
        elif successor:
            target.blocks[splice_tail] = target.blocks[splice_tail].with_(next=successor)
            target.blocks[successor] = target.blocks[successor].with_(parent=splice_tail)
    for bid in doomed:
        target.blocks.pop(bid, None)
    if splice_head is not None and splice_head in target.blocks:
        _relink(target, parent_id, slot, splice_head)
        if parent_id is None:
            # deleted a top-level orphan head: promote the spliced chain
            target.blocks[splice_head] = target.blocks[splice_head].with_(
                parent=None, top_level=True)
    elif parent_id is not None:
        _relink(target, parent_id, slot, None)


def _replace(project, target, anchor_id, payload, idgen):
    templates = payload.get("templates") or ()
    if len(templates) != 1:
        raise InvariantViolated("ReplaceBlock takes exactly one template")
    block = target.blocks[anchor_id]
    if is_hat_opcode(block.opcode):
        raise InvariantViolated("cannot replace a hat block; use AddHat/DeleteBlock")
    parent_id, slot = _unlink(target, block)
    successor = block.next
    doomed = _subtree_ids(target, anchor_id)
    doomed.discard(successor)
    for bid in doomed:
        target.blocks.pop(bid, None)
    head, tail, _ids = _materialize(project, target, templates, idgen, parent=parent_id)
    if successor:
        target.blocks[tail] = target.blocks[tail].with_(next=successor)
        target.blocks[successor] = target.blocks[successor].with_(parent=tail)
    if parent_id is None:
        target.blocks[head] = target.blocks[head].with_(parent=None, top_level=block.top_level)
    else:
        _relink(target, parent_id, slot, head)


def _add_hat(project, target, payload, idgen):
    hat_template = payload.get("hat")
    body = payload.get("body") or ()
    if not isinstance(hat_template, BlockTemplate) or not is_hat_opcode(hat_template.opcode):
        raise InvariantViolated("AddHat payload needs a hat template")
    hat_id, _tail, _ids = _materialize(project, target, [hat_template] + list(body), idgen)
    target.blocks[hat_id] = target.blocks[hat_id].with_(parent=None, top_level=True)


def _wrap(project, target, anchor_id, payload, idgen):
    template = payload.get("template")
    if not isinstance(template, BlockTemplate) or not substack_inputs(template.opcode):
        raise InvariantViolated("WrapBlocks payload needs a C-block template")
    through = payload.get("through")
    first = target.blocks[anchor_id]
    if is_hat_opcode(first.opcode):
        raise InvariantViolated("cannot wrap a hat block")
    last_id = anchor_id
    if through is not None:
        through_id = resolve_anchor(project, target, through)
        cur = anchor_id
        found = False
        while cur is not None:
            if cur == through_id:
                found = True
                break
            cur = target.blocks[cur].next
        if not found:
            raise InvariantViolated(
                "wrap range end %s is not on the chain from %s" % (through_id, anchor_id))
        last_id = through_id
    parent_id, slot = _unlink(target, first)
    successor = target.blocks[last_id].next
    head, _tail, _ids = _materialize(project, target, [template], idgen, parent=parent_id)
    wrapper = target.blocks[head]
    sub_slot = substack_inputs(wrapper.opcode)[0]
    new_inputs = dict(wrapper.inputs)
    new_inputs[sub_slot] = BlockRef(anchor_id)
    target.blocks[head] = wrapper.with_(inputs=new_inputs, next=successor,
                                        parent=parent_id, top_level=first.top_level and parent_id is None)
    target.blocks[anchor_id] = target.blocks[anchor_id].with_(parent=head, top_level=False)
    target.blocks[last_id] = target.blocks[last_id].with_(next=None)
    if successor:
        target.blocks[successor] = target.blocks[successor].with_(parent=head)
    if parent_id is not None:
        _relink(target, parent_id, slot, head)
