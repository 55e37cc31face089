"""Read and write .sb3 archives (ZIP with project.json plus assets).

Loading is permissive: structural damage in otherwise-valid JSON is repaired
where possible and recorded as load warnings instead of raising.  The schema
handled here is the Scratch 3.0 subset documented in docs/format.md.
"""

import io
import json
import zipfile

from .model import (
    Block,
    BlockRef,
    BroadcastRef,
    CostumeRef,
    ListRef,
    Literal,
    Project,
    Target,
    VariableRef,
    assert_project_ok,
    default_fill_color,
    is_hat_opcode,
    substack_inputs,
)

# Fixed timestamp keeps archives byte-stable across runs.
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


class Sb3Error(Exception):
    pass


class NotAnArchive(Sb3Error):
    def __init__(self, message, offset=0):
        super().__init__(message)
        self.offset = offset


class MissingProjectJson(Sb3Error):
    def __init__(self, entries):
        super().__init__("archive has no project.json (entries: %s)" % ", ".join(entries))
        self.entry_name = "project.json"


class MalformedJson(Sb3Error):
    def __init__(self, entry_name, cause):
        super().__init__("%s: %s" % (entry_name, cause))
        self.entry_name = entry_name
        self.offset = getattr(cause, "pos", 0)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def parse_sb3(archive_bytes, meta=None):
    """Parse .sb3 bytes into a Project.

    `meta` is an optional sidecar dict (see docs/format.md) declaring costume
    fill colors and bounding boxes; absent entries fall back to deterministic
    per-sprite defaults.
    """
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive_bytes))
    except zipfile.BadZipFile as exc:
        raise NotAnArchive(str(exc)) from exc
    names = zf.namelist()
    if "project.json" not in names:
        raise MissingProjectJson(names)
    raw = zf.read("project.json")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedJson("project.json", exc) from exc
    if not isinstance(doc, dict):
        raise MalformedJson("project.json", ValueError("top level is not an object"))

    warnings = []
    assets = {}
    for entry in names:
        if entry == "project.json" or entry.endswith("/"):
            continue
        stem = entry.rsplit("/", 1)[-1]
        asset_id = stem.rsplit(".", 1)[0]
        assets[asset_id] = (zf.read(entry), stem)

    meta = meta or {}
    targets = []
    broadcasts = {}
    raw_targets = doc.get("targets")
    if not isinstance(raw_targets, list):
        raw_targets = []
        warnings.append("project.json has no targets list")
    for idx, raw_target in enumerate(raw_targets):
        if not isinstance(raw_target, dict):
            warnings.append("target %d is not an object; skipped" % idx)
            continue
        target = _parse_target(raw_target, idx, meta, warnings)
        targets.append(target)
        for bid, name in (raw_target.get("broadcasts") or {}).items():
            broadcasts[str(bid)] = str(name)

    project = Project(
        targets=targets,
        broadcasts=broadcasts,
        monitors=doc.get("monitors") or [],
        extensions=list(doc.get("extensions") or []),
        meta_version=str((doc.get("meta") or {}).get("semver", "3.0.0")),
        assets=assets,
        load_warnings=warnings,
    )
    _repair(project, warnings)
    assert_project_ok(project)
    return project


def _parse_target(raw, index, meta, warnings):
    name = str(raw.get("name", "target%d" % index))
    is_stage = bool(raw.get("isStage", False))
    target = Target(
        name=name,
        is_stage=is_stage,
        current_costume=int(raw.get("currentCostume", 0) or 0),
        x=float(raw.get("x", 0) or 0),
        y=float(raw.get("y", 0) or 0),
        size=float(raw.get("size", 100) or 100),
        direction=float(raw.get("direction", 90) or 90),
        visible=bool(raw.get("visible", True)),
        layer=int(raw.get("layerOrder", 0) or 0),
        comments=dict(raw.get("comments") or {}),
    )
    for vid, pair in (raw.get("variables") or {}).items():
        if isinstance(pair, list) and len(pair) >= 2:
            target.variables[str(vid)] = (str(pair[0]), pair[1])
    for lid, pair in (raw.get("lists") or {}).items():
        if isinstance(pair, list) and len(pair) >= 2 and isinstance(pair[1], list):
            target.lists[str(lid)] = (str(pair[0]), list(pair[1]))

    sprite_meta = (meta.get("sprites") or {}).get(name, {})
    costume_meta = meta.get("costumes") or {}
    for c in raw.get("costumes") or []:
        if not isinstance(c, dict):
            continue
        cname = str(c.get("name", "costume"))
        per = costume_meta.get("%s:%s" % (name, cname), sprite_meta)
        if is_stage:
            fill = tuple(meta.get("stage_color", per.get("fill_color", (245, 245, 245))))
            width, height = 480.0, 360.0
            center = (240.0, 180.0)
        else:
            fill = tuple(per.get("fill_color") or default_fill_color(name, cname))
            width = float(per.get("width", 64.0))
            height = float(per.get("height", 64.0))
            center = (
                float(c.get("rotationCenterX", width / 2)),
                float(c.get("rotationCenterY", height / 2)),
            )
        target.costumes.append(CostumeRef(
            name=cname,
            asset_id=str(c.get("assetId", "")),
            data_format=str(c.get("dataFormat", "svg")),
            fill_color=fill,
            width=width,
            height=height,
            rotation_center=center,
        ))

    for bid, raw_block in (raw.get("blocks") or {}).items():
        bid = str(bid)
        if not isinstance(raw_block, dict):
            warnings.append("%s: block %s is a bare array; skipped" % (name, bid))
            continue
        target.blocks[bid] = _parse_block(bid, raw_block)
    return target


def _parse_block(bid, raw):
    inputs = {}
    for iname, ival in (raw.get("inputs") or {}).items():
        parsed = _parse_input(ival)
        if parsed is not None:
            inputs[str(iname)] = parsed
    fields = {}
    for fname, fval in (raw.get("fields") or {}).items():
        if isinstance(fval, list) and fval:
            fields[str(fname)] = (str(fval[0]), str(fval[1]) if len(fval) > 1 and fval[1] is not None else None)
    return Block(
        id=bid,
        opcode=str(raw.get("opcode", "")),
        next=str(raw["next"]) if raw.get("next") else None,
        parent=str(raw["parent"]) if raw.get("parent") else None,
        inputs=inputs,
        fields=fields,
        top_level=bool(raw.get("topLevel", raw.get("parent") is None)),
        shadow=bool(raw.get("shadow", False)),
    )


def _parse_input(ival):
    """Decode one project.json input slot; None means the slot is empty."""
    if not isinstance(ival, list) or len(ival) < 2:
        return None
    data = ival[1]
    if isinstance(data, str):
        return BlockRef(data)
    if isinstance(data, list) and data:
        code = data[0]
        if code in (4, 5, 6, 7, 8):
            return Literal(_as_number(data[1]))
        if code == 9:
            return Literal(str(data[1]))
        if code == 10:
            return Literal(str(data[1]))
        if code == 11:
            return BroadcastRef(str(data[2]) if len(data) > 2 else str(data[1]), str(data[1]))
        if code == 12:
            return VariableRef(str(data[2]) if len(data) > 2 else str(data[1]), str(data[1]))
        if code == 13:
            return ListRef(str(data[2]) if len(data) > 2 else str(data[1]), str(data[1]))
    return None


def _as_number(value):
    try:
        f = float(value)
    except (TypeError, ValueError):
        return str(value)
    return int(f) if f.is_integer() and abs(f) < 1e15 else f


def _repair(project, warnings):
    """Degrade structural damage to warnings until invariants hold."""
    stages = [t for t in project.targets if t.is_stage]
    if not stages:
        project.targets.insert(0, Target(name="Stage", is_stage=True))
        warnings.append("no stage target; synthesized an empty one")
    else:
        if len(stages) > 1:
            for extra in stages[1:]:
                extra.is_stage = False
                warnings.append("extra stage %s demoted to sprite" % extra.name)
        first = stages[0]
        if project.targets[0] is not first:
            project.targets.remove(first)
            project.targets.insert(0, first)
            warnings.append("stage moved to front of target list")

    for target in project.targets:
        blocks = target.blocks
        for bid in sorted(blocks):
            block = blocks[bid]
            changed = {}
            if block.next is not None and block.next not in blocks:
                warnings.append("%s: block %s next %s missing; cleared" % (target.name, bid, block.next))
                changed["next"] = None
            if block.parent is not None and block.parent not in blocks:
                warnings.append("%s: block %s parent %s missing; now top-level" % (target.name, bid, block.parent))
                changed["parent"] = None
                changed["top_level"] = True
            kept_inputs = {}
            dropped = False
            for iname, ival in block.inputs.items():
                if isinstance(ival, BlockRef) and ival.block_id not in blocks:
                    warnings.append("%s: block %s input %s references missing %s; dropped"
                                    % (target.name, bid, iname, ival.block_id))
                    dropped = True
                    continue
                kept_inputs[iname] = ival
            if dropped:
                changed["inputs"] = kept_inputs
            if changed:
                blocks[bid] = block.with_(**changed)
        # fix child parent pointers to match next/substack edges
        for bid in sorted(blocks):
            block = blocks[bid]
            children = []
            if block.next:
                children.append(block.next)
            for iname in substack_inputs(block.opcode):
                ival = block.inputs.get(iname)
                if isinstance(ival, BlockRef):
                    children.append(ival.block_id)
            for cid in children:
                child = blocks.get(cid)
                if child and child.parent != bid:
                    warnings.append("%s: block %s parent corrected to %s" % (target.name, cid, bid))
                    blocks[cid] = child.with_(parent=bid, top_level=False)
        # break next-link cycles
        for bid in sorted(blocks):
            seen = set()
            cur = bid
            while cur is not None:
                if cur in seen:
                    prev = blocks[tail]
                    blocks[tail] = prev.with_(next=None)
                    warnings.append("%s: next-link cycle broken at %s" % (target.name, tail))
                    break
                seen.add(cur)
                tail = cur
                cur = blocks[cur].next if blocks[cur].next in blocks else None
        # orphan top-level scripts are flagged, not rejected
        for bid in sorted(blocks):
            block = blocks[bid]
            if block.top_level and not block.shadow and not is_hat_opcode(block.opcode) and block.opcode:
                warnings.append("%s: orphan script at %s (%s)" % (target.name, bid, block.opcode))

        for costume in target.costumes:
            if costume.asset_id and costume.asset_id not in project.assets:
                project.assets[costume.asset_id] = (b"", "%s.%s" % (costume.asset_id, costume.data_format))
                warnings.append("%s: costume %s asset %s missing; empty placeholder added"
                                % (target.name, costume.name, costume.asset_id))

    # synthesize broadcast entries for dangling references
    def note(bid_, name_):
        if bid_ not in project.broadcasts:
            project.broadcasts[bid_] = bid_
            warnings.append("broadcast id %s unknown; synthesized (name=id)" % bid_)

    for target in project.targets:
        for block in target.blocks.values():
            for ival in block.inputs.values():
                if isinstance(ival, BroadcastRef):
                    note(ival.broadcast_id, ival.name)
            pair = block.fields.get("BROADCAST_OPTION")
            if pair and pair[1]:
                note(pair[1], pair[0])


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def serialize_sb3(project):
    """Pack a Project into .sb3 bytes; project.json uses canonical key order."""
    doc = {
        "targets": [_emit_target(t, project) for t in project.targets],
        "monitors": project.monitors,
        "extensions": project.extensions,
        "meta": {"semver": project.meta_version, "vm": "0.0.0", "agent": "blockmend"},
    }
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("project.json", _ZIP_DATE), payload)
        for asset_id in sorted(project.assets):
            data, filename = project.assets[asset_id]
            zf.writestr(zipfile.ZipInfo(filename, _ZIP_DATE), data)
    return out.getvalue()


def _emit_target(target, project):
    doc = {
        "isStage": target.is_stage,
        "name": target.name,
        "variables": {vid: [name, value] for vid, (name, value) in target.variables.items()},
        "lists": {lid: [name, values] for lid, (name, values) in target.lists.items()},
        "broadcasts": dict(project.broadcasts) if target.is_stage else {},
        "blocks": {bid: _emit_block(b) for bid, b in target.blocks.items()},
        "comments": target.comments,
        "currentCostume": target.current_costume,
        "costumes": [
            {
                "name": c.name,
                "assetId": c.asset_id,
                "md5ext": "%s.%s" % (c.asset_id, c.data_format),
                "dataFormat": c.data_format,
                "rotationCenterX": c.rotation_center[0],
                "rotationCenterY": c.rotation_center[1],
            }
            for c in target.costumes
        ],
        "sounds": [],
        "volume": 100,
        "layerOrder": target.layer,
    }
    if target.is_stage:
        doc["tempo"] = 60
    else:
        doc.update({
            "visible": target.visible,
            "x": target.x,
            "y": target.y,
            "size": target.size,
            "direction": target.direction,
            "draggable": False,
            "rotationStyle": "all around",
        })
    return doc


def _emit_block(block):
    inputs = {}
    for iname, ival in block.inputs.items():
        inputs[iname] = _emit_input(ival)
    fields = {}
    for fname, (value, fid) in block.fields.items():
        fields[fname] = [value, fid]
    doc = {
        "opcode": block.opcode,
        "next": block.next,
        "parent": block.parent,
        "inputs": inputs,
        "fields": fields,
        "shadow": block.shadow,
        "topLevel": block.top_level,
    }
    if block.top_level:
        doc["x"] = 0
        doc["y"] = 0
    return doc


def _emit_input(ival):
    if isinstance(ival, BlockRef):
        return [2, ival.block_id]
    if isinstance(ival, VariableRef):
        return [3, [12, ival.name, ival.var_id], [10, ""]]
    if isinstance(ival, ListRef):
        return [3, [13, ival.name, ival.list_id], [10, ""]]
    if isinstance(ival, BroadcastRef):
        return [1, [11, ival.name, ival.broadcast_id]]
    value = ival.value
    if isinstance(value, bool):
        return [1, [10, "true" if value else "false"]]
    if isinstance(value, (int, float)):
        return [1, [4, _number_str(value)]]
    text = str(value)
    if text.startswith("#") and len(text) in (4, 7):
        return [1, [9, text]]
    return [1, [10, text]]


def _number_str(value):
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


# ---------------------------------------------------------------------------
# Graph isomorphism
# ---------------------------------------------------------------------------

class IsoResult:
    """Truthy when isomorphic; otherwise `difference` names the first mismatch."""

    def __init__(self, ok, difference=None):
        self.ok = ok
        self.difference = difference

    def __bool__(self):
        return self.ok

    def __repr__(self):
        return "IsoResult(ok=%r, difference=%r)" % (self.ok, self.difference)


def graph_isomorphic(a, b):
    """Compare two projects up to block-id renaming.

    Targets, scripts, opcodes, link structure, inputs, fields, initial sprite
    state, and variable initial values must all match.
    """
    if len(a.targets) != len(b.targets):
        return IsoResult(False, "target count %d != %d" % (len(a.targets), len(b.targets)))
    if sorted(a.broadcasts.values()) != sorted(b.broadcasts.values()):
        return IsoResult(False, "broadcast name sets differ")
    for ta, tb in zip(a.targets, b.targets):
        if ta.name != tb.name:
            return IsoResult(False, "target name %s != %s" % (ta.name, tb.name))
        where = "target %s" % ta.name
        pose_a = (ta.is_stage, ta.x, ta.y, ta.visible, ta.size, ta.direction, ta.current_costume)
        pose_b = (tb.is_stage, tb.x, tb.y, tb.visible, tb.size, tb.direction, tb.current_costume)
        if pose_a != pose_b:
            return IsoResult(False, "%s: initial state %r != %r" % (where, pose_a, pose_b))
        if sorted(ta.variables.values()) != sorted(tb.variables.values()):
            return IsoResult(False, "%s: variable initial values differ" % where)
        if sorted(ta.lists.values(), key=repr) != sorted(tb.lists.values(), key=repr):
            return IsoResult(False, "%s: list contents differ" % where)
        sigs_a = _target_script_sigs(ta)
        sigs_b = _target_script_sigs(tb)
        if len(sigs_a) != len(sigs_b):
            return IsoResult(False, "%s: script count %d != %d" % (where, len(sigs_a), len(sigs_b)))
        for i, (sa, sb) in enumerate(zip(sigs_a, sigs_b)):
            if sa != sb:
                detail = _first_difference(sa, sb, "%s / script %d" % (where, i))
                return IsoResult(False, detail)
    return IsoResult(True)


def _target_script_sigs(target):
    tops = [b for b in target.blocks.values() if b.top_level]
    sigs = [_script_sig(target, b) for b in tops]
    sigs.sort(key=repr)
    return sigs


def _script_sig(target, head):
    chain = []
    cur = head
    guard = 0
    while cur is not None and guard < 100000:
        chain.append(_block_sig(target, cur))
        cur = target.blocks.get(cur.next) if cur.next else None
        guard += 1
    return ("script", tuple(chain))


def _block_sig(target, block):
    fields = tuple(sorted((name, value) for name, (value, _fid) in block.fields.items()))
    inputs = []
    for iname in sorted(block.inputs):
        ival = block.inputs[iname]
        if isinstance(ival, BlockRef):
            child = target.blocks.get(ival.block_id)
            if child is None:
                inputs.append((iname, ("missing",)))
            elif iname in substack_inputs(block.opcode):
                inputs.append((iname, _script_sig(target, child)))
            else:
                inputs.append((iname, _block_sig(target, child)))
        elif isinstance(ival, Literal):
            inputs.append((iname, ("lit", ival.value)))
        elif isinstance(ival, VariableRef):
            inputs.append((iname, ("var", ival.name)))
        elif isinstance(ival, BroadcastRef):
            inputs.append((iname, ("bcast", ival.name)))
        elif isinstance(ival, ListRef):
            inputs.append((iname, ("list", ival.name)))
    return ("block", block.opcode, fields, tuple(inputs))


def _first_difference(sig_a, sig_b, path):
    if sig_a == sig_b:
        return None
    if not isinstance(sig_a, tuple) or not isinstance(sig_b, tuple) or not sig_a or not sig_b:
        return "%s: %r != %r" % (path, sig_a, sig_b)
    kind = sig_a[0] if isinstance(sig_a[0], str) else None
    if kind == "script" and sig_b[0] == "script":
        for i, (ba, bb) in enumerate(zip(sig_a[1], sig_b[1])):
            if ba != bb:
                return _first_difference(ba, bb, "%s / block %d" % (path, i))
        return "%s: script length %d != %d" % (path, len(sig_a[1]), len(sig_b[1]))
    if kind == "block" and sig_b[0] == "block":
        if sig_a[1] != sig_b[1]:
            return "%s: opcode %s != %s" % (path, sig_a[1], sig_b[1])
        if sig_a[2] != sig_b[2]:
            return "%s (%s): fields %r != %r" % (path, sig_a[1], sig_a[2], sig_b[2])
        for (na, va), (nb, vb) in zip(sig_a[3], sig_b[3]):
            if na != nb:
                return "%s (%s): input names %s != %s" % (path, sig_a[1], na, nb)
            if va != vb:
                return _first_difference(va, vb, "%s (%s) / input %s" % (path, sig_a[1], na))
        return "%s (%s): input counts differ" % (path, sig_a[1])
    return "%s: %r != %r" % (path, sig_a, sig_b)


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def load_project(path):
    """Read an .sb3 file, honoring a sidecar meta file when present.

    The sidecar is `<stem>.meta.json` or `fixture.meta.json` in the same
    directory (first match wins).
    """
    import pathlib

    p = pathlib.Path(path)
    data = p.read_bytes()
    meta = None
    for candidate in (p.with_suffix(".meta.json"), p.parent / "fixture.meta.json"):
        if candidate.exists():
            meta = json.loads(candidate.read_text())
            break
    return parse_sb3(data, meta=meta)


def save_project(project, path):
    import pathlib

    pathlib.Path(path).write_bytes(serialize_sb3(project))
