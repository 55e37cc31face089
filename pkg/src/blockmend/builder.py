"""Block templates and a project builder.

Templates are the package's one way of describing new blocks: fixture
construction, edit payloads, and repair sketches all materialize the same
structures into real Block graphs.  Values in `inputs` may be plain Python
literals, VarArg/BcastArg markers, nested templates (reporters), or lists of
templates (substacks).
"""

from dataclasses import dataclass, field
import hashlib

from .model import (
    Block,
    BlockRef,
    BroadcastRef,
    CostumeRef,
    Literal,
    Project,
    Target,
    VariableRef,
)


@dataclass(frozen=True)
class VarArg:
    """Field or input that names a variable; resolved to its id on materialize."""
    name: str


@dataclass(frozen=True)
class BcastArg:
    """Input naming a broadcast message."""
    name: str


@dataclass(frozen=True)
class BlockTemplate:
    opcode: str
    inputs: tuple = ()          # ((name, value), ...)
    fields: tuple = ()          # ((name, value-or-VarArg), ...)
    shadow: bool = False

    def input(self, name):
        for n, v in self.inputs:
            if n == name:
                return v
        return None


def t(opcode, inputs=None, fields=None, shadow=False):
    return BlockTemplate(
        opcode=opcode,
        inputs=tuple(sorted((inputs or {}).items())),
        fields=tuple(sorted((fields or {}).items())),
        shadow=shadow,
    )


class MaterializeError(Exception):
    pass


class IdGen:
    def __init__(self, prefix):
        self.prefix = prefix
        self.n = 0

    def __call__(self):
        self.n += 1
        return "%s-%d" % (self.prefix, self.n)


def resolve_variable(project, target, name):
    """Find (var_id, owner) for a variable name: sprite locals shadow stage globals."""
    for vid, (vname, _val) in target.variables.items():
        if vname == name:
            return vid, target
    stage = project.stage
    if stage is not None and stage is not target:
        for vid, (vname, _val) in stage.variables.items():
            if vname == name:
                return vid, stage
    return None, None


def resolve_broadcast(project, name, create=False):
    for bid, bname in project.broadcasts.items():
        if bname == name:
            return bid
    if create:
        bid = "bc_" + hashlib.md5(name.encode("utf-8")).hexdigest()[:10]
        project.broadcasts[bid] = name
        return bid
    return None


def materialize_chain(templates, project, target, idgen, parent=None, allow_create_broadcast=True):
    """Turn a template chain into linked Blocks inside `target.blocks`.

    Returns (head_id, tail_id, new_ids).  Raises MaterializeError when a
    VarArg/BcastArg cannot be resolved (and creation is not allowed).
    """
    head_id = None
    prev_id = None
    new_ids = []

    def build(template, parent_id, top_level=False):
        bid = idgen()
        new_ids.append(bid)
        inputs = {}
        for iname, ival in template.inputs:
            if isinstance(ival, BlockTemplate):
                child_id = build(ival, bid)
                inputs[iname] = BlockRef(child_id)
            elif isinstance(ival, (list, tuple)) and ival and isinstance(ival[0], BlockTemplate):
                sub_head, _tail, _ids = materialize_chain(
                    list(ival), project, target, idgen, parent=bid,
                    allow_create_broadcast=allow_create_broadcast)
                inputs[iname] = BlockRef(sub_head)
            elif isinstance(ival, VarArg):
                vid, _owner = resolve_variable(project, target, ival.name)
                if vid is None:
                    raise MaterializeError("unknown variable %r" % ival.name)
                inputs[iname] = VariableRef(vid, ival.name)
            elif isinstance(ival, BcastArg):
                bcid = resolve_broadcast(project, ival.name, create=allow_create_broadcast)
                if bcid is None:
                    raise MaterializeError("unknown broadcast %r" % ival.name)
                inputs[iname] = BroadcastRef(bcid, ival.name)
            elif ival is None:
                continue
            else:
                inputs[iname] = Literal(ival)
        fields = {}
        for fname, fval in template.fields:
            if isinstance(fval, VarArg):
                vid, _owner = resolve_variable(project, target, fval.name)
                if vid is None:
                    raise MaterializeError("unknown variable %r" % fval.name)
                fields[fname] = (fval.name, vid)
            elif fname == "BROADCAST_OPTION":
                bcid = resolve_broadcast(project, str(fval), create=allow_create_broadcast)
                if bcid is None:
                    raise MaterializeError("unknown broadcast %r" % fval)
                fields[fname] = (str(fval), bcid)
            else:
                fields[fname] = (str(fval), None)
        target.blocks[bid] = Block(
            id=bid,
            opcode=template.opcode,
            parent=parent_id,
            inputs=inputs,
            fields=fields,
            top_level=top_level,
            shadow=template.shadow,
        )
        return bid

    for template in templates:
        bid = build(template, prev_id if prev_id else parent, top_level=(prev_id is None and parent is None))
        if head_id is None:
            head_id = bid
        if prev_id is not None:
            target.blocks[prev_id] = target.blocks[prev_id].with_(next=bid)
        prev_id = bid
    return head_id, prev_id, new_ids


# ---------------------------------------------------------------------------
# Template sugar (opcode spellings in one place)
# ---------------------------------------------------------------------------

def flag():
    return t("event_whenflagclicked")

def clicked():
    return t("event_whenthisspriteclicked")

def receive(name):
    return t("event_whenbroadcastreceived", fields={"BROADCAST_OPTION": name})

def key_hat(key):
    return t("event_whenkeypressed", fields={"KEY_OPTION": key})

def start_as_clone():
    return t("control_start_as_clone")

def broadcast(name):
    return t("event_broadcast", inputs={"BROADCAST_INPUT": BcastArg(name)})

def broadcast_wait(name):
    return t("event_broadcastandwait", inputs={"BROADCAST_INPUT": BcastArg(name)})

def forever(body):
    return t("control_forever", inputs={"SUBSTACK": list(body)})

def repeat(times, body):
    return t("control_repeat", inputs={"TIMES": times, "SUBSTACK": list(body)})

def repeat_until(cond, body):
    return t("control_repeat_until", inputs={"CONDITION": cond, "SUBSTACK": list(body)})

def if_(cond, body):
    return t("control_if", inputs={"CONDITION": cond, "SUBSTACK": list(body)})

def if_else(cond, body, other):
    return t("control_if_else", inputs={"CONDITION": cond, "SUBSTACK": list(body), "SUBSTACK2": list(other)})

def wait(seconds):
    return t("control_wait", inputs={"DURATION": seconds})

def wait_until(cond):
    return t("control_wait_until", inputs={"CONDITION": cond})

def stop(option="all"):
    return t("control_stop", fields={"STOP_OPTION": option})

def clone_of(name="_myself_"):
    menu = t("control_create_clone_of_menu", fields={"CLONE_OPTION": name}, shadow=True)
    return t("control_create_clone_of", inputs={"CLONE_OPTION": menu})

def delete_clone():
    return t("control_delete_this_clone")

def set_var(name, value):
    return t("data_setvariableto", inputs={"VALUE": value}, fields={"VARIABLE": VarArg(name)})

def change_var(name, delta):
    return t("data_changevariableby", inputs={"VALUE": delta}, fields={"VARIABLE": VarArg(name)})

def varr(name):
    """Variable reporter used as an input value."""
    return VarArg(name)

def move(steps):
    return t("motion_movesteps", inputs={"STEPS": steps})

def goto_xy(x, y):
    return t("motion_gotoxy", inputs={"X": x, "Y": y})

def change_x(dx):
    return t("motion_changexby", inputs={"DX": dx})

def change_y(dy):
    return t("motion_changeyby", inputs={"DY": dy})

def set_x(x):
    return t("motion_setx", inputs={"X": x})

def set_y(y):
    return t("motion_sety", inputs={"Y": y})

def point_dir(degrees):
    return t("motion_pointindirection", inputs={"DIRECTION": degrees})

def turn_right(degrees):
    return t("motion_turnright", inputs={"DEGREES": degrees})

def turn_left(degrees):
    return t("motion_turnleft", inputs={"DEGREES": degrees})

def bounce():
    return t("motion_ifonedgebounce")

def show():
    return t("looks_show")

def hide():
    return t("looks_hide")

def say(message):
    return t("looks_say", inputs={"MESSAGE": message})

def switch_costume(name):
    menu = t("looks_costume", fields={"COSTUME": name}, shadow=True)
    return t("looks_switchcostumeto", inputs={"COSTUME": menu})

def next_costume():
    return t("looks_nextcostume")

def set_size(percent):
    return t("looks_setsizeto", inputs={"SIZE": percent})

def change_size(delta):
    return t("looks_changesizeby", inputs={"CHANGE": delta})

def to_front():
    return t("looks_gotofrontback", fields={"FRONT_BACK": "front"})

def to_back():
    return t("looks_gotofrontback", fields={"FRONT_BACK": "back"})

def touching(name):
    menu = t("sensing_touchingobjectmenu", fields={"TOUCHINGOBJECTMENU": name}, shadow=True)
    return t("sensing_touchingobject", inputs={"TOUCHINGOBJECTMENU": menu})

def touching_color(hex_color):
    return t("sensing_touchingcolor", inputs={"COLOR": hex_color})

def key_pressed(key):
    menu = t("sensing_keyoptions", fields={"KEY_OPTION": key}, shadow=True)
    return t("sensing_keypressed", inputs={"KEY_OPTION": menu})

def mouse_down():
    return t("sensing_mousedown")

def mouse_x():
    return t("sensing_mousex")

def mouse_y():
    return t("sensing_mousey")

def add(a, b):
    return t("operator_add", inputs={"NUM1": a, "NUM2": b})

def sub(a, b):
    return t("operator_subtract", inputs={"NUM1": a, "NUM2": b})

def mul(a, b):
    return t("operator_multiply", inputs={"NUM1": a, "NUM2": b})

def div(a, b):
    return t("operator_divide", inputs={"NUM1": a, "NUM2": b})

def lt(a, b):
    return t("operator_lt", inputs={"OPERAND1": a, "OPERAND2": b})

def eq(a, b):
    return t("operator_equals", inputs={"OPERAND1": a, "OPERAND2": b})

def gt(a, b):
    return t("operator_gt", inputs={"OPERAND1": a, "OPERAND2": b})

def and_(a, b):
    return t("operator_and", inputs={"OPERAND1": a, "OPERAND2": b})

def or_(a, b):
    return t("operator_or", inputs={"OPERAND1": a, "OPERAND2": b})

def not_(a):
    return t("operator_not", inputs={"OPERAND": a})

def rand(a, b):
    return t("operator_random", inputs={"FROM": a, "TO": b})

def join(a, b):
    return t("operator_join", inputs={"STRING1": a, "STRING2": b})

def length(s):
    return t("operator_length", inputs={"STRING": s})


# ---------------------------------------------------------------------------
# Project builder
# ---------------------------------------------------------------------------

class SpriteBuilder:
    def __init__(self, project_builder, target):
        self._pb = project_builder
        self.target = target

    def script(self, hat_template, body, hat_id=None):
        """Add one script: a hat block followed by a body chain.

        `hat_id` pins the hat's block id; hats fire in (opcode, id) order, so
        explicit ids make activation order part of the fixture's meaning.
        """
        target = self.target
        project = self._pb.project
        hid = hat_id or "hat_%s_%d" % (target.name.lower(), len(target.blocks))
        idgen = IdGen(hid)
        head, tail, _ids = materialize_chain(list(body), project, target, idgen, parent=hid)
        inputs = {}
        fields = {}
        tmpl = hat_template
        for fname, fval in tmpl.fields:
            if fname == "BROADCAST_OPTION":
                bcid = resolve_broadcast(project, str(fval), create=True)
                fields[fname] = (str(fval), bcid)
            else:
                fields[fname] = (str(fval), None)
        target.blocks[hid] = Block(
            id=hid, opcode=tmpl.opcode, next=head, parent=None,
            inputs=inputs, fields=fields, top_level=True,
        )
        if head is not None:
            target.blocks[head] = target.blocks[head].with_(parent=hid)
        return hid

    def variable(self, name, value=0):
        self.target.variables["v_%s_%s" % (self.target.name.lower(), name)] = (name, value)
        return self


class ProjectBuilder:
    """Assemble a Project plus its sidecar color/bbox metadata."""

    def __init__(self, stage_color=(245, 245, 245)):
        self.project = Project()
        self.meta = {"stage_color": list(stage_color), "sprites": {}}
        stage = Target(name="Stage", is_stage=True, layer=0)
        self._attach_costume(stage, "backdrop1", tuple(stage_color), 480.0, 360.0, is_stage=True)
        self.project.targets.append(stage)
        self._layer = 0

    @property
    def stage(self):
        return self.project.targets[0]

    def stage_builder(self):
        return SpriteBuilder(self, self.stage)

    def stage_var(self, name, value=0):
        self.stage.variables["v_stage_%s" % name] = (name, value)
        return self

    def monitor(self, var_name, sprite_name=None, visible=True):
        self.project.monitors.append({
            "id": "mon_%s" % var_name,
            "mode": "default",
            "opcode": "data_variable",
            "params": {"VARIABLE": var_name},
            "spriteName": sprite_name,
            "value": 0,
            "visible": visible,
            "x": 5,
            "y": 5,
        })
        return self

    def sprite(self, name, x=0.0, y=0.0, visible=True, size=100.0, direction=90.0,
               color=None, width=64.0, height=64.0):
        self._layer += 1
        target = Target(
            name=name, x=float(x), y=float(y), visible=visible,
            size=float(size), direction=float(direction), layer=self._layer,
        )
        fill = tuple(color) if color else None
        self._attach_costume(target, "costume1", fill, float(width), float(height))
        self.project.targets.append(target)
        entry = {"width": width, "height": height}
        if fill:
            entry["fill_color"] = list(fill)
        self.meta["sprites"][name] = entry
        return SpriteBuilder(self, target)

    def _attach_costume(self, target, cname, fill, width, height, is_stage=False):
        svg = ('<svg xmlns="http://www.w3.org/2000/svg"><!--%s/%s--></svg>'
               % (target.name, cname)).encode("utf-8")
        asset_id = hashlib.md5(svg).hexdigest()
        self.project.assets[asset_id] = (svg, "%s.svg" % asset_id)
        if fill is None:
            from .model import default_fill_color
            fill = default_fill_color(target.name, cname)
        target.costumes.append(CostumeRef(
            name=cname,
            asset_id=asset_id,
            data_format="svg",
            fill_color=tuple(fill),
            width=width,
            height=height,
            rotation_center=(240.0, 180.0) if is_stage else (width / 2, height / 2),
        ))

    def build(self):
        from .model import assert_project_ok
        assert_project_ok(self.project)
        return self.project
