"""Headless deterministic interpreter for the supported block subset.

Scripts run as cooperatively scheduled activations: within one tick every
runnable activation executes until its next yield point (loop iteration end,
wait, broadcast-and-wait, or script end).  Broadcasts start their receivers
later in the same tick's pass; scenario events latch after the pass; then the
frame snapshot is taken.  No runtime error ever aborts a run: bad blocks
evaluate to neutral values and leave a trace warning.

Time is ticks, not wall clock: `wait s` becomes max(1, ceil(s * tps)) ticks.
The supported opcode set is listed in docs/opcodes.md; anything else loads
but executes as an inert yield.
"""

from dataclasses import dataclass, field
import math
import random

from .model import (
    BlockRef,
    BroadcastRef,
    Literal,
    VariableRef,
    X_MAX,
    X_MIN,
    Y_MAX,
    Y_MIN,
    is_hat_opcode,
)
from .trace import Frame, FrameTrace, SpriteSnap


class UnsupportedRequiredOpcode(Exception):
    """A hat block's opcode is not runnable; body unknowns are merely inert."""


# Real Scratch hats outside the supported subset: running a project that
# relies on one of these as a script entry is refused up front.
UNSUPPORTED_HAT_OPCODES = frozenset({
    "event_whenbackdropswitchesto",
    "event_whengreaterthan",
    "event_whenstageclicked",
    "event_whentouchingobject",
})


@dataclass
class VmConfig:
    ticks_per_second: int = 30
    max_ticks: int = 900
    clone_cap: int = 300
    scheduler_order: str = "declaration"   # declaration | reverse | seeded
    rng_seed: int = 0
    scheduler_seed: int = 0

    def __post_init__(self):
        if self.ticks_per_second < 1:
            raise ValueError("ticks_per_second must be >= 1")
        if self.clone_cap < 1:
            raise ValueError("clone_cap must be >= 1")
        if self.scheduler_order not in ("declaration", "reverse", "seeded"):
            raise ValueError("unknown scheduler_order %r" % self.scheduler_order)

    def to_dict(self):
        return {
            "ticks_per_second": self.ticks_per_second,
            "max_ticks": self.max_ticks,
            "clone_cap": self.clone_cap,
            "scheduler_order": self.scheduler_order,
            "rng_seed": self.rng_seed,
            "scheduler_seed": self.scheduler_seed,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = doc or {}
        return cls(**{k: doc[k] for k in cls().to_dict() if k in doc})


class SpriteInstance:
    def __init__(self, target, instance_id, is_clone=False):
        self.target = target
        self.instance_id = instance_id
        self.is_clone = is_clone
        self.x = target.x
        self.y = target.y
        self.direction = target.direction
        self.size = target.size
        self.visible = target.visible
        self.current_costume = target.current_costume
        self.layer = target.layer
        self.say_text = ""
        # stage variables live in the VM's global store, never shadowed here
        self.variables = (
            {} if target.is_stage
            else {vid: val for vid, (_n, val) in target.variables.items()})
        self.alive = True

    @property
    def name(self):
        return self.target.name

    def bbox(self):
        costume = self.target.costume(self.current_costume)
        scale = self.size / 100.0
        w = (costume.width if costume else 64.0) * scale
        h = (costume.height if costume else 64.0) * scale
        return w, h

    def clone_state_from(self, src):
        self.x, self.y = src.x, src.y
        self.direction = src.direction
        self.size = src.size
        self.visible = src.visible
        self.current_costume = src.current_costume
        self.layer = src.layer
        self.variables = dict(src.variables)


class _StopScript(Exception):
    pass


class Activation:
    _counter = 0

    def __init__(self, owner, hat_block):
        Activation._counter += 1
        self.serial = Activation._counter
        self.owner = owner
        self.hat_block = hat_block.id
        self.program_counter = hat_block.id
        self.wait_state = "none"
        self.call_stack = []
        self.done = False
        self.gen = None
        self.restarted = False


class VM:
    """One deterministic run over a project.  Create, then call run()."""

    def __init__(self, project, events=None, config=None):
        self.project = project
        self.config = config or VmConfig()
        self.events = sorted((dict(e) for e in (events or [])),
                             key=lambda e: e.get("tick", 0))
        self.tick = 0
        self.rng = random.Random(self.config.rng_seed)
        self.sched_rng = random.Random(self.config.scheduler_seed)
        self.activations = []
        self.instances = []
        self.globals = {}
        self.keys_down = set()
        self.mouse = (0.0, 0.0)
        self.mouse_pressed_at = None
        self.warnings = []
        self.frames = []
        self._clone_counts = {}
        self._warned_opcodes = set()
        self._stop_all = False

        stage = project.stage
        if stage is not None:
            self.globals = {vid: val for vid, (_n, val) in stage.variables.items()}
        self._auto_vars = {}
        for target in project.targets:
            for block in target.blocks.values():
                if block.top_level and block.opcode in UNSUPPORTED_HAT_OPCODES:
                    raise UnsupportedRequiredOpcode(
                        "%s in %s" % (block.opcode, target.name))
            inst = SpriteInstance(target, target.name)
            self.instances.append(inst)

    # -- public driving ----------------------------------------------------

    def run(self):
        while True:
            self.step_tick()
            self.tick += 1
            if self.tick >= self.config.max_ticks:
                break
            if not self._live_activations() and not self._pending_events():
                break
        return FrameTrace(
            frames=self.frames,
            warnings=self.warnings,
            scenario_echo={"events": self.events},
            config_echo=self.config.to_dict(),
        )

    def step_tick(self):
        """One tick: run pass, latch this tick's events, snapshot a frame."""
        pass_list = self._ordered_pass()
        i = 0
        while i < len(pass_list):
            act = pass_list[i]
            self._visit(act, pass_list)
            i += 1
        latched = self._latch_events()
        frame = self._snapshot(latched)
        self.frames.append(frame)
        self.activations = [a for a in self.activations if not a.done]
        return frame

    # -- scheduling ---------------------------------------------------------

    def _live_activations(self):
        return [a for a in self.activations if not a.done]

    def _pending_events(self):
        return [e for e in self.events if e.get("tick", 0) >= self.tick]

    def _ordered_pass(self):
        live = self._live_activations()
        order = self.config.scheduler_order
        if order == "reverse":
            return list(reversed(live))
        if order == "seeded":
            shuffled = list(live)
            random.Random(self.config.scheduler_seed * 1000003 + self.tick).shuffle(shuffled)
            return shuffled
        return list(live)

    def _visit(self, act, pass_list):
        if act.done or act.owner is not None and not act.owner.alive:
            act.done = True
            return
        if act.gen is None:
            act.gen = self._script_gen(act)
        act.restarted = False
        try:
            next(act.gen)
        except StopIteration:
            if not act.restarted:
                act.done = True
                act.wait_state = "none"
        except _StopScript:
            act.done = True
            act.wait_state = "none"
        self._spawned_this_visit(pass_list)

    def _spawned_this_visit(self, pass_list):
        # activations created during the visit join the current pass at the
        # end, ordered by the same scheduler policy as the pass itself
        known = {id(a) for a in pass_list}
        batch = [a for a in self.activations if not a.done and id(a) not in known]
        if not batch:
            return
        order = self.config.scheduler_order
        if order == "reverse":
            batch.reverse()
        elif order == "seeded":
            random.Random(self.config.scheduler_seed * 1000003
                          + self.tick * 31 + len(pass_list)).shuffle(batch)
        pass_list.extend(batch)

    def _spawn(self, owner, hat_block, restart=True):
        if restart:
            for act in self.activations:
                if not act.done and act.owner is owner and act.hat_block == hat_block.id:
                    act.gen = None
                    act.program_counter = hat_block.id
                    act.wait_state = "none"
                    act.call_stack = []
                    act.restarted = True
                    return act
        act = Activation(owner, hat_block)
        self.activations.append(act)
        return act

    def _fire_hats(self, predicate, owner_filter=None):
        """Activate matching hats in canonical (target order, opcode, id) order."""
        spawned = []
        for inst in list(self.instances):
            if not inst.alive:
                continue
            if owner_filter is not None and inst is not owner_filter:
                continue
            for hat in inst.target.hat_blocks():
                if predicate(hat, inst):
                    spawned.append(self._spawn(inst, hat))
        return spawned

    # -- events -------------------------------------------------------------

    def _latch_events(self):
        latched = [e for e in self.events if e.get("tick", 0) == self.tick]
        for ev in latched:
            kind = ev.get("kind")
            if kind == "flag":
                self._fire_hats(lambda h, i: h.opcode == "event_whenflagclicked"
                                and not i.is_clone)
            elif kind == "key_down":
                key = str(ev.get("key", ""))
                self.keys_down.add(key)
                self._fire_hats(
                    lambda h, i: h.opcode == "event_whenkeypressed"
                    and not i.is_clone
                    and h.field_value("KEY_OPTION", "") in (key, "any"))
            elif kind == "key_up":
                self.keys_down.discard(str(ev.get("key", "")))
            elif kind == "click":
                self._handle_click(ev)
            elif kind == "broadcast":
                self._broadcast(str(ev.get("name", "")))
            else:
                self.warn("unknown scenario event kind %r" % kind)
        return latched

    def _handle_click(self, ev):
        inst = None
        if ev.get("sprite"):
            for cand in self.instances:
                if cand.alive and not cand.is_clone and cand.name == ev["sprite"]:
                    inst = cand
                    break
        elif "x" in ev and "y" in ev:
            x, y = float(ev["x"]), float(ev["y"])
            hits = []
            for cand in self.instances:
                if not cand.alive or not cand.visible:
                    continue
                w, h = cand.bbox()
                if abs(x - cand.x) <= w / 2 and abs(y - cand.y) <= h / 2:
                    hits.append(cand)
            if hits:
                inst = max(hits, key=lambda c: (c.layer, c.instance_id))
            self.mouse = (x, y)
        if "x" in ev and "y" in ev:
            self.mouse = (float(ev["x"]), float(ev["y"]))
        self.mouse_pressed_at = self.tick
        if inst is None:
            self.warn("click event found no sprite (%r)" % ev)
            return
        if not inst.visible:
            self.warn("click on hidden sprite %s ignored" % inst.name)
            return
        self._fire_hats(lambda h, i: h.opcode == "event_whenthisspriteclicked",
                        owner_filter=inst)

    def _broadcast(self, name):
        return self._fire_hats(
            lambda h, i: h.opcode == "event_whenbroadcastreceived"
            and h.field_value("BROADCAST_OPTION", "") == name)

    # -- snapshots ------------------------------------------------------------

    def _snapshot(self, latched):
        sprites = []
        for inst in self.instances:
            if not inst.alive or inst.target.is_stage:
                continue
            w, h = inst.bbox()
            costume = inst.target.costume(inst.current_costume)
            sprites.append(SpriteSnap(
                instance_id=inst.instance_id,
                sprite=inst.name,
                x=round(inst.x, 6),
                y=round(inst.y, 6),
                visible=inst.visible,
                costume=costume.name if costume else "",
                size=inst.size,
                layer=inst.layer,
                say_text=inst.say_text,
                width=w,
                height=h,
            ))
        variables = {}
        stage = self.project.stage
        if stage is not None:
            variables[stage.name] = {
                name: self.globals.get(vid)
                for vid, (name, _v) in stage.variables.items()
            }
        for inst in self.instances:
            if inst.is_clone or inst.target.is_stage:
                continue
            if inst.target.variables:
                variables[inst.name] = {
                    name: inst.variables.get(vid)
                    for vid, (name, _v) in inst.target.variables.items()
                }
        return Frame(
            tick=self.tick,
            sprites=sprites,
            variables=variables,
            active_scripts=len(self._live_activations()),
            events_this_tick=latched,
        )

    def warn(self, message):
        self.warnings.append((self.tick, message))

    # -- execution ------------------------------------------------------------

    def _script_gen(self, act):
        hat = act.owner.target.blocks.get(act.hat_block)
        if hat is None:
            return iter(())
        if not is_hat_opcode(hat.opcode):
            raise UnsupportedRequiredOpcode(hat.opcode)
        return self._run_chain(act, hat.next)

    def _run_chain(self, act, head_id):
        bid = head_id
        while bid is not None:
            block = act.owner.target.blocks.get(bid)
            if block is None:
                return
            act.program_counter = bid
            yield from self._exec(act, block)
            if act.restarted:
                return
            bid = block.next

    def _substack(self, block, name="SUBSTACK"):
        val = block.inputs.get(name)
        return val.block_id if isinstance(val, BlockRef) else None

    def _exec(self, act, block):
        op = block.opcode
        handler = _STACK_OPS.get(op)
        if handler is None:
            if op not in self._warned_opcodes:
                self._warned_opcodes.add(op)
                self.warn("unsupported opcode %s is inert" % op)
            yield  # inert blocks still yield, keeping unknown loops fair
            return
        result = handler(self, act, block)
        if result is not None:
            yield from result

    # control --------------------------------------------------------------

    def _op_forever(self, act, block):
        head = self._substack(block)
        act.call_stack.append(("control_forever", block.id))
        try:
            while True:
                if head is not None:
                    yield from self._run_chain(act, head)
                    if act.restarted:
                        return
                act.wait_state = "none"
                yield
        finally:
            if act.call_stack and act.call_stack[-1] == ("control_forever", block.id):
                act.call_stack.pop()

    def _op_repeat(self, act, block):
        times = int(round(self.num_input(act, block, "TIMES", 0)))
        head = self._substack(block)
        act.call_stack.append(("control_repeat", block.id))
        try:
            for _ in range(times):
                if head is not None:
                    yield from self._run_chain(act, head)
                    if act.restarted:
                        return
                yield
        finally:
            if act.call_stack and act.call_stack[-1] == ("control_repeat", block.id):
                act.call_stack.pop()

    def _op_repeat_until(self, act, block):
        head = self._substack(block)
        act.call_stack.append(("control_repeat_until", block.id))
        try:
            while not self.bool_input(act, block, "CONDITION"):
                if head is not None:
                    yield from self._run_chain(act, head)
                    if act.restarted:
                        return
                yield
        finally:
            if act.call_stack and act.call_stack[-1] == ("control_repeat_until", block.id):
                act.call_stack.pop()

    def _op_if(self, act, block):
        if self.bool_input(act, block, "CONDITION"):
            head = self._substack(block)
            if head is not None:
                yield from self._run_chain(act, head)

    def _op_if_else(self, act, block):
        branch = "SUBSTACK" if self.bool_input(act, block, "CONDITION") else "SUBSTACK2"
        head = self._substack(block, branch)
        if head is not None:
            yield from self._run_chain(act, head)

    def _op_wait(self, act, block):
        seconds = self.num_input(act, block, "DURATION", 0)
        ticks = max(1, math.ceil(seconds * self.config.ticks_per_second))
        deadline = self.tick + ticks
        act.wait_state = "until_tick(%d)" % deadline
        while self.tick < deadline:
            yield
        act.wait_state = "none"

    def _op_wait_until(self, act, block):
        act.wait_state = "until_predicate"
        while not self.bool_input(act, block, "CONDITION"):
            yield
        act.wait_state = "none"

    def _op_stop(self, act, block):
        option = block.field_value("STOP_OPTION", "all")
        if option == "all":
            for other in self.activations:
                if other is not act:
                    other.done = True
            raise _StopScript()
        if option == "this script":
            raise _StopScript()
        if option == "other scripts in sprite":
            for other in self.activations:
                if other is not act and other.owner is act.owner:
                    other.done = True
            return
        self.warn("stop option %r treated as 'this script'" % option)
        raise _StopScript()

    def _op_create_clone(self, act, block):
        menu_val = block.inputs.get("CLONE_OPTION")
        name = "_myself_"
        if isinstance(menu_val, BlockRef):
            menu = act.owner.target.blocks.get(menu_val.block_id)
            if menu is not None:
                name = menu.field_value("CLONE_OPTION", "_myself_")
        elif isinstance(menu_val, Literal):
            name = str(menu_val.value)
        source = act.owner if name == "_myself_" else None
        if source is None:
            for inst in self.instances:
                if inst.alive and not inst.is_clone and inst.name == name:
                    source = inst
                    break
        if source is None or source.target.is_stage:
            self.warn("create clone of %r found no sprite" % name)
            return
        clones = sum(1 for i in self.instances if i.alive and i.is_clone)
        if clones >= self.config.clone_cap:
            self.warn("clone cap %d reached; create clone ignored" % self.config.clone_cap)
            return
        n = self._clone_counts.get(source.name, 1) + 1
        self._clone_counts[source.name] = n
        clone = SpriteInstance(source.target, "%s#%d" % (source.name, n), is_clone=True)
        clone.clone_state_from(source)
        self.instances.append(clone)
        self.warnings.append((self.tick, "spawned clone %s" % clone.instance_id))
        for hat in source.target.hat_blocks():
            if hat.opcode == "control_start_as_clone":
                self._spawn(clone, hat, restart=False)

    def _op_delete_clone(self, act, block):
        inst = act.owner
        if not inst.is_clone:
            self.warn("delete this clone on original sprite %s ignored" % inst.name)
            return
        inst.alive = False
        for other in self.activations:
            if other.owner is inst:
                other.done = True
        raise _StopScript()

    # events ----------------------------------------------------------------

    def _op_broadcast(self, act, block):
        name = self._broadcast_name(act, block)
        self._broadcast(name)

    def _op_broadcast_and_wait(self, act, block):
        name = self._broadcast_name(act, block)
        receivers = self._broadcast(name)
        serials = tuple(r.serial for r in receivers)
        act.wait_state = "until_broadcast_done"
        yield
        while any(not a.done for a in self.activations if a.serial in serials):
            yield
        act.wait_state = "none"

    def _broadcast_name(self, act, block):
        val = block.inputs.get("BROADCAST_INPUT")
        if isinstance(val, BroadcastRef):
            return val.name
        if isinstance(val, Literal):
            return str(val.value)
        if isinstance(val, BlockRef):
            return self.to_string(self._eval_reporter(act, act.owner.target.blocks.get(val.block_id)))
        return ""

    # motion ------------------------------------------------------------------

    def _clamp(self, inst):
        inst.x = min(max(inst.x, X_MIN), X_MAX)
        inst.y = min(max(inst.y, Y_MIN), Y_MAX)

    def _op_move(self, act, block):
        steps = self.num_input(act, block, "STEPS", 0)
        rad = math.radians(act.owner.direction)
        act.owner.x += steps * math.sin(rad)
        act.owner.y += steps * math.cos(rad)
        self._clamp(act.owner)

    def _op_goto_xy(self, act, block):
        act.owner.x = self.num_input(act, block, "X", 0)
        act.owner.y = self.num_input(act, block, "Y", 0)
        self._clamp(act.owner)

    def _op_change_x(self, act, block):
        act.owner.x += self.num_input(act, block, "DX", 0)
        self._clamp(act.owner)

    def _op_change_y(self, act, block):
        act.owner.y += self.num_input(act, block, "DY", 0)
        self._clamp(act.owner)

    def _op_set_x(self, act, block):
        act.owner.x = self.num_input(act, block, "X", 0)
        self._clamp(act.owner)

    def _op_set_y(self, act, block):
        act.owner.y = self.num_input(act, block, "Y", 0)
        self._clamp(act.owner)

    def _op_point_dir(self, act, block):
        act.owner.direction = _norm_direction(self.num_input(act, block, "DIRECTION", 90))

    def _op_turn_right(self, act, block):
        act.owner.direction = _norm_direction(
            act.owner.direction + self.num_input(act, block, "DEGREES", 0))

    def _op_turn_left(self, act, block):
        act.owner.direction = _norm_direction(
            act.owner.direction - self.num_input(act, block, "DEGREES", 0))

    def _op_bounce(self, act, block):
        inst = act.owner
        w, h = inst.bbox()
        bounced = False
        if inst.x - w / 2 <= X_MIN or inst.x + w / 2 >= X_MAX:
            inst.direction = _norm_direction(-inst.direction)
            bounced = True
        if inst.y - h / 2 <= Y_MIN or inst.y + h / 2 >= Y_MAX:
            inst.direction = _norm_direction(180 - inst.direction)
            bounced = True
        if bounced:
            inst.x = min(max(inst.x, X_MIN + w / 2), X_MAX - w / 2)
            inst.y = min(max(inst.y, Y_MIN + h / 2), Y_MAX - h / 2)

    # looks ---------------------------------------------------------------------

    def _op_show(self, act, block):
        act.owner.visible = True

    def _op_hide(self, act, block):
        act.owner.visible = False

    def _op_say(self, act, block):
        act.owner.say_text = self.to_string(self.eval_input(act, block, "MESSAGE", ""))

    def _op_switch_costume(self, act, block):
        inst = act.owner
        val = block.inputs.get("COSTUME")
        name = None
        if isinstance(val, BlockRef):
            menu = inst.target.blocks.get(val.block_id)
            if menu is not None and menu.opcode == "looks_costume":
                name = menu.field_value("COSTUME")
            else:
                name = self.to_string(self._eval_reporter(act, menu))
        elif val is not None:
            name = self.to_string(self.eval_input(act, block, "COSTUME", ""))
        if name is None:
            return
        for i, costume in enumerate(inst.target.costumes):
            if costume.name == name:
                inst.current_costume = i
                return
        try:
            index = int(float(name)) - 1
            if 0 <= index < len(inst.target.costumes):
                inst.current_costume = index
        except ValueError:
            self.warn("switch costume to unknown %r ignored" % name)

    def _op_next_costume(self, act, block):
        n = len(act.owner.target.costumes)
        if n:
            act.owner.current_costume = (act.owner.current_costume + 1) % n

    def _op_set_size(self, act, block):
        act.owner.size = _clamp_size(self.num_input(act, block, "SIZE", 100))

    def _op_change_size(self, act, block):
        act.owner.size = _clamp_size(act.owner.size + self.num_input(act, block, "CHANGE", 0))

    def _op_front_back(self, act, block):
        layers = [i.layer for i in self.instances if i.alive and not i.target.is_stage]
        if block.field_value("FRONT_BACK", "front") == "front":
            act.owner.layer = (max(layers) if layers else 0) + 1
        else:
            act.owner.layer = (min(layers) if layers else 0) - 1

    # data --------------------------------------------------------------------

    def _resolve_var(self, act, block):
        pair = block.fields.get("VARIABLE")
        if not pair:
            return None, None
        name, vid = pair
        inst = act.owner
        if vid:
            if vid in inst.variables:
                return vid, inst
            if vid in self.globals:
                return vid, None
        for cand_id, value_name in self._var_names(inst):
            if value_name == name:
                return cand_id, inst if cand_id in inst.variables else None
        self.warn("variable %r undeclared; tracked as transient global" % name)
        new_id = vid or "auto_%s" % name
        self.globals.setdefault(new_id, 0)
        self._auto_vars[new_id] = name
        return new_id, None

    def _var_names(self, inst):
        for vid in inst.variables:
            yield vid, inst.target.variables[vid][0]
        stage = self.project.stage
        if stage is not None:
            for vid in self.globals:
                if vid in stage.variables:
                    yield vid, stage.variables[vid][0]
        for vid, name in self._auto_vars.items():
            yield vid, name

    def _read_var(self, act, vid):
        if vid in act.owner.variables:
            return act.owner.variables[vid]
        return self.globals.get(vid, 0)

    def _write_var(self, act, vid, owner, value):
        if owner is not None:
            owner.variables[vid] = value
        else:
            self.globals[vid] = value

    def _op_set_var(self, act, block):
        vid, owner = self._resolve_var(act, block)
        if vid is None:
            return
        self._write_var(act, vid, owner, self.eval_input(act, block, "VALUE", 0))

    def _op_change_var(self, act, block):
        vid, owner = self._resolve_var(act, block)
        if vid is None:
            return
        current = self.to_number(self._read_var(act, vid))
        delta = self.num_input(act, block, "VALUE", 0)
        self._write_var(act, vid, owner, _keep_int(current + delta))

    # -- sensing/touching -------------------------------------------------------

    def touching(self, inst, what):
        """Sprite-vs-sprite/edge/color contact; invisible sprites touch nothing."""
        if not inst.visible or not inst.alive:
            return False
        w, h = inst.bbox()
        if what == "_edge_":
            return (inst.x - w / 2 <= X_MIN or inst.x + w / 2 >= X_MAX
                    or inst.y - h / 2 <= Y_MIN or inst.y + h / 2 >= Y_MAX)
        if what == "_mouse_":
            mx, my = self.mouse
            return abs(mx - inst.x) <= w / 2 and abs(my - inst.y) <= h / 2
        for other in self.instances:
            if other is inst or not other.alive or other.target.is_stage:
                continue
            if other.name != what or not other.visible:
                continue
            ow, oh = other.bbox()
            if (abs(inst.x - other.x) < (w + ow) / 2
                    and abs(inst.y - other.y) < (h + oh) / 2):
                return True
        return False

    def touching_color(self, inst, color):
        """Exact-match contact with another sprite's fill or the backdrop fill."""
        if not inst.visible or not inst.alive:
            return False
        rgb = _parse_color(color)
        if rgb is None:
            return False
        stage = self.project.stage
        if stage is not None:
            backdrop = stage.costume()
            if backdrop is not None and tuple(backdrop.fill_color) == rgb:
                return True
        w, h = inst.bbox()
        for other in self.instances:
            if other is inst or not other.alive or other.target.is_stage or not other.visible:
                continue
            costume = other.target.costume(other.current_costume)
            if costume is None or tuple(costume.fill_color) != rgb:
                continue
            ow, oh = other.bbox()
            if (abs(inst.x - other.x) < (w + ow) / 2
                    and abs(inst.y - other.y) < (h + oh) / 2):
                return True
        return False

    # -- expression evaluation ---------------------------------------------------

    def eval_input(self, act, block, name, default=None):
        val = block.inputs.get(name)
        if val is None:
            return default
        if isinstance(val, Literal):
            return val.value
        if isinstance(val, VariableRef):
            return self._read_var(act, val.var_id)
        if isinstance(val, BroadcastRef):
            return val.name
        if isinstance(val, BlockRef):
            child = act.owner.target.blocks.get(val.block_id)
            return self._eval_reporter(act, child)
        return default

    def num_input(self, act, block, name, default=0):
        return self.to_number(self.eval_input(act, block, name, default))

    def bool_input(self, act, block, name):
        return self.truthy(self.eval_input(act, block, name, False))

    def _eval_reporter(self, act, block):
        if block is None:
            return 0
        op = block.opcode
        fn = _REPORTER_OPS.get(op)
        if fn is None:
            if op not in self._warned_opcodes:
                self._warned_opcodes.add(op)
                self.warn("unsupported reporter %s evaluates to 0" % op)
            return 0
        return fn(self, act, block)

    def to_number(self, value, context="number"):
        if isinstance(value, bool):
            return 1 if value else 0
        if isinstance(value, (int, float)):
            return value
        try:
            f = float(str(value))
            return _keep_int(f)
        except (TypeError, ValueError):
            if value not in (None, ""):
                self.warn("cannot coerce %r to %s; using 0" % (value, context))
            return 0

    def to_string(self, value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float) and value.is_integer():
            return str(int(value))
        return str(value)

    def truthy(self, value):
        if isinstance(value, bool):
            return value
        if isinstance(value, (int, float)):
            return value != 0
        return str(value).lower() not in ("", "0", "false")

    def _compare(self, a, b):
        try:
            fa, fb = float(a if not isinstance(a, bool) else int(a)), \
                float(b if not isinstance(b, bool) else int(b))
            return (fa > fb) - (fa < fb)
        except (TypeError, ValueError):
            sa, sb = self.to_string(a).lower(), self.to_string(b).lower()
            return (sa > sb) - (sa < sb)


def _keep_int(f):
    if isinstance(f, float) and f.is_integer() and abs(f) < 1e15:
        return int(f)
    return f


def _clamp_size(size):
    return min(max(size, 1.0), 500.0)


def _norm_direction(deg):
    deg = math.fmod(deg, 360.0)
    if deg > 180.0:
        deg -= 360.0
    if deg <= -180.0:
        deg += 360.0
    return deg


def _parse_color(value):
    text = str(value).strip()
    if text.startswith("#"):
        text = text[1:]
    if len(text) == 3:
        text = "".join(c * 2 for c in text)
    if len(text) != 6:
        return None
    try:
        return tuple(int(text[i:i + 2], 16) for i in (0, 2, 4))
    except ValueError:
        return None


# reporter handlers ----------------------------------------------------------

def _rep_variable(vm, act, block):
    pair = block.fields.get("VARIABLE")
    if not pair:
        return 0
    name, vid = pair
    if vid and (vid in act.owner.variables or vid in vm.globals):
        return vm._read_var(act, vid)
    for cand_id, value_name in vm._var_names(act.owner):
        if value_name == name:
            return vm._read_var(act, cand_id)
    return 0


def _rep_touching(vm, act, block):
    val = block.inputs.get("TOUCHINGOBJECTMENU")
    what = ""
    if isinstance(val, BlockRef):
        menu = act.owner.target.blocks.get(val.block_id)
        what = menu.field_value("TOUCHINGOBJECTMENU", "") if menu else ""
    elif isinstance(val, Literal):
        what = str(val.value)
    return vm.touching(act.owner, what)


def _rep_touching_color(vm, act, block):
    color = vm.eval_input(act, block, "COLOR", "")
    return vm.touching_color(act.owner, color)


def _rep_key_pressed(vm, act, block):
    val = block.inputs.get("KEY_OPTION")
    key = ""
    if isinstance(val, BlockRef):
        menu = act.owner.target.blocks.get(val.block_id)
        key = menu.field_value("KEY_OPTION", "") if menu else ""
    elif isinstance(val, Literal):
        key = str(val.value)
    if key == "any":
        return bool(vm.keys_down)
    return key in vm.keys_down


def _rep_random(vm, act, block):
    lo = vm.num_input(act, block, "FROM", 0)
    hi = vm.num_input(act, block, "TO", 0)
    if lo > hi:
        lo, hi = hi, lo
    if isinstance(lo, int) and isinstance(hi, int):
        return vm.rng.randint(lo, hi)
    return vm.rng.uniform(lo, hi)


def _rep_divide(vm, act, block):
    a = vm.num_input(act, block, "NUM1", 0)
    b = vm.num_input(act, block, "NUM2", 0)
    if b == 0:
        vm.warn("division by zero evaluates to 0")
        return 0
    return _keep_int(a / b)


_REPORTER_OPS = {
    "data_variable": _rep_variable,
    "sensing_touchingobject": _rep_touching,
    "sensing_touchingcolor": _rep_touching_color,
    "sensing_keypressed": _rep_key_pressed,
    "sensing_mousedown": lambda vm, act, block: (
        vm.mouse_pressed_at is not None and vm.tick == vm.mouse_pressed_at + 1),
    "sensing_mousex": lambda vm, act, block: vm.mouse[0],
    "sensing_mousey": lambda vm, act, block: vm.mouse[1],
    "operator_add": lambda vm, act, block: _keep_int(
        vm.num_input(act, block, "NUM1", 0) + vm.num_input(act, block, "NUM2", 0)),
    "operator_subtract": lambda vm, act, block: _keep_int(
        vm.num_input(act, block, "NUM1", 0) - vm.num_input(act, block, "NUM2", 0)),
    "operator_multiply": lambda vm, act, block: _keep_int(
        vm.num_input(act, block, "NUM1", 0) * vm.num_input(act, block, "NUM2", 0)),
    "operator_divide": _rep_divide,
    "operator_lt": lambda vm, act, block: vm._compare(
        vm.eval_input(act, block, "OPERAND1", ""), vm.eval_input(act, block, "OPERAND2", "")) < 0,
    "operator_equals": lambda vm, act, block: vm._compare(
        vm.eval_input(act, block, "OPERAND1", ""), vm.eval_input(act, block, "OPERAND2", "")) == 0,
    "operator_gt": lambda vm, act, block: vm._compare(
        vm.eval_input(act, block, "OPERAND1", ""), vm.eval_input(act, block, "OPERAND2", "")) > 0,
    "operator_and": lambda vm, act, block: (
        vm.bool_input(act, block, "OPERAND1") and vm.bool_input(act, block, "OPERAND2")),
    "operator_or": lambda vm, act, block: (
        vm.bool_input(act, block, "OPERAND1") or vm.bool_input(act, block, "OPERAND2")),
    "operator_not": lambda vm, act, block: not vm.bool_input(act, block, "OPERAND"),
    "operator_random": _rep_random,
    "operator_join": lambda vm, act, block: (
        vm.to_string(vm.eval_input(act, block, "STRING1", ""))
        + vm.to_string(vm.eval_input(act, block, "STRING2", ""))),
    "operator_length": lambda vm, act, block: len(
        vm.to_string(vm.eval_input(act, block, "STRING", ""))),
}

_STACK_OPS = {
    "control_forever": VM._op_forever,
    "control_repeat": VM._op_repeat,
    "control_repeat_until": VM._op_repeat_until,
    "control_if": VM._op_if,
    "control_if_else": VM._op_if_else,
    "control_wait": VM._op_wait,
    "control_wait_until": VM._op_wait_until,
    "control_stop": VM._op_stop,
    "control_create_clone_of": VM._op_create_clone,
    "control_delete_this_clone": VM._op_delete_clone,
    "event_broadcast": VM._op_broadcast,
    "event_broadcastandwait": VM._op_broadcast_and_wait,
    "motion_movesteps": VM._op_move,
    "motion_gotoxy": VM._op_goto_xy,
    "motion_changexby": VM._op_change_x,
    "motion_changeyby": VM._op_change_y,
    "motion_setx": VM._op_set_x,
    "motion_sety": VM._op_set_y,
    "motion_pointindirection": VM._op_point_dir,
    "motion_turnright": VM._op_turn_right,
    "motion_turnleft": VM._op_turn_left,
    "motion_ifonedgebounce": VM._op_bounce,
    "looks_show": VM._op_show,
    "looks_hide": VM._op_hide,
    "looks_say": VM._op_say,
    "looks_switchcostumeto": VM._op_switch_costume,
    "looks_nextcostume": VM._op_next_costume,
    "looks_setsizeto": VM._op_set_size,
    "looks_changesizeby": VM._op_change_size,
    "looks_gotofrontback": VM._op_front_back,
    "data_setvariableto": VM._op_set_var,
    "data_changevariableby": VM._op_change_var,
}

SUPPORTED_STACK_OPCODES = frozenset(_STACK_OPS)
SUPPORTED_REPORTER_OPCODES = frozenset(_REPORTER_OPS)


def run(project, scenario=None, config=None):
    """Execute a project under scenario events; returns the FrameTrace."""
    events = []
    name = ""
    if scenario is not None:
        events = getattr(scenario, "events", scenario if isinstance(scenario, list) else [])
        name = getattr(scenario, "name", "")
    vm = VM(project, events=events, config=config)
    trace = vm.run()
    if name:
        trace.scenario_echo["name"] = name
    return trace
