"""Typed project model for Scratch 3.0 (.sb3) programs.

A Project is the in-memory form of a project.json plus its media assets.
Values are treated as immutable after construction; every mutation path in
this package goes through copy-and-replace (see edits.py).
"""

from dataclasses import dataclass, field, replace
import copy
import hashlib

STAGE_WIDTH = 480
STAGE_HEIGHT = 360
X_MIN, X_MAX = -240.0, 240.0
Y_MIN, Y_MAX = -180.0, 180.0


class ProjectInvariantError(Exception):
    """A Project value violates one of its structural invariants."""


# ---------------------------------------------------------------------------
# Input values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    """A constant input slot: number, string, or color string like '#8b4513'."""
    value: object

    def describe(self):
        return repr(self.value)


@dataclass(frozen=True)
class BlockRef:
    """Input slot occupied by another block (reporter or substack entry)."""
    block_id: str

    def describe(self):
        return "block:%s" % self.block_id


@dataclass(frozen=True)
class VariableRef:
    """Input slot reading a variable by id (name kept for display)."""
    var_id: str
    name: str

    def describe(self):
        return "var:%s" % self.name


@dataclass(frozen=True)
class BroadcastRef:
    """Input slot naming a broadcast message."""
    broadcast_id: str
    name: str

    def describe(self):
        return "broadcast:%s" % self.name


@dataclass(frozen=True)
class ListRef:
    """Input slot reading a list by id (lists load but list blocks are inert)."""
    list_id: str
    name: str

    def describe(self):
        return "list:%s" % self.name


InputValue = Literal | BlockRef | VariableRef | BroadcastRef | ListRef


@dataclass(frozen=True)
class Block:
    id: str
    opcode: str
    next: str | None = None
    parent: str | None = None
    inputs: dict[str, InputValue] = field(default_factory=dict)
    fields: dict[str, tuple[str, str | None]] = field(default_factory=dict)
    top_level: bool = False
    shadow: bool = False

    def field_value(self, name, default=None):
        pair = self.fields.get(name)
        return pair[0] if pair else default

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class CostumeRef:
    name: str
    asset_id: str
    data_format: str = "svg"
    fill_color: tuple[int, int, int] = (128, 128, 128)
    width: float = 64.0
    height: float = 64.0
    rotation_center: tuple[float, float] = (32.0, 32.0)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ProjectInvariantError(
                "costume %r has non-positive size %sx%s" % (self.name, self.width, self.height))


def default_fill_color(sprite_name, costume_name):
    """Deterministic per-sprite fallback color when no sidecar declares one."""
    digest = hashlib.md5(("%s:%s" % (sprite_name, costume_name)).encode("utf-8")).digest()
    # Bias channels upward so silhouettes stay distinguishable from a dark canvas.
    return (64 + digest[0] % 192, 64 + digest[1] % 192, 64 + digest[2] % 192)


@dataclass
class Target:
    name: str
    is_stage: bool = False
    blocks: dict[str, Block] = field(default_factory=dict)
    variables: dict[str, tuple[str, object]] = field(default_factory=dict)
    lists: dict[str, tuple[str, list]] = field(default_factory=dict)
    costumes: list[CostumeRef] = field(default_factory=list)
    current_costume: int = 0
    x: float = 0.0
    y: float = 0.0
    size: float = 100.0
    direction: float = 90.0
    visible: bool = True
    layer: int = 0
    comments: dict[str, dict] = field(default_factory=dict)

    def costume(self, index=None):
        if not self.costumes:
            return None
        i = self.current_costume if index is None else index
        return self.costumes[max(0, min(i, len(self.costumes) - 1))]

    def hat_blocks(self):
        """Top-level event-entry blocks in canonical (opcode, id) order."""
        hats = [b for b in self.blocks.values() if b.top_level and is_hat_opcode(b.opcode)]
        return sorted(hats, key=lambda b: (b.opcode, b.id))

    def script_blocks(self, hat):
        """Every block reachable from `hat` through next links, substacks and inputs."""
        seen = []
        stack = [hat.id]
        visited = set()
        while stack:
            bid = stack.pop()
            if bid in visited or bid not in self.blocks:
                continue
            visited.add(bid)
            block = self.blocks[bid]
            seen.append(block)
            if block.next:
                stack.append(block.next)
            for val in block.inputs.values():
                if isinstance(val, BlockRef):
                    stack.append(val.block_id)
        return seen


@dataclass
class Project:
    targets: list[Target] = field(default_factory=list)
    broadcasts: dict[str, str] = field(default_factory=dict)
    monitors: list = field(default_factory=list)
    extensions: list[str] = field(default_factory=list)
    meta_version: str = "3.0.0"
    assets: dict[str, tuple[bytes, str]] = field(default_factory=dict)
    load_warnings: list[str] = field(default_factory=list)

    @property
    def stage(self):
        return self.targets[0] if self.targets and self.targets[0].is_stage else None

    @property
    def sprites(self):
        return [t for t in self.targets if not t.is_stage]

    def target(self, name):
        for t in self.targets:
            if t.name == name:
                return t
        return None

    def displayed_variables(self):
        """(sprite_or_None, var_name) pairs shown by visible variable monitors."""
        shown = []
        for mon in self.monitors:
            if not isinstance(mon, dict) or not mon.get("visible"):
                continue
            if mon.get("opcode") != "data_variable":
                continue
            params = mon.get("params") or {}
            name = params.get("VARIABLE")
            if name:
                shown.append((mon.get("spriteName"), name))
        return shown

    def copy(self):
        return copy.deepcopy(self)


HAT_OPCODES = frozenset({
    "event_whenflagclicked",
    "event_whenkeypressed",
    "event_whenthisspriteclicked",
    "event_whenbroadcastreceived",
    "control_start_as_clone",
})

C_BLOCK_SUBSTACKS = {
    "control_forever": ("SUBSTACK",),
    "control_repeat": ("SUBSTACK",),
    "control_repeat_until": ("SUBSTACK",),
    "control_if": ("SUBSTACK",),
    "control_if_else": ("SUBSTACK", "SUBSTACK2"),
}


def is_hat_opcode(opcode):
    return opcode in HAT_OPCODES


def substack_inputs(opcode):
    return C_BLOCK_SUBSTACKS.get(opcode, ())


# ---------------------------------------------------------------------------
# Invariant checking
# ---------------------------------------------------------------------------

def check_link_integrity(target):
    """Verify parent/next consistency and next-chain acyclicity for one target.

    Returns a list of violation strings; empty means the block graph is sound.
    """
    problems = []
    blocks = target.blocks
    for block in blocks.values():
        if not block.opcode:
            problems.append("block %s has empty opcode" % block.id)
        if block.next is not None:
            nxt = blocks.get(block.next)
            if nxt is None:
                problems.append("block %s: next %s missing" % (block.id, block.next))
            elif nxt.parent != block.id:
                problems.append(
                    "block %s: next %s has parent %s" % (block.id, block.next, nxt.parent))
        if block.parent is not None and block.parent not in blocks:
            problems.append("block %s: parent %s missing" % (block.id, block.parent))
        for name, val in block.inputs.items():
            if isinstance(val, BlockRef):
                child = blocks.get(val.block_id)
                if child is None:
                    problems.append(
                        "block %s: input %s references missing %s" % (block.id, name, val.block_id))
                elif name in substack_inputs(block.opcode) and child.parent != block.id:
                    problems.append(
                        "block %s: substack %s head %s has parent %s"
                        % (block.id, name, child.id, child.parent))
    # next-chains must be acyclic
    for block in blocks.values():
        seen = set()
        cur = block.id
        while cur is not None:
            if cur in seen:
                problems.append("next-link cycle through %s" % cur)
                break
            seen.add(cur)
            nxt = blocks.get(cur)
            cur = nxt.next if nxt else None
    return problems


def check_project(project):
    """Full structural validation; returns violation strings."""
    problems = []
    stages = [t for t in project.targets if t.is_stage]
    if len(stages) != 1:
        problems.append("project has %d stage targets, expected 1" % len(stages))
    elif project.targets[0] is not stages[0]:
        problems.append("stage is not the first target")
    for target in project.targets:
        problems.extend(check_link_integrity(target))
        for block in target.blocks.values():
            for val in block.inputs.values():
                if isinstance(val, BroadcastRef) and val.broadcast_id not in project.broadcasts:
                    problems.append(
                        "block %s references unknown broadcast %s" % (block.id, val.broadcast_id))
            for fname, (value, fid) in block.fields.items():
                if fname == "BROADCAST_OPTION" and fid and fid not in project.broadcasts:
                    problems.append(
                        "block %s receives unknown broadcast %s" % (block.id, fid))
        for costume in target.costumes:
            if costume.asset_id not in project.assets:
                problems.append(
                    "target %s costume %s names missing asset %s"
                    % (target.name, costume.name, costume.asset_id))
    return problems


def assert_project_ok(project):
    problems = check_project(project)
    if problems:
        raise ProjectInvariantError("; ".join(problems))
