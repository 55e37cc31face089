"""Canonicalize projects before diagnosis and repair.

Normalization strips comments and unreferenced shadow blocks, reorders each
target's block map into canonical script order (hat opcode, then hat id, then
traversal order), and sorts the symbol tables.  It is idempotent and
semantics-preserving: script activation order in the VM is defined by the
same (opcode, id) rule normalization sorts by, so traces do not change.
"""

from dataclasses import dataclass, field

from .model import BlockRef, is_hat_opcode


@dataclass
class NormalizedProject:
    project: object
    canonical_order: dict = field(default_factory=dict)   # target -> [top-level ids]
    stripped: list = field(default_factory=list)           # descriptions of removals


def normalize(project):
    proj = project.copy()
    proj.load_warnings = []
    stripped = []
    canonical_order = {}

    proj.broadcasts = dict(sorted(proj.broadcasts.items()))
    for target in proj.targets:
        for cid in sorted(target.comments):
            stripped.append("comment %s in %s" % (cid, target.name))
        target.comments = {}
        target.variables = dict(sorted(target.variables.items()))
        target.lists = dict(sorted(target.lists.items()))

        referenced = set()
        for block in target.blocks.values():
            for val in block.inputs.values():
                if isinstance(val, BlockRef):
                    referenced.add(val.block_id)
        for bid in sorted(target.blocks):
            block = target.blocks[bid]
            if block.shadow and bid not in referenced and block.parent is None:
                stripped.append("shadow block %s (%s) in %s" % (bid, block.opcode, target.name))
                del target.blocks[bid]

        tops = [b for b in target.blocks.values() if b.top_level]
        hats = sorted((b for b in tops if is_hat_opcode(b.opcode)),
                      key=lambda b: (b.opcode, b.id))
        others = sorted((b for b in tops if not is_hat_opcode(b.opcode)),
                        key=lambda b: (b.opcode, b.id))
        ordered = {}
        order_ids = []
        for top in hats + others:
            order_ids.append(top.id)
            for bid in _traversal(target, top):
                if bid not in ordered:
                    ordered[bid] = target.blocks[bid]
        # anything unreachable from a top-level block keeps its place at the end
        for bid in sorted(target.blocks):
            if bid not in ordered:
                ordered[bid] = target.blocks[bid]
        target.blocks = ordered
        canonical_order[target.name] = order_ids

    return NormalizedProject(project=proj, canonical_order=canonical_order, stripped=stripped)


def _traversal(target, head):
    """Deterministic script walk: block, its inputs (sorted), then next."""
    out = []

    def walk(bid):
        if bid in out or bid not in target.blocks:
            return
        out.append(bid)
        block = target.blocks[bid]
        for name in sorted(block.inputs):
            val = block.inputs[name]
            if isinstance(val, BlockRef):
                walk(val.block_id)
        if block.next:
            walk(block.next)

    walk(head.id)
    return out
