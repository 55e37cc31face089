"""Run sessions: the state machine behind both the CLI pipeline and the API.

States move Loaded -> Traced -> Diagnosed -> AwaitingSelection ->
Repairing -> (Verified | Diagnosed | Exhausted); rejections loop back
through Diagnosed with an updated hint, and an exhausted session may be
re-diagnosed.  History is append-only.  With a workdir set, every artifact
(project, trace, frames, patches, verdicts) is written to disk as produced.
"""

import json
import os
import uuid

from . import vm as vm_mod
from .backends import make_diagnosis_backend, make_repair_backend
from .diagnose import RetryHistory, UserHint
from .normalize import normalize
from .raster import rasterize
from .sb3 import graph_isomorphic, parse_sb3, serialize_sb3
from .trace import detect_symptoms, keyframe_ticks
from .verify import repair_loop


STATES = ("Loaded", "Traced", "Diagnosed", "AwaitingSelection",
          "Repairing", "Verified", "Exhausted")

# action -> (allowed source states, resting state)
_ACTIONS = {
    "trace": (("Loaded",), "Traced"),
    "diagnose": (("Traced", "Exhausted"), "AwaitingSelection"),
    "reject": (("AwaitingSelection",), "AwaitingSelection"),
    "select": (("AwaitingSelection",), None),   # lands on Verified or Exhausted
    "download": (("Verified",), "Verified"),
}


class IllegalTransition(Exception):
    def __init__(self, action, state):
        super().__init__("action %r is not allowed in state %s" % (action, state))
        self.action = action
        self.state = state


class RunSession:
    def __init__(self, archive_bytes, scenario, config=None, backend="oracle",
                 backend_config=None, workdir=None, session_id=None, meta=None):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.project = parse_sb3(archive_bytes, meta=meta)
        self.normalized = normalize(self.project)
        self.scenario = scenario
        self.config = config or scenario.vm_config()
        self.backend_kind = backend
        self.backend_config = backend_config
        self.trace = None
        self.current_diagnosis = None
        self.history = RetryHistory()
        self.state = "Loaded"
        self.repaired = None
        self.pass_at = None
        self.verdict = None
        self.keyframe_ticks = []
        self.workdir = None
        if workdir:
            self.workdir = os.path.join(workdir, "session", self.session_id)
            os.makedirs(self.workdir, exist_ok=True)
            self._write("project.sb3", archive_bytes)
            self._write("scenario.json", scenario.to_json().encode("utf-8"))

    # -- state plumbing ------------------------------------------------------

    def _require(self, action):
        allowed, _rest = _ACTIONS[action]
        if self.state not in allowed:
            raise IllegalTransition(action, self.state)

    def _write(self, name, data):
        if not self.workdir:
            return
        path = os.path.join(self.workdir, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(path, mode) as fh:
            fh.write(data)

    # -- actions ---------------------------------------------------------------

    def do_trace(self, keyframe_budget=6):
        self._require("trace")
        self.trace = vm_mod.run(self.normalized.project, self.scenario, self.config)
        self.keyframe_ticks = keyframe_ticks(self.trace, keyframe_budget)
        self.state = "Traced"
        self._write("trace.jsonl", self.trace.to_jsonl())
        return self.trace

    def do_diagnose(self, hint_text=None):
        self._require("diagnose")
        hint = UserHint(text=hint_text) if hint_text else None
        backend = make_diagnosis_backend(self.backend_kind, self.backend_config)
        self.state = "Diagnosed"
        self.current_diagnosis = backend.diagnose(
            self.normalized, self.trace, history=self.history, hint=hint)
        self.state = "AwaitingSelection"
        return self.current_diagnosis

    def do_reject(self, hint_text):
        self._require("reject")
        hint = UserHint(text=hint_text or "",
                        rejected_options=tuple(o.text for o in
                                               self.current_diagnosis.fix_options))
        self.history.record_rejection(self.current_diagnosis, hint)
        backend = make_diagnosis_backend(self.backend_kind, self.backend_config)
        self.state = "Diagnosed"
        self.current_diagnosis = backend.diagnose(
            self.normalized, self.trace, history=self.history, hint=hint)
        self.state = "AwaitingSelection"
        return self.current_diagnosis

    def do_select(self, label, k=5):
        self._require("select")
        fix = self.current_diagnosis.option(label)
        if fix is None:
            raise IllegalTransition("select:%s" % label, self.state)
        self.state = "Repairing"
        backend = make_repair_backend(self.backend_kind, self.backend_config,
                                      diagnosis=self.current_diagnosis)
        repaired, self.history, self.pass_at = repair_loop(
            self.normalized, self.current_diagnosis, fix, [self.scenario],
            backend, k=k, config=self.config, history=self.history)
        self.repaired = repaired
        for entry in self.history.entries:
            if entry.patch is not None:
                self._write("patches/patch_%d.txt" % entry.attempt_index,
                            entry.patch.provenance)
                self._write("patches/patch_%d.json" % entry.attempt_index,
                            json.dumps([self._edit_summary(e) for e in entry.patch.edits],
                                       sort_keys=True, indent=2))
            if entry.verdict is not None:
                self._write("verdicts/verdict_%d.json" % entry.attempt_index,
                            json.dumps(entry.verdict.log, sort_keys=True, indent=2,
                                       default=str))
        if self.pass_at is not None:
            self.state = "Verified"
            self.verdict = self.history.entries[-1].verdict
            self._write("fixed.sb3", serialize_sb3(repaired.project))
        else:
            self.state = "Exhausted"
            self.verdict = next((e.verdict for e in reversed(self.history.entries)
                                 if e.verdict is not None), None)
        return self.pass_at

    def fixed_bytes(self):
        self._require("download")
        return serialize_sb3(self.repaired.project)

    def frame_png(self, tick):
        if self.trace is None:
            raise IllegalTransition("frames", self.state)
        frame = self.trace.frame_at(tick)
        if frame is None:
            return None
        image = rasterize(frame, self.normalized.project)
        data = image.to_png()
        self._write("frames/frame_%d.png" % tick, data)
        return data

    # -- reporting --------------------------------------------------------------

    def patch_diffs(self):
        """Block-level before/after listing per successful patch attempt."""
        diffs = []
        for entry in self.history.entries:
            if entry.patch is None:
                continue
            diffs.append({
                "attempt": entry.attempt_index,
                "instructions": entry.patch.provenance,
                "edits": [self._edit_summary(e) for e in entry.patch.edits],
                "verdict": getattr(entry.verdict, "status", None),
            })
        if self.repaired is not None:
            diffs.append({"attempt": "final",
                          "blocks": _block_diff(self.normalized.project,
                                                self.repaired.project)})
        return diffs

    @staticmethod
    def _edit_summary(edit):
        anchor = edit.anchor if isinstance(edit.anchor, str) else (
            edit.anchor.describe() if edit.anchor is not None else None)
        return {"kind": edit.kind, "sprite": edit.target_sprite,
                "anchor": anchor, "relation": edit.relation}

    def status(self):
        doc = {
            "session_id": self.session_id,
            "state": self.state,
            "scenario": self.scenario.name,
            "frames": len(self.trace.frames) if self.trace else 0,
            "keyframes": self.keyframe_ticks,
            "diagnosis": self.current_diagnosis.to_dict() if self.current_diagnosis else None,
            "history": self.history.to_dict(),
            "pass_at": self.pass_at,
            "verdict": getattr(self.verdict, "status", None),
            "failed_assertions": ([r.to_dict() for r in self.verdict.failed_assertions]
                                  if self.verdict else []),
            "patch_diffs": self.patch_diffs(),
        }
        if self.trace is not None:
            doc["symptoms"] = [s.describe() for s in
                               detect_symptoms(self.trace, self.normalized.project)]
        return doc


def _block_diff(before, after):
    out = []
    for b_target in before.targets:
        a_target = after.target(b_target.name)
        if a_target is None:
            out.append({"sprite": b_target.name, "removed_target": True})
            continue
        removed = [bid for bid in b_target.blocks if bid not in a_target.blocks]
        added = [bid for bid in a_target.blocks if bid not in b_target.blocks]
        changed = [bid for bid in b_target.blocks
                   if bid in a_target.blocks and b_target.blocks[bid] != a_target.blocks[bid]]
        if removed or added or changed:
            out.append({
                "sprite": b_target.name,
                "added": [_render_block(a_target, bid) for bid in sorted(added)],
                "removed": [_render_block(b_target, bid) for bid in sorted(removed)],
                "changed": [_render_block(a_target, bid) for bid in sorted(changed)],
            })
    return out


def _render_block(target, bid):
    block = target.blocks[bid]
    bits = [block.opcode]
    for name, (value, _fid) in sorted(block.fields.items()):
        bits.append("%s=%s" % (name, value))
    for name in sorted(block.inputs):
        val = block.inputs[name]
        bits.append("%s=%s" % (name, val.describe()))
    return "%s: %s" % (bid, " ".join(bits))


class SessionStore:
    """In-memory session registry used by the HTTP service."""

    def __init__(self, workdir=None, backend="oracle", backend_config=None):
        self.sessions = {}
        self.workdir = workdir
        self.backend = backend
        self.backend_config = backend_config

    def create(self, archive_bytes, scenario, meta=None, backend=None):
        session = RunSession(
            archive_bytes, scenario,
            backend=backend or self.backend,
            backend_config=self.backend_config,
            workdir=self.workdir,
            meta=meta,
        )
        self.sessions[session.session_id] = session
        return session

    def get(self, session_id):
        return self.sessions.get(session_id)
