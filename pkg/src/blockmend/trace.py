"""Frame traces: the per-tick behavior record a VM run produces.

A FrameTrace is the artifact's stand-in for watching the program run: one
snapshot per tick of every sprite's pose and every variable's value.  The
symptom detectors in this module turn a trace into the perceptual defect
signatures (flicker, stuck variable, clone explosion, ...) that drive
diagnosis.  Detector thresholds live in `THRESHOLDS` and are test-pinned.
"""

from dataclasses import dataclass, field
import json

X_BOUND = 240.0
Y_BOUND = 180.0


@dataclass(frozen=True)
class SpriteSnap:
    instance_id: str
    sprite: str              # owning sprite name (clones share it)
    x: float
    y: float
    visible: bool
    costume: str
    size: float
    layer: int
    say_text: str
    width: float             # scaled bounding box, stage units
    height: float

    def overlaps(self, other):
        if not self.visible or not other.visible:
            return False
        return (abs(self.x - other.x) < (self.width + other.width) / 2
                and abs(self.y - other.y) < (self.height + other.height) / 2)


@dataclass
class Frame:
    tick: int
    sprites: list = field(default_factory=list)
    variables: dict = field(default_factory=dict)   # target name -> {var name -> value}
    active_scripts: int = 0
    events_this_tick: list = field(default_factory=list)

    def sprite(self, instance_id):
        for s in self.sprites:
            if s.instance_id == instance_id:
                return s
        return None

    def var(self, target, name, default=None):
        return self.variables.get(target, {}).get(name, default)

    def to_dict(self):
        return {
            "tick": self.tick,
            "sprites": [vars(s) for s in self.sprites],
            "variables": self.variables,
            "active_scripts": self.active_scripts,
            "events_this_tick": self.events_this_tick,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            tick=doc["tick"],
            sprites=[SpriteSnap(**s) for s in doc["sprites"]],
            variables=doc["variables"],
            active_scripts=doc["active_scripts"],
            events_this_tick=doc["events_this_tick"],
        )


@dataclass
class FrameTrace:
    frames: list = field(default_factory=list)
    warnings: list = field(default_factory=list)    # (tick, message)
    scenario_echo: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    def frame_at(self, tick):
        """Frame for `tick`, clamped to the trace's last frame."""
        if not self.frames:
            return None
        for f in self.frames:
            if f.tick >= tick:
                return f
        return self.frames[-1]

    def var_series(self, target, name):
        return [f.var(target, name) for f in self.frames]

    def lookup_var(self, name):
        """Find (target, name) for a bare variable name; stage wins ties."""
        if not self.frames:
            return None
        f0 = self.frames[0]
        if ":" in name:
            tgt, vname = name.split(":", 1)
            return (tgt, vname) if vname in f0.variables.get(tgt, {}) else None
        for tgt in f0.variables:
            if name in f0.variables[tgt]:
                return (tgt, name)
        return None

    def to_jsonl(self):
        lines = [json.dumps({"kind": "meta", "scenario": self.scenario_echo,
                             "config": self.config_echo}, sort_keys=True)]
        for f in self.frames:
            lines.append(json.dumps({"kind": "frame", **f.to_dict()}, sort_keys=True))
        lines.append(json.dumps({"kind": "warnings",
                                 "warnings": [[t, m] for t, m in self.warnings]}, sort_keys=True))
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_jsonl(cls, data):
        trace = cls()
        for line in data.decode("utf-8").splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            kind = doc.pop("kind", "frame")
            if kind == "meta":
                trace.scenario_echo = doc.get("scenario", {})
                trace.config_echo = doc.get("config", {})
            elif kind == "warnings":
                trace.warnings = [tuple(w) for w in doc.get("warnings", [])]
            else:
                trace.frames.append(Frame.from_dict(doc))
        return trace


def resample(trace, target_tps):
    """Re-time a trace to `target_tps`; same rate returns an equal copy."""
    src_tps = int(trace.config_echo.get("ticks_per_second", 30) or 30)
    if src_tps == target_tps or not trace.frames:
        out = FrameTrace(list(trace.frames), list(trace.warnings),
                         dict(trace.scenario_echo), dict(trace.config_echo))
        out.config_echo["ticks_per_second"] = src_tps
        return out
    duration = len(trace.frames) / src_tps
    count = max(1, int(duration * target_tps))
    frames = []
    for j in range(count):
        src_index = min(len(trace.frames) - 1, int(j * src_tps / target_tps))
        src = trace.frames[src_index]
        frames.append(Frame(tick=j, sprites=src.sprites, variables=src.variables,
                            active_scripts=src.active_scripts,
                            events_this_tick=src.events_this_tick))
    config = dict(trace.config_echo)
    config["ticks_per_second"] = target_tps
    return FrameTrace(frames, list(trace.warnings), dict(trace.scenario_echo), config)


# ---------------------------------------------------------------------------
# Symptoms
# ---------------------------------------------------------------------------

SYMPTOM_KINDS = (
    "Flicker",
    "StuckVariable",
    "JumpVariable",
    "CloneExplosion",
    "NoMotion",
    "OffStageLoss",
    "ContinuousAccrual",
    "NeverVisible",
    "InstantTermination",
)

THRESHOLDS = {
    "flicker_toggles_per_window": 6,
    "flicker_window": 30,
    "jump_min_delta": 2,
    "jump_event_radius": 2,
    "stuck_min_contact_frames": 1,
    "clone_growth_factor": 3,
    "clone_window": 90,
    "accrual_min_run": 60,
    "offstage_min_run": 30,
    "never_visible_min_frames": 30,
}


@dataclass(frozen=True)
class Symptom:
    kind: str
    subject: str
    window: tuple
    evidence: dict
    severity: float

    def describe(self):
        return "%s(%s) ticks %d..%d severity %.2f %s" % (
            self.kind, self.subject, self.window[0], self.window[1], self.severity,
            json.dumps(self.evidence, sort_keys=True))


def detect_symptoms(trace, project=None):
    """Run every detector over a trace; deterministic order and output.

    `project` is optional; it enables the one detector (NoMotion) that needs
    to know which sprites have motion blocks at all.
    """
    if len(trace.frames) < 2:
        return []
    symptoms = []
    symptoms += _detect_flicker(trace)
    symptoms += _detect_variable_symptoms(trace)
    symptoms += _detect_clone_explosion(trace)
    symptoms += _detect_offstage(trace)
    symptoms += _detect_never_visible(trace)
    symptoms += _detect_instant_termination(trace)
    if project is not None:
        symptoms += _detect_no_motion(trace, project)
    symptoms.sort(key=lambda s: (-s.severity, SYMPTOM_KINDS.index(s.kind), s.subject))
    return symptoms


def _instance_ids(trace):
    ids = []
    for f in trace.frames:
        for s in f.sprites:
            if s.instance_id not in ids:
                ids.append(s.instance_id)
    return ids


def _detect_flicker(trace):
    window = THRESHOLDS["flicker_window"]
    need = THRESHOLDS["flicker_toggles_per_window"]
    out = []
    for iid in _instance_ids(trace):
        toggles = []  # ticks where visibility changed vs previous frame
        prev = None
        for f in trace.frames:
            s = f.sprite(iid)
            if s is None:
                continue
            if prev is not None and s.visible != prev:
                toggles.append(f.tick)
            prev = s.visible
        best, best_at = 0, 0
        for i, t0 in enumerate(toggles):
            in_window = [t for t in toggles[i:] if t < t0 + window]
            if len(in_window) > best:
                best, best_at = len(in_window), t0
        if best >= need:
            out.append(Symptom(
                kind="Flicker", subject=iid,
                window=(best_at, min(best_at + window, trace.frames[-1].tick)),
                evidence={"toggles_in_window": best, "window_ticks": window,
                          "total_toggles": len(toggles)},
                severity=min(1.0, best / window * 2),
            ))
    return out


def _contact_ticks(trace):
    """Ticks where any two visible sprite instances overlap."""
    ticks = []
    for f in trace.frames:
        hit = False
        for i in range(len(f.sprites)):
            for j in range(i + 1, len(f.sprites)):
                if f.sprites[i].overlaps(f.sprites[j]):
                    hit = True
                    break
            if hit:
                break
        if hit:
            ticks.append(f.tick)
    return ticks


def _detect_variable_symptoms(trace):
    out = []
    contact = _contact_ticks(trace)
    contact_set = set(contact)
    first, last = trace.frames[0], trace.frames[-1]
    for tgt in sorted(first.variables):
        for name in sorted(first.variables[tgt]):
            series = trace.var_series(tgt, name)
            label = "%s:%s" % (tgt, name)
            # StuckVariable: contact observed but the value never moved
            if len(contact) >= THRESHOLDS["stuck_min_contact_frames"]:
                if all(v == series[0] for v in series):
                    out.append(Symptom(
                        kind="StuckVariable", subject=label,
                        window=(first.tick, last.tick),
                        evidence={"contact_frames": len(contact), "delta": 0},
                        severity=0.6,
                    ))
            # JumpVariable: a large one-tick delta near a scripted event
            for i in range(1, len(series)):
                d = _num_delta(series[i - 1], series[i])
                if d is None or abs(d) < THRESHOLDS["jump_min_delta"]:
                    continue
                radius = THRESHOLDS["jump_event_radius"]
                nearby = sum(
                    len(f.events_this_tick)
                    for f in trace.frames
                    if abs(f.tick - trace.frames[i].tick) <= radius)
                if nearby >= 1:
                    out.append(Symptom(
                        kind="JumpVariable", subject=label,
                        window=(trace.frames[i - 1].tick, trace.frames[i].tick),
                        evidence={"delta": d, "events_nearby": nearby},
                        severity=min(1.0, abs(d) / 4.0),
                    ))
                    break
            # ContinuousAccrual: strictly monotone through a long contact run
            run_start = None
            run_len = 0
            best_run, best_start = 0, None
            for i in range(1, len(series)):
                tick = trace.frames[i].tick
                d = _num_delta(series[i - 1], series[i])
                moving = d is not None and d != 0 and tick in contact_set
                if moving:
                    if run_start is None:
                        run_start = trace.frames[i - 1].tick
                        run_len = 0
                    run_len += 1
                    if run_len > best_run:
                        best_run, best_start = run_len, run_start
                else:
                    run_start, run_len = None, 0
            if best_run >= THRESHOLDS["accrual_min_run"]:
                out.append(Symptom(
                    kind="ContinuousAccrual", subject=label,
                    window=(best_start, best_start + best_run),
                    evidence={"monotone_contact_ticks": best_run},
                    severity=min(1.0, best_run / 120.0),
                ))
    return out


def _num_delta(a, b):
    try:
        return float(b) - float(a)
    except (TypeError, ValueError):
        return None


def _detect_clone_explosion(trace):
    initial = len(trace.frames[0].sprites) or 1
    factor = THRESHOLDS["clone_growth_factor"]
    window = THRESHOLDS["clone_window"]
    cap_hit = any("clone cap" in msg for _t, msg in trace.warnings)
    for f in trace.frames:
        if f.tick > window and not cap_hit:
            break
        if len(f.sprites) > factor * initial or cap_hit:
            peak = max(len(g.sprites) for g in trace.frames)
            return [Symptom(
                kind="CloneExplosion", subject="*",
                window=(trace.frames[0].tick, f.tick),
                evidence={"initial": initial, "peak": peak, "cap_hit": cap_hit},
                severity=1.0 if cap_hit else min(1.0, peak / (factor * initial * 2)),
            )]
    return []


def _detect_offstage(trace):
    need = THRESHOLDS["offstage_min_run"]
    out = []
    for iid in _instance_ids(trace):
        run = 0
        best, best_end = 0, None
        started_pinned = None
        for f in trace.frames:
            s = f.sprite(iid)
            if s is None:
                continue
            pinned = abs(s.x) >= X_BOUND - 0.5 or abs(s.y) >= Y_BOUND - 0.5
            if started_pinned is None:
                started_pinned = pinned
            run = run + 1 if pinned else 0
            if run > best:
                best, best_end = run, f.tick
        if best >= need and not started_pinned:
            out.append(Symptom(
                kind="OffStageLoss", subject=iid,
                window=(best_end - best + 1, best_end),
                evidence={"pinned_ticks": best},
                severity=min(1.0, best / 90.0),
            ))
    return out


def _detect_never_visible(trace):
    if len(trace.frames) < THRESHOLDS["never_visible_min_frames"]:
        return []
    out = []
    for iid in _instance_ids(trace):
        snaps = [f.sprite(iid) for f in trace.frames]
        snaps = [s for s in snaps if s is not None]
        if snaps and all(not s.visible for s in snaps):
            out.append(Symptom(
                kind="NeverVisible", subject=iid,
                window=(trace.frames[0].tick, trace.frames[-1].tick),
                evidence={"frames": len(snaps)},
                severity=0.3,
            ))
    return out


def _detect_instant_termination(trace):
    active_ticks = [f.tick for f in trace.frames if f.active_scripts > 0]
    if not active_ticks:
        return []
    first, last = active_ticks[0], active_ticks[-1]
    if last - first <= 2 and trace.frames[-1].tick >= last + 10:
        return [Symptom(
            kind="InstantTermination", subject="*",
            window=(first, last),
            evidence={"active_window": [first, last]},
            severity=0.4,
        )]
    return []


def _detect_no_motion(trace, project):
    motion_sprites = set()
    for target in project.targets:
        for block in target.blocks.values():
            if block.opcode.startswith("motion_"):
                motion_sprites.add(target.name)
                break
    out = []
    for iid in _instance_ids(trace):
        snaps = [(f.tick, f.sprite(iid)) for f in trace.frames]
        snaps = [(t, s) for t, s in snaps if s is not None]
        if not snaps or snaps[0][1].sprite not in motion_sprites:
            continue
        xs = {round(s.x, 6) for _t, s in snaps}
        ys = {round(s.y, 6) for _t, s in snaps}
        if len(xs) == 1 and len(ys) == 1:
            out.append(Symptom(
                kind="NoMotion", subject=iid,
                window=(trace.frames[0].tick, trace.frames[-1].tick),
                evidence={"frames": len(snaps)},
                severity=0.35,
            ))
    return out


# ---------------------------------------------------------------------------
# Keyframe selection
# ---------------------------------------------------------------------------

def keyframe_ticks(trace, budget):
    """Pick up to `budget` representative ticks: endpoints plus change peaks."""
    if budget < 2:
        raise ValueError("keyframe budget must be >= 2")
    if not trace.frames:
        return []
    ticks = [f.tick for f in trace.frames]
    chosen = {ticks[0], ticks[-1]}
    scores = []
    for i, f in enumerate(trace.frames):
        score = 0.0
        if i > 0:
            prev = trace.frames[i - 1]
            for s in f.sprites:
                p = prev.sprite(s.instance_id)
                if p is None:
                    score += 2.0          # spawned
                else:
                    if p.visible != s.visible:
                        score += 2.0
                    score += min(1.0, (abs(p.x - s.x) + abs(p.y - s.y)) / 100.0)
            for s in prev.sprites:
                if f.sprite(s.instance_id) is None:
                    score += 2.0          # despawned
            for tgt in f.variables:
                for name, value in f.variables[tgt].items():
                    d = _num_delta(prev.var(tgt, name), value)
                    if d:
                        score += min(2.0, abs(d))
        score += 1.5 * len(f.events_this_tick)
        scores.append((score, f.tick))
    ranked = sorted(scores, key=lambda p: (-p[0], p[1]))
    for score, tick in ranked:
        if len(chosen) >= budget:
            break
        if score > 0:
            chosen.add(tick)
    if len(chosen) < budget:
        # quiescent trace: fill with evenly spaced ticks
        span = max(1, len(ticks) - 1)
        want = budget - len(chosen)
        for k in range(1, want + 1):
            chosen.add(ticks[round(k * span / (want + 1))])
    return sorted(chosen)[:budget]
