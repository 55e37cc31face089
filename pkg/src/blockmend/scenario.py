"""Scripted scenarios: input events plus behavioral assertions.

A scenario is the executable statement of what a project is supposed to do:
events drive the VM, assertions judge the resulting trace.  Race-flagged
scenarios are verified under both scheduler orders so order-dependent bugs
cannot pass by scheduling luck.
"""

from dataclasses import dataclass, field
import json

from .vm import VmConfig

EVENT_KINDS = ("flag", "key_down", "key_up", "click", "broadcast")

ASSERTION_KINDS = (
    "VarEquals",
    "VarChangedBy",
    "VarUnchanged",
    "VisibleAt",
    "NotVisibleAt",
    "PositionWithin",
    "SymptomAbsent",
    "SymptomPresent",
    "CloneCountAtMost",
    "EventuallyVarEquals",
)

_NEEDS_AT_TICK = {"VarEquals", "VisibleAt", "NotVisibleAt", "PositionWithin"}
_NEEDS_WINDOW = {"VarChangedBy", "VarUnchanged", "EventuallyVarEquals"}


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class Assertion:
    kind: str
    subject: str
    expected: object = None
    at_tick: int | None = None
    window: tuple | None = None

    def __post_init__(self):
        if self.kind not in ASSERTION_KINDS:
            raise ScenarioError("unknown assertion kind %r" % self.kind)
        if self.kind in _NEEDS_AT_TICK and self.at_tick is None:
            raise ScenarioError("%s needs at_tick" % self.kind)
        if self.kind in _NEEDS_WINDOW and self.window is None:
            raise ScenarioError("%s needs a window" % self.kind)
        if self.kind == "PositionWithin" and not isinstance(self.expected, dict):
            raise ScenarioError("PositionWithin expects {'x': [lo,hi], 'y': [lo,hi]}")

    def max_tick(self):
        ticks = [t for t in (self.at_tick,) if t is not None]
        if self.window:
            ticks.extend(self.window)
        return max(ticks) if ticks else 0

    def describe(self):
        where = ""
        if self.at_tick is not None:
            where = " @%d" % self.at_tick
        elif self.window:
            where = " @%d..%d" % tuple(self.window)
        return "%s(%s, %r)%s" % (self.kind, self.subject, self.expected, where)

    def to_dict(self):
        doc = {"kind": self.kind, "subject": self.subject}
        if self.expected is not None:
            doc["expected"] = self.expected
        if self.at_tick is not None:
            doc["at_tick"] = self.at_tick
        if self.window is not None:
            doc["window"] = list(self.window)
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(
            kind=doc["kind"],
            subject=doc["subject"],
            expected=doc.get("expected"),
            at_tick=doc.get("at_tick"),
            window=tuple(doc["window"]) if doc.get("window") else None,
        )


@dataclass
class Scenario:
    name: str
    events: list = field(default_factory=list)
    assertions: list = field(default_factory=list)
    race_flagged: bool = False
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for ev in self.events:
            if ev.get("kind") not in EVENT_KINDS:
                raise ScenarioError("unknown event kind %r" % ev.get("kind"))
        max_ticks = self.vm_config().max_ticks
        for a in self.assertions:
            if a.max_tick() > max_ticks:
                raise ScenarioError(
                    "assertion %s references tick beyond max_ticks=%d"
                    % (a.describe(), max_ticks))

    def vm_config(self, **overrides):
        merged = dict(self.config)
        merged.update(overrides)
        return VmConfig.from_dict(merged)

    def require_assertions(self):
        if not self.assertions:
            raise ScenarioError("scenario %r has no assertions" % self.name)
        return self

    def to_dict(self):
        return {
            "name": self.name,
            "events": self.events,
            "assertions": [a.to_dict() for a in self.assertions],
            "race_flagged": self.race_flagged,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            name=doc.get("name", "scenario"),
            events=list(doc.get("events", [])),
            assertions=[Assertion.from_dict(a) for a in doc.get("assertions", [])],
            race_flagged=bool(doc.get("race_flagged", False)),
            config=dict(doc.get("config", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def load_scenario(path, require_assertions=False):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    scenario = Scenario.from_dict(doc)
    if require_assertions:
        scenario.require_assertions()
    return scenario


def save_scenario(scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario.to_json())
