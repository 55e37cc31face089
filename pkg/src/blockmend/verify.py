"""Run repaired projects under scenarios and judge the outcome.

verify() executes every scenario (race-flagged ones under both scheduler
orders), evaluates each assertion against the trace, and produces a Verdict
whose log names every failed assertion with its measured value and a
counterexample tick.  repair_loop() is the bounded retry protocol: propose a
patch, apply, verify, and feed the failure log into the next attempt.
"""

from dataclasses import dataclass, field

from . import vm as vm_mod
from .edits import EditError, apply_patch
from .trace import detect_symptoms


@dataclass
class AssertionResult:
    assertion: object
    ok: bool
    measured: object
    counterexample_tick: int | None = None
    scheduler_order: str = "declaration"

    def to_dict(self):
        return {
            "assertion": self.assertion.describe(),
            "ok": self.ok,
            "measured": self.measured,
            "counterexample_tick": self.counterexample_tick,
            "scheduler_order": self.scheduler_order,
        }


@dataclass
class Verdict:
    status: str                      # "Pass" | "Fail"
    failed_assertions: list = field(default_factory=list)
    log: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "Pass"

    def summary(self):
        if self.passed:
            return "Pass"
        lines = ["Fail (%d assertion(s))" % len(self.failed_assertions)]
        for r in self.failed_assertions:
            lines.append("  %s -> measured %r (tick %s, %s order)"
                         % (r.assertion.describe(), r.measured,
                            r.counterexample_tick, r.scheduler_order))
        return "\n".join(lines)


def _numeric(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def _values_equal(a, b):
    na, nb = _numeric(a), _numeric(b)
    if na is not None and nb is not None:
        return abs(na - nb) < 1e-9
    return str(a) == str(b)


def _find_sprite(frame, subject):
    snap = frame.sprite(subject)
    if snap is not None:
        return snap
    for s in frame.sprites:
        if s.sprite == subject:
            return s
    return None


def evaluate_assertion(assertion, trace, symptoms, order):
    kind = assertion.kind
    if kind in ("VarEquals", "VarChangedBy", "VarUnchanged", "EventuallyVarEquals"):
        loc = trace.lookup_var(assertion.subject)
        if loc is None:
            return AssertionResult(assertion, False, "variable not found",
                                   trace.frames[0].tick if trace.frames else None, order)
        tgt, name = loc
        if kind == "VarEquals":
            f = trace.frame_at(assertion.at_tick)
            value = f.var(tgt, name)
            ok = _values_equal(value, assertion.expected)
            return AssertionResult(assertion, ok, value, None if ok else f.tick, order)
        a, b = assertion.window
        fa, fb = trace.frame_at(a), trace.frame_at(b)
        if kind == "VarChangedBy":
            va, vb = _numeric(fa.var(tgt, name)), _numeric(fb.var(tgt, name))
            delta = None if va is None or vb is None else vb - va
            ok = delta is not None and _values_equal(delta, assertion.expected)
            return AssertionResult(assertion, ok, delta, None if ok else fb.tick, order)
        window_frames = [f for f in trace.frames if a <= f.tick <= b] or [fa]
        if kind == "VarUnchanged":
            base = window_frames[0].var(tgt, name)
            for f in window_frames:
                if not _values_equal(f.var(tgt, name), base):
                    return AssertionResult(assertion, False, f.var(tgt, name), f.tick, order)
            return AssertionResult(assertion, True, base, None, order)
        # EventuallyVarEquals
        for f in window_frames:
            if _values_equal(f.var(tgt, name), assertion.expected):
                return AssertionResult(assertion, True, f.var(tgt, name), None, order)
        return AssertionResult(assertion, False, window_frames[-1].var(tgt, name),
                               window_frames[-1].tick, order)

    if kind in ("VisibleAt", "NotVisibleAt", "PositionWithin"):
        f = trace.frame_at(assertion.at_tick)
        snap = _find_sprite(f, assertion.subject) if f else None
        if snap is None:
            return AssertionResult(assertion, False, "sprite not found",
                                   f.tick if f else None, order)
        if kind == "VisibleAt":
            return AssertionResult(assertion, snap.visible, snap.visible,
                                   None if snap.visible else f.tick, order)
        if kind == "NotVisibleAt":
            ok = not snap.visible
            return AssertionResult(assertion, ok, snap.visible, None if ok else f.tick, order)
        measured = {"x": snap.x, "y": snap.y}
        ok = True
        for axis in ("x", "y"):
            bounds = assertion.expected.get(axis)
            if bounds is not None:
                lo, hi = bounds
                if not (lo <= measured[axis] <= hi):
                    ok = False
        return AssertionResult(assertion, ok, measured, None if ok else f.tick, order)

    if kind in ("SymptomAbsent", "SymptomPresent"):
        wanted = assertion.subject
        matching = [s for s in symptoms if s.kind == wanted]
        if assertion.expected is not None:
            matching = [s for s in matching if s.subject == assertion.expected]
        found = [s.describe() for s in matching]
        if kind == "SymptomAbsent":
            ok = not matching
            tick = matching[0].window[0] if matching else None
            return AssertionResult(assertion, ok, found, tick, order)
        ok = bool(matching)
        return AssertionResult(assertion, ok, found,
                               None if ok else trace.frames[-1].tick, order)

    if kind == "CloneCountAtMost":
        limit = int(assertion.expected)
        window = assertion.window or (trace.frames[0].tick, trace.frames[-1].tick)
        worst, worst_tick = 0, None
        for f in trace.frames:
            if not (window[0] <= f.tick <= window[1]):
                continue
            n = sum(1 for s in f.sprites if s.sprite == assertion.subject)
            if n > worst:
                worst, worst_tick = n, f.tick
        ok = worst <= limit
        return AssertionResult(assertion, ok, worst, None if ok else worst_tick, order)

    return AssertionResult(assertion, False, "unknown assertion kind", None, order)


def verify(project, scenarios, config=None, required_absent_symptom=None):
    """Pass iff every assertion in every scenario holds (both orders when
    race-flagged).  `required_absent_symptom` adds the non-regression check
    that the diagnosed symptom kind is gone from the repaired trace."""
    if not scenarios:
        raise ValueError("verify needs at least one scenario")
    results = []
    runs = []
    for scenario in scenarios:
        scenario.require_assertions()
        orders = ("declaration", "reverse") if scenario.race_flagged else None
        base = config.to_dict() if config is not None else {}
        merged = dict(base)
        merged.update(scenario.config)
        if orders is None:
            orders = (merged.get("scheduler_order", "declaration"),)
        for order in orders:
            run_cfg = vm_mod.VmConfig.from_dict({**merged, "scheduler_order": order})
            trace = vm_mod.run(project, scenario, run_cfg)
            symptoms = detect_symptoms(trace, project)
            assertions = list(scenario.assertions)
            if required_absent_symptom:
                from .scenario import Assertion
                assertions.append(Assertion("SymptomAbsent", required_absent_symptom))
            for a in assertions:
                results.append(evaluate_assertion(a, trace, symptoms, order))
            runs.append({
                "scenario": scenario.name,
                "scheduler_order": order,
                "frames": len(trace.frames),
                "warnings": len(trace.warnings),
                "symptoms": [s.describe() for s in symptoms],
            })
    failed = [r for r in results if not r.ok]
    log = {
        "runs": runs,
        "assertions": [r.to_dict() for r in results],
        "failed": [r.to_dict() for r in failed],
    }
    return Verdict(status="Pass" if not failed else "Fail",
                   failed_assertions=failed, log=log)


# ---------------------------------------------------------------------------
# Bounded repair loop
# ---------------------------------------------------------------------------

def repair_loop(normalized, diagnosis, selected_fix, scenarios, repair_backend,
                k=5, config=None, history=None):
    """Up to `k` attempts of propose -> apply -> verify.

    Returns (final RepairedProject or None, history, pass_at or None).  Every
    attempt appends its (fix, patch, verdict/log) to the history; backend and
    apply errors are recorded and the loop moves on to the next attempt.
    """
    from .diagnose import DiagnoseError, RetryHistory
    from .repair import RepairError, RepairRequest

    if k < 1:
        raise ValueError("attempt budget must be >= 1")
    history = history if history is not None else RetryHistory()
    required_absent = None
    if diagnosis is not None and diagnosis.evidence:
        top = diagnosis.evidence[0]
        if getattr(top, "kind", None) in _SYMPTOM_KIND_SET:
            required_absent = top.kind

    failure_log = None
    last_repaired = None
    for attempt in range(1, k + 1):
        request = RepairRequest(
            fix=selected_fix,
            project=normalized,
            failure_log=failure_log,
            attempt_index=attempt,
        )
        try:
            patch = repair_backend.propose(request)
            repaired = apply_patch(normalized, patch, attempt=attempt)
        except (EditError, RepairError, DiagnoseError) as exc:
            history.record_attempt(attempt, selected_fix, None, None,
                                   failure_log={"error": str(exc)})
            failure_log = {"error": str(exc)}
            continue
        last_repaired = repaired
        verdict = verify(repaired.project, scenarios, config=config,
                         required_absent_symptom=required_absent)
        history.record_attempt(attempt, selected_fix, patch, verdict,
                               failure_log=None if verdict.passed else verdict.log)
        if verdict.passed:
            return repaired, history, attempt
        failure_log = verdict.log
    return last_repaired, history, None


from .trace import SYMPTOM_KINDS as _SYMPTOM_KINDS  # noqa: E402

_SYMPTOM_KIND_SET = frozenset(_SYMPTOM_KINDS)
