"""The bug-pattern taxonomy and its detector routing table.

Seventeen recurring Scratch bug patterns, each routed to a static detector,
a dynamic trace symptom, or the LLM backend.  The routing table is a checked
artifact: tests fail if a row is unmapped or a route names something that
does not exist.
"""

ROWS = (
    "Missing clone operation",
    "Recursive cloning",
    "Missing termination condition",
    "Wrong parameter values",
    "Wrong logic inside condition",
    "Missing loop sensing",
    "Message never received",
    "Forever inside loop",
    "Custom block with termination",
    "Stuttering movement",
    "Wrong comparisons/thresholds",
    "Missing x interaction script",
    "Missing backdrop switch",
    "No working scripts",
    "Expression as touch/colour",
    "Custom block with forever",
    "Comparing literals",
)

# route: ("static", detector id) | ("dynamic", symptom kind) | ("llm", note)
ROUTES = {
    "Missing clone operation": ("dynamic", "NeverVisible"),
    "Recursive cloning": ("static", "RecursiveCloning"),
    "Missing termination condition": ("static", "MissingTermination"),
    "Wrong parameter values": ("static", "VariableWrittenNeverRead"),
    "Wrong logic inside condition": ("llm", "needs intent; no structural signature"),
    "Missing loop sensing": ("llm", "single-shot sensing is often deliberate"),
    "Message never received": ("static", "MessageNeverReceived"),
    "Forever inside loop": ("static", "ForeverInsideLoop"),
    "Custom block with termination": ("llm", "custom blocks execute as inert stubs"),
    "Stuttering movement": ("llm", "step-size judgment needs intent"),
    "Wrong comparisons/thresholds": ("llm", "threshold values need intent"),
    "Missing x interaction script": ("static", "MissingResetScript"),
    "Missing backdrop switch": ("llm", "backdrop flow needs intent"),
    "No working scripts": ("static", "NoWorkingScripts"),
    "Expression as touch/colour": ("llm", "colour-vs-sprite intent is not structural"),
    "Custom block with forever": ("static", "CustomBlockWithForever"),
    "Comparing literals": ("static", "ComparingLiterals"),
}

# Detectors whose findings sharpen a row beyond its primary route.
EXTRA_DETECTORS = {
    "GlobalBroadcastFanout": "Message never received",
    "ReadNeverWritten": "Wrong parameter values",
    "OrphanScripts": "No working scripts",
}


def row_for_detector(detector):
    for row, (kind, ident) in ROUTES.items():
        if kind == "static" and ident == detector:
            return row
    return EXTRA_DETECTORS.get(detector)


def audit(static_detectors, symptom_kinds):
    """Check the routing table; returns a list of problems (empty = sound)."""
    problems = []
    for row in ROWS:
        if row not in ROUTES:
            problems.append("row %r is unmapped" % row)
    for row in ROUTES:
        if row not in ROWS:
            problems.append("route for unknown row %r" % row)
        kind, ident = ROUTES[row]
        if kind == "static" and ident not in static_detectors:
            problems.append("row %r routes to missing detector %r" % (row, ident))
        if kind == "dynamic" and ident not in symptom_kinds:
            problems.append("row %r routes to missing symptom %r" % (row, ident))
        if kind not in ("static", "dynamic", "llm"):
            problems.append("row %r has unknown route kind %r" % (row, kind))
    for detector, row in EXTRA_DETECTORS.items():
        if row not in ROWS:
            problems.append("extra detector %r maps to unknown row %r" % (detector, row))
        if detector not in static_detectors:
            problems.append("extra detector %r is not implemented" % detector)
    return problems
