/**
 * Client-side session view. Rendered state is always derived from the last
 * status payload; the UI never speculates about transitions on its own.
 */
export function initialView() {
    return {
        sessionId: null,
        state: "None",
        frames: 0,
        keyframes: [],
        scrubTick: 0,
        status: null,
        lastError: null,
        busy: false,
    };
}
export function applyStatus(view, status) {
    return {
        ...view,
        sessionId: status.session_id,
        state: status.state,
        frames: status.frames,
        keyframes: status.keyframes ?? [],
        status,
        lastError: null,
    };
}
/** Which screen the current server state maps to. */
export function screenFor(view) {
    switch (view.state) {
        case "None":
        case "Loaded":
            return view.sessionId === null ? "upload" : "playback";
        case "Traced":
            return "playback";
        case "Diagnosed":
        case "AwaitingSelection":
            return "diagnosis";
        case "Repairing":
        case "Exhausted":
            return "repair";
        case "Verified":
            return "done";
        default:
            return "upload";
    }
}
/** First failed assertion that names a counterexample tick, if any. */
export function counterexampleTick(status) {
    if (!status)
        return null;
    for (const failed of status.failed_assertions ?? []) {
        if (failed.counterexample_tick !== null && failed.counterexample_tick !== undefined) {
            return failed.counterexample_tick;
        }
    }
    return null;
}
export function describeFailure(failed) {
    const where = failed.counterexample_tick === null ? "" : ` @tick ${failed.counterexample_tick}`;
    return `${failed.assertion} measured ${JSON.stringify(failed.measured)}${where}`;
}
/** Pull per-tick numeric series out of trace JSONL lines for the timeline. */
export function variableSeries(lines) {
    const series = new Map();
    lines.forEach((line, index) => {
        let frame;
        try {
            frame = JSON.parse(line);
        }
        catch {
            return;
        }
        for (const [target, vars] of Object.entries(frame.variables ?? {})) {
            for (const [name, value] of Object.entries(vars)) {
                const key = `${target}:${name}`;
                if (!series.has(key))
                    series.set(key, new Array(index).fill(null));
                const num = typeof value === "number" ? value : Number(value);
                series.get(key).push(Number.isFinite(num) ? num : null);
            }
        }
        for (const values of series.values()) {
            while (values.length < index + 1)
                values.push(null);
        }
    });
    return [...series.entries()].map(([name, values]) => ({ name, values }));
}
/** Clamp a scrub position into the trace's tick range. */
export function clampTick(view, tick) {
    if (view.frames <= 0)
        return 0;
    return Math.max(0, Math.min(view.frames - 1, Math.round(tick)));
}
