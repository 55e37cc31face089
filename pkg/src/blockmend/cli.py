"""Command-line interface.

    blockmend inspect  <sb3>                      parse summary + findings
    blockmend run      <sb3> --scenario <file>    trace (and keyframe images)
    blockmend diagnose <sb3> --scenario <file>    one bug + 2-3 fixes
    blockmend repair   <sb3> --fix A --scenario   bounded repair loop
    blockmend pipeline <sb3> --scenario <file>    the whole loop, interactive
    blockmend serve                               local HTTP API
    blockmend fixtures <dir>                      write the bundled suite

Exit codes: 0 pass, 1 fail-after-K, 2 usage, 3 input error, 4 backend
unavailable.
"""

import argparse
import json
import os
import sys

from . import __version__
from . import vm as vm_mod
from .backends import BackendConfig, make_diagnosis_backend, make_repair_backend
from .diagnose import BackendUnavailable, NoEvidence, RetryHistory, UserHint
from .lint import analyze
from .normalize import normalize
from .raster import keyframes, rasterize
from .sb3 import Sb3Error, load_project, serialize_sb3
from .scenario import ScenarioError, load_scenario
from .trace import detect_symptoms
from .verify import repair_loop, verify

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_BACKEND = 4


def _load_inputs(args, require_assertions=True):
    try:
        project = load_project(args.project)
    except (OSError, Sb3Error) as exc:
        print("error: cannot load %s: %s" % (args.project, exc), file=sys.stderr)
        raise SystemExit(EXIT_INPUT)
    scenario = None
    if getattr(args, "scenario", None):
        try:
            scenario = load_scenario(args.scenario, require_assertions=require_assertions)
        except (OSError, ValueError, ScenarioError) as exc:
            print("error: cannot load scenario %s: %s" % (args.scenario, exc),
                  file=sys.stderr)
            raise SystemExit(EXIT_INPUT)
    return project, scenario


def _backend_config(args):
    overrides = {}
    if getattr(args, "endpoint", None):
        overrides["endpoint"] = args.endpoint
    if getattr(args, "model", None):
        overrides["model"] = args.model
    if getattr(args, "config", None):
        overrides.update(_read_config_file(args.config).get("backend", {}))
    return BackendConfig.from_env(**overrides)


def _read_config_file(path):
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            try:
                import tomllib
            except ImportError:
                import tomli as tomllib
            return tomllib.load(fh)
        return json.load(fh)


def cmd_inspect(args):
    project, _ = _load_inputs(args, require_assertions=False)
    norm = normalize(project)
    print("targets: %d (stage + %d sprites)" % (len(project.targets),
                                                len(project.sprites)))
    for target in project.targets:
        hats = target.hat_blocks()
        print("  %-16s blocks=%-3d scripts=%d variables=%d"
              % (target.name, len(target.blocks), len(hats), len(target.variables)))
    if project.load_warnings:
        print("load warnings:")
        for w in project.load_warnings:
            print("  -", w)
    findings = analyze(norm)
    if args.json:
        print(json.dumps([f.to_dict() for f in findings], indent=2, sort_keys=True))
    elif findings:
        print("findings:")
        for f in findings:
            print("  %-26s %-10s %s" % (f.detector, f.sprite, f.explanation))
    else:
        print("findings: none")
    return EXIT_PASS


def cmd_run(args):
    project, scenario = _load_inputs(args, require_assertions=False)
    config = scenario.vm_config() if scenario else vm_mod.VmConfig()
    trace = vm_mod.run(project, scenario, config)
    print("frames: %d  warnings: %d" % (len(trace.frames), len(trace.warnings)))
    symptoms = detect_symptoms(trace, project)
    for s in symptoms:
        print("symptom:", s.describe())
    if args.trace:
        with open(args.trace, "wb") as fh:
            fh.write(trace.to_jsonl())
        print("trace written to", args.trace)
    if args.frames:
        os.makedirs(args.frames, exist_ok=True)
        for tick, image in keyframes(trace, project, args.budget):
            path = os.path.join(args.frames, "frame_%d.png" % tick)
            with open(path, "wb") as fh:
                fh.write(image.to_png())
        print("keyframes written to", args.frames)
    return EXIT_PASS


def cmd_diagnose(args):
    project, scenario = _load_inputs(args, require_assertions=False)
    norm = normalize(project)
    config = scenario.vm_config() if scenario else vm_mod.VmConfig()
    trace = vm_mod.run(norm.project, scenario, config)
    backend = make_diagnosis_backend(args.backend, _backend_config(args))
    hint = UserHint(text=args.hint) if args.hint else None
    try:
        diagnosis = backend.diagnose(norm, trace, history=RetryHistory(), hint=hint)
    except NoEvidence as exc:
        print("NoEvidence: %s" % exc)
        return EXIT_PASS
    except BackendUnavailable as exc:
        print("backend unavailable: %s" % exc, file=sys.stderr)
        return EXIT_BACKEND
    print(diagnosis.two_line())
    return EXIT_PASS


def _run_repair(norm, diagnosis, fix, scenario, args, history=None):
    backend = make_repair_backend(args.backend, _backend_config(args),
                                  diagnosis=diagnosis)
    repaired, history, pass_at = repair_loop(
        norm, diagnosis, fix, [scenario], backend, k=args.attempts, history=history)
    out_dir = getattr(args, "out", None) or "."
    os.makedirs(out_dir, exist_ok=True)
    for entry in history.entries:
        if entry.patch is not None:
            base = os.path.join(out_dir, "patch_%d" % entry.attempt_index)
            with open(base + ".txt", "w", encoding="utf-8") as fh:
                fh.write(entry.patch.provenance + "\n")
            with open(base + ".json", "w", encoding="utf-8") as fh:
                json.dump([vars_edit(e) for e in entry.patch.edits], fh,
                          indent=2, sort_keys=True, default=str)
    if repaired is not None and pass_at is not None:
        fixed_path = os.path.join(out_dir, "fixed_%d.sb3" % pass_at)
        with open(fixed_path, "wb") as fh:
            fh.write(serialize_sb3(repaired.project))
        print("pass@%d  repaired project: %s" % (pass_at, fixed_path))
        return EXIT_PASS
    print("fail after %d attempt(s)" % args.attempts)
    for entry in history.entries:
        if entry.failure_log and "error" in (entry.failure_log or {}):
            print("  attempt %d: %s" % (entry.attempt_index, entry.failure_log["error"]))
        elif entry.verdict is not None:
            print("  attempt %d: %s" % (entry.attempt_index, entry.verdict.status))
    return EXIT_FAIL


def vars_edit(edit):
    return {
        "kind": edit.kind,
        "sprite": edit.target_sprite,
        "anchor": edit.anchor if isinstance(edit.anchor, str) else (
            edit.anchor.describe() if edit.anchor is not None else None),
        "relation": edit.relation,
    }


def cmd_repair(args):
    project, scenario = _load_inputs(args)
    norm = normalize(project)
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    backend = make_diagnosis_backend(args.backend, _backend_config(args))
    try:
        diagnosis = backend.diagnose(norm, trace, history=RetryHistory(), hint=None)
    except NoEvidence as exc:
        print("NoEvidence: %s" % exc, file=sys.stderr)
        return EXIT_FAIL
    except BackendUnavailable as exc:
        print("backend unavailable: %s" % exc, file=sys.stderr)
        return EXIT_BACKEND
    fix = diagnosis.option(args.fix)
    if fix is None:
        print("diagnosis offered no option %s" % args.fix, file=sys.stderr)
        return EXIT_FAIL
    print(diagnosis.two_line())
    try:
        return _run_repair(norm, diagnosis, fix, scenario, args)
    except BackendUnavailable as exc:
        print("backend unavailable: %s" % exc, file=sys.stderr)
        return EXIT_BACKEND


def cmd_pipeline(args):
    project, scenario = _load_inputs(args)
    norm = normalize(project)
    trace = vm_mod.run(norm.project, scenario, scenario.vm_config())
    print("traced %d frames" % len(trace.frames))
    backend = make_diagnosis_backend(args.backend, _backend_config(args))
    history = RetryHistory()
    hint = None
    while True:
        try:
            diagnosis = backend.diagnose(norm, trace, history=history, hint=hint)
        except NoEvidence as exc:
            print("NoEvidence: %s" % exc)
            return EXIT_FAIL
        except BackendUnavailable as exc:
            print("backend unavailable: %s" % exc, file=sys.stderr)
            return EXIT_BACKEND
        print(diagnosis.two_line())
        if args.non_interactive:
            label = args.auto_fix
            break
        answer = input("Satisfied with this diagnosis? [y/n] ").strip().lower()
        if answer.startswith("y"):
            label = input("Select fix [%s]: " % "/".join(
                o.label for o in diagnosis.fix_options)).strip().upper() or "A"
            break
        hint_text = input("What looks wrong instead? (hint) ").strip()
        hint = UserHint(text=hint_text,
                        rejected_options=tuple(o.text for o in diagnosis.fix_options))
        history.record_rejection(diagnosis, hint)
    fix = diagnosis.option(label)
    if fix is None:
        print("no option labeled %r" % label, file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run_repair(norm, diagnosis, fix, scenario, args, history=history)
    except BackendUnavailable as exc:
        print("backend unavailable: %s" % exc, file=sys.stderr)
        return EXIT_BACKEND


def cmd_verify(args):
    project, scenario = _load_inputs(args)
    verdict = verify(project, [scenario])
    print(verdict.summary())
    return EXIT_PASS if verdict.passed else EXIT_FAIL


def cmd_serve(args):
    from .server import serve

    serve(host=args.host, port=args.port, workdir=args.workdir,
          backend=args.backend, backend_config=_backend_config(args))
    return EXIT_PASS


def cmd_fixtures(args):
    from .fixtures import write_all

    for path in write_all(args.dest):
        print(path)
    return EXIT_PASS


def _add_backend_flags(sub):
    sub.add_argument("--backend", choices=("oracle", "remote"), default="oracle")
    sub.add_argument("--endpoint", help="remote backend URL")
    sub.add_argument("--model", help="remote model id")
    sub.add_argument("--config", help="TOML/JSON config file")


def build_parser():
    parser = argparse.ArgumentParser(prog="blockmend",
                                     description="debug and repair block programs")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("inspect", help="parse summary plus static findings")
    p.add_argument("project")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_inspect)

    p = subs.add_parser("run", help="execute under a scenario and trace")
    p.add_argument("project")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", help="write trace JSONL here")
    p.add_argument("--frames", help="write keyframe PNGs to this directory")
    p.add_argument("--budget", type=int, default=6)
    p.set_defaults(fn=cmd_run)

    p = subs.add_parser("diagnose", help="print the two-line diagnosis")
    p.add_argument("project")
    p.add_argument("--scenario", required=True)
    p.add_argument("--hint")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_diagnose)

    p = subs.add_parser("repair", help="diagnose, then run the repair loop")
    p.add_argument("project")
    p.add_argument("--scenario", required=True)
    p.add_argument("--fix", required=True, choices=("A", "B", "C"))
    p.add_argument("-K", "--attempts", type=int, default=5)
    p.add_argument("--out", help="output directory for patches and fixed_<k>.sb3")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_repair)

    p = subs.add_parser("pipeline", help="full diagnose-select-repair-verify loop")
    p.add_argument("project")
    p.add_argument("--scenario", required=True)
    p.add_argument("--non-interactive", action="store_true")
    p.add_argument("--auto-fix", default="A", choices=("A", "B", "C"))
    p.add_argument("-K", "--attempts", type=int, default=5)
    p.add_argument("--out", help="output directory")
    p.add_argument("--workdir", help="persist session artifacts here")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_pipeline)

    p = subs.add_parser("verify", help="run scenario assertions against a project")
    p.add_argument("project")
    p.add_argument("--scenario", required=True)
    p.set_defaults(fn=cmd_verify)

    p = subs.add_parser("serve", help="start the local HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--workdir")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_serve)

    p = subs.add_parser("fixtures", help="write the bundled fixture suite")
    p.add_argument("dest")
    p.set_defaults(fn=cmd_fixtures)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
