"""Command-line front end.

Exit codes: 0 success, 1 usage or input problems, 2 infeasible SLOs,
3 validation findings.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .baselines import KINDS, ALIASES, TRANSFERRED, Baseline, compare, report_to_tsv
from .errors import InfeasibleError, SlodeployError
from .fixtures import PROFILES, SLO_DOCS, TRACES, data_dir
from .problem import ContentionParams, compile_problem, parse_slo_spec
from .profiles import SynthSpec, dumps_profiles, loads_profiles, synth_profiles, validate_profiles
from .rass import dumps_solution, loads_solution, solve_full
from .runtime import loads_trace, simulate, timeline_to_csv

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FINDINGS = 0, 1, 2, 3
FIXTURE_PREFIX = "fixture:"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)  # role -> {"path", "sha256"}
    overrides: dict = field(default_factory=dict)
    seed: Optional[int] = None
    outputs: dict = field(default_factory=dict)  # path -> sha256

    def to_json(self) -> str:
        doc = {
            "tool": "slodeploy",
            "version": __version__,
            "command": self.command,
            "inputs": self.inputs,
            "overrides": self.overrides,
            "seed": self.seed,
            "outputs": self.outputs,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _read_input(ref: str, kind: str, manifest: RunManifest, role: str) -> str:
    """Text of a file path, or of a bundled document given as ``fixture:<name>``."""
    if ref.startswith(FIXTURE_PREFIX):
        name = ref[len(FIXTURE_PREFIX):]
        known = {"profiles": PROFILES, "slo": SLO_DOCS, "trace": TRACES}[kind]
        if name not in known:
            raise _UsageError(f"unknown {kind} fixture {name!r}; known: {', '.join(sorted(known))}")
        suffix = {"profiles": ".json", "slo": "-slo.json", "trace": "-trace.jsonl"}[kind]
        text = (data_dir() / f"{name}{suffix}").read_text(encoding="utf-8")
    else:
        try:
            text = Path(ref).read_text(encoding="utf-8")
        except OSError as exc:
            raise _UsageError(f"cannot read {role} {ref!r}: {exc.strerror or exc}") from exc
    manifest.inputs[role] = {"path": ref, "sha256": _sha256(text)}
    return text


def _write_output(path: str, text: str, manifest: RunManifest) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
        manifest.outputs[path] = _sha256(text)
        Path(path + ".manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot write {path!r}: {exc.strerror or exc}") from exc


def _contention(args, manifest: RunManifest) -> ContentionParams:
    manifest.overrides["alpha"] = args.alpha
    manifest.overrides["contention"] = not args.no_contention
    return ContentionParams(args.alpha, not args.no_contention)


def _tasks(args, manifest: RunManifest):
    if args.tasks:
        manifest.overrides["tasks"] = list(args.tasks)
    return args.tasks or None


def _problem(args, manifest: RunManifest):
    db = loads_profiles(_read_input(args.profiles, "profiles", manifest, "profiles"))
    slo = parse_slo_spec(_read_input(args.slo, "slo", manifest, "slo"))
    return compile_problem(db, slo, _contention(args, manifest), _tasks(args, manifest))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_solve(args) -> int:
    manifest = RunManifest("solve")
    problem = _problem(args, manifest)
    try:
        sol = solve_full(problem)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.rejections:
            for label, n in sorted(exc.rejections.items()):
                print(f"  {label}: rejects {n} of {len(problem.space)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_output(args.out, dumps_solution(sol.designs, sol.policy, problem), manifest)
    distinct = len(sol.designs.distinct())
    print(f"{len(sol.feasible)}/{len(problem.space)} feasible; T={sol.designs.T}; "
          f"{distinct} distinct designs; {len(sol.policy.rules)} rules -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    manifest = RunManifest("simulate")
    doc = loads_solution(_read_input(args.designs, "designs", manifest, "designs"))
    trace = loads_trace(_read_input(args.trace, "trace", manifest, "trace"))
    db = None
    if args.profiles:
        db = loads_profiles(_read_input(args.profiles, "profiles", manifest, "profiles"))
        if db.device_name != doc.device:
            raise _UsageError(f"designs are for {doc.device!r} but the profile is for {db.device_name!r}")
    manifest.overrides.update(degradation=args.degradation, horizon=args.horizon, focus_task=args.focus_task)
    timeline = simulate(trace, doc.designs, doc.policy, db, engines=doc.engines, horizon=args.horizon,
                        degradation=args.degradation, contention=_contention(args, manifest),
                        focus_task=args.focus_task)
    _write_output(args.out, timeline_to_csv(timeline), manifest)
    kinds = ", ".join(f"{k}={v}" for k, v in timeline.switch_kinds.items())
    print(f"{' -> '.join(timeline.labels)}; {timeline.switch_count} switches ({kinds}); "
          f"at most {timeline.max_rule_evaluations} rule evaluations per step")
    return EXIT_OK


def cmd_compare(args) -> int:
    manifest = RunManifest("compare")
    names = [n.strip() for n in args.baselines.split(",") if n.strip()]
    unknown = [n for n in names if ALIASES.get(n, n) not in KINDS]
    if unknown or not names:
        raise _UsageError(f"unknown baseline(s) {', '.join(unknown) or '(none)'}; known: {', '.join(KINDS)}")
    problem = _problem(args, manifest)
    baselines = []
    for n in names:
        if ALIASES.get(n, n) == TRANSFERRED:
            if not args.source:
                raise _UsageError("the transferred baseline needs at least one --source profile")
            for i, src in enumerate(args.source):
                db = loads_profiles(_read_input(src, "profiles", manifest, f"source[{i}]"))
                baselines.append(Baseline(TRANSFERRED, db))
        else:
            baselines.append(Baseline(n))
    manifest.overrides["baselines"] = names
    manifest.overrides["per_state"] = args.per_state
    try:
        sol = solve_full(problem)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    report = compare(sol, baselines, per_state=args.per_state)
    _write_output(args.out, report_to_tsv(report), manifest)
    ok = len(report.feasible())
    print(f"{len(report.rows)} rows ({ok} feasible) -> {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = RunManifest("validate")
    db = loads_profiles(_read_input(args.profiles, "profiles", manifest, "profiles"))
    report = validate_profiles(db, cv_threshold=args.cv_threshold)
    print(report.to_text())
    return EXIT_OK if report.clean else EXIT_FINDINGS


def cmd_synth(args) -> int:
    manifest = RunManifest("synth", seed=args.seed)
    spec = SynthSpec(n_models=args.models, engines=tuple(args.engines), n_tasks=args.tasks_count,
                     n_samples=args.samples, joint=args.joint)
    manifest.overrides.update(models=args.models, engines=list(args.engines), tasks=args.tasks_count,
                              samples=args.samples, joint=args.joint)
    try:
        db = synth_profiles(args.seed, spec)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    _write_output(args.out, dumps_profiles(db), manifest)
    print(f"{len(db.models)} models, {len(db.single_records)} records -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_contention(p):
    p.add_argument("--alpha", type=float, default=1.0, help="contention slowdown per co-located task")
    p.add_argument("--no-contention", action="store_true",
                   help="fail instead of estimating latency for tasks sharing an engine")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slodeploy", description="Select SLO-compliant multi-DNN deployments and replay runtime switching.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    fixture_help = f"path, or {FIXTURE_PREFIX}<name> for a bundled document"

    p = sub.add_parser("solve", help="solve an SLO problem once and emit designs plus switching policy")
    p.add_argument("--profiles", required=True, help=fixture_help)
    p.add_argument("--slo", required=True, help=fixture_help)
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", nargs="+", help="task ids, overriding the SLO document")
    _add_contention(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="replay a resource trace through the runtime manager")
    p.add_argument("--designs", required=True, help="document written by 'solve'")
    p.add_argument("--trace", required=True, help=fixture_help)
    p.add_argument("--out", required=True)
    p.add_argument("--profiles", help="profile to draw segment metrics from (default: design snapshots)")
    p.add_argument("--degradation", type=float, default=2.0, help="latency factor on overloaded engines")
    p.add_argument("--horizon", type=float, help="end of the simulated run (default: last event + 10)")
    p.add_argument("--focus-task", type=int, help="task whose metrics are reported (default: heaviest)")
    _add_contention(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="score baselines against the solver's designs")
    p.add_argument("--profiles", required=True, help=fixture_help)
    p.add_argument("--slo", required=True, help=fixture_help)
    p.add_argument("--baselines", required=True, help=f"comma-separated: {', '.join(KINDS)}")
    p.add_argument("--source", action="append", help="source device profile for 'transferred' (repeatable)")
    p.add_argument("--per-state", action="store_true", help="add one row per engine mapping")
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", nargs="+")
    _add_contention(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="report coverage gaps and noisy latency measurements")
    p.add_argument("--profiles", required=True, help=fixture_help)
    p.add_argument("--cv-threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="write a synthetic, fully covered profile")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models", type=int, default=3, help="models per task")
    p.add_argument("--engines", nargs="+", default=["CPU", "GPU"])
    p.add_argument("--tasks-count", type=int, default=1)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--joint", action="store_true", help="also emit joint multi-task measurements")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SlodeployError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
