"""Runtime manager and trace-driven simulation of resource fluctuations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import groupby
from typing import Mapping, Optional, Sequence

from .errors import SchemaError, UnknownEngineError
from .problem import ContentionParams, runtime_stats
from .profiles import ProfileDB
from .rass import Design, DesignSet, SwitchingPolicy

EVENT_KINDS = ("engine_overload", "engine_recover", "memory_pressure", "memory_recover")
TIMELINE_COLUMNS = ("t_start", "t_end", "design", "avg_latency_ms", "latency_std_ms",
                    "accuracy", "memory_mb", "throughput")


@dataclass(frozen=True)
class EnvState:
    engine_flags: Mapping[str, bool]
    memory_flag: bool = False

    @classmethod
    def clear(cls, engines: Sequence[str]) -> "EnvState":
        return cls({e: False for e in engines}, False)


@dataclass(frozen=True)
class RuntimeEvent:
    t: float
    kind: str
    engine: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise SchemaError(f"unknown event kind {self.kind!r}")
        if self.kind.startswith("engine_") != (self.engine is not None):
            raise SchemaError(f"event {self.kind!r} at t={self.t}: engine must be given iff kind is engine_*")


def rm_step(state: EnvState, policy: SwitchingPolicy) -> str:
    """Design label for an environment state; independent of the active design."""
    idx, _ = policy.first_match(state.engine_flags, state.memory_flag)
    return policy.rules[idx].design


def classify_switch(src: Design, dst: Design) -> str:
    """CM (model change), CP (processor change), CB (both) or NONE."""
    if src.x == dst.x:
        return "NONE"
    models_differ = [c.model_id for c in src.x.configs] != [c.model_id for c in dst.x.configs]
    engines_differ = src.signature != dst.signature
    if models_differ and engines_differ:
        return "CB"
    if models_differ:
        return "CM"
    # same models: an engine move, or only the engine's options (threads, delegate) changed
    return "CP"


@dataclass(frozen=True)
class Observation:
    engine: str
    latency_ms: float
    memory_mb: float


def detect_flags(window: Sequence[Observation], profiled_avg_ms: Mapping[str, float],
                 engines: Sequence[str], memory_budget_mb: float,
                 latency_threshold: float = 1.5) -> EnvState:
    """Flag engines whose windowed mean latency exceeds threshold x profiled mean.

    Memory is flagged when the most recent observation exceeds the budget.
    """
    if not window:
        raise ValueError("observation window is empty")
    flags = {}
    for e in engines:
        lat = [o.latency_ms for o in window if o.engine == e]
        base = profiled_avg_ms.get(e)
        flags[e] = bool(lat and base and sum(lat) / len(lat) > latency_threshold * base)
    return EnvState(flags, window[-1].memory_mb > memory_budget_mb)


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    design: str
    metrics: dict = field(compare=True)


@dataclass(frozen=True)
class Timeline:
    segments: tuple
    switch_count: int
    switch_kinds: dict
    max_rule_evaluations: int

    @property
    def labels(self) -> list:
        return [s.design for s in self.segments]


def _segment_metrics(runtime: Sequence[dict], focus: int, degraded: bool, factor: float) -> dict:
    r = runtime[focus]
    scale = factor if degraded else 1.0
    avg = r["avg_latency_ms"] * scale
    return {
        "avg_latency_ms": avg,
        "latency_std_ms": r["latency_std_ms"] * scale,
        "accuracy": r["accuracy"],
        "memory_mb": sum(t["memory_mb"] for t in runtime),
        "throughput": r["batch"] * 1000.0 / avg,
    }


def simulate(trace: Sequence[RuntimeEvent], designs: DesignSet, policy: SwitchingPolicy,
             db: Optional[ProfileDB] = None, *, engines: Optional[Sequence[str]] = None,
             horizon: Optional[float] = None, degradation: float = 2.0,
             contention: Optional[ContentionParams] = None,
             focus_task: Optional[int] = None) -> Timeline:
    """Replay ``trace`` through the runtime manager.

    Events sharing a timestamp are applied together before the policy is
    consulted. Segment metrics come from ``db`` when given, otherwise from
    the runtime snapshot stored with each design. The latency of the
    reported task is multiplied by ``degradation`` while its engine is
    flagged; this never feeds back into rule matching.
    """
    if engines is None:
        if db is None:
            raise ValueError("need either a profile or the device engine set")
        engines = db.engine_set
    engines = tuple(engines)
    trace = list(trace)
    for prev, ev in zip(trace, trace[1:]):
        if ev.t < prev.t:
            raise ValueError("trace is not time-ordered")
    for ev in trace:
        if ev.t < 0:
            raise ValueError("events must have t >= 0")
        if ev.engine is not None and ev.engine not in engines:
            raise UnknownEngineError(f"event at t={ev.t} names unknown engine {ev.engine!r}")
    if horizon is None:
        horizon = (trace[-1].t if trace else 0.0) + 10.0
    if trace and trace[-1].t > horizon:
        raise ValueError("trace extends beyond the horizon")

    runtime = {}

    def runtime_of(d: Design):
        if d.x.key not in runtime:
            if db is not None:
                runtime[d.x.key] = runtime_stats(d.x, db, contention)
            else:
                runtime[d.x.key] = list(d.runtime)
        return runtime[d.x.key]

    if focus_task is None:
        rt0 = runtime_of(designs.ranked[0])
        focus_task = max(range(len(rt0)), key=lambda i: (rt0[i]["flops"], -i))

    flags = {e: False for e in engines}
    memory = False
    max_evals = 0

    def decide():
        nonlocal max_evals
        idx, evals = policy.first_match(flags, memory)
        max_evals = max(max_evals, evals)
        d = designs.by_label(policy.rules[idx].design)
        return d, flags[d.x.configs[focus_task].hw.engine]

    segments = []
    kinds = {"CM": 0, "CP": 0, "CB": 0}
    switches = 0
    groups = [(t, list(evs)) for t, evs in groupby(trace, key=lambda e: e.t)]
    if groups and groups[0][0] == 0:
        for ev in groups.pop(0)[1]:
            flags, memory = _apply(ev, flags, memory)
    current, degraded = decide()
    start = 0.0
    for t, evs in groups:
        for ev in evs:
            flags, memory = _apply(ev, flags, memory)
        nxt, nxt_degraded = decide()
        if nxt.label != current.label or nxt_degraded != degraded:
            segments.append(Segment(start, t, current.label,
                                    _segment_metrics(runtime_of(current), focus_task, degraded, degradation)))
            kind = classify_switch(current, nxt)
            if kind != "NONE":
                switches += 1
                kinds[kind] += 1
            current, degraded, start = nxt, nxt_degraded, t
    segments.append(Segment(start, horizon, current.label,
                            _segment_metrics(runtime_of(current), focus_task, degraded, degradation)))
    return Timeline(tuple(segments), switches, kinds, max_evals)


def _apply(ev: RuntimeEvent, flags: dict, memory: bool):
    flags = dict(flags)
    if ev.kind == "engine_overload":
        flags[ev.engine] = True
    elif ev.kind == "engine_recover":
        flags[ev.engine] = False
    elif ev.kind == "memory_pressure":
        memory = True
    else:
        memory = False
    return flags, memory


# --------------------------------------------------------------------------
# text formats
# --------------------------------------------------------------------------

def loads_trace(text: str) -> list:
    events = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            doc = json.loads(line)
            events.append(RuntimeEvent(float(doc["t"]), doc["kind"], doc.get("engine")))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"trace line {n}: {exc}") from exc
    return events


def dumps_trace(events: Sequence[RuntimeEvent]) -> str:
    out = []
    for ev in events:
        doc = {"t": ev.t, "kind": ev.kind}
        if ev.engine is not None:
            doc["engine"] = ev.engine
        out.append(json.dumps(doc, sort_keys=True))
    return "\n".join(out) + "\n"


def timeline_to_csv(timeline: Timeline) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMELINE_COLUMNS)
    for s in timeline.segments:
        m = s.metrics
        writer.writerow([
            f"{s.t_start:g}", f"{s.t_end:g}", s.design,
            f"{m['avg_latency_ms']:.4f}", f"{m['latency_std_ms']:.4f}", f"{m['accuracy']:.4f}",
            f"{m['memory_mb']:.4f}", f"{m['throughput']:.4f}",
        ])
    return buf.getvalue()
