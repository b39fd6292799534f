"""SLO specifications compiled into a device-specific multi-objective problem."""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptySpaceError,
    EnergyUnavailable,
    InfeasibleError,
    MissingDataError,
    ParseError,
    SemanticError,
)
from .profiles import HardwareConfig, ProfileDB

METRICS = ("S", "W", "A", "L", "TP", "E", "MF", "NTT", "STP", "F")
MULTI_ONLY = {"NTT", "STP", "F"}
# metrics whose "all tasks" aggregate is a plain sum
ADDITIVE = {"S", "W", "MF", "E"}
HIGHER_IS_BETTER = {"A", "TP", "STP", "F"}
ALL = "all"

_PCT = re.compile(r"^p(\d+)$")


def natural_direction(metric: str) -> str:
    return "max" if metric in HIGHER_IS_BETTER else "min"


def _flip(direction: str) -> str:
    return "min" if direction == "max" else "max"


@dataclass(frozen=True)
class MetricId:
    metric: str
    statistic: str = "value"
    task_index: object = None  # None, an int, or ALL

    @property
    def label(self) -> str:
        stat = "" if self.statistic == "value" else f"{self.statistic} "
        if self.task_index is None:
            task = ""
        elif self.task_index == ALL:
            task = "[all]"
        else:
            task = f"[{self.task_index}]"
        return f"{stat}{self.metric}{task}"

    def __str__(self):
        return self.label


def _default_statistic(metric: str) -> str:
    return "avg" if metric in ("L", "E", "TP") else "value"


def check_metric(mid: MetricId, n_tasks: int) -> MetricId:
    """Validate ``mid`` against an ``n_tasks``-task application and fill defaults.

    Raises SemanticError for combinations that have no meaning.
    """
    metric, stat, task = mid.metric, mid.statistic, mid.task_index
    if metric not in METRICS:
        raise SemanticError(f"unknown metric {metric!r}")
    if metric in MULTI_ONLY and n_tasks < 2:
        raise SemanticError(f"{metric} is only defined for multi-DNN applications (M >= 2)")
    if stat is None:
        stat = _default_statistic(metric)
        if metric == "NTT" and task not in (None, ALL):
            stat = "value"
    if stat == "mean":
        stat = "avg"
    m = _PCT.match(stat)
    if m:
        n = int(m.group(1))
        if not 1 <= n <= 99:
            raise SemanticError(f"percentile {stat!r} outside p1..p99 (use 'max' for p100)")
    elif stat not in ("value", "min", "max", "avg", "std"):
        raise SemanticError(f"unknown statistic {stat!r}")

    if task not in (None, ALL):
        if not isinstance(task, int) or isinstance(task, bool) or not 0 <= task < n_tasks:
            raise SemanticError(f"task index {task!r} out of range for {n_tasks} task(s)")

    if metric in ("S", "W", "A", "MF"):
        if stat not in ("value",):
            raise SemanticError(f"{metric} is a static scalar; statistic {stat!r} not allowed")
    elif metric == "TP":
        if stat not in ("value", "avg"):
            raise SemanticError("TP is computed from average latency; only 'avg' is allowed")
        stat = "avg"
    elif metric in ("STP", "F"):
        if task is not None:
            raise SemanticError(f"{metric} is a system-wide metric and takes no task")
        if stat != "value":
            raise SemanticError(f"{metric} takes no statistic")
    elif metric == "NTT":
        if task in (None, ALL):
            task = ALL
            if stat == "value":
                stat = "avg"
            if stat not in ("avg", "max"):
                raise SemanticError("NTT over all tasks supports 'avg' or 'max'")
        elif stat != "value":
            raise SemanticError("per-task NTT takes no statistic")

    if task == ALL and metric not in ADDITIVE | {"NTT"}:
        raise SemanticError(f"{metric} cannot be aggregated over all tasks")
    if n_tasks == 1 and metric not in MULTI_ONLY and task in (None, ALL):
        task = 0
    return MetricId(metric, stat, task)


@dataclass(frozen=True)
class Objective:
    metric: MetricId
    direction: str
    weight: float = 1.0


@dataclass(frozen=True)
class Constraint:
    """``h(x) <= bound`` (sense "<=") or ``h(x) >= bound`` (sense ">=").

    ``g`` always returns the normalised ``<= 0`` form.
    """

    metric: MetricId
    bound: float
    sense: str = "<="

    def g(self, value: float) -> float:
        return value - self.bound if self.sense == "<=" else self.bound - value

    @property
    def label(self) -> str:
        return f"{self.metric.label} {self.sense} {self.bound:g}"


@dataclass(frozen=True)
class SLOSpec:
    objectives: tuple
    constraints: tuple = ()
    tasks: tuple = ()


@dataclass(frozen=True)
class ContentionParams:
    """Fallback slowdown model for tasks sharing an engine without a joint measurement."""

    alpha: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("contention alpha must be >= 0")


# --------------------------------------------------------------------------
# SLO documents
# --------------------------------------------------------------------------

def _task_ref(raw, tasks: Sequence[str], where: str):
    if raw is None:
        return None
    if isinstance(raw, str):
        if raw.lower() == ALL:
            return ALL
        if raw in tasks:
            return list(tasks).index(raw)
        raise SemanticError(f"{where}: unknown task {raw!r}")
    if isinstance(raw, int) and not isinstance(raw, bool):
        return raw
    raise ParseError(f"{where}: task must be an index, a task id or 'all'")


def _metric_from(entry, tasks, n_tasks, where) -> MetricId:
    if not isinstance(entry, Mapping) or "metric" not in entry:
        raise ParseError(f"{where}: expected an object with a 'metric' field")
    stat = entry.get("statistic")
    mid = MetricId(str(entry["metric"]), None if stat is None else str(stat).lower(),
                   _task_ref(entry.get("task"), tasks, where))
    return check_metric(mid, n_tasks)


def parse_slo_spec(text, n_tasks: Optional[int] = None) -> SLOSpec:
    """Parse an SLO document (JSON text or an already-decoded mapping).

    Broad SLOs (``objectives``) become objectives, narrow SLOs
    (``constraints``) become ``<=``-normalised constraints. A document
    with constraints only gets each distinct inner metric promoted to an
    objective in its natural direction.
    """
    if isinstance(text, Mapping):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ParseError(f"malformed SLO document: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError("SLO document must be an object")

    tasks = tuple(str(t) for t in doc.get("tasks", []) or [])
    if n_tasks is None:
        n_tasks = len(tasks) or 1
    elif tasks and len(tasks) != n_tasks:
        raise SemanticError(f"SLO names {len(tasks)} tasks but {n_tasks} were expected")

    raw_obj = doc.get("objectives", []) or []
    raw_con = doc.get("constraints", []) or []
    if not isinstance(raw_obj, list) or not isinstance(raw_con, list):
        raise ParseError("'objectives' and 'constraints' must be lists")

    objectives = []
    for i, entry in enumerate(raw_obj):
        where = f"objectives[{i}]"
        mid = _metric_from(entry, tasks, n_tasks, where)
        direction = entry.get("direction") or natural_direction(mid.metric)
        if direction not in ("min", "max"):
            raise ParseError(f"{where}: direction must be 'min' or 'max'")
        weight = float(entry.get("weight", 1.0))
        if not (weight > 0 and math.isfinite(weight)):
            raise SemanticError(f"{where}: weight must be a positive number")
        objectives.append(Objective(mid, direction, weight))

    constraints = []
    for i, entry in enumerate(raw_con):
        where = f"constraints[{i}]"
        mid = _metric_from(entry, tasks, n_tasks, where)
        if "bound" not in entry:
            raise ParseError(f"{where}: missing 'bound'")
        try:
            bound = float(entry["bound"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: bound must be a number") from exc
        sense = entry.get("sense", "<=")
        if sense not in ("<=", ">="):
            raise ParseError(f"{where}: sense must be '<=' or '>='")
        constraints.append(Constraint(mid, bound, sense))

    if not objectives:
        if not constraints:
            raise SemanticError("SLO declares neither objectives nor constraints")
        seen = []
        for c in constraints:
            if c.metric not in seen:
                seen.append(c.metric)
        objectives = [Objective(m, natural_direction(m.metric), 1.0) for m in seen]

    return SLOSpec(tuple(objectives), tuple(constraints), tasks)


def slo_to_dict(slo: SLOSpec) -> dict:
    def mdoc(m: MetricId):
        return {"metric": m.metric, "statistic": m.statistic, "task": m.task_index}

    return {
        "tasks": list(slo.tasks),
        "objectives": [dict(mdoc(o.metric), direction=o.direction, weight=o.weight) for o in slo.objectives],
        "constraints": [dict(mdoc(c.metric), bound=c.bound, sense=c.sense) for c in slo.constraints],
    }


# --------------------------------------------------------------------------
# decision space
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExecutionConfig:
    model_id: str
    hw: HardwareConfig

    @property
    def key(self) -> tuple:
        return (self.model_id, self.hw.key)

    @property
    def label(self) -> str:
        return f"<{self.model_id}, {self.hw.label}>"


@dataclass(frozen=True)
class DecisionVariable:
    configs: tuple

    @property
    def key(self) -> tuple:
        return tuple(c.key for c in self.configs)

    @property
    def signature(self) -> tuple:
        return tuple(c.hw.engine for c in self.configs)

    @property
    def label(self) -> str:
        return " + ".join(c.label for c in self.configs)

    def __len__(self):
        return len(self.configs)


@dataclass(frozen=True)
class DecisionSpace:
    tasks: tuple
    per_task: tuple  # one sorted tuple of ExecutionConfig per task
    variables: tuple

    def __len__(self):
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)


def task_configs(db: ProfileDB, task: str) -> list:
    out = [
        ExecutionConfig(r.model_id, r.hw)
        for r in db.single_records
        if db.model(r.model_id).task_id == task
    ]
    return sorted(out, key=lambda c: c.key)


def build_decision_space(db: ProfileDB, tasks: Sequence[str]) -> DecisionSpace:
    """All single-DNN configs of one task, or the Cartesian product over M tasks."""
    if not tasks:
        raise EmptySpaceError("no tasks given")
    per_task = []
    for t in tasks:
        configs = task_configs(db, t)
        if not configs:
            raise EmptySpaceError(f"task {t!r} has no measured execution configurations")
        per_task.append(tuple(configs))
    variables = tuple(DecisionVariable(tuple(combo)) for combo in itertools.product(*per_task))
    return DecisionSpace(tuple(tasks), tuple(per_task), variables)


# --------------------------------------------------------------------------
# compiled problem
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ObjectiveColumn:
    metric: MetricId
    direction: str
    weight: float

    @property
    def label(self) -> str:
        return f"{self.direction} {self.metric.label}"


@dataclass(frozen=True)
class MOOProblem:
    space: DecisionSpace
    slo: SLOSpec
    profile: ProfileDB
    contention: ContentionParams = field(default_factory=ContentionParams)
    columns: tuple = ()
    constraints: tuple = ()

    @property
    def tasks(self) -> tuple:
        return self.space.tasks

    @property
    def n_tasks(self) -> int:
        return len(self.space.tasks)

    @cached_property
    def _stats_cache(self) -> dict:
        return {}

    def stats(self, config: ExecutionConfig) -> "_ConfigStats":
        s = self._stats_cache.get(config)
        if s is None:
            s = _ConfigStats(self.profile, config)
            self._stats_cache[config] = s
        return s

    def view(self, x: DecisionVariable) -> "_VariableView":
        return _VariableView(x, self.profile, self.contention, self.stats)


def expand_metric(mid: MetricId, n_tasks: int) -> list:
    """Per-task metrics named without a task become one metric per task."""
    if n_tasks >= 2 and mid.task_index is None and mid.metric not in MULTI_ONLY:
        return [MetricId(mid.metric, mid.statistic, i) for i in range(n_tasks)]
    return [mid]


def _task_accuracy_direction(db: ProfileDB, task: str) -> str:
    dirs = {m.accuracy_direction for m in db.models if m.task_id == task}
    if len(dirs) > 1:
        raise SemanticError(f"task {task!r} mixes accuracy directions")
    return dirs.pop() if dirs else "max"


def compile_problem(db: ProfileDB, slo: SLOSpec,
                    contention: Optional[ContentionParams] = None,
                    tasks: Optional[Sequence[str]] = None) -> MOOProblem:
    """Bind an SLO spec to a profile: decision space, objective columns, constraints."""
    tasks = tuple(tasks or slo.tasks)
    if not tasks:
        known = db.tasks()
        if len(known) != 1:
            raise SemanticError(f"SLO does not name its tasks and the profile has {len(known)}")
        tasks = tuple(known)
    n = len(tasks)
    space = build_decision_space(db, tasks)

    columns = []
    for obj in slo.objectives:
        base = check_metric(obj.metric, n)
        for mid in expand_metric(base, n):
            direction = obj.direction
            if mid.metric == "A":
                task_dir = _task_accuracy_direction(db, tasks[mid.task_index])
                direction = task_dir if obj.direction == "max" else _flip(task_dir)
            col = ObjectiveColumn(mid, direction, obj.weight)
            if col not in columns:
                columns.append(col)
    constraints = []
    for con in slo.constraints:
        for mid in expand_metric(check_metric(con.metric, n), n):
            constraints.append(Constraint(mid, con.bound, con.sense))

    if any(c.metric.metric == "E" for c in columns) or any(c.metric.metric == "E" for c in constraints):
        ids = {cfg.model_id for per in space.per_task for cfg in per}
        if not db.has_energy(ids):
            raise EnergyUnavailable("energy is referenced but the profile lacks energy measurements")

    return MOOProblem(space, SLOSpec(slo.objectives, slo.constraints, tasks), db,
                      contention or ContentionParams(), tuple(columns), tuple(constraints))


# --------------------------------------------------------------------------
# metric evaluation
# --------------------------------------------------------------------------

def sample_statistic(samples, statistic: str) -> float:
    """min/max/avg/std (population)/nearest-rank percentile of a sample list."""
    arr = np.asarray(samples, dtype=float)
    if statistic in ("avg", "value"):
        return float(arr.mean())
    if statistic == "min":
        return float(arr.min())
    if statistic == "max":
        return float(arr.max())
    if statistic == "std":
        return float(arr.std())
    m = _PCT.match(statistic)
    if m:
        n = int(m.group(1))
        if not 1 <= n <= 99:
            raise SemanticError(f"percentile {statistic!r} outside p1..p99")
        ordered = np.sort(arr)
        rank = math.ceil(n / 100 * len(ordered))
        return float(ordered[max(rank, 1) - 1])
    raise SemanticError(f"unknown statistic {statistic!r}")


class _ConfigStats:
    """Per-configuration profile values with memoised latency statistics."""

    __slots__ = ("model", "record", "_lat")

    def __init__(self, db: ProfileDB, config: ExecutionConfig):
        self.model = db.model(config.model_id)
        self.record = db.record(config.model_id, config.hw)
        self._lat = {}

    def latency(self, statistic: str) -> float:
        v = self._lat.get(statistic)
        if v is None:
            v = self._lat[statistic] = sample_statistic(self.record.latency_samples, statistic)
        return v


class _VariableView:
    """Everything needed to evaluate metrics for one decision variable."""

    def __init__(self, x: DecisionVariable, profile: ProfileDB, contention: ContentionParams,
                 stats=None):
        self.x = x
        if stats is None:
            self.stats = [_ConfigStats(profile, c) for c in x.configs]
        else:
            self.stats = [stats(c) for c in x.configs]
        self.joint = None
        self.factors = [1.0] * len(x.configs)
        if len(x.configs) >= 2:
            self.joint = profile.joint_samples([(c.model_id, c.hw) for c in x.configs])
            if self.joint is None:
                engines = x.signature
                shared = [engines.count(e) for e in engines]
                if not contention.enabled and any(k > 1 for k in shared):
                    raise MissingDataError(
                        f"no joint measurement for {x.label} and the contention model is disabled")
                self.factors = [1.0 + contention.alpha * (k - 1) for k in shared]

    def latency(self, i: int, statistic: str) -> float:
        """Latency statistic of task ``i`` in the mode the variable actually runs in."""
        if self.joint is not None:
            return sample_statistic(self.joint[i], statistic)
        return self.factors[i] * self.stats[i].latency(statistic)

    def single_latency(self, i: int) -> float:
        return self.stats[i].latency("avg")

    def ntt(self, i: int) -> float:
        if self.joint is None:
            # the modelled slowdown is exactly the factor; dividing would add rounding noise
            return self.factors[i]
        return self.latency(i, "avg") / self.single_latency(i)

    def value(self, mid: MetricId) -> float:
        metric, stat, task = mid.metric, mid.statistic, mid.task_index
        idx = range(len(self.stats)) if task == ALL else [0 if task is None else task]

        if metric == "S":
            return sum(self.stats[i].model.size_mb for i in idx)
        if metric == "W":
            return sum(self.stats[i].model.flops for i in idx)
        if metric == "MF":
            return sum(self.stats[i].record.memory_mb for i in idx)
        if metric == "A":
            return self.stats[idx[0]].model.accuracy
        if metric == "E":
            total = 0.0
            for i in idx:
                e = self.stats[i].record.energy_j
                if e is None:
                    raise EnergyUnavailable(f"no energy measurement for {self.x.configs[i].label}")
                total += 0.0 if stat == "std" else e
            return total
        if metric == "L":
            return self.latency(idx[0], stat)
        if metric == "TP":
            i = idx[0]
            return self.stats[i].record.batch * 1000.0 / self.latency(i, "avg")
        if metric == "NTT":
            if task == ALL:
                vals = [self.ntt(i) for i in idx]
                return max(vals) if stat == "max" else sum(vals) / len(vals)
            return self.ntt(idx[0])
        if metric == "STP":
            return sum(1.0 / self.ntt(i) for i in range(len(self.stats)))
        if metric == "F":
            progress = [1.0 / self.ntt(i) for i in range(len(self.stats))]
            return min(progress) / max(progress)
        raise SemanticError(f"unknown metric {metric!r}")


def evaluate_metric(x: DecisionVariable, mid: MetricId, problem: MOOProblem) -> float:
    """Value of one metric for one decision variable, in the metric's natural unit.

    Multi-DNN latencies come from a joint measurement when the profile has
    one for exactly this tuple; otherwise single-mode samples are scaled by
    ``1 + alpha * (k - 1)`` where ``k`` counts tasks sharing the engine.
    """
    return problem.view(x).value(check_metric(mid, len(x.configs)))


def design_metrics(x: DecisionVariable, problem: MOOProblem) -> dict:
    """Snapshot of every objective value plus aggregate MF and W."""
    view = problem.view(x)
    out = {col.metric.label: view.value(col.metric) for col in problem.columns}
    out["MF"] = view.value(MetricId("MF", "value", ALL))
    out["W"] = view.value(MetricId("W", "value", ALL))
    return out


def runtime_stats(x: DecisionVariable, profile: ProfileDB,
                  contention: Optional[ContentionParams] = None) -> list:
    """Per-task latency/accuracy/memory figures used by the runtime simulator."""
    view = _VariableView(x, profile, contention or ContentionParams())
    out = []
    for i, s in enumerate(view.stats):
        out.append({
            "avg_latency_ms": view.latency(i, "avg"),
            "latency_std_ms": view.latency(i, "std"),
            "accuracy": s.model.accuracy,
            "memory_mb": s.record.memory_mb,
            "flops": s.model.flops,
            "batch": s.record.batch,
        })
    return out


# --------------------------------------------------------------------------
# constraints and the objective matrix
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstrainedSpace:
    variables: tuple
    indices: tuple  # positions in the unconstrained space
    rejections: Mapping[str, int]
    total: int

    def __len__(self):
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)


def violated_constraints(x: DecisionVariable, problem: MOOProblem) -> list:
    view = problem.view(x)
    return [c for c in problem.constraints if c.g(view.value(c.metric)) > 0]


def apply_constraints(problem: MOOProblem) -> ConstrainedSpace:
    """Keep every x with g_j(x) <= 0 for all j, in space order."""
    counts = {c.label: 0 for c in problem.constraints}
    kept, idx = [], []
    for pos, x in enumerate(problem.space.variables):
        bad = violated_constraints(x, problem) if problem.constraints else []
        for c in bad:
            counts[c.label] += 1
        if not bad:
            kept.append(x)
            idx.append(pos)
    if not kept:
        worst = max(counts, key=lambda k: counts[k]) if counts else None
        raise InfeasibleError(
            f"no configuration satisfies the constraints (tightest: {worst})",
            constraint=worst, rejections=counts,
        )
    return ConstrainedSpace(tuple(kept), tuple(idx), counts, len(problem.space))


@dataclass(frozen=True)
class ObjectiveMatrix:
    variables: tuple
    values: np.ndarray  # shape (rows, columns)
    columns: tuple

    @property
    def directions(self) -> tuple:
        return tuple(c.direction for c in self.columns)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.columns], dtype=float)

    @property
    def shape(self):
        return self.values.shape


def build_objective_matrix(space, problem: MOOProblem) -> ObjectiveMatrix:
    variables = tuple(space)
    values = np.empty((len(variables), len(problem.columns)), dtype=float)
    for r, x in enumerate(variables):
        view = problem.view(x)
        for c, col in enumerate(problem.columns):
            values[r, c] = view.value(col.metric)
    if not np.all(np.isfinite(values)):
        raise ValueError("objective matrix contains non-finite values")
    return ObjectiveMatrix(variables, values, problem.columns)
