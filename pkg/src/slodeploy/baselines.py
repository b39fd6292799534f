"""Comparison strategies and optimality-ratio reports.

Every baseline picks a decision variable by its own rule; the choice is
then scored with the problem's own optimality (utopia and variances over
the constrained space), so ratios against d0 are directly comparable.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import EmptySpaceError, InfeasibleError
from .problem import (
    ALL,
    MULTI_ONLY,
    Constraint,
    DecisionVariable,
    MetricId,
    MOOProblem,
    Objective,
    SLOSpec,
    build_objective_matrix,
    check_metric,
    compile_problem,
    expand_metric,
    violated_constraints,
)
from .profiles import ProfileDB
from .rass import UTOPIA, Solution, same_optimality, solve_full

BEST_ACCURACY = "b-a"
BEST_SIZE = "b-s"
TRANSFERRED = "transferred"
MULTI_UNAWARE = "multi-unaware"
WEIGHTED_SUM = "oodin"
KINDS = (BEST_ACCURACY, BEST_SIZE, TRANSFERRED, MULTI_UNAWARE, WEIGHTED_SUM)
ALIASES = {"best-accuracy": BEST_ACCURACY, "best-size": BEST_SIZE, "weighted-sum": WEIGHTED_SUM}

NOT_APPLICABLE = "N/A"  # the choice cannot run on the target device
VIOLATES = "!"  # the choice breaks a constraint, or the pool has no feasible member


@dataclass(frozen=True)
class Baseline:
    kind: str
    source: Optional[ProfileDB] = None  # Transferred only

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; known: {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        if (kind == TRANSFERRED) != (self.source is not None):
            raise ValueError("a source profile is required for, and only for, the transferred baseline")

    @property
    def name(self) -> str:
        if self.kind == TRANSFERRED:
            return f"T_{self.source.device_name}"
        return self.kind


@dataclass(frozen=True)
class Choice:
    baseline: str
    x: DecisionVariable
    opt: float


@dataclass(frozen=True)
class Infeasible:
    baseline: str
    code: str  # NOT_APPLICABLE or VIOLATES
    reason: str
    constraint: Optional[str] = None


def _variable_ok(x: DecisionVariable, signature: Optional[tuple]) -> bool:
    return signature is None or x.signature == signature


def _best_in(sol: Solution, pool, baseline: str, signature=None):
    """Highest-optimality feasible member of ``pool`` (pool order breaks nothing: X' is sorted)."""
    keys = {x.key for x in pool if _variable_ok(x, signature)}
    for entry in sol.sorted_space:
        if entry.x.key in keys:
            return Choice(baseline, entry.x, entry.score.opt)
    return _violation(sol.problem, [x for x in pool if _variable_ok(x, signature)], baseline)


def _violation(problem: MOOProblem, pool, baseline: str) -> Infeasible:
    counts = {}
    for x in pool:
        for c in violated_constraints(x, problem):
            counts[c.label] = counts.get(c.label, 0) + 1
    if not counts:
        return Infeasible(baseline, VIOLATES, "empty candidate pool")
    worst = max(counts, key=lambda k: counts[k])
    return Infeasible(baseline, VIOLATES, f"violates {worst}", worst)


def _architecture_pool(problem: MOOProblem, rank) -> list:
    """Variables whose every task uses the architecture minimising ``rank(variants)``."""
    db = problem.profile
    chosen = []
    for task_configs in problem.space.per_task:
        by_arch = {}
        for c in task_configs:
            m = db.model(c.model_id)
            by_arch.setdefault(m.architecture, set()).add(m)
        chosen.append(min(by_arch, key=lambda a: (rank(by_arch[a]), a)))
    return [x for x in problem.space.variables
            if all(db.model(c.model_id).architecture == a for c, a in zip(x.configs, chosen))]


def _accuracy_rank(variants) -> float:
    # an architecture is as accurate as its best precision variant
    sign = -1.0 if next(iter(variants)).accuracy_direction == "max" else 1.0
    return min(sign * m.accuracy for m in variants)


def _size_rank(variants) -> float:
    return min(m.params for m in variants)


# --------------------------------------------------------------------------
# per-task decomposition
# --------------------------------------------------------------------------

def _local(mid: MetricId, task: int) -> Optional[MetricId]:
    if mid.metric in MULTI_ONLY or mid.task_index != task:
        return None
    return MetricId(mid.metric, mid.statistic, 0)


def task_slo(problem: MOOProblem, task: int) -> SLOSpec:
    """The single-DNN slice of a multi-DNN problem for one task.

    Objectives and constraints bound to that task carry over; aggregate
    and contention-dependent metrics are dropped, which is exactly what a
    multi-DNN-unaware formulation loses.
    """
    n = problem.n_tasks
    objectives = []
    for obj in problem.slo.objectives:
        for mid in expand_metric(check_metric(obj.metric, n), n):
            local = _local(mid, task)
            if local is not None:
                objectives.append(Objective(local, obj.direction, obj.weight))
    constraints = []
    for con in problem.constraints:
        local = _local(con.metric, task)
        if local is not None:
            constraints.append(Constraint(local, con.bound, con.sense))
    if not objectives:
        objectives = [Objective(MetricId("L", "avg", 0), "min", 1.0)]
    return SLOSpec(tuple(objectives), tuple(constraints), (problem.tasks[task],))


def _restrict(problem: MOOProblem, signature: tuple) -> MOOProblem:
    space = problem.space
    variables = tuple(x for x in space.variables if x.signature == signature)
    return replace(problem, space=replace(space, variables=variables))


# --------------------------------------------------------------------------
# weighted sum
# --------------------------------------------------------------------------

def weighted_sum_scores(values: np.ndarray, directions: Sequence[str], weights: Sequence[float],
                        lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sum of weighted min-max-normalised objectives, each oriented so 1 is best."""
    values = np.asarray(values, dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = (values - lo) / span
    norm = np.where(hi > lo, norm, 1.0)
    flip = np.array([d == "min" for d in directions])
    norm[:, flip] = np.where((hi > lo)[flip], 1.0 - norm[:, flip], 1.0)
    return norm @ np.asarray(weights, dtype=float)


def _weighted_sum_pick(problem: MOOProblem, signature=None) -> Optional[DecisionVariable]:
    everything = build_objective_matrix(problem.space, problem)
    lo, hi = everything.values.min(axis=0), everything.values.max(axis=0)
    feasible = [r for r, x in enumerate(everything.variables)
                if _variable_ok(x, signature) and not violated_constraints(x, problem)]
    if not feasible:
        return None
    scores = weighted_sum_scores(everything.values[feasible], everything.directions,
                                 everything.weights, lo, hi)
    # first maximum in space order: ties fall to the lexicographically smallest key
    return everything.variables[feasible[int(np.argmax(scores))]]


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _score(sol: Solution, x: DecisionVariable, name: str):
    opt = sol.opt_of(x)
    if opt is None:
        return _violation(sol.problem, [x], name)
    return Choice(name, x, opt)


def _transferred(baseline: Baseline, sol: Solution, signature=None):
    problem = sol.problem
    try:
        src_problem = compile_problem(baseline.source, problem.slo, problem.contention, problem.tasks)
        if signature is not None:
            src_problem = _restrict(src_problem, signature)
            if not src_problem.space.variables:
                return Infeasible(baseline.name, NOT_APPLICABLE,
                                  f"{baseline.source.device_name} has no {'+'.join(signature)} mapping")
        src = solve_full(src_problem)
    except EmptySpaceError as exc:
        return Infeasible(baseline.name, NOT_APPLICABLE, f"{baseline.source.device_name}: {exc}")
    except InfeasibleError as exc:
        return Infeasible(baseline.name, VIOLATES, f"no solution on {baseline.source.device_name}",
                          exc.constraint)
    x = src.designs.ranked[0].x
    for c in x.configs:
        if c.hw.engine not in problem.profile.engine_set or not problem.profile.has_record(c.model_id, c.hw):
            return Infeasible(baseline.name, NOT_APPLICABLE, f"{c.label} does not exist on the target device")
    return _score(sol, x, baseline.name)


def run_baseline(baseline: Baseline, solution: Solution, signature: Optional[tuple] = None):
    """Choice or Infeasible for one baseline, optionally restricted to one engine mapping."""
    problem = solution.problem
    name = baseline.name
    kind = baseline.kind
    if kind == BEST_ACCURACY:
        return _best_in(solution, _architecture_pool(problem, _accuracy_rank), name, signature)
    if kind == BEST_SIZE:
        return _best_in(solution, _architecture_pool(problem, _size_rank), name, signature)
    if kind == TRANSFERRED:
        return _transferred(baseline, solution, signature)

    if kind == WEIGHTED_SUM and problem.n_tasks == 1:
        x = _weighted_sum_pick(problem, signature)
        return _violation(problem, problem.space.variables, name) if x is None else _score(solution, x, name)

    # multi-DNN-unaware (and the weighted sum on multi-DNN problems): solve per task, concatenate
    def pick_one(sub: MOOProblem):
        if kind == WEIGHTED_SUM:
            return _weighted_sum_pick(sub)
        try:
            return solve_full(sub).designs.ranked[0].x
        except InfeasibleError:
            return None

    configs = []
    for i, task in enumerate(problem.tasks):
        sub = compile_problem(problem.profile, task_slo(problem, i), problem.contention, tasks=(task,))
        if signature is not None:
            sub = _restrict(sub, (signature[i],))
            if not sub.space.variables:
                return Infeasible(name, NOT_APPLICABLE, f"task {task!r} has no {signature[i]} configuration")
        pick = pick_one(sub)
        if pick is None:
            return Infeasible(name, VIOLATES, f"the single-task problem for {task!r} is infeasible")
        configs.append(pick.configs[0])
    return _score(solution, DecisionVariable(tuple(configs)), name)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    baseline: str
    state: str  # "all" or an engine mapping such as "CPU" or "CPU+DSP"
    status: str  # "ok", VIOLATES or NOT_APPLICABLE
    choice: str
    opt: Optional[float]
    reference: str  # the solver's design the ratio is taken against
    reference_opt: float
    ratio: Optional[float]
    reason: str = ""


@dataclass(frozen=True)
class ComparisonReport:
    device: str
    rows: tuple

    def feasible(self) -> list:
        return [r for r in self.rows if r.status == "ok"]


def optimality_ratio(reference: float, other: float) -> float:
    if same_optimality(reference, other):
        return 1.0
    if other == UTOPIA:
        return 0.0
    if reference == UTOPIA:
        return math.inf
    return reference / other


def compare(solution: Solution, baselines: Sequence[Baseline], per_state: bool = False) -> ComparisonReport:
    """Score every baseline against d0, and per engine mapping when ``per_state``."""
    states = [(ALL, None, solution.designs.ranked[0])]
    if per_state:
        seen = {}
        for entry in solution.sorted_space:
            seen.setdefault(entry.x.signature, entry)
        for sig, head in seen.items():
            states.append(("+".join(sig), sig, head))
    rows = []
    for baseline in baselines:
        for label, sig, head in states:
            ref_x, ref_opt = head.x, head.score.opt
            res = run_baseline(baseline, solution, sig)
            if isinstance(res, Infeasible):
                rows.append(ReportRow(baseline.name, label, res.code, "", None, ref_x.label, ref_opt,
                                      None, res.reason))
            else:
                rows.append(ReportRow(baseline.name, label, "ok", res.x.label, res.opt, ref_x.label,
                                      ref_opt, optimality_ratio(ref_opt, res.opt)))
    return ComparisonReport(solution.problem.profile.device_name, tuple(rows))


REPORT_COLUMNS = ("baseline", "state", "status", "choice", "opt", "reference", "reference_opt", "ratio", "reason")


def _fmt(v) -> str:
    if v is None:
        return ""
    if v == math.inf:
        return "utopia"
    return f"{v:.6f}"


def report_to_tsv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in report.rows:
        w.writerow([r.baseline, r.state, r.status, r.choice, _fmt(r.opt), r.reference,
                    _fmt(r.reference_opt), _fmt(r.ratio), r.reason])
    return buf.getvalue()
