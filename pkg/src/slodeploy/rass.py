"""Runtime-aware sorting and search.

The solver scores every feasible decision variable by its normalised,
weighted Mahalanobis-style distance to the utopia point, sorts the space,
splits it by engine mapping, and keeps a handful of designs together with
a first-match switching policy that the runtime manager consults instead
of re-solving.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import PolicyIncompleteError
from .problem import (
    ALL,
    ConstrainedSpace,
    DecisionVariable,
    ExecutionConfig,
    MetricId,
    MOOProblem,
    ObjectiveMatrix,
    apply_constraints,
    build_objective_matrix,
    design_metrics,
    runtime_stats,
)
from .profiles import HardwareConfig

UTOPIA = math.inf
MAX_CLASSES = 3


@dataclass(frozen=True)
class OptimalityScore:
    d: float
    d_s: float
    opt: float  # UTOPIA (inf) on an exact utopia hit or a degenerate space

    @property
    def is_utopia(self) -> bool:
        return self.opt == UTOPIA


def compute_optimality(matrix: ObjectiveMatrix) -> list:
    """Score every row of ``matrix``.

    Utopia and variances are taken over the rows given (the constrained
    space). A column with no spread contributes nothing to either the
    distance or its maximum.
    """
    f = np.asarray(matrix.values, dtype=float)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ValueError("optimality needs at least one row")
    if not np.all(np.isfinite(f)):
        raise ValueError("objective values must be finite")
    hi, lo = f.max(axis=0), f.min(axis=0)
    up = np.where(np.array([d == "max" for d in matrix.directions]), hi, lo)
    span = hi - lo
    var = f.var(axis=0)
    active = (span > 0) & (var > 0)
    scale = np.zeros_like(var)
    scale[active] = matrix.weights[active] ** 2 / var[active]

    d = np.sqrt(((f - up) ** 2 * scale).sum(axis=1))
    max_distance = math.sqrt(float((span ** 2 * scale).sum()))
    if max_distance == 0.0:
        return [OptimalityScore(0.0, 0.0, UTOPIA) for _ in range(f.shape[0])]
    scores = []
    for dist in d:
        d_s = min(float(dist) / max_distance, 1.0)
        scores.append(OptimalityScore(float(dist), d_s, UTOPIA if d_s == 0.0 else 1.0 / d_s))
    return scores


@dataclass(frozen=True)
class Ranked:
    x: DecisionVariable
    score: OptimalityScore
    row: int  # row in the objective matrix
    rank: int = 0  # position in the sorted space


@dataclass(frozen=True)
class SortedSpace:
    entries: tuple

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def _opt_key(opt: float) -> float:
    # 12 significant digits: scores equal up to float noise are ties, so the
    # lexicographic tie-break decides instead of the last few ulps
    if opt == UTOPIA:
        return -math.inf
    return -float(f"{opt:.12g}")


def same_optimality(a: float, b: float) -> bool:
    """True when two scores tie under the ordering used by ``sort_space``."""
    return _opt_key(a) == _opt_key(b)


def sort_space(space: Sequence[DecisionVariable], scores: Sequence[OptimalityScore]) -> SortedSpace:
    """Descending optimality, UTOPIA first, ties broken by (model_id, hw) keys."""
    space = list(space)
    if len(space) != len(scores):
        raise ValueError("scores are not aligned with the space")
    order = sorted(range(len(space)), key=lambda i: (_opt_key(scores[i].opt), space[i].key))
    return SortedSpace(tuple(Ranked(space[i], scores[i], i, r) for r, i in enumerate(order)))


@dataclass(frozen=True)
class MappingClass:
    signature: tuple
    members: tuple  # Ranked entries, best first

    @property
    def head(self) -> Ranked:
        return self.members[0]


def partition_mappings(sorted_space: SortedSpace, max_classes: int = MAX_CLASSES) -> list:
    """Group by engine signature, rank groups by their best member, keep the top few."""
    if not len(sorted_space):
        raise ValueError("cannot partition an empty space")
    groups = {}
    for entry in sorted_space:
        groups.setdefault(entry.x.signature, []).append(entry)
    # dict order is first-appearance order in the sorted space, i.e. by best member
    classes = [MappingClass(sig, tuple(members)) for sig, members in groups.items()]
    return classes[:max_classes]


# --------------------------------------------------------------------------
# designs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Design:
    label: str
    x: DecisionVariable
    score: OptimalityScore
    metrics: dict = field(default_factory=dict, compare=False)
    runtime: tuple = field(default=(), compare=False)

    @property
    def signature(self) -> tuple:
        return self.x.signature

    @property
    def mf(self) -> float:
        return self.metrics["MF"]

    @property
    def w(self) -> float:
        return self.metrics["W"]


@dataclass(frozen=True)
class DesignSet:
    ranked: tuple
    dm: Design
    dw: Design
    dwm: Design
    dwm_source: str  # "dm" or "dw"

    @property
    def T(self) -> int:
        return len(self.ranked)

    def by_label(self, label: str) -> Design:
        for d in self.all():
            if d.label == label:
                return d
        raise KeyError(label)

    def all(self) -> list:
        return list(self.ranked) + [self.dm, self.dw, self.dwm]

    def distinct(self) -> list:
        seen, out = set(), []
        for d in self.all():
            if d.x.key not in seen:
                seen.add(d.x.key)
                out.append(d)
        return out

    @property
    def labels(self) -> list:
        return [d.label for d in self.all()]


def _aggregates(x: DecisionVariable, problem: MOOProblem) -> tuple:
    view = problem.view(x)
    return view.value(MetricId("MF", "value", ALL)), view.value(MetricId("W", "value", ALL))


def _make_design(label: str, entry: Ranked, problem: MOOProblem) -> Design:
    return Design(
        label, entry.x, entry.score,
        design_metrics(entry.x, problem),
        tuple(runtime_stats(entry.x, problem.profile, problem.contention)),
    )


def memory_workload_cost(mf: float, w: float, mf_range: tuple, w_range: tuple) -> float:
    """Normalised sum of memory footprint and workload (min-max over the feasible space)."""

    def norm(v, rng):
        lo, hi = rng
        return 0.0 if hi <= lo else (v - lo) / (hi - lo)

    return norm(mf, mf_range) + norm(w, w_range)


def select_designs(classes: Sequence[MappingClass], problem: MOOProblem,
                   feasible: Optional[Sequence[DecisionVariable]] = None) -> DesignSet:
    """Pick d0..d{T-1}, dm, dw and dwm from the retained mapping classes.

    ``feasible`` is the constrained space used to normalise the dwm cost;
    it defaults to the union of the classes. Ties on memory or workload go
    to the member that sorts first (higher optimality, then key order).
    """
    if not classes:
        raise ValueError("need at least one mapping class")
    ranked = [_make_design(f"d{i}", c.head, problem) for i, c in enumerate(classes)]

    pool = sorted((e for c in classes for e in c.members), key=lambda e: e.rank)
    agg = {e.x.key: _aggregates(e.x, problem) for e in pool}
    best_mf = min(pool, key=lambda e: (agg[e.x.key][0], e.rank))
    best_w = min(pool, key=lambda e: (agg[e.x.key][1], e.rank))
    dm = _make_design("dm", best_mf, problem)
    dw = _make_design("dw", best_w, problem)

    if feasible is None:
        values = list(agg.values())
    else:
        values = [_aggregates(x, problem) for x in feasible]
    mf_range = (min(v[0] for v in values), max(v[0] for v in values))
    w_range = (min(v[1] for v in values), max(v[1] for v in values))
    cost_w = memory_workload_cost(dw.mf, dw.w, mf_range, w_range)
    cost_m = memory_workload_cost(dm.mf, dm.w, mf_range, w_range)
    source = dw if cost_w < cost_m else dm
    dwm = Design("dwm", source.x, source.score, source.metrics, source.runtime)
    return DesignSet(tuple(ranked), dm, dw, dwm, source.label)


# --------------------------------------------------------------------------
# switching policy
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    engines: tuple  # one of True / False / None (wildcard) per policy engine
    memory: Optional[bool]
    design: str

    def matches(self, engine_order: Sequence[str], flags, memory: bool) -> bool:
        for engine, want in zip(engine_order, self.engines):
            if want is not None and bool(flags.get(engine, False)) != want:
                return False
        return self.memory is None or self.memory == bool(memory)


@dataclass(frozen=True)
class SwitchingPolicy:
    engine_order: tuple
    rules: tuple

    def first_match(self, flags, memory: bool) -> tuple:
        """(rule index, number of rules evaluated) for an environment state."""
        for i, rule in enumerate(self.rules):
            if rule.matches(self.engine_order, flags, memory):
                return i, i + 1
        raise PolicyIncompleteError(f"no rule matches flags={dict(flags)} memory={memory}")

    def states(self):
        """Every boolean environment state over the policy's engines plus memory."""
        n = len(self.engine_order)
        for bits in itertools.product((False, True), repeat=n + 1):
            yield dict(zip(self.engine_order, bits[:n])), bits[n]

    def table(self) -> list:
        def mark(v):
            return "-" if v is None else ("T" if v else "F")

        return [
            [mark(v) for v in r.engines] + [mark(r.memory), r.design]
            for r in self.rules
        ]


def generate_switching_policy(designs: DesignSet) -> SwitchingPolicy:
    """Build the ordered rule table (T + 3 rules) and verify it is total.

    A processor design di is usable while none of its engines is flagged;
    first-match order gives earlier designs priority. Engines shown as T in
    a rule are those the earlier, skipped designs force to be flagged. The
    dw rule catches every remaining memory-clear state, dwm takes the
    state with every engine and memory flagged, and dm takes any other
    memory-flagged state.
    """
    engine_order = []
    for d in designs.ranked:
        for e in d.signature:
            if e not in engine_order:
                engine_order.append(e)
    sig_sets = [frozenset(d.signature) for d in designs.ranked]

    def pattern(clear: frozenset, flagged: set) -> tuple:
        return tuple(False if e in clear else (True if e in flagged else None) for e in engine_order)

    def implied(earlier, clear):
        out = set()
        for s in earlier:
            rest = s - clear
            if len(rest) == 1:
                out |= rest
        return out

    rules = []
    for i, d in enumerate(designs.ranked):
        clear = sig_sets[i]
        rules.append(Rule(pattern(clear, implied(sig_sets[:i], clear)), False, d.label))
    rules.append(Rule(pattern(frozenset(), implied(sig_sets, frozenset())), False, "dw"))
    rules.append(Rule((True,) * len(engine_order), True, "dwm"))
    rules.append(Rule((None,) * len(engine_order), True, "dm"))

    policy = SwitchingPolicy(tuple(engine_order), tuple(rules))
    for flags, memory in policy.states():
        policy.first_match(flags, memory)  # raises PolicyIncompleteError on a gap
    return policy


# --------------------------------------------------------------------------
# end-to-end
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Solution:
    problem: MOOProblem
    feasible: ConstrainedSpace
    matrix: ObjectiveMatrix
    scores: tuple
    sorted_space: SortedSpace
    classes: tuple
    designs: DesignSet
    policy: SwitchingPolicy

    def opt_of(self, x: DecisionVariable) -> Optional[float]:
        """Optimality of ``x`` under this problem's scoring, None if x is infeasible."""
        row = self._rows.get(x.key)
        return None if row is None else self.scores[row].opt

    @property
    def _rows(self) -> dict:
        rows = self.__dict__.get("_row_cache")
        if rows is None:
            rows = {x.key: i for i, x in enumerate(self.matrix.variables)}
            object.__setattr__(self, "_row_cache", rows)
        return rows


def solve_full(problem: MOOProblem, max_classes: int = MAX_CLASSES) -> Solution:
    feasible = apply_constraints(problem)
    matrix = build_objective_matrix(feasible, problem)
    scores = compute_optimality(matrix)
    ordered = sort_space(matrix.variables, scores)
    classes = partition_mappings(ordered, max_classes)
    designs = select_designs(classes, problem, feasible.variables)
    policy = generate_switching_policy(designs)
    return Solution(problem, feasible, matrix, tuple(scores), ordered, tuple(classes), designs, policy)


def solve(problem: MOOProblem) -> tuple:
    """Constrain, score, sort and search once; returns ``(DesignSet, SwitchingPolicy)``."""
    sol = solve_full(problem)
    return sol.designs, sol.policy


# --------------------------------------------------------------------------
# documents
# --------------------------------------------------------------------------

def _num(v: float):
    return "utopia" if v == UTOPIA else v


def _unnum(v):
    return UTOPIA if v == "utopia" else float(v)


def _design_doc(d: Design, tasks: Sequence[str]) -> dict:
    return {
        "label": d.label,
        "configs": [
            {"task": t, "model_id": c.model_id, "engine": c.hw.engine, "options": c.hw.options_dict()}
            for t, c in zip(tasks, d.x.configs)
        ],
        "score": {"d": d.score.d, "d_s": d.score.d_s, "opt": _num(d.score.opt)},
        "metrics": dict(sorted(d.metrics.items())),
        "runtime": [dict(sorted(r.items())) for r in d.runtime],
    }


def solution_to_dict(designs: DesignSet, policy: SwitchingPolicy, problem: MOOProblem) -> dict:
    tasks = list(problem.tasks)
    return {
        "device": problem.profile.device_name,
        "engines": list(problem.profile.engine_set),
        "tasks": tasks,
        "objectives": [c.label for c in problem.columns],
        "constraints": [c.label for c in problem.constraints],
        "designs": [_design_doc(d, tasks) for d in designs.all()],
        "dwm_source": designs.dwm_source,
        "policy": {
            "engine_order": list(policy.engine_order),
            "rules": [
                {
                    "pattern": dict(zip(list(policy.engine_order) + ["memory"], row[:-1])),
                    "design": row[-1],
                }
                for row in policy.table()
            ],
        },
    }


def dumps_solution(designs: DesignSet, policy: SwitchingPolicy, problem: MOOProblem) -> str:
    return json.dumps(solution_to_dict(designs, policy, problem), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class SolutionDoc:
    """A design document read back from disk."""

    device: str
    engines: tuple
    tasks: tuple
    designs: DesignSet
    policy: SwitchingPolicy


def solution_from_dict(doc) -> SolutionDoc:
    def design(dd) -> Design:
        configs = tuple(
            ExecutionConfig(c["model_id"], HardwareConfig(c["engine"], tuple((c.get("options") or {}).items())))
            for c in dd["configs"]
        )
        s = dd["score"]
        return Design(dd["label"], DecisionVariable(configs),
                      OptimalityScore(float(s["d"]), float(s["d_s"]), _unnum(s["opt"])),
                      dict(dd.get("metrics", {})), tuple(dict(r) for r in dd.get("runtime", [])))

    designs = [design(d) for d in doc["designs"]]
    by_label = {d.label: d for d in designs}
    ranked = tuple(d for d in designs if d.label.startswith("d") and d.label[1:].isdigit())
    ds = DesignSet(ranked, by_label["dm"], by_label["dw"], by_label["dwm"], doc.get("dwm_source", "dm"))

    def unmark(v):
        return None if v == "-" else v == "T"

    order = tuple(doc["policy"]["engine_order"])
    rules = tuple(
        Rule(tuple(unmark(r["pattern"][e]) for e in order), unmark(r["pattern"]["memory"]), r["design"])
        for r in doc["policy"]["rules"]
    )
    return SolutionDoc(doc["device"], tuple(doc["engines"]), tuple(doc["tasks"]), ds,
                       SwitchingPolicy(order, rules))


def loads_solution(text: str) -> SolutionDoc:
    return solution_from_dict(json.loads(text))
