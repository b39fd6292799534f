"""Seeded corpus of small random problems shared by the property and acceptance tests."""

import random
from functools import lru_cache

import numpy as np

from slodeploy.errors import InfeasibleError
from slodeploy.problem import ALL, compile_problem, evaluate_metric, parse_slo_spec
from slodeploy.profiles import SynthSpec, synth_profiles

CORPUS_SIZE = 1000
MAX_SPACE = 200
ENGINES = ("CPU", "GPU", "NPU", "DSP")

SINGLE_METRICS = [
    ("A", None), ("L", "avg"), ("L", "max"), ("L", "std"), ("L", "p90"),
    ("S", None), ("W", None), ("MF", None), ("TP", None), ("E", None),
]
MULTI_METRICS = [("NTT", None), ("STP", None), ("F", None)]


def random_profile(rng: random.Random, seed: int):
    while True:
        n_tasks = rng.choice((1, 1, 1, 2, 2, 3))
        engines = tuple(rng.sample(ENGINES, rng.randint(1, 3)))
        options = {}
        if "CPU" in engines and rng.random() < 0.5:
            options["CPU"] = [{"threads": t} for t in rng.sample((1, 2, 4, 8), rng.randint(1, 3))]
        per_task = rng.randint(1, 5) * sum(len(options.get(e, [None])) for e in engines)
        if 2 <= per_task ** n_tasks <= MAX_SPACE:
            break
    spec = SynthSpec(
        n_models=per_task // sum(len(options.get(e, [None])) for e in engines),
        engines=engines,
        engine_options=options,
        n_tasks=n_tasks,
        n_samples=rng.choice((5, 10, 20)),
        joint=n_tasks > 1 and rng.random() < 0.5,
        device_name=f"synth-{seed}",
    )
    return synth_profiles(seed, spec)


def _metric_doc(rng: random.Random, n_tasks: int) -> dict:
    pool = SINGLE_METRICS + (MULTI_METRICS if n_tasks > 1 else [])
    metric, stat = rng.choice(pool)
    doc = {"metric": metric}
    if stat:
        doc["statistic"] = stat
    if n_tasks > 1 and metric not in ("STP", "F"):
        if metric in ("S", "W", "MF", "E", "NTT") and rng.random() < 0.4:
            doc["task"] = ALL
        else:
            doc["task"] = rng.randrange(n_tasks)
    return doc


def random_slo(rng: random.Random, db, n_tasks: int) -> dict:
    tasks = db.tasks()
    objectives = []
    for _ in range(rng.randint(1, 5)):
        doc = _metric_doc(rng, n_tasks)
        if rng.random() < 0.3:
            doc["weight"] = round(rng.uniform(0.2, 3.0), 3)
        if rng.random() < 0.1:
            doc["direction"] = rng.choice(("min", "max"))
        objectives.append(doc)
    slo = {"tasks": tasks, "objectives": objectives, "constraints": []}
    unconstrained = compile_problem(db, parse_slo_spec(slo))
    for _ in range(rng.choice((0, 0, 1, 1, 2))):
        doc = _metric_doc(rng, n_tasks)
        mid = parse_slo_spec({"tasks": tasks, "constraints": [dict(doc, bound=0)]}).constraints[0].metric
        values = sorted(evaluate_metric(x, mid, unconstrained) for x in unconstrained.space.variables)
        q = rng.choice((0.3, 0.6, 0.9, 1.0)) if rng.random() > 0.05 else 0.0
        sense = rng.choice(("<=", ">="))
        pick = values[int(q * (len(values) - 1))] if sense == "<=" else values[int((1 - q) * (len(values) - 1))]
        # a strict bound just beyond the extreme makes the problem infeasible on purpose
        if q == 0.0:
            pick = values[0] - 1.0 if sense == "<=" else values[-1] + 1.0
        doc.update(bound=pick, sense=sense)
        slo["constraints"].append(doc)
    return slo


@lru_cache(maxsize=None)
def corpus_case(seed: int):
    """(profile, SLO document, compiled problem) for one corpus seed."""
    rng = random.Random(seed)
    db = random_profile(rng, seed)
    slo = random_slo(rng, db, len(db.tasks()))
    return db, slo, compile_problem(db, parse_slo_spec(slo))


@lru_cache(maxsize=None)
def corpus_solution(seed: int):
    """Full solution, or None when the case is infeasible by construction."""
    from slodeploy.rass import solve_full

    try:
        return solve_full(corpus_case(seed)[2])
    except InfeasibleError:
        return None


def seeds(n: int = CORPUS_SIZE):
    return range(n)


def random_matrix(rng: np.random.Generator):
    """Raw objective values with ties and constant columns mixed in."""
    rows = int(rng.integers(1, MAX_SPACE + 1))
    cols = int(rng.integers(1, 6))
    values = rng.normal(size=(rows, cols)) * rng.uniform(0.1, 1000, size=cols)
    for c in range(cols):
        kind = rng.uniform()
        if kind < 0.1:
            values[:, c] = values[0, c]
        elif kind < 0.3 and values[:, c].std() > 0:
            values[:, c] = np.round(values[:, c] / values[:, c].std())  # coarse grid forces ties
    directions = tuple(rng.choice(["min", "max"]) for _ in range(cols))
    weights = tuple(float(w) for w in rng.uniform(0.1, 5, size=cols))
    return values, directions, weights
