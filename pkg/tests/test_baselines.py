import json
import os
from pathlib import Path

import numpy as np
import pytest

from corpus import corpus_case, corpus_solution, seeds
from slodeploy.baselines import (
    BEST_ACCURACY,
    BEST_SIZE,
    MULTI_UNAWARE,
    NOT_APPLICABLE,
    TRANSFERRED,
    VIOLATES,
    WEIGHTED_SUM,
    Baseline,
    Choice,
    Infeasible,
    compare,
    report_to_tsv,
    run_baseline,
    weighted_sum_scores,
)
from slodeploy.fixtures import load_fixture, load_slo
from slodeploy.problem import MetricId, compile_problem, evaluate_metric, parse_slo_spec
from slodeploy.profiles import SynthSpec, loads_profiles, synth_profiles
from slodeploy.rass import solve_full

GOLDEN = Path(__file__).parent / "golden"
UPDATE = os.environ.get("SLODEPLOY_UPDATE_GOLDEN") == "1"


def check_golden(name: str, text: str):
    path = GOLDEN / name
    if UPDATE:
        path.write_text(text)
    assert text == path.read_text(), f"{name} differs; rerun with SLODEPLOY_UPDATE_GOLDEN=1 if intended"


def three_config_db():
    models, records = [], []
    for i, (acc, lat) in enumerate([(70, 10), (75, 20), (80, 40)], 1):
        models.append({"id": f"x{i}", "architecture": f"net{i}", "task_id": "t", "input_size": "224",
                       "precision": "FP32", "size_mb": 4.0, "flops": 1e9, "params": 1e6, "accuracy": acc})
        records.append({"model_id": f"x{i}", "hw": {"engine": "CPU"}, "latency_samples": [lat],
                        "memory_mb": 10.0})
    return loads_profiles(json.dumps({"device": "d", "engines": ["CPU"], "models": models,
                                      "measurements": records}))


def test_kinds_and_aliases():
    assert Baseline("best-accuracy").kind == BEST_ACCURACY
    assert Baseline("weighted-sum").name == WEIGHTED_SUM
    with pytest.raises(ValueError):
        Baseline("b-x")
    with pytest.raises(ValueError):
        Baseline(TRANSFERRED)


def test_best_accuracy_pool_is_lite4():
    sol = solve_full(compile_problem(load_fixture("uc1-s20"), load_slo("uc1")))
    res = run_baseline(Baseline(BEST_ACCURACY), sol)
    assert isinstance(res, Choice)
    model = sol.problem.profile.model(res.x.configs[0].model_id)
    assert model.architecture == "EfficientNet Lite4"
    assert max(m.accuracy for m in sol.problem.profile.models) == pytest.approx(80.81)


def test_best_size_pool_is_smallest_architecture():
    sol = solve_full(compile_problem(load_fixture("uc1-s20"), load_slo("uc1")))
    res = run_baseline(Baseline(BEST_SIZE), sol)
    db = sol.problem.profile
    assert db.model(res.x.configs[0].model_id).params == min(m.params for m in db.models)


def test_weighted_sum_and_optimality_agree_on_three_configs():
    db = three_config_db()
    slo = parse_slo_spec({"objectives": [{"metric": "A"}, {"metric": "L", "statistic": "avg"}]})
    sol = solve_full(compile_problem(db, slo))
    assert sol.designs.ranked[0].x.configs[0].model_id == "x2"
    res = run_baseline(Baseline(WEIGHTED_SUM), sol)
    assert res.x.configs[0].model_id == "x2"
    (row,) = compare(sol, [Baseline(WEIGHTED_SUM)]).rows
    assert row.ratio == 1.0


def test_weighted_sum_scores_by_hand():
    values = np.array([[70.0, 10.0], [75.0, 20.0], [80.0, 40.0]])
    scores = weighted_sum_scores(values, ["max", "min"], [1, 1], values.min(axis=0), values.max(axis=0))
    assert scores.tolist() == pytest.approx([1.0, 0.5 + 2 / 3, 1.0])


def test_weighted_sum_agrees_on_single_objective_problems():
    for seed in seeds(200):
        db, slo, _ = corpus_case(seed)
        if len(slo["tasks"]) > 1:
            continue  # multi-DNN problems decompose per task, so agreement is not expected
        single = dict(slo, objectives=slo["objectives"][:1], constraints=[])
        sol = solve_full(compile_problem(db, parse_slo_spec(single)))
        res = run_baseline(Baseline(WEIGHTED_SUM), sol)
        assert isinstance(res, Choice)
        best = sol.designs.ranked[0]
        assert res.opt == best.score.opt, seed
        col = sol.problem.columns[0].metric
        assert evaluate_metric(res.x, col, sol.problem) == evaluate_metric(best.x, col, sol.problem)


def test_transferred_to_device_without_the_engine():
    spec = SynthSpec(n_models=3, engines=("DSP",), device_name="dsp-phone")
    source = synth_profiles(1, spec)
    target = synth_profiles(1, SynthSpec(n_models=3, engines=("CPU", "GPU"), device_name="plain-phone"))
    slo = parse_slo_spec({"objectives": [{"metric": "L"}, {"metric": "A"}]})
    sol = solve_full(compile_problem(target, slo))
    res = run_baseline(Baseline(TRANSFERRED, source), sol)
    assert isinstance(res, Infeasible) and res.code == NOT_APPLICABLE


def test_transferred_replays_source_winner_per_state():
    target = load_fixture("uc1-a71")
    source = load_fixture("uc1-s20")
    sol = solve_full(compile_problem(target, load_slo("uc1")))
    report = compare(sol, [Baseline(TRANSFERRED, source)], per_state=True)
    rows = {r.state: r for r in report.rows}
    assert rows["DSP"].status == NOT_APPLICABLE
    # the overall pick is the source's own best design, independent of the target's numbers
    src_best = solve_full(compile_problem(source, load_slo("uc1"))).designs.ranked[0].x
    assert rows["all"].choice == src_best.label


def test_multi_unaware_ignores_contention():
    models, records = [], []
    for task in ("t0", "t1"):
        mid = f"{task}-net"
        models.append({"id": mid, "architecture": mid, "task_id": task, "input_size": "224",
                       "precision": "FP32", "size_mb": 4.0, "flops": 1e9, "params": 1e6, "accuracy": 70})
        for engine, lat in (("GPU", 10.0), ("CPU", 12.0)):
            records.append({"model_id": mid, "hw": {"engine": engine}, "latency_samples": [lat],
                            "memory_mb": 10.0})
    db = loads_profiles(json.dumps({"device": "d", "engines": ["CPU", "GPU"], "models": models,
                                    "measurements": records}))
    slo = parse_slo_spec({"tasks": ["t0", "t1"], "objectives": [{"metric": "L", "statistic": "avg"}]})
    sol = solve_full(compile_problem(db, slo))
    res = run_baseline(Baseline(MULTI_UNAWARE), sol)
    # each task alone prefers the GPU; together they contend for it
    assert res.x.signature == ("GPU", "GPU")
    assert evaluate_metric(res.x, MetricId("NTT", None, 0), sol.problem) == pytest.approx(2.0)
    assert set(sol.designs.ranked[0].x.signature) == {"CPU", "GPU"}
    assert res.opt < sol.designs.ranked[0].score.opt


def test_infeasible_baseline_is_reported():
    sol = solve_full(compile_problem(load_fixture("uc4-p7"), load_slo("uc4")))
    report = compare(sol, [Baseline(MULTI_UNAWARE)])
    (row,) = report.rows
    assert row.status == VIOLATES and row.ratio is None and "L[0]" in row.reason
    assert report.feasible() == []


def test_dominance_on_corpus():
    ids = [s for s in seeds(400) if corpus_solution(s) is not None]
    infeasible = 0
    for seed in ids:
        sol = corpus_solution(seed)
        source_db = corpus_case(seed + 1)[0]
        baselines = [Baseline(k) for k in (BEST_ACCURACY, BEST_SIZE, MULTI_UNAWARE, WEIGHTED_SUM)]
        baselines.append(Baseline(TRANSFERRED, source_db))
        report = compare(sol, baselines, per_state=seed % 5 == 0)
        for row in report.rows:
            if row.status == "ok":
                assert row.ratio >= 1.0, (seed, row)
            else:
                infeasible += 1
                assert row.ratio is None and row.reason
    assert infeasible > 0


@pytest.mark.parametrize("fixture, uc, sources, per_state", [
    ("uc1-s20", "uc1", ["uc1-a71", "uc1-p7"], True),
    ("uc2-s20", "uc2", [], True),
    ("uc3-a71", "uc3", [], True),
    ("uc4-p7", "uc4", [], False),
])
def test_fixture_reports_match_golden(fixture, uc, sources, per_state):
    sol = solve_full(compile_problem(load_fixture(fixture), load_slo(uc)))
    baselines = [Baseline(k) for k in (BEST_ACCURACY, BEST_SIZE, MULTI_UNAWARE, WEIGHTED_SUM)]
    baselines += [Baseline(TRANSFERRED, load_fixture(s)) for s in sources]
    report = compare(sol, baselines, per_state=per_state)
    assert all(r.ratio >= 1.0 for r in report.feasible())
    check_golden(f"compare-{fixture}.tsv", report_to_tsv(report))
