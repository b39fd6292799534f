import copy
import json

import pytest
from hypothesis import given, settings, strategies as st

from slodeploy.errors import ParseError, SchemaError
from slodeploy.fixtures import load_fixture
from slodeploy.profiles import (
    HardwareConfig,
    SynthSpec,
    dumps_profiles,
    latency_cv,
    load_profiles,
    loads_profiles,
    profiles_to_dict,
    synth_profiles,
    validate_profiles,
    write_profiles,
)


def minimal_doc():
    return {
        "device": "dev",
        "engines": ["CPU", "GPU"],
        "models": [{
            "id": "m1", "architecture": "net", "task_id": "cls", "input_size": "224x224",
            "precision": "FP32", "size_mb": 4.0, "flops": 1e9, "params": 1e6, "accuracy": 70.0,
        }],
        "measurements": [
            {"model_id": "m1", "hw": {"engine": "CPU", "options": {"threads": 4}},
             "latency_samples": [10.0, 11.0, 12.0], "memory_mb": 30.0},
            {"model_id": "m1", "hw": {"engine": "GPU"},
             "latency_samples": [5.0, 5.5], "memory_mb": 60.0},
        ],
    }


def test_imagenet_fixture_carries_published_metadata():
    db = load_fixture("uc1-s20")
    mnv2 = db.model("mobilenet-v2-1.0-fp32")
    assert mnv2.accuracy == pytest.approx(71.92)
    assert mnv2.flops == pytest.approx(0.60e9)
    assert mnv2.params == pytest.approx(3.49e6)
    assert len({m.architecture for m in db.models}) == 8


def test_empty_models_rejected():
    doc = minimal_doc()
    doc["models"] = []
    with pytest.raises(SchemaError):
        loads_profiles(json.dumps(doc))


def test_dangling_model_reference_names_the_id():
    doc = minimal_doc()
    doc["measurements"][0]["model_id"] = "ghost"
    with pytest.raises(SchemaError, match="ghost"):
        loads_profiles(json.dumps(doc))


def test_unknown_engine_and_missing_field():
    doc = minimal_doc()
    doc["measurements"][1]["hw"]["engine"] = "TPU"
    with pytest.raises(SchemaError, match="TPU"):
        loads_profiles(json.dumps(doc))
    doc = minimal_doc()
    del doc["models"][0]["flops"]
    with pytest.raises(SchemaError, match="flops"):
        loads_profiles(json.dumps(doc))


def test_non_positive_metric_is_value_error():
    doc = minimal_doc()
    doc["measurements"][0]["latency_samples"] = [1.0, 0.0]
    with pytest.raises(ValueError):
        loads_profiles(json.dumps(doc))


def test_malformed_text_is_parse_error():
    with pytest.raises(ParseError):
        loads_profiles("{not json")


def test_file_round_trip(tmp_path):
    db = loads_profiles(json.dumps(minimal_doc()))
    path = tmp_path / "p.json"
    write_profiles(db, path)
    assert load_profiles(path) == db
    assert path.read_text() == dumps_profiles(load_profiles(path))


def test_hardware_encoding_is_canonical():
    a = HardwareConfig.of("CPU", xnnpack=True, threads=4)
    b = HardwareConfig("CPU", (("threads", 4), ("xnnpack", True)))
    assert a == b and hash(a) == hash(b)
    assert a.key == 'CPU{"threads":4,"xnnpack":true}'
    assert a.label == "CPU_4,T"
    assert HardwareConfig("GPU").key == "GPU"


def test_validate_clean_and_coverage_gap():
    db = loads_profiles(json.dumps(minimal_doc()))
    assert validate_profiles(db).clean
    doc = minimal_doc()
    doc["measurements"].pop()
    report = validate_profiles(loads_profiles(json.dumps(doc)))
    assert [(f.kind, f.model_id, f.engine) for f in report] == [("coverage_gap", "m1", "GPU")]


def test_high_variation_is_flagged():
    doc = minimal_doc()
    doc["measurements"][0]["latency_samples"] = [1, 100]
    report = validate_profiles(loads_profiles(json.dumps(doc)))
    assert [f.kind for f in report] == ["high_cv"]
    # population deviation 49.5 over mean 50.5
    assert latency_cv([1, 100]) == pytest.approx(49.5 / 50.5)


def test_validate_does_not_mutate():
    db = load_fixture("uc3-a71")
    before = profiles_to_dict(db)
    snapshot = copy.deepcopy(before)
    validate_profiles(db, cv_threshold=0.01)
    assert profiles_to_dict(db) == snapshot


def test_synth_example_counts_and_determinism():
    spec = SynthSpec(n_models=3, engines=("CPU", "GPU"))
    a = synth_profiles(7, spec)
    assert len(a.single_records) == 6
    assert dumps_profiles(a) == dumps_profiles(synth_profiles(7, spec))
    b = synth_profiles(8, spec)
    assert [r.latency_samples for r in a.single_records] != [r.latency_samples for r in b.single_records]


def test_synth_rejects_inconsistent_spec():
    with pytest.raises(ValueError):
        synth_profiles(1, SynthSpec(engines=()))
    with pytest.raises(ValueError):
        synth_profiles(1, SynthSpec(engine_options={"NPU": [{}]}))


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n_models=st.integers(1, 4),
    engines=st.lists(st.sampled_from(["CPU", "GPU", "NPU", "DSP"]), min_size=1, max_size=4, unique=True),
    n_tasks=st.integers(1, 3),
    joint=st.booleans(),
)
def test_synth_round_trips_and_validates(seed, n_models, engines, n_tasks, joint):
    spec = SynthSpec(n_models=n_models, engines=tuple(engines), n_tasks=n_tasks, n_samples=5, joint=joint)
    db = synth_profiles(seed, spec)
    assert loads_profiles(dumps_profiles(db)) == db
    assert validate_profiles(db).clean
    assert synth_profiles(seed, spec) == db
