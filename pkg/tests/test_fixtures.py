import pytest

from slodeploy.fixtures import PROFILES, data_dir, generate, load_fixture, load_slo, write_bundle
from slodeploy.problem import compile_problem
from slodeploy.profiles import dumps_profiles, validate_profiles


def test_bundle_is_reproducible(tmp_path):
    written = write_bundle(tmp_path)
    assert written
    for path in written:
        assert path.read_bytes() == (data_dir() / path.name).read_bytes(), path.name


@pytest.mark.parametrize("name", sorted(PROFILES))
def test_bundled_profile_matches_generator(name):
    assert load_fixture(name) == generate(name)
    assert dumps_profiles(load_fixture(name)) == (data_dir() / f"{name}.json").read_text()


@pytest.mark.parametrize("name, uc, size", [
    ("uc1-s20", "uc1", 340),
    ("uc2-s20", "uc2", 150),
    ("uc3-a71", "uc3", 3969),
    ("uc4-p7", "uc4", 27000),
])
def test_decision_space_sizes(name, uc, size):
    assert len(compile_problem(load_fixture(name), load_slo(uc)).space) == size


def test_fully_covered_devices_validate_clean():
    assert validate_profiles(load_fixture("uc1-s20")).clean
    gaps = validate_profiles(load_fixture("uc3-a71"))
    # float variants have no fixed-point accelerator measurement
    assert {f.kind for f in gaps} == {"coverage_gap"}
    assert {f.engine for f in gaps} <= {"NPU", "DSP"}


def test_unknown_fixture_name():
    with pytest.raises(KeyError):
        load_fixture("uc9-x")
