import pytest

from peftbench.data import fixture_path, load_pairs, load_tasks


@pytest.fixture(scope="session")
def pairs20():
    return load_pairs(fixture_path("pairs20.jsonl"))


@pytest.fixture(scope="session")
def tasks16():
    return load_tasks(fixture_path("tasks16.jsonl"))


@pytest.fixture(scope="session")
def pairs20_path():
    return str(fixture_path("pairs20.jsonl"))


@pytest.fixture(scope="session")
def tasks16_path():
    return str(fixture_path("tasks16.jsonl"))
