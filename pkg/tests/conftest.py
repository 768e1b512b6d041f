from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cyberasm import build_model, load_ci  # noqa: E402
from cyberasm.fixtures import data_path, load_fixture  # noqa: E402


@pytest.fixture(scope="session")
def small_doc():
    return load_fixture("feeder_small.netjson")


@pytest.fixture(scope="session")
def small_ci():
    return load_ci(data_path("feeder_small.netjson"))


@pytest.fixture(scope="session")
def medium_ci():
    return load_ci(data_path("feeder_medium.netjson"))


@pytest.fixture(scope="session")
def small_model(small_ci):
    return build_model(small_ci, "builtin")


@pytest.fixture(scope="session")
def medium_model(medium_ci):
    return build_model(medium_ci, "builtin")
