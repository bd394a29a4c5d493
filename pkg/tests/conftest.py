import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sstlens.psl import load_snapshot
from sstlens.templates import load_registry


@pytest.fixture(scope="session")
def psl():
    return load_snapshot()


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture(scope="session")
def encoded_endpoints():
    path = Path(__file__).parent / "data" / "encoded_endpoints.json"
    return json.loads(path.read_text())
