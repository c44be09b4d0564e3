import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iotdos.config import load_config_file  # noqa: E402
from iotdos.pipeline import bundled_config  # noqa: E402


@pytest.fixture(scope="session")
def table1():
    return load_config_file(bundled_config("table1.cfg"))


@pytest.fixture(scope="session")
def table1_attack():
    return load_config_file(bundled_config("table1_attack.cfg"))


@pytest.fixture(scope="session")
def table1_text():
    return Path(bundled_config("table1.cfg")).read_text()
