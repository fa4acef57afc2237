import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from podforge.synthetic import demo_background_pool, demo_pod_pool, write_demo_pools  # noqa: E402


@pytest.fixture(scope="session")
def pods():
    return demo_pod_pool()


@pytest.fixture(scope="session")
def small_backgrounds():
    return demo_background_pool(canvas=(256, 256), count=3)


@pytest.fixture(scope="session")
def full_backgrounds():
    return demo_background_pool(canvas=(1024, 1024), count=4)


@pytest.fixture(scope="session")
def small_pools_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pools")
    write_demo_pools(root, canvas=(256, 256), backgrounds=3)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Filled by the acceptance suite; printed after the run.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(line)
