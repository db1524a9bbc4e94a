import warnings

import numpy as np
import pytest

from pdpum.materials import REFERENCE_MATERIAL, Material

warnings.filterwarnings("ignore", message=".*TBB.*")

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def material() -> Material:
    return Material(**REFERENCE_MATERIAL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k[1:].split("-")[0].split("(")[0]), k)):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:<8s} {'PASS' if ok else 'FAIL'}  {msg}")
