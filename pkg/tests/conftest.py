import json
import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def config_doc():
    with open(os.path.join(ROOT, "configs", "two_species.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def two_species(config_doc):
    from mixkinetic.mixture import mixture_from_dict
    return mixture_from_dict(config_doc)


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion and echo it."""
    def record(k: int, ok: bool, detail: str):
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[k] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
