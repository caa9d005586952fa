import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subaction_rl.library import library_from_dict, sample_library  # noqa: E402


@pytest.fixture(scope="session")
def lib():
    return sample_library()


JUMP = {
    "name": "jump",
    "phases": [
        {"id": "preparation", "order": 0,
         "descriptions": ["knee flexion", "weight shift", "arm positioning", "stance adjustment"]},
        {"id": "loading", "order": 1,
         "descriptions": ["deep crouch", "muscle loading", "energy storage", "countermovement"]},
        {"id": "propulsion", "order": 2,
         "descriptions": ["explosive extension", "ground contact", "force generation", "takeoff initiation"]},
        {"id": "flight", "order": 3,
         "descriptions": ["airborne", "body alignment", "trajectory", "landing preparation"]},
    ],
}


@pytest.fixture
def jump_doc():
    import copy
    return {"version": 1, "actions": [copy.deepcopy(JUMP)]}


@pytest.fixture
def jump_lib(jump_doc):
    return library_from_dict(jump_doc)


# acceptance results, filled in by test_acceptance.py and printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
