import functools

import pytest

from droopgrid.config import preset_config
from droopgrid.equilibrium import find_equilibrium

PRESETS = ("rx-gg1", "rx-eq1", "rx-ll1")
KINDS = ("detailed", "em5", "conv3", "hf3")


@functools.lru_cache(maxsize=None)
def solved(preset, kind, k_p=6e-5, k_q=1.5e-4):
    return find_equilibrium(kind, preset_config(preset, k_p, k_q))


@pytest.fixture
def equilibrium_of():
    return solved


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
