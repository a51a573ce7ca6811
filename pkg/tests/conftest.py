import numpy as np
import pytest

from extcrlb.scene import make_scene
from extcrlb.waveform import WaveformSpec

CHIRP_RATE = 2.56e9
DURATION = 5e-5
TAU = 2e-4
GAMMA = 1 / 1.06
DELTA = 6.25e-8

_acceptance_lines = []


def record_acceptance(line: str) -> None:
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def chirp():
    return WaveformSpec.chirp(CHIRP_RATE, DURATION)


@pytest.fixture(scope="session")
def gaussian():
    return WaveformSpec.gaussian(DURATION / 12, DURATION)


@pytest.fixture(scope="session")
def scene_factory(chirp):
    cache = {}

    def build(P, x=None, spec=None):
        spec = spec or chirp
        key = (P, None if x is None else tuple(np.asarray(x, dtype=complex)), id(spec))
        if key not in cache:
            cache[key] = make_scene(spec, TAU, GAMMA, DELTA, np.ones(P) if x is None else x)
        return cache[key]

    return build
