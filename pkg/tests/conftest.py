import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from superseg.synth import export_scene, generate_scene, room8_spec  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_room(seed=0, **kw):
    """A cheap room-8 variant: sparse points, few low-resolution cameras."""
    kw = {"points_per_m2": 500.0, "n_cameras": 6, "width": 160, "height": 120, **kw}
    return generate_scene(room8_spec(seed, **kw))


@pytest.fixture(scope="session")
def room_scene():
    return small_room(0)


@pytest.fixture(scope="session")
def room_dir(tmp_path_factory, room_scene):
    d = tmp_path_factory.mktemp("room")
    export_scene(room_scene, d)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
