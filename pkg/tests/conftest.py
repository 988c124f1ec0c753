import json

import numpy as np
import pytest

from taxelsim import mesh as meshlib
from taxelsim.fem import MaterialParams

DIMS = (0.040, 0.024, 0.010)


def tiny_config(**overrides):
    """A config small enough for end-to-end tests in a few seconds."""
    cfg = {
        "name": "tiny",
        "seed": 3,
        "mesh": {"dims": list(DIMS), "resolution": [8, 5, 2]},
        "scenarios": {
            "indenters": [{"shape": "sphere", "dims": {"radius": 0.004}},
                          {"shape": "flat_round", "dims": {"radius": 0.003}}],
            "locations": [[0.0, 0.0], [-0.006, 0.002], [0.006, -0.002]],
            "trajectories": [
                {"profile": "press_hold_release", "depth_max": 0.0015, "speed": 0.005, "hold": 0.2,
                 "frame_rate": 30.0}
            ],
        },
        "train": {"max_epochs": 20},
        "eval": {"test_fraction": 0.34},
        "render": {"width": 16, "height": 8},
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture
def tiny_config_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config()))
    return path


@pytest.fixture(scope="session")
def small_mesh():
    return meshlib.generate_box_mesh(DIMS, (8, 5, 2))


@pytest.fixture(scope="session")
def small_node_sets(small_mesh):
    return meshlib.classify_nodes(small_mesh, meshlib.taxel_grid(DIMS), 0.004)


@pytest.fixture
def material():
    return MaterialParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Call with (number, passed, detail); prints the line and keeps it for the summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
