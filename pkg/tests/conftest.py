from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from reachgrasp import configure_threads  # noqa: E402
from reachgrasp.body.skeleton import default_skeleton  # noqa: E402
from reachgrasp.geometry.mesh import TriMesh, centered_box  # noqa: E402
from reachgrasp.scene import build_scene  # noqa: E402

os.environ.setdefault("REACHGRASP_THREADS", "1")
configure_threads()

settings.register_profile("ci", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def skel():
    return default_skeleton()


@pytest.fixture(scope="session")
def unit_cube() -> TriMesh:
    return centered_box((1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def table_scene():
    return build_scene("table", 0.75)[0]


@pytest.fixture(scope="session")
def low_table_scene():
    return build_scene("table", 0.45)[0]


def random_soup(rng, n_tris: int, spread: float = 1.0) -> TriMesh:
    """Unconnected random triangles (non-degenerate)."""
    centers = rng.uniform(-spread, spread, size=(n_tris, 1, 3))
    corners = centers + rng.normal(scale=0.25, size=(n_tris, 3, 3))
    return TriMesh(corners.reshape(-1, 3), np.arange(3 * n_tris).reshape(-1, 3))


def random_unit(rng, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ------------------------------------------------------------------ acceptance summary

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one summary line per acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
