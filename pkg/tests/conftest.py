from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dirbundle.core import DirectionSet, dedup_directions  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def great_circle(normal, count: int = 3600) -> np.ndarray:
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.cross(n, [0.3, 0.5, 0.7])
    a /= np.linalg.norm(a)
    b = np.cross(n, a)
    th = np.linspace(0, 2 * math.pi, count, endpoint=False)
    return np.cos(th)[:, None] * a + np.sin(th)[:, None] * b


def circle_link(normals, alpha: float = math.radians(1.0), count: int = 3600) -> DirectionSet:
    raw = np.concatenate([great_circle(n, count) for n in normals])
    return dedup_directions(raw, alpha)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
