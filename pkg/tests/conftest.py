import math
from pathlib import Path

import numpy as np
import pytest

from rigidlab.ifs import CIFS
from rigidlab.kleinian import schottky_from_circles
from rigidlab.mobius import compose, make_similarity, make_sphere_inversion
from rigidlab.regions import Ball, Box, sphere_image

FIXTURES = Path(__file__).parent / "fixtures"


def cantor_system() -> CIFS:
    return CIFS([make_similarity(1 / 3, None, [0.0]), make_similarity(1 / 3, None, [2 / 3])],
                Box([0.0], [1.0]), name="cantor")


def sierpinski_system() -> CIFS:
    h = math.sqrt(3) / 2
    maps = [make_similarity(0.5, None, t) for t in ([0, 0], [0.5, 0], [0.25, h / 2])]
    return CIFS(maps, Box([0, 0], [1, h]), name="sierpinski")


def four_corner_system() -> CIFS:
    maps = [make_similarity(0.25, None, t) for t in ([0, 0], [0.75, 0], [0, 0.75], [0.75, 0.75])]
    return CIFS(maps, Box([0, 0], [1, 1]), name="four-corner")


def two_pair_group(r: float, c: float = 2.0):
    """Two circle pairings on circles of radius r centered at ±c e1, ±c e2."""
    return schottky_from_circles([(([-c, 0], r), ([c, 0], r)), (([0, -c], r), ([0, c], r))])


def inversion_conjugator():
    return make_sphere_inversion([0.0, 1.0], math.sqrt(2.0))


def circle_mobius_system() -> CIFS:
    """Three maps x/4 + b e1 on a small ball, conjugated by an inversion.

    The limit set is a Cantor set on the image circle of the x-axis and has
    dimension log 3 / log 4.
    """
    h = inversion_conjugator()
    maps = [compose(h, make_similarity(0.25, None, [b, 0.0]), h) for b in (-0.075, 0.0, 0.075)]
    seed = sphere_image(h, Ball([0.0, 0.0], 0.12))
    return CIFS(maps, seed, name="circle-mobius")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(label: str, passed: bool, detail: str, seconds: float) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail} ({seconds:.2f} s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
