import sys

import numpy as np
import pytest

from galms import algebra as ga


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mv(rng):
    return ga.Multivector(rng.normal(size=8))


def random_vector(rng):
    return ga.vector(*rng.normal(size=3))


def random_rotor(rng):
    return ga.rotor_normalize(ga.rotor(*rng.normal(size=4)))


def random_unit_bivector(rng):
    b = rng.normal(size=3)
    b /= np.linalg.norm(b)
    return ga.Multivector([0, 0, 0, 0, *b, 0])


def rel_err(a, b):
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
