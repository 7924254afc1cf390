import numpy as np
import pytest

from oqwlab.lattice import ClassField
from oqwlab.models import (
    ALPHA, CHECKERBOARD, coin_flip_class, damp_drift_class, example_class_a, example_class_b,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def class_a():
    return example_class_a(ALPHA)


@pytest.fixture(scope="session")
def class_b():
    return example_class_b(ALPHA)


@pytest.fixture(scope="session")
def ab_classes(class_a, class_b):
    return {"A": class_a, "B": class_b}


@pytest.fixture(scope="session")
def checkerboard():
    return ClassField.periodic(CHECKERBOARD)


@pytest.fixture(scope="session")
def coin():
    return coin_flip_class("A")


@pytest.fixture(scope="session")
def drift():
    return damp_drift_class("A")


@pytest.fixture(scope="session")
def line():
    return ClassField.uniform("A", 1)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record (and print) one pass/fail line for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
