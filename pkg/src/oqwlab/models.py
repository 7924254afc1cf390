"""Ready-made vertex classes used by the examples, configs and tests."""
from __future__ import annotations

import numpy as np

from oqwlab.core import VertexClass, direction_vector, TransitionRule

ALPHA = 0.81

# direction indices on Z^2: 1 = right (+x), 2 = up (+y), 3 = left (-x), 4 = down (-y)
RIGHT, UP, LEFT, DOWN = 1, 2, 3, 4


def ketbra(i: int, j: int, dim: int = 4) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


def coin_flip_class(label: str = "coin") -> VertexClass:
    """Classical symmetric walk on Z with a trivial one-dimensional internal space."""
    h = np.sqrt(0.5) * np.eye(1)
    return VertexClass.from_directions(label, 1, {1: [h], 2: [h]})


def damp_drift_class(label: str = "drift") -> VertexClass:
    """Qubit walk on Z: ``|0>`` steps right and stays, ``|1>`` steps left into ``|0>``."""
    return VertexClass.from_directions(
        label, 1, {1: [ketbra(0, 0, 2)], 2: [ketbra(0, 1, 2)]}
    )


def example_class_a(alpha: float = ALPHA, label: str = "A") -> VertexClass:
    a, b, h = np.sqrt(alpha), np.sqrt(1 - alpha), np.sqrt(0.5)
    return VertexClass.from_directions(label, 2, {
        RIGHT: [h * ketbra(1, 1), h * ketbra(3, 1)],
        UP: [a * ketbra(0, 0), b * ketbra(1, 0)],
        LEFT: [h * ketbra(3, 3), h * ketbra(0, 3)],
        DOWN: [a * ketbra(3, 2), b * ketbra(2, 2)],
    })


def example_class_b(alpha: float = ALPHA, label: str = "B") -> VertexClass:
    a, b, h = np.sqrt(alpha), np.sqrt(1 - alpha), np.sqrt(0.5)
    return VertexClass.from_directions(label, 2, {
        RIGHT: [h * ketbra(0, 1), h * ketbra(2, 1)],
        UP: [a * ketbra(1, 0), b * ketbra(3, 0)],
        LEFT: [h * ketbra(0, 3), h * ketbra(2, 3)],
        DOWN: [a * ketbra(1, 2), b * ketbra(3, 2)],
    })


CHECKERBOARD = (("A", "B"), ("B", "A"))


def random_isometry_blocks(dim: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``count`` Kraus operators of a Haar-random Stinespring isometry."""
    g = rng.normal(size=(count * dim, dim)) + 1j * rng.normal(size=(count * dim, dim))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return [q[i * dim:(i + 1) * dim] for i in range(count)]


def random_class(
    dim: int, d: int, rng: np.random.Generator, per_direction: int = 1, label: str = "R"
) -> VertexClass:
    """Random complete class with ``per_direction`` Kraus operators on each unit step."""
    ops = random_isometry_blocks(dim, 2 * d * per_direction, rng)
    rules = [
        TransitionRule(direction_vector(j, d), tuple(ops[(j - 1) * per_direction:j * per_direction]))
        for j in range(1, 2 * d + 1)
    ]
    return VertexClass(label, tuple(rules))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state ``G G^dag / Tr`` with Ginibre ``G``."""
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real
