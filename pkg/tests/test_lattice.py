import subprocess
import sys

import numpy as np
import pytest

from oqwlab.errors import ValidationError
from oqwlab.lattice import (
    ClassField, ball_coords, class_at, estimate_densities, regularity_report,
)


def test_checkerboard_lookup(checkerboard):
    assert class_at(checkerboard, (0, 0)) == "A"
    assert class_at(checkerboard, (1, 0)) == "B"
    assert class_at(checkerboard, (0, 1)) == "B"
    assert class_at(checkerboard, (-1, -1)) == "A"
    with pytest.raises(ValidationError):
        class_at(checkerboard, (0,))


def test_periodic_consistency(rng):
    tile = np.array([["A", "B", "C"], ["C", "C", "A"]], dtype=object)
    f = ClassField.periodic(tile)
    X = rng.integers(-1000, 1000, size=(200, 2))
    k = rng.integers(-5, 5, size=(200, 2))
    assert np.array_equal(f.codes(X), f.codes(X + k * np.array(f.period)))
    assert [f.class_at(x) for x in X[:20]] == [tile[x[0] % 2, x[1] % 3] for x in X[:20]]


def test_random_field_degenerate_probability():
    f = ClassField.random({"A": 1.0, "B": 0.0}, seed=3, d=2)
    assert set(f.codes(ball_coords((0, 0), 20)).tolist()) == {0}


def test_random_field_rejects_bad_probabilities():
    with pytest.raises(ValidationError):
        ClassField.random({"A": 0.7, "B": 0.4}, seed=1, d=2)
    with pytest.raises(ValidationError):
        ClassField.random({"A": -0.1, "B": 1.1}, seed=1, d=2)


def test_random_field_scalar_matches_vector():
    f = ClassField.random({"A": 0.3, "B": 0.5, "C": 0.2}, seed=11, d=3)
    X = ball_coords((4, -2, 9), 3)
    labels = np.array(f.labels)[f.codes(X)]
    assert labels.tolist() == [f.class_at(x) for x in X]


def test_random_field_across_processes():
    code = (
        "import hashlib, numpy as np\n"
        "from oqwlab.lattice import ClassField, ball_coords\n"
        "f = ClassField.random({'A': 0.5, 'B': 0.5}, seed=2024, d=2)\n"
        "print(hashlib.sha256(f.codes(ball_coords((0, 0), 500)).tobytes()).hexdigest())\n"
    )
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
            for _ in range(2)]
    assert runs[0] == runs[1] and len(runs[0].strip()) == 64


def test_random_field_marginals():
    f = ClassField.random({"A": 0.5, "B": 0.5}, seed=77, d=2)
    dens = estimate_densities(f, (0, 0), 500)
    n = 1001 ** 2
    assert abs(dens["A"] - 0.5) <= 3 * np.sqrt(0.25 / n)
    g = ClassField.random({"A": 0.2, "B": 0.8}, seed=5, d=2)
    dens = estimate_densities(g, (3000, -7000), 500)
    assert abs(dens["A"] - 0.2) <= 4 * np.sqrt(0.16 / n)


def test_checkerboard_densities(checkerboard, rng):
    for c in rng.integers(-50, 50, size=(10, 2)):
        assert estimate_densities(checkerboard, c, 1)["A"] in (4 / 9, 5 / 9)
    assert estimate_densities(ClassField.uniform("A", 2), (3, 3), 4) == {"A": 1.0}
    with pytest.raises(ValueError):
        estimate_densities(checkerboard, (0, 0), 0)


def test_regularity_checkerboard(checkerboard):
    rep = regularity_report(checkerboard, 0.12, 1)
    assert rep.passed
    assert rep.max_distance == pytest.approx(1 / 9)


def test_regularity_uniform():
    rep = regularity_report(ClassField.uniform("A", 2), 1e-6, 3)
    assert rep.passed and rep.max_distance == 0


def test_regularity_striped_fails():
    striped = ClassField.from_function(("A", "B"), 2, lambda X: (X[:, 0] >= 0).astype(np.int64))
    rep = regularity_report(striped, 0.2, 2, sample_windows=32, seed=1)
    assert not rep.passed
    assert rep.max_distance == pytest.approx(1.0)


def test_regularity_random_field():
    f = ClassField.random({"A": 0.5, "B": 0.5}, seed=9, d=2)
    rep = regularity_report(f, 0.1, 30, sample_windows=16, seed=2)
    assert rep.passed


def test_config_round_trip():
    f = ClassField.random({"A": 0.5, "B": 0.5}, seed=9, d=2)
    assert f.to_config() == {"kind": "random", "seed": 9, "probabilities": {"A": 0.5, "B": 0.5}}
    tile = [["A", "B"], ["B", "A"]]
    assert ClassField.periodic(tile).to_config() == {"kind": "periodic", "tile": tile}
