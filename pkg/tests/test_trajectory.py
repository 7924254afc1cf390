import numpy as np
import pytest
from scipy import stats as st

from oqwlab._backend import available
from oqwlab.core import DensityOperator, TransitionRule, VertexClass
from oqwlab.errors import ProbabilityError, ValidationError
from oqwlab.lattice import ClassField
from oqwlab.models import random_density
from oqwlab.rng import RngStream
from oqwlab.trajectory import (
    Thresholds, WalkerState, clt_report, endpoint_statistics, lattice_ks, monte_carlo, run_trajectory,
    sample_step, simulate_endpoints, step_probabilities, write_endpoints,
)

BACKENDS = available()


def test_step_probabilities(coin, drift, class_a, rng):
    assert step_probabilities(coin, np.eye(1)) == pytest.approx([0.5, 0.5])
    rho = random_density(2, rng)
    assert step_probabilities(drift, rho) == pytest.approx([rho[0, 0].real, rho[1, 1].real])
    p = step_probabilities(class_a, np.eye(4) / 4)
    assert len(p) == 8 and abs(p.sum() - 1) <= 1e-12
    assert p == pytest.approx(np.array([0.5, 0.5, 0.81, 0.19, 0.5, 0.5, 0.81, 0.19]) / 4)


def test_damp_drift_step_collapses(drift, rng):
    state = WalkerState(DensityOperator(random_density(2, rng)), (0,))
    for i in range(5):
        out = sample_step(state, drift, RngStream(3, i))
        assert np.allclose(out.state.rho.mat, np.diag([1, 0]))
        assert out.displacement in ((1,), (-1,))
        assert out.state.X == out.displacement and out.state.step == 1


def test_branch_choice_follows_uniform(coin):
    state = WalkerState(DensityOperator(np.eye(1)), (0,))
    for i in range(50):
        stream = RngStream(11, i)
        out = sample_step(state, coin, stream)
        assert out.displacement == ((1,) if stream.uniform(0) < 0.5 else (-1,))


def test_probability_errors():
    bad = VertexClass("X", (TransitionRule((1,), (np.eye(1),)), TransitionRule((-1,), (0.1 * np.eye(1),))))
    state = WalkerState(DensityOperator(np.eye(1)), (0,))
    with pytest.raises(ProbabilityError):
        sample_step(state, bad, RngStream(0, 0))
    dead = VertexClass("Z", (TransitionRule((1,), (np.diag([0.0, 1.0]),)),))
    with pytest.raises(ProbabilityError):
        sample_step(WalkerState(DensityOperator(np.diag([1.0, 0.0])), (0,)), dead, RngStream(0, 0))
    # deviations within 1e-9 are renormalized
    s = np.sqrt((1 + 5e-10) / 2)
    loose = VertexClass("L", (TransitionRule((1,), (s * np.eye(1),)), TransitionRule((-1,), (s * np.eye(1),))))
    sample_step(state, loose, RngStream(0, 0))


def test_damp_drift_trajectory(drift, line):
    for i in range(5):
        end = run_trajectory(line, {"A": drift}, np.diag([1.0, 0]), (0,), 100, RngStream(1, i))
        assert end.X == (100,)


def test_long_trajectory_keeps_valid_states(ab_classes, rng):
    field = ClassField.random({"A": 0.5, "B": 0.5}, seed=3, d=2)
    # every step re-validates the state through DensityOperator
    end = run_trajectory(field, ab_classes, random_density(4, rng), (0, 0), 1000, RngStream(5, 0))
    assert end.step == 1000
    assert abs(np.trace(end.rho.mat) - 1) <= 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_kernels_match_reference(ab_classes, checkerboard, backend, rng):
    random_field = ClassField.random({"A": 0.5, "B": 0.5}, seed=12, d=2)
    rho0 = random_density(4, rng)
    for field in (checkerboard, random_field):
        X = simulate_endpoints(field, ab_classes, rho0, (2, -1), 60, 40, seed=99, backend=backend)
        ref = [run_trajectory(field, ab_classes, rho0, (2, -1), 60, RngStream(99, i)).X for i in range(40)]
        assert X.tolist() == [list(x) for x in ref]


def test_determinism_threads_and_subsets(ab_classes, checkerboard):
    rho0 = np.eye(4) / 4
    one = simulate_endpoints(checkerboard, ab_classes, rho0, (0, 0), 50, 3000, seed=4, threads=1)
    many = simulate_endpoints(checkerboard, ab_classes, rho0, (0, 0), 50, 3000, seed=4, threads=3)
    assert np.array_equal(one, many)
    part = simulate_endpoints(checkerboard, ab_classes, rho0, (0, 0), 50, 100, seed=4, first_index=1000)
    assert np.array_equal(part, one[1000:1100])


def test_kernel_probability_error():
    bad = VertexClass("A", (TransitionRule((1,), (np.eye(1),)), TransitionRule((-1,), (0.1 * np.eye(1),))))
    for backend in BACKENDS:
        with pytest.raises(ProbabilityError):
            simulate_endpoints(ClassField.uniform("A", 1), {"A": bad}, np.eye(1), (0,), 5, 10, 0, backend=backend)


def test_lattice_ks():
    rng = np.random.default_rng(0)
    # symmetric walk endpoints: spacing 2 lattice
    x = 2 * rng.binomial(400, 0.5, size=10_000) - 400
    assert lattice_ks(x) < 0.02
    # a two-point mixture is far from Gaussian
    y = np.where(rng.random(10_000) < 0.5, -20, 20) + rng.integers(-1, 2, 10_000)
    assert lattice_ks(y) > 0.1
    assert np.isnan(lattice_ks(np.full(10, 3)))


def test_lattice_ks_matches_scipy_for_fine_lattice():
    rng = np.random.default_rng(1)
    x = np.round(rng.normal(0, 300, 5000)).astype(np.int64)
    ours = lattice_ks(x)
    ref = st.kstest(x, "norm", args=(x.mean(), x.std(ddof=1))).statistic
    assert abs(ours - ref) < 0.01


def test_endpoint_statistics_moments():
    rng = np.random.default_rng(2)
    X = rng.integers(-50, 50, size=(5000, 2))
    s = endpoint_statistics(X, 100)
    assert np.allclose(s.cov, s.cov.T)
    assert np.linalg.eigvalsh(s.cov).min() >= -1e-9
    assert s.mean == pytest.approx(X.mean(axis=0))
    assert s.skewness[0] == pytest.approx(st.skew(X[:, 0]))
    assert s.normalized_cov == pytest.approx(s.cov / 100)
    with pytest.raises(ValidationError):
        endpoint_statistics(X[:1], 100)


def test_clt_report_degenerate(drift, line):
    s = monte_carlo(line, {"A": drift}, np.diag([1.0, 0]), (0,), 50, 100, seed=0)
    assert s.mean == pytest.approx([50]) and s.cov[0, 0] == 0
    rep = clt_report(s, [1.0])
    assert rep.passed and rep.verdict == "degenerate Gaussian"
    assert all(c.skipped for c in rep.checks if c.name != "drift")
    assert not clt_report(s, [0.9]).passed


def test_clt_report_coin(coin, line):
    s = monte_carlo(line, {"A": coin}, np.eye(1), (0,), 400, 4000, seed=8)
    rep = clt_report(s, [0.0])
    assert rep.verdict == "Gaussian" and rep.passed
    d = rep.to_dict()
    assert d["passed"] and len(d["checks"]) == 4


def test_thresholds():
    assert Thresholds.from_dict({"z": 3}).z == 3.0
    with pytest.raises(ValidationError):
        Thresholds.from_dict({"zz": 3})


def test_monte_carlo_needs_two(coin, line):
    with pytest.raises(ValidationError):
        monte_carlo(line, {"A": coin}, np.eye(1), (0,), 10, 1, seed=0)


def test_write_endpoints(tmp_path):
    write_endpoints(tmp_path / "e.csv", np.array([[1, -2], [3, 4]]))
    assert (tmp_path / "e.csv").read_text().splitlines() == ["index,x0,x1", "0,1,-2", "1,3,4"]
