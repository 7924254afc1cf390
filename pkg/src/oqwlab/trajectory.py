"""Quantum-trajectory Monte Carlo and the statistics behind the CLT checks.

A trajectory measures which Kraus branch fired at every step: branch
``(rule, k)`` of the current site's class is taken with probability
``Tr(K rho K^dag)``, the internal state collapses to ``K rho K^dag / p`` and
the walker moves by the rule's displacement.  Trajectory ``i`` of master
seed ``s`` consumes the counter-based variates ``stream_uniform(s, i, t)``,
so any subset of trajectories can be regenerated independently.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
from scipy import stats as _st

from oqwlab._backend import get_kernels
from oqwlab.analysis import SigmaEstimate
from oqwlab.core import DensityOperator, VertexClass, as_matrix, pack_classes
from oqwlab.errors import ProbabilityError, ValidationError
from oqwlab.lattice import ClassField
from oqwlab.rng import RngStream

PROB_TOL = 1e-9
DEGENERATE_VAR = 1e-12


@dataclass(frozen=True, eq=False)
class WalkerState:
    rho: DensityOperator
    X: tuple[int, ...]
    step: int = 0


class Step(NamedTuple):
    state: WalkerState
    displacement: tuple[int, ...]
    rule: int
    kraus: int


def step_probabilities(vclass: VertexClass, rho: np.ndarray) -> np.ndarray:
    """Branch probabilities as the kernels compute them: ``Re Tr(K^dag K rho)``."""
    gram = np.einsum("bji,bjk->bik", vclass.kraus_stack.conj(), vclass.kraus_stack)
    return np.einsum("bij,ji->b", gram, rho).real


def sample_step(state: WalkerState, vclass: VertexClass, stream: RngStream) -> Step:
    rho = state.rho.mat
    if rho.shape[0] != vclass.dim:
        raise ValidationError(f"state of dimension {rho.shape[0]} cannot enter class {vclass.label!r}")
    p = step_probabilities(vclass, rho)
    total = 0.0
    for v in p:
        total += v
    if total <= 0:
        raise ProbabilityError(f"all branch probabilities vanish in class {vclass.label!r}")
    if abs(total - 1.0) > PROB_TOL:
        raise ProbabilityError(f"branch probabilities of class {vclass.label!r} sum to {total!r}")
    target = stream.uniform(state.step) * total
    chosen, acc = -1, 0.0
    for b, v in enumerate(p):
        acc += v
        if target < acc:
            chosen = b
            break
    if chosen < 0:
        chosen = int(np.flatnonzero(p > 0)[-1])
    rule, k, K, disp = vclass.branches()[chosen]
    M = K @ rho @ K.conj().T
    tr = np.trace(M).real
    new_rho = DensityOperator((M + M.conj().T) / 2 / tr)
    X = tuple(int(x + dx) for x, dx in zip(state.X, disp))
    return Step(WalkerState(new_rho, X, state.step + 1), disp, rule, k)


def run_trajectory(field: ClassField, classes: Mapping[str, VertexClass], rho0, X0, n: int,
                   stream: RngStream) -> WalkerState:
    """Reference single-trajectory loop (slow; the batch kernels must agree with it)."""
    rho0 = rho0 if isinstance(rho0, DensityOperator) else DensityOperator(as_matrix(rho0))
    state = WalkerState(rho0, tuple(int(x) for x in X0), 0)
    for _ in range(n):
        state = sample_step(state, classes[field.class_at(state.X)], stream).state
    return state


def simulate_endpoints(field: ClassField, classes: Mapping[str, VertexClass], rho0, X0, n: int,
                       N: int, seed: int, threads: int = 1, backend: str | None = None,
                       first_index: int = 0) -> np.ndarray:
    """Positions ``X_n`` of trajectories ``first_index .. first_index + N - 1``."""
    packed = pack_classes(field.labels, dict(classes))
    spec = field.kernel_spec()
    rho0 = as_matrix(rho0)
    kernels = get_kernels(backend)
    indices = np.arange(first_index, first_index + N, dtype=np.int64)
    X, (status, index) = kernels.run_walkers(
        packed.kraus, packed.gram, packed.nbranch, packed.displacement,
        spec["kind"], spec["tile"], spec["period"], spec["cumulative"], spec["seed"],
        rho0, np.asarray(X0, dtype=np.int64), int(n), indices, int(seed), int(threads),
    )
    if status:
        what = "vanish" if status == 2 else "do not sum to 1"
        raise ProbabilityError(f"trajectory {index}: branch probabilities {what}")
    return X


def lattice_ks(x: np.ndarray) -> float:
    """KS distance between integer samples and a Gaussian fitted to them.

    The samples live on a lattice of spacing ``h`` (the gcd of their
    differences), so the reference CDF is evaluated with a half-spacing
    continuity correction at every lattice atom in range.
    """
    x = np.sort(np.asarray(x, dtype=np.int64))
    h = int(np.gcd.reduce(x - x[0]))
    sd = x.std(ddof=1)
    if h == 0 or sd == 0:
        return float("nan")
    atoms = np.arange(x[0] - h, x[-1] + 1, h)
    emp = np.searchsorted(x, atoms, side="right") / x.size
    ref = _st.norm.cdf((atoms + h / 2 - x.mean()) / sd)
    return float(np.max(np.abs(emp - ref)))


@dataclass(frozen=True, eq=False)
class TrajectoryStatistics:
    """Moments of ``X_n`` over ``N`` trajectories.

    Skewness, excess kurtosis and KS distance are those of the normalized
    ``(X_n - n m) / sqrt(n)``; all three are invariant under the centring and
    scaling, so they are computed from ``X_n`` directly.
    """

    N: int
    n: int
    mean: np.ndarray
    cov: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    ks: np.ndarray
    degenerate: np.ndarray
    endpoints: np.ndarray | None = field(default=None, repr=False)

    @property
    def normalized_cov(self) -> np.ndarray:
        """Covariance of ``X_n / sqrt(n)``."""
        return self.cov / self.n

    def to_dict(self) -> dict:
        nan_to_none = lambda a: [None if not np.isfinite(v) else float(v) for v in np.ravel(a)]
        return {
            "N": self.N, "n": self.n,
            "mean": self.mean.tolist(),
            "mean_per_step": (self.mean / self.n).tolist(),
            "covariance": self.cov.tolist(),
            "normalized_covariance": self.normalized_cov.tolist(),
            "skewness": nan_to_none(self.skewness),
            "excess_kurtosis": nan_to_none(self.excess_kurtosis),
            "ks": nan_to_none(self.ks),
            "degenerate": [bool(v) for v in self.degenerate],
        }


def endpoint_statistics(X: np.ndarray, n: int) -> TrajectoryStatistics:
    X = np.asarray(X, dtype=np.int64)
    N, d = X.shape
    if N < 2:
        raise ValidationError("need at least two trajectories")
    Xf = X.astype(float)
    cov = np.atleast_2d(np.cov(Xf, rowvar=False))
    degenerate = np.diag(cov) / max(n, 1) < DEGENERATE_VAR
    skew = np.full(d, np.nan)
    kurt = np.full(d, np.nan)
    ks = np.full(d, np.nan)
    for a in range(d):
        if degenerate[a]:
            continue
        skew[a] = _st.skew(Xf[:, a])
        kurt[a] = _st.kurtosis(Xf[:, a], fisher=True)
        ks[a] = lattice_ks(X[:, a])
    return TrajectoryStatistics(N, n, Xf.mean(axis=0), cov, skew, kurt, ks, degenerate, X)


def monte_carlo(field: ClassField, classes: Mapping[str, VertexClass], rho0, X0, n: int, N: int,
                seed: int, threads: int = 1, backend: str | None = None) -> TrajectoryStatistics:
    if N < 2:
        raise ValidationError("need at least two trajectories")
    X = simulate_endpoints(field, classes, rho0, X0, n, N, seed, threads, backend)
    return endpoint_statistics(X, n)


def empirical_sigma(stats: TrajectoryStatistics, l) -> SigmaEstimate:
    l = np.asarray(l, dtype=float)
    return SigmaEstimate(float(l @ stats.normalized_cov @ l), "empirical")


@dataclass(frozen=True)
class Thresholds:
    z: float = 4.0
    skewness: float = 0.1
    excess_kurtosis: float = 0.2
    ks: float = 0.02

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "Thresholds":
        d = dict(d or {})
        unknown = set(d) - {"z", "skewness", "excess_kurtosis", "ks"}
        if unknown:
            raise ValidationError(f"unknown threshold keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class Check:
    name: str
    component: int
    value: float | None
    bound: float
    passed: bool
    skipped: bool = False


@dataclass(frozen=True)
class CLTReport:
    checks: tuple[Check, ...]
    drift: tuple[float, ...]
    verdict: str

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "verdict": self.verdict,
            "expected_drift": list(self.drift),
            "checks": [c.__dict__ for c in self.checks],
        }


def clt_report(stats: TrajectoryStatistics, m, thresholds: Thresholds = Thresholds()) -> CLTReport:
    """Drift and Gaussianity gates for ``(X_n - n m) / sqrt(n)``.

    Components with (numerically) zero variance get the degenerate-Gaussian
    verdict: their drift must match exactly and the shape tests are skipped.
    """
    m = np.asarray(getattr(m, "m", m), dtype=float)
    checks = []
    for a in range(len(m)):
        sigma = np.sqrt(stats.normalized_cov[a, a])
        bound = thresholds.z * sigma / np.sqrt(stats.N * stats.n)
        err = abs(stats.mean[a] / stats.n - m[a])
        checks.append(Check("drift", a, float(err), float(bound), bool(err <= bound + 1e-12)))
        for name, values, limit in (
            ("skewness", stats.skewness, thresholds.skewness),
            ("excess_kurtosis", stats.excess_kurtosis, thresholds.excess_kurtosis),
            ("ks", stats.ks, thresholds.ks),
        ):
            if stats.degenerate[a]:
                checks.append(Check(name, a, None, limit, True, skipped=True))
            else:
                v = float(values[a])
                checks.append(Check(name, a, v, limit, bool(abs(v) <= limit)))
    if stats.degenerate.all():
        verdict = "degenerate Gaussian"
    elif stats.degenerate.any():
        verdict = "partially degenerate Gaussian"
    else:
        shape_ok = all(c.passed for c in checks if c.name != "drift")
        verdict = "Gaussian" if shape_ok else "not Gaussian"
    return CLTReport(tuple(checks), tuple(float(x) for x in m), verdict)


def write_endpoints(path, X: np.ndarray) -> None:
    X = np.asarray(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{a}" for a in range(X.shape[1])])
        for i, row in enumerate(X):
            w.writerow([i, *map(int, row)])
