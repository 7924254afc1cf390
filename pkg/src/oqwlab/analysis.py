"""Spectral analysis of the per-class auxiliary channels.

Invariant states, drift vectors, solutions of the Poisson equation
``(I - Phi^dag)(L) = sum_j K_j^dag K_j <j|l> - <m|l> I`` and the variance
operators built from them.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from oqwlab.core import (
    DensityOperator, VertexClass, as_matrix, channel_action, superop_matrix, unvec, vec,
)
from oqwlab.errors import NonUniqueInvariantError, OQWError, ValidationError

RANK_RTOL = 1e-9
FIXED_POINT_TOL = 1e-10
POISSON_TOL = 1e-9


def _rank(singular_values: np.ndarray) -> int:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > RANK_RTOL * max(singular_values[0], 1.0)))


@dataclass(frozen=True, eq=False)
class InvariantReport:
    rho_inf: DensityOperator
    fixed_point_residual: float
    eigenvalue_one_multiplicity: int

    @property
    def unique(self) -> bool:
        return self.eigenvalue_one_multiplicity == 1


def invariant_from_superop(S: np.ndarray) -> InvariantReport:
    dim = int(round(np.sqrt(S.shape[0])))
    _, s, vh = np.linalg.svd(S - np.eye(S.shape[0]))
    multiplicity = S.shape[0] - _rank(s)
    if multiplicity == 0:
        raise OQWError("no fixed point found; the map is not trace preserving")
    null = vh[-multiplicity:].conj()
    # combine null vectors so the result has non-zero trace; a single one always does
    traces = np.array([np.trace(unvec(v, dim)) for v in null])
    R = unvec(traces.conj() @ null, dim)
    R = (R + R.conj().T) / 2
    R = R / np.trace(R).real
    if multiplicity == 1:
        # a unique fixed point of a positive map is positive; clip rounding noise
        lam, U = np.linalg.eigh(R)
        R = (U * np.clip(lam, 0, None)) @ U.conj().T
        R = R / np.trace(R).real
    rho = DensityOperator(R) if multiplicity == 1 else _loose_state(R)
    residual = float(np.max(np.abs(unvec(S @ vec(rho.mat), dim) - rho.mat)))
    return InvariantReport(rho, residual, multiplicity)


def _loose_state(R: np.ndarray) -> DensityOperator:
    try:
        return DensityOperator(R)
    except ValidationError:
        lam, U = np.linalg.eigh(R)
        return DensityOperator.from_matrix((U * np.clip(lam, 0, None)) @ U.conj().T)


def invariant_state(vclass: VertexClass, tol: float = FIXED_POINT_TOL) -> InvariantReport:
    """Fixed point of the class channel from the null space of ``S - I``.

    The multiplicity counts singular values of ``S - I`` below the relative
    cutoff.  With multiplicity above one the returned state is one of many
    fixed points and callers needing uniqueness should refuse it.
    """
    report = invariant_from_superop(superop_matrix(vclass))
    if report.fixed_point_residual > tol:
        raise OQWError(
            f"class {vclass.label!r}: fixed-point residual {report.fixed_point_residual:.3g} above {tol}"
        )
    return report


def invariant_state_power(vclass: VertexClass, steps: int = 20000, tol: float = 1e-13) -> np.ndarray:
    """Power iteration from the maximally mixed state.

    Kept as an independent check of :func:`invariant_state`.  Returns the
    iterate once it is fixed within ``tol``; otherwise (periodic channels)
    the Cesaro average of all iterates.
    """
    rho = np.eye(vclass.dim, dtype=complex) / vclass.dim
    avg = rho.copy()
    for t in range(1, steps + 1):
        nxt = channel_action(vclass, rho)
        if np.max(np.abs(nxt - rho)) < tol:
            return nxt
        rho = nxt
        avg = avg + (rho - avg) / (t + 1)
    return avg


def require_unique(vclass: VertexClass) -> InvariantReport:
    report = invariant_state(vclass)
    if not report.unique:
        raise NonUniqueInvariantError(
            f"class {vclass.label!r}: eigenvalue 1 has multiplicity {report.eigenvalue_one_multiplicity}"
        )
    return report


@dataclass(frozen=True, eq=False)
class DriftVector:
    m: np.ndarray
    warning: str | None = None

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).copy()
        m.setflags(write=False)
        object.__setattr__(self, "m", m)


def branch_probabilities(vclass: VertexClass, rho) -> np.ndarray:
    """``Tr(K rho K^dag)`` for every branch, in the class's fixed rule order."""
    rho = as_matrix(rho)
    K = vclass.kraus_stack
    return np.einsum("bij,jk,bik->b", K, rho, K.conj()).real


def mean_vector(vclass: VertexClass, rho_inf, tol: float = FIXED_POINT_TOL) -> DriftVector:
    rho = as_matrix(rho_inf)
    p = branch_probabilities(vclass, rho)
    m = p @ vclass.displacement_stack
    residual = float(np.max(np.abs(channel_action(vclass, rho) - rho)))
    warning = None
    if residual > tol:
        warning = f"state is not invariant for class {vclass.label!r} (residual {residual:.3g})"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return DriftVector(m, warning)


def class_drift(vclass: VertexClass) -> DriftVector:
    return mean_vector(vclass, require_unique(vclass).rho_inf)


def mixed_mean(classes: Sequence[tuple[VertexClass, float]]) -> DriftVector:
    """Density-weighted average of the per-class drifts."""
    p = np.array([float(w) for _, w in classes])
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValidationError(f"class weights {p.tolist()} must be >= 0 and sum to 1")
    m = sum(w * class_drift(c).m for c, w in zip((c for c, _ in classes), p))
    return DriftVector(m)


@dataclass(frozen=True, eq=False)
class PoissonOperator:
    """Minimal-Frobenius-norm solution ``L`` of the Poisson equation for direction ``l``."""

    L: np.ndarray
    l: np.ndarray
    m: np.ndarray
    residual: float
    gauge: str = "minimal-norm"

    def shifted(self, c: complex) -> "PoissonOperator":
        """Same solution moved along the identity, which is always in the kernel."""
        return PoissonOperator(self.L + c * np.eye(self.L.shape[0]), self.l, self.m, self.residual, "shifted")


def poisson_rhs(vclass: VertexClass, m: np.ndarray, l) -> np.ndarray:
    l = np.asarray(l, dtype=float)
    K = vclass.kraus_stack
    weights = vclass.displacement_stack @ l
    return np.einsum("b,bji,bjk->ik", weights, K.conj(), K) - (m @ l) * np.eye(vclass.dim)


def solve_poisson(vclass: VertexClass, rho_inf, l, tol: float = POISSON_TOL) -> PoissonOperator:
    l = np.asarray(l, dtype=float)
    if l.shape != (vclass.spatial_dim,):
        raise ValidationError(f"direction {l.tolist()} does not match lattice dimension {vclass.spatial_dim}")
    m = mean_vector(vclass, rho_inf).m
    rhs = poisson_rhs(vclass, m, l)
    A = np.eye(vclass.dim ** 2) - superop_matrix(vclass, conjugate=True)
    x, *_ = np.linalg.lstsq(A, vec(rhs), rcond=RANK_RTOL)
    L = unvec(x, vclass.dim)
    residual = float(np.max(np.abs(unvec(A @ x, vclass.dim) - rhs)))
    if residual > tol:
        raise NonUniqueInvariantError(
            f"class {vclass.label!r}: Poisson right-hand side not in the image (residual {residual:.3g})"
        )
    return PoissonOperator(L, l, m, residual)


def poisson_identity_check(vclass: VertexClass, poisson: PoissonOperator, rho, x, l=None) -> float:
    """Deviation of ``(1 - P) f`` from ``<x|l> - <m|l>`` for ``f(rho, x) = Tr(rho L) + <x|l>``.

    ``P`` is the trajectory transition operator of the class; branches with
    probability below 1e-15 are skipped since the chain never takes them.
    """
    l = poisson.l if l is None else np.asarray(l, dtype=float)
    rho = as_matrix(rho)
    x = np.asarray(x, dtype=float)
    L = poisson.L
    f = np.trace(rho @ L) + x @ l
    Pf = 0.0
    for _, _, K, disp in vclass.branches():
        out = K @ rho @ K.conj().T
        p = np.trace(out).real
        if p <= 1e-15:
            continue
        Pf += p * (np.trace(out / p @ L) + np.dot(disp, l))
    return float(abs((f - Pf) - (x @ l - poisson.m @ l)))


@dataclass(frozen=True)
class KernelImageSplit:
    kernel_dim: int
    image_dim: int
    direct_sum_ok: bool
    overlap: float


def kernel_image_split(S: np.ndarray) -> KernelImageSplit:
    """Dimensions of ``Ker(S)`` and ``Im(S^dag)`` and their mutual orthogonality.

    Both subspaces come from separate decompositions (of ``S`` and of its
    adjoint), so the rank sum and the overlap are genuine checks.
    """
    S = np.asarray(S, dtype=complex)
    n = S.shape[0]
    _, s, vh = np.linalg.svd(S)
    r = _rank(s)
    kernel = vh[r:].conj().T
    u, s_adj, _ = np.linalg.svd(S.conj().T)
    r_adj = _rank(s_adj)
    image = u[:, :r_adj]
    overlap = float(np.max(np.abs(kernel.conj().T @ image))) if kernel.size and image.size else 0.0
    kernel_dim = n - r
    ok = overlap <= 1e-8 and kernel_dim + r_adj == n
    return KernelImageSplit(kernel_dim, r_adj, ok, overlap)


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    method: str
    experimental: bool = False
    raw: float | None = None


def _xi_matrix(channel: VertexClass, lv, a: np.ndarray, b: np.ndarray,
               La: np.ndarray, Lb: np.ndarray) -> np.ndarray:
    # additive reading: every term is linear in the pre-step state
    K = channel.kraus_stack
    da, db = lv - a, lv - b
    xi = np.einsum("b,bji,bjk->ik", da * db, K.conj(), K)
    xi = xi + np.einsum("b,bji,jk,bkl->il", da, K.conj(), Lb, K)
    xi = xi + np.einsum("b,bji,jk,bkl->il", db, K.conj(), La, K)
    return xi


def analytic_sigma(classes, l, rho_ref, reading: str = "additive") -> SigmaEstimate:
    """Variance of ``<X_n - n m|l> / sqrt(n)`` from the variance operators.

    ``classes`` holds ``(VertexClass, p_C, PoissonOperator, rho_inf)`` tuples.
    For one class the additive reading reduces to the homogeneous formula
    ``sum p_j (l_j - m.l)^2 + 2 sum (l_j - m.l) Tr(K_j rho K_j^dag L)``.  With
    several classes the weighting is not settled and the result is flagged
    experimental.  ``reading="multiplicative"`` evaluates the alternative
    grouping, which is nonlinear in the state and evaluated at ``rho_ref``.
    """
    l = np.asarray(l, dtype=float)
    rho = as_matrix(rho_ref)
    weights = np.array([c[1] for c in classes], dtype=float)
    drifts = [c[2].m @ l for c in classes]
    Ls = [c[2].L for c in classes]
    total = 0.0
    for channel, pc, _, _ in classes:
        lv = channel.displacement_stack @ l
        for (pa, a, La) in zip(weights, drifts, Ls):
            for (pb, b, Lb) in zip(weights, drifts, Ls):
                if reading == "additive":
                    xi = _xi_matrix(channel, lv, a, b, La, Lb)
                    term = np.trace(rho @ xi).real
                elif reading == "multiplicative":
                    term = 0.0
                    for j, (_, _, K, _) in enumerate(channel.branches()):
                        out = K @ rho @ K.conj().T
                        p = np.trace(out).real
                        if p <= 1e-15:
                            continue
                        ta = np.trace(out @ La).real / p
                        tb = np.trace(out @ Lb).real / p
                        term += p * ((lv[j] - a) * (lv[j] - b) + tb * (lv[j] - a) * ta * (lv[j] - b))
                else:
                    raise ValueError(f"unknown reading {reading!r}")
                total += pc * pa * pb * term
    raw = float(total)
    return SigmaEstimate(max(raw, 0.0), "analytic", experimental=len(classes) > 1, raw=raw)
