"""Operator types, class validation and channel application.

Everything here works on a single vertex class: a list of transition rules,
each a lattice displacement together with one or more Kraus operators acting
on the walker's internal space.

Superoperator matrices use column stacking throughout the package, so that
``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from oqwlab.errors import DimensionError, ValidationError

TOL_COMPLETENESS = 1e-10
TOL_HERMITIAN = 1e-10
TOL_PSD = 1e-9
TOL_TRACE = 1e-9


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(matrix).reshape(-1, order="F")


def unvec(vector: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec` for square matrices."""
    vector = np.asarray(vector)
    if dim is None:
        dim = int(round(np.sqrt(vector.size)))
    return vector.reshape((dim, dim), order="F")


def direction_vector(j: int, d: int) -> tuple[int, ...]:
    """Unit displacement for direction index ``j`` in ``1..2d``.

    ``j <= d`` gives ``+e_j`` and ``j > d`` gives ``-e_{j-d}``.
    """
    if not 1 <= j <= 2 * d:
        raise ValueError(f"direction index {j} outside 1..{2 * d}")
    v = [0] * d
    if j <= d:
        v[j - 1] = 1
    else:
        v[j - d - 1] = -1
    return tuple(v)


def unit_directions(d: int) -> list[tuple[int, ...]]:
    return [direction_vector(j, d) for j in range(1, 2 * d + 1)]


def direction_index(displacement: Sequence[int]) -> int | None:
    """Direction index of a unit displacement, ``None`` for anything else."""
    d = len(displacement)
    for j in range(1, 2 * d + 1):
        if tuple(displacement) == direction_vector(j, d):
            return j
    return None


def _square(m, name: str = "matrix") -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive, unit-trace operator on the internal space.

    The constructor only checks; use :meth:`from_matrix` to clean up a matrix
    carrying rounding noise (it Hermitizes and renormalizes the trace).
    """

    mat: np.ndarray

    def __post_init__(self):
        m = _frozen(_square(self.mat, "density operator"))
        object.__setattr__(self, "mat", m)
        herm = np.max(np.abs(m - m.conj().T))
        if herm > TOL_HERMITIAN:
            raise ValidationError(f"density operator not Hermitian (deviation {herm:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TOL_TRACE:
            raise ValidationError(f"density operator trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh((m + m.conj().T) / 2).min()
        if lam < -TOL_PSD:
            raise ValidationError(f"density operator has negative eigenvalue {lam:.3g}")

    @classmethod
    def from_matrix(cls, m) -> "DensityOperator":
        m = _square(m, "density operator")
        m = (m + m.conj().T) / 2
        tr = np.trace(m).real
        if not tr > 0:
            raise ValidationError("cannot normalize a matrix with non-positive trace")
        return cls(m / tr)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim, dtype=complex) / dim)

    @classmethod
    def pure(cls, psi) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls.from_matrix(np.outer(psi, psi.conj()))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def as_matrix(rho) -> np.ndarray:
    """Accept a :class:`DensityOperator` or anything array-like."""
    if isinstance(rho, DensityOperator):
        return rho.mat
    return _square(rho)


@dataclass(frozen=True, eq=False)
class TransitionRule:
    displacement: tuple[int, ...]
    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        disp = tuple(int(x) for x in self.displacement)
        ops = tuple(_frozen(_square(k, "Kraus operator")) for k in self.kraus_ops)
        if not ops:
            raise ValidationError(f"rule {disp} has no Kraus operators")
        if len({k.shape for k in ops}) != 1:
            raise DimensionError(f"rule {disp} mixes Kraus operator dimensions")
        object.__setattr__(self, "displacement", disp)
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self) -> int:
        return self.kraus_ops[0].shape[0]


@dataclass(frozen=True, eq=False)
class VertexClass:
    """Transition rules governing departures from one class of vertices.

    ``reduced`` marks classes built by composing paths; their displacements
    are arbitrary lattice vectors instead of the ``2d`` unit steps.
    """

    label: str
    rules: tuple[TransitionRule, ...]
    reduced: bool = False

    def __post_init__(self):
        rules = tuple(self.rules)
        if not rules:
            raise ValidationError(f"class {self.label!r} has no rules")
        dims = {r.dim for r in rules}
        if len(dims) != 1:
            raise DimensionError(f"class {self.label!r} mixes internal dimensions {sorted(dims)}")
        spatial = {len(r.displacement) for r in rules}
        if len(spatial) != 1:
            raise DimensionError(f"class {self.label!r} mixes lattice dimensions {sorted(spatial)}")
        disps = [r.displacement for r in rules]
        if len(set(disps)) != len(disps):
            raise ValidationError(f"class {self.label!r} repeats a displacement")
        object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "rules", rules)

    @classmethod
    def from_directions(cls, label: str, d: int, ops_by_direction: dict) -> "VertexClass":
        """Build a nearest-neighbour class from ``{direction index: [K, ...]}``."""
        rules = [
            TransitionRule(direction_vector(j, d), tuple(ops_by_direction[j]))
            for j in sorted(ops_by_direction)
        ]
        return cls(label, tuple(rules))

    @property
    def dim(self) -> int:
        return self.rules[0].dim

    @property
    def spatial_dim(self) -> int:
        return len(self.rules[0].displacement)

    def branches(self) -> list[tuple[int, int, np.ndarray, tuple[int, ...]]]:
        """``(rule index, kraus index, K, displacement)`` in fixed rule order."""
        return [
            (i, k, K, rule.displacement)
            for i, rule in enumerate(self.rules)
            for k, K in enumerate(rule.kraus_ops)
        ]

    @cached_property
    def kraus_stack(self) -> np.ndarray:
        return _frozen(np.array([b[2] for b in self.branches()]))

    @cached_property
    def displacement_stack(self) -> np.ndarray:
        return _frozen(np.array([b[3] for b in self.branches()], dtype=np.int64))

    @property
    def reach(self) -> int:
        """Largest single-step move along any axis."""
        return int(np.abs(self.displacement_stack).max())


@dataclass(frozen=True)
class ValidationReport:
    label: str
    passed: bool
    deviation: float
    hermiticity: float
    kraus_count: int
    missing_directions: tuple[tuple[int, ...], ...] = field(default=())
    tol: float = TOL_COMPLETENESS

    @property
    def message(self) -> str:
        if self.passed:
            return f"class {self.label!r}: complete (deviation {self.deviation:.3g})"
        parts = []
        if self.deviation > self.tol:
            parts.append(f"sum of K^dag K deviates from identity by {self.deviation:.6g}")
        if self.missing_directions:
            parts.append(f"no rule for directions {list(self.missing_directions)}")
        return f"class {self.label!r}: " + "; ".join(parts)


def completeness_sum(kraus_ops: Iterable[np.ndarray]) -> np.ndarray:
    return sum(K.conj().T @ K for K in kraus_ops)


def validate_class(vclass: VertexClass, tol: float = TOL_COMPLETENESS) -> ValidationReport:
    """Check the completeness relation of a class.

    Nearest-neighbour classes must also declare a rule for each of the ``2d``
    unit directions; a walk that can only step one way has lost probability
    mass it should have assigned elsewhere.
    """
    dims = {K.shape for _, _, K, _ in vclass.branches()}
    if len(dims) != 1:
        raise DimensionError(f"class {vclass.label!r} mixes Kraus shapes {sorted(dims)}")
    total = completeness_sum(vclass.kraus_stack)
    deviation = float(np.max(np.abs(total - np.eye(vclass.dim))))
    hermiticity = float(np.max(np.abs(total - total.conj().T)))
    missing: tuple = ()
    if not vclass.reduced:
        declared = {r.displacement for r in vclass.rules}
        missing = tuple(u for u in unit_directions(vclass.spatial_dim) if u not in declared)
    return ValidationReport(
        label=vclass.label,
        passed=deviation <= tol and not missing,
        deviation=deviation,
        hermiticity=hermiticity,
        kraus_count=len(vclass.kraus_stack),
        missing_directions=missing,
        tol=tol,
    )


def _check_dim(vclass: VertexClass, m: np.ndarray) -> None:
    if m.shape != (vclass.dim, vclass.dim):
        raise DimensionError(
            f"operator of shape {m.shape} does not act on class {vclass.label!r} (dim {vclass.dim})"
        )


def channel_action(vclass: VertexClass, m) -> np.ndarray:
    """Raw ``sum K m K^dag`` for any square ``m`` (no cleanup)."""
    m = as_matrix(m)
    _check_dim(vclass, m)
    K = vclass.kraus_stack
    return np.einsum("bij,jk,blk->il", K, m, K.conj())


def apply_channel(vclass: VertexClass, rho) -> DensityOperator:
    return DensityOperator.from_matrix(channel_action(vclass, rho))


def apply_conjugate(vclass: VertexClass, B) -> np.ndarray:
    """``sum K^dag B K``, the adjoint channel under the trace pairing."""
    B = _square(B)
    _check_dim(vclass, B)
    K = vclass.kraus_stack
    return np.einsum("bji,jk,bkl->il", K.conj(), B, K)


def kraus_superop(kraus_ops: Sequence[np.ndarray], conjugate: bool = False) -> np.ndarray:
    """Column-stacked matrix of ``X -> sum K X K^dag`` (or of its adjoint)."""
    if conjugate:
        return sum(np.kron(K.T, K.conj().T) for K in kraus_ops)
    return sum(np.kron(K.conj(), K) for K in kraus_ops)


def superop_matrix(vclass: VertexClass, conjugate: bool = False) -> np.ndarray:
    return kraus_superop(vclass.kraus_stack, conjugate)


@dataclass(frozen=True, eq=False)
class PackedClasses:
    """Class table as padded arrays, indexed by the integer codes of a field."""

    kraus: np.ndarray        # (C, B, D, D), zero-padded
    gram: np.ndarray         # K^dag K per branch
    nbranch: np.ndarray      # (C,)
    displacement: np.ndarray  # (C, B, d)

    @property
    def reach(self) -> int:
        return int(np.abs(self.displacement).max())


def pack_classes(labels: Sequence[str], classes: dict) -> PackedClasses:
    missing = [lab for lab in labels if lab not in classes]
    if missing:
        raise ValidationError(f"field refers to undefined classes {missing}")
    table = [classes[lab] for lab in labels]
    dims = {c.dim for c in table}
    spatial = {c.spatial_dim for c in table}
    if len(dims) != 1 or len(spatial) != 1:
        raise DimensionError("classes in one walk must share internal and lattice dimensions")
    D, d = dims.pop(), spatial.pop()
    B = max(len(c.kraus_stack) for c in table)
    kraus = np.zeros((len(table), B, D, D), dtype=complex)
    disp = np.zeros((len(table), B, d), dtype=np.int64)
    nbranch = np.zeros(len(table), dtype=np.int64)
    for i, c in enumerate(table):
        nb = len(c.kraus_stack)
        kraus[i, :nb] = c.kraus_stack
        disp[i, :nb] = c.displacement_stack
        nbranch[i] = nb
    gram = np.einsum("cbji,cbjk->cbik", kraus.conj(), kraus)
    return PackedClasses(kraus, gram, nbranch, disp)
