"""Reducible walks: every ``l``-step path from a class-``A`` site ends on an ``A`` site.

Such a walk is equivalent to a homogeneous walk whose Kraus operators are the
ordered products along all ``l``-step paths, with the path's net
displacement as the step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import product
from typing import Mapping

import numpy as np

from oqwlab.analysis import DriftVector, invariant_from_superop
from oqwlab.core import (
    TOL_COMPLETENESS, DensityOperator, TransitionRule, VertexClass, as_matrix, completeness_sum,
    kraus_superop, unit_directions,
)
from oqwlab.errors import NonUniqueInvariantError, ValidationError
from oqwlab.evolution import Evolver, Window, init_delta, marginal
from oqwlab.lattice import PERIODIC, ClassField

log = logging.getLogger(__name__)

PRUNE = 1e-300


@dataclass(frozen=True, eq=False)
class PathSpec:
    steps: tuple[tuple[tuple[int, ...], int], ...]   # (displacement, kraus index) per step
    net_displacement: tuple[int, ...]
    visited_classes: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class ReducedOperator:
    K: np.ndarray
    displacement: tuple[int, ...]
    path: PathSpec


@dataclass(frozen=True, eq=False)
class ReducedWalk:
    operators: tuple[ReducedOperator, ...]
    l: int
    base_class: str
    reference_site: tuple[int, ...]

    @property
    def kraus_ops(self) -> list[np.ndarray]:
        return [op.K for op in self.operators]

    def completeness_deviation(self) -> float:
        total = completeness_sum(self.kraus_ops)
        return float(np.max(np.abs(total - np.eye(total.shape[0]))))

    def displacement_distribution(self, rho0) -> dict[tuple[int, ...], float]:
        """One reduced step from ``rho0``: probability of each net displacement."""
        rho = as_matrix(rho0)
        out: dict[tuple[int, ...], float] = {}
        for op in self.operators:
            out[op.displacement] = out.get(op.displacement, 0.0) + float(np.trace(op.K @ rho @ op.K.conj().T).real)
        return out

    def to_vertex_class(self, label: str | None = None) -> VertexClass:
        """Reduced walk as an ordinary class; paths sharing a displacement stay separate Kraus terms."""
        groups: dict[tuple[int, ...], list[np.ndarray]] = {}
        for op in self.operators:
            groups.setdefault(op.displacement, []).append(op.K)
        rules = tuple(TransitionRule(disp, tuple(ops)) for disp, ops in groups.items())
        return VertexClass(label or f"{self.base_class}^{self.l}", rules, reduced=True)


def _require_periodic(field: ClassField) -> None:
    if field.kind != PERIODIC:
        raise ValidationError("reducibility is only decidable for periodic fields")


def _step_set(classes: Mapping[str, VertexClass] | None, label: str, d: int):
    if classes is None:
        return unit_directions(d)
    return [r.displacement for r in classes[label].rules]


def is_reducible(field: ClassField, A: str, l: int, classes: Mapping[str, VertexClass] | None = None) -> bool:
    """Whether every ``l``-step path from every ``A`` site in one period ends on an ``A`` site.

    Without ``classes`` every site may step to its ``2d`` nearest neighbours.
    """
    _require_periodic(field)
    if l < 1:
        raise ValueError("path length must be >= 1")
    if A not in field.labels:
        return False
    axes = [range(p) for p in field.period]
    starts = [X for X in product(*axes) if field.class_at(X) == A]
    if not starts:
        return False
    for X0 in starts:
        frontier = {tuple(X0)}
        for _ in range(l):
            frontier = {
                tuple(x + dx for x, dx in zip(X, step))
                for X in frontier
                for step in _step_set(classes, field.class_at(X), field.d)
            }
        if any(field.class_at(X) != A for X in frontier):
            return False
    return True


def reference_site(field: ClassField, A: str) -> tuple[int, ...]:
    """Lexicographically smallest ``A`` site of the period box."""
    _require_periodic(field)
    for X in product(*[range(p) for p in field.period]):
        if field.class_at(X) == A:
            return tuple(X)
    raise ValidationError(f"class {A!r} does not occur in the field")


def compose_paths(field: ClassField, classes: Mapping[str, VertexClass], A: str, l: int,
                  prune: bool = False) -> ReducedWalk:
    """Compose the operators of every ``l``-step path from the reference ``A`` site.

    Paths are enumerated in lexicographic branch order, first step applied
    first (rightmost factor).  The result is listed grouped by net
    displacement, preserving path order inside each group.

    Products can vanish identically (orthogonal consecutive operators); they
    are kept by default so that every path is present.  With ``prune`` the
    operators whose entries all fall below ``PRUNE`` are dropped and logged.
    """
    if not is_reducible(field, A, l, classes):
        raise ValidationError(f"walk is not reducible to class {A!r} with path length {l}")
    X0 = reference_site(field, A)
    D = classes[A].dim
    ops: list[ReducedOperator] = []
    pruned = 0

    def extend(X, K, disp, steps, visited):
        nonlocal pruned
        if len(steps) == l:
            if prune and np.max(np.abs(K)) < PRUNE:
                pruned += 1
                return
            ops.append(ReducedOperator(K, tuple(disp), PathSpec(tuple(steps), tuple(disp), tuple(visited))))
            return
        label = field.class_at(X)
        for _, k, Kb, step in classes[label].branches():
            Y = tuple(x + s for x, s in zip(X, step))
            extend(Y, Kb @ K, [a + s for a, s in zip(disp, step)], steps + [(tuple(step), k)], visited + [label])

    extend(X0, np.eye(D, dtype=complex), [0] * field.d, [], [])
    if pruned:
        log.info("pruned %d vanishing path operators", pruned)
    order = sorted(range(len(ops)), key=lambda i: ops[i].displacement)
    walk = ReducedWalk(tuple(ops[i] for i in order), l, A, X0)
    dev = walk.completeness_deviation()
    if dev > TOL_COMPLETENESS:
        raise ValidationError(f"composed operators are incomplete (deviation {dev:.3g}); inconsistent class table")
    return walk


def reduced_drift(walk: ReducedWalk) -> DriftVector:
    """Average displacement per reduced step under the reduced channel's invariant state.

    Divide by ``walk.l`` for the drift per original step.
    """
    report = invariant_from_superop(kraus_superop(walk.kraus_ops))
    if not report.unique:
        raise NonUniqueInvariantError(
            f"reduced channel has {report.eigenvalue_one_multiplicity} invariant states"
        )
    rho = report.rho_inf.mat
    m = sum(np.trace(op.K @ rho @ op.K.conj().T).real * np.array(op.displacement, dtype=float)
            for op in walk.operators)
    return DriftVector(m)


def reduced_invariant_state(walk: ReducedWalk) -> DensityOperator:
    return invariant_from_superop(kraus_superop(walk.kraus_ops)).rho_inf


@dataclass(frozen=True)
class EquivalenceReport:
    max_deviation: float
    passed: bool
    original: dict
    reduced: dict
    steps: int


def exact_displacements(field: ClassField, classes, start, rho0, n_steps: int,
                        backend: str | None = None) -> dict[tuple[int, ...], float]:
    """Exact distribution of ``X_n - start`` by evolving the original walk."""
    reach = max(c.reach for c in classes.values())
    window = Window.centered(start, n_steps * reach + 2)
    ev = Evolver(field, classes, window, backend=backend)
    state = ev.run(init_delta(rho0, start, window), n_steps)
    coords, p = marginal(state).sites()
    return {tuple(int(x - s) for x, s in zip(c, start)): float(v) for c, v in zip(coords, p)}


def equivalence_check(field: ClassField, classes, walk: ReducedWalk, rho0, reduced_steps: int = 1,
                      tol: float = 1e-12) -> EquivalenceReport:
    """Compare ``reduced_steps * l`` original steps with ``reduced_steps`` reduced steps.

    Both sides are exact: the original walk by lattice evolution from the
    reference site, the reduced walk by evolving its single class.
    """
    original = exact_displacements(field, classes, walk.reference_site, rho0, reduced_steps * walk.l)
    if reduced_steps == 1:
        reduced = walk.displacement_distribution(rho0)
    else:
        label = "__reduced__"
        rc = walk.to_vertex_class(label)
        reduced = exact_displacements(ClassField.uniform(label, field.d), {label: rc},
                                      tuple(0 for _ in range(field.d)), rho0, reduced_steps)
    keys = set(original) | set(reduced)
    dev = max(abs(original.get(k, 0.0) - reduced.get(k, 0.0)) for k in keys)
    return EquivalenceReport(float(dev), dev <= tol, original, reduced, reduced_steps)
