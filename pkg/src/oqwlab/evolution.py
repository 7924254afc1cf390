"""Exact evolution of the full walk on a finite lattice window.

The state keeps one unnormalized operator per site; a step applies every
transition rule of the site's class and moves the result by the rule's
displacement.  The window never absorbs or wraps mass: a step is refused
once probability reaches its edge.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from oqwlab._backend import get_kernels
from oqwlab.core import VertexClass, as_matrix, pack_classes
from oqwlab.errors import ValidationError, WindowOverflowError
from oqwlab.lattice import ClassField

BOUNDARY_MASS = 1e-12
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class Window:
    """Axis-aligned box of sites ``lo <= X < lo + shape``."""

    lo: tuple[int, ...]
    shape: tuple[int, ...]

    @classmethod
    def centered(cls, center, radius: int) -> "Window":
        center = tuple(int(c) for c in center)
        return cls(tuple(c - radius for c in center), (2 * radius + 1,) * len(center))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, X) -> bool:
        return all(lo <= x < lo + n for x, lo, n in zip(X, self.lo, self.shape))

    def flat_index(self, X) -> int:
        if len(X) != self.d or not self.contains(X):
            raise ValidationError(f"site {tuple(X)} lies outside the window {self}")
        return int(np.ravel_multi_index(tuple(int(x) - lo for x, lo in zip(X, self.lo)), self.shape))

    def coords(self) -> np.ndarray:
        axes = [np.arange(lo, lo + n) for lo, n in zip(self.lo, self.shape)]
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


@dataclass(frozen=True, eq=False)
class LatticeState:
    window: Window
    rho: np.ndarray    # (sites, D, D), unnormalized per-site operators
    mass: np.ndarray   # (sites,), Tr rho per site
    step: int = 0

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Index-space bounding box ``[lo, hi)`` of sites carrying mass."""
        nz = np.flatnonzero(self.mass)
        if nz.size == 0:
            z = np.zeros(self.window.d, dtype=np.int64)
            return z, z
        idx = np.array(np.unravel_index(nz, self.window.shape))
        return idx.min(axis=1), idx.max(axis=1) + 1


def _state(window, rho, step) -> LatticeState:
    mass = np.einsum("sii->s", rho).real
    dead = np.abs(mass) < UNDERFLOW
    if dead.any():
        rho[dead] = 0
        mass[dead] = 0.0
    rho.setflags(write=False)
    mass.setflags(write=False)
    return LatticeState(window, rho, mass, step)


def init_delta(rho0, X0, window: Window) -> LatticeState:
    rho0 = as_matrix(rho0)
    D = rho0.shape[0]
    rho = np.zeros((window.size, D, D), dtype=complex)
    rho[window.flat_index(X0)] = rho0
    return _state(window, rho, 0)


def boundary_mass(state: LatticeState, reach: int) -> float:
    """Probability on sites that a single step could carry out of the window."""
    lo, hi = state.support_box()
    shape = np.array(state.window.shape)
    if np.all(lo >= reach) and np.all(hi <= shape - reach):
        return 0.0
    idx = np.array(np.unravel_index(np.arange(state.window.size), state.window.shape)).T
    layer = np.any((idx < reach) | (idx >= shape - reach), axis=1)
    return float(state.mass[layer].sum())


class Evolver:
    """Repeated exact steps of one walk on one window.

    Class codes of the window sites and the padded operator tables are
    computed once; ``threads`` only changes how the compiled kernel splits
    target sites, never the result.
    """

    def __init__(self, field: ClassField, classes: Mapping[str, VertexClass], window: Window,
                 threads: int = 1, backend: str | None = None):
        if field.d != window.d:
            raise ValidationError(f"field dimension {field.d} does not match window dimension {window.d}")
        self.field = field
        self.window = window
        self.packed = pack_classes(field.labels, dict(classes))
        self.codes = np.ascontiguousarray(field.codes(window.coords()))
        self.threads = threads
        self.kernels = get_kernels(backend)

    def step(self, state: LatticeState) -> LatticeState:
        reach = self.packed.reach
        edge = boundary_mass(state, reach)
        if edge > BOUNDARY_MASS:
            raise WindowOverflowError(
                f"window too small: mass {edge:.3g} at the edge after step {state.step}"
            )
        lo, hi = state.support_box()
        pk = self.packed
        out = self.kernels.evolve_sites(
            state.rho, state.mass, self.codes, pk.kraus, pk.nbranch, pk.displacement,
            np.array(self.window.shape, dtype=np.int64), lo, hi, self.threads,
        )
        return _state(self.window, np.asarray(out), state.step + 1)

    def run(self, state: LatticeState, n: int,
            callback: Callable[[LatticeState], None] | None = None) -> LatticeState:
        for _ in range(n):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


def evolve_step(state: LatticeState, field: ClassField, classes, threads: int = 1,
                backend: str | None = None) -> LatticeState:
    return Evolver(field, classes, state.window, threads, backend).step(state)


def evolve(rho0, X0, window: Window, field: ClassField, classes, n: int, **kwargs) -> LatticeState:
    ev = Evolver(field, classes, window, **kwargs)
    return ev.run(init_delta(rho0, X0, window), n)


def min_eigenvalue(state: LatticeState) -> float:
    """Smallest eigenvalue over all sites with mass (0 for an empty state)."""
    nz = np.flatnonzero(state.mass)
    if nz.size == 0:
        return 0.0
    rho = state.rho[nz]
    return float(np.linalg.eigvalsh((rho + np.conj(np.swapaxes(rho, 1, 2))) / 2).min())


@dataclass(frozen=True, eq=False)
class ProbabilityField:
    window: Window
    p: np.ndarray    # shaped like the window

    def sites(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates and probabilities of the sites with non-zero probability."""
        flat = self.p.ravel()
        nz = np.flatnonzero(flat)
        idx = np.array(np.unravel_index(nz, self.window.shape)).T + np.array(self.window.lo)
        return idx, flat[nz]

    def at(self, X) -> float:
        return float(self.p.ravel()[self.window.flat_index(X)]) if self.window.contains(X) else 0.0

    def to_csv(self, path) -> None:
        coords, p = self.sites()
        names = [f"x{a}" for a in range(self.window.d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["p"])
            for c, v in zip(coords, p):
                w.writerow([*map(int, c), format(float(v), ".17g")])


def marginal(state: LatticeState) -> ProbabilityField:
    return ProbabilityField(state.window, state.mass.reshape(state.window.shape).copy())


def field_moments(pf: ProbabilityField) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and covariance of the site distribution."""
    coords, p = pf.sites()
    p = p / p.sum()
    mean = p @ coords
    centred = coords - mean
    cov = (centred * p[:, None]).T @ centred
    return mean, cov


def cross_section(pf: ProbabilityField, axis: int, index) -> tuple[np.ndarray, np.ndarray]:
    """Slice of ``p`` along ``axis`` with the other coordinates fixed at ``index``.

    ``index`` is one coordinate (same for every other axis) or one per other
    axis; it is ignored in one dimension.
    """
    d = pf.window.d
    others = [a for a in range(d) if a != axis]
    if np.isscalar(index):
        index = [int(index)] * len(others)
    if len(index) != len(others):
        raise ValidationError(f"cross section needs {len(others)} fixed coordinates")
    slicer = [slice(None)] * d
    for a, x in zip(others, index):
        i = int(x) - pf.window.lo[a]
        if not 0 <= i < pf.window.shape[a]:
            raise ValidationError(f"coordinate {x} on axis {a} lies outside the window")
        slicer[a] = i
    coords = np.arange(pf.window.lo[axis], pf.window.lo[axis] + pf.window.shape[axis])
    return coords, pf.p[tuple(slicer)].copy()


def write_cross_section(path, coords, values, axis: int = 0) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{axis}", "p"])
        for c, v in zip(coords, values):
            w.writerow([int(c), format(float(v), ".17g")])
