"""Assignment of vertex classes to the sites of Z^d."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from oqwlab import rng as _rng
from oqwlab.errors import ValidationError

PERIODIC, RANDOM, FUNCTION = "periodic", "random", "function"


@dataclass(frozen=True, eq=False)
class ClassField:
    """Class label of every lattice site, as a pure function of the coordinates.

    Build with :meth:`periodic`, :meth:`random` or (for tests and one-off
    experiments) :meth:`from_function`.  Labels are stored once in ``labels``;
    vectorized lookups return integer codes indexing that tuple.
    """

    kind: str
    d: int
    labels: tuple[str, ...]
    tile: np.ndarray | None = None          # integer codes, shape == period
    probabilities: tuple[float, ...] | None = None
    seed: int | None = None
    function: Callable | None = None

    @classmethod
    def periodic(cls, tile) -> "ClassField":
        arr = np.array(tile, dtype=object)
        if arr.size == 0:
            raise ValidationError("empty tile")
        labels = tuple(dict.fromkeys(str(x) for x in arr.ravel()))
        codes = np.vectorize(lambda s: labels.index(str(s)), otypes=[np.int64])(arr)
        codes.setflags(write=False)
        return cls(PERIODIC, arr.ndim, labels, tile=codes)

    @classmethod
    def random(cls, probabilities: Mapping[str, float], seed: int, d: int) -> "ClassField":
        labels = tuple(str(k) for k in probabilities)
        p = np.array([float(probabilities[k]) for k in probabilities])
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError(f"class probabilities {dict(probabilities)} must be >= 0 and sum to 1")
        return cls(RANDOM, int(d), labels, probabilities=tuple(p), seed=int(seed) & _rng.MASK64)

    @classmethod
    def uniform(cls, label: str, d: int) -> "ClassField":
        return cls.periodic(np.full((1,) * d, label, dtype=object))

    @classmethod
    def from_function(cls, labels: Sequence[str], d: int, fn: Callable) -> "ClassField":
        """Arbitrary field; ``fn`` maps an ``(M, d)`` coordinate array to codes."""
        return cls(FUNCTION, int(d), tuple(labels), function=fn)

    @property
    def period(self) -> tuple[int, ...]:
        if self.kind != PERIODIC:
            raise ValidationError(f"{self.kind} field has no period")
        return self.tile.shape

    @property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.probabilities)
        c[-1] = 1.0
        return c

    def codes(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        if self.kind == PERIODIC:
            idx = tuple(np.mod(coords[:, a], self.tile.shape[a]) for a in range(self.d))
            return self.tile[idx]
        if self.kind == RANDOM:
            u = _rng.site_uniform_array(self.seed, coords)
            return np.searchsorted(self.cumulative, u, side="right").astype(np.int64)
        return np.asarray(self.function(coords), dtype=np.int64)

    def class_at(self, X) -> str:
        X = tuple(int(x) for x in X)
        if len(X) != self.d:
            raise ValidationError(f"site {X} has dimension {len(X)}, field has {self.d}")
        if self.kind == RANDOM:
            u = _rng.site_uniform(self.seed, X)
            return self.labels[int(np.searchsorted(self.cumulative, u, side="right"))]
        return self.labels[int(self.codes([X])[0])]

    def kernel_spec(self) -> dict:
        """Flat arrays describing the field for the compiled kernels."""
        if self.kind == PERIODIC:
            return dict(kind=0, tile=np.ascontiguousarray(self.tile.ravel(), dtype=np.int64),
                        period=np.array(self.tile.shape, dtype=np.int64),
                        cumulative=np.ones(1), seed=0)
        if self.kind == RANDOM:
            return dict(kind=1, tile=np.zeros(1, dtype=np.int64),
                        period=np.ones(self.d, dtype=np.int64),
                        cumulative=np.ascontiguousarray(self.cumulative), seed=self.seed)
        raise ValidationError("function-defined fields cannot be used by the simulation kernels")

    def to_config(self) -> dict:
        if self.kind == PERIODIC:
            return {"kind": PERIODIC, "tile": np.array(self.labels, dtype=object)[self.tile].tolist()}
        if self.kind == RANDOM:
            return {"kind": RANDOM, "seed": self.seed,
                    "probabilities": dict(zip(self.labels, self.probabilities))}
        raise ValidationError("function-defined fields are not serializable")


def class_at(field: ClassField, X) -> str:
    return field.class_at(X)


def ball_coords(center, radius: int) -> np.ndarray:
    """All sites of the L-infinity ball, as an ``((2r+1)^d, d)`` array."""
    center = np.asarray(center, dtype=np.int64)
    axes = [np.arange(c - radius, c + radius + 1) for c in center]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def _window_frequencies(field: ClassField, center, radius: int) -> np.ndarray:
    codes = field.codes(ball_coords(center, radius))
    return np.bincount(codes, minlength=len(field.labels)) / codes.size


def estimate_densities(field: ClassField, center, radius: int) -> dict[str, float]:
    """Empirical class frequencies over the L-infinity ball around ``center``."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    freq = _window_frequencies(field, center, radius)
    return dict(zip(field.labels, freq.tolist()))


@dataclass(frozen=True)
class RegularityReport:
    epsilon: float
    radius: int
    windows: int
    max_distance: float
    passed: bool


def regularity_report(
    field: ClassField, epsilon: float, radius: int, sample_windows: int = 64, seed: int = 0,
    span: int | None = None,
) -> RegularityReport:
    """Largest total-variation distance between class frequencies of two windows.

    Periodic fields are checked exhaustively over window centres in one period
    (the frequencies are periodic in the centre).  Other fields get
    ``sample_windows`` centres drawn uniformly from ``[-span, span]^d``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if field.kind == PERIODIC:
        axes = [np.arange(p) for p in field.period]
        centres = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    else:
        span = span if span is not None else 50 * radius
        gen = np.random.default_rng(seed)
        centres = gen.integers(-span, span + 1, size=(sample_windows, field.d))
    freqs = [_window_frequencies(field, c, radius) for c in centres]
    worst = 0.0
    for p, q in combinations(freqs, 2):
        worst = max(worst, 0.5 * float(np.abs(p - q).sum()))
    return RegularityReport(epsilon, radius, len(freqs), worst, worst <= epsilon)
