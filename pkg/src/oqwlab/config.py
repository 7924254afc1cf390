"""Experiment configuration files and canonical JSON output.

A config is a JSON document::

    {
      "dimension": 2,
      "internal_dimension": 4,
      "classes": {"A": [{"displacement": [1, 0], "kraus": [M, ...]}, ...], ...},
      "field": {"kind": "periodic", "tile": [["A", "B"], ["B", "A"]]}
             | {"kind": "random", "probabilities": {"A": 0.5, "B": 0.5}, "seed": 7},
      "initial_state": {"rho": "maximally-mixed" | "invariant" | M, "X0": [0, 0]},
      "run": {"n": 200, "N": 10000, "seed": 1, "window_radius": 200,
              "steps": [10, 50], "l": [[1, 0], [0, 1]]},
      "reduction": {"class": "A", "length": 2},
      "thresholds": {"z": 4, "skewness": 0.1, "excess_kurtosis": 0.2, "ks": 0.02}
    }

Matrices ``M`` are row-major nested lists whose entries are ``[re, im]``
pairs (plain reals are accepted too).  ``reduction`` and ``thresholds`` are
optional, as are all ``run`` keys except ``n``.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any

import numpy as np

from oqwlab.core import (
    DensityOperator, TransitionRule, VertexClass, ValidationReport, validate_class,
)
from oqwlab.errors import ValidationError
from oqwlab.lattice import PERIODIC, RANDOM, ClassField
from oqwlab.trajectory import Thresholds

TOP_KEYS = {"dimension", "internal_dimension", "classes", "field", "initial_state", "run",
            "reduction", "thresholds"}
RUN_KEYS = {"n", "N", "seed", "window_radius", "steps", "l"}


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def canonical_json(obj: Any, indent: int | None = 2, sort_keys: bool = False) -> str:
    """JSON text with every float written to 17 significant digits.

    NaN and infinities become ``null``; numpy scalars and arrays are
    converted.  The output depends only on ``obj``, so equal inputs give
    byte-identical text.
    """
    pad = "" if indent is None else "\n"

    def enc(o, level):
        inner = "" if indent is None else " " * (indent * (level + 1))
        outer = "" if indent is None else " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = sorted(o.items()) if sort_keys else o.items()
            kv = ": " if indent is not None else ":"
            body = ("," + pad).join(f"{inner}{json.dumps(str(k))}{kv}{enc(v, level + 1)}" for k, v in items)
            return "{" + pad + body + pad + outer + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            o = list(o) if not isinstance(o, np.ndarray) else o.tolist()
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in o):
                return "[" + (", " if indent is not None else ",").join(enc(v, level + 1) for v in o) + "]"
            body = ("," + pad).join(f"{inner}{enc(v, level + 1)}" for v in o)
            return "[" + pad + body + pad + outer + "]"
        if isinstance(o, (bool, np.bool_)):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return _format_float(float(o))
        if isinstance(o, str):
            return json.dumps(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + ("\n" if indent is not None else "")


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw, indent=None, sort_keys=True).encode()).hexdigest()


def matrix_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data, what: str = "matrix") -> np.ndarray:
    try:
        arr = np.array(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: entries must be numbers or [re, im] pairs") from exc
    if arr.ndim == 3 and arr.shape[-1] == 2:
        arr = arr[..., 0] + 1j * arr[..., 1]
    elif arr.ndim != 2:
        raise ValidationError(f"{what}: expected a row-major square matrix")
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{what}: matrix of shape {arr.shape} is not square")
    return arr.astype(complex)


def class_to_json(vclass: VertexClass) -> list:
    return [
        {"displacement": list(r.displacement), "kraus": [matrix_to_json(K) for K in r.kraus_ops]}
        for r in vclass.rules
    ]


def class_from_json(label: str, rules, reduced: bool = False) -> VertexClass:
    if not isinstance(rules, list) or not rules:
        raise ValidationError(f"class {label!r}: expected a non-empty list of rules")
    out = []
    for i, rule in enumerate(rules):
        if not isinstance(rule, dict) or set(rule) != {"displacement", "kraus"}:
            raise ValidationError(f"class {label!r} rule {i}: needs exactly 'displacement' and 'kraus'")
        ops = [matrix_from_json(K, f"class {label!r} rule {i}") for K in rule["kraus"]]
        out.append(TransitionRule(tuple(int(x) for x in rule["displacement"]), tuple(ops)))
    return VertexClass(label, tuple(out), reduced=reduced)


def classes_document(classes: dict[str, VertexClass], reduced: bool = False) -> dict:
    """Stand-alone class file in the config's class schema."""
    any_class = next(iter(classes.values()))
    doc = {
        "dimension": any_class.spatial_dim,
        "internal_dimension": any_class.dim,
        "classes": {label: class_to_json(c) for label, c in classes.items()},
    }
    if reduced:
        doc["reduced"] = True
    return doc


def load_classes_document(doc: dict) -> dict[str, VertexClass]:
    reduced = bool(doc.get("reduced", False))
    return {label: class_from_json(label, rules, reduced) for label, rules in doc["classes"].items()}


def field_from_json(data, d: int) -> ClassField:
    kind = data.get("kind")
    if kind == PERIODIC:
        f = ClassField.periodic(data["tile"])
        if f.d != d:
            raise ValidationError(f"tile has dimension {f.d}, config dimension is {d}")
        return f
    if kind == RANDOM:
        return ClassField.random(data["probabilities"], int(data["seed"]), d)
    raise ValidationError(f"unknown field kind {kind!r}")


@dataclass(frozen=True)
class RunParams:
    n: int
    N: int = 10_000
    seed: int = 0
    window_radius: int | None = None
    steps: tuple[int, ...] = ()
    l: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    d: int
    D: int
    classes: dict[str, VertexClass]
    field: ClassField
    rho: str | np.ndarray
    X0: tuple[int, ...]
    run: RunParams
    reduction: tuple[str, int] | None
    thresholds: Thresholds
    raw: dict = dc_field(repr=False, default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def directions(self) -> list[np.ndarray]:
        if self.run.l:
            return [np.array(v, dtype=float) for v in self.run.l]
        return [np.eye(self.d)[a] for a in range(self.d)]

    def field_classes(self) -> dict[str, VertexClass]:
        return {label: self.classes[label] for label in self.field.labels}

    def validation_reports(self) -> list[ValidationReport]:
        return [validate_class(c) for c in self.classes.values()]

    def require_valid(self) -> None:
        bad = [r for r in self.validation_reports() if not r.passed]
        if bad:
            raise ValidationError("; ".join(r.message for r in bad))

    def to_json(self) -> dict:
        return self.raw


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys {sorted(unknown)}")
    for key in ("dimension", "internal_dimension", "classes", "field", "run"):
        if key not in raw:
            raise ValidationError(f"config is missing {key!r}")
    d, D = int(raw["dimension"]), int(raw["internal_dimension"])
    if d < 1 or D < 1:
        raise ValidationError("dimension and internal_dimension must be >= 1")
    classes = {label: class_from_json(label, rules) for label, rules in raw["classes"].items()}
    for c in classes.values():
        if c.dim != D or c.spatial_dim != d:
            raise ValidationError(
                f"class {c.label!r} acts on dimension {c.dim} over Z^{c.spatial_dim}, config says {D} over Z^{d}"
            )
    fld = field_from_json(raw["field"], d)
    missing = [x for x in fld.labels if x not in classes]
    if missing:
        raise ValidationError(f"field references undefined classes {missing}")

    init = raw.get("initial_state", {})
    rho = init.get("rho", "maximally-mixed")
    if isinstance(rho, str):
        if rho not in ("maximally-mixed", "invariant"):
            raise ValidationError(f"unknown initial state {rho!r}")
    else:
        rho = DensityOperator(matrix_from_json(rho, "initial state")).mat
        if rho.shape[0] != D:
            raise ValidationError(f"initial state has dimension {rho.shape[0]}, expected {D}")
    X0 = tuple(int(x) for x in init.get("X0", [0] * d))
    if len(X0) != d:
        raise ValidationError(f"X0 {list(X0)} does not have dimension {d}")

    run = raw["run"]
    unknown = set(run) - RUN_KEYS
    if unknown:
        raise ValidationError(f"unknown run keys {sorted(unknown)}")
    if "n" not in run:
        raise ValidationError("run.n is required")
    l = tuple(tuple(float(x) for x in v) for v in run.get("l", []))
    if any(len(v) != d for v in l):
        raise ValidationError(f"every run.l direction needs {d} components")
    params = RunParams(
        n=int(run["n"]), N=int(run.get("N", 10_000)), seed=int(run.get("seed", 0)),
        window_radius=None if run.get("window_radius") is None else int(run["window_radius"]),
        steps=tuple(int(s) for s in run.get("steps", [])), l=l,
    )
    if params.n < 0 or params.N < 2:
        raise ValidationError("run.n must be >= 0 and run.N >= 2")

    reduction = None
    if "reduction" in raw:
        red = raw["reduction"]
        reduction = (str(red["class"]), int(red["length"]))
        if reduction[0] not in fld.labels:
            raise ValidationError(f"reduction class {reduction[0]!r} does not occur in the field")
    thresholds = Thresholds.from_dict(raw.get("thresholds"))
    return ExperimentConfig(d, D, classes, fld, rho, X0, params, reduction, thresholds, raw)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(raw)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: malformed config ({type(exc).__name__}: {exc})") from exc


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``reducible`` or ``irreducible``)."""
    path = Path(__file__).parent / "configs" / f"{name}.cfg"
    if not path.exists():
        raise ValidationError(f"no bundled config {name!r}")
    return path


def build_config(classes: dict[str, VertexClass], fld: ClassField, run: dict, rho="maximally-mixed",
                 X0=None, reduction=None, thresholds=None) -> dict:
    """Raw config document from in-memory objects."""
    any_class = next(iter(classes.values()))
    raw = {
        "dimension": fld.d,
        "internal_dimension": any_class.dim,
        "classes": {label: class_to_json(c) for label, c in classes.items()},
        "field": fld.to_config(),
        "initial_state": {
            "rho": rho if isinstance(rho, str) else matrix_to_json(rho),
            "X0": list(X0) if X0 is not None else [0] * fld.d,
        },
        "run": dict(run),
    }
    if reduction is not None:
        raw["reduction"] = {"class": reduction[0], "length": int(reduction[1])}
    if thresholds is not None:
        raw["thresholds"] = dict(thresholds)
    return raw
