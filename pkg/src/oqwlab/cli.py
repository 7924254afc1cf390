"""Command-line front end: ``oqw <subcommand> --config FILE --out DIR``.

Every subcommand writes ``summary.json`` (with the config hash and master
seed) into the output directory.  Failures write ``error.json`` instead and
exit with status 2 (invalid input) or 3 (runtime failure).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from oqwlab import analysis, evolution, reduction, trajectory
from oqwlab.config import (
    ExperimentConfig, canonical_json, classes_document, load_config, matrix_to_json,
)
from oqwlab.core import DensityOperator
from oqwlab.errors import ValidationError
from oqwlab.lattice import RANDOM
from oqwlab.models import random_density

COMMANDS = ("validate", "invariant", "poisson", "reduce", "evolve", "simulate", "clt-check")
IDENTITY_SAMPLES = 100


def _write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj))


def _header(command: str, cfg: ExperimentConfig, seed: int) -> dict:
    return {"command": command, "config_hash": cfg.hash, "seed": seed}


def _reduced_walk(cfg: ExperimentConfig) -> reduction.ReducedWalk:
    if cfg.reduction is None:
        raise ValidationError("config has no 'reduction' block")
    A, l = cfg.reduction
    return reduction.compose_paths(cfg.field, cfg.field_classes(), A, l)


def resolve_initial_state(cfg: ExperimentConfig) -> np.ndarray:
    """Initial internal state; ``"invariant"`` means the reduced walk's (or the only class's) fixed point."""
    if isinstance(cfg.rho, np.ndarray):
        return cfg.rho
    if cfg.rho == "maximally-mixed":
        return DensityOperator.maximally_mixed(cfg.D).mat
    if cfg.reduction is not None:
        if cfg.field.class_at(cfg.X0) != cfg.reduction[0]:
            raise ValidationError(f"X0 {list(cfg.X0)} is not a {cfg.reduction[0]!r} site")
        return reduction.reduced_invariant_state(_reduced_walk(cfg)).mat
    if len(cfg.field.labels) == 1:
        return analysis.require_unique(cfg.classes[cfg.field.labels[0]]).rho_inf.mat
    raise ValidationError("'invariant' initial state needs a reduction block or a single-class field")


def _field_weights(cfg: ExperimentConfig) -> dict[str, float]:
    if cfg.field.kind == RANDOM:
        return dict(zip(cfg.field.labels, cfg.field.probabilities))
    codes = cfg.field.tile.ravel()
    return {label: float(np.mean(codes == i)) for i, label in enumerate(cfg.field.labels)}


def expected_drift(cfg: ExperimentConfig) -> dict:
    """Drift per original step that the CLT checks centre on, with its provenance."""
    if cfg.reduction is not None:
        walk = _reduced_walk(cfg)
        mP = reduction.reduced_drift(walk).m
        return {"source": "reduction", "m": (mP / walk.l).tolist(),
                "m_per_reduced_step": mP.tolist(), "path_length": walk.l}
    weights = _field_weights(cfg)
    if len(weights) == 1:
        label = next(iter(weights))
        return {"source": f"class {label}", "m": analysis.class_drift(cfg.classes[label]).m.tolist()}
    m = analysis.mixed_mean([(cfg.classes[c], p) for c, p in weights.items()]).m
    source = "mixed_mean" if cfg.field.kind == RANDOM else "mixed_mean (period frequencies)"
    return {"source": source, "m": m.tolist(), "weights": weights}


def cmd_validate(cfg, args, out):
    reports = cfg.validation_reports()
    summary = {
        "passed": all(r.passed for r in reports),
        "classes": [
            {"label": r.label, "passed": r.passed, "deviation": r.deviation, "hermiticity": r.hermiticity,
             "kraus_count": r.kraus_count, "missing_directions": [list(u) for u in r.missing_directions],
             "message": r.message}
            for r in reports
        ],
    }
    if not summary["passed"]:
        raise ValidationError("; ".join(r.message for r in reports if not r.passed))
    return summary


def cmd_invariant(cfg, args, out):
    classes = []
    for label, c in cfg.field_classes().items():
        rep = analysis.require_unique(c)
        classes.append({
            "label": label, "rho_inf": matrix_to_json(rep.rho_inf.mat),
            "fixed_point_residual": rep.fixed_point_residual,
            "eigenvalue_one_multiplicity": rep.eigenvalue_one_multiplicity,
            "m": analysis.mean_vector(c, rep.rho_inf).m.tolist(),
        })
    return {"classes": classes, "expected_drift": expected_drift(cfg)}


def cmd_poisson(cfg, args, out):
    rng = np.random.default_rng(args.seed)
    weights = _field_weights(cfg)
    entries, solved = [], {}
    for label, c in cfg.field_classes().items():
        rho_inf = analysis.require_unique(c).rho_inf
        for l in cfg.directions:
            P = analysis.solve_poisson(c, rho_inf, l)
            solved[label, tuple(l)] = (P, rho_inf)
            dev = max(
                analysis.poisson_identity_check(c, P, random_density(cfg.D, rng), rng.integers(-50, 51, cfg.d))
                for _ in range(IDENTITY_SAMPLES)
            )
            entries.append({"label": label, "l": l.tolist(), "L": matrix_to_json(P.L), "gauge": P.gauge,
                            "residual": P.residual, "identity_max_deviation": dev})
    sigma = []
    for l in cfg.directions:
        tab = [(cfg.classes[c], weights[c], *solved[c, tuple(l)]) for c in weights]
        # mixed-class reference state: density-weighted class invariant states
        rho_ref = sum(p * rho.mat for _, p, _, rho in tab)
        for reading in ("additive", "multiplicative"):
            est = analysis.analytic_sigma(tab, l, rho_ref, reading)
            sigma.append({"l": l.tolist(), "reading": reading, "value": est.value, "raw": est.raw,
                          "experimental": est.experimental})
    return {"poisson": entries, "analytic_sigma": sigma}


def cmd_reduce(cfg, args, out):
    if cfg.reduction is None:
        raise ValidationError("config has no 'reduction' block")
    A, l = cfg.reduction
    if not reduction.is_reducible(cfg.field, A, l, cfg.field_classes()):
        return {"reducible": False, "class": A, "length": l}
    walk = _reduced_walk(cfg)
    label = f"{A}^{l}"
    _write_json(out / "reduced_class.json", classes_document({label: walk.to_vertex_class(label)}, reduced=True))
    rho0 = resolve_initial_state(cfg)
    mP = reduction.reduced_drift(walk).m
    counts: dict[tuple, int] = {}
    for op in walk.operators:
        counts[op.displacement] = counts.get(op.displacement, 0) + 1
    equivalence = []
    for k in (1, 2, 3):
        rep = reduction.equivalence_check(cfg.field, cfg.field_classes(), walk, rho0, k)
        equivalence.append({"reduced_steps": k, "max_deviation": rep.max_deviation, "passed": rep.passed})
    return {
        "reducible": True, "class": A, "length": l, "reference_site": list(walk.reference_site),
        "operator_count": len(walk.operators),
        "displacements": [{"displacement": list(dsp), "operators": n} for dsp, n in counts.items()],
        "completeness_deviation": walk.completeness_deviation(),
        "rho_inf": matrix_to_json(reduction.reduced_invariant_state(walk).mat),
        "m_per_reduced_step": mP.tolist(), "m_per_original_step": (mP / l).tolist(),
        "equivalence": equivalence, "exported": "reduced_class.json",
    }


def cmd_evolve(cfg, args, out):
    steps = sorted(set(args.steps or cfg.run.steps or (cfg.run.n,)))
    classes = cfg.field_classes()
    reach = max(c.reach for c in classes.values())
    radius = cfg.run.window_radius or steps[-1] * reach + 1
    window = evolution.Window.centered(cfg.X0, radius)
    ev = evolution.Evolver(cfg.field, classes, window, threads=args.threads)
    state = evolution.init_delta(resolve_initial_state(cfg), cfg.X0, window)
    records, min_eig = [], 0.0
    for k in range(1, steps[-1] + 1):
        state = ev.step(state)
        min_eig = min(min_eig, evolution.min_eigenvalue(state))
        if k in steps:
            pf = evolution.marginal(state)
            pf.to_csv(out / f"marginal_n{k}.csv")
            coords, values = evolution.cross_section(pf, 0, list(cfg.X0[1:]))
            evolution.write_cross_section(out / f"xsection_n{k}.csv", coords, values, axis=0)
            mean, cov = evolution.field_moments(pf)
            records.append({
                "n": k, "total_trace": state.total, "trace_drift": abs(state.total - 1.0),
                "mean": mean.tolist(), "mean_per_step": ((mean - np.array(cfg.X0)) / k).tolist(),
                "covariance": cov.tolist(), "sites": int(np.count_nonzero(state.mass)),
            })
    return {"window": {"lo": list(window.lo), "shape": list(window.shape)}, "steps": records,
            "min_eigenvalue": min_eig}


def _simulate(cfg, args, out):
    rho0 = resolve_initial_state(cfg)
    X = trajectory.simulate_endpoints(cfg.field, cfg.field_classes(), rho0, cfg.X0, cfg.run.n,
                                      cfg.run.N, args.seed, threads=args.threads)
    trajectory.write_endpoints(out / "endpoints.csv", X)
    return trajectory.endpoint_statistics(X - np.array(cfg.X0), cfg.run.n)


def cmd_simulate(cfg, args, out):
    stats = _simulate(cfg, args, out)
    return {"statistics": stats.to_dict(), "expected_drift": expected_drift(cfg)}


def cmd_clt_check(cfg, args, out):
    stats = _simulate(cfg, args, out)
    drift = expected_drift(cfg)
    report = trajectory.clt_report(stats, drift["m"], cfg.thresholds)
    sigma = [{"l": l.tolist(), "empirical": trajectory.empirical_sigma(stats, l).value} for l in cfg.directions]
    return {"statistics": stats.to_dict(), "expected_drift": drift, "report": report.to_dict(),
            "empirical_sigma": sigma}


HANDLERS = {
    "validate": cmd_validate, "invariant": cmd_invariant, "poisson": cmd_poisson, "reduce": cmd_reduce,
    "evolve": cmd_evolve, "simulate": cmd_simulate, "clt-check": cmd_clt_check,
}


def _steps(text: str) -> list[int]:
    try:
        steps = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad step list {text!r}")
    if not steps or min(steps) < 1:
        raise argparse.ArgumentTypeError("steps must be positive integers")
    return steps


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oqw", description="Open quantum walk experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; never changes results")
    p.add_argument("--steps", type=_steps, default=None, help="comma-separated evolve steps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg = None
    try:
        cfg = load_config(args.config)
        args.seed = cfg.run.seed if args.seed is None else args.seed
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if args.command != "validate":
            cfg.require_valid()
        body = HANDLERS[args.command](cfg, args, out)
    except Exception as exc:
        code = 2 if isinstance(exc, ValidationError) else 3
        record = {"command": args.command, "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
        if cfg is not None:
            record["config_hash"] = cfg.hash
            record["seed"] = args.seed
        _write_json(out / "error.json", record)
        print(f"oqw {args.command}: {exc}", file=sys.stderr)
        return code
    _write_json(out / "summary.json", {**_header(args.command, cfg, args.seed), **body})
    return 0


if __name__ == "__main__":
    sys.exit(main())
