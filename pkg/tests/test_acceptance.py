"""Acceptance criteria, each at its stated tolerance, one pass/fail line per criterion.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``.
"""
import json
import time

import numpy as np
import pytest

from oqwlab.analysis import (
    analytic_sigma, class_drift, invariant_state, kernel_image_split, mixed_mean,
    poisson_identity_check, require_unique, solve_poisson,
)
from oqwlab.cli import main, resolve_initial_state
from oqwlab.config import bundled_config, load_config
from oqwlab.core import superop_matrix, validate_class
from oqwlab.evolution import Evolver, Window, init_delta, marginal
from oqwlab.lattice import ClassField
from oqwlab.models import random_class, random_density
from oqwlab.reduction import compose_paths, equivalence_check, is_reducible, reduced_drift
from oqwlab.trajectory import endpoint_statistics, monte_carlo, simulate_endpoints


def _cli(*args):
    return main([str(a) for a in args])


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_criterion_01_completeness(class_a, class_b, criterion):
    t = time.perf_counter()
    reports = [validate_class(c) for c in (class_a, class_b)]
    dt = time.perf_counter() - t
    dev = max(r.deviation for r in reports)
    ok = all(r.passed for r in reports) and dev <= 1e-12 and dt < 1
    assert criterion(1, ok, f"classes A, B complete; max deviation {dev:.2e}; {dt:.3f} s")


def test_criterion_02_invariant_states(class_a, class_b, criterion):
    t = time.perf_counter()
    reps = [invariant_state(c) for c in (class_a, class_b)]
    dt = time.perf_counter() - t
    mult = [r.eigenvalue_one_multiplicity for r in reps]
    res = max(r.fixed_point_residual for r in reps)
    ok = mult == [1, 1] and res <= 1e-10 and dt < 1
    assert criterion(2, ok, f"multiplicities {mult}; max residual {res:.2e}; {dt:.3f} s")


def test_criterion_03_kernel_image(criterion):
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    good, worst = 0, 0.0
    for dim in (2, 3, 4):
        for _ in range(20):
            c = random_class(dim, 2, rng, per_direction=int(rng.integers(1, 3)))
            split = kernel_image_split(np.eye(dim * dim) - superop_matrix(c))
            good += split.kernel_dim + split.image_dim == dim * dim and split.direct_sum_ok
            worst = max(worst, split.overlap)
    dt = time.perf_counter() - t
    ok = good == 60 and dt < 5
    assert criterion(3, ok, f"{good}/60 channels split as a direct sum; max overlap {worst:.1e}; {dt:.2f} s")


def test_criterion_04_poisson(class_a, class_b, drift, criterion):
    t = time.perf_counter()
    res = 0.0
    for c in (class_a, class_b):
        rho = require_unique(c).rho_inf
        for l in ((1, 0), (0, 1)):
            res = max(res, solve_poisson(c, rho, l).residual)
    L = solve_poisson(drift, require_unique(drift).rho_inf, [1.0]).L
    closed = float(np.max(np.abs(L - np.diag([1, -1]))))
    dt = time.perf_counter() - t
    ok = res <= 1e-9 and closed <= 1e-12 and dt < 1
    assert criterion(4, ok, f"max residual {res:.2e}; damp-drift |L - diag(1,-1)| {closed:.1e}; {dt:.3f} s")


def test_criterion_05_identity(class_a, class_b, criterion):
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    worst = 0.0
    for c in (class_a, class_b):
        rho_inf = require_unique(c).rho_inf
        for _ in range(100):
            l = rng.normal(size=2)
            P = solve_poisson(c, rho_inf, l)
            worst = max(worst, poisson_identity_check(c, P, random_density(4, rng), rng.integers(-100, 101, 2)))
    dt = time.perf_counter() - t
    ok = worst <= 1e-9 and dt < 5
    assert criterion(5, ok, f"max deviation {worst:.2e} over 200 draws; {dt:.2f} s")


def test_criterion_06_reduction(checkerboard, ab_classes, criterion):
    reducible = is_reducible(checkerboard, "A", 2, ab_classes)
    walk = compose_paths(checkerboard, ab_classes, "A", 2)
    dev = walk.completeness_deviation()
    eq = equivalence_check(checkerboard, ab_classes, walk, np.eye(4) / 4)
    ok = reducible and len(walk.operators) == 64 and dev <= 1e-12 and eq.max_deviation <= 1e-12
    assert criterion(6, ok, f"reducible={reducible}; {len(walk.operators)} operators; completeness {dev:.1e}; "
                            f"2-step vs reduced 1-step max deviation {eq.max_deviation:.1e}")


def test_criterion_07_evolution(tmp_path, criterion):
    cfg = load_config(bundled_config("reducible"))
    out = tmp_path / "evolve"
    t = time.perf_counter()
    code = _cli("evolve", "--config", bundled_config("reducible"), "--out", out, "--steps", "10,50,100,200")
    dt = time.perf_counter() - t
    s = _summary(out)
    files = all((out / f"{kind}_n{k}.csv").exists() for kind in ("marginal", "xsection") for k in (10, 50, 100, 200))
    drift = max(st["trace_drift"] for st in s["steps"])
    last = s["steps"][-1]
    walk = compose_paths(cfg.field, cfg.field_classes(), "A", 2)
    mean_gap = float(np.max(np.abs(np.array(last["mean_per_step"]) - reduced_drift(walk).m / 2)))
    ok = (code == 0 and s["window"]["shape"] == [401, 401] and last["n"] == 200 and drift <= 1e-9
          and s["min_eigenvalue"] >= -1e-9 and files and mean_gap <= 1e-3 and dt < 120)
    assert criterion(7, ok, f"trace drift {drift:.1e}; min eigenvalue {s['min_eigenvalue']:.1e}; "
                            f"mean/n vs m_P/2 gap {mean_gap:.1e}; 8 CSVs={files}; {dt:.1f} s")


def test_criterion_08_trajectories_vs_evolution(criterion):
    cfg = load_config(bundled_config("reducible"))
    classes = cfg.field_classes()
    rho0 = resolve_initial_state(cfg)
    N = 100_000
    window = Window.centered(cfg.X0, 8)
    ev = Evolver(cfg.field, classes, window)
    state = init_delta(rho0, cfg.X0, window)
    worst, compared = 0.0, 0
    for n in range(1, 7):
        state = ev.step(state)
        exact = marginal(state)
        X = simulate_endpoints(cfg.field, classes, rho0, cfg.X0, n, N, cfg.run.seed)
        sites, counts = np.unique(X, axis=0, return_counts=True)
        freq = {tuple(s): c / N for s, c in zip(sites.tolist(), counts)}
        coords, p = exact.sites()
        assert set(freq) <= set(map(tuple, coords.tolist()))
        for x, q in zip(map(tuple, coords.tolist()), p):
            if q >= 1e-4:
                compared += 1
                worst = max(worst, abs(freq.get(x, 0.0) - q) / (4 * np.sqrt(q * (1 - q) / N)))
    ok = worst <= 1
    assert criterion(8, ok, f"{compared} site probabilities; worst deviation {worst:.2f} of the 4-sigma bound")


def _clt(tmp_path, name, threads=4):
    out = tmp_path / name
    t = time.perf_counter()
    code = _cli("clt-check", "--config", bundled_config(name), "--out", out, "--threads", threads)
    return code, _summary(out), time.perf_counter() - t


def _describe(report):
    return "; ".join(
        f"{c['name']}[{c['component']}]={c['value']:.4f}{'' if c['passed'] else ' FAILS'}"
        for c in report["checks"]
    )


def test_criterion_09_clt_reducible(tmp_path, criterion):
    code, s, dt = _clt(tmp_path, "reducible")
    drift = s["expected_drift"]
    rep = s["report"]
    both = "m_per_reduced_step" in drift and drift["path_length"] == 2
    ok = code == 0 and rep["passed"] and both and dt < 120
    assert criterion(9, ok, f"m_P={np.round(drift['m_per_reduced_step'], 6).tolist()} per reduced step, "
                            f"{np.round(drift['m'], 6).tolist()} per step; {_describe(rep)}; {dt:.1f} s")


def test_criterion_10_clt_irreducible(tmp_path, criterion):
    cfg = load_config(bundled_config("irreducible"))
    code, s, dt = _clt(tmp_path, "irreducible")
    m = mixed_mean([(cfg.classes["A"], 0.5), (cfg.classes["B"], 0.5)]).m
    rep = s["report"]
    ok = code == 0 and np.allclose(s["expected_drift"]["m"], m) and rep["passed"] and dt < 300
    assert criterion(10, ok, f"mixed_mean={np.round(m, 6).tolist()}, observed mean/n="
                             f"{np.round(s['statistics']['mean_per_step'], 6).tolist()}; {_describe(rep)}; {dt:.1f} s")


def test_criterion_11_classical(coin, drift, line, criterion):
    n, N = 1000, 10_000
    s = monte_carlo(line, {"A": coin}, np.eye(1), (0,), n, N, seed=11, threads=4)
    mean_ok = abs(s.mean[0] / n) <= 4 / np.sqrt(N * n)
    var = s.normalized_cov[0, 0]
    from oqwlab.trajectory import clt_report
    d = monte_carlo(line, {"A": drift}, require_unique(drift).rho_inf, (0,), n, N, seed=11)
    rep = clt_report(d, class_drift(drift))
    ok = (mean_ok and abs(var - 1) <= 0.05 and d.mean[0] == n and d.cov[0, 0] == 0
          and rep.passed and rep.verdict == "degenerate Gaussian")
    assert criterion(11, ok, f"coin mean/n={s.mean[0] / n:.2e}, variance={var:.4f}; "
                             f"damp-drift mean/n={d.mean[0] / n}, variance={d.cov[0, 0]}, verdict '{rep.verdict}'")


def test_criterion_12_homogeneous_sigma(class_a, criterion):
    n, N = 1000, 10_000
    rho = require_unique(class_a).rho_inf
    s = monte_carlo(ClassField.uniform("A", 2), {"A": class_a}, rho, (0, 0), n, N, seed=12, threads=4)
    parts, ok = [], True
    for l in (np.array([1.0, 0]), np.array([0, 1.0])):
        P = solve_poisson(class_a, rho, l)
        analytic = analytic_sigma([(class_a, 1.0, P, rho)], l, rho).value
        empirical = float(l @ s.normalized_cov @ l)
        rel = abs(analytic - empirical) / empirical
        ok &= rel <= 0.05
        parts.append(f"l={l.astype(int).tolist()}: analytic {analytic:.4f} vs empirical {empirical:.4f} ({rel:.1%})")
    assert criterion(12, ok, "; ".join(parts))


def test_criterion_13_determinism(tmp_path, criterion):
    blobs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        assert _cli("simulate", "--config", bundled_config("reducible"), "--out", out, "--threads", threads) == 0
        blobs.append((out / "summary.json").read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    assert criterion(13, ok, "summary.json byte-identical for --threads 1, 1, 4" if ok else "summaries differ")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
