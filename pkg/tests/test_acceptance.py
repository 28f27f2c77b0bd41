"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are collected into the terminal summary) or
directly with ``python tests/test_acceptance.py``.
"""

import time
from functools import lru_cache

import numpy as np
import pytest
from click.testing import CliRunner

from hamdelay.cli import EnsembleConfig, main, run_ensemble, summarize_ensemble
from hamdelay.core import Loop, TimeGrid
from hamdelay.hessian import nullity_report
from hamdelay.kepler import kepler_pipeline
from hamdelay.operator import defect_decay_order, make_operator, random_instance, symmetry_defect
from hamdelay.pair import action, is_commuting
from hamdelay.solver import SolveConfig, bov_solve, loop_radius, solve_system
from hamdelay.symmetry import MonoidElement, proposition_check, solve_pulled_back
from hamdelay.systems import bov_radius, example2_harmonic, example4_bov, example5_coupled_oscillators

RESULTS = []


def record(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return passed


@lru_cache(maxsize=None)
def solved(name):
    start = time.perf_counter()
    if name == "example2":
        cp = solve_system(example2_harmonic(), 1, SolveConfig())
    elif name == "bov":
        cp = bov_solve(1, SolveConfig())
    elif name == "example5":
        cp = solve_system(example5_coupled_oscillators(eps=0.1), 1, SolveConfig())
    else:
        raise KeyError(name)
    return cp, time.perf_counter() - start


@lru_cache(maxsize=None)
def report(name):
    return nullity_report(solved(name)[0])


def criterion_1():
    cfg = EnsembleConfig(trials=500, N=256, seed=20240601)
    start = time.perf_counter()
    summary = summarize_ensemble(run_ensemble(cfg, jobs=1), commuting=False)
    wall = time.perf_counter() - start
    ok = summary["violations"] == 0 and wall < 120
    return record(1, "2n+m kernel bound ensemble", ok,
                  f"{summary['instances']} instances, violations={summary['violations']}, "
                  f"max nullity={summary['max_nullity']}, {wall:.1f} s")


def criterion_2():
    cfg = EnsembleConfig(trials=200, N=256, seed=20240602, commuting=True)
    start = time.perf_counter()
    rows = run_ensemble(cfg, jobs=1)
    wall = time.perf_counter() - start
    summary = summarize_ensemble(rows, commuting=True)
    over = sum(r["nullity"] > 2 * r["n"] for r in rows)
    ok = over == 0 and summary["closed_form_mismatches"] == 0 and wall < 60
    return record(2, "commuting ensemble, 2n bound and closed form", ok,
                  f"{len(rows)} instances, above 2n={over}, closed-form mismatches="
                  f"{summary['closed_form_mismatches']}, {wall:.1f} s")


def _smooth_family():
    """m=1 instance with time-dependent Y and a rotation twist."""
    from scipy.linalg import expm

    from hamdelay.core import complex_structure

    Phi = expm(0.3 * complex_structure(1))

    def Y(t):
        return np.stack([np.cos(2 * np.pi * t), 0.5 + np.sin(4 * np.pi * t)], axis=1)

    return lambda N: make_operator(Phi, [Y], [[1.0]], N)


def criterion_3():
    from scipy.linalg import expm

    from hamdelay.core import complex_structure

    named = {
        "m=0, Phi=I": make_operator(np.eye(2), [], [], 256),
        "m=0, Phi=exp(0.3J)": make_operator(expm(0.3 * complex_structure(1)), [], [], 256),
        "m=1, Y=e1, Phi=I": make_operator(np.eye(2), [lambda t: np.tile([1.0, 0.0], (len(t), 1))], [[1.0]], 256),
    }
    defects = {k: symmetry_defect(spec) for k, spec in named.items()}
    order, family = defect_decay_order(_smooth_family())
    ok = max(defects.values()) <= 1e-6 and order >= 1.9
    detail = ", ".join(f"{k}: {v:.1e}" for k, v in defects.items())
    return record(3, "operator symmetry defect", ok,
                  f"{detail}; time-dependent Y decay order {order:.3f} "
                  f"(defect {family[2]:.1e} at N=256)")


def criterion_4():
    cp, wall = solved("example2")
    mean_err = abs(cp.mean.value[0] - 2 * np.pi)
    radius_err = abs(loop_radius(cp) - 2 * np.sqrt(np.pi))
    ok = mean_err <= 1e-8 and radius_err <= 1e-6 and cp.residual_norm <= 1e-8 and wall < 10
    return record(4, "example 2 solve", ok,
                  f"|mu-2pi|={mean_err:.1e}, |r-2sqrt(pi)|={radius_err:.1e}, "
                  f"residual={cp.residual_norm:.1e}, {wall:.1f} s")


def criterion_5():
    cp, wall = solved("bov")
    start = time.perf_counter()
    rep = report("bov")
    wall += time.perf_counter() - start
    R = loop_radius(cp, positions_only=True)
    err = abs(R - bov_radius(1))
    ok = err <= 1e-6 and not rep.commuting and rep.nullity <= 6 and rep.bound_general == 6 and wall < 30
    return record(5, "BOV solve and dim M + dim V bound", ok,
                  f"R={R:.9f} (|R-(16pi^2)^(-1/6)|={err:.1e}), commuting={rep.commuting}, "
                  f"nullity={rep.nullity} <= {rep.bound_general}, {wall:.1f} s")


def criterion_6():
    cp, _ = solved("bov")
    rep, _ = kepler_pipeline(cp, 512)
    ok = rep["kepler_residual"] <= 1e-5 and rep["round_trip_error"] <= 1e-8 and rep["mu"] == 1.0
    return record(6, "Kepler pipeline", ok,
                  f"kepler residual={rep['kepler_residual']:.1e} (mu=1, N=512), "
                  f"round trip={rep['round_trip_error']:.1e}")


def criterion_7():
    cp, _ = solved("example5")
    rep = report("example5")
    expected = np.linalg.solve([[1.0, 0.1], [0.1, 1.0]], 2 * np.pi * np.ones(2))
    err = float(np.max(np.abs(cp.mean.value - expected)))
    ok = rep.commuting and rep.nullity <= 4 and rep.bound_commuting == 4 and err <= 1e-8
    return record(7, "coupled oscillators and dim M bound", ok,
                  f"commuting={rep.commuting}, nullity={rep.nullity} <= {rep.bound_commuting}, mean error={err:.1e}")


def criterion_8():
    pairs = {name: (report(name).nullity_direct, report(name).nullity_reduced)
             for name in ("example2", "bov", "example5")}
    ok = all(a == b for a, b in pairs.values())
    return record(8, "direct and reduced nullities agree", ok,
                  ", ".join(f"{k}: {a}/{b}" for k, (a, b) in pairs.items()))


def criterion_9():
    start = time.perf_counter()
    system = example2_harmonic()
    g = MonoidElement(2, 0.3)
    cp = solve_pulled_back(system, g)
    rep = proposition_check(system.pair, g, cp.loop, tol=1e-7)
    wall = time.perf_counter() - start
    ok = rep.critical_pullback and rep.critical_acted and rep.agreement and wall < 15
    return record(9, "monoid proposition, g=(2, 0.3)", ok,
                  f"residuals {rep.residual_pullback:.1e} / {rep.residual_acted:.1e}, "
                  f"agreement={rep.agreement}, {wall:.1f} s")


def band_limited_directions(N, dim, count, seed, modes=3):
    rng = np.random.default_rng(seed)
    t = TimeGrid(N).nodes
    k = np.arange(1, modes + 1)
    out = []
    for _ in range(count):
        a0 = rng.standard_normal(dim)
        a = rng.standard_normal((modes, dim)) / k[:, None] ** 2
        b = rng.standard_normal((modes, dim)) / k[:, None] ** 2
        v = a0 + np.cos(2 * np.pi * np.outer(t, k)) @ a + np.sin(2 * np.pi * np.outer(t, k)) @ b
        out.append(v / np.sqrt(np.mean(np.sum(v**2, axis=1))))
    return out


def directional_derivatives(cp, count=20, step=1e-5, seed=0):
    u = cp.loop
    vals = []
    for v in band_limited_directions(u.grid.N, u.dim, count, seed):
        plus = action(cp.pair, Loop(u.grid, u.samples + step * v))
        minus = action(cp.pair, Loop(u.grid, u.samples - step * v))
        vals.append((plus - minus) / (2 * step))
    return np.array(vals)


def criterion_10():
    worst = {name: float(np.max(np.abs(directional_derivatives(solved(name)[0]))))
             for name in ("example2", "bov", "example5")}
    ok = max(worst.values()) <= 1e-5
    return record(10, "action stationarity (20 directions)", ok,
                  ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()))


DETERMINISM_RUNS = [
    ("solve", '{"system": "example2-harmonic", "N": 64}'),
    ("nullity", '{"system": "example5-coupled-oscillators", "N": 64}'),
    ("kepler", '{"N": 128, "solve_N": 64}'),
    ("symmetry", '{"N": 64, "n": 2, "r": 0.3}'),
    ("operator-ensemble", '{"trials": 30, "N": 64}'),
]


def _run_all(root):
    runner = CliRunner()
    blobs = {}
    for cmd, cfg in DETERMINISM_RUNS:
        cfg_path = root / f"{cmd}.json"
        cfg_path.write_text(cfg)
        out = root / cmd
        result = runner.invoke(main, [cmd, "--config", str(cfg_path), "--out", str(out), "--jobs", "1"])
        if result.exit_code != 0:
            raise AssertionError(f"{cmd} exited {result.exit_code}: {result.output}")
        for f in sorted(out.iterdir()):
            if f.name != "timing.json":
                blobs[f"{cmd}/{f.name}"] = f.read_bytes()
    return blobs


def criterion_11(tmp_root=None):
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        first, second = _run_all(Path(a)), _run_all(Path(b))
    differing = [k for k in first if first[k] != second.get(k)]
    ok = not differing and first.keys() == second.keys()
    return record(11, "byte-identical reports on rerun", ok,
                  f"{len(first)} files compared, differing={differing or 'none'}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_criterion(criterion):
    assert criterion()


if __name__ == "__main__":
    outcomes = [c() for c in CRITERIA]
    print(f"{sum(outcomes)}/{len(outcomes)} criteria passed")
    raise SystemExit(0 if all(outcomes) else 1)
