"""Command line experiment runner.

Every subcommand reads an optional strict JSON config, applies flag
overrides, writes deterministic CSV/JSON payloads into ``--out`` and puts
wall-clock timing into a separate ``timing.json``. Exit codes: 0 all checks
passed, 1 a bound or residual check failed, 2 usage or config error,
3 numerical or solver failure.
"""

import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal, Optional

import click
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .exceptions import HamDelayError, InvalidArgumentError, NumericalError, PreconditionError, SolverFailure

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
LOG_ENV = "HAMDELAY_LOG_LEVEL"

log = logging.getLogger("hamdelay.cli")


# ---------------------------------------------------------------- configs


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EnsembleConfig(_Strict):
    trials: int = Field(500, ge=0)
    n_values: list[int] = [1, 2, 3]
    m_values: list[int] = [0, 1, 2, 3, 4]
    N: int = Field(256, ge=8)
    seed: int = Field(0, ge=0)
    commuting: bool = False
    twist: Literal["random", "identity", "alternate"] = "alternate"
    symmetry_trials: int = Field(2, ge=0)
    atol: Optional[float] = None
    rtol: float = 1e-10
    method: Literal["auto", "dense", "sparse"] = "sparse"

    @field_validator("n_values")
    @classmethod
    def _positive(cls, v):
        if not v or min(v) < 1:
            raise ValueError("n_values must be a non-empty list of integers >= 1")
        return v

    @field_validator("m_values")
    @classmethod
    def _nonnegative(cls, v):
        if not v or min(v) < 0:
            raise ValueError("m_values must be a non-empty list of integers >= 0")
        return v


class SystemConfig(_Strict):
    system: str = "example2-harmonic"
    params: dict = {}
    k: int = Field(1, ge=1)
    N: int = Field(256, ge=8)
    seed: int = Field(0, ge=0)
    damping: float = Field(0.5, gt=0, le=1)
    inner_tol: float = 1e-10
    outer_tol: float = 1e-10
    residual_tol: float = 1e-8
    max_iter: int = Field(200, ge=1)
    method: Literal["newton", "fixed-point"] = "newton"
    mu0: Optional[list[float]] = None
    guess: Optional[list[float]] = None


class NullityConfig(SystemConfig):
    atol: Optional[float] = None
    rtol: float = 1e-10
    refine: bool = True


class KeplerConfig(_Strict):
    k: int = Field(1, ge=1)
    N: int = Field(512, ge=8)
    solve_N: int = Field(256, ge=8)
    seed: int = Field(0, ge=0)
    tol: float = 1e-5
    min_grid: int = 64


class SymmetryConfig(SystemConfig):
    n: int = 2
    r: float = 0.3
    tol: float = 1e-7

    @field_validator("n")
    @classmethod
    def _nonzero(cls, v):
        if v == 0:
            raise ValueError("n must be nonzero")
        return v


# ---------------------------------------------------------------- io helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def dump_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def write_loop_csv(path, times, samples, names):
    """Header row then ``t, coordinates`` at 17 significant digits."""
    data = np.column_stack([times, samples])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(["t", *names]), comments="")


def _coordinate_names(n):
    return [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]


class _Run:
    """Shared state of one CLI invocation."""

    def __init__(self, command, config_model, config_path, out, overrides):
        self.command = command
        self.out = Path(out)
        raw = {}
        if config_path:
            try:
                raw = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise click.UsageError(f"cannot read config {config_path}: {exc}") from exc
            if not isinstance(raw, dict):
                raise click.UsageError("config must be a JSON object")
        raw.update({k: v for k, v in overrides.items() if v is not None and k in config_model.model_fields})
        try:
            self.config = config_model(**raw)
        except ValidationError as exc:
            raise click.UsageError(f"invalid config: {exc}") from exc
        self.out.mkdir(parents=True, exist_ok=True)
        self.start = time.perf_counter()

    def finish(self, results, passed, extra_files=()):
        report = {
            "command": self.command,
            "version": __version__,
            "seed": getattr(self.config, "seed", None),
            "config": self.config.model_dump(),
            "results": results,
            "passed": bool(passed),
        }
        dump_json(self.out / "report.json", report)
        wall = time.perf_counter() - self.start
        dump_json(self.out / "timing.json", {"command": self.command, "wall_seconds": wall})
        click.echo(f"{self.command}: {'PASS' if passed else 'FAIL'} ({wall:.2f} s) -> {self.out}", err=True)
        return EXIT_OK if passed else EXIT_CHECK


def _guarded(fn):
    """Map package exceptions onto the exit-code contract."""

    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except click.UsageError:
            raise
        except (InvalidArgumentError, PreconditionError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except (SolverFailure, NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            ctx = click.get_current_context()
            out = ctx.params.get("out")
            if out:
                Path(out).mkdir(parents=True, exist_ok=True)
                dump_json(Path(out) / "failure.json", {
                    "error": type(exc).__name__, "message": str(exc),
                    "residual": getattr(exc, "residual", None), "history": getattr(exc, "history", []),
                })
            sys.exit(EXIT_NUMERIC)
        except HamDelayError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        sys.exit(code)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _common(f):
    f = click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker processes.")(f)
    f = click.option("--grid", "grid", type=click.IntRange(min=8), default=None, help="Grid size N.")(f)
    f = click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), default=None)(f)
    f = click.option("--out", type=click.Path(file_okay=False), default="out", show_default=True)(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)(f)
    return f


@click.group()
@click.version_option(__version__)
def main():
    """Numerical experiments for mean-field Hamiltonian delay equations."""
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        raise click.UsageError(f"{LOG_ENV}={level!r} is not a logging level")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------- ensemble


def _ensemble_instance(args):
    from .operator import commuting_kernel, operator_nullity, random_instance, symmetry_defect

    index, cfg = args
    n = cfg["n_values"][index % len(cfg["n_values"])]
    m = cfg["m_values"][(index // len(cfg["n_values"])) % len(cfg["m_values"])]
    twist = cfg["twist"]
    if twist == "alternate":
        twist = "identity" if index % 2 else "random"
    seed = np.random.SeedSequence([cfg["seed"], index])
    spec = random_instance(n, m, np.random.default_rng(seed), commuting=cfg["commuting"], N=cfg["N"], twist=twist)
    rep = operator_nullity(spec, cfg["atol"], cfg["rtol"], cfg["method"])
    defect = symmetry_defect(spec, cfg["symmetry_trials"], seed=index) if cfg["symmetry_trials"] else float("nan")
    row = {
        "index": index, "n": n, "m": m, "twist": twist,
        "nullity": rep.nullity, "bound": rep.bound, "bound_ok": rep.bound_satisfied,
        "closed_form_nullity": None, "closed_form_ok": None,
        "symmetry_defect": defect,
        "min_singular_value": float(np.min(rep.singular_values)),
        "max_singular_value": float(np.max(rep.singular_values)),
    }
    if cfg["commuting"]:
        ck = commuting_kernel(spec)
        row["closed_form_nullity"] = ck.dimension
        row["closed_form_ok"] = ck.dimension == rep.nullity and rep.nullity <= 2 * n
    return row


ENSEMBLE_COLUMNS = ["index", "n", "m", "twist", "nullity", "bound", "bound_ok", "closed_form_nullity",
                    "closed_form_ok", "symmetry_defect", "min_singular_value", "max_singular_value"]


def run_ensemble(cfg, jobs=1):
    """Rows for every instance, ordered by index regardless of scheduling."""
    payload = [(i, cfg.model_dump()) for i in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_ensemble_instance, payload, chunksize=8))
    return [_ensemble_instance(p) for p in payload]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def summarize_ensemble(rows, commuting):
    violations = sum(not r["bound_ok"] for r in rows)
    mismatches = sum(r["closed_form_ok"] is False for r in rows) if commuting else 0
    defects = [r["symmetry_defect"] for r in rows if np.isfinite(r["symmetry_defect"])]
    return {
        "instances": len(rows),
        "violations": violations,
        "closed_form_mismatches": mismatches,
        "max_nullity": max((r["nullity"] for r in rows), default=0),
        "max_nullity_minus_bound": max((r["nullity"] - r["bound"] for r in rows), default=None),
        "max_symmetry_defect": max(defects, default=None),
    }


@main.command("operator-ensemble")
@_common
@_guarded
def operator_ensemble(config_path, out, seed, grid, jobs):
    """Random twisted-loop operators against the 2n + m kernel bound."""
    run = _Run("operator-ensemble", EnsembleConfig, config_path, out, {"seed": seed, "N": grid})
    rows = run_ensemble(run.config, jobs or os.cpu_count() or 1)
    with open(run.out / "ensemble.csv", "w") as fh:
        fh.write(",".join(ENSEMBLE_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in ENSEMBLE_COLUMNS) + "\n")
    summary = summarize_ensemble(rows, run.config.commuting)
    return run.finish(summary, summary["violations"] == 0 and summary["closed_form_mismatches"] == 0)


# ---------------------------------------------------------------- solves


def _solve_config(cfg):
    from .solver import SolveConfig

    return SolveConfig(
        N=cfg.N, inner_tol=cfg.inner_tol, outer_tol=cfg.outer_tol, damping=cfg.damping,
        max_outer=cfg.max_iter, residual_tol=cfg.residual_tol, method=cfg.method,
        mu0=None if cfg.mu0 is None else tuple(cfg.mu0), guess=None if cfg.guess is None else tuple(cfg.guess),
    )


def solve_from_config(cfg):
    """Critical point for a :class:`SystemConfig`."""
    from .solver import bov_solve, solve_system
    from .systems import get_system

    try:
        system = get_system(cfg.system, **cfg.params)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad params for {cfg.system}: {exc}") from exc
    sc = _solve_config(cfg)
    if cfg.system == "example4-bov" and cfg.mu0 is None:
        return system, bov_solve(cfg.k, sc, return_info=True)
    return system, solve_system(system, cfg.k, sc, return_info=True)


def critical_point_summary(cp, info=None):
    from .pair import action
    from .solver import loop_radius

    out = {
        "system": cp.pair.name,
        "mean": cp.mean.value,
        "covector": cp.covector,
        "residual": cp.residual_norm,
        "action": action(cp.pair, cp.loop),
        "radius": loop_radius(cp),
        "position_radius": loop_radius(cp, positions_only=True),
        "N": cp.loop.grid.N,
    }
    if info is not None:
        out["iterations"] = info.n_iter
        out["polish_iterations"] = info.polish_iterations
    return out


@main.command("solve")
@_common
@_guarded
def solve(config_path, out, seed, grid, jobs):
    """Find a critical point of a registered system."""
    run = _Run("solve", SystemConfig, config_path, out, {"seed": seed, "N": grid})
    _, (cp, info) = solve_from_config(run.config)
    write_loop_csv(run.out / "loop.csv", cp.loop.grid.nodes, cp.loop.samples, _coordinate_names(cp.pair.n))
    summary = critical_point_summary(cp, info)
    dump_json(run.out / "critical_point.json", summary)
    return run.finish(summary, cp.residual_norm <= run.config.residual_tol)


@main.command("nullity")
@_common
@_guarded
def nullity(config_path, out, seed, grid, jobs):
    """Hessian nullity by the direct and reduced routes, with both bounds."""
    from .hessian import nullity_report

    run = _Run("nullity", NullityConfig, config_path, out, {"seed": seed, "N": grid})
    cfg = run.config
    _, (cp, info) = solve_from_config(cfg)
    rep = nullity_report(cp, atol=cfg.atol, rtol=cfg.rtol, refine=cfg.refine)
    results = {"critical_point": critical_point_summary(cp, info), "nullity": rep.to_dict()}
    dump_json(run.out / "nullity.json", results["nullity"])
    return run.finish(results, rep.passed)


@main.command("kepler")
@_common
@_guarded
def kepler(config_path, out, seed, grid, jobs):
    """BOV circular solution, time transform and Kepler residual."""
    from .kepler import kepler_pipeline
    from .solver import SolveConfig, bov_solve

    run = _Run("kepler", KeplerConfig, config_path, out, {"seed": seed, "N": grid})
    cfg = run.config
    cp = bov_solve(cfg.k, SolveConfig(N=min(cfg.solve_N, cfg.N)))
    rep, x = kepler_pipeline(cp, cfg.N)
    fine, x_fine = kepler_pipeline(cp, 2 * cfg.N)
    deviation = float(np.max(np.abs(x_fine.samples[::2] - x.samples)))
    rep["refinement"] = {
        "N_fine": 2 * cfg.N,
        "kepler_residual_fine": fine["kepler_residual"],
        "orbit_deviation": deviation,
        "resolved": cfg.N >= cfg.min_grid and deviation <= cfg.tol,
    }
    write_loop_csv(run.out / "orbit.csv", x.grid.nodes, x.samples, ["re_x", "im_x"])
    passed = (
        rep["kepler_residual"] <= cfg.tol and rep["transform_monotone"]
        and rep["round_trip_error"] <= 1e-8 and rep["refinement"]["resolved"]
    )
    return run.finish(rep, passed)


@main.command("symmetry")
@_common
@_guarded
def symmetry(config_path, out, seed, grid, jobs):
    """Solve the pulled-back problem, act on the solution, compare residuals."""
    from .symmetry import MonoidElement, proposition_check, solve_pulled_back
    from .systems import get_system

    run = _Run("symmetry", SymmetryConfig, config_path, out, {"seed": seed, "N": grid})
    cfg = run.config
    g = MonoidElement(cfg.n, cfg.r)
    system = get_system(cfg.system, **cfg.params)
    cp = solve_pulled_back(system, g, cfg.k, _solve_config(cfg))
    rep = proposition_check(system.pair, g, cp.loop, cfg.tol)
    results = {"element": {"n": g.n, "r": float(g.r)}, "pulled_back_mean": cp.mean.value, **rep.to_dict()}
    # reversal (n < 0) is report-only
    passed = rep.agreement and (g.n < 0 or (rep.critical_pullback and rep.critical_acted))
    return run.finish(results, passed)


if __name__ == "__main__":
    main()
