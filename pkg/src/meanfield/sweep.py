"""Epsilon sweeps: build, evolve and measure quantum states against their classical limits.

Each ``eps`` is an independent job.  Rows are gathered and written by one
writer in sorted order, so identical configurations give byte-identical
``results.csv`` files regardless of the number of workers.  Wall-clock
timings go to the manifest only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .basis import fock_dimension, sector_dimension
from .config import ExperimentConfig
from .dynamics import assemble_hamiltonian, dyson_report, evolve, hartree_integrate
from .fock import coherent_cutoff, hermite_number, number_moment
from .wigner import (
    EpsilonFamily,
    char_function,
    escaping_schedule,
    limit_char,
    meanfield_distance,
    reduced_density,
)

RESULT_COLUMNS = [
    "family", "eps", "t", "probe_id", "k_or_p", "measured_re", "measured_im",
    "limit_re", "limit_im", "abs_gap", "n_max_used",
]

SUPERPOSITION_NOTE = (
    "superposition states are normalized before measurement; limit targets are the "
    "mass-one mixture with weights 1/2 (circle of u) and 1/2 (point at f)"
)


class ResourceCapError(RuntimeError):
    """The requested eps needs a truncation above the configured dimension cap."""


def build_family(config: ExperimentConfig) -> EpsilonFamily:
    fam = config.family
    schedule = escaping_schedule(config.eps, fam.escaping_modes) if fam.escaping_modes else None
    return EpsilonFamily(fam.kind, fam.f, u=fam.u, schedule=schedule, tail_tol=config.tail_tol)


def predicted_n_max(family: EpsilonFamily, eps: float) -> int:
    """Truncation the family's state construction will choose at ``eps``."""
    k = hermite_number(eps)
    if family.kind == "hermite":
        return k
    m = coherent_cutoff(family.vector(eps), eps, family.tail_tol)
    return max(m, k) if family.kind == "superposition" else m


def feasible_min_eps(family: EpsilonFamily, cap: int, limit: int = 100_000) -> float | None:
    """Smallest ``eps = 1/n`` whose truncated Fock space fits under ``cap``."""
    f = family.vector(next(iter(family.schedule))) if family.schedule else family.f
    probe = EpsilonFamily(family.kind, f, u=family.u, tail_tol=family.tail_tol)
    best = None
    for n in range(1, limit + 1):
        if fock_dimension(family.d, predicted_n_max(probe, 1.0 / n)) > cap:
            break
        best = 1.0 / n
    return best


def check_resources(config: ExperimentConfig, family: EpsilonFamily | None = None) -> None:
    family = family or build_family(config)
    for eps in config.eps:
        n_max = predicted_n_max(family, eps)
        dim = fock_dimension(config.d, n_max)
        if dim > config.dimension_cap:
            best = feasible_min_eps(family, config.dimension_cap)
            hint = f"smallest feasible eps is about {best:.6g}" if best else "no eps is feasible"
            raise ResourceCapError(
                f"eps={eps:.6g} needs n_max={n_max} (Fock dimension {dim} > cap "
                f"{config.dimension_cap}); {hint}"
            )


def limit_trajectories(config: ExperimentConfig, family: EpsilonFamily) -> dict:
    """Hartree trajectories of every vector the limit measure is built from."""
    vectors = {"f": family.f}
    if family.kind == "superposition":
        vectors["u"] = family.u
    grid = sorted(set([0.0] + list(config.times)))
    return {name: hartree_integrate(v, grid, config.dt, config.A, config.interaction)
            for name, v in vectors.items()}


def _flow_at(trajectories: dict, family: EpsilonFamily, t: float):
    lookup = {"f": family.f, "u": family.u}

    def flow(z):
        for name, traj in trajectories.items():
            if np.array_equal(z, lookup[name]):
                return traj.at(t)
        raise KeyError("vector is not part of the limit measure")

    return flow


def _fmt(x) -> str:
    return repr(float(x))


def _row(kind, eps, t, probe_id, k, measured, limit, n_max) -> dict:
    measured, limit = complex(measured), complex(limit)
    return {
        "family": kind, "eps": _fmt(eps), "t": _fmt(t), "probe_id": probe_id, "k_or_p": str(k),
        "measured_re": _fmt(measured.real), "measured_im": _fmt(measured.imag),
        "limit_re": _fmt(limit.real), "limit_im": _fmt(limit.imag),
        "abs_gap": _fmt(abs(measured - limit)), "n_max_used": str(n_max),
        "_key": (1.0 / eps, t, probe_id, k),
    }


def run_eps(config: ExperimentConfig, eps: float, trajectories: dict, dyson: bool = False):
    """All rows and diagnostics for one value of ``eps``."""
    start = time.perf_counter()
    family = build_family(config)
    state = family.state(eps)
    dynamic = any(t > 0 for t in config.times)
    H = (assemble_hamiltonian(config.A, config.interaction, eps, state.n_max,
                              verify=config.verify_routes) if dynamic else None)
    mu0 = family.limit()
    rows, norm_drift = [], 0.0
    width = len(str(len(config.probes) - 1))
    norm0 = state.norm2()
    for t in config.times:
        ut = state if t == 0 else evolve(state, t, H)
        norm_drift = max(norm_drift, abs(ut.norm2() - norm0))
        mut = mu0.pushforward(_flow_at(trajectories, family, t))
        for j, xi in enumerate(config.probes):
            rows.append(_row(config.family.kind, eps, t, f"xi{j:0{width}d}", 0,
                             char_function(ut, xi), limit_char(mut, xi), state.n_max))
        for p in config.orders:
            gamma = reduced_density(ut, p)
            if gamma.is_zero:
                continue
            dist = meanfield_distance(gamma, mut, p)
            rows.append(_row(config.family.kind, eps, t, "gamma", p, dist, 0.0, state.n_max))
        for k in config.moments:
            rows.append(_row(config.family.kind, eps, t, "moment", k,
                             number_moment(ut, k), mu0.moment(k), state.n_max))
    diag = {
        "eps": eps, "n_max": state.n_max, "fock_dimension": state.dim,
        "tail_mass": state.tail_mass, "norm_drift": norm_drift,
    }
    if family.schedule:
        diag["escaping_mode"] = family.schedule[min(family.schedule, key=lambda e: abs(e - eps))]
    if dyson and dynamic:
        reports = []
        for t in config.times:
            if t == 0 or not config.interaction.terms:
                continue
            rep = dyson_report(state, config.probes[0], t, H, config.n_quad, form_checks=3)
            reports.append({"t": t, "probe_id": "xi" + "0" * width, "n_quad": rep.n_quad,
                            "abs_residual": abs(rep.residual), "form_gap": rep.form_gap})
        diag["dyson"] = reports
    diag["runtime_ms"] = round(1000.0 * (time.perf_counter() - start), 3)
    return rows, diag


@dataclass
class SweepResult:
    rows: list
    manifest: dict
    files: dict = field(default_factory=dict)


def write_results(rows, path) -> str:
    """Write rows in sorted order; returns the SHA-256 of the file contents."""
    ordered = sorted(rows, key=lambda r: r["_key"])
    lines = [",".join(RESULT_COLUMNS)]
    for r in ordered:
        lines.append(",".join(r[c] for c in RESULT_COLUMNS))
    data = ("\n".join(lines) + "\n").encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def versions() -> dict:
    from . import __version__

    return {"meanfield": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_sweep(config: ExperimentConfig, out_dir=None, dyson: bool = False) -> SweepResult:
    """Run every ``eps`` of the configuration and optionally write the outputs.

    Files written to ``out_dir``: ``results.csv``, ``manifest.json`` and one
    Hartree trajectory CSV per limit vector.
    """
    family = build_family(config)
    check_resources(config, family)
    trajectories = limit_trajectories(config, family)
    if config.workers > 1 and len(config.eps) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            jobs = [pool.submit(run_eps, config, e, trajectories, dyson) for e in config.eps]
            outcomes = [j.result() for j in jobs]
    else:
        outcomes = [run_eps(config, e, trajectories, dyson) for e in config.eps]
    rows = [r for rs, _ in outcomes for r in rs]
    per_eps = sorted((d for _, d in outcomes), key=lambda d: -d["eps"])
    manifest = {
        "config": config.echo(),
        "seeds": {"config": config.seed, "probe_source": config.probe_source,
                  "interaction_source": config.interaction_source},
        "versions": versions(),
        "hartree": {name: {"max_mass_drift": tr.max_mass_drift,
                           "max_energy_drift": tr.max_energy_drift}
                    for name, tr in trajectories.items()},
        "per_eps": per_eps,
        "columns": RESULT_COLUMNS,
        "notes": {"probe_id": "xiNN rows are characteristic functions; gamma rows carry the "
                              "trace distance for order k_or_p; moment rows carry Tr[rho N^k]"},
    }
    if family.kind == "superposition":
        manifest["notes"]["superposition"] = SUPERPOSITION_NOTE
    if family.schedule:
        manifest["notes"]["escaping_schedule"] = {repr(k): v for k, v in family.schedule.items()}
    result = SweepResult(rows=rows, manifest=manifest)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest["results_sha256"] = write_results(rows, out / "results.csv")
        result.files["results"] = str(out / "results.csv")
        for name, tr in trajectories.items():
            path = out / f"trajectory_{name}.csv"
            tr.to_csv(path)
            result.files[f"trajectory_{name}"] = str(path)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        result.files["manifest"] = str(out / "manifest.json")
    return result


# ---------------------------------------------------------------------------
# Rate fitting and resource estimates
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    """Least-squares slope of ``log(gap)`` against ``log(eps)``; informative only."""

    slope: float
    intercept: float
    residual: float
    n_used: int
    excluded: list
    note: str = "informative only"


def fit_rate(eps, gaps) -> RateFit:
    eps = np.asarray(eps, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = np.isfinite(gaps) & (gaps > 0)
    excluded = [float(e) for e in eps[~keep]]
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 positive gaps, have {int(keep.sum())}")
    x, y = np.log(eps[keep]), np.log(gaps[keep])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    rms = math.sqrt(float(res[0]) / keep.sum()) if res.size else 0.0
    return RateFit(float(slope), float(intercept), rms, int(keep.sum()), excluded)


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def rate_table(rows: list[dict], column: str = "abs_gap") -> list[dict]:
    """Fit one rate per (family, t, quantity); probe rows are reduced by their max over probes."""
    if rows and column not in rows[0]:
        raise KeyError(f"column {column!r} not in results")
    groups: dict = {}
    for r in rows:
        quantity = "char" if r["probe_id"].startswith("xi") else f"{r['probe_id']}{r['k_or_p']}"
        key = (r["family"], float(r["t"]), quantity)
        per_eps = groups.setdefault(key, {})
        e = float(r["eps"])
        per_eps[e] = max(per_eps.get(e, -math.inf), float(r[column]))
    out = []
    for (fam, t, quantity), per_eps in sorted(groups.items()):
        eps = sorted(per_eps)
        entry = {"family": fam, "t": t, "quantity": quantity, "points": len(eps)}
        try:
            fit = fit_rate(eps, [per_eps[e] for e in eps])
            entry.update(slope=fit.slope, residual=fit.residual, n_used=fit.n_used,
                         excluded=fit.excluded, note=fit.note)
        except ValueError as exc:
            entry.update(slope=None, note=str(exc))
        out.append(entry)
    return out


def resource_info(config: ExperimentConfig) -> dict:
    """Predicted truncation, dimensions and a rough peak-memory estimate per ``eps``."""
    family = build_family(config)
    out = []
    for eps in config.eps:
        n_max = predicted_n_max(family, eps)
        dims = [sector_dimension(config.d, n) for n in range(n_max + 1)]
        dim = sum(dims)
        ham = 16 * 3 * sum(x * x for x in dims)
        weyl_tensor = 16 * 2 * (n_max + 1) ** config.d
        out.append({
            "eps": eps, "n_max": n_max, "fock_dimension": dim, "largest_sector": max(dims),
            "state_bytes": 16 * dim, "hamiltonian_bytes": ham, "char_tensor_bytes": weyl_tensor,
            "dense_weyl_bytes": 16 * 3 * dim * dim,
            "within_cap": dim <= config.dimension_cap,
        })
    return {"d": config.d, "family": config.family.kind, "dimension_cap": config.dimension_cap,
            "per_eps": out}
