"""Experiment configuration: JSON ingestion, validation and defaults.

Complex numbers may be written as plain numbers or as ``[re, im]`` pairs.
Every validation error names the offending key and, when it can be located,
the line of the configuration file where that key appears.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .basis import DEFAULT_DIMENSION_CAP, sector_dimension
from .dynamics import InteractionSpec

DEFAULT_TAIL_TOL = 1e-8
DEFAULT_DT = 1e-3
DEFAULT_N_QUAD = 128
DEFAULT_N_LIST = (8, 16, 32)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Checker:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source

    def fail(self, key: str, message: str):
        line = _line_of(self.text, key.split(".")[-1]) if self.text else None
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: {key}: {message}")

    def scalar(self, key, value) -> complex:
        if isinstance(value, bool):
            self.fail(key, "expected a number")
        if isinstance(value, (int, float)):
            return complex(value)
        if (isinstance(value, list) and len(value) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            return complex(value[0], value[1])
        self.fail(key, f"expected a number or [re, im] pair, got {value!r}")

    def vector(self, key, value, d=None) -> np.ndarray:
        if not isinstance(value, list) or not value:
            self.fail(key, "expected a non-empty list")
        out = np.array([self.scalar(key, v) for v in value], dtype=complex)
        if d is not None and out.shape[0] != d:
            self.fail(key, f"expected {d} entries, got {out.shape[0]}")
        return out

    def matrix(self, key, value, n) -> np.ndarray:
        if not isinstance(value, list) or len(value) != n:
            self.fail(key, f"expected {n} rows")
        return np.array([self.vector(key, row, n) for row in value], dtype=complex)

    def number(self, key, value, positive=True) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(key, f"expected a real number, got {value!r}")
        if positive and not value > 0:
            self.fail(key, "must be positive")
        return float(value)

    def integer(self, key, value, minimum=0) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            self.fail(key, f"expected an integer >= {minimum}, got {value!r}")
        return int(value)


@dataclass
class FamilyConfig:
    kind: str
    f: np.ndarray
    u: np.ndarray | None = None
    escaping_modes: list = field(default_factory=list)


@dataclass
class ExperimentConfig:
    """Validated experiment description with all defaults filled in."""

    d: int
    eps: list
    A: np.ndarray
    interaction: InteractionSpec
    interaction_source: str
    family: FamilyConfig
    times: list
    probes: np.ndarray
    probe_source: str
    orders: list
    moments: list
    tail_tol: float = DEFAULT_TAIL_TOL
    dt: float = DEFAULT_DT
    n_quad: int = DEFAULT_N_QUAD
    seed: int = 0
    out: str | None = None
    workers: int = 1
    dimension_cap: int = DEFAULT_DIMENSION_CAP
    verify_routes: bool = True

    def echo(self) -> dict:
        """JSON-ready copy of every resolved field (complex values as ``[re, im]``)."""

        def enc(v):
            if isinstance(v, np.ndarray):
                return enc(v.tolist())
            if isinstance(v, complex):
                return [v.real, v.imag]
            if isinstance(v, list):
                return [enc(x) for x in v]
            if isinstance(v, dict):
                return {str(k): enc(x) for k, x in v.items()}
            return v

        out = {
            "d": self.d, "eps": self.eps, "A": enc(self.A),
            "interaction": {"source": self.interaction_source,
                            "kernels": {str(k): enc(Q) for k, Q in self.interaction.terms.items()}},
            "family": enc(asdict(self.family)),
            "times": self.times, "probes": enc(self.probes), "probe_source": self.probe_source,
            "orders": self.orders, "moments": self.moments, "tail_tol": self.tail_tol,
            "dt": self.dt, "n_quad": self.n_quad, "seed": self.seed, "workers": self.workers,
            "dimension_cap": self.dimension_cap, "verify_routes": self.verify_routes,
        }
        return out


_KNOWN = {"d", "eps", "n_list", "A", "interaction", "family", "times", "probes", "orders",
          "moments", "tail_tol", "dt", "n_quad", "seed", "out", "workers", "dimension_cap",
          "verify_routes"}


def _parse_A(chk: _Checker, raw, d: int) -> np.ndarray:
    if raw is None:
        return np.zeros((d, d), complex)
    if isinstance(raw, dict):
        if "diagonal" in raw:
            return np.diag(chk.vector("A.diagonal", raw["diagonal"], d))
        if "matrix" in raw:
            M = chk.matrix("A.matrix", raw["matrix"], d)
        else:
            chk.fail("A", "expected 'diagonal' or 'matrix'")
    elif isinstance(raw, list) and raw and isinstance(raw[0], list) and len(raw) == d and all(
        isinstance(r, list) and len(r) == d for r in raw
    ):
        M = chk.matrix("A", raw, d)
    else:
        return np.diag(chk.vector("A", raw, d))
    if np.abs(M - M.conj().T).max() > 1e-12:
        chk.fail("A", "one-particle operator must be Hermitian")
    return M


def _parse_interaction(chk: _Checker, raw, d: int, seed: int):
    if not raw:
        return InteractionSpec(d, {}), "none"
    if not isinstance(raw, dict):
        chk.fail("interaction", "expected an object")
    source = raw.get("source", "seeded")
    if source == "explicit":
        kernels = raw.get("kernels")
        if not isinstance(kernels, dict) or not kernels:
            chk.fail("interaction.kernels", "explicit interaction needs a kernels object")
        terms = {}
        for key, value in kernels.items():
            try:
                ell = int(key)
            except ValueError:
                chk.fail("interaction.kernels", f"order key {key!r} is not an integer")
            if ell < 2:
                chk.fail("interaction.kernels", f"interaction order must be >= 2, got {ell}")
            Q = chk.matrix("interaction.kernels", value, sector_dimension(d, ell))
            if np.abs(Q - Q.conj().T).max() > 1e-12:
                chk.fail("interaction.kernels", f"order-{ell} kernel is not Hermitian")
            terms[ell] = Q
        return InteractionSpec(d, terms), "explicit"
    orders = raw.get("orders", [2])
    if not isinstance(orders, list) or not orders:
        chk.fail("interaction.orders", "expected a non-empty list of orders")
    orders = [chk.integer("interaction.orders", o, 2) for o in orders]
    if source == "seeded":
        norm = chk.number("interaction.norm", raw.get("norm", 1.0))
        kseed = chk.integer("interaction.seed", raw.get("seed", seed))
        return InteractionSpec.seeded(d, orders, kseed, norm), "seeded"
    if source == "identity":
        scale = chk.number("interaction.scale", raw.get("scale", 1.0), positive=False)
        terms = {ell: scale * np.eye(sector_dimension(d, ell)) for ell in orders}
        return InteractionSpec(d, terms), "identity"
    chk.fail("interaction.source", f"unknown kernel source {source!r}")


def _parse_family(chk: _Checker, raw, d: int) -> FamilyConfig:
    if not isinstance(raw, dict):
        chk.fail("family", "expected an object with 'kind' and 'f'")
    kind = raw.get("kind")
    if kind not in ("coherent", "hermite", "superposition"):
        chk.fail("family.kind", f"expected coherent, hermite or superposition, got {kind!r}")
    if "f" not in raw:
        chk.fail("family", "missing vector 'f'")
    f = chk.vector("family.f", raw["f"], d)
    u = chk.vector("family.u", raw["u"], d) if raw.get("u") is not None else None
    modes = raw.get("escaping_modes") or []
    if not isinstance(modes, list):
        chk.fail("family.escaping_modes", "expected a list of mode indices")
    modes = [chk.integer("family.escaping_modes", m) for m in modes]
    norm = float(np.linalg.norm(f))
    for m in modes:
        if m >= d:
            chk.fail("family.escaping_modes", f"mode {m} out of range for d={d}")
        if f[m] != 0:
            chk.fail("family.escaping_modes", f"escaping mode {m} must be zero in f")
    if modes:
        if norm > 1 + 1e-12:
            chk.fail("family.f", "escaping schedule needs |f| <= 1")
    elif kind == "hermite" and abs(norm - 1.0) > 1e-12:
        chk.fail("family.f", f"Hermite family requires |f| = 1, got |f| = {norm:.12g}")
    if kind == "superposition":
        if u is None:
            chk.fail("family", "superposition family needs a unit vector 'u'")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            chk.fail("family.u", "Hermite part requires |u| = 1")
    return FamilyConfig(kind=kind, f=f, u=u, escaping_modes=modes)


def seeded_probes(seed: int, d: int, count: int, modes, low: float = 0.2, high: float = 1.0) -> np.ndarray:
    """Random probes supported on ``modes`` with norms uniform in ``[low, high]``."""
    rng = np.random.default_rng(seed)
    out = np.zeros((count, d), complex)
    modes = list(modes)
    for j in range(count):
        v = rng.standard_normal(len(modes)) + 1j * rng.standard_normal(len(modes))
        out[j, modes] = rng.uniform(low, high) * v / np.linalg.norm(v)
    return out


def _parse_probes(chk: _Checker, raw, d: int, seed: int, persistent) -> tuple[np.ndarray, str]:
    if raw is None:
        raw = {}
    if isinstance(raw, list):
        raw = {"explicit": raw}
    if not isinstance(raw, dict):
        chk.fail("probes", "expected a list or an object")
    if "explicit" in raw:
        vecs = raw["explicit"]
        if not isinstance(vecs, list) or not vecs:
            chk.fail("probes.explicit", "expected a non-empty list of vectors")
        return np.array([chk.vector("probes.explicit", v, d) for v in vecs]), "explicit"
    count = chk.integer("probes.count", raw.get("count", 8), 1)
    modes = raw.get("modes", persistent)
    if not isinstance(modes, list) or not modes:
        chk.fail("probes.modes", "expected a non-empty list of mode indices")
    modes = [chk.integer("probes.modes", m) for m in modes]
    bad = [m for m in modes if m >= d or m not in persistent]
    if bad:
        chk.fail("probes.modes", f"modes {bad} are not persistent modes")
    pseed = chk.integer("probes.seed", raw.get("seed", seed))
    return seeded_probes(pseed, d, count, modes), "seeded"


def parse_config(data: dict, text: str = "", source: str = "<config>") -> ExperimentConfig:
    """Validate an already decoded configuration object."""
    chk = _Checker(text, source)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(data) - _KNOWN)
    if unknown:
        chk.fail(unknown[0], "unknown configuration key")
    if "d" not in data:
        chk.fail("d", "missing mode count 'd'")
    d = chk.integer("d", data["d"], 1)
    seed = chk.integer("seed", data.get("seed", 0))
    if "eps" in data and "n_list" in data:
        chk.fail("eps", "give either 'eps' or 'n_list', not both")
    if "eps" in data:
        if not isinstance(data["eps"], list) or not data["eps"]:
            chk.fail("eps", "expected a non-empty list")
        eps = [chk.number("eps", e) for e in data["eps"]]
    else:
        n_list = data.get("n_list", list(DEFAULT_N_LIST))
        if not isinstance(n_list, list) or not n_list:
            chk.fail("n_list", "expected a non-empty list")
        eps = [1.0 / chk.integer("n_list", n, 1) for n in n_list]
    if any(e > 1 for e in eps):
        chk.fail("eps" if "eps" in data else "n_list", "eps values must lie in (0, 1]")
    if len(set(eps)) != len(eps):
        chk.fail("eps" if "eps" in data else "n_list", "eps values must be distinct")
    A = _parse_A(chk, data.get("A"), d)
    interaction, source_kind = _parse_interaction(chk, data.get("interaction"), d, seed)
    family = _parse_family(chk, data.get("family"), d)
    persistent = [i for i in range(d) if i not in family.escaping_modes]
    if not persistent:
        chk.fail("family.escaping_modes", "at least one persistent mode is required")
    times = data.get("times", [0.0])
    if not isinstance(times, list) or not times:
        chk.fail("times", "expected a non-empty list")
    times = [chk.number("times", t, positive=False) for t in times]
    if any(t < 0 for t in times):
        chk.fail("times", "times must be non-negative")
    times = sorted(set(times))
    probes, probe_source = _parse_probes(chk, data.get("probes"), d, seed, persistent)
    orders = data.get("orders", [1])
    if not isinstance(orders, list):
        chk.fail("orders", "expected a list")
    orders = [chk.integer("orders", p, 1) for p in orders]
    moments = data.get("moments", [1])
    if not isinstance(moments, list):
        chk.fail("moments", "expected a list")
    moments = [chk.integer("moments", k, 0) for k in moments]
    n_quad = chk.integer("n_quad", data.get("n_quad", DEFAULT_N_QUAD), 2)
    if n_quad % 2:
        chk.fail("n_quad", "Simpson quadrature needs an even panel count")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        chk.fail("out", "expected a path string")
    verify = data.get("verify_routes", True)
    if not isinstance(verify, bool):
        chk.fail("verify_routes", "expected true or false")
    return ExperimentConfig(
        d=d, eps=eps, A=A, interaction=interaction, interaction_source=source_kind,
        family=family, times=times, probes=probes, probe_source=probe_source,
        orders=orders, moments=moments,
        tail_tol=chk.number("tail_tol", data.get("tail_tol", DEFAULT_TAIL_TOL)),
        dt=chk.number("dt", data.get("dt", DEFAULT_DT)),
        n_quad=n_quad, seed=seed, out=out,
        workers=chk.integer("workers", data.get("workers", 1), 1),
        dimension_cap=chk.integer("dimension_cap", data.get("dimension_cap", DEFAULT_DIMENSION_CAP), 1),
        verify_routes=verify,
    )


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: JSON parse error: {exc.msg}") from exc
    return parse_config(data, text, str(path))
