"""Characteristic functions, limit measures, reduced densities and moment diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, j0

from .basis import DimensionCapError, sector_basis, split_map, sym_power
from .fock import (
    DEFAULT_TAIL_TOL,
    FockState,
    Mixture,
    coherent_state,
    hermite_state,
    number_moment,
    superposition_state,
    weyl,
    weyl_expectation,
)
from .wick import as_poly, wick_matrix

#: Largest per-mode tensor the factorized characteristic-function route builds.
FACTORIZED_CAP = 20_000_000


def _vec(z) -> np.ndarray:
    return np.atleast_1d(np.asarray(z, dtype=complex))


# ---------------------------------------------------------------------------
# Limit measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LimitMeasure:
    """Point mass, phase-averaged circle, or a finite mixture of those.

    Build instances with :func:`point`, :func:`circle` and :func:`mixture`.
    """

    kind: str
    f: np.ndarray | None = None
    weights: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.kind in ("point", "circle"):
            if self.f is None:
                raise ValueError(f"{self.kind} measure needs a vector")
            object.__setattr__(self, "f", _vec(self.f))
        elif self.kind == "mixture":
            w = np.asarray(self.weights, dtype=float)
            if len(w) == 0 or len(w) != len(self.parts):
                raise ValueError("mixture needs one weight per component")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("mixture weights must be positive and sum to one")
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    def components(self):
        """Flattened ``(weight, kind, f)`` triples."""
        if self.kind != "mixture":
            return [(1.0, self.kind, self.f)]
        out = []
        for w, part in zip(self.weights, self.parts):
            out += [(w * wi, k, f) for wi, k, f in part.components()]
        return out

    def pushforward(self, flow) -> "LimitMeasure":
        """Image under a phase-covariant map ``flow`` of the one-particle space."""
        if self.kind == "mixture":
            return mixture(self.weights, [p.pushforward(flow) for p in self.parts])
        return LimitMeasure(self.kind, f=flow(self.f))

    def moment(self, k: int) -> float:
        """``int |z|^{2k} dmu``."""
        return float(sum(w * np.vdot(f, f).real ** k for w, _, f in self.components()))


def point(f) -> LimitMeasure:
    return LimitMeasure("point", f=f)


def circle(f) -> LimitMeasure:
    return LimitMeasure("circle", f=f)


def mixture(weights, parts) -> LimitMeasure:
    return LimitMeasure("mixture", weights=tuple(float(w) for w in weights), parts=tuple(parts))


def limit_char(mu: LimitMeasure, xi) -> complex:
    """Fourier transform ``int exp(2 i pi Re<xi, z>) dmu(z)`` in closed form."""
    xi = _vec(xi)
    total = 0j
    for w, kind, f in mu.components():
        overlap = np.vdot(xi, f)
        if kind == "point":
            total += w * np.exp(2j * math.pi * overlap.real)
        else:
            total += w * j0(2 * math.pi * abs(overlap))
    return complex(total)


# ---------------------------------------------------------------------------
# Characteristic functions of quantum states
# ---------------------------------------------------------------------------


def char_function(u, xi, route: str = "auto") -> complex:
    """``Tr[rho W(sqrt(2) pi xi)]`` for a pure state or a :class:`Mixture`.

    ``route="factorized"`` multiplies single-mode Weyl factors on the per-mode
    occupation tensor; ``route="dense"`` exponentiates the field operator on
    the truncated space; ``"auto"`` prefers the factorized route and falls
    back to the dense one if the mode tensor is too large.
    """
    if isinstance(u, Mixture):
        return complex(sum(w * char_function(s, xi, route) for w, s in zip(u.weights, u.states)))
    eta = math.sqrt(2.0) * math.pi * _vec(xi)
    if route not in ("auto", "factorized", "dense"):
        raise ValueError(f"unknown route {route!r}")
    if route != "dense":
        try:
            if (u.n_max + 1) ** u.d <= FACTORIZED_CAP:
                return weyl_expectation(u, eta)
        except DimensionCapError:
            pass
        if route == "factorized":
            raise DimensionCapError("mode tensor too large for the factorized route")
    return weyl(eta, u.eps, u.n_max).expectation(u)


# ---------------------------------------------------------------------------
# Reduced density matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReducedDensity:
    """Normalized ``p``-particle density on the occupation basis of sector ``p``.

    ``normalization`` is ``Tr[rho (|z|^{2p})^Wick]``.  When it vanishes the
    functional is zero by convention; ``matrix`` is then the zero matrix and
    ``is_zero`` is set.
    """

    p: int
    matrix: np.ndarray
    normalization: float
    is_zero: bool = False

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix).min())


def _partial_block(u_n: np.ndarray, d: int, n: int, p: int) -> np.ndarray:
    """``V[beta, gamma]``: component of ``u_n`` split as sector ``p`` times sector ``n-p``."""
    small = sector_basis(d, p).occupations
    big = sector_basis(d, n).occupations
    V = np.zeros((small.shape[0], sector_basis(d, n - p).dim), complex)
    log_total = gammaln(n + 1.0) - gammaln(p + 1.0) - gammaln(n - p + 1.0)
    for g, src, dst in split_map(d, n, p):
        if src.size == 0:
            continue
        beta = small[g]
        alpha = big[src]
        log_binoms = (gammaln(alpha + 1.0) - gammaln(beta + 1.0) - gammaln(alpha - beta + 1.0)).sum(axis=1)
        V[g, dst] = u_n[src] * np.exp(0.5 * (log_binoms - log_total))
    return V


def reduced_density(u: FockState, p: int, atol: float = 0.0) -> ReducedDensity:
    """``gamma^(p)`` from the sector-wise partial traces of ``|u_n><u_n|``.

    Sector ``n >= p`` contributes ``eps^p n!/(n-p)!`` times the partial trace
    over ``n - p`` particles; the sum is divided by its trace.
    """
    if p < 0:
        raise ValueError("order must be non-negative")
    dim = sector_basis(u.d, p).dim
    R = np.zeros((dim, dim), complex)
    norm = 0.0
    for n in range(p, u.n_max + 1):
        b = u.blocks[n]
        if not b.any():
            continue
        weight = math.exp(p * math.log(u.eps) + gammaln(n + 1.0) - gammaln(n - p + 1.0))
        V = _partial_block(b, u.d, n, p)
        R += weight * (V @ V.conj().T)
        norm += weight * float(np.vdot(b, b).real)
    if norm <= atol:
        return ReducedDensity(p, np.zeros((dim, dim), complex), 0.0, True)
    R = (R + R.conj().T) / 2.0
    return ReducedDensity(p, R / norm, norm)


def projector_target(mu: LimitMeasure, p: int) -> np.ndarray:
    """``int |z^p><z^p| dmu / int |z|^{2p} dmu`` (circle averaging is invisible here)."""
    comps = mu.components()
    d = comps[0][2].shape[0]
    dim = sector_basis(d, p).dim
    T = np.zeros((dim, dim), complex)
    total = 0.0
    for w, _, f in comps:
        v = sym_power(f, p)
        T += w * np.outer(v, v.conj())
        total += w * float(np.vdot(v, v).real)
    if total <= 0:
        raise ValueError("limit measure has zero p-th moment")
    return T / total


def trace_norm(M: np.ndarray) -> float:
    return float(np.linalg.svd(M, compute_uv=False).sum())


def meanfield_distance(u, target, p: int) -> float:
    """Trace-norm distance between ``gamma^(p)`` and the projector target.

    ``u`` is a state or an already computed :class:`ReducedDensity`;
    ``target`` is a :class:`LimitMeasure` or a one-particle vector ``z``.
    """
    gamma = u if isinstance(u, ReducedDensity) else reduced_density(u, p)
    mu = target if isinstance(target, LimitMeasure) else point(target)
    return trace_norm(gamma.matrix - projector_target(mu, p))


def wick_expectation(u: FockState, b) -> complex:
    """``<u, b^Wick u>`` for a homogeneous or polynomial symbol."""
    total = 0j
    for term in as_poly(b):
        total += wick_matrix(term, u.eps, u.n_max).expectation(u)
    return complex(total)


# ---------------------------------------------------------------------------
# Families indexed by eps and the moment diagnostic
# ---------------------------------------------------------------------------


def escaping_schedule(eps_list, modes) -> dict:
    """Map each ``eps`` to an escaping mode, moving to later modes as ``eps`` shrinks."""
    modes = list(modes)
    if not modes:
        raise ValueError("at least one escaping mode is required")
    ordered = sorted({float(e) for e in eps_list}, reverse=True)
    return {e: modes[min(k, len(modes) - 1)] for k, e in enumerate(ordered)}


@dataclass(frozen=True, eq=False)
class EpsilonFamily:
    """States ``rho_eps`` of one named kind along a sequence of ``eps``.

    With a ``schedule`` (``eps -> mode``) the vector becomes
    ``f_eps = f + sqrt(1 - |f|^2) e_{m(eps)}``: it has unit norm at every
    ``eps`` while its part on the persistent modes stays ``f``.
    """

    kind: str
    f: np.ndarray
    u: np.ndarray | None = None
    schedule: dict | None = None
    tail_tol: float = DEFAULT_TAIL_TOL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("coherent", "hermite", "superposition"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        object.__setattr__(self, "f", _vec(self.f))
        if self.u is not None:
            object.__setattr__(self, "u", _vec(self.u))
        if self.kind == "superposition":
            if self.u is None:
                raise ValueError("superposition family needs a Hermite vector u")
            if abs(np.linalg.norm(self.u) - 1.0) > 1e-12:
                raise ValueError("Hermite vector u must have unit norm")
        mass = float(np.vdot(self.f, self.f).real)
        if self.schedule:
            schedule = {float(k): int(v) for k, v in self.schedule.items()}
            object.__setattr__(self, "schedule", schedule)
            if mass > 1.0 + 1e-12:
                raise ValueError("escaping schedule needs |f| <= 1")
            for m in schedule.values():
                if not 0 <= m < self.f.shape[0]:
                    raise ValueError(f"escaping mode {m} out of range")
                if self.f[m] != 0:
                    raise ValueError(f"escaping mode {m} overlaps the persistent vector")
        elif self.kind == "hermite" and abs(math.sqrt(mass) - 1.0) > 1e-12:
            raise ValueError("Hermite family needs |f| = 1")

    @property
    def d(self) -> int:
        return self.f.shape[0]

    def persistent_modes(self) -> list[int]:
        escaping = set(self.schedule.values()) if self.schedule else set()
        return [i for i in range(self.d) if i not in escaping]

    def vector(self, eps: float) -> np.ndarray:
        if not self.schedule:
            return self.f.copy()
        key = min(self.schedule, key=lambda e: abs(e - eps))
        if not math.isclose(key, eps, rel_tol=1e-12):
            raise KeyError(f"eps={eps} is not in the escaping schedule")
        out = self.f.copy()
        out[self.schedule[key]] += math.sqrt(max(0.0, 1.0 - float(np.vdot(self.f, self.f).real)))
        return out

    def state(self, eps: float) -> FockState:
        f = self.vector(eps)
        if self.kind == "coherent":
            return coherent_state(f, eps, tail_tol=self.tail_tol)
        if self.kind == "hermite":
            return hermite_state(f, eps)
        return superposition_state(self.u, f, eps, tail_tol=self.tail_tol)

    def limit(self) -> LimitMeasure:
        """Wigner measure of the family (built from the persistent part ``f``)."""
        if self.kind == "coherent":
            return point(self.f)
        if self.kind == "hermite":
            return circle(self.f)
        return mixture([0.5, 0.5], [circle(self.u), point(self.f)])


def pi_diagnostic(family: EpsilonFamily, eps_list, k_list) -> list[dict]:
    """Number moments ``Tr[rho_eps N^k]`` against the limit-measure moments."""
    mu = family.limit()
    rows = []
    for eps in eps_list:
        state = family.state(eps)
        for k in k_list:
            quantum = number_moment(state, k)
            measure = mu.moment(k)
            rows.append({"eps": float(eps), "k": int(k), "quantum": quantum,
                         "measure": measure, "gap": abs(quantum - measure)})
    return rows
