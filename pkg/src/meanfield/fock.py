"""Truncated bosonic Fock space: states, sector-blocked operators, ladders, Weyl operators.

Everything carries the semiclassical parameter ``eps``: mode ladders act as
``a_i|alpha> = sqrt(eps*alpha_i)|alpha - e_i>`` and the number operator is
``eps*n`` on sector ``n``.  ``a(z) = sum_i conj(z_i) a_i`` is antilinear in
``z`` and ``a*(z) = sum_i z_i a_i^*`` is linear, matching an inner product
that is antilinear on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import poisson

from .basis import (
    DEFAULT_DIMENSION_CAP,
    DimensionCapError,
    fock_dimension,
    rank_occupations,
    sector_basis,
    sector_dimension,
    sector_offset,
    sym_power,
)

#: Default Poisson tail mass tolerated when a coherent-state cutoff is chosen.
DEFAULT_TAIL_TOL = 1e-8


class TruncationError(ValueError):
    """The requested cutoff discards too much (or all) of a state."""


def _as_vector(z) -> np.ndarray:
    return np.asarray(z, dtype=complex).reshape(-1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FockState:
    """Pure state stored as one coefficient vector per sector ``n = 0..n_max``.

    ``tail_mass`` is the probability discarded above ``n_max`` when the state
    was built; the stored blocks carry norm ``1 - tail_mass``.
    """

    d: int
    eps: float
    blocks: tuple
    tail_mass: float = 0.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.tail_mass < 0:
            raise ValueError("tail_mass must be non-negative")
        blocks = tuple(_frozen(b) for b in self.blocks)
        for n, b in enumerate(blocks):
            if b.shape != (sector_dimension(self.d, n),):
                raise ValueError(f"block {n} has shape {b.shape}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_max(self) -> int:
        return len(self.blocks) - 1

    @property
    def dim(self) -> int:
        return fock_dimension(self.d, self.n_max)

    def sector_weights(self) -> np.ndarray:
        """Probability ``||u_n||^2`` of each sector."""
        return np.array([np.vdot(b, b).real for b in self.blocks])

    def norm2(self) -> float:
        return float(self.sector_weights().sum())

    def vector(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    @classmethod
    def from_vector(cls, vec, d: int, eps: float, tail_mass: float = 0.0):
        vec = _as_vector(vec)
        n_max = _n_max_for_dim(d, vec.shape[0])
        blocks = [
            vec[sector_offset(d, n) : sector_offset(d, n + 1)] for n in range(n_max + 1)
        ]
        return cls(d=d, eps=eps, blocks=tuple(blocks), tail_mass=tail_mass)

    def padded(self, n_max: int) -> "FockState":
        """Same state embedded in a larger truncation (extra sectors zero)."""
        if n_max < self.n_max:
            raise ValueError("padding cannot shrink the truncation")
        extra = [np.zeros(sector_dimension(self.d, n), complex)
                 for n in range(self.n_max + 1, n_max + 1)]
        return replace(self, blocks=self.blocks + tuple(extra))

    def phase(self, theta: float) -> "FockState":
        return replace(self, blocks=tuple(np.exp(1j * theta) * b for b in self.blocks))

    def inner(self, other: "FockState") -> complex:
        n = min(self.n_max, other.n_max)
        return complex(sum(np.vdot(self.blocks[k], other.blocks[k]) for k in range(n + 1)))


@dataclass(frozen=True, eq=False)
class Mixture:
    """Finite convex combination of pure states."""

    weights: tuple
    states: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to one")
        if len(self.states) != len(w):
            raise ValueError("one weight per state required")


def _n_max_for_dim(d: int, dim: int) -> int:
    n = 0
    while fock_dimension(d, n) < dim:
        n += 1
    if fock_dimension(d, n) != dim:
        raise ValueError(f"length {dim} is not a truncated Fock dimension for d={d}")
    return n


def vacuum(d: int, eps: float, n_max: int = 0) -> FockState:
    blocks = [np.zeros(sector_dimension(d, n), complex) for n in range(n_max + 1)]
    blocks[0][0] = 1.0
    return FockState(d=d, eps=eps, blocks=tuple(blocks))


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """Operator mapping sector ``n`` to sector ``n + shift`` for every stored ``n``.

    Blocks exist for all ``n`` with ``0 <= n`` and ``n + shift <= n_max``; a
    block of shape ``D(n+shift) x D(n)`` may be zero.
    """

    d: int
    n_max: int
    eps: float
    shift: int
    blocks: Mapping[int, np.ndarray] = field(repr=False)

    def __post_init__(self):
        frozen = {}
        for n in self.sectors():
            b = self.blocks.get(n)
            shape = (sector_dimension(self.d, n + self.shift), sector_dimension(self.d, n))
            if b is None:
                b = np.zeros(shape, complex)
            if b.shape != shape:
                raise ValueError(f"block {n} has shape {b.shape}, expected {shape}")
            frozen[n] = _frozen(b)
        object.__setattr__(self, "blocks", frozen)

    def sectors(self) -> range:
        return range(max(0, -self.shift), self.n_max - max(self.shift, 0) + 1)

    def _check(self, other):
        if (self.d, self.n_max) != (other.d, other.n_max) or not math.isclose(
            self.eps, other.eps, rel_tol=1e-15
        ):
            raise ValueError("operators live on different truncated spaces")

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        self._check(other)
        shift = self.shift + other.shift
        blocks = {}
        for n in other.sectors():
            m = n + other.shift
            if m in self.blocks:
                blocks[n] = self.blocks[m] @ other.blocks[n]
        return BlockOperator(self.d, self.n_max, self.eps, shift, blocks)

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        self._check(other)
        if other.shift != self.shift:
            raise ValueError("cannot add operators with different shifts")
        blocks = {n: self.blocks[n] + other.blocks[n] for n in self.sectors()}
        return BlockOperator(self.d, self.n_max, self.eps, self.shift, blocks)

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "BlockOperator":
        blocks = {n: scalar * b for n, b in self.blocks.items()}
        return BlockOperator(self.d, self.n_max, self.eps, self.shift, blocks)

    def dagger(self) -> "BlockOperator":
        blocks = {n + self.shift: b.conj().T for n, b in self.blocks.items()}
        return BlockOperator(self.d, self.n_max, self.eps, -self.shift, blocks)

    def commutator(self, other: "BlockOperator") -> "BlockOperator":
        return self @ other - other @ self

    def apply(self, u: FockState) -> list:
        """Sector blocks of ``B u`` (a vector, not a normalized state)."""
        out = [np.zeros(sector_dimension(self.d, n), complex) for n in range(self.n_max + 1)]
        for n, b in self.blocks.items():
            if n <= u.n_max:
                out[n + self.shift] += b @ u.blocks[n]
        return out

    def expectation(self, u: FockState) -> complex:
        total = 0j
        for n, b in self.blocks.items():
            m = n + self.shift
            if m <= u.n_max and n <= u.n_max:
                total += np.vdot(u.blocks[m], b @ u.blocks[n])
        return complex(total)

    def to_dense(self) -> np.ndarray:
        dim = fock_dimension(self.d, self.n_max)
        out = np.zeros((dim, dim), complex)
        for n, b in self.blocks.items():
            r0 = sector_offset(self.d, n + self.shift)
            c0 = sector_offset(self.d, n)
            out[r0 : r0 + b.shape[0], c0 : c0 + b.shape[1]] = b
        return out

    def max_abs(self, sectors: Sequence[int] | None = None) -> float:
        keys = self.blocks.keys() if sectors is None else [n for n in sectors if n in self.blocks]
        return max((float(np.abs(self.blocks[n]).max(initial=0.0)) for n in keys), default=0.0)


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Operator on the whole truncated Fock space, stored as one dense matrix."""

    d: int
    n_max: int
    eps: float
    matrix: np.ndarray = field(repr=False)

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        return DenseOperator(self.d, self.n_max, self.eps, self.matrix @ _dense(other))

    def apply(self, u: FockState) -> np.ndarray:
        return self.matrix @ u.vector()

    def expectation(self, u: FockState) -> complex:
        v = u.vector()
        return complex(np.vdot(v, self.matrix @ v))

    def to_dense(self) -> np.ndarray:
        return self.matrix

    def block(self, m: int, n: int) -> np.ndarray:
        r0, r1 = sector_offset(self.d, m), sector_offset(self.d, m + 1)
        c0, c1 = sector_offset(self.d, n), sector_offset(self.d, n + 1)
        return self.matrix[r0:r1, c0:c1]


def _dense(op) -> np.ndarray:
    return op.to_dense() if hasattr(op, "to_dense") else np.asarray(op)


def mode_annihilator(i: int, d: int, eps: float, n_max: int) -> BlockOperator:
    """Single-mode ``a_i`` with ``a_i|alpha> = sqrt(eps*alpha_i)|alpha - e_i>``."""
    blocks = {}
    for n in range(1, n_max + 1):
        occ = sector_basis(d, n).occupations
        src = np.nonzero(occ[:, i] > 0)[0]
        lowered = occ[src].copy()
        lowered[:, i] -= 1
        dst = rank_occupations(lowered, d)
        b = np.zeros((sector_dimension(d, n - 1), occ.shape[0]), complex)
        b[dst, src] = np.sqrt(eps * occ[src, i])
        blocks[n] = b
    return BlockOperator(d, n_max, eps, -1, blocks)


def ladder(z, kind: str, eps: float, n_max: int) -> BlockOperator:
    """``a(z)`` (``kind='annihilate'``) or ``a*(z)`` (``kind='create'``)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = _as_vector(z)
    d = z.shape[0]
    blocks = {n: np.zeros((sector_dimension(d, n - 1), sector_dimension(d, n)), complex)
              for n in range(1, n_max + 1)}
    for i in range(d):
        if z[i] == 0:
            continue
        a_i = mode_annihilator(i, d, eps, n_max)
        for n in blocks:
            blocks[n] += np.conj(z[i]) * a_i.blocks[n]
    op = BlockOperator(d, n_max, eps, -1, blocks)
    if kind == "annihilate":
        return op
    if kind == "create":
        return op.dagger()
    raise ValueError(f"kind must be 'annihilate' or 'create', got {kind!r}")


def number_operator(d: int, eps: float, n_max: int) -> BlockOperator:
    blocks = {n: eps * n * np.eye(sector_dimension(d, n)) for n in range(n_max + 1)}
    return BlockOperator(d, n_max, eps, 0, blocks)


def dgamma(A, eps: float, n_max: int, atol: float = 1e-12) -> BlockOperator:
    """Second quantization ``dGamma(A)`` of a Hermitian ``d x d`` matrix.

    On sector ``n`` the matrix elements are ``eps * A_ij * sqrt(alpha_j (beta_i))``
    hopping amplitudes; ``dGamma(Id) = N``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    if np.abs(A - A.conj().T).max(initial=0.0) > atol:
        raise ValueError("A must be Hermitian")
    d = A.shape[0]
    blocks = {}
    for n in range(n_max + 1):
        occ = sector_basis(d, n).occupations
        b = np.zeros((occ.shape[0], occ.shape[0]), complex)
        for j in range(d):
            src = np.nonzero(occ[:, j] > 0)[0]
            for i in range(d):
                if A[i, j] == 0 or src.size == 0:
                    continue
                moved = occ[src].copy()
                moved[:, j] -= 1
                moved[:, i] += 1
                dst = rank_occupations(moved, d)
                amp = np.sqrt(occ[src, j] * moved[:, i].astype(float))
                np.add.at(b, (dst, src), eps * A[i, j] * amp)
        blocks[n] = b
    return BlockOperator(d, n_max, eps, 0, blocks)


def second_quantize(U, n: int) -> np.ndarray:
    """Matrix of ``U^{(x)n}`` restricted to sector ``n`` (occupation basis).

    Built column by column as ``prod_i a*(U e_i)^{alpha_i} Omega / sqrt(alpha!)``
    with unit ``eps``.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    basis = sector_basis(d, n)
    creators = [ladder(U[:, i], "create", 1.0, n) for i in range(d)]
    out = np.zeros((basis.dim, basis.dim), complex)
    for col, alpha in enumerate(basis.occupations):
        vec = np.ones(1, complex)
        level = 0
        for i, count in enumerate(alpha):
            for _ in range(count):
                vec = creators[i].blocks[level] @ vec
                level += 1
        out[:, col] = vec / math.sqrt(math.prod(math.factorial(int(c)) for c in alpha))
    return out


def field_operator(xi, eps: float, n_max: int) -> np.ndarray:
    """Dense Hermitian ``Phi(xi) = (a(xi) + a*(xi)) / sqrt(2)``."""
    a = ladder(xi, "annihilate", eps, n_max).to_dense()
    return (a + a.conj().T) / math.sqrt(2.0)


class WeylFamily:
    """``W(s * xi)`` for all real scalings ``s`` from one eigendecomposition of ``Phi(xi)``."""

    def __init__(self, xi, eps: float, n_max: int):
        self.xi = _as_vector(xi)
        self.d = self.xi.shape[0]
        self.eps = eps
        self.n_max = n_max
        self.eigvals, self.eigvecs = scipy.linalg.eigh(field_operator(self.xi, eps, n_max))

    def at(self, scale: float = 1.0) -> DenseOperator:
        phases = np.exp(1j * scale * self.eigvals)
        mat = (self.eigvecs * phases[None, :]) @ self.eigvecs.conj().T
        return DenseOperator(self.d, self.n_max, self.eps, mat)


def weyl(xi, eps: float, n_max: int) -> DenseOperator:
    """Weyl operator ``exp(i Phi(xi))`` on the truncated space (unitary there)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return WeylFamily(xi, eps, n_max).at(1.0)


# ---------------------------------------------------------------------------
# Factorized Weyl expectations for large truncations
# ---------------------------------------------------------------------------


def _single_mode_weyl(x: complex, eps: float, keep: int, pad: int) -> np.ndarray:
    cutoff = keep + pad
    a = np.diag(np.sqrt(eps * np.arange(1, cutoff + 1)), 1)
    phi = (np.conj(x) * a + x * a.T) / math.sqrt(2.0)
    lam, vec = scipy.linalg.eigh(phi)
    w = (vec * np.exp(1j * lam)[None, :]) @ vec.conj().T
    return w[: keep + 1, : keep + 1]


def default_weyl_pad(x: complex, eps: float, keep: int) -> int:
    """Extra single-mode levels kept so the truncated exponential is converged."""
    disp = abs(x) * math.sqrt(eps / 2.0)
    return int(math.ceil(24 + 8 * disp * math.sqrt(keep + 1) + 4 * disp**2))


def to_mode_tensor(u: FockState, cap: int = 50_000_000) -> np.ndarray:
    """State as an array indexed by the occupation of each mode separately."""
    size = (u.n_max + 1) ** u.d
    if size > cap:
        raise DimensionCapError(f"mode tensor with {size} entries exceeds cap {cap}")
    t = np.zeros((u.n_max + 1,) * u.d, complex)
    for n, b in enumerate(u.blocks):
        occ = sector_basis(u.d, n).occupations
        t[tuple(occ.T)] = b
    return t


def weyl_expectation(u: FockState, xi, pad: int | None = None) -> complex:
    """``<u, W(xi) u>`` using ``W(xi) = prod_i W_i(xi_i)`` over independent modes.

    Each single-mode factor is the exponential of the single-mode field
    operator in a cutoff ``pad`` levels above the state's support, so no
    total-number truncation edge enters.  Modes with ``xi_i = 0`` are skipped.
    """
    xi = _as_vector(xi)
    if xi.shape[0] != u.d:
        raise ValueError("probe dimension does not match the state")
    t = to_mode_tensor(u)
    wt = t
    for i in np.nonzero(xi)[0]:
        p = default_weyl_pad(xi[i], u.eps, u.n_max) if pad is None else pad
        w = _single_mode_weyl(xi[i], u.eps, u.n_max, p)
        wt = np.moveaxis(np.tensordot(w, wt, axes=([1], [i])), 0, i)
    return complex(np.vdot(t, wt))


# ---------------------------------------------------------------------------
# Named state families
# ---------------------------------------------------------------------------


def coherent_cutoff(f, eps: float, tail_tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest ``m`` whose Poisson(|f|^2/eps) tail above ``m`` is below ``tail_tol``."""
    lam = float(np.vdot(_as_vector(f), _as_vector(f)).real) / eps
    m = int(math.floor(lam))
    while poisson.sf(m, lam) >= tail_tol:
        m += 1
    return m


def coherent_state(
    f,
    eps: float,
    n_max: int | None = None,
    tail_tol: float = DEFAULT_TAIL_TOL,
    cap: int = DEFAULT_DIMENSION_CAP,
) -> FockState:
    """Coherent state ``E(f) = W(sqrt(2) f / (i eps)) Omega``, sector by sector.

    Block ``n`` is ``exp(-|f|^2/(2 eps)) eps^(-n/2) / sqrt(n!) * f^{(x)n}``.
    Without ``n_max`` the cutoff is the smallest one meeting ``tail_tol``; with
    an explicit ``n_max`` a larger tail raises :class:`TruncationError`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = _as_vector(f)
    d = f.shape[0]
    mass = float(np.vdot(f, f).real)
    if n_max is None:
        n_max = coherent_cutoff(f, eps, tail_tol)
    if fock_dimension(d, n_max) > cap:
        raise DimensionCapError(
            f"coherent state needs n_max={n_max} (Fock dimension "
            f"{fock_dimension(d, n_max)} > cap {cap})"
        )
    lam = mass / eps
    tail = float(poisson.sf(n_max, lam)) if lam > 0 else 0.0
    if tail > tail_tol:
        raise TruncationError(f"n_max={n_max} leaves tail mass {tail:.3e} > {tail_tol:.1e}")
    blocks = []
    for n in range(n_max + 1):
        log_c = -mass / (2 * eps) - 0.5 * n * math.log(eps) - 0.5 * math.lgamma(n + 1)
        blocks.append(math.exp(log_c) * sym_power(f, n))
    return FockState(d=d, eps=eps, blocks=tuple(blocks), tail_mass=tail)


def hermite_number(eps: float) -> int:
    """Particle number ``floor(1/eps)``; exact reciprocals like 1/7 are not rounded down."""
    return int(math.floor(1.0 / eps + 1e-9))


def hermite_state(f, eps: float, n_max: int | None = None, atol: float = 1e-12) -> FockState:
    """Product state ``f^{(x)k}`` with ``k = floor(1/eps)`` and ``|f| = 1``."""
    f = _as_vector(f)
    if abs(np.linalg.norm(f) - 1.0) > atol:
        raise ValueError(f"Hermite states need |f| = 1, got {np.linalg.norm(f):.15g}")
    k = hermite_number(eps)
    if n_max is None:
        n_max = k
    if k > n_max:
        raise TruncationError(f"floor(1/eps) = {k} exceeds n_max = {n_max}")
    d = f.shape[0]
    blocks = [np.zeros(sector_dimension(d, n), complex) for n in range(n_max + 1)]
    v = sym_power(f, k)
    blocks[k] = v / np.linalg.norm(v)
    return FockState(d=d, eps=eps, blocks=tuple(blocks))


def superposition_state(u, f, eps: float, tail_tol: float = DEFAULT_TAIL_TOL) -> FockState:
    """Normalized ``u^{(x)floor(1/eps)} + E(f)``."""
    coh = coherent_state(f, eps, tail_tol=tail_tol)
    k = hermite_number(eps)
    n_max = max(coh.n_max, k)
    herm = hermite_state(u, eps, n_max=n_max)
    coh = coh.padded(n_max)
    blocks = [h + c for h, c in zip(herm.blocks, coh.blocks)]
    full = sum(np.vdot(b, b).real for b in blocks) + coh.tail_mass
    scale = 1.0 / math.sqrt(full)
    return FockState(
        d=coh.d,
        eps=eps,
        blocks=tuple(scale * b for b in blocks),
        tail_mass=coh.tail_mass / full,
    )


def truncate_state(u: FockState, m: int) -> tuple[FockState, float]:
    """Sharp number cutoff at ``m`` followed by renormalization.

    Returns the truncated state and the trace-norm distance between the
    rank-one projectors of the (normalized) input and output.
    """
    if m > u.n_max:
        raise ValueError(f"cutoff {m} exceeds n_max {u.n_max}")
    weights = u.sector_weights()
    kept = float(weights[: m + 1].sum())
    if kept <= 0.0:
        raise TruncationError(f"no probability mass at or below n = {m}")
    scale = 1.0 / math.sqrt(kept)
    blocks = [scale * b if n <= m else np.zeros_like(b) for n, b in enumerate(u.blocks)]
    overlap2 = kept / float(weights.sum())
    distance = 2.0 * math.sqrt(max(0.0, 1.0 - overlap2))
    return FockState(d=u.d, eps=u.eps, blocks=tuple(blocks)), distance


def number_moment(u: FockState, k: int) -> float:
    """``Tr[rho N^k] = sum_n (eps n)^k ||u_n||^2``."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    weights = u.sector_weights()
    levels = u.eps * np.arange(u.n_max + 1, dtype=float)
    return float(np.sum(levels**k * weights))
