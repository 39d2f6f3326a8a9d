"""Occupation-number bases of the symmetric sectors over ``d`` modes.

Sector ``n`` is spanned by the normalized symmetric vectors ``|alpha>`` with
``sum(alpha) == n``.  Occupations are listed in reverse-lexicographic order,
e.g. ``(3,0), (2,1), (1,2), (0,3)`` for ``d=2, n=3``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

#: Largest sector dimension a basis may have before construction is refused.
DEFAULT_DIMENSION_CAP = 2_000_000


class DimensionCapError(ValueError):
    """Raised when a requested sector or Fock space is too large to build."""


def sector_dimension(d: int, n: int) -> int:
    """Number of occupations of ``n`` bosons in ``d`` modes."""
    if n < 0:
        return 0
    return math.comb(n + d - 1, d - 1)


def fock_dimension(d: int, n_max: int) -> int:
    """Dimension of the Fock space truncated at total particle number ``n_max``."""
    return math.comb(n_max + d, d)


def sector_offset(d: int, n: int) -> int:
    """Index of the first sector-``n`` vector in the concatenated Fock layout."""
    return math.comb(n - 1 + d, d) if n > 0 else 0


def _enumerate(d: int, n: int) -> np.ndarray:
    if d == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for first in range(n, -1, -1):
        tail = _enumerate(d - 1, n - first)
        head = np.full((tail.shape[0], 1), first, dtype=np.int64)
        rows.append(np.hstack([head, tail]))
    return np.vstack(rows)


@functools.lru_cache(maxsize=None)
def _binomial_table(size: int, width: int) -> np.ndarray:
    """``table[i, j] = binom(i, j)`` for ``i <= size`` and ``j <= width``."""
    return np.array([[math.comb(i, j) for j in range(width + 1)] for i in range(size + 1)],
                    dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Ordered occupation basis of the ``n``-particle sector over ``d`` modes."""

    d: int
    n: int
    occupations: np.ndarray

    @property
    def dim(self) -> int:
        return self.occupations.shape[0]

    def rank(self, counts) -> np.ndarray | int:
        """Index of one occupation (1-d input) or of each row of a 2-d array."""
        counts = np.asarray(counts, dtype=np.int64)
        single = counts.ndim == 1
        idx = rank_occupations(np.atleast_2d(counts), self.d)
        return int(idx[0]) if single else idx

    def unrank(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.occupations[index])

    def log_factorials(self) -> np.ndarray:
        """``log(alpha!)`` for every occupation, as a vector."""
        return gammaln(self.occupations + 1.0).sum(axis=1)

    def multinomial_sqrt(self) -> np.ndarray:
        """``sqrt(n!/alpha!)`` for every occupation."""
        return np.exp(0.5 * (gammaln(self.n + 1.0) - self.log_factorials()))


def rank_occupations(counts: np.ndarray, d: int) -> np.ndarray:
    """Vectorized combinatorial ranking of occupation rows (all of equal total).

    A row with first entry ``a`` is preceded by every composition of the same
    total whose first entry is larger; their number is a binomial coefficient.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    remaining = counts.sum(axis=1)
    table = _binomial_table(int(remaining.max()) + d, d)
    index = np.zeros(counts.shape[0], dtype=np.int64)
    for i in range(d - 1):
        top = remaining - counts[:, i] - 1 + (d - i - 1)
        valid = remaining - counts[:, i] - 1 >= 0
        index += np.where(valid, table[np.maximum(top, 0), d - i - 1], 0)
        remaining = remaining - counts[:, i]
    return index


@functools.lru_cache(maxsize=256)
def _cached_basis(d: int, n: int) -> SectorBasis:
    occ = _enumerate(d, n)
    occ.setflags(write=False)
    return SectorBasis(d=d, n=n, occupations=occ)


def sector_basis(d: int, n: int, cap: int = DEFAULT_DIMENSION_CAP) -> SectorBasis:
    """Basis of the ``n``-particle symmetric sector over ``d`` modes.

    Raises :class:`DimensionCapError` when the sector dimension exceeds ``cap``.
    """
    if d < 1:
        raise ValueError(f"mode count must be >= 1, got {d}")
    if n < 0:
        raise ValueError(f"particle number must be >= 0, got {n}")
    dim = sector_dimension(d, n)
    if dim > cap:
        raise DimensionCapError(
            f"sector (d={d}, n={n}) has dimension {dim} > cap {cap}"
        )
    return _cached_basis(d, n)


def sym_power(z, n: int) -> np.ndarray:
    """Coefficients of ``z^{(x)n}`` in the occupation basis of sector ``n``.

    The coefficient at ``alpha`` is ``sqrt(n!/alpha!) * prod(z_i**alpha_i)``, so
    the result has Euclidean norm ``|z|**n``.
    """
    z = np.asarray(z, dtype=complex)
    basis = sector_basis(z.shape[0], n)
    monomials = np.prod(np.power(z[None, :], basis.occupations), axis=1)
    return basis.multinomial_sqrt() * monomials


def split_map(d: int, n: int, k: int):
    """Index data for removing ``k`` particles from every occupation of sector ``n``.

    Yields, for each occupation ``gamma`` of sector ``k`` (by index ``g``), the
    arrays ``(src, dst)`` where ``src`` indexes occupations ``alpha >= gamma`` in
    sector ``n`` and ``dst`` the rank of ``alpha - gamma`` in sector ``n - k``.
    """
    big = sector_basis(d, n).occupations
    small = sector_basis(d, k).occupations
    out = []
    for g, gamma in enumerate(small):
        mask = np.all(big >= gamma[None, :], axis=1)
        src = np.nonzero(mask)[0]
        dst = rank_occupations(big[src] - gamma[None, :], d) if src.size else src
        out.append((g, src, dst))
    return out


def merge_coefficients(d: int, a: int, b: int) -> np.ndarray:
    """Isometry ``sector(a+b) -> sector(a) (x) sector(b)`` as a 3-index array.

    ``M[alpha, beta, gamma] = sqrt(prod binom(alpha_i, beta_i) / binom(a+b, a))``
    when ``alpha = beta + gamma`` and zero otherwise.
    """
    big = sector_basis(d, a + b)
    left = sector_basis(d, a)
    right = sector_basis(d, b)
    out = np.zeros((big.dim, left.dim, right.dim))
    log_total = gammaln(a + b + 1.0) - gammaln(a + 1.0) - gammaln(b + 1.0)
    for g, src, dst in split_map(d, a + b, a):
        beta = left.occupations[g]
        alpha = big.occupations[src]
        log_binoms = (
            gammaln(alpha + 1.0) - gammaln(beta + 1.0) - gammaln(alpha - beta + 1.0)
        ).sum(axis=1)
        out[src, g, dst] = np.exp(0.5 * (log_binoms - log_total))
    return out
