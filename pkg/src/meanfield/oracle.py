"""Brute-force reference constructions on the full tensor power ``(C^d)^{(x)n}``.

These are deliberately literal: operators are applied to explicit tensors and
symmetrized by averaging over all permutations of the tensor factors, then
compressed back to the occupation basis.  They are only feasible for tiny
sectors and exist to check the production routes in :mod:`meanfield.wick`
and :mod:`meanfield.dynamics`.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from .basis import rank_occupations, sector_basis

#: Largest tensor space ``d**n`` the oracle will build.
ORACLE_CAP = 4096
#: Largest number of tensor factors symmetrized by an explicit permutation sum.
LITERAL_PERMUTATION_MAX = 7


class OracleSizeError(ValueError):
    pass


def _check(d: int, n: int):
    if d**n > ORACLE_CAP:
        raise OracleSizeError(f"d**n = {d**n} exceeds oracle cap {ORACLE_CAP}")


@functools.lru_cache(maxsize=64)
def embedding(d: int, n: int) -> np.ndarray:
    """Isometry from the occupation basis of sector ``n`` into ``(C^d)^{(x)n}``.

    Column ``alpha`` is the normalized sum of all tensor basis vectors whose
    index multiset has occupation ``alpha``.
    """
    idx = np.array(list(itertools.product(range(d), repeat=n)), dtype=np.int64).reshape(d**n, n)
    counts = np.zeros((idx.shape[0], d), dtype=np.int64)
    for slot in range(n):
        counts[np.arange(idx.shape[0]), idx[:, slot]] += 1
    cols = rank_occupations(counts, d)
    log_count = math.lgamma(n + 1) - np.array(
        [sum(math.lgamma(c + 1) for c in row) for row in counts]
    )
    E = np.zeros((d**n, sector_basis(d, n).dim))
    E[np.arange(d**n), cols] = np.exp(-0.5 * log_count)
    E.setflags(write=False)
    return E


def symmetrize(T: np.ndarray, d: int, n: int) -> np.ndarray:
    """``S_n`` applied to each column of ``T`` (shape ``(d**n, cols)``)."""
    cols = T.shape[1]
    if n <= 1:
        return T.copy()
    if n > LITERAL_PERMUTATION_MAX:
        E = embedding(d, n)
        return E @ (E.T @ T)
    X = T.reshape((d,) * n + (cols,))
    acc = np.zeros_like(X)
    for perm in itertools.permutations(range(n)):
        acc += np.transpose(X, perm + (n,))
    return (acc / math.factorial(n)).reshape(d**n, cols)


def symmetrizer(d: int, n: int) -> np.ndarray:
    """Explicit ``d**n x d**n`` matrix of the symmetrization projection."""
    _check(d, n)
    return symmetrize(np.eye(d**n, dtype=complex), d, n)


def lift_kernel(kernel: np.ndarray, d: int, p: int, q: int) -> np.ndarray:
    """Kernel between sectors as a map ``(C^d)^{(x)p} -> (C^d)^{(x)q}``."""
    return embedding(d, q) @ kernel @ embedding(d, p).T


def wick_oracle(b, eps: float, n: int) -> np.ndarray:
    """Block of ``b^Wick`` on sector ``n`` from the defining formula.

    ``sqrt(n! (n+q-p)!) / (n-p)! * eps^((p+q)/2) * S_{n-p+q} (K (x) Id^{(x)(n-p)})``
    evaluated on explicit tensors; zero when ``n < p``.
    """
    d, p, q = b.d, b.p, b.q
    _check(d, n)
    m = n - p + q
    if n < p:
        return np.zeros((sector_basis(d, m).dim if m >= 0 else 0, sector_basis(d, n).dim), complex)
    En = embedding(d, n)
    Bt = lift_kernel(b.kernel, d, p, q)
    X = En.reshape(d**p, d ** (n - p), -1)
    Y = np.einsum("ij,jkc->ikc", Bt, X).reshape(d**m, -1)
    Y = symmetrize(Y, d, m)
    pref = math.exp(0.5 * (math.lgamma(n + 1) + math.lgamma(m + 1)) - math.lgamma(n - p + 1))
    return pref * eps ** ((p + q) / 2.0) * (embedding(d, m).T @ Y)


def many_body_block(A, kernels: dict, eps: float, n: int) -> np.ndarray:
    """``H^{(n)}`` from its first-quantized definition on sector ``n``.

    ``eps * sum_k Id..A_k..Id + sum_l eps^l n!/(n-l)! S_n (Q_l (x) Id) S_n``
    with ``kernels`` mapping an order ``l`` to the kernel on sector ``l``.
    """
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    _check(d, n)
    En = embedding(d, n).astype(complex)
    X = En.reshape((d,) * n + (-1,))
    acc = np.zeros_like(X)
    for slot in range(n):
        acc += np.moveaxis(np.tensordot(A, X, axes=([1], [slot])), 0, slot)
    T = eps * acc.reshape(d**n, -1)
    for ell, Q in kernels.items():
        if ell > n:
            continue
        Qt = lift_kernel(np.asarray(Q, dtype=complex), d, ell, ell)
        Y = np.einsum("ij,jkc->ikc", Qt, En.reshape(d**ell, d ** (n - ell), -1))
        Y = symmetrize(Y.reshape(d**n, -1), d, n)
        T = T + eps**ell * math.perm(n, ell) * Y
    return En.T @ T
