"""Polynomial symbols and their Wick quantization.

A symbol of bidegree ``(p, q)`` is ``b(z) = <z^{(x)q}, K z^{(x)p}>`` with a
kernel ``K`` from sector ``p`` to sector ``q`` (occupation bases).  Expanding
the symmetric powers gives the monomial form::

    b(z) = sum_{beta, alpha} C[beta, alpha] conj(z)^beta z^alpha,
    C[beta, alpha] = K[beta, alpha] * sqrt(q!/beta!) * sqrt(p!/alpha!)

Composition, derivatives and shifts are computed exactly on ``C`` and mapped
back to kernels.  The normal-ordered quantization replaces each monomial by
``a*^beta a^alpha`` with eps-scaled mode ladders.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .basis import rank_occupations, sector_basis, sector_dimension, split_map, sym_power
from .fock import BlockOperator, second_quantize


def _falling(alpha: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """``prod_i alpha_i! / (alpha_i - gamma_i)!`` row by row (exact in floating point)."""
    out = np.ones(alpha.shape[0])
    for i in range(gamma.shape[-1]):
        for t in range(int(gamma[i])):
            out *= alpha[:, i] - t
    return out


def _factorial_vec(occ: np.ndarray) -> np.ndarray:
    return np.array([math.prod(math.factorial(int(c)) for c in row) for row in occ], float)


@functools.lru_cache(maxsize=256)
def _sum_rank(d: int, n1: int, n2: int) -> np.ndarray:
    """Rank in sector ``n1 + n2`` of ``alpha1 + alpha2`` for all pairs."""
    o1 = sector_basis(d, n1).occupations
    o2 = sector_basis(d, n2).occupations
    tot = (o1[:, None, :] + o2[None, :, :]).reshape(-1, d)
    r = rank_occupations(tot, d).reshape(o1.shape[0], o2.shape[0])
    r.setflags(write=False)
    return r


def _scale(d: int, n: int) -> np.ndarray:
    return sector_basis(d, n).multinomial_sqrt()


def monomials(z, n: int) -> np.ndarray:
    """Plain monomials ``z^alpha`` over sector ``n``."""
    z = np.asarray(z, dtype=complex)
    occ = sector_basis(z.shape[0], n).occupations
    return np.prod(np.power(z[None, :], occ), axis=1)


def _lower(C: np.ndarray, d: int, n: int, k: int, axis: int, weight):
    """Remove ``k`` quanta along ``axis`` (degree ``n``) of a coefficient array.

    Returns a list over occupations ``gamma`` of sector ``k``; entry ``g`` maps
    ``C[..., alpha, ...] * weight(alpha, gamma)`` to index ``alpha - gamma``.
    """
    occ = sector_basis(d, n).occupations
    small = sector_basis(d, k).occupations
    Cm = np.moveaxis(C, axis, 0)
    out = []
    for g, src, dst in split_map(d, n, k):
        R = np.zeros((sector_dimension(d, n - k),) + Cm.shape[1:], complex)
        w = weight(occ[src], small[g])
        R[dst] = w.reshape((-1,) + (1,) * (Cm.ndim - 1)) * Cm[src]
        out.append(np.moveaxis(R, 0, axis))
    return out


@dataclass(frozen=True, eq=False)
class WickSymbol:
    """Homogeneous symbol of bidegree ``(p, q)``: kernel of shape ``D(d,q) x D(d,p)``."""

    d: int
    p: int
    q: int
    kernel: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = np.array(self.kernel, dtype=complex).reshape(
            sector_dimension(self.d, self.q), sector_dimension(self.d, self.p)
        )
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @property
    def bidegree(self) -> tuple[int, int]:
        return (self.p, self.q)

    @classmethod
    def from_coefficients(cls, d: int, p: int, q: int, C) -> "WickSymbol":
        C = np.asarray(C, dtype=complex)
        return cls(d, p, q, C / np.outer(_scale(d, q), _scale(d, p)))

    def coefficients(self) -> np.ndarray:
        """Monomial coefficients ``C[beta, alpha]`` of ``conj(z)^beta z^alpha``."""
        return self.kernel * np.outer(_scale(self.d, self.q), _scale(self.d, self.p))

    def __call__(self, z) -> complex:
        return symbol_eval(self, z)

    def norm(self) -> float:
        """Symbol norm: operator norm of the kernel."""
        return float(np.linalg.norm(self.kernel, 2))

    def adjoint(self) -> "WickSymbol":
        """Symbol of the adjoint operator, ``conj(b(z))``."""
        return WickSymbol(self.d, self.q, self.p, self.kernel.conj().T)

    def scaled(self, c) -> "WickSymbol":
        return WickSymbol(self.d, self.p, self.q, c * self.kernel)

    def rotated(self, U) -> "WickSymbol":
        """Symbol ``z -> b(U z)``."""
        gp = second_quantize(U, self.p)
        gq = second_quantize(U, self.q)
        return WickSymbol(self.d, self.p, self.q, gq.conj().T @ self.kernel @ gp)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return self.p == self.q and np.abs(self.kernel - self.kernel.conj().T).max() <= atol

    def to_json(self) -> str:
        pairs = [[[float(v.real), float(v.imag)] for v in row] for row in self.kernel]
        return json.dumps({"d": self.d, "p": self.p, "q": self.q, "kernel": pairs})

    @classmethod
    def from_json(cls, text: str) -> "WickSymbol":
        obj = json.loads(text)
        p, q = int(obj["p"]), int(obj["q"])
        raw = np.asarray(obj["kernel"], dtype=float)
        kernel = raw[..., 0] + 1j * raw[..., 1]
        d = obj.get("d")
        if d is None:
            d = _infer_modes(p, q, kernel.shape)
        return cls(int(d), p, q, kernel)


def _infer_modes(p: int, q: int, shape) -> int:
    if p == 0 and q == 0:
        raise ValueError("a (0,0) kernel needs an explicit 'd'")
    for d in range(1, 64):
        if (sector_dimension(d, q), sector_dimension(d, p)) == tuple(shape):
            return d
    raise ValueError(f"kernel shape {shape} matches no mode count for ({p},{q})")


def symbol(d: int, p: int, q: int, kernel) -> WickSymbol:
    return WickSymbol(d, p, q, kernel)


def identity_symbol(d: int, p: int) -> WickSymbol:
    """``|z|^{2p}``."""
    return WickSymbol(d, p, p, np.eye(sector_dimension(d, p)))


def random_symbol(rng: np.random.Generator, d: int, p: int, q: int) -> WickSymbol:
    shape = (sector_dimension(d, q), sector_dimension(d, p))
    return WickSymbol(d, p, q, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class PolySymbol:
    """Sum of homogeneous symbols, at most one per bidegree."""

    def __init__(self, terms: Iterable[WickSymbol] = (), d: int | None = None):
        self.terms: dict[tuple[int, int], WickSymbol] = {}
        self.d = d
        for t in terms:
            self._add_term(t)

    def _add_term(self, t: WickSymbol):
        if self.d is None:
            self.d = t.d
        elif t.d != self.d:
            raise ValueError("terms over different mode counts")
        key = t.bidegree
        if key in self.terms:
            t = WickSymbol(t.d, t.p, t.q, self.terms[key].kernel + t.kernel)
        self.terms[key] = t

    def __iter__(self):
        return iter(self.terms[k] for k in sorted(self.terms))

    def __len__(self):
        return len(self.terms)

    def __call__(self, z) -> complex:
        return complex(sum(symbol_eval(t, z) for t in self))

    def __add__(self, other: "PolySymbol") -> "PolySymbol":
        return PolySymbol(list(self) + list(other), d=self.d or other.d)

    def __sub__(self, other: "PolySymbol") -> "PolySymbol":
        return self + other.scaled(-1.0)

    def scaled(self, c) -> "PolySymbol":
        return PolySymbol([t.scaled(c) for t in self], d=self.d)

    def pruned(self, atol: float) -> "PolySymbol":
        """Drop terms whose kernel entries are all below ``atol``."""
        return PolySymbol([t for t in self if np.abs(t.kernel).max() > atol], d=self.d)

    def quantize(self, eps: float, n_max: int) -> dict[int, BlockOperator]:
        """Wick quantization grouped by sector shift ``q - p``."""
        out: dict[int, BlockOperator] = {}
        for t in self:
            op = wick_matrix(t, eps, n_max)
            out[op.shift] = out[op.shift] + op if op.shift in out else op
        return out


def as_poly(b) -> PolySymbol:
    return b if isinstance(b, PolySymbol) else PolySymbol([b])


# ---------------------------------------------------------------------------
# Evaluation and quantization
# ---------------------------------------------------------------------------


def symbol_eval(b, z) -> complex:
    """``b(z)``; accepts a :class:`WickSymbol` or a :class:`PolySymbol`."""
    if isinstance(b, PolySymbol):
        return b(z)
    z = np.asarray(z, dtype=complex)
    return complex(np.vdot(sym_power(z, b.q), b.kernel @ sym_power(z, b.p)))


def wick_matrix(b: WickSymbol, eps: float, n_max: int) -> BlockOperator:
    """Normal-ordered quantization ``sum C[beta,alpha] a*^beta a^alpha`` (shift ``q - p``)."""
    d, p, q = b.d, b.p, b.q
    shift = q - p
    C = b.coefficients()
    pref = eps ** ((p + q) / 2.0)
    occ_q = sector_basis(d, q).occupations
    blocks = {}
    for n in range(max(0, -shift), n_max - max(shift, 0) + 1):
        block = np.zeros((sector_dimension(d, n + shift), sector_dimension(d, n)), complex)
        if n >= p:
            occ = sector_basis(d, n).occupations
            occ_low = sector_basis(d, n - p).occupations
            targets = _sum_rank(d, n - p, q)
            alphas = sector_basis(d, p).occupations
            for a, src, dst in split_map(d, n, p):
                amp_a = np.sqrt(_falling(occ[src], alphas[a]))
                tau = occ_low[dst]
                # amp_b[i, b] = sqrt((tau_i + beta_b)! / tau_i!)
                amp_b = np.ones((tau.shape[0], occ_q.shape[0]))
                for bi, beta in enumerate(occ_q):
                    amp_b[:, bi] = np.sqrt(_falling(tau + beta[None, :], beta))
                vals = pref * amp_a[:, None] * amp_b * C[None, :, a]
                rows = targets[dst]
                np.add.at(block, (rows, np.broadcast_to(src[:, None], rows.shape)), vals)
        blocks[n] = block
    return BlockOperator(d, n_max, eps, shift, blocks)


# ---------------------------------------------------------------------------
# Symbol calculus
# ---------------------------------------------------------------------------


def _ff_weight(alpha, gamma):
    return _falling(alpha, gamma)


def derivative_kernel(b: WickSymbol, j: int, k: int, z) -> np.ndarray:
    """``d_zbar^j d_z^k b(z)`` as a matrix from sector ``k`` to sector ``j``.

    Entry ``[gamma, delta]`` equals ``sqrt(j!/gamma!) sqrt(k!/delta!)`` times the
    mixed partial derivative ``d_zbar^gamma d_z^delta b`` (Wirtinger sense).
    """
    if j > b.q or k > b.p:
        raise ValueError(f"derivative order ({j},{k}) exceeds bidegree ({b.p},{b.q})")
    d = b.d
    z = np.asarray(z, dtype=complex)
    C = b.coefficients()
    left = np.conj(monomials(z, b.q - j))
    right = monomials(z, b.p - k)
    out = np.zeros((sector_dimension(d, j), sector_dimension(d, k)), complex)
    rows = _lower(C, d, b.q, j, 0, _ff_weight)
    for g, Rg in enumerate(rows):
        cols = _lower(Rg, d, b.p, k, 1, _ff_weight)
        for h, Rgh in enumerate(cols):
            out[g, h] = left @ Rgh @ right
    return out * np.outer(_scale(d, j), _scale(d, k))


def _product(d: int, C1: np.ndarray, q1: int, p1: int, C2: np.ndarray, q2: int, p2: int):
    """Coefficients of the pointwise product of two monomial expansions."""
    rows = _sum_rank(d, q1, q2)
    cols = _sum_rank(d, p1, p2)
    out = np.zeros((sector_dimension(d, q1 + q2), sector_dimension(d, p1 + p2)), complex)
    T = C1[:, :, None, None] * C2[None, None, :, :]  # [b1, a1, b2, a2]
    np.add.at(out, (rows[:, None, :, None], cols[None, :, None, :]), T)
    return out


def contraction_terms(b1: WickSymbol, b2: WickSymbol, eps: float) -> list[WickSymbol]:
    """``eps^k/k! * d_z^k b1 . d_zbar^k b2`` for ``k = 0..min(p1, q2)``."""
    if b1.d != b2.d:
        raise ValueError("symbols over different mode counts")
    d = b1.d
    C1, C2 = b1.coefficients(), b2.coefficients()
    terms = []
    for k in range(min(b1.p, b2.q) + 1):
        gammas = sector_basis(d, k).occupations
        inv_fact = 1.0 / _factorial_vec(gammas)
        d1 = _lower(C1, d, b1.p, k, 1, _ff_weight)  # d_z^gamma b1
        d2 = _lower(C2, d, b2.q, k, 0, _ff_weight)  # d_zbar^gamma b2
        acc = None
        for g in range(gammas.shape[0]):
            prod = _product(d, d1[g], b1.q, b1.p - k, d2[g], b2.q - k, b2.p)
            acc = inv_fact[g] * prod if acc is None else acc + inv_fact[g] * prod
        p, q = b1.p + b2.p - k, b1.q + b2.q - k
        terms.append(WickSymbol.from_coefficients(d, p, q, eps**k * acc))
    return terms


def compose(b1, b2, eps: float) -> PolySymbol:
    """Symbol of ``b1^Wick b2^Wick``; accepts homogeneous or polynomial symbols."""
    out = PolySymbol(d=as_poly(b1).d)
    for t1 in as_poly(b1):
        for t2 in as_poly(b2):
            for term in contraction_terms(t1, t2, eps):
                out._add_term(term)
    return out


def commutator(b1, b2, eps: float, atol: float = 1e-13) -> PolySymbol:
    """Symbol of ``[b1^Wick, b2^Wick]``; cancelled terms are dropped."""
    diff = compose(b1, b2, eps) - compose(b2, b1, eps)
    scale = max([1.0] + [np.abs(t.kernel).max() for t in diff])
    return diff.pruned(atol * scale)


def taylor_shift(b: WickSymbol, w) -> PolySymbol:
    """Exact bidegree expansion of ``z -> b(z + w)``.

    The term of bidegree ``(p - k, q - j)`` collects the monomials where ``k``
    holomorphic and ``j`` antiholomorphic factors were replaced by ``w`` and
    ``conj(w)``.
    """
    d = b.d
    w = np.asarray(w, dtype=complex)
    C = b.coefficients()

    def binom_w(vec):
        def weight(alpha, gamma):
            g = gamma.astype(int)
            return _falling(alpha, g) / math.prod(math.factorial(int(c)) for c in g) * np.prod(vec**g)
        return weight

    out = PolySymbol(d=d)
    for j in range(b.q + 1):
        rows = _lower(C, d, b.q, j, 0, binom_w(np.conj(w)))
        acc_rows = sum(rows)
        for k in range(b.p + 1):
            cols = _lower(acc_rows, d, b.p, k, 1, binom_w(w))
            out._add_term(WickSymbol.from_coefficients(d, b.p - k, b.q - j, sum(cols)))
    return out


def norm_estimates(b: WickSymbol, eps: float, n_max: int) -> dict:
    """Weighted operator norms of ``b^Wick`` with ``<N> = (1 + N^2)^(1/2)``.

    ``weighted`` is ``||<N>^{-q/2} b^Wick <N>^{-p/2}||`` (bounded by ``|b|``);
    ``left`` is ``||<N>^{-(p+q)/2} b^Wick||`` compared with
    ``2^{(p+q)/2} |b|``.  Because every block maps one sector to one other,
    each norm is the maximum over sectors.
    """
    op = wick_matrix(b, eps, n_max)
    bnorm = b.norm()
    japan = lambda n: math.sqrt(1.0 + (eps * n) ** 2)  # noqa: E731
    weighted, left = 0.0, 0.0
    per_sector = []
    for n, blk in op.blocks.items():
        m = n + op.shift
        s = float(np.linalg.norm(blk, 2)) if blk.size else 0.0
        wv = s * japan(m) ** (-b.q / 2) * japan(n) ** (-b.p / 2)
        lv = s * japan(m) ** (-(b.p + b.q) / 2)
        per_sector.append((n, wv, lv))
        weighted, left = max(weighted, wv), max(left, lv)
    const = 2.0 ** ((b.p + b.q) / 2.0)
    return {
        "symbol_norm": bnorm,
        "weighted": weighted,
        "weighted_margin": bnorm - weighted,
        "left": left,
        "left_bound": const * bnorm,
        "left_margin": const * bnorm - left,
        "per_sector": per_sector,
        "ok": weighted <= bnorm * (1 + 1e-12) and left <= const * bnorm * (1 + 1e-12),
    }
