"""Many-body Hamiltonian, exact sector-wise propagation, and the Hartree flow."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import sector_basis, sector_dimension, sym_power
from .fock import BlockOperator, FockState, dgamma, weyl
from .oracle import ORACLE_CAP, many_body_block
from .wick import PolySymbol, WickSymbol, taylor_shift, wick_matrix


class RouteMismatchError(RuntimeError):
    """Two independent constructions of the same operator disagree."""


class IntegrationError(RuntimeError):
    """A conserved quantity drifted too far; the step size is too large."""


def _hermitian(M, atol: float, what: str) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{what} must be a square matrix")
    if np.abs(M - M.conj().T).max(initial=0.0) > atol:
        raise ValueError(f"{what} must be Hermitian")
    return M


def random_hermitian(rng: np.random.Generator, dim: int, norm: float = 1.0) -> np.ndarray:
    """Hermitian matrix with spectral norm ``norm`` from a seeded generator."""
    G = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    H = (G + G.conj().T) / 2.0
    return norm * H / np.linalg.norm(H, 2)


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """Interaction kernels ``Q_l`` (Hermitian, on sector ``l >= 2``) over ``d`` modes."""

    d: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        checked = {}
        for ell, Q in sorted(self.terms.items()):
            ell = int(ell)
            if ell < 2:
                raise ValueError(f"interaction order must be >= 2, got {ell}")
            Q = _hermitian(Q, 1e-12, f"interaction kernel of order {ell}")
            dim = sector_dimension(self.d, ell)
            if Q.shape != (dim, dim):
                raise ValueError(f"order-{ell} kernel must be {dim}x{dim}, got {Q.shape}")
            checked[ell] = Q
        object.__setattr__(self, "terms", checked)

    @classmethod
    def seeded(cls, d: int, orders, seed: int, norm: float = 1.0) -> "InteractionSpec":
        rng = np.random.default_rng(seed)
        return cls(d, {ell: random_hermitian(rng, sector_dimension(d, ell), norm) for ell in orders})

    @property
    def r(self) -> int:
        return max(self.terms, default=0)

    @property
    def M(self) -> float:
        return max((float(np.linalg.norm(Q, 2)) for Q in self.terms.values()), default=0.0)

    def symbols(self) -> list[WickSymbol]:
        return [WickSymbol(self.d, ell, ell, Q) for ell, Q in self.terms.items()]

    def poly(self) -> PolySymbol:
        return PolySymbol(self.symbols(), d=self.d)

    def rotated(self, U) -> "InteractionSpec":
        """Kernels of ``z -> Q(U z)``."""
        return InteractionSpec(self.d, {s.p: s.rotated(U).kernel for s in self.symbols()})

    def value(self, z) -> float:
        z = np.asarray(z, dtype=complex)
        total = 0.0
        for ell, Q in self.terms.items():
            s = sym_power(z, ell)
            total += np.vdot(s, Q @ s).real
        return float(total)

    def grad_conj(self, z) -> np.ndarray:
        """Wirtinger derivative ``d Q / d zbar`` via the chain rule on symmetric powers."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(self.d, complex)
        for ell, Q in self.terms.items():
            basis = sector_basis(self.d, ell)
            occ = basis.occupations
            v = Q @ sym_power(z, ell)
            coef = basis.multinomial_sqrt()
            for i in range(self.d):
                lowered = occ.copy()
                lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
                mono = np.prod(np.power(z[None, :], lowered), axis=1)
                dsym = np.where(occ[:, i] > 0, coef * occ[:, i] * mono, 0.0)
                out[i] += np.vdot(dsym, v)
        return out


def energy(z, A, interaction: InteractionSpec) -> float:
    """Mean-field energy ``<z, A z> + Q(z)``."""
    z = np.asarray(z, dtype=complex)
    return float(np.vdot(z, np.asarray(A) @ z).real) + interaction.value(z)


# ---------------------------------------------------------------------------
# Quantum side
# ---------------------------------------------------------------------------


class Hamiltonian:
    """Block-diagonal ``H = dGamma(A) + Q^Wick`` on the truncated Fock space.

    Per-sector eigendecompositions of ``H`` and of the free part are computed
    on first use and cached; call :meth:`freeze` before sharing across threads.
    """

    def __init__(self, A, interaction: InteractionSpec, eps: float, n_max: int, blocks, free_blocks):
        self.A = A
        self.interaction = interaction
        self.eps = eps
        self.n_max = n_max
        self.d = A.shape[0]
        self.blocks = blocks
        self.free_blocks = free_blocks
        self._eig: dict[int, tuple] = {}
        self._free_eig: dict[int, tuple] = {}

    def operator(self) -> BlockOperator:
        return BlockOperator(self.d, self.n_max, self.eps, 0, self.blocks)

    def eig(self, n: int):
        if n not in self._eig:
            self._eig[n] = scipy.linalg.eigh(self.blocks[n])
        return self._eig[n]

    def free_eig(self, n: int):
        if n not in self._free_eig:
            self._free_eig[n] = scipy.linalg.eigh(self.free_blocks[n])
        return self._free_eig[n]

    def freeze(self) -> "Hamiltonian":
        for n in range(self.n_max + 1):
            self.eig(n)
            self.free_eig(n)
        return self


def assemble_hamiltonian(
    A,
    interaction: InteractionSpec,
    eps: float,
    n_max: int,
    verify: bool = True,
    atol: float = 1e-10,
) -> Hamiltonian:
    """Build ``H`` from Wick quantization and cross-check the first-quantized form.

    With ``verify`` every sector small enough for the tensor oracle is rebuilt
    from ``eps sum_k A_k + sum_l eps^l n!/(n-l)! S_n (Q_l (x) Id) S_n`` and a
    disagreement above ``atol`` raises :class:`RouteMismatchError`.
    """
    A = _hermitian(A, 1e-12, "A")
    if A.shape[0] != interaction.d:
        raise ValueError("A and the interaction act on different mode counts")
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = A.shape[0]
    free = dgamma(A, eps, n_max)
    total = free
    for sym in interaction.symbols():
        total = total + wick_matrix(sym, eps, n_max)
    blocks = {n: (b + b.conj().T) / 2.0 for n, b in total.blocks.items()}
    if verify:
        for n in range(n_max + 1):
            if d**n > ORACLE_CAP:
                break
            direct = many_body_block(A, interaction.terms, eps, n)
            gap = float(np.abs(direct - blocks[n]).max(initial=0.0))
            if gap > atol:
                raise RouteMismatchError(f"sector {n}: Wick and many-body routes differ by {gap:.3e}")
    return Hamiltonian(A, interaction, eps, n_max, blocks, dict(free.blocks))


def evolve(u: FockState, t: float, H: Hamiltonian, picture: str = "schrodinger") -> FockState:
    """``exp(-i (t/eps) H) u``; the interaction picture also applies ``exp(+i (t/eps) dGamma(A))``."""
    if not math.isclose(u.eps, H.eps, rel_tol=1e-15) or u.d != H.d:
        raise ValueError("state and Hamiltonian use different eps or mode counts")
    if u.n_max != H.n_max:
        raise ValueError(f"state n_max {u.n_max} != Hamiltonian n_max {H.n_max}")
    if picture not in ("schrodinger", "interaction"):
        raise ValueError(f"unknown picture {picture!r}")
    scale = t / H.eps
    blocks = []
    for n, b in enumerate(u.blocks):
        if not b.any():
            blocks.append(b)
            continue
        lam, V = H.eig(n)
        out = V @ (np.exp(-1j * scale * lam) * (V.conj().T @ b))
        if picture == "interaction":
            lam0, V0 = H.free_eig(n)
            out = V0 @ (np.exp(1j * scale * lam0) * (V0.conj().T @ out))
        blocks.append(out)
    return FockState(d=u.d, eps=u.eps, blocks=tuple(blocks), tail_mass=u.tail_mass)


def free_propagator(A, t: float) -> np.ndarray:
    """``exp(-i t A)`` for Hermitian ``A``."""
    lam, P = scipy.linalg.eigh(np.asarray(A, dtype=complex))
    return (P * np.exp(-1j * t * lam)[None, :]) @ P.conj().T


# ---------------------------------------------------------------------------
# Hartree flow
# ---------------------------------------------------------------------------


def hartree_velocity(t: float, z, A, interaction: InteractionSpec) -> np.ndarray:
    """Interaction-picture field ``-i e^{itA} [dQ/dzbar](e^{-itA} z)``."""
    U = free_propagator(A, t)
    return -1j * (U.conj().T @ interaction.grad_conj(U @ np.asarray(z, dtype=complex)))


def velocity_bound(z, interaction: InteractionSpec) -> float:
    """``r M sum_{j=2}^r |z|^(2j-1)``."""
    nz = float(np.linalg.norm(z))
    return interaction.r * interaction.M * sum(nz ** (2 * j - 1) for j in range(2, interaction.r + 1))


@dataclass
class HartreeTrajectory:
    times: np.ndarray
    states: np.ndarray
    tilde_states: np.ndarray
    mass_drift: np.ndarray
    energy_drift: np.ndarray
    max_mass_drift: float
    max_energy_drift: float

    def at(self, t: float) -> np.ndarray:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))[0]
        if idx.size == 0:
            raise KeyError(f"time {t} is not on the trajectory grid")
        return self.states[idx[0]]

    def to_csv(self, path) -> None:
        d = self.states.shape[1]
        header = ["t"]
        for i in range(d):
            header += [f"re_z{i}", f"im_z{i}"]
        header += ["mass_drift", "energy_drift"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [repr(float(t))]
                for v in self.states[k]:
                    row += [repr(float(v.real)), repr(float(v.imag))]
                row += [repr(float(self.mass_drift[k])), repr(float(self.energy_drift[k]))]
                w.writerow(row)


def hartree_integrate(
    z0,
    times,
    dt: float,
    A,
    interaction: InteractionSpec,
    mass_tol: float = 1e-8,
    energy_tol: float = 1e-6,
) -> HartreeTrajectory:
    """Fixed-step classical RK4 for the interaction-picture Hartree equation.

    Steps of at most ``dt`` land exactly on each requested time; the state is
    mapped back by ``z_t = e^{-itA} z~_t``.  Mass and energy drift are tracked
    at every step and a drift beyond 100x tolerance raises
    :class:`IntegrationError`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = _hermitian(A, 1e-12, "A")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be a non-negative, non-decreasing grid")
    lam, P = scipy.linalg.eigh(A)

    def to_lab(t, zt):
        return (P * np.exp(-1j * t * lam)[None, :]) @ (P.conj().T @ zt)

    def v(t, zt):
        z = to_lab(t, zt)
        g = interaction.grad_conj(z)
        return -1j * ((P * np.exp(1j * t * lam)[None, :]) @ (P.conj().T @ g))

    z = np.asarray(z0, dtype=complex).copy()
    m0, e0 = float(np.linalg.norm(z)), energy(z, A, interaction)
    t = 0.0
    states, tildes, mdrift, edrift = [], [], [], []
    worst_m = worst_e = 0.0
    for target in times:
        span = target - t
        steps = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
        h = span / steps if steps else 0.0
        for _ in range(steps):
            k1 = v(t, z)
            k2 = v(t + h / 2, z + h / 2 * k1)
            k3 = v(t + h / 2, z + h / 2 * k2)
            k4 = v(t + h, z + h * k3)
            z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            dm = abs(float(np.linalg.norm(z)) - m0)
            de = abs(energy(to_lab(t, z), A, interaction) - e0)
            worst_m, worst_e = max(worst_m, dm), max(worst_e, de)
            if dm > 100 * mass_tol or de > 100 * energy_tol:
                raise IntegrationError(
                    f"drift at t={t:.6g}: mass {dm:.2e}, energy {de:.2e}; reduce dt"
                )
        t = float(target)
        zl = to_lab(t, z)
        states.append(zl)
        tildes.append(z.copy())
        mdrift.append(abs(float(np.linalg.norm(z)) - m0))
        edrift.append(abs(energy(zl, A, interaction) - e0))
    return HartreeTrajectory(
        times=times,
        states=np.array(states),
        tilde_states=np.array(tildes),
        mass_drift=np.array(mdrift),
        energy_drift=np.array(edrift),
        max_mass_drift=worst_m,
        max_energy_drift=worst_e,
    )


# ---------------------------------------------------------------------------
# Integral formula for the interaction-picture characteristic function
# ---------------------------------------------------------------------------


@dataclass
class DysonReport:
    lhs: complex
    integral: complex
    residual: complex
    form_gap: float
    n_quad: int


def _simpson(values: np.ndarray, h: float) -> complex:
    return complex(h / 3.0 * (values[0] + values[-1] + 4 * values[1:-1:2].sum() + 2 * values[2:-1:2].sum()))


def dyson_report(
    u: FockState,
    xi,
    t: float,
    H: Hamiltonian,
    n_quad: int,
    form_checks: int = 5,
) -> DysonReport:
    """Both sides of the integral formula for ``Tr[rho~(t) W(sqrt(2) pi xi)]``.

    The integrand ``(i/eps) <u~(s), [Q_s^Wick, W] u~(s)>`` is integrated with
    composite Simpson on ``n_quad`` panels.  At ``form_checks`` evenly spaced
    nodes it is recomputed as ``(i/eps) <u~(s), W (Q_s(z + i pi eps xi) - Q_s(z))^Wick u~(s)>``
    from the exact Taylor shift; ``form_gap`` is the largest difference.
    """
    if n_quad < 2 or n_quad % 2:
        raise ValueError("n_quad must be a positive even number")
    if u.n_max < H.n_max:
        u = u.padded(H.n_max)
    eps = H.eps
    xi = np.asarray(xi, dtype=complex)
    W = weyl(math.sqrt(2.0) * math.pi * xi, eps, H.n_max).matrix
    shift = 1j * math.pi * eps * xi

    def q_blocks(s):
        U = free_propagator(H.A, s)
        rotated = H.interaction.rotated(U)
        return rotated, [wick_matrix(sym, eps, H.n_max) for sym in rotated.symbols()]

    def apply_blocks(ops, vec_state):
        out = np.zeros(vec_state.dim, complex)
        for op in ops:
            out += np.concatenate(op.apply(vec_state))
        return out

    def integrand(s):
        us = evolve(u, s, H, picture="interaction")
        v = us.vector()
        _, ops = q_blocks(s)
        qv = apply_blocks(ops, us)
        wv = W @ v
        qwv = apply_blocks(ops, FockState.from_vector(wv, u.d, eps)) if ops else np.zeros_like(v)
        return (1j / eps) * np.vdot(v, qwv - W @ qv)

    def integrand_shift(s):
        us = evolve(u, s, H, picture="interaction")
        rotated, _ = q_blocks(s)
        delta = PolySymbol(d=u.d)
        for sym in rotated.symbols():
            shifted = taylor_shift(sym, shift)
            for term in shifted:
                if term.bidegree == sym.bidegree:
                    term = WickSymbol(term.d, term.p, term.q, term.kernel - sym.kernel)
                delta._add_term(term)
        dv = np.zeros(us.dim, complex)
        for op in delta.quantize(eps, H.n_max).values():
            dv += np.concatenate(op.apply(us))
        return (1j / eps) * np.vdot(us.vector(), W @ dv)

    nodes = np.linspace(0.0, t, n_quad + 1)
    values = np.array([integrand(s) for s in nodes])
    integral = _simpson(values, t / n_quad) if t != 0 else 0j
    v0 = u.vector()
    vt = evolve(u, t, H, picture="interaction").vector()
    lhs = complex(np.vdot(vt, W @ vt) - np.vdot(v0, W @ v0))
    gap = 0.0
    if form_checks and H.interaction.terms:
        for idx in np.linspace(0, n_quad, form_checks).round().astype(int):
            gap = max(gap, abs(values[idx] - integrand_shift(nodes[idx])))
    return DysonReport(lhs=lhs, integral=integral, residual=lhs - integral, form_gap=gap, n_quad=n_quad)


def dyson_residual(u: FockState, xi, t: float, H: Hamiltonian, n_quad: int) -> complex:
    """Left side minus right side of the integral formula (quadrature error only)."""
    return dyson_report(u, xi, t, H, n_quad, form_checks=0).residual
