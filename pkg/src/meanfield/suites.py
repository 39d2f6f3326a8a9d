"""Seeded invariant suites run by ``meanfield validate``.

Each suite returns a list of :class:`Check` records.  A check holds a measured
quantity and the bound it must respect; the reported margin of a suite is
the check closest to (or furthest beyond) its bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dynamics import (
    InteractionSpec,
    assemble_hamiltonian,
    dyson_residual,
    free_propagator,
    hartree_integrate,
)
from .fock import (
    coherent_state,
    dgamma,
    hermite_state,
    ladder,
    number_moment,
    number_operator,
    weyl,
)
from .oracle import ORACLE_CAP, many_body_block, wick_oracle
from .wick import commutator, compose, random_symbol, symbol_eval, taylor_shift, wick_matrix
from .wigner import circle, char_function, limit_char, reduced_density, wick_expectation

SEED = 20240601


@dataclass
class Check:
    name: str
    value: float
    bound: float
    upper: bool = True  # value must stay below bound; otherwise above

    @property
    def passed(self) -> bool:
        ok = self.value < self.bound if self.upper else self.value >= self.bound
        return bool(ok) and math.isfinite(self.value)

    @property
    def ratio(self) -> float:
        """How much of the allowance is used (> 1 means failure)."""
        if not math.isfinite(self.value):
            return math.inf
        if self.upper:
            return self.value / self.bound
        return self.bound / self.value if self.value > 0 else math.inf


def _max_gap(X, Y) -> float:
    return float(np.abs(np.asarray(X) - np.asarray(Y)).max(initial=0.0))


def _block_gap(lhs, rhs, sectors) -> float:
    gap = 0.0
    for n in sectors:
        if n in lhs.blocks or n in rhs.blocks:
            gap = max(gap, _max_gap(lhs.blocks[n], rhs.blocks[n]))
    return gap


def _random_vector(rng, d):
    return rng.standard_normal(d) + 1j * rng.standard_normal(d)


# ---------------------------------------------------------------------------
# Exact algebra
# ---------------------------------------------------------------------------


def suite_ccr() -> list[Check]:
    rng = np.random.default_rng(SEED)
    checks = []
    for d, n_max in [(1, 10), (2, 10), (3, 8)]:
        eps = 1.0 / (3 + d)
        worst = 0.0
        for _ in range(4):
            z1, z2 = _random_vector(rng, d), _random_vector(rng, d)
            a = ladder(z1, "annihilate", eps, n_max)
            ad = ladder(z2, "create", eps, n_max)
            comm = a.commutator(ad)
            expected = eps * np.vdot(z1, z2)
            for n in range(n_max):  # the top sector loses a* and is an edge
                worst = max(worst, _max_gap(comm.blocks[n], expected * np.eye(comm.blocks[n].shape[0])))
        checks.append(Check(f"[a(z1), a*(z2)] = eps<z1,z2> d={d}", worst, 1e-12))
        gap = _block_gap(dgamma(np.eye(d), eps, n_max), number_operator(d, eps, n_max), range(n_max + 1))
        checks.append(Check(f"dGamma(Id) = N d={d}", gap, 1e-14))
    return checks


def suite_wick_oracle() -> list[Check]:
    rng = np.random.default_rng(SEED + 1)
    checks = []
    for d, n_max in [(1, 10), (2, 10), (3, 7)]:
        eps = 0.2
        for p in range(3):
            for q in range(3):
                b = random_symbol(rng, d, p, q)
                op = wick_matrix(b, eps, n_max)
                worst = 0.0
                for n in range(n_max + 1):
                    m = n - p + q
                    if m < 0 or m > n_max or d ** max(n, m) > ORACLE_CAP:
                        continue
                    ref = wick_oracle(b, eps, n)
                    blk = op.blocks.get(n, np.zeros_like(ref))
                    worst = max(worst, _max_gap(blk, ref))
                checks.append(Check(f"normal-ordered vs tensor oracle d={d} (p,q)=({p},{q})", worst, 1e-12))
    return checks


def suite_routes() -> list[Check]:
    checks = []
    for d, orders in [(2, [2]), (2, [2, 3]), (3, [2])]:
        A = np.diag(np.linspace(0.3, -0.2, d))
        inter = InteractionSpec.seeded(d, orders, SEED, 1.0)
        n_max = 10 if d == 2 else 6
        H = assemble_hamiltonian(A, inter, 1.0 / n_max, n_max, verify=False)
        worst = 0.0
        for n in range(n_max + 1):
            if d**n > ORACLE_CAP:
                break
            worst = max(worst, _max_gap(many_body_block(A, inter.terms, H.eps, n), H.blocks[n]))
        checks.append(Check(f"Wick vs first-quantized Hamiltonian d={d} orders={orders}", worst, 1e-10))
    return checks


def _valid_product_sectors(op1, op2, n_max):
    s1, s2 = op1.shift, op2.shift
    return [n for n in range(n_max + 1)
            if n + s2 >= 0 and n + max(s2, 0) <= n_max and 0 <= n + s1 + s2 <= n_max
            and n + s2 + max(s1, 0) <= n_max]


def suite_wick_compose() -> list[Check]:
    rng = np.random.default_rng(SEED + 2)
    d, n_max, eps = 2, 9, 0.25
    worst_c, worst_k = 0.0, 0.0
    for _ in range(20):
        p1, q1, p2, q2 = rng.integers(0, 3, size=4)
        b1 = random_symbol(rng, d, int(p1), int(q1))
        b2 = random_symbol(rng, d, int(p2), int(q2))
        B1, B2 = wick_matrix(b1, eps, n_max), wick_matrix(b2, eps, n_max)
        prod = B1 @ B2
        shift = prod.shift
        sectors = _valid_product_sectors(B1, B2, n_max)
        comp = compose(b1, b2, eps).quantize(eps, n_max)[shift]
        worst_c = max(worst_c, _block_gap(prod, comp, sectors))
        comm_sym = commutator(b1, b2, eps).quantize(eps, n_max)
        comm_op = prod - (B2 @ B1)
        both = [n for n in sectors if n in _valid_product_sectors(B2, B1, n_max)]
        ref = comm_sym.get(shift)
        for n in both:
            blk = ref.blocks[n] if ref is not None else np.zeros_like(comm_op.blocks[n])
            worst_k = max(worst_k, _max_gap(comm_op.blocks[n], blk))
    return [Check("composition symbol vs operator product (20 pairs)", worst_c, 1e-10),
            Check("commutator symbol vs operator commutator (20 pairs)", worst_k, 1e-10)]


def suite_free_conjugation() -> list[Check]:
    rng = np.random.default_rng(SEED + 3)
    d, n_max, eps, t = 3, 6, 0.2, 0.7
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    A = (G + G.conj().T) / 2
    free = dgamma(A, eps, n_max)
    Ut = {n: scipy.linalg.expm(1j * t / eps * blk) for n, blk in free.blocks.items()}
    U1 = free_propagator(A, t)
    worst = 0.0
    for p, q in [(1, 1), (2, 1), (1, 2), (2, 2), (0, 2)]:
        b = random_symbol(rng, d, p, q)
        op = wick_matrix(b, eps, n_max)
        rot = wick_matrix(b.rotated(U1), eps, n_max)
        for n, blk in op.blocks.items():
            lhs = Ut[n + op.shift] @ blk @ Ut[n].conj().T
            worst = max(worst, _max_gap(lhs, rot.blocks[n]))
    return [Check("free conjugation equals rotated symbol", worst, 1e-10)]


def suite_taylor_shift() -> list[Check]:
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 4))
        b = random_symbol(rng, d, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        z, w = _random_vector(rng, d), _random_vector(rng, d)
        exact = symbol_eval(b, z + w)
        worst = max(worst, abs(taylor_shift(b, w)(z) - exact) / max(1.0, abs(exact)))
    return [Check("shift expansion equals b(z + w) (20 draws)", worst, 1e-10)]


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def suite_closed_forms() -> list[Check]:
    rng = np.random.default_rng(SEED + 5)
    f = np.array([0.8, 0.6j])
    worst_char = 0.0
    for eps in (1 / 8, 1 / 16, 1 / 32):
        u = coherent_state(f, eps, tail_tol=1e-10)
        for _ in range(4):
            xi = _random_vector(rng, 2) * 0.5
            exact = np.exp(2j * math.pi * np.vdot(xi, f).real - eps * math.pi**2 * np.vdot(xi, xi).real / 2)
            worst_char = max(worst_char, abs(char_function(u, xi) - exact))
    worst_moment = 0.0
    for n in (5, 8, 13, 16):
        eps = 1.0 / n
        h = hermite_state(np.array([0.6, 0.8j]), eps)
        for k in range(4):
            worst_moment = max(worst_moment, abs(number_moment(h, k) - (eps * n) ** k))
    # Weyl products and the shifted-symbol identity on a padded low-tail state
    eps = 1 / 8
    u = coherent_state(np.array([0.5, 0.3 - 0.2j]), eps, tail_tol=1e-12)
    n_max = u.n_max + 20
    u = u.padded(n_max)
    v = u.vector()
    worst_prod = 0.0
    for _ in range(3):
        x1, x2 = _random_vector(rng, 2) * 0.6, _random_vector(rng, 2) * 0.6
        lhs = weyl(x1, eps, n_max).matrix @ (weyl(x2, eps, n_max).matrix @ v)
        phase = np.exp(-0.5j * eps * np.vdot(x1, x2).imag)
        rhs = phase * (weyl(x1 + x2, eps, n_max).matrix @ v)
        worst_prod = max(worst_prod, float(np.linalg.norm(lhs - rhs)))
    worst_shift = 0.0
    for _ in range(3):
        xi = _random_vector(rng, 2) * 0.3
        b = random_symbol(rng, 2, int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        W = weyl(math.sqrt(2.0) * math.pi * xi, eps, n_max).matrix
        wu = W @ v
        lhs = np.vdot(wu, np.concatenate(wick_matrix(b, eps, n_max).apply(
            type(u).from_vector(wu, 2, eps))))
        shifted = taylor_shift(b, 1j * math.pi * eps * xi)
        rhs = wick_expectation(u, shifted)
        worst_shift = max(worst_shift, abs(lhs - rhs))
    return [
        Check("coherent characteristic function (tail 1e-10)", worst_char, 1e-6),
        Check("Hermite moments Tr[rho N^k] = (eps n)^k", worst_moment, 1e-12),
        Check("Weyl product relation", worst_prod, 1e-6),
        Check("Weyl conjugation equals shifted symbol", worst_shift, 1e-6),
    ]


def circle_char_quadrature(f, xi, n_theta: int = 512) -> complex:
    """Phase average of ``exp(2 i pi Re<xi, e^{i theta} f>)`` by the periodic trapezoid rule."""
    theta = 2 * math.pi * np.arange(n_theta) / n_theta
    overlap = np.vdot(xi, f)
    return complex(np.mean(np.exp(2j * math.pi * (np.exp(1j * theta) * overlap).real)))


def suite_limit_char() -> list[Check]:
    rng = np.random.default_rng(SEED + 6)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 4))
        f, xi = _random_vector(rng, d) * 0.7, _random_vector(rng, d) * 0.7
        worst = max(worst, abs(limit_char(circle(f), xi) - circle_char_quadrature(f, xi)))
    return [Check("circle measure transform vs theta quadrature (50 draws)", worst, 1e-10)]


def suite_reduced_density() -> list[Check]:
    rng = np.random.default_rng(SEED + 7)
    worst_dual, worst_trace, worst_neg = 0.0, 0.0, 0.0
    eps = 1 / 8
    states = [coherent_state(np.array([0.7, 0.4 - 0.3j]), eps),
              hermite_state(np.array([0.6, 0.8j]), eps)]
    for u in states:
        for p in (1, 2):
            g = reduced_density(u, p)
            worst_trace = max(worst_trace, abs(g.trace() - 1.0))
            worst_neg = max(worst_neg, -g.min_eigenvalue())
            for _ in range(10):
                b = random_symbol(rng, 2, p, p)
                lhs = np.trace(b.kernel @ g.matrix) * g.normalization
                worst_dual = max(worst_dual, abs(lhs - wick_expectation(u, b)))
    return [Check("reduced density duality with Wick expectations", worst_dual, 1e-10),
            Check("reduced density trace one", worst_trace, 1e-10),
            Check("reduced density positivity", worst_neg, 1e-10)]


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


def wirtinger_error(inter: InteractionSpec, z, h: float = 1e-5) -> float:
    """Relative error of the analytic ``d/dzbar Q`` against central differences."""
    z = np.asarray(z, dtype=complex)
    fd = np.zeros_like(z)
    for i in range(z.shape[0]):
        e = np.zeros_like(z)
        e[i] = h
        dx = (inter.value(z + e) - inter.value(z - e)) / (2 * h)
        dy = (inter.value(z + 1j * e) - inter.value(z - 1j * e)) / (2 * h)
        fd[i] = 0.5 * (dx + 1j * dy)
    g = inter.grad_conj(z)
    return float(np.linalg.norm(g - fd) / np.linalg.norm(g))


def suite_hartree() -> list[Check]:
    A = np.diag([0.3, -0.2])
    inter = InteractionSpec.seeded(2, [2], SEED, 1.0)
    times = np.linspace(0.0, 1.0, 11)
    tr = hartree_integrate(np.array([0.8, 0.6]), times, 1e-3, A, inter)
    lam = 0.7
    z0 = np.array([0.9 + 0.3j])
    single = InteractionSpec(1, {2: np.array([[lam]])})
    tr1 = hartree_integrate(z0, times, 1e-3, np.zeros((1, 1)), single)
    exact = np.array([np.exp(-2j * lam * abs(z0[0]) ** 2 * t) * z0 for t in times])
    rng = np.random.default_rng(SEED + 8)
    worst_w = 0.0
    for orders in ([2], [3], [2, 3]):
        inter_k = InteractionSpec.seeded(3, orders, SEED + len(orders), 1.0)
        for _ in range(5):
            worst_w = max(worst_w, wirtinger_error(inter_k, _random_vector(rng, 3)))
    return [
        Check("Hartree mass drift on [0, 1]", tr.max_mass_drift, 1e-8),
        Check("Hartree energy drift on [0, 1]", tr.max_energy_drift, 1e-6),
        Check("single-mode closed-form phase rotation", _max_gap(tr1.states, exact), 1e-8),
        Check("Wirtinger gradient vs finite differences", worst_w, 1e-6),
    ]


def dyson_experiment(n_quads=(8, 16, 32, 200), eps: float = 1 / 8, t: float = 0.5):
    """Residuals of the integral formula for a coherent state, keyed by panel count."""
    A = np.diag([0.3, -0.2])
    inter = InteractionSpec.seeded(2, [2], SEED, 1.0)
    u = coherent_state(np.array([0.8, 0.6]), eps, tail_tol=1e-10)
    H = assemble_hamiltonian(A, inter, eps, u.n_max, verify=False)
    xi = np.array([0.3 + 0.2j, -0.25 + 0.1j])
    return {n: abs(dyson_residual(u, xi, t, H, n)) for n in n_quads}


def suite_dyson() -> list[Check]:
    res = dyson_experiment()
    orders = [math.log2(res[8] / res[16]), math.log2(res[16] / res[32])]
    return [Check("integral formula residual at 200 panels", res[200], 1e-4),
            Check("quadrature self-convergence order", min(orders), 3.5, upper=False)]


SUITES = {
    "ccr": suite_ccr,
    "wick-oracle": suite_wick_oracle,
    "routes": suite_routes,
    "wick-compose": suite_wick_compose,
    "free-conjugation": suite_free_conjugation,
    "taylor-shift": suite_taylor_shift,
    "closed-forms": suite_closed_forms,
    "limit-char": suite_limit_char,
    "reduced-density": suite_reduced_density,
    "hartree": suite_hartree,
    "dyson": suite_dyson,
}


@dataclass
class SuiteReport:
    name: str
    checks: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst(self) -> Check:
        return max(self.checks, key=lambda c: c.ratio)

    def line(self) -> str:
        w = self.worst
        rel = "<" if w.upper else ">="
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: worst {w.name}: {w.value:.3e} (needs {rel} {w.bound:.1e}) "
                f"[{len(self.checks)} checks, {self.seconds:.1f}s]")


def validate_suites(selector: str = "all") -> list[SuiteReport]:
    """Run one named suite, or every suite for ``"all"``."""
    if selector == "all":
        names = list(SUITES)
    elif selector in SUITES:
        names = [selector]
    else:
        raise KeyError(f"unknown suite {selector!r}; choose from all, {', '.join(SUITES)}")
    reports = []
    for name in names:
        start = time.perf_counter()
        checks = SUITES[name]()
        reports.append(SuiteReport(name, checks, time.perf_counter() - start))
    return reports
