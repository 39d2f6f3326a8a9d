import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meanfield.basis import sector_basis, sym_power
from meanfield.fock import ladder, number_operator
from meanfield.oracle import OracleSizeError, wick_oracle
from meanfield.wick import (
    PolySymbol,
    WickSymbol,
    commutator,
    compose,
    derivative_kernel,
    identity_symbol,
    norm_estimates,
    random_symbol,
    symbol_eval,
    taylor_shift,
    wick_matrix,
)

from conftest import cvec

seeds = st.integers(0, 2**31 - 1)
degree = st.integers(0, 2)


def _valid_sectors(s1, s2, n_max):
    return [n for n in range(n_max + 1)
            if n + s2 >= 0 and n + max(s2, 0) <= n_max and 0 <= n + s1 + s2 <= n_max
            and n + s2 + max(s1, 0) <= n_max]


def wirtinger(fun, z, h=1e-5):
    """Central-difference d/dzbar of a scalar function of a complex vector."""
    out = np.zeros_like(z)
    for i in range(z.shape[0]):
        e = np.zeros_like(z)
        e[i] = h
        dx = (fun(z + e) - fun(z - e)) / (2 * h)
        dy = (fun(z + 1j * e) - fun(z - 1j * e)) / (2 * h)
        out[i] = 0.5 * (dx + 1j * dy)
    return out


# --- evaluation --------------------------------------------------------------


def test_symbol_eval_examples(rng):
    z = cvec(rng, 3)
    assert abs(symbol_eval(identity_symbol(3, 1), z) - np.vdot(z, z)) < 1e-13
    w = cvec(rng, 1)
    assert abs(symbol_eval(WickSymbol(1, 2, 2, [[0.7]]), w) - 0.7 * abs(w[0]) ** 4) < 1e-13
    dual = np.zeros((1, 3))
    dual[0, sector_basis(2, 2).rank((1, 1))] = 1
    z2 = cvec(rng, 2)
    assert abs(symbol_eval(WickSymbol(2, 2, 0, dual), z2) - math.sqrt(2) * z2[0] * z2[1]) < 1e-13


# --- quantization --------------------------------------------------------------


def test_quantized_modulus_squared_is_number_operator():
    op = wick_matrix(identity_symbol(2, 1), 0.1, 6)
    for n in range(7):
        np.testing.assert_allclose(op.blocks[n], number_operator(2, 0.1, 6).blocks[n], atol=1e-14)


def test_hopping_symbol_matrix_elements():
    eps = 0.2
    K = np.array([[0, 1], [0, 0]])  # b(z) = conj(z_1) z_2
    op = wick_matrix(WickSymbol(2, 1, 1, K), eps, 5)
    for n in range(1, 6):
        basis = sector_basis(2, n)
        for col, alpha in enumerate(basis.occupations):
            if alpha[1] == 0:
                assert not op.blocks[n][:, col].any()
                continue
            row = basis.rank(alpha + np.array([1, -1]))
            expected = eps * math.sqrt(alpha[1] * (alpha[0] + 1))
            assert abs(op.blocks[n][row, col] - expected) < 1e-14


def test_quartic_single_mode():
    eps, k = 0.1, 0.7
    op = wick_matrix(WickSymbol(1, 2, 2, [[k]]), eps, 9)
    for n in range(10):
        assert abs(op.blocks[n][0, 0] - eps**2 * n * (n - 1) * k) < 1e-14


@given(st.integers(1, 2), degree, degree, seeds)
def test_normal_ordered_route_equals_tensor_oracle(d, p, q, seed):
    b = random_symbol(np.random.default_rng(seed), d, p, q)
    eps, n_max = 0.3, 5
    op = wick_matrix(b, eps, n_max)
    for n in range(n_max + 1):
        if not 0 <= n - p + q <= n_max:
            continue
        ref = wick_oracle(b, eps, n)
        blk = op.blocks.get(n, np.zeros_like(ref))
        assert np.abs(blk - ref).max(initial=0) < 1e-12


def test_oracle_creation_operator_and_vacuum_sector(rng):
    xi = cvec(rng, 2)
    b = WickSymbol(2, 0, 1, xi.reshape(2, 1))
    ad = ladder(xi, "create", 0.2, 4)
    for n in range(4):
        np.testing.assert_allclose(wick_oracle(b, 0.2, n), ad.blocks[n], atol=1e-14)
    assert not wick_oracle(random_symbol(rng, 2, 2, 1), 0.2, 1).any()
    with pytest.raises(OracleSizeError):
        wick_oracle(random_symbol(rng, 3, 1, 1), 0.2, 9)


@given(seeds)
def test_quantization_is_linear_and_adjoint_covariant(seed):
    rng = np.random.default_rng(seed)
    b1, b2 = random_symbol(rng, 2, 1, 2), random_symbol(rng, 2, 1, 2)
    al, be = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    combo = WickSymbol(2, 1, 2, al * b1.kernel + be * b2.kernel)
    lhs, o1, o2 = (wick_matrix(x, 0.2, 5) for x in (combo, b1, b2))
    adj = wick_matrix(b1.adjoint(), 0.2, 5)
    for n in lhs.blocks:
        np.testing.assert_allclose(lhs.blocks[n], al * o1.blocks[n] + be * o2.blocks[n], atol=1e-12)
    dag = o1.dagger()
    for n in adj.blocks:
        np.testing.assert_allclose(adj.blocks[n], dag.blocks[n], atol=1e-13)


# --- derivatives -----------------------------------------------------------------


def test_derivative_examples(rng):
    z = cvec(rng, 3)
    np.testing.assert_allclose(derivative_kernel(identity_symbol(3, 1), 1, 0, z)[:, 0], z, atol=1e-14)
    w = cvec(rng, 1)
    k = 0.9
    dq = derivative_kernel(WickSymbol(1, 2, 2, [[k]]), 1, 0, w)[0, 0]
    assert abs(dq - 2 * k * abs(w[0]) ** 2 * w[0]) < 1e-13


@given(st.integers(1, 3), degree, degree, seeds)
def test_first_derivatives_match_wirtinger_differences(d, p, q, seed):
    rng = np.random.default_rng(seed)
    b = random_symbol(rng, d, p, q)
    z = cvec(rng, d, 0.7)
    if q >= 1:
        fd = wirtinger(lambda x: symbol_eval(b, x), z)
        np.testing.assert_allclose(derivative_kernel(b, 1, 0, z)[:, 0], fd, atol=1e-7)
    if p >= 1:
        fd = np.conj(wirtinger(lambda x: np.conj(symbol_eval(b, x)), z))  # d/dz = conj(d/dzbar conj)
        np.testing.assert_allclose(derivative_kernel(b, 0, 1, z)[0, :], fd, atol=1e-7)


def test_top_derivative_is_constant(rng):
    b = random_symbol(rng, 2, 2, 1)
    z1, z2 = cvec(rng, 2), cvec(rng, 2)
    np.testing.assert_allclose(derivative_kernel(b, 1, 2, z1), derivative_kernel(b, 1, 2, z2), atol=1e-13)
    with pytest.raises(ValueError):
        derivative_kernel(b, 2, 0, z1)


# --- composition -------------------------------------------------------------------


def test_number_squared_composition():
    eps, n_max = 0.1, 8
    N = identity_symbol(2, 1)
    poly = compose(N, N, eps)
    assert sorted(t.bidegree for t in poly) == [(1, 1), (2, 2)]
    op = poly.quantize(eps, n_max)[0]
    for n in range(n_max + 1):
        np.testing.assert_allclose(op.blocks[n], (eps * n) ** 2 * np.eye(n + 1), atol=1e-13)


def test_ccr_from_composition(rng):
    xi, eta = cvec(rng, 2), cvec(rng, 2)
    eps = 0.3
    b1 = WickSymbol(2, 1, 0, xi.conj().reshape(1, 2))  # <xi, z>
    b2 = WickSymbol(2, 0, 1, eta.reshape(2, 1))  # <z, eta>
    terms = {t.bidegree: t for t in compose(b1, b2, eps)}
    assert abs(terms[(0, 0)].kernel[0, 0] - eps * np.vdot(xi, eta)) < 1e-14
    comm = list(commutator(b1, b2, eps))
    assert [t.bidegree for t in comm] == [(0, 0)]
    assert abs(comm[0].kernel[0, 0] - eps * np.vdot(xi, eta)) < 1e-14


def test_no_contractible_legs_gives_single_term(rng):
    b1 = random_symbol(rng, 2, 0, 2)
    b2 = random_symbol(rng, 2, 1, 0)
    poly = compose(b1, b2, 0.2)
    assert len(poly) == 1
    z = cvec(rng, 2)
    assert abs(poly(z) - symbol_eval(b1, z) * symbol_eval(b2, z)) < 1e-12


@given(st.integers(1, 2), degree, degree, degree, degree, seeds)
def test_composition_is_exact_on_unclipped_sectors(d, p1, q1, p2, q2, seed):
    rng = np.random.default_rng(seed)
    eps, n_max = 0.25, 7
    b1, b2 = random_symbol(rng, d, p1, q1), random_symbol(rng, d, p2, q2)
    B1, B2 = wick_matrix(b1, eps, n_max), wick_matrix(b2, eps, n_max)
    prod = B1 @ B2
    comp = compose(b1, b2, eps).quantize(eps, n_max)[prod.shift]
    for n in _valid_sectors(B1.shift, B2.shift, n_max):
        if n in prod.blocks:
            np.testing.assert_allclose(comp.blocks[n], prod.blocks[n], atol=1e-10)


@given(seeds)
def test_commutator_matches_operator_commutator(seed):
    rng = np.random.default_rng(seed)
    eps, n_max = 0.25, 7
    b1, b2 = random_symbol(rng, 2, 1, 2), random_symbol(rng, 2, 2, 1)
    B1, B2 = wick_matrix(b1, eps, n_max), wick_matrix(b2, eps, n_max)
    ops = commutator(b1, b2, eps).quantize(eps, n_max)
    ref = B1 @ B2 - B2 @ B1
    for n in _valid_sectors(B1.shift, B2.shift, n_max):
        if n in _valid_sectors(B2.shift, B1.shift, n_max):
            np.testing.assert_allclose(ops[0].blocks[n], ref.blocks[n], atol=1e-10)


def test_gauge_invariant_symbols_commute_with_number(rng):
    N = identity_symbol(2, 1)
    assert len(commutator(N, N, 0.1)) == 0
    for ell in (2, 3):
        K = random_symbol(rng, 2, ell, ell).kernel
        Q = WickSymbol(2, ell, ell, K + K.conj().T)
        assert len(commutator(Q, N, 0.1)) == 0


# --- Taylor shift -----------------------------------------------------------------


def test_shift_of_modulus_squared(rng):
    z, w = cvec(rng, 2), cvec(rng, 2)
    poly = taylor_shift(identity_symbol(2, 1), w)
    assert sorted(t.bidegree for t in poly) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    expected = np.vdot(z, z) + np.vdot(z, w) + np.vdot(w, z) + np.vdot(w, w)
    assert abs(poly(z) - expected) < 1e-13


def test_shift_by_zero_returns_symbol(rng):
    b = random_symbol(rng, 2, 2, 1)
    poly = taylor_shift(b, np.zeros(2))
    top = poly.terms[(2, 1)]
    np.testing.assert_allclose(top.kernel, b.kernel, atol=1e-15)
    assert all(np.abs(t.kernel).max() == 0 for t in poly if t.bidegree != (2, 1))


@given(degree, degree, seeds)
def test_shift_expansion_evaluates_exactly(p, q, seed):
    rng = np.random.default_rng(seed)
    b = random_symbol(rng, 2, p, q)
    z, w = cvec(rng, 2), cvec(rng, 2)
    exact = symbol_eval(b, z + w)
    assert abs(taylor_shift(b, w)(z) - exact) < 1e-10 * max(1, abs(exact))


# --- norm estimates ---------------------------------------------------------------


def test_number_operator_weighted_norm():
    rep = norm_estimates(identity_symbol(2, 1), 0.1, 30)
    sup = max(0.1 * n / math.sqrt(1 + (0.1 * n) ** 2) for n in range(31))
    assert abs(rep["weighted"] - sup) < 1e-12
    assert rep["ok"] and rep["weighted"] <= 1


def test_linear_symbol_bound(rng):
    xi = cvec(rng, 3)
    rep = norm_estimates(WickSymbol(3, 0, 1, xi.reshape(3, 1)), 0.2, 12)
    assert rep["symbol_norm"] == pytest.approx(np.linalg.norm(xi))
    assert rep["ok"]


def test_norm_estimates_grow_monotonically_below_symbol_norm(rng):
    b = random_symbol(rng, 2, 2, 1)
    values = [norm_estimates(b, 0.1, n)["weighted"] for n in (6, 12, 24, 48)]
    assert all(x <= y + 1e-14 for x, y in zip(values, values[1:]))
    assert values[-1] <= b.norm() * (1 + 1e-12)


# --- serialization ------------------------------------------------------------------


def test_kernel_json_roundtrip(rng):
    b = random_symbol(rng, 3, 2, 1)
    back = WickSymbol.from_json(b.to_json())
    assert (back.d, back.p, back.q) == (3, 2, 1)
    np.testing.assert_array_equal(back.kernel, b.kernel)
    import json

    obj = json.loads(b.to_json())
    del obj["d"]
    assert WickSymbol.from_json(json.dumps(obj)).d == 3
    with pytest.raises(ValueError):
        WickSymbol.from_json(json.dumps({"p": 0, "q": 0, "kernel": [[[1.0, 0.0]]]}))


def test_poly_symbol_merges_equal_bidegrees(rng):
    b = random_symbol(rng, 2, 1, 1)
    poly = PolySymbol([b, b])
    assert len(poly) == 1
    z = cvec(rng, 2)
    assert abs(poly(z) - 2 * symbol_eval(b, z)) < 1e-12
    assert abs(sym_power(z, 1) @ sym_power(z, 1).conj() - np.vdot(z, z)) < 1e-13
