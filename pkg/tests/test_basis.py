import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meanfield.basis import (
    DimensionCapError,
    fock_dimension,
    merge_coefficients,
    rank_occupations,
    sector_basis,
    sector_dimension,
    sym_power,
)
from meanfield.oracle import embedding

from conftest import cvec


def test_two_modes_three_particles_order():
    b = sector_basis(2, 3)
    assert b.dim == 4
    assert [tuple(o) for o in b.occupations] == [(3, 0), (2, 1), (1, 2), (0, 3)]


@pytest.mark.parametrize("d,n,dim", [(1, 7, 1), (3, 2, 6), (2, 3, 4), (4, 5, 56)])
def test_sector_dimensions(d, n, dim):
    assert sector_basis(d, n).dim == dim == sector_dimension(d, n)


def test_fock_dimension_is_sum_of_sectors():
    for d in range(1, 5):
        for n_max in range(0, 9):
            assert fock_dimension(d, n_max) == sum(sector_dimension(d, n) for n in range(n_max + 1))


def test_reverse_lexicographic_order_matches_sorted_tuples():
    occ = [tuple(o) for o in sector_basis(3, 4).occupations]
    brute = sorted((c for c in itertools.product(range(5), repeat=3) if sum(c) == 4), reverse=True)
    assert occ == brute


@given(st.integers(1, 4), st.integers(0, 9))
def test_rank_inverts_unrank(d, n):
    b = sector_basis(d, n)
    for i in range(b.dim):
        assert b.rank(b.unrank(i)) == i
    np.testing.assert_array_equal(rank_occupations(b.occupations, d), np.arange(b.dim))


def test_dimension_cap_is_enforced():
    with pytest.raises(DimensionCapError):
        sector_basis(6, 30, cap=1000)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        sector_basis(0, 3)
    with pytest.raises(ValueError):
        sector_basis(2, -1)


def test_sym_power_examples():
    np.testing.assert_allclose(sym_power(np.array([1.0, 0.0]), 2), [1, 0, 0])
    a, b = 0.3 - 0.7j, 1.1 + 0.2j
    v = sym_power(np.array([a, b]), 2)
    assert abs(v[1] - math.sqrt(2) * a * b) < 1e-15


@given(st.integers(1, 3), st.integers(0, 8), st.integers(0, 2**31 - 1))
def test_sym_power_norm_identity(d, n, seed):
    z = cvec(np.random.default_rng(seed), d)
    assert abs(np.linalg.norm(sym_power(z, n)) - np.linalg.norm(z) ** n) < 1e-12 * max(1, np.linalg.norm(z) ** n)


def test_sym_power_matches_tensor_power_projection(rng):
    # z^{(x)n} lives in the symmetric subspace; its occupation coordinates are E^T z^{(x)n}
    for d, n in [(2, 3), (3, 2), (3, 4)]:
        z = cvec(rng, d)
        tensor = z
        for _ in range(n - 1):
            tensor = np.kron(tensor, z)
        np.testing.assert_allclose(embedding(d, n).T @ tensor, sym_power(z, n), atol=1e-13)


def test_polarization_identity(rng):
    # S_n(xi_1 (x) ... (x) xi_n) = 1/(2^n n!) sum_{signs} s_1...s_n (sum s_j xi_j)^{(x)n}
    for d in (1, 2, 3):
        for n in range(1, 5):
            xis = [cvec(rng, d) for _ in range(n)]
            tensor = xis[0]
            for x in xis[1:]:
                tensor = np.kron(tensor, x)
            lhs = embedding(d, n).T @ tensor  # occupation coordinates of the symmetrized product
            rhs = np.zeros_like(lhs)
            for signs in itertools.product((1, -1), repeat=n):
                z = sum(s * x for s, x in zip(signs, xis))
                rhs += np.prod(signs) * sym_power(z, n)
            rhs /= 2**n * math.factorial(n)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("d,a,b", [(1, 2, 3), (2, 1, 3), (2, 2, 2), (3, 2, 1), (3, 0, 2)])
def test_merge_coefficients_isometry_and_factorization(d, a, b, rng):
    M = merge_coefficients(d, a, b)
    flat = M.reshape(M.shape[0], -1)
    np.testing.assert_allclose(flat @ flat.T, np.eye(M.shape[0]), atol=1e-13)
    z = cvec(rng, d)
    split = np.einsum("a,abg->bg", sym_power(z, a + b), M)
    np.testing.assert_allclose(split, np.outer(sym_power(z, a), sym_power(z, b)), atol=1e-12)
