import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import j0

from meanfield.fock import Mixture, coherent_state, hermite_state, superposition_state, vacuum
from meanfield.wick import WickSymbol, identity_symbol, random_symbol
from meanfield.wigner import (
    EpsilonFamily,
    LimitMeasure,
    char_function,
    circle,
    escaping_schedule,
    limit_char,
    meanfield_distance,
    mixture,
    pi_diagnostic,
    point,
    projector_target,
    reduced_density,
    trace_norm,
    wick_expectation,
)

from conftest import cvec

seeds = st.integers(0, 2**31 - 1)


def coherent_char(f, xi, eps):
    return np.exp(2j * math.pi * np.vdot(xi, f).real) * math.exp(-eps * math.pi**2 * np.vdot(xi, xi).real / 2)


def phase_average(f, xi, n=400):
    """Trapezoid average of exp(2 i pi Re<xi, e^{i theta} f>) over the circle."""
    theta = 2 * math.pi * np.arange(n) / n
    return np.mean(np.exp(2j * math.pi * (np.exp(1j * theta) * np.vdot(xi, f)).real))


# --- characteristic functions ---------------------------------------------------


def test_char_of_vacuum_is_gaussian(rng):
    eps = 0.2
    u = vacuum(2, eps, 30)
    xi = cvec(rng, 2, 0.3)
    assert abs(char_function(u, xi) - coherent_char(np.zeros(2), xi, eps)) < 1e-12


@pytest.mark.parametrize("route", ["factorized", "dense"])
def test_char_of_coherent_state_matches_closed_form(route, rng):
    eps = 1 / 8
    f = np.array([0.6, -0.3 + 0.4j])
    u = coherent_state(f, eps, tail_tol=1e-14)
    for _ in range(4):
        xi = cvec(rng, 2, 0.3)
        assert abs(char_function(u, xi, route) - coherent_char(f, xi, eps)) < 1e-9


def test_char_at_zero_is_norm():
    u = coherent_state(np.array([0.7, 0.2]), 0.1)
    assert abs(char_function(u, np.zeros(2)) - u.norm2()) < 1e-14
    with pytest.raises(ValueError):
        char_function(u, np.zeros(2), route="fft")


@given(seeds)
def test_char_is_bounded_by_one(seed):
    rng = np.random.default_rng(seed)
    u = superposition_state(np.array([0.6, 0.8]), cvec(rng, 2, 0.5), 0.25)
    assert abs(char_function(u, cvec(rng, 2))) <= 1 + 1e-12


@given(seeds, st.floats(0, 2 * math.pi))
def test_char_of_hermite_state_is_phase_blind(seed, theta):
    rng = np.random.default_rng(seed)
    f = cvec(rng, 2)
    f /= np.linalg.norm(f)
    xi = cvec(rng, 2, 0.4)
    a = char_function(hermite_state(f, 1 / 6), xi)
    b = char_function(hermite_state(np.exp(1j * theta) * f, 1 / 6), xi)
    assert abs(a - b) < 1e-12
    assert abs(a.imag) < 1e-12


def test_char_of_mixture_is_weighted_sum(rng):
    s1 = coherent_state(np.array([0.5, 0.1]), 0.2)
    s2 = hermite_state(np.array([0.0, 1.0]), 0.2)
    xi = cvec(rng, 2, 0.4)
    mix = Mixture((0.3, 0.7), (s1, s2))
    assert abs(char_function(mix, xi) - 0.3 * char_function(s1, xi) - 0.7 * char_function(s2, xi)) < 1e-14


# --- limit measures -----------------------------------------------------------------


def test_point_measure_char(rng):
    f, xi = cvec(rng, 3), cvec(rng, 3)
    assert abs(limit_char(point(f), xi) - np.exp(2j * math.pi * np.vdot(xi, f).real)) < 1e-14


@given(seeds)
def test_circle_char_matches_phase_average(seed):
    rng = np.random.default_rng(seed)
    f, xi = cvec(rng, 2), cvec(rng, 2, 0.5)
    assert abs(limit_char(circle(f), xi) - phase_average(f, xi)) < 1e-10


def test_circle_char_is_one_for_orthogonal_probe():
    assert abs(limit_char(circle([1.0, 0.0]), [0.0, 0.7j]) - 1.0) < 1e-15


def test_mixture_char_moments_and_validation(rng):
    f, g, xi = cvec(rng, 2), cvec(rng, 2), cvec(rng, 2)
    mu = mixture([0.25, 0.75], [point(f), circle(g)])
    expected = 0.25 * limit_char(point(f), xi) + 0.75 * j0(2 * math.pi * abs(np.vdot(xi, g)))
    assert abs(limit_char(mu, xi) - expected) < 1e-14
    assert mu.moment(1) == pytest.approx(0.25 * np.vdot(f, f).real + 0.75 * np.vdot(g, g).real)
    assert mu.moment(0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mixture([0.5, 0.6], [point(f), point(g)])
    with pytest.raises(ValueError):
        LimitMeasure("line", f=f)


def test_pushforward_moves_every_component(rng):
    U, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    f, g, xi = cvec(rng, 2), cvec(rng, 2), cvec(rng, 2)
    mu = mixture([0.5, 0.5], [point(f), circle(g)])
    moved = mu.pushforward(lambda z: U @ z)
    direct = mixture([0.5, 0.5], [point(U @ f), circle(U @ g)])
    assert abs(limit_char(moved, xi) - limit_char(direct, xi)) < 1e-14


# --- reduced densities ----------------------------------------------------------------


@pytest.mark.parametrize("p", [1, 2, 3])
def test_hermite_reduced_density_is_product_projector(p, rng):
    f = cvec(rng, 3)
    f /= np.linalg.norm(f)
    gamma = reduced_density(hermite_state(f, 0.1), p)
    assert not gamma.is_zero
    assert meanfield_distance(gamma, f, p) < 1e-12


@pytest.mark.parametrize("p", [1, 2])
def test_coherent_reduced_density_is_product_projector(p):
    f = np.array([0.5, 0.3 - 0.6j])
    u = coherent_state(f, 1 / 8, tail_tol=1e-14)
    assert meanfield_distance(u, point(f), p) < 1e-10


def test_vacuum_reduced_density_is_flagged():
    gamma = reduced_density(vacuum(2, 0.1, 5), 1)
    assert gamma.is_zero and gamma.normalization == 0.0
    assert not gamma.matrix.any()
    with pytest.raises(ValueError):
        reduced_density(vacuum(2, 0.1, 5), -1)


@pytest.mark.parametrize("p", [1, 2])
def test_reduced_density_is_dual_to_wick_expectations(p):
    rng = np.random.default_rng(77)
    u = superposition_state(np.array([0.6, 0.8j]), np.array([0.4, -0.5]), 0.2)
    gamma = reduced_density(u, p)
    for _ in range(20):
        b = random_symbol(rng, 2, p, p)
        lhs = wick_expectation(u, b)
        assert abs(lhs - gamma.normalization * np.trace(b.kernel @ gamma.matrix)) < 1e-12 * max(1, abs(lhs))


@given(seeds, st.integers(1, 2))
def test_reduced_density_is_a_density(seed, p):
    rng = np.random.default_rng(seed)
    u = superposition_state(np.array([1.0, 0.0]), cvec(rng, 2, 0.6), 0.25)
    gamma = reduced_density(u, p)
    assert abs(gamma.trace() - 1) < 1e-12
    assert gamma.min_eigenvalue() > -1e-12
    np.testing.assert_allclose(gamma.matrix, gamma.matrix.conj().T, atol=1e-15)


def test_reduced_density_ignores_global_phase(rng):
    u = coherent_state(cvec(rng, 2, 0.5), 0.2)
    g1, g2 = reduced_density(u, 2), reduced_density(u.phase(1.1), 2)
    np.testing.assert_allclose(g1.matrix, g2.matrix, atol=1e-15)


def test_distance_and_target_edge_cases():
    e0, e1 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    u = hermite_state(e0, 0.1)
    assert meanfield_distance(u, e1, 1) == pytest.approx(2.0)
    assert meanfield_distance(u, circle(e0), 1) < 1e-12
    T = projector_target(mixture([0.5, 0.5], [point(e0), point(2 * e1)]), 1)
    np.testing.assert_allclose(T, np.diag([0.1, 0.4]) / 0.5)
    with pytest.raises(ValueError):
        projector_target(point(np.zeros(2)), 1)
    assert trace_norm(np.diag([1.0, -2.0])) == pytest.approx(3.0)


def test_wick_expectation_examples():
    f = np.array([0.6, 0.8j])
    eps = 0.125
    u = coherent_state(f, eps, tail_tol=1e-14)
    assert abs(wick_expectation(u, identity_symbol(2, 1)) - 1.0) < 1e-12
    h = hermite_state(f, eps)
    quartic = WickSymbol(2, 2, 2, np.eye(3))  # |z|^4 in symmetric-power coordinates
    assert abs(wick_expectation(h, quartic) - (1 - eps)) < 1e-12


# --- families and moment diagnostic -------------------------------------------------------


def test_family_validation():
    with pytest.raises(ValueError):
        EpsilonFamily("hermite", [0.9, 0.0])
    with pytest.raises(ValueError):
        EpsilonFamily("squeezed", [1.0])
    with pytest.raises(ValueError):
        EpsilonFamily("superposition", [0.5, 0.0])
    with pytest.raises(ValueError):
        EpsilonFamily("hermite", [0.7, 0.0], schedule={0.5: 0})
    fam = EpsilonFamily("hermite", [math.sqrt(0.5), 0, 0], schedule=escaping_schedule([0.5, 0.25], [1, 2]))
    assert fam.persistent_modes() == [0]
    np.testing.assert_allclose(fam.vector(0.25), [math.sqrt(0.5), 0, math.sqrt(0.5)])
    with pytest.raises(KeyError):
        fam.vector(0.3)


def test_escaping_schedule_moves_outward():
    sched = escaping_schedule([1 / 32, 1 / 8, 1 / 16], [3, 4])
    assert sched == {1 / 8: 3, 1 / 16: 4, 1 / 32: 4}
    with pytest.raises(ValueError):
        escaping_schedule([0.1], [])


def test_pi_diagnostic_for_coherent_and_hermite():
    f = np.array([0.8, 0.6])
    rows = pi_diagnostic(EpsilonFamily("coherent", f, tail_tol=1e-14), [1 / 8], [0, 1, 2])
    assert [r["k"] for r in rows] == [0, 1, 2]
    assert rows[1]["gap"] < 1e-12
    assert rows[2]["quantum"] == pytest.approx(1 + 1 / 8, abs=1e-12)  # Poisson second moment
    herm = pi_diagnostic(EpsilonFamily("hermite", f), [1 / 8, 1 / 16], [1, 2, 3])
    assert max(r["gap"] for r in herm) < 1e-12


def test_escaping_family_loses_moment():
    fam = EpsilonFamily("hermite", [math.sqrt(0.5), 0, 0], schedule=escaping_schedule([1 / 4, 1 / 8], [1, 2]))
    rows = pi_diagnostic(fam, [1 / 4, 1 / 8], [1])
    for r in rows:
        assert r["quantum"] == pytest.approx(1.0, abs=1e-12)
        assert r["measure"] == pytest.approx(0.5)
        assert r["gap"] == pytest.approx(0.5, abs=1e-12)


def test_superposition_char_approaches_half_and_half():
    u, f = np.array([0.6, 0.8]), np.array([0.0, 0.7j])
    fam = EpsilonFamily("superposition", f, u=u)
    mu = fam.limit()
    xi = np.array([0.4 - 0.1j, 0.2])
    expected = 0.5 * j0(2 * math.pi * abs(np.vdot(xi, u))) + 0.5 * np.exp(2j * math.pi * np.vdot(xi, f).real)
    assert abs(limit_char(mu, xi) - expected) < 1e-14
    # coarse eps can oscillate, so check the tail of the sequence
    gaps = [abs(char_function(fam.state(eps), xi) - expected) for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64)]
    assert gaps[1] > gaps[2] > gaps[3]
    assert gaps[3] < 0.35 * gaps[0]
