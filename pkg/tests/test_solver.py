import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import nnqp_enumerate, random_spd

from potsweep.solver import kkt_ok, kkt_report, objective, solve, solve_many


def random_problem(seed, m):
    rng = np.random.default_rng(seed)
    return random_spd(rng, m), rng.normal(size=m)


@pytest.mark.parametrize("seed", range(20))
def test_matches_enumeration(seed):
    G, b = random_problem(seed, 2 + seed % 9)
    sol = solve(G, b, tol_kkt=1e-12)
    assert sol.converged
    np.testing.assert_allclose(sol.w, nnqp_enumerate(G, b), atol=1e-10)


def test_negative_rhs_gives_zero():
    G, b = random_problem(0, 6)
    sol = solve(G, -np.abs(b) - 0.1)
    assert sol.converged
    assert np.all(sol.w == 0)


def test_identity_examples():
    sol = solve(np.eye(3), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_allclose(sol.w, [1.0, 0.0, 0.5], atol=1e-14)
    assert objective(np.eye(3), np.array([1.0, -2.0, 0.5]), sol.w) == pytest.approx(-0.625)


def test_kkt_report_values():
    G = np.array([[2.0, 0.0], [0.0, 1.0]])
    b = np.array([2.0, -1.0])
    rep = kkt_report(G, b, np.array([1.0, 0.0]))
    assert rep.min_weight == 0.0
    assert rep.min_stationarity == 0.0
    assert rep.complementarity == 0.0
    assert kkt_ok(rep, b, np.array([1.0, 0.0]), 1e-12)
    bad = kkt_report(G, b, np.array([0.5, 0.0]))
    assert bad.min_stationarity == pytest.approx(-1.0)
    assert not kkt_ok(bad, b, np.array([0.5, 0.0]), 1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_positive_homogeneity(seed):
    G, b = random_problem(seed, 30)
    w1 = solve(G, b, tol_kkt=1e-12).w
    w3 = solve(G, 3.0 * b, tol_kkt=1e-12).w
    np.testing.assert_allclose(w3, 3.0 * w1, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_unique_from_two_starts(seed):
    G, b = random_problem(seed, 40)
    rng = np.random.default_rng(seed + 100)
    a = solve(G, b, tol_kkt=1e-12).w
    c = solve(G, b, tol_kkt=1e-12, w0=rng.uniform(0, 5, 40)).w
    np.testing.assert_allclose(a, c, atol=1e-9)


def test_objective_history_is_monotone():
    G, b = random_problem(7, 80)
    sol = solve(G, b)
    h = np.array(sol.history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]).clip(1.0))


def test_max_iter_reports_nonconvergence():
    G, b = random_problem(3, 60)
    sol = solve(G, b, max_iter=1, patience=10**6)
    assert not sol.converged
    assert sol.iterations == 1


def test_shape_validation():
    with pytest.raises(ValueError):
        solve(np.eye(3), np.ones(2))
    with pytest.raises(ValueError):
        solve(np.eye(2), np.array([np.nan, 1.0]))


def test_solve_many_agrees_with_solve():
    rng = np.random.default_rng(11)
    G = random_spd(rng, 50, cond=1e4)
    B = rng.normal(size=(50, 8))
    many = solve_many(G, B, tol_kkt=1e-12)
    for j, sol in enumerate(many):
        assert sol.converged
        np.testing.assert_allclose(sol.w, solve(G, B[:, j], tol_kkt=1e-12).w, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 8))
def test_kkt_certificate_property(seed, m):
    G, b = random_problem(seed, m)
    sol = solve(G, b)
    assert sol.converged
    assert sol.kkt.min_weight >= 0
    assert kkt_ok(sol.kkt, b, sol.w, 1e-8)


def test_scalar_examples():
    sol = solve(np.array([[2.0]]), np.array([4.0]))
    assert sol.w[0] == pytest.approx(2.0, rel=1e-14)
    assert sol.objective == pytest.approx(-4.0, rel=1e-14)
    rep = kkt_report(np.array([[2.0]]), np.array([4.0]), sol.w)
    assert (rep.min_weight, rep.min_stationarity, rep.complementarity) == (2.0, 0.0, 0.0)
    sol = solve(np.array([[2.0]]), np.array([-1.0]))
    assert sol.w[0] == 0.0
    assert sol.kkt.min_stationarity == 1.0


def test_two_by_two_interior_example():
    sol = solve(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(sol.w, [1 / 3, 1 / 3], rtol=1e-14)


def test_kkt_report_at_zero():
    G, b = random_problem(5, 6)
    b[0] = abs(b[0]) + 1.0
    assert kkt_report(G, b, np.zeros(6)).min_stationarity == -b.max()


@pytest.mark.parametrize("coupling", [0.0, 0.5])
def test_complementarity_first_order_perturbation(coupling):
    G = np.array([[2.0, coupling], [coupling, 1.0]])
    b = np.array([2.0, -1.0])
    w = solve(G, b, tol_kkt=1e-14).w
    assert w[1] == 0.0
    r = G @ w - b
    eps = 1e-6
    pert = kkt_report(G, b, w + np.array([0.0, eps])).complementarity
    # d/d eps of w'(Gw - b) along e_1 is r_1 + (Gw)_1; (Gw)_1 vanishes without coupling
    assert pert == pytest.approx(eps * (r[1] + (G @ w)[1]), rel=1e-5)
    if coupling == 0.0:
        assert pert == pytest.approx(eps * abs(r[1]), rel=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_homogeneity_relative(seed):
    G, b = random_problem(seed + 50, 25)
    w = solve(G, b, tol_kkt=1e-13).w
    for c in (0.01, 7.0):
        wc = solve(G, c * b, tol_kkt=1e-13).w
        assert np.max(np.abs(wc - c * w)) <= 1e-10 * np.max(np.abs(c * w))
