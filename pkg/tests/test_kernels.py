import math

import numpy as np
import pytest

from potsweep import geometry
from potsweep.kernels import (
    ExteriorSweepConfig,
    GreenAlphaBall,
    GreenBall2,
    KernelError,
    Riesz,
    equivalent_ball_coefficient,
    kernel_from_dict,
    newtonian,
)


def random_pairs(rng, n, count, radius):
    """Points uniform in the ball of given radius."""
    x = rng.normal(size=(count, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * radius * rng.random((count, 1)) ** (1.0 / n)


@pytest.mark.parametrize("kern", [Riesz(1.0, 3), Riesz(1.5, 2), newtonian(3), Riesz(0.5, 2), GreenBall2(1.0)])
def test_symmetry_bitwise_1000_pairs(kern):
    rng = np.random.default_rng(0)
    X = random_pairs(rng, kern.n, 1000, 0.95)
    Y = random_pairs(rng, kern.n, 1000, 0.95)
    a = np.array([kern.eval(x, y) for x, y in zip(X, Y)])
    b = np.array([kern.eval(y, x) for x, y in zip(X, Y)])
    assert np.array_equal(a, b)
    assert np.all(a > 0)
    M = kern.matrix(X[:50], X[:50])
    np.fill_diagonal(M, 0.0)
    assert np.array_equal(M, M.T)


def test_riesz_values_and_diagonal():
    k = Riesz(1.0, 3)
    assert k.eval([0, 0, 0], [0, 0, 2]) == pytest.approx(0.25, rel=1e-15)
    assert k.eval([1, 1, 1], [1, 1, 1]) == math.inf
    assert newtonian(3).eval([0, 0, 0], [3, 4, 0]) == pytest.approx(0.2, rel=1e-15)


def test_riesz_decay_and_continuity():
    k = Riesz(1.5, 2)
    r = np.linspace(0.1, 10, 200)
    vals = k.matrix(np.zeros((1, 2)), np.c_[r, np.zeros_like(r)])[0]
    assert np.all(np.diff(vals) < 0)
    # continuity off the diagonal: small perturbation, small change
    x, y = np.array([0.3, 0.1]), np.array([-0.2, 0.4])
    assert abs(k.eval(x, y) - k.eval(x + 1e-9, y)) < 1e-7


@pytest.mark.parametrize("alpha,n", [(0.0, 3), (2.5, 3), (2.0, 2), (1.0, 4)])
def test_riesz_parameter_validation(alpha, n):
    with pytest.raises(KernelError):
        Riesz(alpha, n)


def test_dimension_mismatch():
    with pytest.raises(KernelError):
        Riesz(1.0, 3).eval([0, 0], [1, 1])


# ---------------------------------------------------------------- self energy


def test_coefficient_unit_ball_newtonian_closed_form():
    # mean of 1/|x - y| over the unit 3-ball is 6/5
    assert equivalent_ball_coefficient(1.0, 3) == pytest.approx(1.2, rel=1e-12)


def test_coefficient_disk_closed_form():
    assert equivalent_ball_coefficient(1.0, 2) == pytest.approx(16 / (3 * math.pi), rel=1e-12)


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_coefficient_segment_closed_form(beta):
    exact = 2 ** (1 - beta) / ((1 - beta) * (2 - beta))
    assert equivalent_ball_coefficient(beta, 1) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("beta,d", [(0.5, 2), (1.5, 3), (0.5, 3)])
def test_coefficient_monte_carlo(beta, d):
    rng = np.random.default_rng(1)
    x = random_pairs(rng, d, 400_000, 1.0)
    y = random_pairs(rng, d, 400_000, 1.0)
    mc = np.mean(np.linalg.norm(x - y, axis=1) ** -beta)
    assert equivalent_ball_coefficient(beta, d) == pytest.approx(mc, rel=1e-2)


def test_coefficient_rejects_zero_capacity():
    with pytest.raises(KernelError):
        equivalent_ball_coefficient(2.0, 2)


def test_self_energy_scaling():
    k = newtonian(3)
    c = geometry.Cell(np.zeros(3), 1.0, 3)
    c8 = geometry.Cell(np.zeros(3), 8.0, 3)
    # rho doubles, self-energy halves
    assert k.self_energy(c8) == pytest.approx(0.5 * k.self_energy(c), rel=1e-13)
    rho = (3 / (4 * math.pi)) ** (1 / 3)
    assert k.self_energy(c) == pytest.approx(1.2 / rho, rel=1e-12)


# ---------------------------------------------------------------- GreenBall2


def test_green_ball2_example_value():
    assert GreenBall2(1.0).eval([0, 0, 0], [0, 0, 0.5]) == pytest.approx(1.0, rel=1e-14)


def test_green_ball2_center_formula():
    k = GreenBall2(2.0)
    x = np.array([0.3, -0.4, 0.0])
    assert k.eval(x, [0, 0, 0]) == pytest.approx(1 / 0.5 - 1 / 2.0, rel=1e-13)


def test_green_ball2_matches_reflection_formula():
    rng = np.random.default_rng(3)
    R = 1.5
    k = GreenBall2(R)
    for x, y in zip(random_pairs(rng, 3, 50, 1.4), random_pairs(rng, 3, 50, 1.4)):
        ny = np.linalg.norm(y)
        ref = 1 / np.linalg.norm(x - y) - (R / ny) / np.linalg.norm(x - R**2 * y / ny**2)
        assert k.eval(x, y) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("direction", [[1, 0, 0], [0, 0, -1], [1, 1, 0], [-1, 2, 2]])
def test_green_ball2_vanishes_at_boundary(direction):
    k = GreenBall2(1.0)
    u = np.array(direction, dtype=float) / np.linalg.norm(direction)
    x = np.array([0.1, 0.2, -0.1])
    start = k.eval(x, 0.5 * u)
    near = k.eval(x, (1 - 1e-3) * u)
    assert 0 < near / start < 1e-2


def test_green_ball2_rejects_outside_points():
    with pytest.raises(KernelError):
        GreenBall2(1.0).eval([0, 0, 0], [0, 0, 1.0])


# ---------------------------------------------------------------- GreenAlphaBall


@pytest.fixture(scope="module")
def alpha_green():
    return GreenAlphaBall(1.5, 1.0, 2, ExteriorSweepConfig(4.0, 24))


def test_alpha_green_bounds_and_symmetry(alpha_green):
    rng = np.random.default_rng(4)
    X = random_pairs(rng, 2, 30, 0.9)
    Y = random_pairs(rng, 2, 30, 0.9)
    G = alpha_green.matrix(X, Y)
    R = Riesz(1.5, 2).matrix(X, Y)
    assert np.all(G >= 0)
    assert np.all(G <= R)
    assert np.array_equal(G, alpha_green.matrix(Y, X).T)


def test_alpha_green_gram_is_positive_definite(alpha_green):
    from potsweep.measures import assemble_gram

    s = geometry.make_ball_grid([0, 0], 0.5, 8)
    G = assemble_gram(s, alpha_green)
    assert G.smallest_eigenvalue() > 0
    assert np.array_equal(G.entries, G.entries.T)


def test_alpha_green_validation():
    with pytest.raises(KernelError):
        GreenAlphaBall(2.0, 1.0, 2, ExteriorSweepConfig(4.0, 8))
    with pytest.raises(KernelError):
        GreenAlphaBall(1.5, 1.0, 2, ExteriorSweepConfig(3.0, 8))
    k = GreenAlphaBall(1.5, 1.0, 2, ExteriorSweepConfig(4.0, 8))
    with pytest.raises(KernelError):
        k.eval([0, 0], [1.2, 0])


@pytest.mark.parametrize(
    "d",
    [
        {"variant": "riesz", "alpha": 1.0, "n": 3},
        {"variant": "newtonian", "n": 3},
        {"variant": "green_ball2", "R": 2.0, "n": 3},
    ],
)
def test_kernel_dict_roundtrip(d):
    k = kernel_from_dict(d)
    assert kernel_from_dict(k.to_dict()) == k


def test_planar_newtonian_is_out_of_scope():
    with pytest.raises(KernelError):
        newtonian(2)


def test_kernel_dict_unknown_variant():
    with pytest.raises(KernelError):
        kernel_from_dict({"variant": "gauss"})


def test_off_diagonal_continuity_shrinking_sequence():
    k = Riesz(1.0, 3)
    x, y = np.array([0.2, -0.1, 0.4]), np.array([-0.5, 0.3, 0.1])
    ref = k.eval(x, y)
    d = np.linalg.norm(x - y)
    u = np.array([1.0, -2.0, 2.0]) / 3.0
    for t in (1e-2, 1e-4, 1e-6):
        rel = abs(k.eval(x, y + t * u) - ref) / ref
        # relative change is at most (n - alpha) t / |x - y| to first order
        assert rel <= 1.01 * 2 * t / (d - t)


@pytest.mark.parametrize("kern", [Riesz(1.0, 3), Riesz(1.5, 2), newtonian(3)])
def test_decay_at_infinity(kern):
    grid = geometry.make_ball_grid(np.zeros(kern.n), 1.0, 4).centers
    e = np.zeros(kern.n)
    e[0] = 1.0
    sup = [kern.matrix(grid, [r * e]).max() for r in (1e2, 1e3, 1e4)]
    assert sup[0] > sup[1] > sup[2]
    # power-law decay: two decades in |y| cost a factor 100^(alpha - n)
    assert sup[2] / sup[0] == pytest.approx(100.0**kern.power, rel=2e-2)
    if kern.power <= -2:
        assert sup[2] < 1e-4 * sup[0]


def test_self_energy_depends_on_measure_only():
    k = Riesz(1.0, 3)
    a = geometry.Cell(np.zeros(3), 0.2, 3)
    b = geometry.Cell(np.ones(3), 0.2, 3)
    half = geometry.Cell(np.zeros(3), 0.1, 3)
    assert k.self_energy(a) == k.self_energy(b)
    assert k.self_energy(half) > k.self_energy(a)
