import numpy as np
import pytest

from potsweep import green


@pytest.fixture(scope="module")
def exp12():
    return green.GreenExperiment(resolutions=(12,))


def test_green_sweep_loses_mass(exp12):
    r = green.green_sweep(exp12)
    assert 0 < r.swept_mass < 1
    assert r.solution.converged


def test_crosscheck_agrees_with_union_sweep(exp12):
    c = green.frostman_crosscheck(exp12)
    assert c.discrepancy < 5e-2
    assert c.exterior_mass > 0
    assert c.green_mass == pytest.approx(c.union_F_mass, rel=max(c.discrepancy, 1e-6) * 10)
    assert c.union_total_mass <= 1.0 + 1e-9
    row = c.row()
    assert row["cells_F"] == c.green.swept.support.size
    assert row["margin"] == pytest.approx(1 - c.green_mass)


def test_mass_grows_as_F_fills_D():
    exp = green.GreenExperiment(source=(0.85, 0.0), resolutions=(16,))
    curve = green.mass_curve(exp, [0.3, 0.5, 0.7])
    masses = [m for _, m in curve]
    assert masses[0] < masses[1] < masses[2] < 1


def test_truncation_delta_small(exp12):
    assert abs(green.truncation_delta(exp12)) < 1e-2


def test_three_dimensional_experiment_runs():
    exp = green.GreenExperiment(n=3, source=(0.75, 0.0, 0.0), resolutions=(8,), ext_factor=1.0)
    r = green.green_sweep(exp)
    assert 0 < r.swept_mass < 1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"source": (0.3, 0.0)},  # inside F
        {"source": (1.2, 0.0)},  # outside D
        {"r_F": 0.95, "source": (0.97, 0.0)},  # gap too small
        {"source": (0.52, 0.0)},  # within one cell of F
        {"alpha": 2.0},
        {"r_out": 2.0},
        {"source": (0.75, 0.0, 0.0)},
        {"resolutions": ()},
    ],
)
def test_experiment_validation(kwargs):
    with pytest.raises(green.ExperimentError):
        green.GreenExperiment(**kwargs)


def test_exterior_spacing_fixed_under_doubling():
    exp = green.GreenExperiment()
    r1 = exp.exterior_resolution(24)
    r2 = exp.exterior_resolution(24, 2 * exp.r_out)
    assert r2 == 2 * r1
    k1, k2 = exp.kernel(24), exp.kernel(24, 8.0)
    assert np.isclose(k1.exterior.spacing, k2.exterior.spacing)
