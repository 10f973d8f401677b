"""Balayage, equilibrium measures and fractional Green kernels on discretized sets.

Sweeps are computed as nonnegative quadratic programs over cell weights,
with Gram matrices assembled from kernel values and cell self-energies.
"""

from .balayage import (
    BalayageError,
    SweepResult,
    dirac_sweep,
    equilibrium,
    integral_representation,
    refinement_sequence,
    sweep,
    verify_symmetry,
)
from .geometry import (
    DiscretizedSet,
    GeometryError,
    make_annulus_grid,
    make_ball_grid,
    make_box_grid,
    make_nested_shells,
    make_point_set,
    make_sphere_grid,
    make_union,
)
from .green import GreenExperiment, frostman_crosscheck, green_sweep
from .kernels import GreenAlphaBall, GreenBall2, Kernel, Riesz, newtonian
from .measures import DiscreteMeasure, assemble_gram, dirac, energy, mutual_energy, potential, uniform
from .solver import NnqpSolution, SolverError, solve

__version__ = "0.1.0"
