"""Sweeping (balayage) of discrete measures onto discretized compact sets.

On a finite grid "nearly everywhere on the target" means "at every target
cell". The swept measure of ``omega`` onto a target with Gram matrix ``G`` is
the solution of ``min 1/2 w'Gw - b'w, w >= 0`` with ``b`` the potential of
``omega`` at the target cells: the minimizer satisfies ``Gw >= b`` on every
cell, with equality wherever ``w > 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import geometry
from .kernels import Kernel
from .measures import DiscreteMeasure, GramMatrix, assemble_gram, mutual_energy, potential
from .solver import NnqpSolution, SolverError, solve

log = logging.getLogger(__name__)

DEFAULT_TOL_KKT = 1e-8


class BalayageError(ValueError):
    pass


@dataclass(eq=False)
class SweepResult:
    swept: DiscreteMeasure
    solution: NnqpSolution
    source_mass: float
    swept_mass: float
    target_potential: np.ndarray = field(repr=False)
    gram: GramMatrix = field(repr=False, default=None)

    def frostman_margin(self, h: float = 1.0) -> float:
        """``h * source_mass - swept_mass``; nonnegative when the mass bound holds."""
        return h * self.source_mass - self.swept_mass

    def residual(self) -> np.ndarray:
        """``U^{swept} - U^{omega}`` at the target cells (``Gw - b``)."""
        return self.gram.entries @ self.swept.weights - self.target_potential

    def diagnostics(self) -> dict:
        d = self.solution.diagnostics()
        d.update(source_mass=self.source_mass, swept_mass=self.swept_mass,
                 frostman_margin=self.frostman_margin(), cells=int(self.swept.support.size))
        return d


def _gram(target, k, gram):
    if gram is None:
        return assemble_gram(target, k)
    if gram.support is not target:
        raise BalayageError("supplied Gram matrix was assembled on a different set")
    return gram


def _finish(G, b, target, source_mass, tol_kkt, what) -> SweepResult:
    sol = solve(G, b, tol_kkt=tol_kkt)
    if not sol.converged:
        raise SolverError(f"{what}: NNQP solver did not converge in {sol.iterations} iterations", sol)
    res = SweepResult(
        swept=DiscreteMeasure(target, sol.w),
        solution=sol,
        source_mass=float(source_mass),
        swept_mass=float(sol.w.sum()),
        target_potential=b,
        gram=G,
    )
    return res


def source_potential_on_target(omega: DiscreteMeasure, target, k, G: GramMatrix) -> np.ndarray:
    """``U^omega`` at the target cells, for omega off the target or entirely on it."""
    active = np.flatnonzero(omega.weights > 0)
    hit = target.locate(omega.centers[active])
    if np.all(hit >= 0):
        return G.entries[:, hit] @ omega.weights[active]
    if np.any(hit >= 0):
        raise BalayageError(
            "source measure partly overlaps the target; it must lie entirely off or entirely on it"
        )
    return potential(omega, k, target.centers)


def sweep(
    omega: DiscreteMeasure,
    target: geometry.DiscretizedSet,
    k: Kernel,
    tol_kkt: float = DEFAULT_TOL_KKT,
    gram: GramMatrix | None = None,
) -> SweepResult:
    """Sweep ``omega`` onto ``target``.

    Raises
    ------
    BalayageError
        Zero source or mixed source/target overlap.
    SolverError
        The NNQP did not certify KKT.
    """
    if omega.is_zero():
        raise BalayageError("cannot sweep the zero measure")
    G = _gram(target, k, gram)
    b = source_potential_on_target(omega, target, k, G)
    return _finish(G, b, target, omega.total_mass, tol_kkt, "sweep")


def dirac_sweep(x, target, k: Kernel, tol_kkt: float = DEFAULT_TOL_KKT, gram=None) -> SweepResult:
    """Sweep of the unit point mass at ``x`` (evaluated pointwise, no cell averaging)."""
    x = geometry.as_point(x, target.dim)
    if target.locate(x)[0] >= 0:
        raise BalayageError(f"Dirac point {x} coincides with a target cell center")
    G = _gram(target, k, gram)
    b = k.matrix(target.centers, x)[:, 0]
    return _finish(G, b, target, 1.0, tol_kkt, "dirac_sweep")


@dataclass(eq=False)
class EquilibriumResult:
    measure: DiscreteMeasure
    capacity: float
    energy: float
    solution: NnqpSolution


def equilibrium(target, k: Kernel, tol_kkt: float = DEFAULT_TOL_KKT, gram=None) -> EquilibriumResult:
    """Capacitary measure: NNQP with ``b = 1``; its mass is the capacity.

    Checks the normalization ``mass == energy`` to 1e-8 relative.
    """
    G = _gram(target, k, gram)
    sol = solve(G, np.ones(target.size), tol_kkt=tol_kkt)
    if not sol.converged:
        raise SolverError("equilibrium: NNQP solver did not converge", sol)
    mass = float(sol.w.sum())
    en = G.energy(sol.w)
    if abs(mass - en) > 1e-8 * mass:
        raise BalayageError(f"equilibrium normalization failed: mass {mass!r} vs energy {en!r}")
    return EquilibriumResult(DiscreteMeasure(target, sol.w), mass, en, sol)


def _require_off_target(omega, target):
    active = omega.centers[omega.weights > 0]
    if np.any(target.locate(active) >= 0):
        raise BalayageError("source measure must be supported off the target")


def integral_representation(
    omega: DiscreteMeasure, target, k: Kernel, tol_kkt: float = DEFAULT_TOL_KKT, gram=None
) -> DiscreteMeasure:
    """``sum_j omega_j * (swept unit mass at y_j)``, merged in source-cell order."""
    _require_off_target(omega, target)
    G = _gram(target, k, gram)
    w = np.zeros(target.size)
    for y, a in zip(omega.centers, omega.weights):
        if a > 0:
            w += a * dirac_sweep(y, target, k, tol_kkt, gram=G).swept.weights
    return DiscreteMeasure(target, w)


def verify_symmetry(omega, lam, target, k: Kernel, tol_kkt: float = DEFAULT_TOL_KKT, gram=None) -> float:
    """Relative gap ``|I(omega^A, lam) - I(lam^A, omega)| / max(|.|, |.|, 1)``."""
    _require_off_target(omega, target)
    _require_off_target(lam, target)
    G = _gram(target, k, gram)
    left = mutual_energy(sweep(omega, target, k, tol_kkt, G).swept, lam, k)
    right = mutual_energy(sweep(lam, target, k, tol_kkt, G).swept, omega, k)
    return abs(left - right) / max(abs(left), abs(right), 1.0)


@dataclass(eq=False)
class RefinementSequence:
    potentials: np.ndarray  # (levels, probes)
    masses: np.ndarray
    results: list


def refinement_sequence(omega, targets, k: Kernel, probes, tol_kkt: float = DEFAULT_TOL_KKT):
    """Sweep onto each of the nested targets ``K_1 c K_2 c ...`` and record potentials at probes."""
    targets = list(targets)
    for a, b in zip(targets, targets[1:]):
        if not geometry.is_nested(a, b):
            raise BalayageError("targets are not nested as point sets")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    results = [sweep(omega, t, k, tol_kkt) for t in targets]
    pots = np.array([potential(r.swept, k, probes) for r in results])
    return RefinementSequence(pots, np.array([r.swept_mass for r in results]), results)


# ---------------------------------------------------------------- Gamma class


@dataclass(eq=False)
class GammaWitness:
    """A measure whose potential dominates ``U^omega`` at every target cell."""

    measure: DiscreteMeasure
    feasibility_margin: float
    label: str = ""


def gamma_witness(nu, omega, target, k, tol_kkt: float = DEFAULT_TOL_KKT, label: str = "",
                  gram=None) -> GammaWitness:
    G = _gram(target, k, gram)
    b = source_potential_on_target(omega, target, k, G)
    hit = target.locate(nu.centers[nu.weights > 0])
    if np.all(hit >= 0) and np.any(nu.weights > 0):
        u = G.entries[:, hit] @ nu.weights[nu.weights > 0]
    else:
        u = potential(nu, k, target.centers, on_support="self_energy")
    margin = float(np.min(u - b))
    scale = max(1.0, float(np.max(np.abs(b))))
    if margin < -tol_kkt * scale:
        raise BalayageError(f"witness {label!r} is not in the Gamma class (margin {margin:.3e})")
    return GammaWitness(nu, margin, label)


def combine(parts) -> DiscreteMeasure:
    """``sum_j c_j mu_j`` for (c_j, mu_j) pairs on possibly different supports."""
    parts = [(c, mu) for c, mu in parts if c > 0]
    s = geometry.make_union([mu.support for _, mu in parts])
    w = np.zeros(s.size)
    for c, mu in parts:
        w[s.locate(mu.centers)] += c * mu.weights
    return DiscreteMeasure(s, w)


def standard_witnesses(omega, target, k, swept: SweepResult | None = None, tol_kkt=DEFAULT_TOL_KKT,
                       gram=None):
    """omega itself, the scaled equilibrium measure, and (if given) the midpoint of omega and its sweep."""
    G = _gram(target, k, gram)
    b = source_potential_on_target(omega, target, k, G)
    eq = equilibrium(target, k, tol_kkt, G)
    # U^eq >= 1 - tol on target, so c * eq dominates b up to c * tol
    c = float(np.max(b))
    out = [
        gamma_witness(omega, omega, target, k, tol_kkt, "source", G),
        gamma_witness(c * eq.measure, omega, target, k, tol_kkt, "scaled equilibrium", G),
    ]
    if swept is not None:
        mix = combine([(0.5, omega), (0.5, swept.swept)])
        out.append(gamma_witness(mix, omega, target, k, tol_kkt, "midpoint", G))
    return out


@dataclass
class GammaReport:
    swept_mass: float
    swept_norm: float
    rows: list  # one dict per witness
    ok: bool


def gamma_mass_check(omega, target, k, witnesses, probes=None, tol: float = 1e-6,
                     tol_kkt: float = DEFAULT_TOL_KKT, gram=None) -> GammaReport:
    """Compare the sweep with Gamma-class witnesses in mass, potential and energy norm."""
    G = _gram(target, k, gram)
    res = sweep(omega, target, k, tol_kkt, G)
    if probes is None:
        probes = probe_points(target)
    u_swept = potential(res.swept, k, probes)
    norm = np.sqrt(G.energy(res.swept.weights))
    rows = []
    for wit in witnesses:
        scale = max(1.0, float(np.max(np.abs(res.target_potential))))
        if wit.feasibility_margin < -tol_kkt * scale:
            raise BalayageError(f"infeasible witness {wit.label!r}")
        u_wit = potential(wit.measure, k, probes, on_support="self_energy")
        gap = u_wit - u_swept
        wit_mass = wit.measure.total_mass
        wit_norm = np.sqrt(max(mutual_energy(wit.measure, wit.measure, k), 0.0))
        rows.append(
            {
                "label": wit.label,
                "witness_mass": wit_mass,
                "mass_ok": res.swept_mass <= wit_mass * (1 + tol),
                "min_potential_gap": float(np.min(gap)),
                "potential_ok": bool(np.all(gap >= -tol * np.maximum(1.0, np.abs(u_wit)))),
                "witness_norm": float(wit_norm),
                "norm_ok": norm <= wit_norm * (1 + tol),
            }
        )
    ok = all(r["mass_ok"] and r["potential_ok"] and r["norm_ok"] for r in rows)
    return GammaReport(res.swept_mass, float(norm), rows, ok)


# ---------------------------------------------------------------- probes


def probe_points(target, count: int = 50, guard: float | None = None, outer: float = 2.0,
                 center=None) -> np.ndarray:
    """Deterministic quasi-random points in a shell around the target.

    The shell spans radii ``[r_b + guard, outer * r_b + guard]`` about the
    target's centroid, with ``r_b`` the bounding radius and ``guard`` one cell
    diameter by default.
    """
    n = target.dim
    c = target.centroid() if center is None else np.asarray(center, dtype=float)
    rb = target.bounding_radius(c)
    if guard is None:
        guard = target.cell_diameter
    r0, r1 = rb + guard, outer * rb + guard
    u = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    radius = (r0**n + u[:, 0] * (r1**n - r0**n)) ** (1.0 / n)
    if n == 2:
        phi = 2 * np.pi * u[:, 1]
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    else:
        z = 2 * u[:, 1] - 1
        phi = 2 * np.pi * u[:, 2]
        s = np.sqrt(1 - z * z)
        dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    return c + radius[:, None] * dirs


def domination_gap(omega, result: SweepResult, k, probes) -> float:
    """``min_p U^omega(p) - U^{swept}(p)``; nonnegative when domination holds at the probes."""
    return float(np.min(potential(omega, k, probes) - potential(result.swept, k, probes)))
