"""Sweeping with respect to the fractional alpha-Green kernel of a ball.

For a Dirac source in ``Delta = D \\ F`` (with ``D = B(0, R)`` and ``F`` a
closed concentric ball inside D) the sweep onto F under ``g_alpha`` loses
mass. The same measure is recovered by sweeping under the plain Riesz kernel
onto ``F`` together with the complement of D and keeping the part on F;
``frostman_crosscheck`` compares the two discretely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .balayage import DEFAULT_TOL_KKT, SweepResult, dirac_sweep
from .kernels import ExteriorSweepConfig, GreenAlphaBall, Riesz

MIN_GAP = 0.1


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class GreenExperiment:
    """Ball ``D = B(0, R)`` in R^n, interior ball ``F = B(0, r_F)``, unit Dirac source.

    Parameters
    ----------
    resolutions : tuple of int
        Lattice resolutions of F (cells across its diameter).
    r_out : float, optional
        Truncation radius of the complement of D; ``4 R`` by default.
    ext_factor : float
        The exterior annulus uses ``round(ext_factor * resolution * r_out / (4 R))``
        cells across its diameter, so doubling ``r_out`` keeps its spacing.
    """

    R: float = 1.0
    n: int = 2
    r_F: float = 0.5
    alpha: float = 1.5
    source: tuple = (0.75, 0.0)
    resolutions: tuple = (24, 48)
    r_out: float | None = None
    ext_factor: float = 4.0 / 3.0
    tol_kkt: float = DEFAULT_TOL_KKT
    ext_tol_kkt: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(float(v) for v in self.source))
        object.__setattr__(self, "resolutions", tuple(int(r) for r in self.resolutions))
        if self.r_out is None:
            object.__setattr__(self, "r_out", 4.0 * self.R)
        self.validate()

    @property
    def outer_radius(self) -> float:
        return float(self.r_out)

    def validate(self):
        R, r_F = self.R, self.r_F
        if self.n not in geometry.SUPPORTED_DIMS:
            raise ExperimentError(f"n must be 2 or 3, got {self.n}")
        if len(self.source) != self.n:
            raise ExperimentError(f"source must have {self.n} coordinates")
        if not (1 < self.alpha < 2):
            raise ExperimentError(f"alpha must lie in (1, 2), got {self.alpha}")
        if not (R > 0 and r_F > 0):
            raise ExperimentError("R and r_F must be positive")
        if R - r_F < MIN_GAP * R - 1e-12:
            raise ExperimentError(f"F must sit inside D with a gap of at least {MIN_GAP} R")
        if self.r_out < 4 * R:
            raise ExperimentError(f"r_out must be at least 4 R, got {self.r_out}")
        if not self.resolutions or min(self.resolutions) < 1:
            raise ExperimentError("resolutions must be a nonempty list of positive integers")
        s = math.hypot(*self.source)
        if s <= r_F:
            raise ExperimentError(f"source at radius {s:.6g} lies in F (r_F = {r_F})")
        if s >= R:
            raise ExperimentError(f"source at radius {s:.6g} lies outside D (R = {R})")
        for res in self.resolutions:
            diam = 2 * r_F / res * math.sqrt(self.n)
            if min(s - r_F, R - s) < diam:
                raise ExperimentError(
                    f"source must be at least one cell diameter ({diam:.3g}) from both "
                    f"boundaries of D \\ F at resolution {res}"
                )

    def exterior_resolution(self, resolution: int, r_out: float | None = None) -> int:
        r_out = self.r_out if r_out is None else r_out
        return max(1, int(round(self.ext_factor * resolution * r_out / (4 * self.R))))

    def kernel(self, resolution: int, r_out: float | None = None) -> GreenAlphaBall:
        r_out = self.r_out if r_out is None else r_out
        ext = ExteriorSweepConfig(r_out, self.exterior_resolution(resolution, r_out), self.ext_tol_kkt)
        return GreenAlphaBall(self.alpha, self.R, self.n, ext)

    def target(self, resolution: int) -> geometry.DiscretizedSet:
        return geometry.make_ball_grid(np.zeros(self.n), self.r_F, resolution)


def green_sweep(exp: GreenExperiment, resolution: int | None = None,
                kernel: GreenAlphaBall | None = None) -> SweepResult:
    """Sweep of the unit mass at ``exp.source`` onto F under the alpha-Green kernel."""
    res = exp.resolutions[0] if resolution is None else int(resolution)
    k = exp.kernel(res) if kernel is None else kernel
    return dirac_sweep(exp.source, exp.target(res), k, tol_kkt=exp.tol_kkt)


@dataclass(eq=False)
class Crosscheck:
    resolution: int
    discrepancy: float  # relative sup-norm gap of the two weight vectors on F
    green_mass: float
    union_F_mass: float
    exterior_mass: float
    union_total_mass: float
    green: SweepResult = field(repr=False)
    union: SweepResult = field(repr=False)

    @property
    def margin(self) -> float:
        return 1.0 - self.green_mass

    def row(self) -> dict:
        return {
            "resolution": self.resolution,
            "cells_F": int(self.green.swept.support.size),
            "cells_exterior": int(self.union.swept.support.size - self.green.swept.support.size),
            "green_mass": self.green_mass,
            "margin": self.margin,
            "union_F_mass": self.union_F_mass,
            "exterior_mass": self.exterior_mass,
            "union_total_mass": self.union_total_mass,
            "discrepancy": self.discrepancy,
        }


def frostman_crosscheck(exp: GreenExperiment, resolution: int | None = None,
                        kernel: GreenAlphaBall | None = None) -> Crosscheck:
    """Compare the alpha-Green sweep onto F with the Riesz sweep onto F plus the exterior.

    Both computations use the same exterior annulus grid: one through the
    kernel correction, the other as part of the target.
    """
    res = exp.resolutions[0] if resolution is None else int(resolution)
    k = exp.kernel(res) if kernel is None else kernel
    F = exp.target(res)
    g = dirac_sweep(exp.source, F, k, tol_kkt=exp.tol_kkt)
    union = geometry.make_union([F, k.exterior])
    u = dirac_sweep(exp.source, union, Riesz(exp.alpha, exp.n), tol_kkt=exp.tol_kkt)
    on_F = u.swept.weights[: F.size]
    wg = g.swept.weights
    disc = float(np.max(np.abs(wg - on_F)) / max(np.max(np.abs(on_F)), 1e-300))
    return Crosscheck(
        resolution=res,
        discrepancy=disc,
        green_mass=g.swept_mass,
        union_F_mass=float(on_F.sum()),
        exterior_mass=float(u.swept.weights[F.size:].sum()),
        union_total_mass=u.swept_mass,
        green=g,
        union=u,
    )


def truncation_delta(exp: GreenExperiment, resolution: int | None = None) -> float:
    """Change of the alpha-Green swept mass when ``r_out`` is doubled (same exterior spacing)."""
    res = exp.resolutions[0] if resolution is None else int(resolution)
    m1 = green_sweep(exp, res).swept_mass
    m2 = green_sweep(exp, res, exp.kernel(res, 2 * exp.r_out)).swept_mass
    return float(m2 - m1)


def mass_curve(exp: GreenExperiment, radii, resolution: int | None = None) -> list[tuple[float, float]]:
    """Alpha-Green swept mass as a function of the radius of F (source fixed)."""
    res = exp.resolutions[0] if resolution is None else int(resolution)
    out = []
    for r in radii:
        e = replace(exp, r_F=float(r), resolutions=(res,))
        out.append((float(r), green_sweep(e, res).swept_mass))
    return out
