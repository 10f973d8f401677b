"""Riesz and Green kernels with cell self-energies for Gram diagonals.

All evaluations go through ``scipy.spatial.distance.cdist`` so that
``k(x, y)`` and ``k(y, x)`` are bitwise equal and the pairwise values used for
potentials agree exactly with the Gram entries.
"""

from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import cdist

from . import geometry
from .solver import SolverError, solve_many


class KernelError(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def equivalent_ball_coefficient(beta: float, d: int) -> float:
    """Mean of ``|x - y|^(-beta)`` for x, y independent and uniform in the unit d-ball.

    The distance t of two such points has density ``S_{d-1} t^(d-1) L(t) / V_d^2``
    where ``L(t) = V_d I_{1 - t^2/4}((d+1)/2, 1/2)`` is the volume of the lens
    between two unit balls at distance t, so the mean reduces to a 1-D integral
    whose endpoint singularity is handled by an algebraic quadrature weight.
    Finite only for ``beta < d``.
    """
    if beta >= d:
        raise KernelError(
            f"kernel exponent {beta} >= cell dimension {d}: infinite self-energy "
            "(the set has zero capacity for this kernel)"
        )
    if beta == 0:
        return 1.0
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    lens = lambda t: special.betainc((d + 1) / 2, 0.5, 1.0 - 0.25 * t * t)
    val, _ = integrate.quad(lens, 0.0, 2.0, weight="alg", wvar=(d - 1 - beta, 0.0),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return area / vol * val


def equivalent_radius(measure, d):
    """Radius of the d-ball with the given d-volume."""
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return (np.asarray(measure, dtype=float) / vol) ** (1.0 / d)


def _points(X, n):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != n:
        raise KernelError(f"dimension mismatch: kernel has n = {n}, points have {X.shape[1]}")
    return X


def _riesz_values(r, power):
    with np.errstate(divide="ignore"):
        out = r**power
    out[r == 0] = np.inf
    return out


class Kernel:
    """Common interface; subclasses implement ``matrix`` and ``self_energies``."""

    n: int
    # Ugaheri constant; 1 (Frostman) for every kernel implemented here
    frostman_h = 1.0

    def eval(self, x, y) -> float:
        return float(self.matrix(x, y)[0, 0])

    def matrix(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def self_energies(self, centers, measures, dims) -> np.ndarray:
        raise NotImplementedError

    def self_energy(self, cell: geometry.Cell) -> float:
        return float(
            self.self_energies(
                np.atleast_2d(cell.center), np.array([cell.weight_measure]), np.array([cell.dim])
            )[0]
        )

    def gram_entries(self, s: geometry.DiscretizedSet) -> np.ndarray:
        G = self.matrix(s.centers, s.centers)
        np.fill_diagonal(G, self.self_energies(s.centers, s.measures, s.cell_dims))
        return G


@dataclass(frozen=True)
class Riesz(Kernel):
    """``|x - y|^(alpha - n)`` on R^n, 0 < alpha <= 2, alpha < n."""

    alpha: float
    n: int

    def __post_init__(self):
        if self.n not in geometry.SUPPORTED_DIMS:
            raise KernelError(f"n must be 2 or 3, got {self.n}")
        if not (0 < self.alpha <= 2 and self.alpha < self.n):
            raise KernelError(f"Riesz order must satisfy 0 < alpha <= 2, alpha < n; got {self.alpha}")

    @property
    def power(self) -> float:
        return self.alpha - self.n

    def matrix(self, X, Y):
        return _riesz_values(cdist(_points(X, self.n), _points(Y, self.n)), self.power)

    def self_energies(self, centers, measures, dims):
        dims = np.broadcast_to(np.asarray(dims, dtype=int), np.shape(measures))
        out = np.empty(len(dims))
        for d in np.unique(dims):
            sel = dims == d
            coef = equivalent_ball_coefficient(-self.power, int(d))
            out[sel] = coef * equivalent_radius(np.asarray(measures)[sel], int(d)) ** self.power
        return out

    def to_dict(self):
        return {"variant": "riesz", "alpha": self.alpha, "n": self.n}


def newtonian(n: int = 3) -> Riesz:
    return Riesz(2.0, n)


def _check_inside(X, R):
    r = np.linalg.norm(X, axis=1)
    if np.any(r >= R):
        raise KernelError(f"Green kernel points must lie in the open ball |x| < {R}")


def _dot(X, Y):
    # explicit loop keeps (X Y')_{ij} == (Y X')_{ji} bitwise
    out = X[:, 0, None] * Y[None, :, 0]
    for k in range(1, X.shape[1]):
        out = out + X[:, k, None] * Y[None, :, k]
    return out


@dataclass(frozen=True)
class GreenBall2(Kernel):
    """Newtonian Green kernel of the ball ``B(0, R)`` in R^n, n >= 3, by reflection."""

    R: float
    n: int = 3

    def __post_init__(self):
        if self.n != 3:
            raise KernelError("GreenBall2 is implemented for n = 3")
        if not self.R > 0:
            raise KernelError("R must be positive")

    def correction(self, X, Y):
        """Harmonic part ``(R/|y|)^(n-2) |x - y*|^(2-n)``, symmetric in x and y."""
        X, Y = _points(X, self.n), _points(Y, self.n)
        sx = np.sum(X * X, axis=1)
        sy = np.sum(Y * Y, axis=1)
        R2 = self.R * self.R
        Q = sx[:, None] * sy[None, :] - 2.0 * R2 * _dot(X, Y) + R2 * R2
        return self.R ** (self.n - 2) * Q ** ((2 - self.n) / 2)

    def matrix(self, X, Y):
        X, Y = _points(X, self.n), _points(Y, self.n)
        _check_inside(X, self.R)
        _check_inside(Y, self.R)
        lead = _riesz_values(cdist(X, Y), 2 - self.n)
        return lead - self.correction(X, Y)

    def self_energies(self, centers, measures, dims):
        centers = _points(centers, self.n)
        _check_inside(centers, self.R)
        lead = Riesz(2.0, self.n).self_energies(centers, measures, dims)
        sx = np.sum(centers * centers, axis=1)
        R2 = self.R * self.R
        Q = sx * sx - 2.0 * R2 * sx + R2 * R2
        return lead - self.R ** (self.n - 2) * Q ** ((2 - self.n) / 2)

    def to_dict(self):
        return {"variant": "green_ball2", "R": self.R, "n": self.n}


@dataclass
class ExteriorSweepConfig:
    """Truncation of the complement of D to the annulus ``R <= |z| <= r_out``."""

    r_out: float
    resolution: int
    tol_kkt: float = 1e-10
    cache: dict = field(default_factory=dict, repr=False)


class GreenAlphaBall(Kernel):
    """Fractional alpha-Green kernel of ``D = B(0, R)``, 1 < alpha < 2.

    ``g(x, y) = |x - y|^(alpha - n) - U(x)`` where U is the Riesz potential of
    the unit mass at y swept onto the (truncated, discretized) complement of D.
    The discrete correction is symmetrized as the mean of the two one-sided
    values, which makes the kernel exactly symmetric.

    Exterior sweeps are cached per source point (exact coordinates). The cache
    is filled under a lock, so concurrent readers are safe.
    """

    def __init__(self, alpha: float, R: float, n: int, ext: ExteriorSweepConfig):
        if not (1 < alpha < 2):
            raise KernelError(f"alpha-Green kernel needs 1 < alpha < 2, got {alpha}")
        if n not in geometry.SUPPORTED_DIMS:
            raise KernelError(f"n must be 2 or 3, got {n}")
        if not R > 0:
            raise KernelError("R must be positive")
        if ext.r_out < 4 * R:
            raise KernelError(f"exterior truncation r_out must be >= 4R, got {ext.r_out}")
        self.alpha, self.R, self.n, self.ext = float(alpha), float(R), int(n), ext
        self.riesz = Riesz(self.alpha, self.n)
        self._lock = threading.Lock()
        self._grid = None
        self._gram = None

    def __repr__(self):
        return (f"GreenAlphaBall(alpha={self.alpha}, R={self.R}, n={self.n}, "
                f"r_out={self.ext.r_out}, ext_resolution={self.ext.resolution})")

    @property
    def exterior(self) -> geometry.DiscretizedSet:
        if self._grid is None:
            self._grid = geometry.make_annulus_grid(
                np.zeros(self.n), self.R, self.ext.r_out, self.ext.resolution
            )
        return self._grid

    def _exterior_gram(self):
        if self._gram is None:
            from .measures import assemble_gram

            self._gram = assemble_gram(self.exterior, self.riesz)
        return self._gram

    def exterior_sweeps(self, Y) -> np.ndarray:
        """Weights on the exterior grid of the Riesz sweep of each unit point mass in Y."""
        Y = _points(Y, self.n)
        keys = [tuple(y) for y in Y]
        with self._lock:
            missing = list(dict.fromkeys(k for k in keys if k not in self.ext.cache))
            if missing:
                E = self.exterior.centers
                B = self.riesz.matrix(E, np.array(missing))
                sols = solve_many(self._exterior_gram(), B, tol_kkt=self.ext.tol_kkt)
                for k, sol in zip(missing, sols):
                    if not sol.converged:
                        raise SolverError(f"exterior sweep from {k} did not converge", sol)
                    self.ext.cache[k] = sol.w
            return np.stack([self.ext.cache[k] for k in keys], axis=1)

    def one_sided_correction(self, X, Y):
        """``U(x_i)`` for the exterior sweep of the unit mass at ``y_j``; shape (len X, len Y)."""
        X = _points(X, self.n)
        return self.riesz.matrix(X, self.exterior.centers) @ self.exterior_sweeps(Y)

    def correction(self, X, Y):
        X, Y = _points(X, self.n), _points(Y, self.n)
        a = self.one_sided_correction(X, Y)
        b = self.one_sided_correction(Y, X).T
        return 0.5 * (a + b)

    def matrix(self, X, Y):
        X, Y = _points(X, self.n), _points(Y, self.n)
        _check_inside(X, self.R)
        _check_inside(Y, self.R)
        return self.riesz.matrix(X, Y) - self.correction(X, Y)

    def self_energies(self, centers, measures, dims):
        centers = _points(centers, self.n)
        _check_inside(centers, self.R)
        lead = self.riesz.self_energies(centers, measures, dims)
        U = self.riesz.matrix(centers, self.exterior.centers)
        W = self.exterior_sweeps(centers)
        return lead - np.einsum("ij,ji->i", U, W)

    def gram_entries(self, s):
        X = s.centers
        _check_inside(X, self.R)
        one = self.one_sided_correction(X, X)
        corr = 0.5 * (one + one.T)
        G = self.riesz.matrix(X, X) - corr
        np.fill_diagonal(G, self.riesz.self_energies(X, s.measures, s.cell_dims) - np.diag(one))
        return G

    def to_dict(self):
        return {
            "variant": "green_alpha_ball",
            "alpha": self.alpha,
            "R": self.R,
            "n": self.n,
            "r_out": self.ext.r_out,
            "ext_resolution": self.ext.resolution,
        }


def cell_self_energy(k: Kernel, cell: geometry.Cell) -> float:
    """Finite Gram diagonal: kernel mean over the equivalent ball of the cell."""
    return k.self_energy(cell)


def kernel_from_dict(d: dict) -> Kernel:
    """Build a kernel from ``{"variant": ..., params}``; KeyError/KernelError on bad input."""
    variant = d["variant"]
    if variant == "riesz":
        return Riesz(float(d["alpha"]), int(d["n"]))
    if variant == "newtonian":
        return newtonian(int(d.get("n", 3)))
    if variant == "green_ball2":
        return GreenBall2(float(d["R"]), int(d.get("n", 3)))
    if variant == "green_alpha_ball":
        ext = ExteriorSweepConfig(float(d.get("r_out", 4 * float(d["R"]))), int(d["ext_resolution"]))
        return GreenAlphaBall(float(d["alpha"]), float(d["R"]), int(d["n"]), ext)
    raise KernelError(f"unknown kernel variant {variant!r}")
