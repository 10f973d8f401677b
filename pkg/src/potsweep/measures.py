"""Discrete positive measures: potentials, mutual energies and Gram matrices."""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from . import geometry
from .kernels import Kernel


class IllConditionedError(RuntimeError):
    """The assembled Gram matrix is not numerically positive definite."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    support: geometry.DiscretizedSet
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.support.size,):
            raise ValueError(f"need one weight per cell ({self.support.size}), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def centers(self) -> np.ndarray:
        return self.support.centers

    def is_zero(self) -> bool:
        return not np.any(self.weights > 0)

    def __mul__(self, c: float) -> "DiscreteMeasure":
        if c < 0:
            raise ValueError("positive measures only scale by c >= 0")
        return DiscreteMeasure(self.support, c * self.weights)

    __rmul__ = __mul__

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if other.support is not self.support:
            raise ValueError("measures must share the same support object to be added")
        return DiscreteMeasure(self.support, self.weights + other.weights)


def dirac(points, weights=None, cell_measure: float = 1e-6) -> DiscreteMeasure:
    """Sum of point masses (unit masses unless ``weights`` is given)."""
    s = geometry.make_point_set(points, cell_measure)
    w = np.ones(s.size) if weights is None else np.asarray(weights, dtype=float)
    return DiscreteMeasure(s, w)


def uniform(s: geometry.DiscretizedSet, mass: float = 1.0) -> DiscreteMeasure:
    """Measure proportional to cell measure, with given total mass."""
    return DiscreteMeasure(s, mass * s.measures / s.measures.sum())


def potential(mu: DiscreteMeasure, k: Kernel, x, on_support: str = "raise"):
    """Potential ``sum_i w_i k(x, c_i)`` at one point or at each row of ``x``.

    Parameters
    ----------
    on_support : {"raise", "self_energy"}
        What to do when ``x`` coincides with a support center: refuse, or use
        the cell self-energy for that term (the Gram diagonal, so that the
        potential at support centers equals ``G @ w`` exactly).
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != mu.support.dim:
        raise ValueError(f"dimension mismatch: measure lives in R^{mu.support.dim}, x has {X.shape[1]}")
    M = k.matrix(X, mu.centers)
    hit = mu.support.locate(X)
    rows = np.flatnonzero(hit >= 0)
    if rows.size:
        if on_support != "self_energy":
            raise ValueError("potential requested at a support center; pass on_support='self_energy'")
        idx = hit[rows]
        M[rows, idx] = k.self_energies(
            mu.centers[idx], mu.support.measures[idx], mu.support.cell_dims[idx]
        )
    vals = M @ mu.weights
    return float(vals[0]) if single else vals


def _order_key(mu: DiscreteMeasure):
    return (mu.support.size, mu.centers.tobytes(), mu.weights.tobytes())


def mutual_energy(mu: DiscreteMeasure, nu: DiscreteMeasure, k: Kernel) -> float:
    """``I(mu, nu)``; coincident centers use the cell self-energy.

    The pair is put in a canonical order first, so ``I(mu, nu) == I(nu, mu)``
    holds bitwise.
    """
    if _order_key(nu) < _order_key(mu):
        mu, nu = nu, mu
    M = k.matrix(mu.centers, nu.centers)
    hit = nu.support.locate(mu.centers)
    rows = np.flatnonzero(hit >= 0)
    if rows.size:
        M[rows, hit[rows]] = k.self_energies(
            mu.centers[rows], mu.support.measures[rows], mu.support.cell_dims[rows]
        )
    return float(mu.weights @ (M @ nu.weights))


def energy(mu: DiscreteMeasure, k: Kernel) -> float:
    return mutual_energy(mu, mu, k)


@dataclass(eq=False)
class GramMatrix:
    entries: np.ndarray
    kernel: Kernel
    support: geometry.DiscretizedSet

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @functools.cached_property
    def factor(self):
        try:
            return cho_factor(self.entries, lower=False, check_finite=False)
        except LinAlgError as exc:
            raise IllConditionedError(
                f"Gram matrix of size {self.size} is not positive definite; "
                "cells are too close for the self-energy rule"
            ) from exc

    def smallest_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def energy(self, w) -> float:
        return float(w @ (self.entries @ w))


def assemble_gram(s: geometry.DiscretizedSet, k: Kernel, check: bool = True) -> GramMatrix:
    """Gram matrix ``G_ij = k(c_i, c_j)``, self-energies on the diagonal.

    The upper triangle is mirrored so G is exactly symmetric. Positive
    definiteness is certified by the smallest eigenvalue for m <= 200 and by a
    Cholesky factorization (kept for reuse) otherwise.
    """
    if s.dim != k.n:
        raise ValueError(f"set lives in R^{s.dim} but kernel in R^{k.n}")
    G = np.array(k.gram_entries(s), dtype=float)
    m = G.shape[0]
    for i in range(m - 1):
        G[i + 1 :, i] = G[i, i + 1 :]
    if not np.all(np.isfinite(G)):
        raise IllConditionedError("Gram matrix has non-finite entries (coincident centers?)")
    gram = GramMatrix(G, k, s)
    if check:
        if m <= 200:
            lam = gram.smallest_eigenvalue()
            if not lam > 0:
                raise IllConditionedError(f"Gram matrix smallest eigenvalue {lam:.3e} <= 0")
        gram.factor  # noqa: B018  raises IllConditionedError on failure
    return gram


# ---------------------------------------------------------------- CSV


def write_measure_csv(mu: DiscreteMeasure, path) -> None:
    """Columns ``x1..xn, cell_measure, weight``; 17 significant digits."""
    n = mu.support.dim
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([f"x{i + 1}" for i in range(n)] + ["cell_measure", "weight"])
        for c, a, w in zip(mu.centers, mu.support.measures, mu.weights):
            wr.writerow([format(v, ".17g") for v in (*c, a, w)])


def read_measure_csv(path, cell_dim: int | None = None) -> DiscreteMeasure:
    """Read a measure written by ``write_measure_csv`` onto a point-cloud support."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    n = len(header) - 2
    if header != [f"x{i + 1}" for i in range(n)] + ["cell_measure", "weight"]:
        raise ValueError(f"unexpected header {header}")
    centers, meas, w = body[:, :n], body[:, n], body[:, n + 1]
    desc = geometry.PointCloud(tuple(map(tuple, centers)), float(meas.mean()))
    s = geometry.DiscretizedSet(
        centers, meas, n if cell_dim is None else cell_dim, desc, 1,
        float(meas.mean() ** (1.0 / n)),
    )
    return DiscreteMeasure(s, w)
