"""Discretizations of compact sets in R^2 and R^3.

Every set is stored as an array of cell centers together with the measure
(length, area or volume) of the cell each center stands for. Solid sets use a
cell-centred Cartesian lattice anchored at the set's center, so lattices of the
same spacing line up exactly; spheres use latitude bands in R^3 and equal arcs
in R^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union as TypingUnion

import numpy as np
from scipy.spatial import cKDTree

SUPPORTED_DIMS = (2, 3)
MEMBERSHIP_TOL = 1e-12


class GeometryError(ValueError):
    pass


def as_point(coords, dim: int | None = None) -> np.ndarray:
    """Validate ``coords`` as a point of R^n (n >= 2) and return a float array."""
    p = np.array(coords, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise GeometryError(f"a point needs at least 2 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"point coordinates must be finite: {p}")
    if dim is not None and p.size != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {p.size}")
    return p


@dataclass(frozen=True, eq=False)
class Cell:
    center: np.ndarray
    weight_measure: float
    # intrinsic dimension of the piece of set the cell represents
    # (n for solids, n - 1 for sphere cells)
    dim: int

    def __post_init__(self):
        if not self.weight_measure > 0:
            raise GeometryError("cell measure must be positive")


# ---------------------------------------------------------------- descriptors


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    kind = "sphere"

    def contains(self, x: np.ndarray, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1)
        return np.abs(r - self.radius) <= tol * max(1.0, self.radius)

    def exact_measure(self) -> float:
        n = len(self.center)
        return _unit_sphere_area(n) * self.radius ** (n - 1)

    def to_dict(self) -> dict:
        return {"shape": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    kind = "ball"

    def contains(self, x, tol=MEMBERSHIP_TOL):
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1)
        return r <= self.radius + tol * max(1.0, self.radius)

    def exact_measure(self) -> float:
        n = len(self.center)
        return _unit_ball_volume(n) * self.radius**n

    def to_dict(self) -> dict:
        return {"shape": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_in: float
    r_out: float

    kind = "annulus"

    def contains(self, x, tol=MEMBERSHIP_TOL):
        r = np.linalg.norm(np.atleast_2d(x) - np.asarray(self.center), axis=1)
        s = tol * max(1.0, self.r_out)
        return (r >= self.r_in - s) & (r <= self.r_out + s)

    def exact_measure(self) -> float:
        n = len(self.center)
        return _unit_ball_volume(n) * (self.r_out**n - self.r_in**n)

    def to_dict(self) -> dict:
        return {
            "shape": "annulus",
            "center": list(self.center),
            "r_in": self.r_in,
            "r_out": self.r_out,
        }


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    kind = "box"

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.atleast_2d(x)
        s = tol * max(1.0, float(np.max(np.abs(np.r_[self.lo, self.hi]))))
        return np.all((x >= np.asarray(self.lo) - s) & (x <= np.asarray(self.hi) + s), axis=1)

    def exact_measure(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def to_dict(self) -> dict:
        return {"shape": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class PointCloud:
    """Isolated cells, used for Dirac-like source measures."""

    points: tuple
    cell_measure: float

    kind = "points"

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.atleast_2d(x)
        d, _ = cKDTree(np.asarray(self.points)).query(x)
        return d <= tol

    def exact_measure(self) -> float:
        return len(self.points) * self.cell_measure

    def to_dict(self) -> dict:
        return {
            "shape": "points",
            "points": [list(p) for p in self.points],
            "cell_measure": self.cell_measure,
        }


@dataclass(frozen=True)
class UnionSet:
    parts: tuple  # of (descriptor, resolution) pairs

    kind = "union"

    def contains(self, x, tol=MEMBERSHIP_TOL):
        x = np.atleast_2d(x)
        out = np.zeros(len(x), dtype=bool)
        for desc, _ in self.parts:
            out |= desc.contains(x, tol)
        return out

    def exact_measure(self) -> float:
        # parts are assumed essentially disjoint
        return sum(desc.exact_measure() for desc, _ in self.parts)

    def to_dict(self) -> dict:
        return {
            "shape": "union",
            "parts": [dict(desc.to_dict(), resolution=res) for desc, res in self.parts],
        }


Descriptor = TypingUnion[Sphere, Ball, Annulus, Box, PointCloud, UnionSet]


# ---------------------------------------------------------------- the set


@dataclass(frozen=True, eq=False)
class DiscretizedSet:
    """Ordered cells approximating a compact set.

    Attributes
    ----------
    centers : ndarray, shape (m, n)
    measures : ndarray, shape (m,)
        Length/area/volume of each cell.
    cell_dims : ndarray of int, shape (m,)
        Intrinsic dimension of each cell (n for solid cells, n - 1 on spheres).
    descriptor : shape the set discretizes.
    resolution : refinement level; ``refine`` doubles it.
    spacing : nominal cell diameter scale (lattice step or arc length).
    """

    centers: np.ndarray
    measures: np.ndarray
    cell_dims: np.ndarray
    descriptor: Descriptor
    resolution: int
    spacing: float
    _tree: cKDTree = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] == 0:
            raise GeometryError("a discretized set needs at least one cell")
        if c.shape[1] not in SUPPORTED_DIMS:
            raise GeometryError(f"ambient dimension {c.shape[1]} not supported")
        w = np.array(self.measures, dtype=float)
        if w.shape != (c.shape[0],) or not np.all(w > 0):
            raise GeometryError("cell measures must be positive, one per cell")
        dims = np.broadcast_to(np.asarray(self.cell_dims, dtype=int), w.shape).copy()
        c.setflags(write=False)
        w.setflags(write=False)
        dims.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "measures", w)
        object.__setattr__(self, "cell_dims", dims)
        tree = cKDTree(c)
        if c.shape[0] > 1 and tree.query(c, k=2)[0][:, 1].min() == 0.0:
            raise GeometryError("cell centers must be pairwise distinct")
        object.__setattr__(self, "_tree", tree)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def cells(self) -> list[Cell]:
        return [
            Cell(self.centers[i], float(self.measures[i]), int(self.cell_dims[i]))
            for i in range(self.size)
        ]

    @property
    def total_measure(self) -> float:
        return float(self.measures.sum())

    @property
    def cell_diameter(self) -> float:
        return self.spacing * math.sqrt(self.dim)

    def locate(self, points, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        """Index of the cell whose center coincides with each point, or -1."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d, idx = self._tree.query(pts)
        scale = max(1.0, float(np.max(np.abs(self.centers))))
        return np.where(d <= tol * scale, idx, -1)

    def bounding_radius(self, center=None) -> float:
        c = self.centroid() if center is None else np.asarray(center, dtype=float)
        return float(np.max(np.linalg.norm(self.centers - c, axis=1)))

    def centroid(self) -> np.ndarray:
        return np.average(self.centers, axis=0, weights=self.measures)


# ---------------------------------------------------------------- constructors


def _check_dim(center: np.ndarray):
    if center.size not in SUPPORTED_DIMS:
        raise GeometryError(f"only n = 2 and n = 3 are supported, got n = {center.size}")


def _check_resolution(resolution: int):
    if int(resolution) != resolution or resolution < 2:
        raise GeometryError(f"resolution must be an integer >= 2, got {resolution}")


def _lattice(center: np.ndarray, half_extent: float, h: float) -> np.ndarray:
    """Cell-centred lattice ``center + h (k + 1/2)`` covering the cube of given half-extent."""
    kmax = int(math.ceil(half_extent / h - 1e-9))
    ticks = (np.arange(-kmax, kmax) + 0.5) * h
    grids = np.meshgrid(*([ticks] * center.size), indexing="ij")
    return center + np.stack([g.ravel() for g in grids], axis=1)


def make_sphere_grid(center, radius: float, resolution: int) -> DiscretizedSet:
    """Quasi-uniform grid on the sphere ``|x - center| = radius``.

    In R^2 the circle is split into ``resolution`` equal arcs. In R^3 the sphere
    is cut into ``round(resolution / 2)`` latitude bands of equal polar angle;
    band ``j`` carries about ``resolution * sin(theta_j)`` cells sharing the
    band's exact area, so ``resolution`` is the cell count around the equator.
    Cell centers sit on the area-bisecting latitude of their band.
    """
    center = as_point(center)
    _check_dim(center)
    if not radius > 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    _check_resolution(resolution)
    n = center.size
    if n == 2:
        phi = 2 * math.pi * np.arange(resolution) / resolution
        pts = center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        meas = np.full(resolution, 2 * math.pi * radius / resolution)
        spacing = 2 * math.pi * radius / resolution
    else:
        nb = max(1, int(round(resolution / 2)))
        chunks, meas = [], []
        for j in range(nb):
            t0, t1 = j * math.pi / nb, (j + 1) * math.pi / nb
            area = 2 * math.pi * radius**2 * (math.cos(t0) - math.cos(t1))
            m = max(1, int(round(resolution * math.sin(0.5 * (t0 + t1)))))
            zc = 0.5 * (math.cos(t0) + math.cos(t1))
            sc = math.sqrt(max(0.0, 1.0 - zc * zc))
            phi = 2 * math.pi * (np.arange(m) + 0.5 * (j % 2)) / m
            chunks.append(
                np.stack([sc * np.cos(phi), sc * np.sin(phi), np.full(m, zc)], axis=1)
            )
            meas.extend([area / m] * m)
        unit = np.vstack(chunks)
        # project back onto the sphere so membership holds to rounding
        unit /= np.linalg.norm(unit, axis=1, keepdims=True)
        pts = center + radius * unit
        meas = np.array(meas)
        spacing = math.pi * radius / nb
    return DiscretizedSet(
        pts, meas, n - 1, Sphere(tuple(center), float(radius)), int(resolution), spacing
    )


def make_ball_grid(center, radius: float, resolution: int) -> DiscretizedSet:
    """Lattice of spacing ``2 * radius / resolution`` clipped to the closed ball."""
    center = as_point(center)
    _check_dim(center)
    if not radius > 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    _check_resolution(resolution)
    h = 2 * radius / resolution
    pts = _lattice(center, radius, h)
    desc = Ball(tuple(center), float(radius))
    pts = pts[desc.contains(pts, tol=0.0)]
    if len(pts) == 0:
        raise GeometryError("ball grid is empty; increase resolution")
    n = center.size
    return DiscretizedSet(pts, np.full(len(pts), h**n), n, desc, int(resolution), h)


def make_annulus_grid(center, r_in: float, r_out: float, resolution: int) -> DiscretizedSet:
    """Lattice of spacing ``2 * r_out / resolution`` clipped to ``r_in <= |x - c| <= r_out``."""
    center = as_point(center)
    _check_dim(center)
    if not (0 < r_in < r_out):
        raise GeometryError(f"annulus needs 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    _check_resolution(resolution)
    h = 2 * r_out / resolution
    pts = _lattice(center, r_out, h)
    desc = Annulus(tuple(center), float(r_in), float(r_out))
    pts = pts[desc.contains(pts, tol=0.0)]
    if len(pts) == 0:
        raise GeometryError("annulus grid is empty; increase resolution")
    n = center.size
    return DiscretizedSet(pts, np.full(len(pts), h**n), n, desc, int(resolution), h)


def make_box_grid(lo, hi, resolution: int) -> DiscretizedSet:
    """Exact partition of the box into cells; ``resolution`` cells along the longest side."""
    lo, hi = as_point(lo), as_point(hi)
    _check_dim(lo)
    if lo.size != hi.size or not np.all(hi > lo):
        raise GeometryError("box needs lo < hi componentwise")
    _check_resolution(resolution)
    sides = hi - lo
    h = sides.max() / resolution
    counts = np.maximum(1, np.round(sides / h).astype(int))
    steps = sides / counts
    ticks = [lo[k] + (np.arange(counts[k]) + 0.5) * steps[k] for k in range(lo.size)]
    grids = np.meshgrid(*ticks, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vol = float(np.prod(steps))
    return DiscretizedSet(
        pts, np.full(len(pts), vol), lo.size, Box(tuple(lo), tuple(hi)), int(resolution),
        float(steps.max()),
    )


def make_point_set(points, cell_measure: float = 1e-6) -> DiscretizedSet:
    """Isolated cells at ``points``; the support of Dirac-like source measures."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    for p in pts:
        as_point(p, pts.shape[1])
    if len(np.unique(pts, axis=0)) != len(pts):
        raise GeometryError("point set has repeated points")
    if not cell_measure > 0:
        raise GeometryError("cell_measure must be positive")
    n = pts.shape[1]
    desc = PointCloud(tuple(map(tuple, pts)), float(cell_measure))
    spacing = cell_measure ** (1.0 / n)
    return DiscretizedSet(pts, np.full(len(pts), cell_measure), n, desc, 1, spacing)


def make_union(sets: Sequence[DiscretizedSet]) -> DiscretizedSet:
    """Concatenate grids of (essentially disjoint) sets; duplicate centers are dropped."""
    if not sets:
        raise GeometryError("union of no sets")
    dims = {s.dim for s in sets}
    if len(dims) != 1:
        raise GeometryError("union parts live in different dimensions")
    centers = np.vstack([s.centers for s in sets])
    meas = np.concatenate([s.measures for s in sets])
    cdims = np.concatenate([s.cell_dims for s in sets])
    _, keep = np.unique(centers, axis=0, return_index=True)
    keep = np.sort(keep)
    desc = UnionSet(tuple((s.descriptor, s.resolution) for s in sets))
    return DiscretizedSet(
        centers[keep], meas[keep], cdims[keep], desc, max(s.resolution for s in sets),
        min(s.spacing for s in sets),
    )


def build(desc: Descriptor, resolution: int) -> DiscretizedSet:
    """Discretize a descriptor at the given resolution."""
    if isinstance(desc, Sphere):
        return make_sphere_grid(desc.center, desc.radius, resolution)
    if isinstance(desc, Ball):
        return make_ball_grid(desc.center, desc.radius, resolution)
    if isinstance(desc, Annulus):
        return make_annulus_grid(desc.center, desc.r_in, desc.r_out, resolution)
    if isinstance(desc, Box):
        return make_box_grid(desc.lo, desc.hi, resolution)
    if isinstance(desc, PointCloud):
        return make_point_set(desc.points, desc.cell_measure)
    if isinstance(desc, UnionSet):
        return make_union([build(d, r) for d, r in desc.parts])
    raise GeometryError(f"unknown descriptor {desc!r}")


def refine(s: DiscretizedSet) -> DiscretizedSet:
    """Rebuild the same descriptor at doubled resolution.

    The coarse cell centers are generally not a subset of the fine ones; use
    ``make_nested_annuli`` when genuinely nested point sets are needed.
    """
    if isinstance(s.descriptor, PointCloud):
        return s
    if isinstance(s.descriptor, UnionSet):
        return make_union([build(d, 2 * r) for d, r in s.descriptor.parts])
    return build(s.descriptor, 2 * s.resolution)


def make_nested_annuli(center, r_in: float, r_outs: Sequence[float], spacing: float):
    """Annulus grids ``r_in <= |x| <= r_outs[j]`` on one shared lattice.

    Every ``2 * r_out / spacing`` must be an integer so all levels use the
    same lattice step; the resulting point sets are nested.
    """
    r_outs = list(r_outs)
    if any(b <= a for a, b in zip(r_outs, r_outs[1:])):
        raise GeometryError("outer radii must be strictly increasing")
    out = []
    for r_out in r_outs:
        res = 2 * r_out / spacing
        if abs(res - round(res)) > 1e-9:
            raise GeometryError(f"2*r_out/spacing must be an integer (r_out={r_out})")
        out.append(make_annulus_grid(center, r_in, r_out, int(round(res))))
    return out


def make_nested_shells(center, r_in: float, r_outs: Sequence[float], angular_resolution: int,
                       ratio: float | None = None):
    """Annuli ``r_in <= |x - c| <= r_outs[j]`` split into geometric spherical layers.

    Each layer ``[a, a * ratio]`` is a scaled copy of ``make_sphere_grid`` at
    ``angular_resolution``, placed at the volume-median radius and carrying the
    exact layer volume. Because every ``r_out / r_in`` must be an integer power
    of ``ratio``, the layers of a smaller annulus are layers of every larger
    one and the point sets are nested. The default ratio keeps cells roughly
    as thick as they are wide, which the Gram self-energy rule needs.
    """
    center = as_point(center)
    _check_dim(center)
    r_outs = [float(r) for r in r_outs]
    if not (r_in > 0 and r_outs and r_outs[0] > r_in):
        raise GeometryError("need 0 < r_in < r_outs[0]")
    if any(b <= a for a, b in zip(r_outs, r_outs[1:])):
        raise GeometryError("outer radii must be strictly increasing")
    _check_resolution(angular_resolution)
    n = center.size
    if ratio is None:
        per_octave = max(1, int(round(math.log(2) / math.log1p(2 * math.pi / angular_resolution))))
        ratio = 2.0 ** (1.0 / per_octave)
    if not ratio > 1:
        raise GeometryError(f"layer ratio must exceed 1, got {ratio}")
    counts = []
    for r_out in r_outs:
        k = math.log(r_out / r_in) / math.log(ratio)
        if abs(k - round(k)) > 1e-9:
            raise GeometryError(f"r_out/r_in must be an integer power of the layer ratio (r_out={r_out})")
        counts.append(int(round(k)))
    unit = make_sphere_grid(np.zeros(n), 1.0, angular_resolution)
    frac = unit.measures / unit.measures.sum()
    vn = _unit_ball_volume(n)
    out = []
    for r_out, nl in zip(r_outs, counts):
        pts, meas = [], []
        for j in range(nl):
            a, b = r_in * ratio**j, r_in * ratio ** (j + 1)
            rc = (0.5 * (a**n + b**n)) ** (1.0 / n)
            pts.append(center + rc * unit.centers)
            meas.append(frac * vn * (b**n - a**n))
        outer = r_in * ratio ** (nl - 1)
        spacing = max(outer * (ratio - 1), ratio * outer * unit.spacing)
        out.append(
            DiscretizedSet(
                np.vstack(pts), np.concatenate(meas), n,
                Annulus(tuple(center), float(r_in), r_out), int(angular_resolution), spacing,
            )
        )
    return out


def is_nested(coarse: DiscretizedSet, fine: DiscretizedSet) -> bool:
    return bool(np.all(fine.locate(coarse.centers) >= 0))


def descriptor_from_dict(d: dict) -> Descriptor:
    """Inverse of ``Descriptor.to_dict``; raises KeyError/ValueError on malformed input."""
    shape = d["shape"]
    if shape == "sphere":
        return Sphere(tuple(float(v) for v in d["center"]), float(d["radius"]))
    if shape == "ball":
        return Ball(tuple(float(v) for v in d["center"]), float(d["radius"]))
    if shape == "annulus":
        return Annulus(tuple(float(v) for v in d["center"]), float(d["r_in"]), float(d["r_out"]))
    if shape == "box":
        return Box(tuple(float(v) for v in d["lo"]), tuple(float(v) for v in d["hi"]))
    if shape == "points":
        return PointCloud(
            tuple(tuple(float(v) for v in p) for p in d["points"]),
            float(d.get("cell_measure", 1e-6)),
        )
    if shape == "union":
        return UnionSet(
            tuple((descriptor_from_dict(p), int(p["resolution"])) for p in d["parts"])
        )
    raise ValueError(f"unknown shape {shape!r}")
