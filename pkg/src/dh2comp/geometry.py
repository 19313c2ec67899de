"""Point clouds on the unit sphere and axis-parallel boxes."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# vertices of the double pyramid |x1| + |x2| + |x3| = 1
_OCTAHEDRON_FACES = [
    (np.array(a, float), np.array(b, float), np.array(c, float))
    for a, b, c in (
        ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
        ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
        ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),
        ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
        ((0, 1, 0), (1, 0, 0), (0, 0, -1)),
        ((-1, 0, 0), (0, 1, 0), (0, 0, -1)),
        ((0, -1, 0), (-1, 0, 0), (0, 0, -1)),
        ((1, 0, 0), (0, -1, 0), (0, 0, -1)),
    )
]


@dataclass(frozen=True)
class Box3:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(3)
        hi = np.asarray(self.upper, dtype=float).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"invalid box: lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, points, tol=0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=1)


def diam(b: Box3) -> float:
    return float(np.linalg.norm(b.upper - b.lower))


def dist(b1: Box3, b2: Box3) -> float:
    gap = np.maximum(0.0, np.maximum(b2.lower - b1.upper, b1.lower - b2.upper))
    return float(np.linalg.norm(gap))


def bounding_box(points) -> Box3:
    p = np.asarray(points, dtype=float)
    if p.size == 0:
        raise ValueError("bounding box of an empty point set")
    p = p.reshape(-1, 3)
    return Box3(p.min(axis=0), p.max(axis=0))


@dataclass
class SpherePointSet:
    """Points on the unit sphere together with the parameters that produced them."""

    points: np.ndarray
    subdivision: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)


def make_sphere_cloud(m: int) -> SpherePointSet:
    """Centroids of a uniformly refined double pyramid, projected to the sphere.

    Every face of the octahedron is split into ``m**2`` triangles, so the
    cloud has ``8 * m**2`` points.
    """
    if m < 1:
        raise ValueError("subdivision count must be at least 1")
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    up = i + j <= m - 1
    down = i + j <= m - 2
    iu, ju = i[up], j[up]
    idn, jdn = i[down], j[down]
    # barycentric coordinates (along b-a, along c-a) of the triangle centroids
    s = np.concatenate([(3 * iu + 1) / (3 * m), (3 * idn + 2) / (3 * m)])
    t = np.concatenate([(3 * ju + 1) / (3 * m), (3 * jdn + 2) / (3 * m)])
    chunks = []
    for a, b, c in _OCTAHEDRON_FACES:
        chunks.append(a + s[:, None] * (b - a) + t[:, None] * (c - a))
    pts = np.concatenate(chunks)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return SpherePointSet(pts, subdivision=m)


def random_sphere_cloud(n: int, seed: int = 0) -> SpherePointSet:
    """``n`` independent uniformly distributed points on the unit sphere."""
    if n < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return SpherePointSet(pts, seed=seed)


def write_xyz(path, points) -> None:
    np.savetxt(Path(path), np.asarray(points).reshape(-1, 3), fmt="%.17g")


def read_xyz(path) -> np.ndarray:
    return np.loadtxt(Path(path), ndmin=2).reshape(-1, 3)
