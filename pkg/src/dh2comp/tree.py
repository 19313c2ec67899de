"""Cluster trees, level-wise direction families and directed block trees."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import Box3, bounding_box, diam, dist


@dataclass(eq=False)
class Cluster:
    idx: np.ndarray
    box: Box3
    level: int
    id: int = -1
    children: list["Cluster"] = field(default_factory=list)
    parent: "Cluster | None" = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return len(self.idx)

    def __repr__(self):
        return f"Cluster(id={self.id}, level={self.level}, size={self.size})"


@dataclass
class ClusterTree:
    root: Cluster
    clusters: list[Cluster]
    points: np.ndarray
    leaf_size: int

    @property
    def depth(self) -> int:
        return max(c.level for c in self.clusters)

    @property
    def leaves(self) -> list[Cluster]:
        return [c for c in self.clusters if c.is_leaf]

    @property
    def max_children(self) -> int:
        return max((len(c.children) for c in self.clusters), default=0)

    def level(self, ell: int) -> list[Cluster]:
        return [c for c in self.clusters if c.level == ell]

    def postorder(self):
        return reversed(self.clusters)


def _split(points, idx, box):
    axis = int(np.argmax(box.widths))
    mid = box.center[axis]
    coord = points[idx, axis]
    left = idx[coord <= mid]
    right = idx[coord > mid]
    if len(left) == 0 or len(right) == 0:
        # degenerate geometry: fall back to splitting at the index median
        order = np.argsort(coord, kind="stable")
        half = len(idx) // 2
        left, right = np.sort(idx[order[:half]]), np.sort(idx[order[half:]])
    return left, right


def build_cluster_tree(points, leaf_size: int = 32) -> ClusterTree:
    """Binary geometric bisection: split the longest box axis at its midpoint
    until clusters hold at most ``leaf_size`` indices."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("cannot cluster an empty point set")
    if leaf_size < 1:
        raise ValueError("leaf_size must be at least 1")

    clusters: list[Cluster] = []

    def build(idx, level, parent):
        c = Cluster(idx, bounding_box(pts[idx]), level, parent=parent)
        c.id = len(clusters)
        clusters.append(c)
        if len(idx) > leaf_size:
            for part in _split(pts, idx, c.box):
                c.children.append(build(part, level + 1, c))
        return c

    root = build(np.arange(len(pts)), 0, None)
    return ClusterTree(root, clusters, pts, leaf_size)


# ---------------------------------------------------------------------------
# directions

def cube_directions(u: int) -> np.ndarray:
    """Centers of a ``u x u`` subdivision of each cube face, projected to the
    unit sphere (``6 u**2`` directions). ``u == 0`` gives the single zero
    direction."""
    if u == 0:
        return np.zeros((1, 3))
    g = -1.0 + (2.0 * np.arange(u) + 1.0) / u
    a, b = np.meshgrid(g, g, indexing="ij")
    a, b = a.ravel(), b.ravel()
    one = np.ones_like(a)
    faces = []
    for axis in range(3):
        for sign in (1.0, -1.0):
            f = np.empty((len(a), 3))
            f[:, axis] = sign * one
            others = [ax for ax in range(3) if ax != axis]
            f[:, others[0]] = a
            f[:, others[1]] = b
            faces.append(f)
    d = np.concatenate(faces)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@lru_cache(maxsize=None)
def direction_mesh_width(u: int) -> float:
    """Largest distance between a unit vector and the nearest direction of
    ``cube_directions(u)``.

    Each direction owns the projection of its cube cell; the farthest point
    of a projected cell from its center is one of the projected corners, and
    by symmetry one face suffices.
    """
    if u == 0:
        return 1.0
    g = -1.0 + 2.0 * np.arange(u + 1) / u
    centers = -1.0 + (2.0 * np.arange(u) + 1.0) / u
    width = 0.0
    for i in range(u):
        for j in range(u):
            c = np.array([centers[i], centers[j], 1.0])
            c /= np.linalg.norm(c)
            for a in (g[i], g[i + 1]):
                for b in (g[j], g[j + 1]):
                    p = np.array([a, b, 1.0])
                    p /= np.linalg.norm(p)
                    width = max(width, float(np.linalg.norm(p - c)))
    return width


def subdivision_for_width(target: float, max_u: int = 1 << 12) -> int:
    u = 1
    while direction_mesh_width(u) > target:
        u *= 2
        if u > max_u:
            raise ValueError(f"direction mesh width {target} needs more than {max_u} subdivisions")
    return u


def nearest_direction(z, dirs: np.ndarray) -> int:
    """Index of the direction closest to ``z``; ties go to the lowest index."""
    d = np.linalg.norm(dirs - np.asarray(z)[None, :], axis=1)
    return int(np.argmin(d))


@dataclass
class DirectionFamily:
    """Direction sets shared by all clusters on a level.

    ``subdivisions[l]`` is 0 for the set {0}, otherwise the cube subdivision
    used by :func:`cube_directions`. ``dirchil[l]`` maps direction indices of
    level ``l - 1`` to the nearest direction index on level ``l``.
    """

    kappa: float
    subdivisions: list[int]
    sets: list[np.ndarray]
    dirchil: list[np.ndarray | None]
    level_diam: list[float]

    def directions(self, cluster: Cluster) -> np.ndarray:
        return self.sets[cluster.level]

    def count(self, cluster: Cluster) -> int:
        return len(self.sets[cluster.level])

    def child_direction(self, child: Cluster, c: int) -> int:
        return int(self.dirchil[child.level][c])

    def common(self, t: Cluster, s: Cluster) -> np.ndarray | None:
        """D_t intersected with D_s; the level-wise sets are either identical or disjoint."""
        if self.subdivisions[t.level] == self.subdivisions[s.level]:
            return self.sets[t.level]
        return None


def build_directions(tree: ClusterTree, kappa: float, eta2: float = 1.0) -> DirectionFamily:
    if kappa < 0:
        raise ValueError("wave number must be non-negative")
    depth = tree.depth
    level_diam = [0.0] * (depth + 1)
    for c in tree.clusters:
        level_diam[c.level] = max(level_diam[c.level], diam(c.box))
    subdivisions = []
    for d in level_diam:
        if kappa * d <= eta2:
            subdivisions.append(0)
        else:
            subdivisions.append(subdivision_for_width(eta2 / (kappa * d)))
    sets = [cube_directions(u) for u in subdivisions]
    dirchil: list[np.ndarray | None] = [None]
    for ell in range(1, depth + 1):
        parent, child = sets[ell - 1], sets[ell]
        cmap = np.empty(len(parent), dtype=np.intp)
        csq = np.sum(child**2, axis=1)
        for i in range(0, len(parent), 512):  # bounded memory for large sets
            p = parent[i:i + 512]
            d2 = np.sum(p**2, axis=1)[:, None] + csq[None, :] - 2.0 * p @ child.T
            cmap[i:i + 512] = np.argmin(d2, axis=1)
        dirchil.append(cmap)
    return DirectionFamily(kappa, subdivisions, sets, dirchil, level_diam)


# ---------------------------------------------------------------------------
# admissibility and block trees

def is_admissible(tau: Box3, sigma: Box3, kappa: float, eta1: float, eta2: float,
                  eta3: float, dirs: np.ndarray | None):
    """Check the three directional admissibility conditions.

    Returns ``(admissible, c)`` with ``c`` the index of the direction in
    ``dirs`` closest to the normalized difference of the box centers
    (``None`` when no direction can be assigned).
    """
    if dirs is None:
        return False, None
    d = dist(tau, sigma)
    dmax = max(diam(tau), diam(sigma))
    if d <= 0.0:
        return False, None
    z0 = tau.center - sigma.center
    nz = np.linalg.norm(z0)
    zero_only = len(dirs) == 1 and not np.any(dirs[0])
    if nz == 0.0:
        return False, None
    c = 0 if zero_only else nearest_direction(z0 / nz, dirs)
    ok = (kappa * dmax**2 <= eta3 * d
          and kappa * np.linalg.norm(z0 / nz - dirs[c]) * dmax <= eta2
          and dmax <= eta1 * d)
    return bool(ok), c


@dataclass
class Block:
    t: Cluster
    s: Cluster
    admissible: bool
    c: int | None = None


@dataclass
class DirectedBlockTree:
    tree: ClusterTree
    directions: DirectionFamily
    leaves: list[Block]
    kappa: float
    eta: tuple[float, float, float]
    # (t.id, c) -> admissible blocks with t as row cluster, and the converse
    row_blocks: dict = field(default_factory=dict)
    col_blocks: dict = field(default_factory=dict)

    @property
    def admissible(self) -> list[Block]:
        return [b for b in self.leaves if b.admissible]

    @property
    def inadmissible(self) -> list[Block]:
        return [b for b in self.leaves if not b.admissible]

    def row_set(self, t: Cluster, c: int) -> list[Cluster]:
        """R_tc: column clusters of admissible blocks (t, s) with direction c."""
        return [b.s for b in self.row_blocks.get((t.id, c), [])]

    def col_set(self, s: Cluster, c: int) -> list[Cluster]:
        """C_sc: row clusters of admissible blocks (t, s) with direction c."""
        return [b.t for b in self.col_blocks.get((s.id, c), [])]


def _children_or_self(c: Cluster):
    return c.children if c.children else [c]


def build_block_tree(tree: ClusterTree, directions: DirectionFamily, kappa: float,
                     eta1: float = 1.0, eta2: float = 1.0, eta3: float = 1.0) -> DirectedBlockTree:
    """Recursive subdivision of ``(root, root)``.

    A leaf cluster paired with a non-leaf cluster stays fixed while the other
    side is refined.
    """
    leaves: list[Block] = []
    stack = [(tree.root, tree.root)]
    while stack:
        t, s = stack.pop()
        ok, c = is_admissible(t.box, s.box, kappa, eta1, eta2, eta3, directions.common(t, s))
        if ok:
            leaves.append(Block(t, s, True, c))
        elif t.is_leaf and s.is_leaf:
            leaves.append(Block(t, s, False))
        else:
            for t1 in reversed(_children_or_self(t)):
                for s1 in reversed(_children_or_self(s)):
                    stack.append((t1, s1))
    bt = DirectedBlockTree(tree, directions, leaves, kappa, (eta1, eta2, eta3))
    for b in leaves:
        if b.admissible:
            bt.row_blocks.setdefault((b.t.id, b.c), []).append(b)
            bt.col_blocks.setdefault((b.s.id, b.c), []).append(b)
    return bt


def _extend(tree: ClusterTree, directions: DirectionFamily, direct: dict) -> dict:
    ext: dict = {}
    for t in tree.clusters:  # preorder: parents first
        for c in range(directions.count(t)):
            items = list(direct.get((t.id, c), []))
            ext[(t.id, c)] = items
        if t.parent is not None:
            dch = directions.dirchil[t.level]
            for cp in range(directions.count(t.parent)):
                ext[(t.id, int(dch[cp]))].extend(ext[(t.parent.id, cp)])
    return {key: val for key, val in ext.items() if val}


def extended_row_sets(blocks: DirectedBlockTree) -> dict:
    """R*_tc as lists of admissible blocks ``(a, s)`` with ``a`` an ancestor of
    (or equal to) ``t``, keyed by ``(t.id, c)``; empty entries are omitted."""
    return _extend(blocks.tree, blocks.directions, blocks.row_blocks)


def extended_col_sets(blocks: DirectedBlockTree) -> dict:
    """Column analogue of :func:`extended_row_sets`."""
    return _extend(blocks.tree, blocks.directions, blocks.col_blocks)


def block_statistics(blocks: DirectedBlockTree) -> list[dict]:
    tree, dirs = blocks.tree, blocks.directions
    rows = []
    for ell in range(tree.depth + 1):
        adm = sum(1 for b in blocks.leaves if b.admissible and b.t.level == ell)
        inadm = sum(1 for b in blocks.leaves if not b.admissible and b.t.level == ell)
        rows.append({
            "level": ell,
            "clusters": len(tree.level(ell)),
            "directions": len(dirs.sets[ell]) if dirs.subdivisions[ell] else 1,
            "admissible": adm,
            "inadmissible": inadm,
        })
    return rows


def block_statistics_csv(blocks: DirectedBlockTree) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["level", "clusters", "directions", "admissible", "inadmissible"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(block_statistics(blocks))
    return buf.getvalue()
