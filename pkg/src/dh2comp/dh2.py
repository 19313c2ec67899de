"""Directional H2-matrices: nested cluster bases, couplings, nearfield, matvec."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .kernel import HelmholtzKernel, chebyshev_rule, coupling_matrix, leaf_matrix, transfer_matrix
from .tree import Cluster, ClusterTree, DirectedBlockTree, DirectionFamily, extended_col_sets, extended_row_sets

DENSE_LIMIT = 16384


@dataclass
class ClusterBasis:
    """Directional cluster basis with variable ranks.

    ``leaf[(t, c)]`` holds V_tc for leaf clusters; ``transfer[(t', c)]`` holds
    E_t'c, mapping coefficients of the parent pair (parent(t'), c) to the
    child pair (t', dirchil(t', c)). Only the pairs in ``ranks`` exist.
    """

    tree: ClusterTree
    directions: DirectionFamily
    ranks: dict = field(default_factory=dict)
    leaf: dict = field(default_factory=dict)
    transfer: dict = field(default_factory=dict)

    def __contains__(self, key):
        return key in self.ranks

    def rank(self, t: Cluster, c: int) -> int:
        return self.ranks[(t.id, c)]

    def children(self, t: Cluster, c: int):
        """``(child, child direction, E)`` for every child of ``t``."""
        dirs = self.directions
        return [(ch, dirs.child_direction(ch, c), self.transfer[(ch.id, c)]) for ch in t.children]

    def expand(self, t: Cluster, c: int, cache: dict | None = None) -> np.ndarray:
        """Explicit V_tc with rows ordered like ``t.idx``."""
        key = (t.id, c)
        if cache is not None and key in cache:
            return cache[key]
        if t.is_leaf:
            V = self.leaf[key]
        else:
            V = np.zeros((t.size, self.ranks[key]), dtype=complex)
            for ch, cc, E in self.children(t, c):
                rows = np.searchsorted(t.idx, ch.idx)
                V[rows] = self.expand(ch, cc, cache) @ E
        if cache is not None:
            cache[key] = V
        return V

    def forward(self, x: np.ndarray) -> dict:
        """Coefficients V_tc^* x|_t for every pair, computed bottom-up."""
        xhat: dict = {}
        dirs = self.directions
        for t in self.tree.postorder():
            for c in range(dirs.count(t)):
                key = (t.id, c)
                if key not in self.ranks:
                    continue
                if t.is_leaf:
                    xhat[key] = self.leaf[key].conj().T @ x[t.idx]
                else:
                    acc = np.zeros(self.ranks[key], dtype=complex)
                    for ch, cc, E in self.children(t, c):
                        acc += E.conj().T @ xhat[(ch.id, cc)]
                    xhat[key] = acc
        return xhat

    def backward(self, yhat: dict, y: np.ndarray) -> None:
        """Add sum over pairs of V_tc yhat_tc into ``y``, pushing coefficients top-down."""
        yhat = dict(yhat)
        dirs = self.directions
        for t in self.tree.clusters:
            for c in range(dirs.count(t)):
                key = (t.id, c)
                if key not in yhat:
                    continue
                v = yhat.pop(key)
                if t.is_leaf:
                    y[t.idx] += self.leaf[key] @ v
                else:
                    for ch, cc, E in self.children(t, c):
                        ck = (ch.id, cc)
                        yhat[ck] = yhat[ck] + E @ v if ck in yhat else E @ v

    def nbytes(self) -> dict:
        return {
            "leaf": int(sum(a.nbytes for a in self.leaf.values())),
            "transfer": int(sum(a.nbytes for a in self.transfer.values())),
        }


@dataclass
class FarBlock:
    t: Cluster
    s: Cluster
    c: int
    S: np.ndarray


@dataclass
class NearBlock:
    t: Cluster
    s: Cluster
    N: np.ndarray


@dataclass
class DH2Matrix:
    tree: ClusterTree
    directions: DirectionFamily
    row_basis: ClusterBasis
    col_basis: ClusterBasis
    far: list[FarBlock]
    near: list[NearBlock]
    kappa: float = 0.0

    @property
    def n(self) -> int:
        return len(self.tree.points)

    @property
    def shape(self):
        return (self.n, self.n)

    def matvec(self, x) -> np.ndarray:
        return matvec(self, x)

    def __matmul__(self, x):
        return matvec(self, x)

    def adjoint(self) -> "DH2Matrix":
        far = [FarBlock(b.s, b.t, b.c, b.S.conj().T) for b in self.far]
        near = [NearBlock(b.s, b.t, b.N.conj().T) for b in self.near]
        return DH2Matrix(self.tree, self.directions, self.col_basis, self.row_basis, far, near, self.kappa)

    def coupling(self, t: Cluster, s: Cluster) -> FarBlock:
        if not hasattr(self, "_far_index"):
            self._far_index = {(b.t.id, b.s.id): b for b in self.far}
        return self._far_index[(t.id, s.id)]


def active_pairs(blocks: DirectedBlockTree) -> tuple[dict, dict]:
    """Extended row and column sets; their keys are the (cluster, direction)
    pairs that need a basis."""
    return extended_row_sets(blocks), extended_col_sets(blocks)


def interpolation_basis(blocks: DirectedBlockTree, order: int, kappa: float, pairs) -> ClusterBasis:
    tree, dirs = blocks.tree, blocks.directions
    rules = {t.id: chebyshev_rule(t.box, order) for t in tree.clusters}
    basis = ClusterBasis(tree, dirs)
    k = order**3
    for key in sorted(pairs):
        basis.ranks[key] = k
    for t in tree.clusters:
        D = dirs.sets[t.level]
        for c in range(len(D)):
            if (t.id, c) not in basis.ranks:
                continue
            if t.is_leaf:
                basis.leaf[(t.id, c)] = leaf_matrix(tree.points[t.idx], rules[t.id], kappa, D[c])
            for ch in t.children:
                cc = dirs.child_direction(ch, c)
                basis.transfer[(ch.id, c)] = transfer_matrix(
                    rules[ch.id], dirs.sets[ch.level][cc], rules[t.id], D[c], kappa)
    return basis


def assemble_dh2(blocks: DirectedBlockTree, order: int, kappa: float | None = None) -> DH2Matrix:
    """Directional interpolation of the Helmholtz kernel on the block tree.

    Rows and columns share one interpolation basis. Nearfield blocks hold
    exact kernel values with self-interactions set to zero.
    """
    kappa = blocks.kappa if kappa is None else kappa
    tree, dirs = blocks.tree, blocks.directions
    rows, cols = active_pairs(blocks)
    basis = interpolation_basis(blocks, order, kappa, set(rows) | set(cols))
    kern = HelmholtzKernel(kappa)
    rules = {}

    def rule(t):
        if t.id not in rules:
            rules[t.id] = chebyshev_rule(t.box, order)
        return rules[t.id]

    far, near = [], []
    for b in blocks.leaves:
        if b.admissible:
            c = dirs.sets[b.t.level][b.c]
            far.append(FarBlock(b.t, b.s, b.c, coupling_matrix(rule(b.t), rule(b.s), kappa, c)))
        else:
            P = tree.points
            near.append(NearBlock(b.t, b.s, kern.matrix(P[b.t.idx], P[b.s.idx], diagonal_zero=True)))
    return DH2Matrix(tree, dirs, basis, basis, far, near, kappa)


def matvec(A: DH2Matrix, x) -> np.ndarray:
    """Three-phase product: forward transform, couplings, backward transform,
    plus the nearfield."""
    x = np.asarray(x)
    if x.shape != (A.n,):
        raise ValueError(f"expected a vector of length {A.n}, got shape {x.shape}")
    x = x.astype(complex, copy=False)
    y = np.zeros(A.n, dtype=complex)
    xhat = A.col_basis.forward(x)
    yhat: dict = {}
    for b in A.far:
        key = (b.t.id, b.c)
        v = b.S @ xhat[(b.s.id, b.c)]
        yhat[key] = yhat[key] + v if key in yhat else v
    A.row_basis.backward(yhat, y)
    for b in A.near:
        y[b.t.idx] += b.N @ x[b.s.idx]
    return y


def to_dense(A: DH2Matrix) -> np.ndarray:
    if A.n > DENSE_LIMIT:
        raise ValueError(f"dense expansion limited to n <= {DENSE_LIMIT}, got {A.n}")
    G = np.zeros((A.n, A.n), dtype=complex)
    rc, cc = {}, {}
    for b in A.far:
        Vt = A.row_basis.expand(b.t, b.c, rc)
        Vs = A.col_basis.expand(b.s, b.c, cc)
        G[np.ix_(b.t.idx, b.s.idx)] = Vt @ b.S @ Vs.conj().T
    for b in A.near:
        G[np.ix_(b.t.idx, b.s.idx)] = b.N
    return G


def storage_report(A: DH2Matrix | None, weights: dict | None = None) -> dict:
    """Bytes per category; weights are an optional ``{category: {key: array}}``."""
    rep = {"leaf": 0, "transfer": 0, "coupling": 0, "nearfield": 0, "weights": 0}
    if A is not None:
        bases = [A.row_basis] if A.row_basis is A.col_basis else [A.row_basis, A.col_basis]
        for basis in bases:
            nb = basis.nbytes()
            rep["leaf"] += nb["leaf"]
            rep["transfer"] += nb["transfer"]
        rep["coupling"] = int(sum(b.S.nbytes for b in A.far))
        rep["nearfield"] = int(sum(b.N.nbytes for b in A.near))
    if weights:
        rep["weights"] = int(sum(a.nbytes for w in weights.values() for a in w.values()))
    return rep


def storage_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["category", "bytes"])
    for k, v in report.items():
        w.writerow([k, v])
    return buf.getvalue()


def exact_kernel_matrix(points, kappa: float) -> np.ndarray:
    """Dense kernel matrix with zero diagonal (the reference the DH2 matrix approximates)."""
    if len(points) > DENSE_LIMIT:
        raise ValueError(f"dense matrix limited to n <= {DENSE_LIMIT}")
    return HelmholtzKernel(kappa).matrix(points, points, diagonal_zero=True)
