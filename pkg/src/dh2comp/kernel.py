"""Helmholtz kernel, its directional modification and tensor Chebyshev interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box3


@dataclass(frozen=True)
class HelmholtzKernel:
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("wave number must be non-negative")

    def __call__(self, x, y):
        return eval_kernel(self.kappa, x, y)

    def directional(self, x, y, c):
        return eval_directional(self.kappa, x, y, c)

    def matrix(self, X, Y, c=None, diagonal_zero=False):
        """Kernel (or modified kernel for direction ``c``) on all pairs of rows
        of ``X`` and ``Y``."""
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        z = X[:, None, :] - Y[None, :, :]
        r = np.sqrt(np.sum(z * z, axis=-1))
        phase = r if c is None else r - z @ np.asarray(c, float)
        if diagonal_zero:
            zero = r == 0.0
            r = np.where(zero, 1.0, r)
            out = np.exp(1j * self.kappa * phase) / (4.0 * np.pi * r)
            out[zero] = 0.0
            return out
        if np.any(r == 0.0):
            raise ValueError("kernel is singular for coincident points")
        return np.exp(1j * self.kappa * phase) / (4.0 * np.pi * r)


def _pair(x, y):
    z = np.asarray(x, float) - np.asarray(y, float)
    r = np.linalg.norm(z, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("kernel is singular for coincident points")
    return z, r


def eval_kernel(kappa: float, x, y):
    _, r = _pair(x, y)
    return np.exp(1j * kappa * r) / (4.0 * np.pi * r)


def eval_directional(kappa: float, x, y, c):
    """exp(i kappa (|x-y| - <c, x-y>)) / (4 pi |x-y|)."""
    z, r = _pair(x, y)
    return np.exp(1j * kappa * (r - z @ np.asarray(c, float))) / (4.0 * np.pi * r)


# ---------------------------------------------------------------------------
# Chebyshev interpolation

def chebyshev_nodes(m: int) -> np.ndarray:
    """First-kind Chebyshev points cos((2j+1) pi / (2m)) on [-1, 1]."""
    j = np.arange(m)
    return np.cos((2 * j + 1) * np.pi / (2 * m))


def _bary_weights(m: int) -> np.ndarray:
    j = np.arange(m)
    return (-1.0) ** j * np.sin((2 * j + 1) * np.pi / (2 * m))


def lagrange_1d(nodes: np.ndarray, weights: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Barycentric evaluation of all Lagrange polynomials for ``nodes`` at
    reference coordinates ``t``; returns a ``len(t) x len(nodes)`` table."""
    t = np.asarray(t, float).reshape(-1)
    diff = t[:, None] - nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q = weights[None, :] / diff
        L = q / q.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    if np.any(hit):
        L[hit] = exact[hit].astype(float)
    return L


@dataclass(frozen=True)
class InterpRule:
    """Tensor Chebyshev rule of order ``m`` per axis on a box.

    Points are ordered with the x index slowest: nu = (i * m + j) * m + l.
    A degenerate box axis collapses its points onto the single coordinate and
    maps every evaluation point to the reference center.
    """

    box: Box3
    m: int

    @property
    def k(self) -> int:
        return self.m**3

    @property
    def _mid(self):
        return self.box.center

    @property
    def _half(self):
        return 0.5 * self.box.widths

    def axis_points(self) -> list[np.ndarray]:
        ref = chebyshev_nodes(self.m)
        return [self._mid[a] + self._half[a] * ref for a in range(3)]

    @property
    def points(self) -> np.ndarray:
        px, py, pz = self.axis_points()
        g = np.meshgrid(px, py, pz, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def to_reference(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        half = self._half
        safe = np.where(half > 0, half, 1.0)
        return np.where(half > 0, (x - self._mid) / safe, 0.0)

    def lagrange(self, x) -> np.ndarray:
        """``len(x) x k`` matrix of Lagrange polynomials evaluated at ``x``."""
        ref = self.to_reference(x)
        nodes, w = chebyshev_nodes(self.m), _bary_weights(self.m)
        Lx, Ly, Lz = (lagrange_1d(nodes, w, ref[:, a]) for a in range(3))
        n = len(ref)
        return np.einsum("ni,nj,nl->nijl", Lx, Ly, Lz).reshape(n, self.k)


def chebyshev_rule(box: Box3, m: int) -> InterpRule:
    if m < 1:
        raise ValueError("interpolation order must be at least 1")
    return InterpRule(box, m)


def _phase(kappa, c, x):
    return np.exp(1j * kappa * (np.atleast_2d(x) @ np.asarray(c, float)))


def leaf_matrix(points, rule: InterpRule, kappa: float, c) -> np.ndarray:
    """Modified Lagrange functions exp(i kappa <c, x>) l_nu(x) at the given points."""
    x = np.atleast_2d(points)
    return _phase(kappa, c, x)[:, None] * rule.lagrange(x)


def transfer_matrix(child: InterpRule, c_child, parent: InterpRule, c_parent, kappa: float) -> np.ndarray:
    """Re-interpolation of the parent's modified Lagrange basis in the child's:
    entry (nu', nu) is exp(i kappa <c - c', xi'_nu'>) l_nu(xi'_nu')."""
    xi = child.points
    dc = np.asarray(c_parent, float) - np.asarray(c_child, float)
    return _phase(kappa, dc, xi)[:, None] * parent.lagrange(xi)


def coupling_matrix(row: InterpRule, col: InterpRule, kappa: float, c) -> np.ndarray:
    """Modified kernel on all pairs of interpolation points."""
    return HelmholtzKernel(kappa).matrix(row.points, col.points, c=c)
