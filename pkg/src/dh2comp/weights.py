"""Basis weights, total weights, block-relative scaling, norm estimates and
compressed basis weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dh2 import ClusterBasis, DH2Matrix

TINY = np.finfo(float).tiny


def thin_r(M: np.ndarray) -> np.ndarray:
    """R factor of a thin Householder QR (``min(rows, cols) x cols``)."""
    if M.shape[0] == 0:
        return np.zeros((0, M.shape[1]), dtype=complex)
    return np.linalg.qr(M, mode="r")


def truncation_rank(sigma: np.ndarray, eps: float, max_rank: int | None = None) -> int:
    """Smallest k with sigma[k] <= eps (sigma sorted decreasingly, sigma[len] = 0)."""
    k = int(np.count_nonzero(sigma > eps))
    if max_rank is not None:
        k = min(k, max_rank)
    return k


def spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _bottom_up(basis: ClusterBasis, visit):
    """Run ``visit(t, c, R)`` for every pair after computing its basis weight,
    children first; children's weights are dropped once the parent is done."""
    full: dict = {}
    dirs = basis.directions
    for t in basis.tree.postorder():
        for c in range(dirs.count(t)):
            key = (t.id, c)
            if key not in basis.ranks:
                continue
            if t.is_leaf:
                R = thin_r(basis.leaf[key])
            else:
                R = thin_r(np.vstack([full[(ch.id, cc)] @ E for ch, cc, E in basis.children(t, c)]))
            full[key] = R
            visit(t, c, R)
        for ch in t.children:
            for cc in range(dirs.count(ch)):
                full.pop((ch.id, cc), None)


def basis_weights(basis: ClusterBasis) -> dict:
    """R_sc for every pair: a triangular factor with V_sc = Q_sc R_sc."""
    out: dict = {}

    def visit(t, c, R):
        out[(t.id, c)] = R

    _bottom_up(basis, visit)
    return out


def total_weight(k: int, own, inherited=(), inherit_scale: float = 1.0) -> np.ndarray:
    """Z_tc from the stacked products.

    ``own`` yields ``(W_s, S_ts, omega_ts)`` and contributes
    ``W_s S_ts^* / omega_ts``; ``inherited`` yields ``(Z_parent, E_tc+)`` and
    contributes ``inherit_scale * Z_parent E_tc+^*``.
    """
    rows = [W @ S.conj().T / om for W, S, om in own]
    rows += [inherit_scale * (Z @ E.conj().T) for Z, E in inherited]
    rows = [r for r in rows if r.shape[0]]
    if not rows:
        return np.zeros((0, k), dtype=complex)
    return thin_r(np.vstack(rows))


def block_norms_exact(A: DH2Matrix, R: dict) -> dict:
    """||G|_{t x s}||_2 = ||R_tc S_ts R_sc^*||_2 for every admissible block."""
    return {(b.t.id, b.s.id): spectral_norm(R[(b.t.id, b.c)] @ b.S @ R[(b.s.id, b.c)].conj().T)
            for b in A.far}


def block_norms_estimated(A: DH2Matrix, N: dict, W: dict) -> dict:
    """Lower bounds ||N_tc S_ts W_sc^*||_2 of the block norms."""
    return {(b.t.id, b.s.id): spectral_norm(N[(b.t.id, b.c)] @ b.S @ W[(b.s.id, b.c)].conj().T)
            for b in A.far}


def omega_floor(x: float) -> float:
    return x if x > 0.0 else TINY


def block_relative_omegas(A: DH2Matrix, norms: dict, max_children: int | None = None) -> dict:
    """Scaling factors for block-relative truncation, keyed ``(t'.id, s.id)``.

    The owning block gets ||G|| / sqrt(m+1); every descendant row cluster
    t' of t gets its parent's factor divided by sqrt(m+1) once more.
    """
    m = A.tree.max_children if max_children is None else max_children
    q = 1.0 / math.sqrt(m + 1)
    out: dict = {}
    for b in A.far:
        stack = [(b.t, omega_floor(q * norms[(b.t.id, b.s.id)]))]
        while stack:
            t, om = stack.pop()
            out[(t.id, b.s.id)] = om
            stack.extend((ch, q * om) for ch in t.children)
    return out


@dataclass
class NormEstimates:
    N: dict
    k_norm: int

    def nbytes(self) -> int:
        return int(sum(a.nbytes for a in self.N.values()))


def norm_estimates(basis: ClusterBasis, k_norm: int = 1) -> NormEstimates:
    """N_tc = U^* R_tc with U the leading ``k_norm`` left singular vectors of R_tc."""
    if k_norm < 1:
        raise ValueError("k_norm must be at least 1")
    N: dict = {}

    def visit(t, c, R):
        U, _, _ = np.linalg.svd(R, full_matrices=False)
        N[(t.id, c)] = U[:, :k_norm].conj().T @ R

    _bottom_up(basis, visit)
    return NormEstimates(N, k_norm)


@dataclass
class CompressedWeights:
    """R-hat_sc = Q~_sc^* R_sc for every pair, with diagnostic data."""

    Rhat: dict
    ranks: dict
    spectra: dict
    omegas: dict = field(default_factory=dict)
    eps: float = 0.0
    weighted: bool = False
    # only populated with keep_full=True
    full: dict = field(default_factory=dict)
    Qt: dict = field(default_factory=dict)

    def nbytes(self) -> int:
        return int(sum(a.nbytes for a in self.Rhat.values()))


def _connections(A: DH2Matrix):
    """Per pair (x, c): blocks with x as column cluster and blocks with x as row cluster."""
    as_col: dict = {}
    as_row: dict = {}
    for b in A.far:
        as_col.setdefault((b.s.id, b.c), []).append(b)
        as_row.setdefault((b.t.id, b.c), []).append(b)
    return as_col, as_row


def approx_weights(A: DH2Matrix, eps_w: float, norms: NormEstimates | None = None,
                   weighted: bool = False, sides: str = "both",
                   keep_full: bool = False) -> CompressedWeights:
    """Compressed basis weights.

    For every pair (s, c) the products that the adaptive basis construction
    needs are gathered in W_sc: ``R_sc S_ts^*`` for t in C_sc (consumed by the
    row basis) and, with ``sides="both"``, ``R_sc S_st`` for t in R_sc
    (consumed by the column basis). Singular vectors of W_sc above ``eps_w``
    are kept and R-hat_sc = U^* R_sc is stored. In weighted mode each product
    is divided by omega = ||N_t S R_sc^*|| / ||N_t|| first.
    """
    if sides not in ("col", "both"):
        raise ValueError(f"unknown sides {sides!r}")
    if weighted and norms is None:
        raise ValueError("weighted compression needs norm estimates")
    if A.row_basis is not A.col_basis:
        raise ValueError("weight compression expects a shared row/column basis")
    basis = A.row_basis
    as_col, as_row = _connections(A)
    out = CompressedWeights({}, {}, {}, eps=eps_w, weighted=weighted)

    def omega(Nt, P, R):
        num = spectral_norm(Nt @ P @ R.conj().T)
        den = spectral_norm(Nt)
        return omega_floor(num / den if den > 0 else 0.0)

    def visit(t, c, R):
        key = (t.id, c)
        parts = []
        for b in as_col.get(key, []):
            om = omega(norms.N[(b.t.id, c)], b.S, R) if weighted else 1.0
            out.omegas[("row", b.t.id, b.s.id)] = om
            parts.append(R @ b.S.conj().T / om)
        if sides == "both":
            for b in as_row.get(key, []):
                Sh = b.S.conj().T
                om = omega(norms.N[(b.s.id, c)], Sh, R) if weighted else 1.0
                out.omegas[("col", b.t.id, b.s.id)] = om
                parts.append(R @ b.S / om)
        if keep_full:
            out.full[key] = R
        if not parts:
            out.Rhat[key] = np.zeros((0, R.shape[1]), dtype=complex)
            out.ranks[key] = 0
            out.spectra[key] = np.zeros(0)
            if keep_full:
                out.Qt[key] = np.zeros((R.shape[0], 0), dtype=complex)
            return
        W = np.hstack(parts)
        U, sig, _ = np.linalg.svd(W, full_matrices=False)
        k = truncation_rank(sig, eps_w)
        Uk = U[:, :k]
        out.Rhat[key] = Uk.conj().T @ R
        out.ranks[key] = k
        out.spectra[key] = sig
        if keep_full:
            out.Qt[key] = Uk

    _bottom_up(basis, visit)
    return out


def weight_storage_rows(basis: ClusterBasis, R: dict, comp: CompressedWeights | None,
                        norms: NormEstimates | None) -> list[dict]:
    """Per level: direction count and bytes of full, compressed and norm-estimate weights."""
    tree, dirs = basis.tree, basis.directions
    rows = []
    for ell in range(tree.depth + 1):
        ids = {t.id for t in tree.level(ell)}

        def nb(d):
            return int(sum(a.nbytes for (tid, _), a in d.items() if tid in ids)) if d else 0

        rows.append({
            "level": ell,
            "direction_count": len(dirs.sets[ell]) if dirs.subdivisions[ell] else 1,
            "full_weight_bytes": nb(R),
            "compressed_weight_bytes": nb(comp.Rhat) if comp else 0,
            "norm_estimate_bytes": nb(norms.N) if norms else 0,
        })
    return rows
