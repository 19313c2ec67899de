"""Adaptive isometric cluster bases from weighted SVDs, coupling projection,
and dense verification of the error representation and stability bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dh2 import ClusterBasis, DH2Matrix, FarBlock, to_dense
from .tree import Cluster
from .weights import omega_floor, spectral_norm, total_weight, truncation_rank

VERIFY_LIMIT = 2048


@dataclass
class TruncationControl:
    eps: float
    mode: str = "abs"  # "abs" or "blockrel"
    max_rank: int | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("truncation tolerance must be positive")
        if self.mode not in ("abs", "blockrel"):
            raise ValueError(f"unknown error mode {self.mode!r}")


@dataclass
class AdaptiveBasis:
    """Isometric basis Q together with the basis change T_tc = Q_tc^* V_tc.

    ``qhat[(t, c)]`` is Q_tc for leaves and the stacked transfer matrix
    Q-hat_tc otherwise; ``spectra`` keeps every singular value the rank
    decision was based on.
    """

    basis: ClusterBasis
    T: dict
    qhat: dict
    spectra: dict
    side: str
    ctrl: TruncationControl
    levels: dict = field(default_factory=dict)

    def rank(self, t: Cluster, c: int) -> int:
        return self.basis.ranks[(t.id, c)]

    def report_rows(self, k: int) -> list[dict]:
        rows = []
        for t in self.basis.tree.clusters:
            for c in range(self.basis.directions.count(t)):
                key = (t.id, c)
                if key not in self.spectra:
                    continue
                sig = self.spectra[key]
                kt = self.basis.ranks[key]
                rows.append({
                    "cluster": t.id, "direction": c, "level": t.level, "size": t.size, "k": k,
                    "k_tc": kt,
                    "sigma_k": float(sig[kt - 1]) if kt > 0 else float("nan"),
                    "sigma_k1": float(sig[kt]) if kt < len(sig) else 0.0,
                })
        return rows


def _connections(A: DH2Matrix, side: str) -> dict:
    """Blocks (other cluster, oriented coupling) per pair for one side.

    For the row side an entry (s, S) means G|_{t x s} = V_tc S V_sc^*; for the
    column side the roles are swapped on the adjoint, so S_ts^* is recorded.
    """
    conn: dict = {}
    for b in A.far:
        if side in ("row", "sym"):
            conn.setdefault((b.t.id, b.c), []).append((b.s, b.S, (b.t.id, b.s.id)))
        if side in ("col", "sym"):
            conn.setdefault((b.s.id, b.c), []).append((b.t, b.S.conj().T, (b.t.id, b.s.id)))
    return conn


def _closure(A: DH2Matrix, conn: dict) -> set:
    """Pairs whose extended connection set is non-empty."""
    pairs = set()
    dirs = A.directions
    for t in A.tree.clusters:
        for c in range(dirs.count(t)):
            if (t.id, c) in conn:
                pairs.add((t.id, c))
        if t.parent is not None:
            for cp in range(dirs.count(t.parent)):
                if (t.parent.id, cp) in pairs:
                    pairs.add((t.id, dirs.child_direction(t, cp)))
    return pairs


def build_adaptive_basis(A: DH2Matrix, weights: dict, ctrl: TruncationControl,
                         side: str = "row", block_norms: dict | None = None,
                         record_total: dict | None = None) -> AdaptiveBasis:
    """Construct Q top-down from total weights, bottom-up from basis changes.

    ``weights`` maps every pair to R_sc or a compressed R-hat_sc. For
    ``ctrl.mode == "blockrel"`` the norms ||G|_{t x s}|| (exact or a lower
    bound) are required; the owning row cluster of each block is scaled by
    sqrt(m+1) / norm and every generation below it by another sqrt(m+1).
    Passing a dict as ``record_total`` keeps a copy of every Z_tc for auditing.
    """
    if side not in ("row", "col", "sym"):
        raise ValueError(f"unknown side {side!r}")
    if side == "sym" and A.row_basis is not A.col_basis:
        raise ValueError("a shared basis needs a shared original basis")
    V = A.row_basis if side in ("row", "sym") else A.col_basis
    tree, dirs = A.tree, A.directions
    conn = _connections(A, side)
    pairs = _closure(A, conn)
    blockrel = ctrl.mode == "blockrel"
    if blockrel and block_norms is None:
        raise ValueError("block-relative truncation needs block norms")
    growth = math.sqrt(tree.max_children + 1) if blockrel else 1.0

    def omega(bkey):
        return omega_floor(block_norms[bkey] / growth) if blockrel else 1.0

    out = ClusterBasis(tree, dirs)
    T: dict = {}
    qhat: dict = {}
    spectra: dict = {}
    Z: dict = {}

    def process(t: Cluster):
        mine = [c for c in range(dirs.count(t)) if (t.id, c) in pairs]
        for c in mine:
            own = [(weights[(o.id, c)], S, omega(bkey)) for o, S, bkey in conn.get((t.id, c), [])]
            inherited = []
            if t.parent is not None:
                for cp in range(dirs.count(t.parent)):
                    pk = (t.parent.id, cp)
                    if pk in Z and dirs.child_direction(t, cp) == c:
                        inherited.append((Z[pk], V.transfer[(t.id, cp)]))
            Z[(t.id, c)] = total_weight(V.ranks[(t.id, c)], own, inherited, growth)
            if record_total is not None:
                record_total[(t.id, c)] = Z[(t.id, c)]
        for ch in t.children:
            process(ch)
        for c in mine:
            key = (t.id, c)
            if t.is_leaf:
                Vhat = V.leaf[key]
            else:
                Vhat = np.vstack([T[(ch.id, cc)] @ E for ch, cc, E in V.children(t, c)])
            M = Vhat @ Z.pop(key).conj().T
            U, sig, _ = np.linalg.svd(M, full_matrices=False)
            k = truncation_rank(sig, ctrl.eps, ctrl.max_rank)
            Q = U[:, :k]
            spectra[key] = sig
            qhat[key] = Q
            T[key] = Q.conj().T @ Vhat
            out.ranks[key] = k
            if t.is_leaf:
                out.leaf[key] = Q
            else:
                start = 0
                for ch in t.children:
                    kc = out.ranks[(ch.id, dirs.child_direction(ch, c))]
                    out.transfer[(ch.id, c)] = Q[start:start + kc]
                    start += kc

    process(tree.root)
    return AdaptiveBasis(out, T, qhat, spectra, side, ctrl)


def project_couplings(A: DH2Matrix, rows: AdaptiveBasis, cols: AdaptiveBasis) -> DH2Matrix:
    """Recompressed matrix with couplings T_tc S_ts T_sc^*."""
    far = []
    for b in A.far:
        kt, ks = (b.t.id, b.c), (b.s.id, b.c)
        if kt not in rows.T or ks not in cols.T:
            raise KeyError(f"no adaptive basis for block ({b.t.id}, {b.s.id}) direction {b.c}")
        far.append(FarBlock(b.t, b.s, b.c, rows.T[kt] @ b.S @ cols.T[ks].conj().T))
    return DH2Matrix(A.tree, A.directions, rows.basis, cols.basis, far, list(A.near), A.kappa)


def recompress(A: DH2Matrix, weights: dict, ctrl: TruncationControl, block_norms: dict | None = None,
               symmetric: bool = False):
    """Row and column bases (or one shared basis) and the projected matrix."""
    if symmetric:
        q = build_adaptive_basis(A, weights, ctrl, "sym", block_norms)
        return project_couplings(A, q, q), q, q
    rows = build_adaptive_basis(A, weights, ctrl, "row", block_norms)
    cols = build_adaptive_basis(A, weights, ctrl, "col", block_norms)
    return project_couplings(A, rows, cols), rows, cols


# ---------------------------------------------------------------------------
# dense verification

def _guard(n):
    if n > VERIFY_LIMIT:
        raise ValueError(f"dense verification limited to n <= {VERIFY_LIMIT}, got {n}")


def _sub(G, t, s):
    return G[np.ix_(t.idx, s.idx)]


def projection_residual(Q: np.ndarray, B: np.ndarray) -> np.ndarray:
    return B - Q @ (Q.conj().T @ B)


def desc(t: Cluster, c: int, directions):
    out = [(t, c)]
    for ch in t.children:
        out.extend(desc(ch, directions.child_direction(ch, c), directions))
    return out


@dataclass
class ErrorRepresentation:
    block: tuple
    lhs: np.ndarray
    rhs: np.ndarray
    orthogonality: float
    scale: np.ndarray  # ||G|x||^2 per vector

    @property
    def relative_error(self) -> float:
        """Largest ||(G - QQ^*G)x|| / ||G x|| over the vectors."""
        return float(np.sqrt(np.max(self.lhs / np.maximum(self.scale, np.finfo(float).tiny))))

    @property
    def rel_diff(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs) / np.maximum(self.lhs, np.finfo(float).tiny)))


def verify_error_representation(A: DH2Matrix, adaptive: AdaptiveBasis, block: FarBlock,
                                x: np.ndarray, G: np.ndarray | None = None) -> ErrorRepresentation:
    """Compare ||(G - QQ^*G)x||^2 with the sum over descendants of the
    projection errors of G-hat, for every column of ``x``."""
    _guard(A.n)
    G = to_dense(A) if G is None else G
    x = x.reshape(block.s.size, -1)
    basis, dirs = adaptive.basis, A.directions
    cache: dict = {}
    t, s, c = block.t, block.s, block.c
    Gb = _sub(G, t, s)
    Q = basis.expand(t, c, cache)
    lhs = np.sum(np.abs(projection_residual(Q, Gb) @ x) ** 2, axis=0)
    scale = np.sum(np.abs(Gb @ x) ** 2, axis=0)
    rhs = np.zeros_like(lhs)
    orth = 0.0
    for tp, cp in desc(t, c, dirs):
        if tp.is_leaf:
            Gh = _sub(G, tp, s)
        else:
            Gh = np.vstack([basis.expand(ch, dirs.child_direction(ch, cp), cache).conj().T @ _sub(G, ch, s)
                            for ch in tp.children])
        Qh = adaptive.qhat[(tp.id, cp)]
        rhs += np.sum(np.abs(projection_residual(Qh, Gh) @ x) ** 2, axis=0)
        if not tp.is_leaf:
            # children's errors vs the parent's own error term
            Gt = _sub(G, tp, s)
            U = np.zeros((tp.size, Gh.shape[0]), dtype=complex)
            start = 0
            for ch in tp.children:
                Qc = basis.expand(ch, dirs.child_direction(ch, cp), cache)
                U[np.searchsorted(tp.idx, ch.idx), start:start + Qc.shape[1]] = Qc
                start += Qc.shape[1]
            e1 = (Gt - U @ (U.conj().T @ Gt)) @ x
            e2 = U @ projection_residual(Qh, U.conj().T @ Gt) @ x
            ip = np.abs(np.sum(e1.conj() * e2, axis=0))
            # relative to the squared sizes, the quantity the Pythagoras split depends on
            denom = np.sum(np.abs(e1) ** 2 + np.abs(e2) ** 2, axis=0) + np.finfo(float).tiny
            orth = max(orth, float(np.max(ip / denom)))
    return ErrorRepresentation((t.id, s.id), lhs, rhs, orth, scale)


def blockwise_projection_errors(A: DH2Matrix, adaptive: AdaptiveBasis, G: np.ndarray | None = None,
                                H: np.ndarray | None = None) -> list[dict]:
    """Per admissible block: ||G| - QQ^*G|||_2 and ||G|||_2 (and the same for H)."""
    _guard(A.n)
    G = to_dense(A) if G is None else G
    cache: dict = {}
    out = []
    for b in A.far:
        Q = adaptive.basis.expand(b.t, b.c, cache)
        Gb = _sub(G, b.t, b.s)
        row = {"t": b.t.id, "s": b.s.id, "c": b.c, "norm_G": spectral_norm(Gb),
               "err_G": spectral_norm(projection_residual(Q, Gb))}
        if H is not None:
            Hb = _sub(H, b.t, b.s)
            row["norm_H"] = spectral_norm(Hb)
            row["err_H"] = spectral_norm(projection_residual(Q, Hb))
            row["diff_HG"] = spectral_norm(Hb - Gb)
        out.append(row)
    return out


@dataclass
class StabilityReport:
    triangle_ok: bool
    max_triangle_slack: float
    bound_ok: bool
    rows: list


def verify_stability(H: np.ndarray, A: DH2Matrix, adaptive: AdaptiveBasis, n_vectors: int = 100,
                     seed: int = 0, G: np.ndarray | None = None, atol: float = 1e-10) -> StabilityReport:
    """Check the triangle bound on random vectors and the eps(2+eps) bound
    with eps the measured blockwise relative errors."""
    _guard(A.n)
    G = to_dense(A) if G is None else G
    rng = np.random.default_rng(seed)
    cache: dict = {}
    tri_ok, slack, bound_ok = True, np.inf, True
    rows = []
    for b in A.far:
        Q = adaptive.basis.expand(b.t, b.c, cache)
        Gb, Hb = _sub(G, b.t, b.s), _sub(H, b.t, b.s)
        x = rng.standard_normal((b.s.size, n_vectors)) + 1j * rng.standard_normal((b.s.size, n_vectors))
        lhs = np.linalg.norm(projection_residual(Q, Hb) @ x, axis=0)
        rhs = np.linalg.norm(projection_residual(Q, Gb) @ x, axis=0) + np.linalg.norm((Hb - Gb) @ x, axis=0)
        tri_ok &= bool(np.all(lhs <= rhs * (1 + 1e-12) + atol))
        slack = min(slack, float(np.min(rhs - lhs)))
        nH, nG = spectral_norm(Hb), spectral_norm(Gb)
        err_H = spectral_norm(projection_residual(Q, Hb))
        eps_proj = spectral_norm(projection_residual(Q, Gb)) / nG if nG > 0 else 0.0
        eps_in = spectral_norm(Hb - Gb) / nH if nH > 0 else 0.0
        eps = max(eps_proj, eps_in)
        bound = eps * (2 + eps) * nH + atol
        bound_ok &= err_H <= bound
        rows.append({"t": b.t.id, "s": b.s.id, "eps": eps, "err_H": err_H, "norm_H": nH, "bound": bound})
    return StabilityReport(tri_ok, slack, bound_ok, rows)


def check_isometry(adaptive: AdaptiveBasis) -> float:
    """Largest ||Q^*Q - I|| over all stored Q (leaves) and Q-hat (non-leaves)."""
    worst = 0.0
    for Q in adaptive.qhat.values():
        k = Q.shape[1]
        if k:
            worst = max(worst, float(np.max(np.abs(Q.conj().T @ Q - np.eye(k)))))
    return worst
