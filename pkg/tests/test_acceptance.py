"""Acceptance suite: one pass/fail line per criterion.

Every criterion runs at its stated tolerance. The summary is printed at the
end of the pytest session and on stdout as each criterion finishes.
"""

import gc
import time

import numpy as np
import pytest

from dh2comp import dh2, tree, weights
from dh2comp.experiment import RunConfig, dense_norm, run_experiment
from dh2comp.recompress import (TruncationControl, blockwise_projection_errors, build_adaptive_basis,
                                check_isometry, recompress, verify_error_representation, verify_stability)

import conftest
from conftest import instance, sphere_points

RESULTS = []
LEAF = {64: 4, 512: 16, 2048: 32, 4096: 32}


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def build(n, kappa, order, eta=1.0, leaf=None):
    pts = sphere_points(n)
    ct = tree.build_cluster_tree(pts, leaf or LEAF[n])
    dirs = tree.build_directions(ct, kappa)
    bt = tree.build_block_tree(ct, dirs, kappa, eta, 1.0, eta)
    return pts, dh2.assemble_dh2(bt, order, kappa)


@pytest.fixture(autouse=True)
def release_memory():
    yield
    conftest.instance.cache_clear()
    conftest.cached_run.cache_clear()
    gc.collect()


def test_criterion_1_dense_oracle_convergence():
    lines, ok = [], True
    slowest = 0.0
    for n in (64, 512, 2048):
        pts = sphere_points(n)
        for kappa in (0.0, 4.0):
            H = dh2.exact_kernel_matrix(pts, kappa)
            nH = dense_norm(H)
            errs = []
            for m in (2, 3, 4):
                t0 = time.perf_counter()
                _, A = build(n, kappa, m)
                errs.append(dense_norm(dh2.to_dense(A) - H) / nH)
                slowest = max(slowest, time.perf_counter() - t0)
                del A
            good = all(np.isfinite(errs)) and errs[0] > errs[1] > errs[2]
            ok &= good
            lines.append(f"n={n} kappa={kappa:g}: " + " > ".join(f"{e:.2e}" for e in errs))
    ok &= slowest < 120
    report(1, "interpolation error finite and strictly decreasing in m", ok,
           "; ".join(lines) + f"; slowest instance {slowest:.1f}s")


def blockrel_errors(A, G, eps, compressed):
    R = weights.basis_weights(A.row_basis)
    if compressed:
        N = weights.norm_estimates(A.row_basis)
        W = weights.approx_weights(A, eps / 10, N, weighted=True).Rhat
        norms = weights.block_norms_estimated(A, N.N, W)
    else:
        W, norms = R, weights.block_norms_exact(A, R)
    _, rows, cols = recompress(A, W, TruncationControl(eps, "blockrel"), norms)
    worst = 0.0
    for errs in (blockwise_projection_errors(A, rows, G),
                 blockwise_projection_errors(A.adjoint(), cols, G.conj().T)):
        worst = max(worst, max(e["err_G"] / e["norm_G"] for e in errs))
    return worst


def test_criterion_2_blockwise_truncation_guarantee():
    ok, lines = True, []
    for n, eta, order in ((512, 2.0, 3), (2048, 1.0, 3)):
        _, A = build(n, 4.0, order, eta)
        G = dh2.to_dense(A)
        for eps in (1e-2, 1e-4):
            for compressed in (False, True):
                worst = blockrel_errors(A, G, eps, compressed)
                ok &= worst <= 1.05 * eps
                lines.append(f"n={n} eps={eps:g} {'compressed' if compressed else 'exact'}: "
                             f"max ratio {worst / eps:.3f}")
        del A, G
    report(2, "block-relative error <= 1.05 eps on every admissible block", ok, "; ".join(lines))


def test_criterion_3_error_representation():
    _, A = build(2048, 4.0, 3)
    G = dh2.to_dense(A)
    R = weights.basis_weights(A.row_basis)
    q = build_adaptive_basis(A, R, TruncationControl(1e-3, "blockrel"), "row", weights.block_norms_exact(A, R))
    rng = np.random.default_rng(0)
    nonleaf = [b for b in A.far if not b.t.is_leaf]
    leaf = [b for b in A.far if b.t.is_leaf]
    sample = [nonleaf[i] for i in rng.choice(len(nonleaf), min(15, len(nonleaf)), replace=False)]
    sample += [leaf[i] for i in rng.choice(len(leaf), 5, replace=False)]
    worst, worst_orth, used = 0.0, 0.0, 0
    for b in sample:
        x = rng.standard_normal((b.s.size, 20)) + 1j * rng.standard_normal((b.s.size, 20))
        rep = verify_error_representation(A, q, b, x, G)
        if rep.relative_error < 1e-8:
            continue  # nothing truncated: both sides are roundoff
        worst = max(worst, rep.rel_diff)
        worst_orth = max(worst_orth, rep.orthogonality)
        used += 1
    ok = used >= 10 and worst <= 1e-8
    report(3, "Pythagoras error representation", ok,
           f"{used} blocks x 20 vectors, max relative mismatch {worst:.1e}, orthogonality {worst_orth:.1e}")


def spectrum_gap(a, b):
    sa = np.linalg.svd(a, compute_uv=False)
    sb = np.linalg.svd(b, compute_uv=False)
    n = max(len(sa), len(sb))
    sa, sb = np.pad(sa, (0, n - len(sa))), np.pad(sb, (0, n - len(sb)))
    return float(np.max(np.abs(sa - sb)) / max(sa[0], sb[0]))


def test_criterion_4_weight_spectra():
    inst = instance(64, 4, 4.0, 3, 2.0)
    A, G = inst.A, inst.G
    R = weights.basis_weights(A.row_basis)
    cache = {}
    levels = {inst.ct.clusters[tid].level for tid, _ in R}
    gap_r = max(spectrum_gap(R[(tid, c)], A.row_basis.expand(inst.ct.clusters[tid], c, cache)) for tid, c in R)
    Z = {}
    build_adaptive_basis(A, R, TruncationControl(1e-12), "row", record_total=Z)
    ext = tree.extended_row_sets(inst.blocks)
    gap_z = 0.0
    for (tid, c), Zt in Z.items():
        t = inst.ct.clusters[tid]
        Gtc = np.hstack([G[np.ix_(t.idx, b.s.idx)] for b in ext[(tid, c)]])
        gap_z = max(gap_z, spectrum_gap(A.row_basis.expand(t, c, cache) @ Zt.conj().T, Gtc))
    ok = gap_r <= 1e-8 and gap_z <= 1e-8 and len(levels) >= 3
    report(4, "basis and total weight spectra match dense oracles", ok,
           f"{len(R)} basis weights on {len(levels)} levels, gap {gap_r:.1e}; "
           f"{len(Z)} total weights, gap {gap_z:.1e}")


def test_criterion_5_compressed_weight_contract():
    ok, lines = True, []
    for n, eta in ((512, 2.0), (2048, 1.0)):
        _, A = build(n, 4.0, 3, eta)
        N = weights.norm_estimates(A.row_basis)
        for weighted in (False, True):
            for eps_w in (1e-2, 1e-4, 1e-6):
                comp = weights.approx_weights(A, eps_w, N, weighted=weighted, keep_full=True)
                worst = 0.0
                for b in A.far:
                    key = (b.s.id, b.c)
                    R, Q = comp.full[key], comp.Qt[key]
                    resid = np.linalg.norm((R - Q @ comp.Rhat[key]) @ b.S.conj().T, 2)
                    bound = eps_w * (comp.omegas[("row", b.t.id, b.s.id)] if weighted else 1.0)
                    worst = max(worst, resid / bound)
                ok &= worst <= 1.0 + 1e-10
                lines.append(f"n={n} {'weighted' if weighted else 'plain'} eps_w={eps_w:g}: max ratio {worst:.3f}")
        del A
    report(5, "compressed-weight residual <= eps_w (omega eps_w)", ok, "; ".join(lines))


def test_criterion_6_stability_bound():
    ok, lines = True, []
    for n, eta, nvec in ((512, 2.0, 100), (2048, 1.0, 20)):
        pts, A = build(n, 4.0, 3, eta)
        H, G = dh2.exact_kernel_matrix(pts, 4.0), dh2.to_dense(A)
        N = weights.norm_estimates(A.row_basis)
        comp = weights.approx_weights(A, 1e-5, N, weighted=True)
        norms = weights.block_norms_estimated(A, N.N, comp.Rhat)
        q = build_adaptive_basis(A, comp.Rhat, TruncationControl(1e-4, "blockrel"), "row", norms)
        rep = verify_stability(H, A, q, n_vectors=nvec, G=G)
        ratio = max(r["err_H"] / (r["eps"] * (2 + r["eps"]) * r["norm_H"] + 1e-10) for r in rep.rows)
        ok &= rep.triangle_ok and rep.bound_ok
        lines.append(f"n={n}: triangle bound {'held' if rep.triangle_ok else 'violated'} on {nvec} vectors "
                     f"per block, max err/bound {ratio:.3f}")
        del A, G, H
    report(6, "projected exact-kernel error <= eps(2+eps)||H|| with compressed weights", ok, "; ".join(lines))


def test_criterion_7_storage_shape():
    ok, lines = True, []
    for m in (2, 3, 4, 5):
        row = run_experiment(RunConfig(mesh_m=16, kappa=4.0, order=m, leaf_size=32, eps=1e-4, eps_weights=1e-5,
                                       weights="compressed", error_mode="blockrel", verify=False))
        gc.collect()
        w_exact, w_comp = row["bytes_exact_weights"], row["bytes_compressed_weights"]
        orig = row["bytes_leaf"] + row["bytes_transfer"] + row["bytes_coupling"]
        rec = row["bytes_recomp_leaf"] + row["bytes_recomp_transfer"] + row["bytes_recomp_coupling"]
        ok &= w_comp < w_exact and rec < orig
        lines.append(f"m={m}: weights {w_comp / 2**20:.1f}/{w_exact / 2**20:.1f} MiB, "
                     f"matrix {rec / 2**20:.1f}/{orig / 2**20:.1f} MiB")
    report(7, "compressed weights and recompressed matrix smaller than originals, n=2048", ok, "; ".join(lines))


def test_criterion_8_isometry_and_matvec():
    ok, lines = True, []
    rng = np.random.default_rng(0)
    for n in (64, 512, 2048, 4096):
        _, A = build(n, 4.0, 2 if n == 4096 else 3)
        R = weights.basis_weights(A.row_basis)
        Ar, rows, cols = recompress(A, R, TruncationControl(1e-4, "blockrel"), weights.block_norms_exact(A, R))
        iso = max(check_isometry(rows), check_isometry(cols))
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        mv = 0.0
        for M in (A, Ar):
            y = M @ x
            mv = max(mv, np.linalg.norm(y - dh2.to_dense(M) @ x) / np.linalg.norm(y))
        ok &= iso <= 1e-12 and mv <= 1e-12
        lines.append(f"n={n}: isometry {iso:.1e}, matvec {mv:.1e}")
        del A, Ar, rows, cols
        gc.collect()
    report(8, "Q*Q = I and fast matvec equals dense matvec", ok, "; ".join(lines))
