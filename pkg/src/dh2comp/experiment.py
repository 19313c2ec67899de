"""End-to-end benchmark pipeline: geometry, assembly, weights, recompression, errors."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import dh2, tree, weights
from .geometry import make_sphere_cloud, random_sphere_cloud
from .recompress import TruncationControl, blockwise_projection_errors, recompress

log = logging.getLogger(__name__)

DENSE_VERIFY_LIMIT = 4096

COLUMNS = [
    "n", "kappa", "order", "k", "leaf_size", "eta1", "eta2", "eta3",
    "eps", "eps_weights", "k_norm", "weights", "error_mode", "symmetric",
    "clusters", "admissible", "inadmissible",
    "rel_error_interp", "rel_error_recomp", "rel_error_recomp_vs_dh2", "error_method",
    "max_block_rel_error",
    "bytes_leaf", "bytes_transfer", "bytes_coupling", "bytes_nearfield",
    "bytes_recomp_leaf", "bytes_recomp_transfer", "bytes_recomp_coupling",
    "bytes_exact_weights", "bytes_compressed_weights", "bytes_norm_estimates",
    "time_setup", "time_weights", "time_basis", "time_verify",
]
TIMING_COLUMNS = [c for c in COLUMNS if c.startswith("time_")]


@dataclass(frozen=True)
class RunConfig:
    mesh_m: int = 16
    npoints: int | None = None
    kappa: float = 4.0
    kappa_growing: bool = False
    kappa_n0: int = 8192
    order: int = 3
    eta1: float = 1.0
    eta2: float = 1.0
    eta3: float = 1.0
    leaf_size: int = 32
    eps: float = 1e-4
    eps_weights: float = 1e-5
    k_norm: int = 1
    weights: str = "exact"
    error_mode: str = "blockrel"
    symmetric_weights: bool = False
    seed: int = 0
    verify: bool = True
    power_iterations: int = 60

    def validate(self) -> None:
        if self.npoints is None and self.mesh_m < 1:
            raise ValueError("mesh subdivision must be at least 1")
        if self.npoints is not None and self.npoints < 1:
            raise ValueError("npoints must be at least 1")
        if self.order < 1:
            raise ValueError("interpolation order must be at least 1")
        if self.leaf_size < 1:
            raise ValueError("leaf size must be at least 1")
        if self.kappa < 0:
            raise ValueError("wave number must be non-negative")
        for name in ("eta1", "eta2", "eta3", "eps", "eps_weights"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_norm < 1:
            raise ValueError("k_norm must be at least 1")
        if self.weights not in ("exact", "compressed"):
            raise ValueError(f"unknown weights mode {self.weights!r}")
        if self.error_mode not in ("abs", "blockrel"):
            raise ValueError(f"unknown error mode {self.error_mode!r}")

    def points(self) -> np.ndarray:
        if self.npoints is not None:
            return random_sphere_cloud(self.npoints, self.seed).points
        return make_sphere_cloud(self.mesh_m).points

    def effective_kappa(self, n: int) -> float:
        if self.kappa_growing:
            return self.kappa * math.sqrt(n / self.kappa_n0)
        return self.kappa

    def geometry_key(self):
        return (self.mesh_m if self.npoints is None else None, self.npoints, self.seed)


def power_norm(apply, apply_adj, n: int, iters: int = 60, seed: int = 0, rtol: float = 1e-10) -> float:
    """Spectral norm estimate by power iteration on A^*A."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = apply_adj(apply(x))
        lam = np.linalg.norm(y)
        if lam == 0.0:
            return 0.0
        x = y / lam
        new = math.sqrt(lam)
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


def dense_norm(M: np.ndarray, iters: int = 60, seed: int = 0) -> float:
    return power_norm(lambda v: M @ v, lambda v: M.conj().T @ v, M.shape[1], iters, seed)


def _kernel_apply(points, kappa, x, chunk=512):
    """H x with H the zero-diagonal kernel matrix, evaluated in row chunks."""
    kern = dh2.HelmholtzKernel(kappa)
    y = np.empty(len(points), dtype=complex)
    for i in range(0, len(points), chunk):
        rows = points[i:i + chunk]
        z = rows[:, None, :] - points[None, :, :]
        r = np.sqrt(np.sum(z * z, axis=-1))
        zero = r == 0.0
        r[zero] = 1.0
        K = np.exp(1j * kern.kappa * r) / (4 * np.pi * r)
        K[zero] = 0.0
        y[i:i + chunk] = K @ x
    return y


@dataclass
class RunArtifacts:
    row: dict
    original: dh2.DH2Matrix
    recompressed: dh2.DH2Matrix
    rows_basis: object
    cols_basis: object
    blocks: tree.DirectedBlockTree
    weight_rows: list


def run_pipeline(cfg: RunConfig) -> RunArtifacts:
    cfg.validate()
    t0 = time.perf_counter()
    pts = cfg.points()
    n = len(pts)
    kappa = cfg.effective_kappa(n)
    ct = tree.build_cluster_tree(pts, cfg.leaf_size)
    dirs = tree.build_directions(ct, kappa, cfg.eta2)
    blocks = tree.build_block_tree(ct, dirs, kappa, cfg.eta1, cfg.eta2, cfg.eta3)
    A = dh2.assemble_dh2(blocks, cfg.order, kappa)
    t1 = time.perf_counter()
    log.info("n=%d kappa=%g order=%d: %d admissible, %d inadmissible blocks",
             n, kappa, cfg.order, len(blocks.admissible), len(blocks.inadmissible))

    R = weights.basis_weights(A.row_basis)
    norms_est = None
    comp = None
    if cfg.weights == "exact":
        W = R
        block_norms = weights.block_norms_exact(A, R) if cfg.error_mode == "blockrel" else None
    else:
        weighted = cfg.error_mode == "blockrel"
        norms_est = weights.norm_estimates(A.row_basis, cfg.k_norm)
        comp = weights.approx_weights(A, cfg.eps_weights, norms_est, weighted=weighted)
        W = comp.Rhat
        block_norms = weights.block_norms_estimated(A, norms_est.N, W) if weighted else None
    t2 = time.perf_counter()

    ctrl = TruncationControl(cfg.eps, cfg.error_mode)
    Ar, rows_b, cols_b = recompress(A, W, ctrl, block_norms, symmetric=cfg.symmetric_weights)
    t3 = time.perf_counter()

    orig = dh2.storage_report(A)
    rec = dh2.storage_report(Ar)
    row = {
        "n": n, "kappa": kappa, "order": cfg.order, "k": cfg.order**3, "leaf_size": cfg.leaf_size,
        "eta1": cfg.eta1, "eta2": cfg.eta2, "eta3": cfg.eta3,
        "eps": cfg.eps, "eps_weights": cfg.eps_weights if cfg.weights == "compressed" else "",
        "k_norm": cfg.k_norm, "weights": cfg.weights, "error_mode": cfg.error_mode,
        "symmetric": int(cfg.symmetric_weights),
        "clusters": len(ct.clusters), "admissible": len(blocks.admissible),
        "inadmissible": len(blocks.inadmissible),
        "bytes_leaf": orig["leaf"], "bytes_transfer": orig["transfer"],
        "bytes_coupling": orig["coupling"], "bytes_nearfield": orig["nearfield"],
        "bytes_recomp_leaf": rec["leaf"], "bytes_recomp_transfer": rec["transfer"],
        "bytes_recomp_coupling": rec["coupling"],
        "bytes_exact_weights": int(sum(a.nbytes for a in R.values())),
        "bytes_compressed_weights": comp.nbytes() if comp else "",
        "bytes_norm_estimates": norms_est.nbytes() if norms_est else "",
    }

    if cfg.verify:
        if n <= DENSE_VERIFY_LIMIT:
            H = dh2.exact_kernel_matrix(pts, kappa)
            G = dh2.to_dense(A)
            Gr = dh2.to_dense(Ar)
            nH = dense_norm(H, cfg.power_iterations, cfg.seed)
            row["rel_error_interp"] = dense_norm(H - G, cfg.power_iterations, cfg.seed) / nH
            row["rel_error_recomp"] = dense_norm(H - Gr, cfg.power_iterations, cfg.seed) / nH
            row["rel_error_recomp_vs_dh2"] = (dense_norm(G - Gr, cfg.power_iterations, cfg.seed)
                                              / dense_norm(G, cfg.power_iterations, cfg.seed))
            row["error_method"] = "dense"
            if n <= 2048:
                errs = blockwise_projection_errors(A, rows_b, G)
                row["max_block_rel_error"] = max((e["err_G"] / e["norm_G"] for e in errs if e["norm_G"] > 0),
                                                 default=0.0)
        else:
            Aadj, Radj = A.adjoint(), Ar.adjoint()

            def h(x):
                return _kernel_apply(pts, kappa, x)

            def h_adj(x):  # the kernel matrix is complex symmetric
                return np.conj(h(np.conj(x)))

            it = min(cfg.power_iterations, 20)
            nH = power_norm(h, h_adj, n, it, cfg.seed)
            row["rel_error_interp"] = power_norm(lambda x: h(x) - A @ x, lambda x: h_adj(x) - Aadj @ x,
                                                 n, it, cfg.seed) / nH
            row["rel_error_recomp"] = power_norm(lambda x: h(x) - Ar @ x, lambda x: h_adj(x) - Radj @ x,
                                                 n, it, cfg.seed) / nH
            row["rel_error_recomp_vs_dh2"] = (
                power_norm(lambda x: A @ x - Ar @ x, lambda x: Aadj @ x - Radj @ x, n, it, cfg.seed)
                / power_norm(A.matvec, Aadj.matvec, n, it, cfg.seed))
            row["error_method"] = "matvec"
    t4 = time.perf_counter()
    row.update({"time_setup": t1 - t0, "time_weights": t2 - t1, "time_basis": t3 - t2,
                "time_verify": t4 - t3})
    wrows = weights.weight_storage_rows(A.row_basis, R, comp, norms_est)
    return RunArtifacts({c: row.get(c, "") for c in COLUMNS}, A, Ar, rows_b, cols_b, blocks, wrows)


def run_experiment(cfg: RunConfig, report_dir: str | Path | None = None) -> dict:
    """Run one configuration and return its CSV row.

    With ``report_dir`` the block statistics, storage breakdown, weight
    storage per level and the per-(cluster, direction) rank audit are written
    next to each other.
    """
    art = run_pipeline(cfg)
    if report_dir is not None:
        write_reports(art, Path(report_dir), cfg)
    return art.row


def write_reports(art: RunArtifacts, out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    tag = f"n{art.row['n']}_k{cfg.order}"
    (out / f"blocks_{tag}.csv").write_text(tree.block_statistics_csv(art.blocks))
    (out / f"storage_original_{tag}.csv").write_text(dh2.storage_csv(dh2.storage_report(art.original)))
    (out / f"storage_recompressed_{tag}.csv").write_text(dh2.storage_csv(dh2.storage_report(art.recompressed)))
    (out / f"weights_{tag}.csv").write_text(rows_to_csv(art.weight_rows, list(art.weight_rows[0])))
    k = cfg.order**3
    for name, basis in (("row", art.rows_basis), ("col", art.cols_basis)):
        rows = basis.report_rows(k)
        if rows:
            (out / f"ranks_{name}_{tag}.csv").write_text(rows_to_csv(rows, list(rows[0])))


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def strip_timings(rows):
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows]


def compare_modes(cfg_a: RunConfig, cfg_b: RunConfig) -> list[dict]:
    """Side-by-side numbers for two configurations on the same geometry."""
    if cfg_a.geometry_key() != cfg_b.geometry_key():
        raise ValueError("compare_modes needs identical geometry and seed")
    a = run_experiment(cfg_a)
    b = run_experiment(cfg_b)
    out = []
    for col in COLUMNS:
        if col in TIMING_COLUMNS:
            continue
        va, vb = a[col], b[col]
        diff = ""
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)) and not isinstance(va, bool):
            diff = vb - va
        elif va != vb:
            diff = "differs"
        out.append({"column": col, "a": va, "b": vb, "diff": diff})
    return out


def sweep(cfg: RunConfig, **axes) -> list[RunConfig]:
    """Cartesian product of ``cfg`` with every field listed in ``axes``."""
    cfgs = [cfg]
    for name, values in axes.items():
        cfgs = [replace(c, **{name: v}) for c in cfgs for v in values]
    return cfgs


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
