from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pytest

from dh2comp import dh2, tree
from dh2comp.geometry import make_sphere_cloud, random_sphere_cloud


@dataclass
class Instance:
    points: np.ndarray
    ct: tree.ClusterTree
    dirs: tree.DirectionFamily
    blocks: tree.DirectedBlockTree
    A: dh2.DH2Matrix
    kappa: float
    order: int

    @property
    def G(self):
        if not hasattr(self, "_G"):
            self._G = dh2.to_dense(self.A)
        return self._G

    @property
    def H(self):
        if not hasattr(self, "_H"):
            self._H = dh2.exact_kernel_matrix(self.points, self.kappa)
        return self._H


def sphere_points(n, seed=0):
    """The octahedral mesh when n = 8 m^2, random sphere points otherwise."""
    m = int(round(np.sqrt(n / 8)))
    if 8 * m * m == n:
        return make_sphere_cloud(m).points
    return random_sphere_cloud(n, seed).points


@lru_cache(maxsize=8)
def instance(n, leaf, kappa, order, eta=1.0):
    pts = sphere_points(n)
    ct = tree.build_cluster_tree(pts, leaf)
    dirs = tree.build_directions(ct, kappa)
    blocks = tree.build_block_tree(ct, dirs, kappa, eta, 1.0, eta)
    A = dh2.assemble_dh2(blocks, order, kappa)
    return Instance(pts, ct, dirs, blocks, A, kappa, order)


@pytest.fixture(scope="session")
def inst512():
    """n = 512, kappa = 4, order 3, relaxed admissibility so far blocks exist."""
    return instance(512, 16, 4.0, 3, 2.0)


@pytest.fixture(scope="session")
def inst64():
    """Deep tree on 64 random sphere points: admissible blocks on several levels."""
    return instance(64, 4, 4.0, 3, 2.0)


@pytest.fixture(scope="session")
def inst64_laplace():
    return instance(64, 4, 0.0, 2, 1.0)


@lru_cache(maxsize=64)
def cached_run(cfg):
    from dh2comp.experiment import run_experiment
    return run_experiment(cfg)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
