from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from dataset import Chunk, ChunkedDataset  # noqa: E402
from lti_sim import ParameterLayout, simulate_chunk  # noqa: E402
from pole_grid import GridConfig, build_grid  # noqa: E402
from quantizer import make_uniform, quantize_array  # noqa: E402

SMALL_GRID = GridConfig(radii=(0.5, 0.9), points_per_radius=8)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance runs on the full grid")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    return build_grid(SMALL_GRID, horizon_N=12)


def gridded_instance(grid, rng, *, n_chunks=2, length=12, eps=0.2, drop=(3,), active=(1, 6)):
    """Dataset generated by a sparse system on the grid itself, with the generating w and caps."""
    spec = make_uniform(3, 3.0)
    counts = tuple(length - len(drop) for _ in range(n_chunks))
    layout = ParameterLayout(grid.n_dof, n_chunks, counts)
    w = np.zeros(layout.size)
    w[0] = 0.3
    a = np.zeros(grid.n_dof)
    for j in active:
        a[grid.dof_group == j] = rng.normal(0.0, 2.0, int(np.sum(grid.dof_group == j)))
    w[layout.a_slice] = a
    for i in range(n_chunks):
        b = np.zeros(grid.n_dof)
        for j in active:
            b[grid.dof_group == j] = rng.normal(0.0, 0.2, int(np.sum(grid.dof_group == j)))
        w[layout.b_slice(i)] = b
    system = layout.system(w, grid)
    chunks = []
    for i in range(n_chunks):
        u = rng.uniform(-1.0, 1.0, length)
        y = simulate_chunk(system, grid, i, u)
        noise = rng.uniform(-0.5 * eps, 0.5 * eps, length)
        levels = quantize_array(spec, y + noise)
        kept = [k for k in range(1, length + 1) if k not in drop]
        chunks.append(Chunk(u, {k: int(levels[k - 1]) for k in kept}))
        w[layout.noise_slice(i)] = noise[np.array(kept) - 1]
    dataset = ChunkedDataset(tuple(chunks), spec, eps)
    blocks = w[1 : 1 + grid.n_dof * (n_chunks + 1)].reshape(n_chunks + 1, grid.n_dof)
    caps = np.zeros(grid.n_groups)
    for c in range(n_chunks + 1):
        caps = np.maximum(caps, np.sqrt(np.bincount(grid.dof_group, weights=blocks[c] ** 2, minlength=grid.n_groups)))
    return dataset, w, caps
