import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import gridded_instance
from dataset import Chunk, ChunkedDataset
from feasible_set import (
    CONE,
    INTERVAL,
    NOISE_BOX,
    NONNEG,
    InfeasibleError,
    InnerSettings,
    assemble,
    is_feasible,
    new_workspace,
    project,
    project_cones,
)
from lti_sim import simulate_chunk
from pole_grid import PoleGrid
from quantizer import make_uniform, quantize_array

ACCURATE = InnerSettings(tol=1e-7, max_iter=20000)


@pytest.fixture
def instance(small_grid, rng):
    dataset, w, caps = gridded_instance(small_grid, rng)
    return assemble(dataset, small_grid), dataset, w, caps


def test_assembled_rows_reproduce_simulation(instance, small_grid):
    fs, dataset, w, _ = instance
    assert fs.n_rows == sum(dataset.noise_counts)
    assert fs.n_copies == dataset.n_chunks + 1
    system = fs.layout.system(w, small_grid)
    sensor = fs.outputs(w)
    row = 0
    for i, chunk in enumerate(dataset.chunks):
        y = simulate_chunk(system, small_grid, i, chunk.input)
        noise = w[fs.layout.noise_slice(i)]
        assert np.allclose(sensor[row : row + len(noise)], y[chunk.observed_k - 1] + noise, atol=1e-10)
        row += len(noise)


def test_generating_point_is_feasible(instance):
    fs, _, w, caps = instance
    report = is_feasible(fs, w, caps, tol=0.0)
    assert report.ok
    assert report.describe() == "feasible"


def test_violations_are_labelled(instance):
    fs, dataset, w, caps = instance
    bad = w.copy()
    first_noise = fs.layout.noise_slice(0).start
    bad[first_noise] = dataset.noise_bound + 0.5
    f = caps.copy()
    f[1] = -0.25
    report = is_feasible(fs, bad, f)
    assert not report.ok
    kinds = {v.kind for v in report.violations}
    assert {NOISE_BOX, CONE, NONNEG} <= kinds
    k = dataset.chunks[0].observed_k[0]
    noise_ids = [v.constraint_id for v in report.violations if v.kind == NOISE_BOX]
    assert noise_ids == [f"noise[c0,k{k}]"]
    assert "nonneg[g1]" in {v.constraint_id for v in report.violations}
    assert "cone[a,g1]" in {v.constraint_id for v in report.violations}


def test_interval_violation(instance):
    fs, _, w, caps = instance
    bad = w.copy()
    bad[0] += 50.0
    report = is_feasible(fs, bad, caps)
    assert report.violations
    assert all(v.kind == INTERVAL for v in report.violations)


def test_feasible_input_is_returned_unchanged(instance):
    fs, _, w, caps = instance
    s, f = project(fs, w, caps)
    assert np.array_equal(s, w)
    assert np.array_equal(f, caps)


def test_projection_lands_in_set(instance, rng):
    fs, _, w, caps = instance
    w_hat = w + rng.normal(0.0, 0.5, w.size)
    d_hat = caps + rng.normal(0.0, 0.5, caps.size)
    ws = new_workspace(fs, ACCURATE)
    s, f = project(fs, w_hat, d_hat, ws)
    assert is_feasible(fs, s, f, tol=1e-5).ok
    assert ws.last_iterations > 0


def test_projection_is_closest(instance, rng):
    fs, _, w, caps = instance
    w_hat = w + rng.normal(0.0, 0.5, w.size)
    d_hat = caps + rng.normal(0.0, 0.5, caps.size)
    s, f = project(fs, w_hat, d_hat, new_workspace(fs, ACCURATE))
    x = np.concatenate([w_hat, d_hat])
    px = np.concatenate([s, f])
    y = np.concatenate([w, caps])
    assert np.linalg.norm(x - px) <= np.linalg.norm(x - y) + 1e-5
    # obtuse-angle condition against a known member of the set
    assert np.dot(x - px, y - px) <= 1e-3 * np.linalg.norm(x - px) * np.linalg.norm(y - px) + 1e-6


def test_projection_idempotent(instance, rng):
    fs, _, w, caps = instance
    s, f = project(fs, w + rng.normal(0.0, 0.5, w.size), caps, new_workspace(fs, ACCURATE))
    s2, f2 = project(fs, s, f, new_workspace(fs, ACCURATE))
    assert np.linalg.norm(s2 - s) + np.linalg.norm(f2 - f) <= 1e-4


def test_projection_non_expansive(instance, rng):
    fs, _, w, caps = instance
    x1 = (w + rng.normal(0.0, 0.5, w.size), caps + rng.normal(0.0, 0.5, caps.size))
    x2 = (w + rng.normal(0.0, 0.5, w.size), caps + rng.normal(0.0, 0.5, caps.size))
    p1 = project(fs, *x1, new_workspace(fs, ACCURATE))
    p2 = project(fs, *x2, new_workspace(fs, ACCURATE))
    gap_in = np.linalg.norm(np.concatenate([x1[0] - x2[0], x1[1] - x2[1]]))
    gap_out = np.linalg.norm(np.concatenate([p1[0] - p2[0], p1[1] - p2[1]]))
    assert gap_out <= gap_in + 1e-4


def test_warm_workspace_is_reused(instance, rng):
    fs, _, w, caps = instance
    ws = new_workspace(fs, ACCURATE)
    project(fs, w + rng.normal(0.0, 0.5, w.size), caps, ws)
    first = ws.total_iterations
    assert ws.warm
    project(fs, w + rng.normal(0.0, 0.5, w.size), caps, ws)
    assert ws.total_iterations > first


def test_project_cones_cases(small_grid, instance):
    fs = instance[0]
    blocks = np.zeros((fs.n_copies, small_grid.n_dof))
    pair = int(np.flatnonzero(small_grid.is_pair)[0])
    cols = np.flatnonzero(small_grid.dof_group == pair)
    blocks[0, cols] = [3.0, 4.0]
    blocks[1, cols] = [0.3, 0.4]
    blocks[2, cols] = [3.0, 4.0]
    caps = np.ones((fs.n_copies, small_grid.n_groups))
    caps[2, pair] = -6.0
    new_blocks, new_caps = project_cones(fs, blocks, caps)
    # norm 5 against cap 1 -> both meet at 3
    assert np.allclose(new_blocks[0, cols], [1.8, 2.4])
    assert new_caps[0, pair] == pytest.approx(3.0)
    assert np.allclose(new_blocks[1, cols], [0.3, 0.4])
    assert new_caps[1, pair] == 1.0
    assert np.allclose(new_blocks[2, cols], 0.0)
    assert new_caps[2, pair] == 0.0


def test_narrow_intervals_collapse(small_grid):
    spec = make_uniform(3, 3.0)
    dataset = ChunkedDataset((Chunk(np.ones(4), {2: 3}),), spec, 0.1)
    fs = assemble(dataset, small_grid.with_horizon(4))
    ws = new_workspace(fs, InnerSettings(tol=10.0))
    assert np.all(ws.row_lo <= ws.row_hi)


def test_empty_feasible_set_raises():
    # zero input and a pole at the origin: y(k) = 0 for k >= 2
    grid = PoleGrid.from_poles([0.0], 3)
    spec = make_uniform(3, 3.0)
    dataset = ChunkedDataset((Chunk(np.zeros(3), {2: 7}),), spec, 0.0)
    fs = assemble(dataset, grid)
    with pytest.raises(InfeasibleError) as err:
        project(fs, np.zeros(fs.w_size), np.zeros(fs.n_groups), new_workspace(fs, InnerSettings(max_iter=200)))
    assert err.value.report is not None
    assert not err.value.report.ok


def test_shape_checks(instance):
    fs = instance[0]
    with pytest.raises(ValueError):
        project(fs, np.zeros(3), np.zeros(fs.n_groups))
    with pytest.raises(ValueError):
        is_feasible(fs, np.zeros(fs.w_size), np.zeros(2))


def _tiny_instance(seed):
    """Two real grid poles, one chunk, three observed samples."""
    rng = np.random.default_rng(seed)
    grid = PoleGrid.from_poles([0.5, -0.7], 4)
    spec = make_uniform(3, 3.0)
    u = rng.uniform(-1.0, 1.0, 4)
    w = np.concatenate([[rng.normal()], rng.normal(0.0, 1.0, 2), rng.normal(0.0, 0.3, 2), np.zeros(3)])
    fs0 = assemble(ChunkedDataset((Chunk(u, {1: 0, 3: 0, 4: 0}),), spec, 0.2), grid)
    noise = rng.uniform(-0.1, 0.1, 3)
    w[-3:] = noise
    levels = [int(np.searchsorted(spec.boundaries, y, side="right")) for y in fs0.outputs(w)]
    dataset = ChunkedDataset((Chunk(u, dict(zip((1, 3, 4), levels))),), spec, 0.2)
    fs = assemble(dataset, grid)
    caps = np.maximum(np.abs(w[1:3]), np.abs(w[3:5]))
    w_hat = w + rng.normal(0.0, 1.0, w.size)
    d_hat = caps + rng.normal(0.0, 1.0, 2)
    return fs, w, caps, w_hat, d_hat


def _dense_oracle(fs, w0, f0, w_hat, d_hat):
    """SLSQP on the same set; with real poles every constraint is linear."""
    n = fs.w_size
    cons = []
    A = []
    for row, lo, hi in zip(fs.rows, fs.lo, fs.hi):
        padded = np.concatenate([row, [0.0, 0.0]])
        if np.isfinite(lo):
            A.append((padded, -lo))
        if np.isfinite(hi):
            A.append((-padded, hi))
    for idx in range(n - 3, n):
        for sign in (1.0, -1.0):
            e = np.zeros(n + 2)
            e[idx] = -sign
            A.append((e, fs.noise_bound))
    for j in range(2):
        for col in (1 + j, 3 + j):
            for sign in (1.0, -1.0):
                e = np.zeros(n + 2)
                e[n + j] = 1.0
                e[col] = -sign
                A.append((e, 0.0))
    for e, c in A:
        cons.append({"type": "ineq", "fun": lambda x, e=e, c=c: e @ x + c, "jac": lambda x, e=e: e})
    target = np.concatenate([w_hat, d_hat])
    res = minimize(
        lambda x: float(np.sum((x - target) ** 2)),
        np.concatenate([w0, f0]),
        jac=lambda x: 2.0 * (x - target),
        constraints=cons,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    return float(res.fun)


@pytest.mark.parametrize("seed", range(20))
def test_tiny_projection_matches_dense_oracle(seed):
    fs, w, caps, w_hat, d_hat = _tiny_instance(seed)
    assert is_feasible(fs, w, caps, tol=0.0).ok
    s, f = project(fs, w_hat, d_hat, new_workspace(fs, InnerSettings(tol=1e-8, max_iter=50000)))
    ours = float(np.sum((s - w_hat) ** 2) + np.sum((f - d_hat) ** 2))
    oracle = _dense_oracle(fs, w, caps, w_hat, d_hat)
    assert is_feasible(fs, s, f, tol=1e-6).ok
    assert abs(ours - oracle) <= 1e-5 * max(1.0, oracle)


def test_unfinished_projection_is_repaired_into_cells(instance, rng):
    fs, dataset, w, caps = instance
    ws = new_workspace(fs, InnerSettings(max_iter=1))
    s, f = project(fs, w + rng.normal(0.0, 0.5, w.size), caps + rng.normal(0.0, 0.5, caps.size), ws)
    assert not ws.last_converged
    assert is_feasible(fs, s, f, tol=1e-12).ok
    observed = np.concatenate([chunk.observed_levels for chunk in dataset.chunks])
    assert np.array_equal(quantize_array(dataset.quantizer, fs.outputs(s)), observed)
    assert np.all(np.abs(s[fs.layout.noise_slice_all]) <= dataset.noise_bound)


def test_converged_projection_reports_it(instance, rng):
    fs, _, w, caps = instance
    ws = new_workspace(fs, ACCURATE)
    project(fs, w + rng.normal(0.0, 0.5, w.size), caps, ws)
    assert ws.last_converged
