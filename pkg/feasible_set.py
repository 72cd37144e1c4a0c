"""The convex set of parameter/noise/cap assignments consistent with the observations.

Membership: every observed sample, plus its noise variable, lands in the cell of its
recorded level; noise stays within +-eps; every coefficient block of a grid group has
modulus at most that group's cap f_j.

The projection onto the set is an inner ADMM with the (w, f) block on one side and the
(cone copies, interval images) block on the other. The coupling system
(1 + sigma) I + sigma G^T G never changes, so its Woodbury factor is computed once per
workspace and reused across every projection of an outer solve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from dataset import ChunkedDataset
from lti_sim import ForwardOperator, ParameterLayout, forward_operator
from pole_grid import PoleGrid
from quantizer import HI_MARGIN, QuantizerError, cell_bounds

logger = logging.getLogger("sysid")

INTERVAL = "interval"
NOISE_BOX = "noise_box"
CONE = "cone"
NONNEG = "nonneg"

# a stalled inner residual above this after max_iter is treated as infeasibility
INFEASIBLE_RESIDUAL = 1e-3
CONE_SLACK = 1e-12


class InfeasibleError(RuntimeError):
    def __init__(self, message: str, report: FeasibilityReport | None = None) -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Violation:
    constraint_id: str
    kind: str
    amount: float


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    max_violation: float
    worst: Violation | None
    violations: tuple[Violation, ...] = field(default=(), repr=False)

    def describe(self) -> str:
        if self.worst is None:
            return "feasible"
        return f"worst={self.worst.constraint_id} kind={self.worst.kind} violation={self.worst.amount:.3e}"


@dataclass(frozen=True)
class ObservationRow:
    chunk: int
    k: int
    level: int


@dataclass(frozen=True)
class InnerSettings:
    tol: float = 1e-6
    max_iter: int = 2000
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not (self.tol > 0 and self.max_iter >= 1 and self.sigma > 0):
            raise ValueError("inner settings need tol > 0, max_iter >= 1 and sigma > 0")


@dataclass(frozen=True)
class FeasibleSet:
    grid: PoleGrid
    layout: ParameterLayout
    operators: tuple[ForwardOperator, ...] = field(repr=False)
    rows: np.ndarray = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    observations: tuple[ObservationRow, ...] = field(repr=False)
    noise_bound: float
    scale_zero_state: bool = True

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_groups(self) -> int:
        return self.grid.n_groups

    @property
    def n_copies(self) -> int:
        """Cone copies per group: one for a, one per chunk for b."""
        return self.layout.n_chunks + 1

    @property
    def w_size(self) -> int:
        return self.layout.size

    def coefficient_blocks(self, w: np.ndarray) -> np.ndarray:
        """(T + 1, n_dof) view of the a and b^(i) dofs, a first."""
        start = 1
        stop = 1 + self.layout.n_dof * self.n_copies
        return w[start:stop].reshape(self.n_copies, self.layout.n_dof)

    def group_norms(self, blocks: np.ndarray) -> np.ndarray:
        sq = np.zeros((blocks.shape[0], self.n_groups))
        for c in range(blocks.shape[0]):
            sq[c] = np.bincount(self.grid.dof_group, weights=blocks[c] ** 2, minlength=self.n_groups)
        return np.sqrt(sq)

    def outputs(self, w: np.ndarray) -> np.ndarray:
        """y + n at every observed sample, in row order."""
        return self.rows @ w


def assemble(dataset: ChunkedDataset, grid: PoleGrid, scale_zero_state: bool = True) -> FeasibleSet:
    layout = ParameterLayout(grid.n_dof, dataset.n_chunks, dataset.noise_counts)
    operators = tuple(
        forward_operator(grid, chunk.input, i, scale_zero_state) for i, chunk in enumerate(dataset.chunks)
    )
    n_rows = sum(dataset.noise_counts)
    rows = np.zeros((n_rows, layout.size))
    lo = np.empty(n_rows)
    hi = np.empty(n_rows)
    observations: list[ObservationRow] = []
    row = 0
    for i, chunk in enumerate(dataset.chunks):
        op = operators[i]
        noise_start = layout.noise_slice(i).start
        for pos, (k, level) in enumerate(chunk.observed.items()):
            try:
                cell_lo, cell_hi = cell_bounds(dataset.quantizer, level)
            except QuantizerError as exc:
                raise QuantizerError(f"chunk {i} k={k}: {exc}") from exc
            rows[row, 0] = op.r_column[k - 1]
            rows[row, layout.a_slice] = op.a_columns[k - 1]
            rows[row, layout.b_slice(i)] = op.b_columns[k - 1]
            rows[row, noise_start + pos] = 1.0
            lo[row] = cell_lo
            # half-open cell closed off below its upper boundary
            hi[row] = cell_hi - HI_MARGIN if math.isfinite(cell_hi) else math.inf
            observations.append(ObservationRow(i, k, level))
            row += 1
    logger.debug(
        "feasible_set_assembled rows=%d params=%d groups=%d chunks=%d",
        n_rows,
        layout.size,
        grid.n_groups,
        dataset.n_chunks,
    )
    return FeasibleSet(
        grid,
        layout,
        operators,
        rows,
        lo,
        hi,
        tuple(observations),
        float(dataset.noise_bound),
        scale_zero_state,
    )


def is_feasible(fs: FeasibleSet, w: np.ndarray, f: np.ndarray, tol: float = 1e-6) -> FeasibilityReport:
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    if w.shape != (fs.w_size,) or f.shape != (fs.n_groups,):
        raise ValueError(f"expected w of size {fs.w_size} and f of size {fs.n_groups}")
    found: list[Violation] = []
    if fs.n_rows:
        y = fs.outputs(w)
        gap = np.maximum(fs.lo - y, y - fs.hi)
        for idx in np.flatnonzero(gap > 0):
            obs = fs.observations[idx]
            found.append(Violation(f"interval[c{obs.chunk},k{obs.k}]", INTERVAL, float(gap[idx])))
        noise = w[fs.layout.noise_slice_all]
        excess = np.abs(noise) - fs.noise_bound
        for idx in np.flatnonzero(excess > 0):
            obs = fs.observations[idx]
            found.append(Violation(f"noise[c{obs.chunk},k{obs.k}]", NOISE_BOX, float(excess[idx])))
    norms = fs.group_norms(fs.coefficient_blocks(w))
    cone_gap = norms - f[None, :]
    for c, j in zip(*np.nonzero(cone_gap > 0)):
        label = "a" if c == 0 else f"b{c - 1}"
        found.append(Violation(f"cone[{label},g{j}]", CONE, float(cone_gap[c, j])))
    for j in np.flatnonzero(f < 0):
        found.append(Violation(f"nonneg[g{j}]", NONNEG, float(-f[j])))
    worst = max(found, key=lambda v: v.amount, default=None)
    max_violation = worst.amount if worst is not None else 0.0
    return FeasibilityReport(max_violation <= tol, max_violation, worst, tuple(found))


def project_cones(fs: FeasibleSet, blocks: np.ndarray, caps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per (copy, group) projection onto {(g, c): ||g|| <= c}."""
    norms = fs.group_norms(blocks)
    to_zero = norms <= -caps
    shrink = (norms >= caps) & ~to_zero
    safe = np.where(norms > 0, norms, 1.0)
    scale = np.where(shrink, 0.5 * (1.0 + caps / safe), 1.0)
    scale = np.where(to_zero, 0.0, scale)
    new_caps = np.where(shrink, scale * norms, np.where(to_zero, 0.0, caps))
    new_blocks = blocks * scale[:, fs.grid.dof_group]
    return new_blocks, new_caps


@dataclass
class ProjectionWorkspace:
    """Inner-ADMM scratch state and the cached coupling factor; one per concurrent solve."""

    settings: InnerSettings
    factor: tuple | None = field(repr=False)
    rows: np.ndarray = field(repr=False)
    row_lo: np.ndarray = field(repr=False)
    row_hi: np.ndarray = field(repr=False)
    z_w: np.ndarray | None = field(default=None, repr=False)
    z_f: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    mu_w: np.ndarray | None = field(default=None, repr=False)
    mu_f: np.ndarray | None = field(default=None, repr=False)
    mu_v: np.ndarray | None = field(default=None, repr=False)
    last_iterations: int = 0
    last_residual: float = 0.0
    last_converged: bool = True
    total_iterations: int = 0

    @property
    def warm(self) -> bool:
        return self.z_w is not None


def new_workspace(fs: FeasibleSet, settings: InnerSettings | None = None) -> ProjectionWorkspace:
    settings = settings or InnerSettings()
    sigma = settings.sigma
    if fs.n_rows:
        norms = np.linalg.norm(fs.rows, axis=1)
        rows = fs.rows / norms[:, None]
        lo = fs.lo / norms + settings.tol
        hi = fs.hi / norms - settings.tol
        # intervals narrower than the tightening collapse to their midpoint
        narrow = lo > hi
        mid = 0.5 * (lo + hi)
        lo = np.where(narrow, mid, lo)
        hi = np.where(narrow, mid, hi)
        gram = rows @ rows.T
        gram[np.diag_indices_from(gram)] += (1.0 + sigma) / sigma
        factor = cho_factor(gram)
    else:
        rows = np.zeros((0, fs.w_size))
        lo = hi = np.zeros(0)
        factor = None
    return ProjectionWorkspace(settings, factor, rows, lo, hi)


def _already_inside(fs: FeasibleSet, w: np.ndarray, f: np.ndarray) -> bool:
    # cone rescaling leaves ulp-level excess; intervals and boxes must hold exactly
    report = is_feasible(fs, w, f, tol=CONE_SLACK)
    return report.ok and all(v.kind in (CONE, NONNEG) for v in report.violations)


def _clip_params(fs: FeasibleSet, z: np.ndarray) -> None:
    noise = fs.layout.noise_slice_all
    z[noise] = np.clip(z[noise], -fs.noise_bound, fs.noise_bound)


def _reset(fs: FeasibleSet, ws: ProjectionWorkspace, w_hat: np.ndarray, d_hat: np.ndarray) -> None:
    ws.z_w = w_hat.copy()
    ws.z_f = np.tile(d_hat, (fs.n_copies, 1))
    ws.v = ws.rows @ w_hat
    ws.mu_w = np.zeros_like(w_hat)
    ws.mu_f = np.zeros_like(ws.z_f)
    ws.mu_v = np.zeros_like(ws.v)


def _repair_rows(fs: FeasibleSet, ws: ProjectionWorkspace, s: np.ndarray) -> None:
    """Move every observed sample of s into its tightened cell, in place.

    The noise slot of a row touches no other row, so it absorbs as much of the shift as
    the noise box allows; the remainder goes to the least-norm change of [r, a, b].
    Caps are left to the caller.
    """
    if not fs.n_rows:
        return
    G = ws.rows
    n_params = fs.layout.n_params
    idx = np.arange(fs.n_rows)
    y = G @ s
    shift = np.clip(y, ws.row_lo, ws.row_hi) - y
    if not np.any(shift):
        return
    noise = fs.layout.noise_slice_all
    s[noise] = np.clip(s[noise] + shift / G[idx, n_params + idx], -fs.noise_bound, fs.noise_bound)

    y = G @ s
    shift = np.clip(y, ws.row_lo, ws.row_hi) - y
    # round-off left by the noise step stays far inside the untightened cell
    if np.max(np.abs(shift)) <= 0.01 * ws.settings.tol:
        return
    delta = np.linalg.lstsq(G[:, :n_params], shift, rcond=None)[0]
    s[:n_params] += delta

    y = G @ s
    remaining = float(np.max(np.abs(np.clip(y, ws.row_lo, ws.row_hi) - y)))
    if remaining > ws.settings.tol:
        report = is_feasible(fs, s, np.max(fs.group_norms(fs.coefficient_blocks(s)), axis=0))
        logger.warning("projection_repair_failed remaining=%.3e %s", remaining, report.describe())
        raise InfeasibleError(
            f"no parameters reach the observed cells (remaining shift {remaining:.3e}); "
            f"{report.describe()}; the noise bound may be too small for the data",
            report,
        )
    logger.debug("projection_repaired rows=%d max_shift=%.3e", int(np.sum(shift != 0)), float(np.max(np.abs(shift))))


def project(
    fs: FeasibleSet,
    w_hat: np.ndarray,
    d_hat: np.ndarray,
    workspace: ProjectionWorkspace | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """argmin ||s - w_hat||^2 + ||f - d_hat||^2 over (s, f) in the set."""
    w_hat = np.asarray(w_hat, dtype=float)
    d_hat = np.asarray(d_hat, dtype=float)
    if w_hat.shape != (fs.w_size,) or d_hat.shape != (fs.n_groups,):
        raise ValueError(f"expected w of size {fs.w_size} and d of size {fs.n_groups}")
    ws = workspace if workspace is not None else new_workspace(fs)
    if _already_inside(fs, w_hat, d_hat):
        ws.last_iterations = 0
        ws.last_residual = 0.0
        ws.last_converged = True
        return w_hat.copy(), d_hat.copy()
    if not ws.warm:
        _reset(fs, ws, w_hat, d_hat)
    settings = ws.settings
    sigma = settings.sigma
    a = 1.0 + sigma
    n_copies = fs.n_copies
    G = ws.rows
    residual = math.inf
    half_residual = math.inf
    converged = False
    it = 0
    for it in range(1, settings.max_iter + 1):
        # (w, f) block
        f = (d_hat + sigma * np.sum(ws.z_f - ws.mu_f, axis=0)) / (1.0 + sigma * n_copies)
        rhs = w_hat + sigma * (ws.z_w - ws.mu_w)
        if ws.factor is not None:
            rhs = rhs + sigma * (G.T @ (ws.v - ws.mu_v))
            w = (rhs - G.T @ cho_solve(ws.factor, G @ rhs)) / a
            gw = G @ w
        else:
            w = rhs / a
            gw = np.zeros(0)

        # (cone copies, interval images) block
        z_w_prev, z_f_prev, v_prev = ws.z_w, ws.z_f, ws.v
        target_w = w + ws.mu_w
        target_f = f[None, :] + ws.mu_f
        blocks, caps = project_cones(fs, fs.coefficient_blocks(target_w), target_f)
        z_w = target_w.copy()
        z_w[1 : 1 + fs.layout.n_dof * n_copies] = blocks.ravel()
        _clip_params(fs, z_w)
        v = np.clip(gw + ws.mu_v, ws.row_lo, ws.row_hi)

        ws.mu_w = ws.mu_w + w - z_w
        ws.mu_f = ws.mu_f + f[None, :] - caps
        ws.mu_v = ws.mu_v + gw - v
        ws.z_w, ws.z_f, ws.v = z_w, caps, v

        primal = max(
            float(np.linalg.norm(w - z_w)),
            float(np.max(np.abs(f[None, :] - caps))) if caps.size else 0.0,
            float(np.max(np.abs(gw - v))) if v.size else 0.0,
        )
        dual = sigma * max(
            float(np.linalg.norm(z_w - z_w_prev)),
            float(np.max(np.abs(caps - z_f_prev))) if caps.size else 0.0,
            float(np.max(np.abs(v - v_prev))) if v.size else 0.0,
        )
        residual = max(primal, dual)
        if it == settings.max_iter // 2:
            half_residual = residual
        if residual <= 0.5 * settings.tol:
            converged = True
            break

    ws.last_iterations = it
    ws.last_residual = residual
    ws.last_converged = converged
    ws.total_iterations += it
    s = ws.z_w.copy()
    f_out = np.max(ws.z_f, axis=0)
    if not converged:
        report = is_feasible(fs, s, f_out, tol=10.0 * settings.tol)
        stalled = residual >= 0.5 * half_residual
        if stalled and residual > INFEASIBLE_RESIDUAL:
            logger.warning("projection_infeasible residual=%.3e %s", residual, report.describe())
            raise InfeasibleError(
                f"feasible set looks empty (inner residual {residual:.3e} after {it} iterations); "
                f"{report.describe()}; the noise bound may be too small for the data",
                report,
            )
        logger.debug("projection_not_converged iterations=%d residual=%.3e %s", it, residual, report.describe())
    _repair_rows(fs, ws, s)
    f_out = np.maximum(f_out, np.max(fs.group_norms(fs.coefficient_blocks(s)), axis=0))
    return s, f_out
