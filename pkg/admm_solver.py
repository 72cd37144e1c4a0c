"""Three-block ADMM for block-sparse identification over the pole grid, lp and l1 modes."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from analysis import (
    STATUS_BEST_ITERATE,
    STATUS_BUDGET,
    STATUS_CONVERGED,
    IdentificationResult,
    compute_metrics,
)
from dataset import ChunkedDataset
from epigraph_prox import PExponent, project_epigraph
from feasible_set import (
    FeasibleSet,
    InnerSettings,
    ProjectionWorkspace,
    assemble,
    new_workspace,
    project,
)
from pole_grid import PoleGrid

logger = logging.getLogger("sysid")

MODE_LP = "lp"
MODE_L1 = "l1"

TERMINATION_RESIDUAL = "residual"
TERMINATION_BUDGET = "budget"

HISTORY_COLUMNS = (
    "iter",
    "d_minus_f",
    "rel_d_minus_f",
    "w_minus_s",
    "t_minus_mirror",
    "objective",
    "dual_residual",
    "residual",
    "inner_iterations",
)


@dataclass(frozen=True)
class SolverConfig:
    p: PExponent = field(default_factory=PExponent)
    rho: float = 20.0
    max_outer: int = 100
    stop_tol: float = 1e-2
    eps_bar: float = 1e-3
    tol_inner: float = 1e-6
    max_inner: int = 2000
    inner_sigma: float = 1.0
    init_sigma: float = 0.1
    seed: int = 0
    scale_zero_state: bool = True
    termination: str = TERMINATION_RESIDUAL

    def __post_init__(self) -> None:
        if self.termination not in (TERMINATION_RESIDUAL, TERMINATION_BUDGET):
            raise ValueError(f"termination must be residual or budget, got {self.termination!r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if not (self.stop_tol > 0 and self.eps_bar > 0 and self.tol_inner > 0):
            raise ValueError("stop_tol, eps_bar and tol_inner must be positive")
        if self.init_sigma < 0:
            raise ValueError(f"init_sigma must be >= 0, got {self.init_sigma}")

    @property
    def mode(self) -> str:
        return MODE_L1 if self.p.is_l1 else MODE_LP

    def inner(self) -> InnerSettings:
        return InnerSettings(self.tol_inner, self.max_inner, self.inner_sigma)

    def as_l1(self) -> SolverConfig:
        return replace(self, p=PExponent(1, 1))

    def echo(self) -> dict[str, object]:
        out = asdict(self)
        out["p"] = str(self.p)
        return out


@dataclass(frozen=True)
class SolverState:
    """t_mirror is the copy of t; w and s share the layout of the feasible set."""

    w: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    t_mirror: np.ndarray = field(repr=False)
    lambda1: np.ndarray = field(repr=False)
    lambda2: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    iteration: int = 0

    @property
    def d_minus_f(self) -> float:
        return float(np.linalg.norm(self.d - self.f))


def initialize(fs: FeasibleSet, cfg: SolverConfig, rng: np.random.Generator) -> SolverState:
    n_w = fs.w_size
    n_g = fs.n_groups
    sigma = cfg.init_sigma

    def draw(size: int) -> np.ndarray:
        return rng.normal(0.0, sigma, size)

    # same draw order as the variable listing of the update scheme
    w = draw(n_w)
    t_mirror = draw(n_g)
    s = draw(n_w)
    f = draw(n_g)
    lambda1 = draw(n_w)
    lambda2 = draw(n_g)
    theta = draw(n_g)
    d = draw(n_g)
    t = draw(n_g)
    return SolverState(w, d, t, s, f, t_mirror, lambda1, lambda2, theta, 0)


def iterate_once(
    state: SolverState,
    fs: FeasibleSet,
    cfg: SolverConfig,
    workspace: ProjectionWorkspace | None = None,
) -> SolverState:
    rho = cfg.rho
    d, t = project_epigraph(state.f - state.lambda2 / rho, state.t_mirror - state.theta / rho, cfg.p)
    s, f = project(fs, state.w + state.lambda1 / rho, d + state.lambda2 / rho, workspace)
    w = s - state.lambda1 / rho
    t_mirror = t + (state.theta - 1.0) / rho
    lambda1 = state.lambda1 + rho * (w - s)
    lambda2 = state.lambda2 + rho * (d - f)
    theta = state.theta + rho * (t - t_mirror)
    return SolverState(w, d, t, s, f, t_mirror, lambda1, lambda2, theta, state.iteration + 1)


def history_record(state: SolverState, inner_iterations: int, dual_residual: float = 0.0) -> dict[str, float]:
    """One history row; residual = max(||d - f||, ||w - s||, dual_residual) is what stopping and best-iterate use."""
    gap = state.d_minus_f
    f_norm = float(np.linalg.norm(state.f))
    w_minus_s = float(np.linalg.norm(state.w - state.s))
    return {
        "iter": state.iteration,
        "d_minus_f": gap,
        "rel_d_minus_f": gap / f_norm if f_norm > 0 else (0.0 if gap == 0 else math.inf),
        "w_minus_s": w_minus_s,
        "t_minus_mirror": float(np.linalg.norm(state.t - state.t_mirror)),
        "objective": float(np.sum(state.t)),
        "dual_residual": dual_residual,
        "residual": max(gap, w_minus_s, dual_residual),
        "inner_iterations": inner_iterations,
    }


def solve(
    dataset: ChunkedDataset,
    grid: PoleGrid,
    cfg: SolverConfig,
    rng: np.random.Generator | None = None,
) -> IdentificationResult:
    """Run to convergence or max_outer; the answer is read from the feasible copy (s, f).

    Converged means ||d - f||, ||w - s|| and the dual residual rho * ||f_k - f_(k-1)|| are
    all within stop_tol and the last set projection finished inside its own tolerance.
    When the budget runs out the iterate with the smallest combined residual is reported.
    With termination = budget every run takes max_outer iterations and reports the last one.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    grid = grid.with_horizon(dataset.max_chunk_len)
    fs = assemble(dataset, grid, cfg.scale_zero_state)
    workspace = new_workspace(fs, cfg.inner())
    state = initialize(fs, cfg, rng)
    logger.info(
        "solve_start mode=%s p=%s rho=%g groups=%d params=%d rows=%d",
        cfg.mode,
        cfg.p,
        cfg.rho,
        grid.n_groups,
        fs.w_size,
        fs.n_rows,
    )
    history: list[dict[str, float]] = []
    best = state
    best_gap = math.inf
    best_residual = math.inf
    status = STATUS_BEST_ITERATE
    for _ in range(cfg.max_outer):
        previous_f = state.f
        state = iterate_once(state, fs, cfg, workspace)
        dual = cfg.rho * float(np.linalg.norm(state.f - previous_f))
        record = history_record(state, workspace.last_iterations, dual)
        history.append(record)
        gap = record["d_minus_f"]
        residual = record["residual"]
        logger.debug(
            "admm_iter iter=%d gap=%.4e dual=%.4e inner=%d",
            state.iteration,
            gap,
            dual,
            workspace.last_iterations,
        )
        if residual < best_residual:
            best, best_gap, best_residual = state, gap, residual
        if cfg.termination == TERMINATION_BUDGET:
            continue
        if residual <= cfg.stop_tol and workspace.last_converged:
            best, best_gap, best_residual = state, gap, residual
            status = STATUS_CONVERGED
            break
    if cfg.termination == TERMINATION_BUDGET:
        best, best_gap = state, state.d_minus_f
        status = STATUS_BUDGET
    result = build_result(fs, grid, best, cfg, status, state.iteration, best_gap, history)
    result = result.with_metrics(compute_metrics(result, dataset))
    logger.info(
        "solve_done mode=%s status=%s iterations=%d gap=%.4e order=%d inner_total=%d",
        cfg.mode,
        status,
        state.iteration,
        best_gap,
        result.detected_order,
        workspace.total_iterations,
    )
    return result


def solve_l1(
    dataset: ChunkedDataset,
    grid: PoleGrid,
    cfg: SolverConfig,
    rng: np.random.Generator | None = None,
) -> IdentificationResult:
    return solve(dataset, grid, cfg.as_l1(), rng)


def build_result(
    fs: FeasibleSet,
    grid: PoleGrid,
    state: SolverState,
    cfg: SolverConfig,
    status: str,
    iterations: int,
    gap: float,
    history: list[dict[str, float]],
) -> IdentificationResult:
    layout = fs.layout
    system = layout.system(state.s, grid, cfg.scale_zero_state)
    return IdentificationResult(
        mode=cfg.mode,
        p=str(cfg.p),
        status=status,
        iterations=iterations,
        grid=grid,
        system=system,
        s=state.s.copy(),
        f=state.f.copy(),
        noise=state.s[layout.noise_slice_all].copy(),
        eps_bar=cfg.eps_bar,
        final_gap=gap,
        history=tuple(history),
        config={"solver": cfg.echo()},
    )
