from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from colorama import Fore, Style

from admm_solver import SolverConfig, solve
from dataset import DatasetConfig, generate_random_dataset
from epigraph_prox import PExponent, project_epigraph_lp
from feasible_set import assemble, is_feasible, project
from lti_sim import ParameterLayout, forward_operator, simulate_chunk
from pole_grid import GridConfig, PoleGrid, build_grid, scaling_weights
from quantizer import make_uniform

STATUS_COLOR = {"PASS": Fore.GREEN, "FAIL": Fore.RED, "WARN": Fore.YELLOW}


@dataclass
class CheckResult:
    code: str
    status: str
    message: str
    detail: Optional[str] = None

    @property
    def tag(self) -> str:
        color = STATUS_COLOR.get(self.status, "")
        return f"{color}[{self.status}]{Style.RESET_ALL}"

    def summary_line(self) -> str:
        return f"{self.tag} {self.code}: {self.message}"


@dataclass
class AuditReport:
    results: List[CheckResult]

    @property
    def has_fail(self) -> bool:
        return any(result.status == "FAIL" for result in self.results)

    def format_summary(self) -> str:
        lines: List[str] = ["=== Audit Summary ==="]
        for result in self.results:
            lines.append(result.summary_line())
            if result.detail and result.status == "FAIL":
                lines.append(f"Detail: {result.detail}")
        return "\n".join(lines).rstrip()


Check = Callable[[np.random.Generator, bool], Tuple[bool, str]]


def _check_quantizer(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    a = make_uniform(3, 1.0).step
    b = make_uniform(3, 3.0).step
    ok = abs(a - 2 / 7) <= 1e-12 and abs(b - 6 / 7) <= 1e-12
    return ok, f"step(3,1)={a:.4f} step(3,3)={b:.4f}"


def _check_grid(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    grid = build_grid()
    return grid.n_poles == 146, f"default grid poles={grid.n_poles}"


def _check_alpha(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    worst = 0.0
    for n in (1, 10, 50, 1000):
        near = PoleGrid.from_poles([1.0 - 1e-9], n)
        limit = 1.0 / (n + 1)
        worst = max(worst, abs(float(scaling_weights(near, n)[0]) - limit))
    return worst < 1e-6, f"max gap near the unit circle={worst:.2e}"


def _prox_oracle(x: float, t: float, p: float) -> float:
    ds = np.arange(-3.5, 3.5, 1e-4)
    ts = np.maximum(t, np.abs(ds) ** p)
    return float(np.min((ds - x) ** 2 + (ts - t) ** 2))


def _check_prox(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    p = PExponent(1, 2)
    worst = 0.0
    for _ in range(50 if quick else 1000):
        x, t = rng.uniform(-3, 3, 2)
        d, tt = project_epigraph_lp(x, t, p)
        if tt < abs(d) ** 0.5 - 1e-10:
            return False, f"output ({d}, {tt}) outside the epigraph"
        worst = max(worst, (d - x) ** 2 + (tt - t) ** 2 - _prox_oracle(x, t, 0.5))
    return worst <= 1e-6, f"max squared-distance excess over grid oracle={worst:.2e}"


def _check_forward(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    grid = build_grid(GridConfig(radii=(0.6, 1.0), points_per_radius=6), horizon_N=30)
    u = rng.uniform(-1, 1, 30)
    op = forward_operator(grid, u, 0)
    layout = ParameterLayout(grid.n_dof, 1, (0,))
    worst = 0.0
    for _ in range(10 if quick else 100):
        w = rng.standard_normal(layout.size)
        sys = layout.system(w, grid)
        worst = max(worst, float(np.max(np.abs(op.apply(layout.local_params(w, 0)) - simulate_chunk(sys, grid, 0, u)))))
    return worst <= 1e-9, f"max |operator - simulation|={worst:.2e}"


def _small_instance(rng: np.random.Generator):
    cfg = DatasetConfig(n_chunks=1, chunk_len=20, order=2, noise_bound=0.25, missing_fraction=0.1)
    dataset, truth = generate_random_dataset(cfg, rng)
    grid = build_grid(GridConfig(radii=(0.5, 0.9), points_per_radius=8), horizon_N=20)
    return dataset, truth, grid


def _check_projection(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    dataset, _, grid = _small_instance(rng)
    fs = assemble(dataset, grid)
    w_hat = rng.standard_normal(fs.w_size)
    d_hat = rng.standard_normal(fs.n_groups)
    s, f = project(fs, w_hat, d_hat)
    report = is_feasible(fs, s, f, tol=1e-5)
    s2, f2 = project(fs, s, f)
    drift = float(np.linalg.norm(s2 - s) + np.linalg.norm(f2 - f))
    return report.ok and drift <= 1e-4, f"{report.describe()} idempotence drift={drift:.2e}"


def _check_solve(rng: np.random.Generator, quick: bool) -> Tuple[bool, str]:
    dataset, _, grid = _small_instance(rng)
    result = solve(dataset, grid, SolverConfig(max_outer=40), rng)
    zeta = max(result.metrics.zeta_out) if result.metrics else math.nan
    ok = result.completed and zeta == 0.0
    return ok, f"status={result.status} order={result.detected_order} zeta_out={zeta:g}"


QUICK_CHECKS: List[Tuple[str, str, Check]] = [
    ("QUANT", "Uniform quantizer steps", _check_quantizer),
    ("GRID", "Default pole grid size", _check_grid),
    ("ALPHA", "Energy scaling continuity", _check_alpha),
    ("PROX", "Epigraph projection vs grid oracle", _check_prox),
    ("FWD", "Forward operator vs simulation", _check_forward),
]
FULL_CHECKS: List[Tuple[str, str, Check]] = [
    ("PROJ", "Feasible-set projection", _check_projection),
    ("SOLVE", "End-to-end identification", _check_solve),
]


class AuditRunner:
    """
    Self-check of acceptance constants and oracle agreements; --full adds projection and solver runs.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def run(self, quick: bool = False) -> AuditReport:
        checks = QUICK_CHECKS if quick else QUICK_CHECKS + FULL_CHECKS
        results: List[CheckResult] = []
        for idx, (code, label, check) in enumerate(checks):
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(idx,)))
            try:
                ok, detail = check(rng, quick)
            except Exception as exc:
                results.append(
                    CheckResult(code=code, status="FAIL", message=f"{label} raised.", detail=f"{type(exc).__name__}: {exc}")
                )
                continue
            if ok:
                results.append(CheckResult(code=code, status="PASS", message=f"{label}: {detail}"))
            else:
                results.append(CheckResult(code=code, status="FAIL", message=f"{label} failed.", detail=detail))
        return AuditReport(results=results)
