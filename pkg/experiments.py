"""Multi-system order statistics and the noise-bound sweep.

Cells run on a bounded thread pool. Every cell derives its own generator from
SeedSequence(seed, spawn_key=<cell key>), so tables do not depend on scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from admm_solver import MODE_L1, MODE_LP, SolverConfig, solve
from analysis import IdentificationResult, box_stats, compute_metrics
from dataset import ChunkedDataset, DatasetConfig, generate_random_dataset, random_inputs
from pole_grid import PoleGrid
from run_log import log_exc

logger = logging.getLogger("sysid")

MODES = (MODE_LP, MODE_L1)
STATUS_ERROR = "error"

# spawn-key namespaces
_INPUT_KEY = 0
_SYSTEM_KEY = 1
_SOLVER_KEY = 2


def cell_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def mode_config(cfg: SolverConfig, mode: str) -> SolverConfig:
    if mode == MODE_L1:
        return cfg.as_l1()
    if mode == MODE_LP:
        if cfg.p.is_l1:
            raise ValueError("lp mode needs p < 1 in the solver configuration")
        return cfg
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _run_cells(cells: Sequence[Any], work: Callable[[Any], dict[str, Any]], workers: int) -> list[dict[str, Any]]:
    if workers <= 1:
        return [work(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(work, cells))


@dataclass(frozen=True)
class MultiSystemReport:
    rows: tuple[dict[str, Any], ...] = field(repr=False)
    stats: tuple[dict[str, Any], ...] = field(repr=False)

    @property
    def failed(self) -> int:
        return sum(1 for row in self.rows if row["status"] == STATUS_ERROR)


def run_multi_system(
    orders: Sequence[int],
    systems_per_order: int,
    data_cfg: DatasetConfig,
    grid: PoleGrid,
    solver_cfg: SolverConfig,
    seed: int,
    *,
    modes: Sequence[str] = MODES,
    workers: int = 1,
) -> MultiSystemReport:
    """Detected-order statistics per (original order, mode); one shared input for every system."""
    if systems_per_order < 1:
        raise ValueError(f"systems_per_order must be >= 1, got {systems_per_order}")
    for mode in modes:
        mode_config(solver_cfg, mode)
    inputs = random_inputs(data_cfg, cell_rng(seed, _INPUT_KEY))
    cells = [(order, idx, mode) for order in orders for idx in range(systems_per_order) for mode in modes]
    logger.info(
        "multi_system_start orders=%s systems=%d modes=%s cells=%d workers=%d",
        list(orders),
        systems_per_order,
        ",".join(modes),
        len(cells),
        workers,
    )

    def work(cell: tuple[int, int, str]) -> dict[str, Any]:
        order, idx, mode = cell
        row: dict[str, Any] = {"order": order, "system": idx, "mode": mode}
        try:
            cfg = replace(data_cfg, order=order)
            dataset, truth = generate_random_dataset(cfg, cell_rng(seed, _SYSTEM_KEY, order, idx), inputs)
            result = solve(dataset, grid, mode_config(solver_cfg, mode), cell_rng(seed, _SOLVER_KEY, order, idx))
            metrics = compute_metrics(result, dataset, truth.noisy, truth.clean)
            row.update(_result_columns(result.with_metrics(metrics)))
        except Exception as exc:
            log_exc(f"multi_system cell order={order} system={idx} mode={mode} failed", exc)
            row.update(status=STATUS_ERROR, error=f"{type(exc).__name__}: {exc}")
        return row

    rows = _run_cells(cells, work, workers)
    stats: list[dict[str, Any]] = []
    for order in orders:
        for mode in modes:
            found = [
                row["detected_order"]
                for row in rows
                if row["order"] == order and row["mode"] == mode and row["status"] != STATUS_ERROR
            ]
            stats.append({"order": order, "mode": mode, "count": len(found), **box_stats(found)})
    report = MultiSystemReport(tuple(rows), tuple(stats))
    logger.info("multi_system_done cells=%d failed=%d", len(rows), report.failed)
    return report


def _result_columns(result: IdentificationResult) -> dict[str, Any]:
    metrics = result.metrics
    out: dict[str, Any] = {
        "status": result.status,
        "iterations": result.iterations,
        "final_gap": result.final_gap,
        "detected_order": result.detected_order,
        "error": "",
    }
    if metrics is not None:
        out["zeta_out"] = float(np.sqrt(np.sum(np.square(metrics.zeta_out))))
        if metrics.zeta_in is not None:
            out["zeta_in"] = float(np.sqrt(np.sum(np.square(metrics.zeta_in))))
        if metrics.output_error is not None:
            out["output_error"] = float(np.sqrt(np.sum(np.square(metrics.output_error))))
    return out


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[dict[str, Any], ...] = field(repr=False)
    modes: tuple[str, ...] = MODES

    @property
    def failed(self) -> int:
        return sum(1 for row in self.rows if row["status"] == STATUS_ERROR)

    def table(self) -> list[dict[str, Any]]:
        """One row per eps with order_<mode> and output_error_<mode> columns."""
        wide: dict[float, dict[str, Any]] = {}
        for row in self.rows:
            entry = wide.setdefault(row["eps"], {"eps": row["eps"]})
            mode = row["mode"]
            ok = row["status"] != STATUS_ERROR
            entry[f"order_{mode}"] = row.get("detected_order", "") if ok else ""
            entry[f"output_error_{mode}"] = row.get("output_error", "") if ok else ""
            entry[f"status_{mode}"] = row["status"]
        return [wide[eps] for eps in sorted(wide)]


def geometric_eps_grid(lo: float, hi: float, count: int) -> list[float]:
    if not (0 < lo <= hi) or count < 1:
        raise ValueError("eps grid needs 0 < lo <= hi and count >= 1")
    return [float(v) for v in np.geomspace(lo, hi, count)]


def run_noise_sweep(
    dataset: ChunkedDataset,
    eps_values: Sequence[float],
    grid: PoleGrid,
    solver_cfg: SolverConfig,
    seed: int,
    *,
    reference_input: Sequence[np.ndarray] | None = None,
    reference_output: Sequence[np.ndarray] | None = None,
    modes: Sequence[str] = MODES,
    workers: int = 1,
) -> SweepReport:
    """Solve every mode at every noise bound on the first chunk."""
    eps_values = [float(e) for e in eps_values]
    if not eps_values or any(e <= 0 for e in eps_values):
        raise ValueError("eps values must be positive")
    if eps_values != sorted(eps_values):
        raise ValueError("eps values must be sorted ascending")
    for mode in modes:
        mode_config(solver_cfg, mode)
    first = dataset.head(1)
    ref_in = list(reference_input[:1]) if reference_input is not None else None
    ref_out = list(reference_output[:1]) if reference_output is not None else None
    cells = [(pos, eps, mode) for pos, eps in enumerate(eps_values) for mode in modes]
    logger.info("noise_sweep_start eps_count=%d modes=%s workers=%d", len(eps_values), ",".join(modes), workers)

    def work(cell: tuple[int, float, str]) -> dict[str, Any]:
        pos, eps, mode = cell
        row: dict[str, Any] = {"eps": eps, "mode": mode}
        try:
            data = first.with_noise_bound(eps)
            result = solve(data, grid, mode_config(solver_cfg, mode), cell_rng(seed, _SOLVER_KEY, pos))
            metrics = compute_metrics(result, data, ref_in, ref_out)
            row.update(_result_columns(result.with_metrics(metrics)))
        except Exception as exc:
            log_exc(f"noise_sweep cell eps={eps:g} mode={mode} failed", exc)
            row.update(status=STATUS_ERROR, error=f"{type(exc).__name__}: {exc}")
        return row

    rows = _run_cells(cells, work, workers)
    report = SweepReport(tuple(rows), tuple(modes))
    logger.info("noise_sweep_done cells=%d failed=%d", len(rows), report.failed)
    return report
