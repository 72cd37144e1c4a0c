#!/usr/bin/env python
"""
Parsimonious identification from fragmented, quantized data.

Usage:
  python cli.py simulate   [--config PATH] [--seed N] [--out DIR]
  python cli.py identify   [--config PATH] [--seed N] [--mode lp|l1|both] [--out DIR]
  python cli.py experiment multi_system|noise_sweep [--config PATH] [--workers N] ...

Exit codes: 0 success, 1 configuration error, 2 infeasible data, 3 I/O or data-file error,
4 numerical failure in a run or experiment cell.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from admm_solver import solve
from analysis import compute_metrics
from config_loader import ConfigError, RunConfig, load_config
from dataset import (
    ChunkedDataset,
    DatasetError,
    GroundTruth,
    dataset_from_series,
    generate_random_dataset,
    load_two_column_series,
    read_dataset_csv,
)
from epigraph_prox import ProxError
from experiments import STATUS_ERROR, cell_rng, geometric_eps_grid, mode_config, run_multi_system, run_noise_sweep
from feasible_set import InfeasibleError, assemble, is_feasible
from lti_sim import simulate_chunk
from pole_grid import GridError, build_grid
from quantizer import QuantizerError
from result_export import (
    write_dataset_csv,
    write_ground_truth,
    write_grid,
    write_history,
    write_reconstruction,
    write_result,
    write_series_csv,
    write_table,
    write_violations,
)
from run_log import log_exc, setup_logging

logger = logging.getLogger("sysid")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3
EXIT_FAILED = 4

# spawn-key namespaces for single runs; experiments use their own in experiments.py
_DATA_KEY = 10
_SOLVER_KEY = 11


@dataclass(frozen=True)
class LoadedData:
    dataset: ChunkedDataset
    truth: GroundTruth | None = None
    reference_input: tuple[np.ndarray, ...] | None = None
    reference_output: tuple[np.ndarray, ...] | None = None


def load_data(cfg: RunConfig) -> LoadedData:
    source = cfg.data.source
    spec = cfg.quantizer.build()
    rng = cell_rng(cfg.seed, _DATA_KEY)
    if source == "synthetic":
        dataset, truth = generate_random_dataset(cfg.dataset_config(), rng)
        return LoadedData(dataset, truth, truth.noisy, truth.clean)
    path = Path(cfg.data.path or "")
    if source == "series":
        u, y = load_two_column_series(path)
        dataset, outputs = dataset_from_series(
            u,
            y,
            cfg.data.chunk_len,
            spec,
            cfg.data.noise_bound,
            cfg.data.missing_fraction,
            rng,
            max_chunks=cfg.data.max_chunks,
        )
        return LoadedData(dataset, None, outputs, outputs)
    dataset = read_dataset_csv(path, spec, cfg.data.noise_bound)
    return LoadedData(dataset)


def _truth_series_rows(truth: GroundTruth, dataset: ChunkedDataset) -> list[dict[str, Any]]:
    system, grid = truth.system()
    rows: list[dict[str, Any]] = []
    for i, chunk in enumerate(dataset.chunks):
        y, y_zi, y_zs = simulate_chunk(system, grid, i, chunk.input, parts=True)
        for j in range(chunk.length):
            rows.append({"chunk": i, "k": j + 1, "y": float(y[j]), "y_zi": float(y_zi[j]), "y_zs": float(y_zs[j])})
    return rows


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    data = load_data(cfg)
    out = cfg.out
    write_dataset_csv(out / "dataset.csv", data.dataset, cfg.echo)
    grid = build_grid(cfg.grid, data.dataset.max_chunk_len)
    write_grid(out / "grid.txt", grid, cfg.echo)
    if data.truth is not None:
        write_ground_truth(out / "ground_truth.json", data.truth, data.dataset, cfg.echo)
        write_series_csv(out / "series.csv", _truth_series_rows(data.truth, data.dataset), cfg.echo)
    logger.info(
        "simulate_done source=%s chunks=%d observed=%s out=%s",
        cfg.data.source,
        data.dataset.n_chunks,
        ",".join(str(n) for n in data.dataset.noise_counts),
        out,
    )
    return EXIT_OK


def cmd_identify(args: argparse.Namespace, cfg: RunConfig) -> int:
    data = load_data(cfg)
    grid = build_grid(cfg.grid, data.dataset.max_chunk_len)
    out = cfg.out
    code = EXIT_OK
    for mode in cfg.modes:
        solver_cfg = mode_config(cfg.solver, mode)
        try:
            result = solve(data.dataset, grid, solver_cfg, cell_rng(cfg.seed, _SOLVER_KEY))
        except InfeasibleError as exc:
            log_exc(f"identify mode={mode} infeasible", exc)
            if exc.report is not None:
                write_violations(out / f"violations_{mode}.csv", exc.report, cfg.echo)
            code = EXIT_INFEASIBLE
            continue
        metrics = compute_metrics(result, data.dataset, data.reference_input, data.reference_output)
        result = result.with_metrics(metrics).with_config(cfg.echo)
        write_result(out / f"result_{mode}.json", result, cfg.echo)
        write_history(out / f"history_{mode}.csv", result, cfg.echo)
        write_reconstruction(out / f"reconstruction_{mode}.csv", result, data.dataset, cfg.echo, data.reference_input)
        fs = assemble(data.dataset, result.grid, solver_cfg.scale_zero_state)
        report = is_feasible(fs, result.s, result.f, tol=10.0 * solver_cfg.tol_inner)
        write_violations(out / f"violations_{mode}.csv", report, cfg.echo)
        logger.info(
            "identify_done mode=%s status=%s order=%d zeta_out=%s feasible=%s",
            mode,
            result.status,
            result.detected_order,
            ",".join(f"{z:g}" for z in metrics.zeta_out),
            report.ok,
        )
    return code


def _failure_code(rows: Sequence[dict[str, Any]]) -> int:
    failed = [row for row in rows if row["status"] == STATUS_ERROR]
    if not failed:
        return EXIT_OK
    if all(str(row.get("error", "")).startswith(InfeasibleError.__name__) for row in failed):
        return EXIT_INFEASIBLE
    return EXIT_FAILED


def cmd_experiment(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = cfg.out
    exp = cfg.experiment
    if args.which == "multi_system":
        data_cfg = cfg.dataset_config()
        grid = build_grid(cfg.grid, data_cfg.chunk_len)
        report = run_multi_system(
            exp.orders,
            exp.systems_per_order,
            data_cfg,
            grid,
            cfg.solver,
            cfg.seed,
            modes=cfg.modes,
            workers=cfg.workers,
        )
        write_table(out / "multi_system_cells.csv", report.rows, cfg.echo)
        write_table(out / "multi_system_stats.csv", report.stats, cfg.echo)
        return _failure_code(report.rows)

    data = load_data(cfg)
    grid = build_grid(cfg.grid, data.dataset.chunks[0].length)
    eps_values = exp.eps_values or tuple(geometric_eps_grid(exp.eps_min, exp.eps_max, exp.eps_count))
    sweep = run_noise_sweep(
        data.dataset,
        eps_values,
        grid,
        cfg.solver,
        cfg.seed,
        reference_input=data.reference_input,
        reference_output=data.reference_output,
        modes=cfg.modes,
        workers=cfg.workers,
    )
    write_table(out / "noise_sweep.csv", sweep.table(), cfg.echo)
    write_table(out / "noise_sweep_cells.csv", sweep.rows, cfg.echo)
    return _failure_code(sweep.rows)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="KEY = VALUE config file.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("lp", "l1", "both"), default=None)
    p.add_argument("--out", type=Path, default=None, help="Output directory.")
    p.add_argument("--workers", type=int, default=None, help="Experiment worker threads.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Sparse LTI identification from fragmented quantized data")
    sub = parser.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="Generate or ingest a dataset and write it out.")
    _add_common(sim_p)
    sim_p.set_defaults(func=cmd_simulate)

    id_p = sub.add_parser("identify", help="Run the identification in the requested modes.")
    _add_common(id_p)
    id_p.set_defaults(func=cmd_identify)

    exp_p = sub.add_parser("experiment", help="Multi-system statistics or the noise-bound sweep.")
    exp_p.add_argument("which", choices=("multi_system", "noise_sweep"))
    _add_common(exp_p)
    exp_p.set_defaults(func=cmd_experiment)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out: dict[str, str] = {}
    if args.seed is not None:
        out["run.seed"] = str(args.seed)
    if args.mode is not None:
        out["run.mode"] = args.mode
    if args.out is not None:
        out["run.out"] = str(args.out)
    if args.workers is not None:
        out["run.workers"] = str(args.workers)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    setup_logging(cfg.out)
    logger.info("command_start command=%s seed=%d mode=%s out=%s", args.command, cfg.seed, cfg.mode, cfg.out)
    try:
        return args.func(args, cfg)
    except DatasetError as exc:
        log_exc(f"{args.command} data error", exc)
        return EXIT_IO
    except np.linalg.LinAlgError as exc:
        log_exc(f"{args.command} numerical failure", exc)
        return EXIT_FAILED
    except (ConfigError, GridError, QuantizerError, ProxError, ValueError) as exc:
        log_exc(f"{args.command} configuration error", exc)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        log_exc(f"{args.command} infeasible", exc)
        return EXIT_INFEASIBLE
    except OSError as exc:
        log_exc(f"{args.command} I/O error", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
