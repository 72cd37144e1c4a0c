"""JSON and CSV writers for datasets, results, histories and experiment tables."""

from __future__ import annotations

import csv
import json
import logging
import threading
import zlib
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Sequence

import numpy as np

from admm_solver import HISTORY_COLUMNS
from analysis import IdentificationResult, reconstruct
from dataset import DATASET_COLUMNS, ChunkedDataset, GroundTruth, dataset_rows
from feasible_set import FeasibilityReport
from pole_grid import PoleGrid, dump_grid
from quantizer import to_record

_LOGGER = logging.getLogger("sysid")

LOCK_STRIPES = 16
_LOCKS = tuple(threading.Lock() for _ in range(LOCK_STRIPES))

SERIES_COLUMNS = ("chunk", "k", "y", "y_zi", "y_zs")
RECONSTRUCTION_COLUMNS = (
    "chunk",
    "k",
    "observed_flag",
    "model_output",
    "model_sensor_input",
    "reference_sensor_input",
    "model_level_index",
    "observed_level_index",
)
VIOLATION_COLUMNS = ("constraint_id", "type", "violation")


def _lock_for(path: Path) -> threading.Lock:
    """Writes to one path always take the same stripe; writers never nest."""
    key = str(Path(path).resolve()).encode("utf-8")
    return _LOCKS[zlib.crc32(key) % LOCK_STRIPES]


def _plain(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def config_line(config: Mapping[str, Any]) -> str:
    return "# config=" + json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))


def write_json(path: Path, payload: Mapping[str, Any], config: Mapping[str, Any]) -> Path:
    path = Path(path)
    body = dict(_plain(payload))
    body["config"] = _plain(config)
    with _lock_for(path):
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            json.dump(body, handle, indent=2, sort_keys=True)
            handle.write("\n")
    _LOGGER.info("export_written kind=json path=%s", path)
    return path


def write_csv(
    path: Path,
    rows: Iterable[Mapping[str, Any]],
    columns: Sequence[str],
    config: Mapping[str, Any],
) -> Path:
    path = Path(path)
    with _lock_for(path):
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(config_line(config) + "\n")
            writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _plain(v) for k, v in row.items()})
    _LOGGER.info("export_written kind=csv path=%s", path)
    return path


def write_dataset_csv(path: Path, dataset: ChunkedDataset, config: Mapping[str, Any]) -> Path:
    return write_csv(path, dataset_rows(dataset), DATASET_COLUMNS, config)


def build_truth_payload(truth: GroundTruth, dataset: ChunkedDataset) -> Dict[str, Any]:
    return {
        "order": truth.order,
        "poles": truth.poles,
        "coefficients": truth.coefficients,
        "feedthrough": truth.feedthrough,
        "initial_coefficients": truth.initial_coefficients,
        "clean_output": [list(y) for y in truth.clean],
        "noise": [list(n) for n in truth.noise],
        "noisy_output": [list(y) for y in truth.noisy],
        "noise_bound": dataset.noise_bound,
        "quantizer": to_record(dataset.quantizer),
    }


def write_ground_truth(path: Path, truth: GroundTruth, dataset: ChunkedDataset, config: Mapping[str, Any]) -> Path:
    return write_json(path, build_truth_payload(truth, dataset), config)


def write_series_csv(path: Path, rows: Iterable[Mapping[str, Any]], config: Mapping[str, Any]) -> Path:
    return write_csv(path, rows, SERIES_COLUMNS, config)


def write_grid(path: Path, grid: PoleGrid, config: Mapping[str, Any]) -> Path:
    path = Path(path)
    with _lock_for(path):
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_grid(grid, path, header=config_line(config)[2:])
    return path


def build_result_payload(result: IdentificationResult) -> Dict[str, Any]:
    grid = result.grid
    active = []
    for j in result.active_groups:
        active.append(
            {
                "group": int(j),
                "pole": grid.values[j],
                "kind": grid.points[j].kind,
                "cap": float(result.f[j]),
                "coefficient": result.system.a[j],
                "alpha": float(grid.alpha[j]),
            }
        )
    zero_input = [[row[j] for j in result.active_groups] for row in result.system.b]
    return {
        "mode": result.mode,
        "p": result.p,
        "status": result.status,
        "iterations": result.iterations,
        "final_gap": result.final_gap,
        "detected_order": result.detected_order,
        "eps_bar": result.eps_bar,
        "feedthrough": result.system.r,
        "scale_zero_state": result.system.scale_zero_state,
        "horizon_N": grid.horizon_N,
        "active": active,
        "zero_input_coefficients": zero_input,
        "caps": result.f,
        "metrics": result.metrics.as_dict() if result.metrics is not None else {},
        "history_length": len(result.history),
    }


def write_result(path: Path, result: IdentificationResult, config: Mapping[str, Any]) -> Path:
    return write_json(path, build_result_payload(result), config)


def write_history(path: Path, result: IdentificationResult, config: Mapping[str, Any]) -> Path:
    return write_csv(path, result.history, HISTORY_COLUMNS, config)


def reconstruction_rows(
    result: IdentificationResult,
    dataset: ChunkedDataset,
    reference_input: Sequence[np.ndarray] | None = None,
) -> list[Dict[str, Any]]:
    rows: list[Dict[str, Any]] = []
    for rec in reconstruct(result, dataset):
        for j in range(len(rec.output)):
            observed = bool(rec.observed[j])
            rows.append(
                {
                    "chunk": rec.chunk,
                    "k": j + 1,
                    "observed_flag": int(observed),
                    "model_output": float(rec.output[j]),
                    "model_sensor_input": float(rec.sensor_input[j]),
                    "reference_sensor_input": (
                        float(reference_input[rec.chunk][j]) if reference_input is not None else ""
                    ),
                    "model_level_index": int(rec.model_level[j]) if observed else "",
                    "observed_level_index": int(rec.observed_level[j]) if observed else "",
                }
            )
    return rows


def write_reconstruction(
    path: Path,
    result: IdentificationResult,
    dataset: ChunkedDataset,
    config: Mapping[str, Any],
    reference_input: Sequence[np.ndarray] | None = None,
) -> Path:
    return write_csv(path, reconstruction_rows(result, dataset, reference_input), RECONSTRUCTION_COLUMNS, config)


def write_violations(path: Path, report: FeasibilityReport, config: Mapping[str, Any]) -> Path:
    rows = (
        {"constraint_id": v.constraint_id, "type": v.kind, "violation": v.amount}
        for v in sorted(report.violations, key=lambda v: -v.amount)
    )
    return write_csv(path, rows, VIOLATION_COLUMNS, config)


def write_table(path: Path, rows: Sequence[Mapping[str, Any]], config: Mapping[str, Any]) -> Path:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return write_csv(path, rows, columns, config)
