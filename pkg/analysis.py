"""Post-solution metrics: detected order, sensor input/output errors and model reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from dataset import ChunkedDataset
from lti_sim import GriddedSystem, ParameterLayout, simulate_chunk
from pole_grid import PoleGrid
from quantizer import level_values, quantize_array

STATUS_CONVERGED = "converged"
STATUS_BEST_ITERATE = "best_iterate"
STATUS_BUDGET = "budget"
COMPLETED_STATUSES = (STATUS_CONVERGED, STATUS_BEST_ITERATE, STATUS_BUDGET)


@dataclass(frozen=True)
class Metrics:
    zeta_out: tuple[float, ...]
    zeta_in: tuple[float, ...] | None = None
    output_error: tuple[float, ...] | None = None

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"zeta_out": list(self.zeta_out)}
        if self.zeta_in is not None:
            out["zeta_in"] = list(self.zeta_in)
        if self.output_error is not None:
            out["output_error"] = list(self.output_error)
        return out


@dataclass(frozen=True)
class IdentificationResult:
    mode: str
    p: str
    status: str
    iterations: int
    grid: PoleGrid = field(repr=False)
    system: GriddedSystem = field(repr=False)
    s: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    eps_bar: float
    final_gap: float
    history: tuple[dict[str, float], ...] = field(repr=False)
    metrics: Metrics | None = None
    config: Mapping[str, Any] = field(default_factory=dict, repr=False)

    @property
    def active_groups(self) -> np.ndarray:
        return np.flatnonzero(self.f > self.eps_bar)

    @property
    def active_poles(self) -> np.ndarray:
        return self.grid.values[self.active_groups]

    @property
    def detected_order(self) -> int:
        return detected_order(self.f, self.grid, self.eps_bar)

    @property
    def completed(self) -> bool:
        return self.status in COMPLETED_STATUSES

    def with_metrics(self, metrics: Metrics) -> IdentificationResult:
        return replace(self, metrics=metrics)

    def with_config(self, config: Mapping[str, Any]) -> IdentificationResult:
        return replace(self, config=dict(config))


@dataclass(frozen=True)
class ChunkReconstruction:
    """Model signals over the full chunk; noise and model levels exist only where observed."""

    chunk: int
    output: np.ndarray = field(repr=False)
    sensor_input: np.ndarray = field(repr=False)
    model_level: np.ndarray = field(repr=False)
    observed_level: np.ndarray = field(repr=False)
    observed: np.ndarray = field(repr=False)


def detected_order(f: np.ndarray, grid: PoleGrid, eps_bar: float) -> int:
    """Pole count over groups whose cap exceeds eps_bar; a conjugate pair counts 2."""
    if not eps_bar > 0:
        raise ValueError(f"eps_bar must be positive, got {eps_bar}")
    active = np.asarray(f, dtype=float) > eps_bar
    return int(np.sum(grid.dof_per_group[active]))


def sensor_input_error(y_hat_ref: Sequence[float], y_hat_model: Sequence[float]) -> float:
    ref = np.asarray(y_hat_ref, dtype=float)
    model = np.asarray(y_hat_model, dtype=float)
    if ref.shape != model.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {model.shape}")
    return float(np.linalg.norm(ref - model))


def sensor_output_error(z_ref: Mapping[int, float], z_model: Mapping[int, float]) -> float:
    """Root-sum-square level difference over a shared index set."""
    if set(z_ref) != set(z_model):
        raise ValueError("sensor output error needs identical index sets")
    return math.sqrt(sum((z_ref[k] - z_model[k]) ** 2 for k in z_ref))


def reconstruct(result: IdentificationResult, dataset: ChunkedDataset) -> list[ChunkReconstruction]:
    layout = ParameterLayout(result.grid.n_dof, dataset.n_chunks, dataset.noise_counts)
    out: list[ChunkReconstruction] = []
    for i, chunk in enumerate(dataset.chunks):
        y = simulate_chunk(result.system, result.grid, i, chunk.input)
        sensor = y.copy()
        observed = np.zeros(chunk.length, dtype=bool)
        ks = chunk.observed_k
        if len(ks):
            observed[ks - 1] = True
            sensor[ks - 1] += result.s[layout.noise_slice(i)]
        model_level = np.full(chunk.length, -1)
        model_level[observed] = quantize_array(dataset.quantizer, sensor[observed])
        observed_level = np.full(chunk.length, -1)
        observed_level[ks - 1] = chunk.observed_levels
        out.append(ChunkReconstruction(i, y, sensor, model_level, observed_level, observed))
    return out


def compute_metrics(
    result: IdentificationResult,
    dataset: ChunkedDataset,
    reference_input: Sequence[np.ndarray] | None = None,
    reference_output: Sequence[np.ndarray] | None = None,
) -> Metrics:
    """zeta_out over observed samples; zeta_in and output error over the full horizon when references exist."""
    zeta_out: list[float] = []
    zeta_in: list[float] = []
    output_error: list[float] = []
    for rec, chunk in zip(reconstruct(result, dataset), dataset.chunks):
        ks = chunk.observed_k
        ref_values = level_values(dataset.quantizer, chunk.observed_levels)
        model_values = level_values(dataset.quantizer, rec.model_level[ks - 1]) if len(ks) else np.zeros(0)
        zeta_out.append(
            sensor_output_error(
                dict(zip(ks.tolist(), ref_values.tolist())),
                dict(zip(ks.tolist(), model_values.tolist())),
            )
        )
        if reference_input is not None:
            zeta_in.append(sensor_input_error(reference_input[rec.chunk], rec.sensor_input))
        if reference_output is not None:
            output_error.append(sensor_input_error(reference_output[rec.chunk], rec.output))
    return Metrics(
        tuple(zeta_out),
        tuple(zeta_in) if reference_input is not None else None,
        tuple(output_error) if reference_output is not None else None,
    )


def box_stats(values: Sequence[float]) -> dict[str, float]:
    """min, quartiles (linear interpolation), mean and max."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {key: math.nan for key in ("min", "q25", "median", "mean", "q75", "max")}
    q25, median, q75 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
    return {
        "min": float(arr.min()),
        "q25": float(q25),
        "median": float(median),
        "mean": float(arr.mean()),
        "q75": float(q75),
        "max": float(arr.max()),
    }
