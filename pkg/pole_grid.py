"""Candidate pole dictionary over the closed unit disk."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_RADII = (0.70, 0.85, 0.95, 1.00)
# 36 + 36 + 36 + 38 = 146 poles (conjugate partners counted)
DEFAULT_POINTS_PER_RADIUS = (36, 36, 36, 38)
DEFAULT_HORIZON = 50
MERGE_TOL = 1e-12

REAL_AXIS = "real"
PAIR = "pair"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridPoint:
    value: complex
    kind: str
    pair_index: int | None = None

    @property
    def is_pair(self) -> bool:
        return self.kind == PAIR


@dataclass(frozen=True)
class GridConfig:
    radii: tuple[float, ...] = DEFAULT_RADII
    points_per_radius: int | tuple[int, ...] = DEFAULT_POINTS_PER_RADIUS
    include_real_axis: bool = True

    def counts(self) -> tuple[int, ...]:
        if isinstance(self.points_per_radius, int):
            return (self.points_per_radius,) * len(self.radii)
        counts = tuple(int(c) for c in self.points_per_radius)
        if len(counts) != len(self.radii):
            raise GridError(
                f"points_per_radius has {len(counts)} entries but {len(self.radii)} radii were given"
            )
        return counts


@dataclass(frozen=True)
class PoleGrid:
    points: tuple[GridPoint, ...]
    horizon_N: int
    alpha: np.ndarray = field(repr=False)

    @property
    def values(self) -> np.ndarray:
        return np.array([pt.value for pt in self.points], dtype=complex)

    @property
    def is_pair(self) -> np.ndarray:
        return np.array([pt.is_pair for pt in self.points], dtype=bool)

    @property
    def n_groups(self) -> int:
        return len(self.points)

    @property
    def n_pairs(self) -> int:
        return int(self.is_pair.sum())

    @property
    def n_poles(self) -> int:
        return self.n_groups + self.n_pairs

    @property
    def dof_per_group(self) -> np.ndarray:
        """1 real unknown for a real pole, 2 (Re, Im) for a pair representative."""
        return np.where(self.is_pair, 2, 1)

    @property
    def n_dof(self) -> int:
        return int(self.dof_per_group.sum())

    @property
    def dof_group(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_groups), self.dof_per_group)

    def with_horizon(self, horizon_N: int) -> PoleGrid:
        if horizon_N == self.horizon_N:
            return self
        return PoleGrid(self.points, int(horizon_N), scaling_weights(self, horizon_N))

    def unit_scaled(self) -> PoleGrid:
        """Same poles with alpha = 1 (raw transfer-function coefficients)."""
        return PoleGrid(self.points, self.horizon_N, np.ones(self.n_groups))

    @classmethod
    def from_poles(cls, poles: Sequence[complex], horizon_N: int = DEFAULT_HORIZON) -> PoleGrid:
        """Grid made of the given representatives (no merging, no conjugate expansion)."""
        points = tuple(_classify(complex(q), idx) for idx, q in enumerate(poles))
        for pt in points:
            if abs(pt.value) > 1.0 + MERGE_TOL:
                raise GridError(f"pole {pt.value} lies outside the unit disk")
            if pt.value.imag < 0:
                raise GridError(f"pole {pt.value} must be given by its upper-half representative")
        grid = cls(points, int(horizon_N), np.ones(len(points)))
        return PoleGrid(points, int(horizon_N), scaling_weights(grid, horizon_N))


def _classify(value: complex, index: int) -> GridPoint:
    if abs(value.imag) <= MERGE_TOL:
        return GridPoint(complex(value.real, 0.0), REAL_AXIS, None)
    return GridPoint(value, PAIR, index)


def build_grid(cfg: GridConfig | None = None, horizon_N: int = DEFAULT_HORIZON) -> PoleGrid:
    cfg = cfg or GridConfig()
    if not cfg.radii:
        raise GridError("grid radii list is empty")
    counts = cfg.counts()
    points: list[GridPoint] = []
    for radius, count in zip(cfg.radii, counts):
        if not (0.0 < radius <= 1.0):
            raise GridError(f"grid radius {radius} outside (0, 1]")
        if count < 2:
            raise GridError(f"points_per_radius must be >= 2, got {count}")
        for k in range(count):
            angle = 2.0 * math.pi * k / count
            value = complex(radius * math.cos(angle), radius * math.sin(angle))
            if value.imag < -MERGE_TOL:
                continue
            pt = _classify(value, len(points))
            if pt.kind == REAL_AXIS and not cfg.include_real_axis:
                continue
            if any(abs(pt.value - other.value) <= MERGE_TOL for other in points):
                continue
            if pt.is_pair:
                pt = GridPoint(pt.value, PAIR, len(points))
            points.append(pt)
    if not points:
        raise GridError("grid configuration produced no poles")
    grid = PoleGrid(tuple(points), int(horizon_N), np.ones(len(points)))
    return PoleGrid(grid.points, grid.horizon_N, scaling_weights(grid, horizon_N))


def scaling_weights(grid: PoleGrid, N: int) -> np.ndarray:
    """alpha_m = (1 - |q|^2) / (1 - |q|^(2N+2)); 1/(N+1) on the unit circle."""
    if N < 1:
        raise GridError(f"horizon N must be >= 1, got {N}")
    sq = np.minimum(np.abs(grid.values) ** 2, 1.0)
    alpha = np.empty_like(sq)
    on_circle = sq >= 1.0
    at_origin = sq == 0.0
    inner = ~(on_circle | at_origin)
    # expm1 keeps the ratio accurate as |q| -> 1
    log_sq = np.log(sq[inner])
    alpha[inner] = np.expm1(log_sq) / np.expm1((N + 1) * log_sq)
    alpha[on_circle] = 1.0 / (N + 1)
    alpha[at_origin] = 1.0
    return alpha


def dump_grid(grid: PoleGrid, path: Path, header: str = "") -> None:
    """Two-column text dump (real, imaginary) of the stored representatives."""
    vals = grid.values
    np.savetxt(path, np.column_stack([vals.real, vals.imag]), fmt="%.16e", header=header)
