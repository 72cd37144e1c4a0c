"""Cell/level quantizer: uniform symmetric constructor, level lookup and cell recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

# Cells are half-open [lo, hi); closed-set consumers use hi - HI_MARGIN.
HI_MARGIN = 1e-12


class QuantizerError(ValueError):
    pass


@dataclass(frozen=True)
class QuantizerSpec:
    boundaries: tuple[float, ...]
    levels: tuple[float, ...]
    bits: int | None = None
    saturation: float | None = None
    step: float | None = None
    _bounds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.levels) < 2:
            raise QuantizerError("quantizer needs at least two levels")
        if len(self.boundaries) != len(self.levels) - 1:
            raise QuantizerError(
                f"expected {len(self.levels) - 1} boundaries for {len(self.levels)} levels, got {len(self.boundaries)}"
            )
        bounds = np.asarray(self.boundaries, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if not (np.all(np.isfinite(bounds)) and np.all(np.isfinite(levels))):
            raise QuantizerError("boundaries and levels must be finite")
        if np.any(np.diff(bounds) <= 0) or np.any(np.diff(levels) <= 0):
            raise QuantizerError("boundaries and levels must be strictly increasing")
        object.__setattr__(self, "_bounds", bounds)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def is_symmetric(self) -> bool:
        return math.isclose(self.levels[-1], -self.levels[0], rel_tol=0.0, abs_tol=1e-12)

    def level_value(self, index: int) -> float:
        _check_index(self, index)
        return float(self.levels[index])


def _check_index(spec: QuantizerSpec, index: int) -> None:
    if not (0 <= int(index) < spec.n_levels):
        raise QuantizerError(f"level index {index} out of range (0..{spec.n_levels - 1})")


def make_uniform(m: int, saturation: float, step: float | None = None) -> QuantizerSpec:
    """2^m levels on [-saturation, saturation]; an explicit step gives symmetric levels (i - (L-1)/2) * step."""
    if m < 1:
        raise QuantizerError(f"bits must be >= 1, got {m}")
    if not saturation > 0:
        raise QuantizerError(f"saturation must be positive, got {saturation}")
    n = 2**m
    if step is None:
        delta = 2.0 * saturation / (n - 1)
        levels = -saturation + delta * np.arange(n)
        levels[-1] = saturation
    else:
        if not step > 0:
            raise QuantizerError(f"step must be positive, got {step}")
        delta = float(step)
        levels = (np.arange(n) - (n - 1) / 2.0) * delta
    boundaries = 0.5 * (levels[:-1] + levels[1:])
    return QuantizerSpec(
        tuple(float(v) for v in boundaries),
        tuple(float(v) for v in levels),
        bits=int(m),
        saturation=float(saturation) if step is None else float(levels[-1]),
        step=float(delta),
    )


def quantize(spec: QuantizerSpec, x: float) -> tuple[int, float]:
    if not math.isfinite(x):
        raise QuantizerError(f"cannot quantize non-finite value {x}")
    index = int(np.searchsorted(spec._bounds, x, side="right"))
    return index, float(spec.levels[index])


def quantize_array(spec: QuantizerSpec, xs: np.ndarray) -> np.ndarray:
    """Level indices for an array of values, same tie rule as quantize."""
    xs = np.asarray(xs, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise QuantizerError("cannot quantize non-finite values")
    return np.searchsorted(spec._bounds, xs, side="right")


def level_values(spec: QuantizerSpec, indices: np.ndarray) -> np.ndarray:
    return np.asarray(spec.levels, dtype=float)[np.asarray(indices, dtype=int)]


def cell_bounds(spec: QuantizerSpec, level_index: int) -> tuple[float, float]:
    _check_index(spec, level_index)
    lo = -math.inf if level_index == 0 else float(spec.boundaries[level_index - 1])
    hi = math.inf if level_index == spec.n_levels - 1 else float(spec.boundaries[level_index])
    return lo, hi


def to_record(spec: QuantizerSpec) -> dict[str, Any]:
    record: dict[str, Any] = {"boundaries": list(spec.boundaries), "levels": list(spec.levels)}
    if spec.bits is not None:
        record.update(bits=spec.bits, saturation=spec.saturation, step=spec.step)
    return record


def from_record(record: Mapping[str, Any]) -> QuantizerSpec:
    try:
        boundaries: Sequence[float] = [float(v) for v in record["boundaries"]]
        levels: Sequence[float] = [float(v) for v in record["levels"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise QuantizerError(f"malformed quantizer record: {exc}") from exc
    bits = record.get("bits")
    sat = record.get("saturation")
    step = record.get("step")
    return QuantizerSpec(
        tuple(boundaries),
        tuple(levels),
        bits=int(bits) if bits is not None else None,
        saturation=float(sat) if sat is not None else None,
        step=float(step) if step is not None else None,
    )
