"""Chunked, fragmented, quantized observation data: synthetic generation and file ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from lti_sim import GriddedSystem, simulate_chunk
from pole_grid import PoleGrid
from quantizer import QuantizerSpec, level_values, make_uniform, quantize_array

DATASET_COLUMNS = ("chunk", "k", "u", "observed_flag", "level_index", "level_value")
COMMENT_PREFIXES = ("#", "%")

RADIUS_RANGE = (0.3, 0.95)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Chunk:
    """One contiguous input window; observed maps 1-based k to a level index."""

    input: np.ndarray = field(repr=False)
    observed: Mapping[int, int] = field(repr=False)

    def __post_init__(self) -> None:
        u = np.asarray(self.input, dtype=float)
        if u.ndim != 1 or len(u) == 0:
            raise DatasetError("chunk input must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(u)):
            raise DatasetError("chunk input contains non-finite samples")
        for k in self.observed:
            if not (1 <= int(k) <= len(u)):
                raise DatasetError(f"observed index {k} outside 1..{len(u)}")
        object.__setattr__(self, "input", u)
        object.__setattr__(self, "observed", {int(k): int(v) for k, v in sorted(self.observed.items())})

    @property
    def length(self) -> int:
        return len(self.input)

    @property
    def observed_k(self) -> np.ndarray:
        return np.fromiter(self.observed.keys(), dtype=int, count=len(self.observed))

    @property
    def observed_levels(self) -> np.ndarray:
        return np.fromiter(self.observed.values(), dtype=int, count=len(self.observed))


@dataclass(frozen=True)
class ChunkedDataset:
    chunks: tuple[Chunk, ...]
    quantizer: QuantizerSpec
    noise_bound: float

    def __post_init__(self) -> None:
        if not self.chunks:
            raise DatasetError("dataset needs at least one chunk")
        if not (self.noise_bound >= 0 and math.isfinite(self.noise_bound)):
            raise DatasetError(f"noise bound must be finite and >= 0, got {self.noise_bound}")
        for i, chunk in enumerate(self.chunks):
            for k, level in chunk.observed.items():
                if not (0 <= level < self.quantizer.n_levels):
                    raise DatasetError(f"chunk {i} k={k}: level index {level} invalid for quantizer")
        object.__setattr__(self, "chunks", tuple(self.chunks))

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)

    @property
    def max_chunk_len(self) -> int:
        return max(c.length for c in self.chunks)

    @property
    def noise_counts(self) -> tuple[int, ...]:
        return tuple(len(c.observed) for c in self.chunks)

    def with_noise_bound(self, eps: float) -> ChunkedDataset:
        return ChunkedDataset(self.chunks, self.quantizer, float(eps))

    def head(self, n_chunks: int) -> ChunkedDataset:
        return ChunkedDataset(self.chunks[:n_chunks], self.quantizer, self.noise_bound)


@dataclass(frozen=True)
class GroundTruth:
    poles: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    feedthrough: float
    initial_coefficients: np.ndarray = field(repr=False)
    clean: tuple[np.ndarray, ...] = field(repr=False)
    noise: tuple[np.ndarray, ...] = field(repr=False)
    noisy: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def order(self) -> int:
        return int(sum(2 if q.imag > 0 else 1 for q in self.poles))

    def system(self) -> tuple[GriddedSystem, PoleGrid]:
        """The generating system on a grid made of its own poles, unscaled."""
        grid = PoleGrid.from_poles(self.poles).unit_scaled()
        return GriddedSystem(self.feedthrough, self.coefficients, self.initial_coefficients, False), grid


@dataclass(frozen=True)
class Observation:
    observed: dict[int, int]
    noise: np.ndarray = field(repr=False)
    noisy: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DatasetConfig:
    n_chunks: int = 4
    chunk_len: int = 50
    input_bound: float = 5.0
    noise_bound: float = 0.25
    missing_fraction: float = 0.1
    bits: int = 3
    saturation: float = 3.0
    step: float | None = None
    order: int = 10
    init_sigma: float = 1e-2

    def quantizer(self) -> QuantizerSpec:
        return make_uniform(self.bits, self.saturation, self.step)


@dataclass(frozen=True)
class SystemDraw:
    poles: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    feedthrough: float


def generate_random_system(order: int, rng: np.random.Generator) -> SystemDraw:
    """order // 2 conjugate pairs plus a real pole when order is odd; poles stored as upper-half representatives."""
    if order < 1:
        raise DatasetError(f"system order must be >= 1, got {order}")
    n_pairs, n_real = divmod(int(order), 2)
    lo, hi = RADIUS_RANGE
    poles: list[complex] = []
    for _ in range(n_pairs):
        radius = rng.uniform(lo, hi)
        # open interval (0, pi): resample the measure-zero endpoints
        angle = 0.0
        while angle <= 0.0 or angle >= math.pi:
            angle = rng.uniform(0.0, math.pi)
        poles.append(complex(radius * math.cos(angle), radius * math.sin(angle)))
    if n_real:
        radius = rng.uniform(lo, hi)
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        poles.append(complex(sign * radius, 0.0))
    coeffs = np.empty(len(poles), dtype=complex)
    for j, q in enumerate(poles):
        re = rng.standard_normal()
        im = rng.standard_normal() if q.imag > 0 else 0.0
        coeffs[j] = complex(re, im)
    r = float(rng.standard_normal())
    return SystemDraw(np.array(poles, dtype=complex), coeffs, r)


def random_inputs(cfg: DatasetConfig, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.uniform(-cfg.input_bound, cfg.input_bound, cfg.chunk_len) for _ in range(cfg.n_chunks)]


def observe(
    y: np.ndarray,
    spec: QuantizerSpec,
    eps: float,
    missing_fraction: float,
    rng: np.random.Generator,
    *,
    add_noise: bool = True,
) -> Observation:
    """Noise on [-eps, eps], quantization, then removal of floor(missing_fraction * n) indices."""
    y = np.asarray(y, dtype=float)
    if eps < 0:
        raise DatasetError(f"noise bound must be >= 0, got {eps}")
    if not (0.0 <= missing_fraction < 1.0):
        raise DatasetError(f"missing fraction must lie in [0, 1), got {missing_fraction}")
    n = len(y)
    noise = rng.uniform(-eps, eps, n) if (add_noise and eps > 0) else np.zeros(n)
    noisy = y + noise
    levels = quantize_array(spec, noisy)
    n_missing = int(math.floor(missing_fraction * n))
    kept = np.ones(n, dtype=bool)
    if n_missing:
        kept[rng.choice(n, size=n_missing, replace=False)] = False
    observed = {int(j) + 1: int(levels[j]) for j in np.flatnonzero(kept)}
    return Observation(observed, noise, noisy)


def generate_random_dataset(
    cfg: DatasetConfig,
    rng: np.random.Generator,
    inputs: Sequence[np.ndarray] | None = None,
) -> tuple[ChunkedDataset, GroundTruth]:
    if cfg.n_chunks < 1 or cfg.chunk_len < 1 or cfg.input_bound <= 0:
        raise DatasetError("n_chunks, chunk_len and input_bound must be positive")
    spec = cfg.quantizer()
    draw = generate_random_system(cfg.order, rng)
    if inputs is None:
        inputs = random_inputs(cfg, rng)
    elif len(inputs) != cfg.n_chunks:
        raise DatasetError(f"expected {cfg.n_chunks} input chunks, got {len(inputs)}")
    sigma = cfg.init_sigma
    init = np.empty((cfg.n_chunks, len(draw.poles)), dtype=complex)
    for i in range(cfg.n_chunks):
        re = rng.normal(0.0, sigma, len(draw.poles))
        im = rng.normal(0.0, sigma, len(draw.poles))
        init[i] = np.where(draw.poles.imag > 0, re + 1j * im, re)
    # true coefficients are unscaled transfer-function residues
    grid = PoleGrid.from_poles(draw.poles).unit_scaled()
    system = GriddedSystem(draw.feedthrough, draw.coefficients, init, scale_zero_state=False)
    chunks: list[Chunk] = []
    clean, noise, noisy = [], [], []
    for i, u in enumerate(inputs):
        y = simulate_chunk(system, grid, i, u)
        obs = observe(y, spec, cfg.noise_bound, cfg.missing_fraction, rng)
        chunks.append(Chunk(np.asarray(u, dtype=float), obs.observed))
        clean.append(y)
        noise.append(obs.noise)
        noisy.append(obs.noisy)
    truth = GroundTruth(
        draw.poles, draw.coefficients, draw.feedthrough, init, tuple(clean), tuple(noise), tuple(noisy)
    )
    return ChunkedDataset(tuple(chunks), spec, float(cfg.noise_bound)), truth


def load_two_column_series(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Whitespace-separated text; column 1 is the input, column 2 the output."""
    u: list[float] = []
    y: list[float] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith(COMMENT_PREFIXES):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise DatasetError(f"{path}:{lineno}: expected at least 2 columns, got {len(parts)}")
            try:
                u.append(float(parts[0]))
                y.append(float(parts[1]))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: unparsable line {line!r}") from exc
    if not u:
        raise DatasetError(f"{path}: no data lines")
    return np.array(u), np.array(y)


def chunkify(u: np.ndarray, y: np.ndarray, chunk_len: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Consecutive non-overlapping windows; the trailing remainder is dropped."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(u) != len(y):
        raise DatasetError(f"input and output lengths differ ({len(u)} vs {len(y)})")
    if chunk_len < 1:
        raise DatasetError(f"chunk_len must be >= 1, got {chunk_len}")
    if chunk_len > len(u):
        raise DatasetError(f"chunk_len {chunk_len} exceeds series length {len(u)}")
    count = len(u) // chunk_len
    return [(u[i * chunk_len : (i + 1) * chunk_len], y[i * chunk_len : (i + 1) * chunk_len]) for i in range(count)]


def dataset_from_series(
    u: np.ndarray,
    y: np.ndarray,
    chunk_len: int,
    spec: QuantizerSpec,
    eps: float,
    missing_fraction: float,
    rng: np.random.Generator,
    *,
    max_chunks: int | None = None,
) -> tuple[ChunkedDataset, tuple[np.ndarray, ...]]:
    """Recorded outputs already carry their noise; they are quantized as they are."""
    pairs = chunkify(u, y, chunk_len)
    if max_chunks is not None:
        pairs = pairs[:max_chunks]
    chunks: list[Chunk] = []
    outputs: list[np.ndarray] = []
    for u_i, y_i in pairs:
        obs = observe(y_i, spec, eps, missing_fraction, rng, add_noise=False)
        chunks.append(Chunk(u_i, obs.observed))
        outputs.append(y_i)
    return ChunkedDataset(tuple(chunks), spec, float(eps)), tuple(outputs)


def dataset_rows(dataset: ChunkedDataset) -> Iterator[dict[str, object]]:
    values = np.asarray(dataset.quantizer.levels, dtype=float)
    for i, chunk in enumerate(dataset.chunks):
        for j, u in enumerate(chunk.input):
            k = j + 1
            level = chunk.observed.get(k)
            yield {
                "chunk": i,
                "k": k,
                "u": repr(float(u)),
                "observed_flag": 0 if level is None else 1,
                "level_index": "" if level is None else level,
                "level_value": "" if level is None else repr(float(values[level])),
            }


def read_dataset_csv(path: Path, spec: QuantizerSpec, eps: float) -> ChunkedDataset:
    """Reads a dataset CSV written by the simulate command; '#' lines are skipped."""
    inputs: dict[int, dict[int, float]] = {}
    observed: dict[int, dict[int, int]] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        reader = csv.DictReader(lines)
        missing = set(DATASET_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DatasetError(f"{path}: missing columns {sorted(missing)}")
        for row_no, row in enumerate(reader, start=1):
            try:
                i = int(row["chunk"])
                k = int(row["k"])
                inputs.setdefault(i, {})[k] = float(row["u"])
                if int(row["observed_flag"]):
                    level = int(row["level_index"])
                    stored = float(row["level_value"])
                    expected = float(level_values(spec, np.array([level]))[0]) if 0 <= level < spec.n_levels else None
                    if expected is None or not math.isclose(stored, expected, rel_tol=0.0, abs_tol=1e-9):
                        raise DatasetError(f"{path}: row {row_no}: level {level}={stored} does not match quantizer")
                    observed.setdefault(i, {})[k] = level
            except DatasetError:
                raise
            except (KeyError, ValueError) as exc:
                raise DatasetError(f"{path}: row {row_no}: {exc}") from exc
    if not inputs:
        raise DatasetError(f"{path}: no data rows")
    chunks: list[Chunk] = []
    for i in sorted(inputs):
        ks = sorted(inputs[i])
        if ks != list(range(1, len(ks) + 1)):
            raise DatasetError(f"{path}: chunk {i} has non-contiguous time indices")
        chunks.append(Chunk(np.array([inputs[i][k] for k in ks]), observed.get(i, {})))
    return ChunkedDataset(tuple(chunks), spec, float(eps))
