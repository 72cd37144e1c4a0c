"""Run configuration: KEY = VALUE files with [section] headers, SYSID_* environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Mapping

from admm_solver import MODE_L1, MODE_LP, TERMINATION_BUDGET, TERMINATION_RESIDUAL, SolverConfig
from dataset import DatasetConfig
from epigraph_prox import PExponent, ProxError
from pole_grid import DEFAULT_POINTS_PER_RADIUS, DEFAULT_RADII, GridConfig, GridError
from quantizer import QuantizerError, QuantizerSpec, make_uniform

ENV_PREFIX = "SYSID_"
SOURCES = ("synthetic", "series", "dataset_csv")
MODE_CHOICES = ("lp", "l1", "both")
TERMINATIONS = (TERMINATION_RESIDUAL, TERMINATION_BUDGET)


class ConfigError(RuntimeError):
    pass


def _parse_config_file(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    try:
        data = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    section = ""
    for lineno, raw_line in enumerate(data.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected KEY = VALUE")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        value = value.strip()
        if value and len(value) >= 2 and value[0] == value[-1] and value[0] in {'"', "'"}:
            value = value[1:-1]
        values[f"{section}.{key}" if section and "." not in key else key] = value
    return values


def _env_overrides(environ: Mapping[str, str]) -> Dict[str, str]:
    """SYSID_SOLVER__RHO=50 -> solver.rho = 50."""
    out: Dict[str, str] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX) :].split("__", 1)
        out[f"{section.lower()}.{key.lower()}"] = value.strip()
    return out


def _float(key: str, raw: str, *, positive: bool = False, nonneg: bool = False) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from exc
    if positive and not value > 0:
        raise ConfigError(f"{key} must be a positive number")
    if nonneg and not value >= 0:
        raise ConfigError(f"{key} must be a nonnegative number")
    return value


def _int(key: str, raw: str, *, minimum: int | None = None) -> int:
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return value


def _flag(key: str, raw: str) -> bool:
    return raw.strip().lower() not in ("0", "false", "no", "off")


def _float_list(key: str, raw: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"{key} must be a nonempty list of numbers")
    return tuple(_float(key, p) for p in parts)


def _int_list(key: str, raw: str) -> tuple[int, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"{key} must be a nonempty list of integers")
    return tuple(_int(key, p, minimum=1) for p in parts)


def _choice(choices: tuple[str, ...]) -> Callable[[str, str], str]:
    def parse(key: str, raw: str) -> str:
        value = raw.strip().lower()
        if value not in choices:
            raise ConfigError(f"{key} must be one of {', '.join(choices)}, got {raw!r}")
        return value

    return parse


def _optional(parser: Callable[[str, str], Any]) -> Callable[[str, str], Any]:
    def parse(key: str, raw: str) -> Any:
        if raw.strip().lower() in ("", "none", "null"):
            return None
        return parser(key, raw)

    return parse


def _text(key: str, raw: str) -> str:
    return raw


def _exponent(key: str, raw: str) -> PExponent:
    try:
        return PExponent.from_string(raw)
    except ProxError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _points(key: str, raw: str) -> int | tuple[int, ...]:
    values = _int_list(key, raw)
    return values[0] if len(values) == 1 else values


_POS = dict(positive=True)

# dotted key -> (parser, default as text)
KEYS: dict[str, tuple[Callable[[str, str], Any], str]] = {
    "grid.radii": (_float_list, " ".join(str(r) for r in DEFAULT_RADII)),
    "grid.points_per_radius": (_points, " ".join(str(c) for c in DEFAULT_POINTS_PER_RADIUS)),
    "grid.include_real_axis": (_flag, "1"),
    "quantizer.bits": (lambda k, r: _int(k, r, minimum=1), "3"),
    "quantizer.saturation": (lambda k, r: _float(k, r, **_POS), "3.0"),
    "quantizer.step": (_optional(lambda k, r: _float(k, r, **_POS)), ""),
    "data.source": (_choice(SOURCES), "synthetic"),
    "data.path": (_optional(_text), ""),
    "data.n_chunks": (lambda k, r: _int(k, r, minimum=1), "4"),
    "data.chunk_len": (lambda k, r: _int(k, r, minimum=1), "50"),
    "data.max_chunks": (_optional(lambda k, r: _int(k, r, minimum=1)), ""),
    "data.input_bound": (lambda k, r: _float(k, r, **_POS), "5.0"),
    "data.noise_bound": (lambda k, r: _float(k, r, nonneg=True), "0.25"),
    "data.missing_fraction": (lambda k, r: _float(k, r, nonneg=True), "0.1"),
    "data.order": (lambda k, r: _int(k, r, minimum=1), "10"),
    "data.init_sigma": (lambda k, r: _float(k, r, nonneg=True), "0.01"),
    "solver.p": (_exponent, "1/2"),
    "solver.rho": (lambda k, r: _float(k, r, **_POS), "20"),
    "solver.max_outer": (lambda k, r: _int(k, r, minimum=1), "100"),
    "solver.stop_tol": (lambda k, r: _float(k, r, **_POS), "0.01"),
    "solver.eps_bar": (lambda k, r: _float(k, r, **_POS), "0.001"),
    "solver.tol_inner": (lambda k, r: _float(k, r, **_POS), "1e-6"),
    "solver.max_inner": (lambda k, r: _int(k, r, minimum=1), "2000"),
    "solver.inner_sigma": (lambda k, r: _float(k, r, **_POS), "1.0"),
    "solver.init_sigma": (lambda k, r: _float(k, r, nonneg=True), "0.1"),
    "solver.scale_zero_state": (_flag, "1"),
    "solver.termination": (_choice(TERMINATIONS), TERMINATION_RESIDUAL),
    "experiment.orders": (_int_list, "10"),
    "experiment.systems_per_order": (lambda k, r: _int(k, r, minimum=1), "50"),
    "experiment.eps_values": (_optional(_float_list), ""),
    "experiment.eps_min": (lambda k, r: _float(k, r, **_POS), "0.01"),
    "experiment.eps_max": (lambda k, r: _float(k, r, **_POS), "1.0"),
    "experiment.eps_count": (lambda k, r: _int(k, r, minimum=1), "12"),
    "run.seed": (lambda k, r: _int(k, r, minimum=0), "0"),
    "run.mode": (_choice(MODE_CHOICES), "both"),
    "run.out": (_text, "out"),
    "run.workers": (lambda k, r: _int(k, r, minimum=1), "1"),
}

# recorded series: 20 chunks of 50 samples through a 2-bit sensor on +-0.7, stiffer penalty
SOURCE_DEFAULTS: dict[str, dict[str, str]] = {
    "series": {
        "quantizer.bits": "2",
        "quantizer.saturation": "0.7",
        "data.chunk_len": "50",
        "data.max_chunks": "20",
        "solver.rho": "50",
    },
}


@dataclass(frozen=True)
class QuantizerSettings:
    bits: int = 3
    saturation: float = 3.0
    step: float | None = None

    def build(self) -> QuantizerSpec:
        return make_uniform(self.bits, self.saturation, self.step)


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    n_chunks: int = 4
    chunk_len: int = 50
    max_chunks: int | None = None
    input_bound: float = 5.0
    noise_bound: float = 0.25
    missing_fraction: float = 0.1
    order: int = 10
    init_sigma: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    orders: tuple[int, ...] = (10,)
    systems_per_order: int = 50
    eps_values: tuple[float, ...] | None = None
    eps_min: float = 0.01
    eps_max: float = 1.0
    eps_count: int = 12


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig
    quantizer: QuantizerSettings
    data: DataConfig
    solver: SolverConfig
    experiment: ExperimentConfig
    seed: int = 0
    mode: str = "both"
    out: Path = Path("out")
    workers: int = 1
    echo: Mapping[str, Any] = field(default_factory=dict, repr=False)

    @property
    def modes(self) -> tuple[str, ...]:
        return (MODE_LP, MODE_L1) if self.mode == "both" else (self.mode,)

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(
            n_chunks=self.data.n_chunks,
            chunk_len=self.data.chunk_len,
            input_bound=self.data.input_bound,
            noise_bound=self.data.noise_bound,
            missing_fraction=self.data.missing_fraction,
            bits=self.quantizer.bits,
            saturation=self.quantizer.saturation,
            step=self.quantizer.step,
            order=self.data.order,
            init_sigma=self.data.init_sigma,
        )


def _echo_value(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_echo_value(v) for v in value]
    if isinstance(value, PExponent):
        return str(value)
    return value


def load_config(
    path: Path | None = None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping[str, str] | None = None,
) -> RunConfig:
    """Defaults < per-source defaults < config file < SYSID_<SECTION>__<KEY> environment < explicit overrides."""
    raw: Dict[str, str] = {key: default for key, (_, default) in KEYS.items()}
    layers = []
    if path is not None:
        layers.append(_parse_config_file(Path(path)))
    layers.append(_env_overrides(os.environ if environ is None else environ))
    layers.append(dict(overrides or {}))
    explicit: Dict[str, str] = {}
    for layer in layers:
        for key, value in layer.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key}")
            explicit[key] = value
    raw.update(SOURCE_DEFAULTS.get(explicit.get("data.source", raw["data.source"]).strip().lower(), {}))
    raw.update(explicit)

    values = {key: KEYS[key][0](key, raw[key]) for key in KEYS}

    if not values["data.missing_fraction"] < 1.0:
        raise ConfigError("data.missing_fraction must lie in [0, 1)")
    if values["data.source"] != "synthetic" and not values["data.path"]:
        raise ConfigError(f"data.path is required when data.source = {values['data.source']}")
    if values["experiment.eps_min"] > values["experiment.eps_max"]:
        raise ConfigError("experiment.eps_min must not exceed experiment.eps_max")
    eps_values = values["experiment.eps_values"]
    if eps_values is not None and (any(e <= 0 for e in eps_values) or list(eps_values) != sorted(eps_values)):
        raise ConfigError("experiment.eps_values must be positive and sorted ascending")

    try:
        grid = GridConfig(values["grid.radii"], values["grid.points_per_radius"], values["grid.include_real_axis"])
        grid.counts()
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from exc
    for radius in grid.radii:
        if not 0.0 < radius <= 1.0:
            raise ConfigError(f"grid.radii entries must lie in (0, 1], got {radius}")

    quant = QuantizerSettings(values["quantizer.bits"], values["quantizer.saturation"], values["quantizer.step"])
    try:
        quant.build()
    except QuantizerError as exc:
        raise ConfigError(f"quantizer: {exc}") from exc

    data = DataConfig(
        source=values["data.source"],
        path=values["data.path"],
        n_chunks=values["data.n_chunks"],
        chunk_len=values["data.chunk_len"],
        max_chunks=values["data.max_chunks"],
        input_bound=values["data.input_bound"],
        noise_bound=values["data.noise_bound"],
        missing_fraction=values["data.missing_fraction"],
        order=values["data.order"],
        init_sigma=values["data.init_sigma"],
    )
    solver = SolverConfig(
        p=values["solver.p"],
        rho=values["solver.rho"],
        max_outer=values["solver.max_outer"],
        stop_tol=values["solver.stop_tol"],
        eps_bar=values["solver.eps_bar"],
        tol_inner=values["solver.tol_inner"],
        max_inner=values["solver.max_inner"],
        inner_sigma=values["solver.inner_sigma"],
        init_sigma=values["solver.init_sigma"],
        seed=values["run.seed"],
        scale_zero_state=values["solver.scale_zero_state"],
        termination=values["solver.termination"],
    )
    if values["run.mode"] in ("lp", "both") and solver.p.is_l1:
        raise ConfigError("solver.p must be below 1 when run.mode includes lp")
    experiment = ExperimentConfig(
        orders=values["experiment.orders"],
        systems_per_order=values["experiment.systems_per_order"],
        eps_values=eps_values,
        eps_min=values["experiment.eps_min"],
        eps_max=values["experiment.eps_max"],
        eps_count=values["experiment.eps_count"],
    )
    echo = {key: _echo_value(values[key]) for key in sorted(KEYS)}
    return RunConfig(
        grid=grid,
        quantizer=quant,
        data=data,
        solver=solver,
        experiment=experiment,
        seed=values["run.seed"],
        mode=values["run.mode"],
        out=Path(values["run.out"]),
        workers=values["run.workers"],
        echo=echo,
    )
