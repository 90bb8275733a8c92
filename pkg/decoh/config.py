"""Run configuration: a JSON (or YAML) document with a strict schema.

Precedence is command-line flags > config file > built-in defaults. Times are
in units of 1/ω₀ and separations in wavelengths of the reference channel,
ω₀ being the reference channel's Bohr frequency.
"""

from __future__ import annotations

import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from decoh.core_types import Z_AXIS, AtomModel, unit_vector
from decoh.errors import ConfigError
from decoh.quadrature import QuadratureSpec

COMMANDS = ("rates", "scan", "mismatch", "kernel-demo", "crosscheck")
FORMATS = ("csv", "json")
THREADS_ENV = "DECOH_THREADS"
QUADRATURE_KEYS = {"panel_factor", "gauss_order", "rel_tolerance", "max_refinements"}

SCAN_GRID = {"start": 0.0, "stop": 3.0, "step": 0.01}
CROSSCHECK_SEPARATIONS = (0.0, 0.25, 0.5, 0.715, 1.5, 5.0)
RATES_SEPARATIONS = (0.0, 0.25, 0.5, 0.715148, 1.0, 1.5, 5.0)


def _section(document: Any, name: str, allowed: set[str]) -> dict[str, Any]:
    if document is None:
        return {}
    if not isinstance(document, Mapping):
        raise ConfigError(f"{name}: expected a mapping, got {type(document).__name__}")
    unknown = set(document) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    return dict(document)


def _number(value: Any, name: str, *, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{name}: must be > 0, got {value!r}")
    return float(value)


def _count(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name}: expected an integer >= {minimum}, got {value!r}")
    return value


def separation_grid(spec: Any, name: str = "geometry.a_over_lambda") -> tuple[float, ...]:
    """A number, a list, or an inclusive {start, stop, step} range."""
    if isinstance(spec, Mapping):
        grid = _section(spec, name, {"start", "stop", "step"})
        start = _number(grid.get("start", 0.0), f"{name}.start")
        stop = _number(grid.get("stop"), f"{name}.stop")
        step = _number(grid.get("step"), f"{name}.step", positive=True)
        if stop < start:
            raise ConfigError(f"{name}: stop {stop} is below start {start}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = tuple(round(start + i * step, 12) for i in range(count))
    elif isinstance(spec, list):
        values = tuple(_number(v, name) for v in spec)
    else:
        values = (_number(spec, name),)
    if not values:
        raise ConfigError(f"{name}: grid is empty")
    if any(v < 0 for v in values):
        raise ConfigError(f"{name}: separations must be >= 0")
    return values


@dataclass(frozen=True)
class CtpSettings:
    cutoff_factor: float = 20.0
    max_duration: float = 200.0
    schedule_points: int = 8
    tail_fraction: float = 0.5
    fit_tolerance: float = 1e-3

    @classmethod
    def from_dict(cls, document: Any) -> CtpSettings:
        doc = _section(document, "ctp", {f for f in cls.__dataclass_fields__})
        base = cls()
        return cls(
            cutoff_factor=_number(doc.get("cutoff_factor", base.cutoff_factor), "ctp.cutoff_factor", positive=True),
            max_duration=_number(doc.get("max_duration", base.max_duration), "ctp.max_duration", positive=True),
            schedule_points=_count(doc.get("schedule_points", base.schedule_points), "ctp.schedule_points", 4),
            tail_fraction=_number(doc.get("tail_fraction", base.tail_fraction), "ctp.tail_fraction", positive=True),
            fit_tolerance=_number(doc.get("fit_tolerance", base.fit_tolerance), "ctp.fit_tolerance", positive=True),
        )


@dataclass(frozen=True)
class OverlapSettings:
    duration: float = 400.0
    span_fraction: float = 0.5

    @classmethod
    def from_dict(cls, document: Any) -> OverlapSettings:
        doc = _section(document, "overlap", {"duration", "span_fraction"})
        return cls(
            duration=_number(doc.get("duration", cls.duration), "overlap.duration", positive=True),
            span_fraction=_number(doc.get("span_fraction", cls.span_fraction), "overlap.span_fraction", positive=True),
        )


@dataclass(frozen=True)
class MismatchSettings:
    duration: float | None = None
    products: tuple[float, ...] = tuple(float(x) for x in np.linspace(0.0, 20.0, 41))
    a_over_lambda: float = 0.0
    mode: str = "extended"

    @classmethod
    def from_dict(cls, document: Any) -> MismatchSettings:
        doc = _section(document, "mismatch", {"duration", "x_grid", "a_over_lambda", "mode"})
        duration = doc.get("duration")
        products = cls.products
        if "x_grid" in doc:
            grid = _section(doc["x_grid"], "mismatch.x_grid", {"start", "stop", "num"})
            start = _number(grid.get("start", 0.0), "mismatch.x_grid.start")
            stop = _number(grid.get("stop"), "mismatch.x_grid.stop")
            num = _count(grid.get("num"), "mismatch.x_grid.num")
            products = tuple(float(x) for x in np.linspace(start, stop, num))
        mode = doc.get("mode", "extended")
        if mode not in ("extended", "finite"):
            raise ConfigError(f"mismatch.mode must be 'extended' or 'finite', got {mode!r}")
        return cls(
            duration=None if duration is None else _number(duration, "mismatch.duration", positive=True),
            products=products,
            a_over_lambda=_number(doc.get("a_over_lambda", 0.0), "mismatch.a_over_lambda"),
            mode=mode,
        )


@dataclass(frozen=True)
class KernelDemoSettings:
    memory_time: float = 1.0
    omega: float = 2.0
    max_duration: float = 100.0
    schedule_points: int = 8

    @classmethod
    def from_dict(cls, document: Any) -> KernelDemoSettings:
        doc = _section(document, "kernel_demo", {f for f in cls.__dataclass_fields__})
        base = cls()
        return cls(
            memory_time=_number(doc.get("memory_time", base.memory_time), "kernel_demo.memory_time", positive=True),
            omega=_number(doc.get("omega", base.omega), "kernel_demo.omega"),
            max_duration=_number(doc.get("max_duration", base.max_duration), "kernel_demo.max_duration", positive=True),
            schedule_points=_count(doc.get("schedule_points", base.schedule_points), "kernel_demo.schedule_points", 4),
        )


@dataclass(frozen=True)
class Tolerances:
    ctp: float = 2e-2
    overlap: float = 2e-2

    @classmethod
    def from_dict(cls, document: Any) -> Tolerances:
        doc = _section(document, "tolerances", {"ctp", "overlap"})
        return cls(
            ctp=_number(doc.get("ctp", cls.ctp), "tolerances.ctp", positive=True),
            overlap=_number(doc.get("overlap", cls.overlap), "tolerances.overlap", positive=True),
        )


@dataclass(frozen=True)
class RunConfig:
    command: str | None = None
    atom: AtomModel = field(default_factory=AtomModel.two_level)
    a_over_lambda: tuple[float, ...] | None = None
    axis: tuple[float, float, float] = Z_AXIS
    ctp: CtpSettings = field(default_factory=CtpSettings)
    overlap: OverlapSettings = field(default_factory=OverlapSettings)
    mismatch: MismatchSettings = field(default_factory=MismatchSettings)
    kernel_demo: KernelDemoSettings = field(default_factory=KernelDemoSettings)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output_path: str | None = None
    output_format: str | None = None

    def separations(self) -> tuple[float, ...]:
        """Configured grid, or the command's default."""
        if self.a_over_lambda is not None:
            return self.a_over_lambda
        if self.command == "scan":
            return separation_grid(SCAN_GRID)
        if self.command == "crosscheck":
            return CROSSCHECK_SEPARATIONS
        return RATES_SEPARATIONS

    @property
    def time_unit(self) -> float:
        """1/ω₀ of the reference channel."""
        return self.atom.units.time_unit

    @classmethod
    def from_dict(cls, document: Any) -> RunConfig:
        doc = _section(
            document,
            "config",
            {
                "command",
                "atom",
                "geometry",
                "ctp",
                "overlap",
                "mismatch",
                "kernel_demo",
                "quadrature",
                "tolerances",
                "output",
            },
        )
        command = doc.get("command")
        if command is not None and command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")
        geometry = _section(doc.get("geometry"), "geometry", {"a_over_lambda", "axis"})
        output = _section(doc.get("output"), "output", {"path", "format"})
        if output.get("format") not in (None, *FORMATS):
            raise ConfigError(f"output.format must be one of {FORMATS}, got {output['format']!r}")
        atom = AtomModel.two_level()
        if "atom" in doc:
            atom = AtomModel.from_dict(_section(doc["atom"], "atom", {"channels"}))
        try:
            axis = tuple(float(x) for x in unit_vector(geometry.get("axis", Z_AXIS)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"geometry.axis: {exc}") from exc
        quadrature = QuadratureSpec.from_dict(_section(doc.get("quadrature"), "quadrature", QUADRATURE_KEYS))
        return cls(
            command=command,
            atom=atom,
            a_over_lambda=separation_grid(geometry["a_over_lambda"]) if "a_over_lambda" in geometry else None,
            axis=axis,
            ctp=CtpSettings.from_dict(doc.get("ctp")),
            overlap=OverlapSettings.from_dict(doc.get("overlap")),
            mismatch=MismatchSettings.from_dict(doc.get("mismatch")),
            kernel_demo=KernelDemoSettings.from_dict(doc.get("kernel_demo")),
            quadrature=quadrature,
            tolerances=Tolerances.from_dict(doc.get("tolerances")),
            output_path=output.get("path"),
            output_format=output.get("format"),
        )


def load_config(path: str | Path) -> RunConfig:
    try:
        document = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid JSON/YAML: {exc}") from exc
    return RunConfig.from_dict(document)


def resolve_workers(flag: int | None) -> int:
    """--threads, else $DECOH_THREADS, else 1."""
    if flag is not None:
        workers = flag
    else:
        raw = os.environ.get(THREADS_ENV)
        if raw is None or raw.strip() == "":
            return 1
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    return workers


def apply_overrides(
    config: RunConfig,
    *,
    command: str | None = None,
    out: str | None = None,
    output_format: str | None = None,
    tolerance: float | None = None,
    workers: int = 1,
) -> RunConfig:
    changes: dict[str, Any] = {"quadrature": config.quadrature.with_workers(workers)}
    if command is not None:
        changes["command"] = command
    if out is not None:
        changes["output_path"] = out
    if output_format is not None:
        changes["output_format"] = output_format
    if tolerance is not None:
        if not tolerance > 0:
            raise ConfigError(f"--tolerance must be > 0, got {tolerance}")
        changes["tolerances"] = Tolerances(ctp=tolerance, overlap=tolerance)
    return replace(config, **changes)
