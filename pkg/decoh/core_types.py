"""Shared domain types and natural-unit conventions (ħ = c = 1).

All types are immutable after construction. Arrays held by sampled paths are
marked read-only so instances can be shared across worker threads.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Union

import numpy as np

from decoh.errors import (
    ConfigError,
    EmptyChannelList,
    InvalidPath,
    NegativeDipoleStrength,
    NegativeLocalRate,
    NegativeSeparation,
    NonPositiveDuration,
    NonPositiveFrequency,
)

Z_AXIS = (0.0, 0.0, 1.0)

# Roundoff tolerance below zero accepted for a local rate before it is rejected.
LOCAL_RATE_FLOOR = 1e-14


def _check_keys(document: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(document) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class UnitSystem:
    """Reference frequency ω₀ in which every other frequency is expressed."""

    reference_frequency: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.reference_frequency) and self.reference_frequency > 0):
            raise NonPositiveFrequency(f"reference frequency must be > 0, got {self.reference_frequency}")

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.reference_frequency

    @property
    def time_unit(self) -> float:
        return 1.0 / self.reference_frequency

    def rate_in_reference(self, rate: float) -> float:
        return rate / self.reference_frequency

    def length_in_wavelengths(self, length: float) -> float:
        return length / self.wavelength

    def length_from_wavelengths(self, a_over_lambda: float) -> float:
        return a_over_lambda * self.wavelength


@dataclass(frozen=True)
class Channel:
    """One decay channel e -> s of the excited atom."""

    label: str
    bohr_frequency: float
    dipole_strength: float

    @cached_property
    def partial_rate(self) -> float:
        """Γ_es = ω_es³|d_s|²/(6π)."""
        return self.bohr_frequency**3 * self.dipole_strength / (6 * math.pi)

    @cached_property
    def wavelength(self) -> float:
        return 2 * math.pi / self.bohr_frequency

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "bohr_frequency": self.bohr_frequency, "dipole_strength": self.dipole_strength}

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> Channel:
        _check_keys(document, {"label", "bohr_frequency", "dipole_strength"}, "channel")
        try:
            return cls(
                label=str(document.get("label", "e->g")),
                bohr_frequency=float(document["bohr_frequency"]),
                dipole_strength=float(document.get("dipole_strength", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"channel: invalid entry {dict(document)!r}: {exc}") from exc


@dataclass(frozen=True)
class AtomModel:
    channels: tuple[Channel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def two_level(cls, bohr_frequency: float = 1.0, dipole_strength: float = 1.0) -> AtomModel:
        return cls((Channel("e->g", bohr_frequency, dipole_strength),))

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.bohr_frequency for c in self.channels])

    @property
    def dipole_strengths(self) -> np.ndarray:
        return np.array([c.dipole_strength for c in self.channels])

    @property
    def partial_rates(self) -> np.ndarray:
        return np.array([c.partial_rate for c in self.channels])

    @property
    def max_frequency(self) -> float:
        return max(c.bohr_frequency for c in self.channels)

    @property
    def min_frequency(self) -> float:
        return min(c.bohr_frequency for c in self.channels)

    @property
    def reference(self) -> Channel:
        """First channel; its wavelength is the length unit of scans."""
        return self.channels[0]

    @property
    def units(self) -> UnitSystem:
        return UnitSystem(self.reference.bohr_frequency)

    def with_frequencies(self, frequencies: Sequence[float]) -> AtomModel:
        """Same channels and dipole strengths, new Bohr frequencies."""
        if len(frequencies) != len(self.channels):
            raise ConfigError(f"expected {len(self.channels)} frequencies, got {len(frequencies)}")
        return AtomModel(
            tuple(Channel(c.label, float(w), c.dipole_strength) for c, w in zip(self.channels, frequencies))
        )

    def to_dict(self) -> dict[str, Any]:
        return {"channels": [c.to_dict() for c in self.channels]}

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> AtomModel:
        _check_keys(document, {"channels"}, "atom")
        channels = document.get("channels")
        if not isinstance(channels, list):
            raise ConfigError("atom: 'channels' must be a list")
        return validate_atom(cls(tuple(Channel.from_dict(c) for c in channels)))


def validate_atom(model: AtomModel) -> AtomModel:
    """Reject unphysical channels and precompute Γ_es and λ_es."""
    if not model.channels:
        raise EmptyChannelList("atom model needs at least one decay channel")
    for channel in model.channels:
        if not (math.isfinite(channel.bohr_frequency) and channel.bohr_frequency > 0):
            raise NonPositiveFrequency(
                f"channel {channel.label!r}: Bohr frequency must be > 0, got {channel.bohr_frequency}"
            )
        if not (math.isfinite(channel.dipole_strength) and channel.dipole_strength >= 0):
            raise NegativeDipoleStrength(
                f"channel {channel.label!r}: dipole strength must be >= 0, got {channel.dipole_strength}"
            )
        _ = (channel.partial_rate, channel.wavelength)
    return model


@dataclass(frozen=True)
class ConstantPath:
    position: tuple[float, float, float]

    def __post_init__(self) -> None:
        position = tuple(float(x) for x in self.position)
        if len(position) != 3 or not all(math.isfinite(x) for x in position):
            raise InvalidPath(f"constant path needs a finite 3-vector, got {self.position!r}")
        object.__setattr__(self, "position", position)

    @property
    def resolution(self) -> float:
        return math.inf

    def at(self, t: np.ndarray | float) -> np.ndarray:
        """Positions at times t, shape t.shape + (3,) (a broadcast view)."""
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(np.asarray(self.position), t.shape + (3,))

    def restrict(self, duration: float) -> ConstantPath:
        return self

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "constant", "position": list(self.position)}


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Trajectory sampled on [0, duration], linearly interpolated between nodes."""

    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        positions = np.array(self.positions, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidPath("sampled path needs at least two sample times")
        if times[0] != 0.0:
            raise InvalidPath(f"sampled path must start at t=0, got {times[0]}")
        if not np.all(np.diff(times) > 0):
            raise InvalidPath("sample times must be strictly increasing")
        if positions.shape != (times.size, 3):
            raise InvalidPath(f"positions must have shape ({times.size}, 3), got {positions.shape}")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(positions))):
            raise InvalidPath("sampled path contains non-finite values")
        times.flags.writeable = False
        positions.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def resolution(self) -> float:
        return float(np.min(np.diff(self.times)))

    def at(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, k]) for k in range(3)], axis=-1)

    def restrict(self, duration: float) -> SampledPath:
        """The same trajectory cut at `duration`, ending on an interpolated node."""
        if duration > self.duration * (1 + 1e-12):
            raise InvalidPath(f"cannot extend sampled path of duration {self.duration} to {duration}")
        if duration >= self.duration:
            return self
        keep = self.times < duration
        times = np.append(self.times[keep], duration)
        positions = np.vstack([self.positions[keep], self.at(duration)])
        return SampledPath(times, positions)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "sampled", "times": self.times.tolist(), "positions": self.positions.tolist()}


Path = Union[ConstantPath, SampledPath]


def path_from_dict(document: Mapping[str, Any]) -> Path:
    kind = document.get("kind")
    if kind == "constant":
        _check_keys(document, {"kind", "position"}, "constant path")
        return ConstantPath(tuple(document["position"]))
    if kind == "sampled":
        _check_keys(document, {"kind", "times", "positions"}, "sampled path")
        return SampledPath(np.asarray(document["times"]), np.asarray(document["positions"]))
    raise ConfigError(f"path: unknown kind {kind!r}")


@dataclass(frozen=True)
class PathPair:
    path1: Path
    path2: Path
    duration: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise NonPositiveDuration(f"Δt must be > 0, got {self.duration}")
        for path in (self.path1, self.path2):
            if isinstance(path, SampledPath) and not math.isclose(path.duration, self.duration, rel_tol=1e-12):
                raise InvalidPath(f"sampled path covers [0, {path.duration}], pair needs [0, {self.duration}]")

    @property
    def is_static(self) -> bool:
        return isinstance(self.path1, ConstantPath) and isinstance(self.path2, ConstantPath)

    @property
    def resolution(self) -> float:
        return min(self.path1.resolution, self.path2.resolution)

    def swapped(self) -> PathPair:
        return PathPair(self.path2, self.path1, self.duration)

    def to_dict(self) -> dict[str, Any]:
        return {"path1": self.path1.to_dict(), "path2": self.path2.to_dict(), "duration": self.duration}

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> PathPair:
        _check_keys(document, {"path1", "path2", "duration"}, "path pair")
        return cls(path_from_dict(document["path1"]), path_from_dict(document["path2"]), float(document["duration"]))


def unit_vector(axis: Sequence[float]) -> np.ndarray:
    vector = np.asarray(axis, dtype=float)
    norm = float(np.linalg.norm(vector))
    if vector.shape != (3,) or norm == 0 or not math.isfinite(norm):
        raise InvalidPath(f"axis must be a non-zero 3-vector, got {axis!r}")
    return vector / norm


def double_well_pair(a: float, duration: float, axis: Sequence[float] = Z_AXIS) -> PathPair:
    """Constant paths at ±a/2 along `axis`, both held for `duration`."""
    if not a >= 0:
        raise NegativeSeparation(f"well separation must be >= 0, got {a}")
    half = 0.5 * a * unit_vector(axis)
    return PathPair(ConstantPath(tuple(half)), ConstantPath(tuple(-half)), duration)


@dataclass(frozen=True)
class RateReport:
    """Local, nonlocal and total stationary rates plus numerical diagnostics."""

    gamma_local: float
    gamma_nonlocal: float
    diagnostics: Mapping[str, Any] = field(default_factory=dict, compare=False)
    gamma_total: float = field(init=False)

    def __post_init__(self) -> None:
        local = float(self.gamma_local)
        if local < 0:
            if local < -LOCAL_RATE_FLOOR:
                raise NegativeLocalRate(f"local rate must be >= 0, got {local}")
            local = 0.0
        nonlocal_ = float(self.gamma_nonlocal)
        object.__setattr__(self, "gamma_local", local)
        object.__setattr__(self, "gamma_nonlocal", nonlocal_)
        object.__setattr__(self, "gamma_total", local + nonlocal_)

    @property
    def ratio(self) -> float:
        """Γ/Γ_L, NaN when the local rate vanishes."""
        return self.gamma_total / self.gamma_local if self.gamma_local > 0 else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_local": self.gamma_local,
            "gamma_nonlocal": self.gamma_nonlocal,
            "gamma_total": self.gamma_total,
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> RateReport:
        _check_keys(document, {"gamma_local", "gamma_nonlocal", "gamma_total", "diagnostics"}, "rate report")
        return cls(
            float(document["gamma_local"]), float(document["gamma_nonlocal"]), dict(document.get("diagnostics", {}))
        )
