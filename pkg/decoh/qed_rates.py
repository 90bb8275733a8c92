"""Decoherence of an excited atom split between two wells, coupled to the vacuum field.

Closed form: Γ_L = γ = Σ_s Γ_es and Γ_NL(a) = −Σ_s Γ_es·sinc(ω_es·a). The
same rates follow numerically from the closed-time-path functionals with the
kernels built by `build_qed_kernels`.

Field correlations carry an exponential cutoff e^{−ω/Λ}. Each dipole channel
is renormalized on shell by e^{+ω_es/Λ}, so stationary rates do not depend
on Λ; only finite-Δt transients do.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, TextIO

import numpy as np
from opentelemetry import trace

from decoh.core_types import Z_AXIS, AtomModel, Channel, RateReport, double_well_pair, validate_atom
from decoh.ctp_functional import CorrelationKernel, stationary_rates
from decoh.errors import ConfigError, InvalidCutoff, NegativeSeparation, ValidationError
from decoh.quadrature import DEFAULT_SPEC, QuadratureSpec, find_root_tan_x_eq_x

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

SINC_SERIES_THRESHOLD = 1e-4
DEFAULT_CUTOFF_FACTOR = 20.0
DEFAULT_DURATION_FACTOR = 200.0
DEFAULT_SCHEDULE_POINTS = 8

# Mode density per unit ω after the polarization sum and angular integral,
# ρ(ω) = ω³/(4π²); it fixes Γ_es = ω³|d|²/(6π).
MODE_DENSITY = 1.0 / (4.0 * math.pi**2)

CSV_HEADER = ("a_over_lambda", "gamma_L", "gamma_NL", "gamma_total", "ratio")


def sinc(x: Any) -> Any:
    """sin(x)/x with sinc(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SINC_SERIES_THRESHOLD
    safe = np.where(small, 1.0, x)
    value = np.where(small, 1.0 - x**2 / 6.0 + x**4 / 120.0, np.sin(safe) / safe)
    return float(value) if value.ndim == 0 else value


def mode_density(omega: Any) -> Any:
    return MODE_DENSITY * np.asarray(omega, dtype=float) ** 3


def gamma_spontaneous(atom: AtomModel) -> float:
    """γ = Σ_s Γ_es, which is also the local rate Γ_L."""
    validate_atom(atom)
    return math.fsum(c.partial_rate for c in atom.channels)


def gamma_nl_closed_form(atom: AtomModel, a: float) -> float:
    """−Σ_s Γ_es·sinc(2πa/λ_es) for wells a apart."""
    if not a >= 0:
        raise NegativeSeparation(f"well separation must be >= 0, got {a}")
    validate_atom(atom)
    return -math.fsum(c.partial_rate * sinc(c.bohr_frequency * a) for c in atom.channels)


def total_rate(atom: AtomModel, a: float) -> RateReport:
    return RateReport(
        gamma_spontaneous(atom), gamma_nl_closed_form(atom, a), {"route": "closed_form", "separation": a}
    )


def overshoot_point(channel: Channel) -> tuple[float, float]:
    """Separation (in λ_es) and Γ/Γ_L at the first maximum of the single-channel ratio.

    The maximum of 1 − sinc(x) sits at the first positive root of tan x = x.
    """
    x = find_root_tan_x_eq_x((math.pi, 1.5 * math.pi))
    return x / (2 * math.pi), 1.0 - sinc(x)


@dataclass(frozen=True)
class SeparationScan:
    """Closed-form rates along a grid of separations, in wavelengths of the reference channel."""

    a_over_lambda: tuple[float, ...]
    reports: tuple[RateReport, ...]
    reference_wavelength: float

    def rows(self) -> list[tuple[float, float, float, float, float]]:
        return [
            (a, r.gamma_local, r.gamma_nonlocal, r.gamma_total, r.ratio)
            for a, r in zip(self.a_over_lambda, self.reports)
        ]

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows():
            writer.writerow([format_float(v) for v in row])

    @classmethod
    def read_csv(cls, stream: TextIO, reference_wavelength: float = 2 * math.pi) -> SeparationScan:
        reader = csv.reader(stream)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ConfigError(f"separation scan CSV: unexpected header {header!r}")
        a_values, reports = [], []
        for row in reader:
            a, local, nonlocal_ = (float(v) for v in row[:3])
            a_values.append(a)
            reports.append(RateReport(local, nonlocal_, {"route": "closed_form"}))
        return cls(tuple(a_values), tuple(reports), reference_wavelength)


def format_float(value: float) -> str:
    """12 significant digits, the precision of every emitted table."""
    return f"{value:.12g}"


def scan_separation(atom: AtomModel, a_grid: Sequence[float]) -> SeparationScan:
    """Closed-form rates for separations given in wavelengths of the reference channel."""
    validate_atom(atom)
    grid = tuple(float(a) for a in a_grid)
    if not grid:
        raise ValidationError("separation grid is empty")
    units = atom.units
    with tracer.start_as_current_span("qed.scan_separation") as span:
        span.set_attribute("qed.points", len(grid))
        reports = tuple(total_rate(atom, units.length_from_wavelengths(a)) for a in grid)
    return SeparationScan(grid, reports, units.wavelength)


def vacuum_field_wightman(tau: Any, separation: Any, cutoff: float) -> Any:
    """Σ_i⟨E_i(t, r)E_i(t′, r′)⟩ for τ = t − t′ and R = |r − r′|.

    Closed form of ∫dω ρ(ω)·sinc(ωR)·e^{−ω/Λ}·e^{−iωτ}; a series branch
    covers R ≪ |1/Λ + iτ|.
    """
    tau = np.asarray(tau, dtype=float)
    separation = np.asarray(separation, dtype=float)
    p = 1.0 / cutoff + 1j * tau
    small = separation < SINC_SERIES_THRESHOLD * np.abs(p)
    r = np.where(small, 1.0, separation)
    general = (-1j / r) * ((p - 1j * r) ** -3 - (p + 1j * r) ** -3)
    series = 6.0 / p**4 - 20.0 * separation**2 / p**6
    return MODE_DENSITY * np.where(small, series, general)


def resolve_cutoff(atom: AtomModel, cutoff: float | None = None, cutoff_factor: float = DEFAULT_CUTOFF_FACTOR) -> float:
    value = cutoff_factor * atom.max_frequency if cutoff is None else cutoff
    if not (math.isfinite(value) and value > atom.max_frequency):
        raise InvalidCutoff(f"cutoff Λ must be finite and exceed the largest Bohr frequency, got {value}")
    if value < DEFAULT_CUTOFF_FACTOR * atom.max_frequency:
        logger.warning("cutoff Λ=%g is below %g·max ω; transients converge slowly", value, DEFAULT_CUTOFF_FACTOR)
    return value


def build_qed_kernels(
    atom: AtomModel, cutoff: float | None = None, *, cutoff_factor: float = DEFAULT_CUTOFF_FACTOR
) -> tuple[CorrelationKernel, CorrelationKernel]:
    """Dipole (q) and vacuum field (X) kernels for `ctp_functional`.

    ⟨e|d_i(t)d_j(t′)|e⟩ = (δ_ij/3)·Σ_s |d_s|²·e^{iω_es τ} and
    ⟨E_i E_j⟩ = (δ_ij/3)·Σ_k⟨E_k E_k⟩, both isotropic.
    """
    validate_atom(atom)
    cutoff = resolve_cutoff(atom, cutoff, cutoff_factor)
    frequencies = atom.frequencies
    weights = atom.dipole_strengths * np.exp(frequencies / cutoff) / 3.0

    def dipole(t, t2, r, r2):
        tau = np.asarray(t - t2)
        return sum(w * np.exp(1j * omega * tau) for w, omega in zip(weights, frequencies))

    def field(t, t2, r, r2):
        distance = np.linalg.norm(np.asarray(r) - np.asarray(r2), axis=-1)
        return vacuum_field_wightman(t - t2, distance, cutoff) / 3.0

    kq = CorrelationKernel.from_wightman(
        dipole, 3, math.inf, max_frequency=atom.max_frequency, horizon=math.inf, isotropic=True, stationary=True
    )
    kx = CorrelationKernel.from_wightman(
        field, 3, 1.0 / cutoff, horizon=math.inf, isotropic=True, stationary=True
    )
    return kq, kx


def default_schedule(max_duration: float, points: int = DEFAULT_SCHEDULE_POINTS) -> list[float]:
    """Evenly spaced Δt values on [max_duration/2, max_duration]."""
    return [float(dt) for dt in np.linspace(0.5 * max_duration, max_duration, points)]


def ctp_rates(
    atom: AtomModel,
    a: float,
    *,
    cutoff: float | None = None,
    schedule: Sequence[float] | None = None,
    quad: QuadratureSpec = DEFAULT_SPEC,
    axis: Sequence[float] = Z_AXIS,
    **options: Any,
) -> RateReport:
    """Double-well rates from the closed-time-path functionals of the QED kernels."""
    validate_atom(atom)
    cutoff = resolve_cutoff(atom, cutoff)
    if schedule is None:
        schedule = default_schedule(DEFAULT_DURATION_FACTOR / atom.min_frequency)
    kq, kx = build_qed_kernels(atom, cutoff)
    with tracer.start_as_current_span("qed.ctp_rates") as span:
        span.set_attribute("qed.separation", a)
        span.set_attribute("qed.cutoff", cutoff)
        report = stationary_rates(kq, kx, lambda dt: double_well_pair(a, dt, axis), schedule, quad, **options)
    return RateReport(
        report.gamma_local,
        report.gamma_nonlocal,
        {**report.diagnostics, "separation": a, "cutoff": cutoff},
    )
