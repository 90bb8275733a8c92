"""Nonlocal rate when the two wells light-shift the Bohr frequencies differently.

With ω± in the two wells, t_m = (t+t′)/2 and τ = t − t′ the nonlocal
functional becomes

    S_NL = −Re Σ_s (κ_s|d_s|²/3) ∫∫ e^{−iδω_s t_m}·e^{iω̄_s τ}·F(τ, a) dt_m dτ

over the square [0, Δt]². Extending the τ integral to infinity factorizes it
into a resonant overlap at the mean frequency ω̄_s and a window over t_m,
which gives Γ_NL = −Σ_s γ̄_s·sinc(ω̄_s a)·sinc(δω_s Δt). The sinc(δωΔt)
factor is derived here from the t_m window; it is used as an oracle.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, TextIO

import numpy as np
from opentelemetry import trace

from decoh.core_types import Z_AXIS, AtomModel, validate_atom
from decoh.errors import ConfigError, NegativeSeparation, NonPositiveDuration, NonPositiveFrequency
from decoh.overlap_view import DEFAULT_SPAN_FRACTION, ModeGrid, overlap_rate, perturb_env_state
from decoh.qed_rates import format_float, gamma_spontaneous, resolve_cutoff, sinc, vacuum_field_wightman
from decoh.quadrature import DEFAULT_SPEC, QuadratureSpec, integrate_1d, integrate_2d_rotated

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

# The resonant τ integral runs over |τ| ≤ a + RESONANT_TAIL/ω̄; F decays like τ⁻⁴ beyond the light cone.
RESONANT_TAIL = 200.0
CSV_HEADER = ("d_omega_dt", "ratio")

Mode = Literal["extended", "finite"]


@dataclass(frozen=True)
class ShiftedAtomPair:
    """The same atom in two wells with Bohr frequencies ω⁺ and ω⁻ per channel."""

    base: AtomModel
    plus: tuple[float, ...]
    minus: tuple[float, ...]

    def __post_init__(self) -> None:
        validate_atom(self.base)
        plus = tuple(float(w) for w in self.plus)
        minus = tuple(float(w) for w in self.minus)
        if not len(plus) == len(minus) == len(self.base.channels):
            raise ConfigError(f"need {len(self.base.channels)} frequencies per well, got {len(plus)} and {len(minus)}")
        for w in plus + minus:
            if not (math.isfinite(w) and w > 0):
                raise NonPositiveFrequency(f"shifted Bohr frequency must be > 0, got {w}")
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @classmethod
    def symmetric(cls, base: AtomModel, shifts: Sequence[float] | float) -> ShiftedAtomPair:
        """ω± = ω ± δω/2 around the base frequencies."""
        deltas = np.broadcast_to(np.asarray(shifts, dtype=float), (len(base.channels),))
        return cls(base, tuple(base.frequencies + 0.5 * deltas), tuple(base.frequencies - 0.5 * deltas))

    @property
    def detunings(self) -> tuple[float, ...]:
        return tuple(p - m for p, m in zip(self.plus, self.minus))

    @property
    def mean_frequencies(self) -> tuple[float, ...]:
        return tuple(0.5 * (p + m) for p, m in zip(self.plus, self.minus))

    @property
    def plus_atom(self) -> AtomModel:
        return self.base.with_frequencies(self.plus)

    @property
    def minus_atom(self) -> AtomModel:
        return self.base.with_frequencies(self.minus)

    @property
    def mean_atom(self) -> AtomModel:
        return self.base.with_frequencies(self.mean_frequencies)


def gamma_l_mismatch(pair: ShiftedAtomPair) -> float:
    """½(Γ_L⁺ + Γ_L⁻)."""
    return 0.5 * (gamma_spontaneous(pair.plus_atom) + gamma_spontaneous(pair.minus_atom))


def reference_rate(pair: ShiftedAtomPair) -> float:
    """γ̄: the spontaneous rate at the mean frequencies."""
    return gamma_spontaneous(pair.mean_atom)


def window_suppression(x: float) -> float:
    """Re of the t_m window per unit Δt: Re[∫₀^Δt e^{−iδω t} dt]/Δt = sinc(δωΔt)."""
    return sinc(x)


def mismatch_closed_form(pair: ShiftedAtomPair, a: float, duration: float) -> float:
    """−Σ_s γ̄_s·sinc(ω̄_s a)·sinc(δω_s Δt)."""
    mean = pair.mean_atom
    return -math.fsum(
        c.partial_rate * sinc(c.bohr_frequency * a) * window_suppression(d * duration)
        for c, d in zip(mean.channels, pair.detunings)
    )


def _check_inputs(a: float, duration: float) -> None:
    if not a >= 0:
        raise NegativeSeparation(f"well separation must be >= 0, got {a}")
    if not (math.isfinite(duration) and duration > 0):
        raise NonPositiveDuration(f"Δt must be > 0, got {duration}")


def _channel_weights(pair: ShiftedAtomPair, cutoff: float) -> list[float]:
    """κ_s|d_s|²/3 with the on-shell cutoff compensation at ω̄_s."""
    return [
        c.dipole_strength * math.exp(w / cutoff) / 3.0
        for c, w in zip(pair.base.channels, pair.mean_frequencies)
    ]


def resonant_overlap(mean_frequency: float, a: float, cutoff: float, quad: QuadratureSpec = DEFAULT_SPEC) -> complex:
    """∫ e^{iω̄τ}·F(τ, a) dτ over the whole τ axis."""
    reach = a + RESONANT_TAIL / mean_frequency

    def integrand(tau):
        return np.exp(1j * mean_frequency * tau) * vacuum_field_wightman(tau, a, cutoff)

    return integrate_1d(integrand, -reach, reach, min(1.0 / cutoff, 2 * math.pi / mean_frequency), quad).value


def _window(detuning: float, duration: float, quad: QuadratureSpec) -> complex:
    scale = 2 * math.pi / abs(detuning) if detuning else math.inf
    return integrate_1d(lambda tm: np.exp(-1j * detuning * tm), 0.0, duration, scale, quad).value


def _extended(resonant: Sequence[complex], detunings: Sequence[float], duration: float, quad: QuadratureSpec) -> float:
    terms = [r * _window(d, duration, quad) for r, d in zip(resonant, detunings)]
    return -math.fsum(t.real for t in terms) / duration


def _finite(pair: ShiftedAtomPair, a: float, duration: float, cutoff: float, quad: QuadratureSpec) -> float:
    terms = []
    for weight, omega, detuning in zip(_channel_weights(pair, cutoff), pair.mean_frequencies, pair.detunings):

        def integrand(tm, tau, omega=omega, detuning=detuning):
            return np.exp(-1j * detuning * tm) * (np.exp(1j * omega * tau) * vacuum_field_wightman(tau, a, cutoff))

        result = integrate_2d_rotated(
            integrand,
            duration,
            1.0 / cutoff,
            2 * math.pi / omega,
            quad,
            tau_max=math.inf,
            tm_scale=2 * math.pi / abs(detuning) if detuning else None,
        )
        terms.append(weight * result.value)
    return -math.fsum(t.real for t in terms) / duration


def _resonant_terms(pair: ShiftedAtomPair, a: float, cutoff: float, quad: QuadratureSpec) -> list[complex]:
    return [
        weight * resonant_overlap(omega, a, cutoff, quad)
        for weight, omega in zip(_channel_weights(pair, cutoff), pair.mean_frequencies)
    ]


def gamma_nl_mismatch(
    pair: ShiftedAtomPair,
    a: float,
    duration: float,
    *,
    cutoff: float | None = None,
    quad: QuadratureSpec = DEFAULT_SPEC,
    mode: Mode = "extended",
) -> float:
    """Finite-Δt nonlocal rate for frequency-shifted wells.

    `extended` lets the τ integral run over the whole axis; `finite` keeps the
    exact square, whose excess over `extended` is a cutoff-dependent
    transient decaying like 1/Δt.
    """
    _check_inputs(a, duration)
    cutoff = resolve_cutoff(pair.mean_atom, cutoff)
    with tracer.start_as_current_span("mismatch.gamma_nl") as span:
        span.set_attribute("mismatch.mode", mode)
        span.set_attribute("mismatch.duration", duration)
        if mode == "extended":
            return _extended(_resonant_terms(pair, a, cutoff, quad), pair.detunings, duration, quad)
        if mode == "finite":
            return _finite(pair, a, duration, cutoff, quad)
    raise ConfigError(f"mismatch mode must be 'extended' or 'finite', got {mode!r}")


def gamma_nl_mismatch_overlap(
    pair: ShiftedAtomPair,
    a: float,
    duration: float,
    *,
    axis: Sequence[float] = Z_AXIS,
    span_fraction: float = DEFAULT_SPAN_FRACTION,
) -> float:
    """The same rate as −Re⟨ψ⁺|ψ⁻⟩/Δt from the two wells' photon footprints."""
    _check_inputs(a, duration)
    grid = ModeGrid.for_double_well(pair.mean_atom, a, duration, axis=axis, span_fraction=span_fraction)
    half = 0.5 * a * grid.axis
    plus = perturb_env_state(pair.plus_atom, half, duration, grid, label="+")
    minus = perturb_env_state(pair.minus_atom, -half, duration, grid, label="-")
    return overlap_rate(plus, minus)


@dataclass(frozen=True)
class MismatchScan:
    """Γ_NL/γ̄ against δωΔt of the reference channel."""

    products: tuple[float, ...]
    ratios: tuple[float, ...]

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for x, ratio in zip(self.products, self.ratios):
            writer.writerow([format_float(x), format_float(ratio)])

    @classmethod
    def read_csv(cls, stream: TextIO) -> MismatchScan:
        reader = csv.reader(stream)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ConfigError(f"mismatch CSV: unexpected header {header!r}")
        rows = [(float(x), float(r)) for x, r in reader]
        return cls(tuple(x for x, _ in rows), tuple(r for _, r in rows))


def scan_mismatch(
    pair: ShiftedAtomPair,
    a: float,
    durations: Sequence[float],
    *,
    cutoff: float | None = None,
    quad: QuadratureSpec = DEFAULT_SPEC,
) -> MismatchScan:
    """Extended-mode Γ_NL/γ̄ for fixed shifts over a grid of windows."""
    for duration in durations:
        _check_inputs(a, duration)
    cutoff = resolve_cutoff(pair.mean_atom, cutoff)
    gamma_bar = reference_rate(pair)
    with tracer.start_as_current_span("mismatch.scan") as span:
        span.set_attribute("mismatch.points", len(durations))
        resonant = _resonant_terms(pair, a, cutoff, quad)
        rates = [_extended(resonant, pair.detunings, dt, quad) for dt in durations]
    return MismatchScan(
        tuple(pair.detunings[0] * dt for dt in durations),
        tuple(rate / gamma_bar if gamma_bar > 0 else 0.0 for rate in rates),
    )


def scan_detuning(
    base: AtomModel,
    a: float,
    duration: float,
    products: Sequence[float],
    *,
    cutoff: float | None = None,
    quad: QuadratureSpec = DEFAULT_SPEC,
) -> MismatchScan:
    """Extended-mode Γ_NL/γ̄ at fixed Δt for symmetric shifts δω = x/Δt.

    The mean frequencies never move, so the resonant overlaps are computed once.
    """
    _check_inputs(a, duration)
    validate_atom(base)
    cutoff = resolve_cutoff(base, cutoff)
    gamma_bar = gamma_spontaneous(base)
    resonant = _resonant_terms(ShiftedAtomPair.symmetric(base, 0.0), a, cutoff, quad)
    ratios = []
    with tracer.start_as_current_span("mismatch.scan_detuning") as span:
        span.set_attribute("mismatch.points", len(products))
        for x in products:
            pair = ShiftedAtomPair.symmetric(base, x / duration)
            rate = _extended(resonant, pair.detunings, duration, quad)
            ratios.append(rate / gamma_bar if gamma_bar > 0 else 0.0)
    logger.debug("mismatch scan at Δt=%g over %d products", duration, len(products))
    return MismatchScan(tuple(float(x) for x in products), tuple(ratios))
