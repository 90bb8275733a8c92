"""Rates from first-order perturbed environment states.

Each well leaves a one-photon footprint in the vacuum. Amplitudes are held on
a frequency grid per decay channel and expanded in partial waves about the
pair axis: for a well at signed coordinate z the angular weights are
√(2l+1)·j_l(ωz), so Σ_l weights₁·weights₂ reproduces sinc(ω|z₁ − z₂|).

    Γ_L  = ½(‖ψ₁‖² + ‖ψ₂‖²)/Δt
    Γ_NL = −Re⟨ψ₁|ψ₂⟩/Δt
    Γ    = ‖(ψ₂ − ψ₁)/√2‖²/Δt
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from opentelemetry import trace
from scipy import special

from decoh.core_types import Z_AXIS, AtomModel, RateReport, unit_vector, validate_atom
from decoh.errors import GridMismatch, GridTooCoarse, NegativeSeparation, NonPositiveDuration
from decoh.qed_rates import format_float, mode_density, sinc

tracer = trace.get_tracer(__name__)

SPACING_DIVISOR = 4.0
COARSEST_SPACING_DIVISOR = 2.0
LOBE_SPAN = 40.0
DEFAULT_SPAN_FRACTION = 0.5
STATE_CSV_HEADER = ("omega", "re_amp", "im_amp", "channel", "well")


def partial_wave_cutoff(argument: float) -> int:
    """Highest l whose j_l(x ≤ argument) still matters at double precision."""
    return math.ceil(argument + 8.0 * np.cbrt(argument)) + 16


def time_window(detuning: np.ndarray, duration: float) -> np.ndarray:
    """W(δ, Δt) = ∫₀^Δt e^{−iδt} dt = Δt·e^{−iδΔt/2}·sinc(δΔt/2)."""
    return duration * np.exp(-0.5j * detuning * duration) * sinc(0.5 * detuning * duration)


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Uniform trapezoid frequency grid per channel plus the pair frame.

    Wells must lie on the line origin + z·axis with |z| ≤ extent.
    """

    centers: tuple[float, ...]
    nodes: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    duration: float
    origin: np.ndarray
    axis: np.ndarray
    extent: float
    l_max: int

    @classmethod
    def build(
        cls,
        atom: AtomModel,
        duration: float,
        *,
        origin: Sequence[float] = (0.0, 0.0, 0.0),
        axis: Sequence[float] = Z_AXIS,
        extent: float = 0.0,
        span_fraction: float = DEFAULT_SPAN_FRACTION,
        spacing: float | None = None,
    ) -> ModeGrid:
        validate_atom(atom)
        if not (math.isfinite(duration) and duration > 0):
            raise NonPositiveDuration(f"Δt must be > 0, got {duration}")
        if not extent >= 0:
            raise NegativeSeparation(f"grid extent must be >= 0, got {extent}")
        step = math.pi / (SPACING_DIVISOR * duration) if spacing is None else spacing
        nodes, weights = [], []
        for omega in atom.frequencies:
            half_width = max(LOBE_SPAN / duration, span_fraction * omega)
            lo, hi = max(0.0, omega - half_width), omega + half_width
            count = max(2, math.ceil((hi - lo) / step) + 1)
            grid = np.linspace(lo, hi, count)
            h = (hi - lo) / (count - 1)
            w = np.full(count, h)
            w[0] = w[-1] = 0.5 * h
            grid.flags.writeable = False
            w.flags.writeable = False
            nodes.append(grid)
            weights.append(w)
        top = max(float(n[-1]) for n in nodes)
        return cls(
            tuple(float(w) for w in atom.frequencies),
            tuple(nodes),
            tuple(weights),
            float(duration),
            np.asarray(origin, dtype=float),
            unit_vector(axis),
            float(extent),
            partial_wave_cutoff(top * extent),
        )

    @classmethod
    def for_double_well(
        cls, atom: AtomModel, a: float, duration: float, *, axis: Sequence[float] = Z_AXIS, **options
    ) -> ModeGrid:
        if not a >= 0:
            raise NegativeSeparation(f"well separation must be >= 0, got {a}")
        return cls.build(atom, duration, axis=axis, extent=0.5 * a, **options)

    @property
    def size(self) -> int:
        return sum(n.size for n in self.nodes)

    def coordinate(self, position: Sequence[float]) -> float:
        """Signed coordinate of a well along the grid axis."""
        offset = np.asarray(position, dtype=float) - self.origin
        z = float(offset @ self.axis)
        off_axis = float(np.linalg.norm(offset - z * self.axis))
        if off_axis > 1e-9 * max(1.0, abs(z)):
            raise GridMismatch(f"well at {list(position)} lies {off_axis:.3g} off the grid axis")
        if abs(z) > self.extent * (1 + 1e-9) + 1e-12:
            raise GridMismatch(f"well coordinate {z:g} exceeds grid extent {self.extent:g}")
        return z

    def check_resolves(self, atom: AtomModel, duration: float) -> None:
        if len(atom.channels) != len(self.nodes):
            raise GridMismatch(f"atom has {len(atom.channels)} channels, grid has {len(self.nodes)}")
        if not math.isclose(duration, self.duration, rel_tol=1e-12):
            raise GridMismatch(f"state window Δt={duration:g} differs from grid window {self.duration:g}")
        coarsest = math.pi / (COARSEST_SPACING_DIVISOR * duration)
        for channel, nodes in zip(atom.channels, self.nodes):
            if nodes.size > 1 and nodes[1] - nodes[0] > coarsest * (1 + 1e-12):
                raise GridTooCoarse(
                    f"channel {channel.label!r}: spacing {nodes[1] - nodes[0]:.3g} exceeds π/(2Δt) = {coarsest:.3g}"
                )
            need_lo = max(0.0, channel.bohr_frequency - LOBE_SPAN / duration)
            need_hi = channel.bohr_frequency + LOBE_SPAN / duration
            if nodes[0] > need_lo * (1 + 1e-12) or nodes[-1] < need_hi * (1 - 1e-12):
                raise GridTooCoarse(
                    f"channel {channel.label!r}: grid [{nodes[0]:g}, {nodes[-1]:g}] misses the window main lobes "
                    f"[{need_lo:g}, {need_hi:g}]"
                )


@dataclass(frozen=True, eq=False)
class PerturbedEnvState:
    """One-photon footprint of one well: radial amplitudes ⊗ partial-wave weights.

    `radial[s]` already carries √(quadrature weight), so sums over nodes are
    integrals over ω.
    """

    grid: ModeGrid
    duration: float
    radial: tuple[np.ndarray, ...]
    angular: tuple[np.ndarray, ...]
    well_position: tuple[float, float, float]
    label: str = ""

    def norm_squared(self) -> float:
        terms = [
            (r.real**2 + r.imag**2) * np.sum(b * b, axis=1) for r, b in zip(self.radial, self.angular)
        ]
        return math.fsum(np.concatenate(terms))

    def amplitudes(self, channel: int) -> np.ndarray:
        """Full mode amplitudes of one channel, shape (nodes, l_max + 1)."""
        return self.radial[channel][:, None] * self.angular[channel]

    def write_csv(self, stream: TextIO, header: bool = True) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        if header:
            writer.writerow(STATE_CSV_HEADER)
        for channel, (nodes, radial) in enumerate(zip(self.grid.nodes, self.radial)):
            for omega, amp in zip(nodes, radial):
                row = [format_float(omega), format_float(amp.real), format_float(amp.imag), channel, self.label]
                writer.writerow(row)


def perturb_env_state(
    atom: AtomModel, well_position: Sequence[float], duration: float, grid: ModeGrid, *, label: str = ""
) -> PerturbedEnvState:
    """Environment footprint of the atom emitting from `well_position` during [0, Δt]."""
    validate_atom(atom)
    grid.check_resolves(atom, duration)
    z = grid.coordinate(well_position)
    degree = np.arange(grid.l_max + 1)
    radial, angular = [], []
    with tracer.start_as_current_span("overlap.perturb_env_state") as span:
        span.set_attribute("overlap.nodes", grid.size)
        span.set_attribute("overlap.l_max", grid.l_max)
        for channel, nodes, weights in zip(atom.channels, grid.nodes, grid.weights):
            coupling = np.sqrt(weights * mode_density(nodes) * channel.dipole_strength / 3.0)
            radial.append(coupling * time_window(nodes - channel.bohr_frequency, duration))
            x = nodes[:, None] * abs(z)
            parity = np.where(degree % 2 == 1, math.copysign(1.0, z), 1.0) if z != 0 else np.ones(degree.size)
            angular.append(np.sqrt(2 * degree + 1)[None, :] * special.spherical_jn(degree[None, :], x) * parity)
    return PerturbedEnvState(
        grid, float(duration), tuple(radial), tuple(angular), tuple(float(v) for v in well_position), label
    )


def _check_compatible(state1: PerturbedEnvState, state2: PerturbedEnvState) -> None:
    if state1.grid is not state2.grid:
        raise GridMismatch("states were built on different mode grids")
    if state1.duration != state2.duration:
        raise GridMismatch(f"states have different windows: {state1.duration:g} vs {state2.duration:g}")


def inner_product(state1: PerturbedEnvState, state2: PerturbedEnvState) -> complex:
    """⟨ψ₁|ψ₂⟩ with compensated summation in fixed node order."""
    _check_compatible(state1, state2)
    real, imag = [], []
    for r1, b1, r2, b2 in zip(state1.radial, state1.angular, state2.radial, state2.angular):
        angular = np.sum(b1 * b2, axis=1)
        real.append((r1.real * r2.real + r1.imag * r2.imag) * angular)
        imag.append((r1.real * r2.imag - r1.imag * r2.real) * angular)
    return complex(math.fsum(np.concatenate(real)), math.fsum(np.concatenate(imag)))


def local_rate_from_norm(*states: PerturbedEnvState) -> float:
    """Mean squared norm per unit time; one state or a pair."""
    if not states:
        raise GridMismatch("local rate needs at least one state")
    for state in states[1:]:
        _check_compatible(states[0], state)
    return math.fsum(s.norm_squared() for s in states) / len(states) / states[0].duration


def overlap_rate(state1: PerturbedEnvState, state2: PerturbedEnvState) -> float:
    return -inner_product(state1, state2).real / state1.duration


def total_rate_from_difference(state1: PerturbedEnvState, state2: PerturbedEnvState) -> float:
    """‖(ψ₂ − ψ₁)/√2‖²/Δt."""
    _check_compatible(state1, state2)
    terms = []
    for channel in range(len(state1.radial)):
        difference = state2.amplitudes(channel) - state1.amplitudes(channel)
        terms.append((difference.real**2 + difference.imag**2).ravel())
    return 0.5 * math.fsum(np.concatenate(terms)) / state1.duration


def overlap_rates(
    atom: AtomModel,
    a: float,
    duration: float,
    *,
    axis: Sequence[float] = Z_AXIS,
    span_fraction: float = DEFAULT_SPAN_FRACTION,
) -> RateReport:
    """Double-well rates from the footprints of the two wells at ±a/2."""
    grid = ModeGrid.for_double_well(atom, a, duration, axis=axis, span_fraction=span_fraction)
    half = 0.5 * a * grid.axis
    with tracer.start_as_current_span("overlap.rates") as span:
        span.set_attribute("overlap.separation", a)
        span.set_attribute("overlap.duration", duration)
        plus = perturb_env_state(atom, half, duration, grid, label="+")
        minus = perturb_env_state(atom, -half, duration, grid, label="-")
        local = local_rate_from_norm(plus, minus)
        nonlocal_ = overlap_rate(plus, minus)
        total = total_rate_from_difference(plus, minus)
    return RateReport(
        local,
        nonlocal_,
        {
            "route": "overlap",
            "separation": a,
            "duration": duration,
            "nodes": grid.size,
            "l_max": grid.l_max,
            "total_from_difference": total,
        },
    )
