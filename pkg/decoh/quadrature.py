"""Numerical utilities shared by the rate computations.

Integrals are evaluated panel-wise with Gauss–Legendre rules and refined by
doubling the panel count until two successive estimates agree. Panels are
grouped into fixed-size chunks whose partial sums are combined by a
fixed-order pairwise reduction, so results are bitwise identical for any
number of worker threads.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, NamedTuple

import numpy as np
from opentelemetry import trace
from scipy import optimize

from decoh.errors import ConfigError, NoSignChange, QuadratureNotConverged, TooFewPoints, ValidationError

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

TRUNCATION_DECAY_LENGTHS = 40.0
CHUNK_NODES = 1 << 16
ROUNDOFF_FLOOR = 64 * float(np.finfo(float).eps)
MIN_FIT_POINTS = 4

Integrand1D = Callable[[np.ndarray], Any]
Integrand2D = Callable[[np.ndarray, np.ndarray], Any]


@dataclass(frozen=True)
class QuadratureSpec:
    """Panel sizing and convergence controls.

    `workers` only selects how many threads evaluate chunks; it never
    changes a result and is not serialized.
    """

    panel_factor: int = 8
    gauss_order: int = 8
    rel_tolerance: float = 1e-6
    max_refinements: int = 6
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("panel_factor", "gauss_order", "max_refinements", "workers"):
            value = getattr(self, name)
            if not (isinstance(value, int) and value > 0):
                raise ConfigError(f"quadrature: {name} must be a positive integer, got {value!r}")
        if not 0 < self.rel_tolerance < 1:
            raise ConfigError(f"quadrature: rel_tolerance must lie in (0, 1), got {self.rel_tolerance!r}")

    def with_workers(self, workers: int) -> QuadratureSpec:
        return replace(self, workers=workers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "panel_factor": self.panel_factor,
            "gauss_order": self.gauss_order,
            "rel_tolerance": self.rel_tolerance,
            "max_refinements": self.max_refinements,
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any], workers: int = 1) -> QuadratureSpec:
        unknown = set(document) - {"panel_factor", "gauss_order", "rel_tolerance", "max_refinements"}
        if unknown:
            raise ConfigError(f"quadrature: unknown keys {sorted(unknown)}")
        return cls(**{**document, "workers": workers})


DEFAULT_SPEC = QuadratureSpec()


class QuadratureResult(NamedTuple):
    value: Any
    error_estimate: float
    panels: int
    tau_cut: float = math.nan
    truncation_bound: float = 0.0


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    residual: float


@lru_cache(maxsize=16)
def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def pairwise_sum(values: Sequence[Any]) -> Any:
    """Sum in a fixed binary-tree order, independent of how values were produced."""
    if not values:
        return 0.0
    if len(values) == 1:
        return values[0]
    mid = len(values) // 2
    return pairwise_sum(values[:mid]) + pairwise_sum(values[mid:])


def _as_scalar(value: Any) -> Any:
    return complex(value) if np.iscomplexobj(value) else float(value)


def _reduce_chunks(evaluate: Callable[[int], tuple[Any, float]], chunks: int, workers: int) -> tuple[Any, float]:
    if workers > 1 and chunks > 1:
        with ThreadPoolExecutor(max_workers=min(workers, chunks)) as pool:
            partials = list(pool.map(evaluate, range(chunks)))
    else:
        partials = [evaluate(i) for i in range(chunks)]
    return pairwise_sum([p[0] for p in partials]), pairwise_sum([p[1] for p in partials])


def _refine(estimate: Callable[[int], tuple[Any, float]], spec: QuadratureSpec, label: str) -> tuple[Any, float, int]:
    """Double the refinement level until successive estimates agree."""
    previous, _ = estimate(0)
    error = math.inf
    for level in range(1, spec.max_refinements + 1):
        current, l1 = estimate(level)
        error = abs(current - previous)
        floor = ROUNDOFF_FLOOR * l1
        if error <= max(spec.rel_tolerance * abs(current), floor):
            return _as_scalar(current), max(error, floor), level
        previous = current
    raise QuadratureNotConverged(
        f"{label}: successive estimates still differ by {error:.3e} after "
        f"{spec.max_refinements} refinements (rel_tolerance {spec.rel_tolerance:g})"
    )


def _panel_count(length: float, scale: float, spec: QuadratureSpec) -> int:
    if not math.isfinite(scale):
        return 1
    return max(1, math.ceil(length * spec.panel_factor / scale))


def integrate_1d(
    f: Integrand1D, a: float, b: float, oscillation_scale: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> QuadratureResult:
    """∫_a^b f(x) dx for a vectorized f, real or complex.

    Panels are sized `oscillation_scale / spec.panel_factor`.
    """
    if not b >= a:
        raise ValidationError(f"integration bounds must satisfy b >= a, got [{a}, {b}]")
    if not oscillation_scale > 0:
        raise ValidationError(f"oscillation_scale must be > 0, got {oscillation_scale}")
    if b == a:
        return QuadratureResult(0.0, 0.0, 0)

    nodes, weights = gauss_rule(spec.gauss_order)
    base = _panel_count(b - a, oscillation_scale, spec)
    per_chunk = max(1, CHUNK_NODES // spec.gauss_order)

    def estimate(level: int) -> tuple[Any, float]:
        panels = base << level
        edges = np.linspace(a, b, panels + 1)

        def chunk(i: int) -> tuple[Any, float]:
            lo = edges[i * per_chunk : min((i + 1) * per_chunk, panels)]
            hi = edges[i * per_chunk + 1 : min((i + 1) * per_chunk, panels) + 1]
            half = 0.5 * (hi - lo)
            x = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
            fx = np.broadcast_to(np.asarray(f(x)), x.shape)
            w = half[:, None] * weights[None, :]
            return np.sum(w * fx), float(np.sum(w * np.abs(fx)))

        return _reduce_chunks(chunk, math.ceil(panels / per_chunk), spec.workers)

    with tracer.start_as_current_span("quadrature.integrate_1d") as span:
        value, error, level = _refine(estimate, spec, f"integrate_1d on [{a:g}, {b:g}]")
        span.set_attribute("quadrature.panels", base << level)
        span.set_attribute("quadrature.error_estimate", error)
    return QuadratureResult(value, error, base << level)


def integrate_2d_rotated(
    f: Integrand2D,
    duration: float,
    memory_scale: float,
    oscillation_scale: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
    *,
    tau_max: float | None = None,
    tm_scale: float | None = None,
) -> QuadratureResult:
    """∫₀^Δt∫₀^Δt f dt dt′ in the rotated variables t_m = (t+t′)/2, τ = t−t′.

    f(t_m, τ) is called with τ as a column of shape (m, 1) and t_m of shape
    (m, k) and must broadcast. The τ range is cut at |τ| ≤ 40·memory_scale
    unless `tau_max` is given; for an integrand decaying like e^{-|τ|/τ_c}
    the neglected fraction is bounded by `truncation_bound`. With
    `tm_scale=None` the integrand is taken to be independent of t_m and the
    inner integral reduces to its length Δt − |τ|.
    """
    if not (math.isfinite(duration) and duration > 0):
        raise ValidationError(f"Δt must be > 0, got {duration}")
    if not (memory_scale > 0 and oscillation_scale > 0):
        raise ValidationError(f"scales must be > 0, got memory {memory_scale}, oscillation {oscillation_scale}")
    if tau_max is None:
        tau_max = TRUNCATION_DECAY_LENGTHS * memory_scale
    cut = min(duration, tau_max)
    truncation_bound = math.exp(-cut / memory_scale) if cut < duration else 0.0

    nodes, weights = gauss_rule(spec.gauss_order)
    order = spec.gauss_order
    base = _panel_count(cut, min(memory_scale, oscillation_scale, duration), spec)
    tm_base = None if tm_scale is None else max(1, math.ceil(duration / tm_scale))

    def estimate(level: int) -> tuple[Any, float]:
        half_panels = base << level
        edges = np.concatenate([np.linspace(-cut, 0.0, half_panels + 1), np.linspace(0.0, cut, half_panels + 1)[1:]])
        panels = 2 * half_panels
        if tm_base is None:
            tm_nodes, tm_weights = np.array([0.5]), np.array([1.0])
        else:
            sub = tm_base << level
            tm_nodes = ((np.arange(sub)[:, None] + 0.5 * (nodes[None, :] + 1.0)) / sub).ravel()
            tm_weights = np.tile(weights / (2.0 * sub), sub)
        per_chunk = max(1, CHUNK_NODES // (order * tm_nodes.size))

        def chunk(i: int) -> tuple[Any, float]:
            lo = edges[i * per_chunk : min((i + 1) * per_chunk, panels)]
            hi = edges[i * per_chunk + 1 : min((i + 1) * per_chunk, panels) + 1]
            half = 0.5 * (hi - lo)
            tau = ((0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]).ravel()
            w_tau = (half[:, None] * weights[None, :]).ravel()
            length = duration - np.abs(tau)
            tm = 0.5 * np.abs(tau)[:, None] + length[:, None] * tm_nodes[None, :]
            w = (w_tau * length)[:, None] * tm_weights[None, :]
            fx = np.broadcast_to(np.asarray(f(tm, tau[:, None])), tm.shape)
            return np.sum(w * fx), float(np.sum(w * np.abs(fx)))

        return _reduce_chunks(chunk, math.ceil(panels / per_chunk), spec.workers)

    with tracer.start_as_current_span("quadrature.integrate_2d_rotated") as span:
        value, error, level = _refine(estimate, spec, f"integrate_2d_rotated over Δt={duration:g}")
        panels = 2 * (base << level)
        span.set_attribute("quadrature.panels", panels)
        span.set_attribute("quadrature.tau_cut", cut)
        span.set_attribute("quadrature.truncation_bound", truncation_bound)
    logger.debug("2-D integral over Δt=%g: %d τ panels, cut %g, error %.3e", duration, panels, cut, error)
    return QuadratureResult(value, error, panels, cut, truncation_bound)


def tail_count(total: int, tail_fraction: float, min_points: int = 0) -> int:
    """Points in the fitted tail: ceil(total·tail_fraction), raised to `min_points` when the data allow."""
    if not 0 < tail_fraction <= 1:
        raise ValidationError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    return min(total, max(math.ceil(total * tail_fraction), min_points))


def fit_linear_tail(
    xs: Sequence[float] | np.ndarray,
    ys: Sequence[float] | np.ndarray,
    tail_fraction: float = 0.5,
    *,
    scale: float = 0.0,
    min_points: int = 0,
) -> LinearFit:
    """Least-squares line through the last `tail_fraction` of the points.

    The residual is the largest deviation from the line relative to
    max(max|y|, scale) over the fitted tail; 0 when both vanish.
    `min_points` widens a short tail toward the front of the data.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    count = tail_count(len(x), tail_fraction, min_points)
    if count < MIN_FIT_POINTS:
        raise TooFewPoints(
            f"linear fit needs at least {MIN_FIT_POINTS} points in the tail, got {count} of {len(x)}"
        )
    x, y = x[-count:], y[-count:]
    slope, intercept = np.polyfit(x, y, 1)
    magnitude = max(float(np.max(np.abs(y))), scale)
    residual = float(np.max(np.abs(y - (slope * x + intercept)))) / magnitude if magnitude > 0 else 0.0
    return LinearFit(float(slope), float(intercept), residual)


def _tan_x_minus_x(x: float) -> float:
    return x * math.cos(x) - math.sin(x)


def find_root_tan_x_eq_x(bracket: tuple[float, float]) -> float:
    """Root of tan x = x inside `bracket`, by bisection on x·cos x − sin x."""
    lo, hi = (float(b) for b in bracket)
    g_lo, g_hi = _tan_x_minus_x(lo), _tan_x_minus_x(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if not (lo < hi and g_lo * g_hi < 0):
        raise NoSignChange(f"x·cos x − sin x does not change sign on [{lo}, {hi}]")
    return float(optimize.bisect(_tan_x_minus_x, lo, hi, xtol=1e-14, rtol=4 * float(np.finfo(float).eps), maxiter=200))
