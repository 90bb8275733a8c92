"""Second-order closed-time-path decoherence functionals.

For a linear coupling V = q·X the decoherence part of the influence
functional is built from the kernel

    G(x, x′) = Θ(t − t′) · Σ_ij [sym_q·sym_X − ¼·antisym_q·antisym_X]

where sym = ½⟨{A_i, A_j}⟩ and antisym = ⟨[A_i, A_j]⟩/i. The bracket is the
real part of the product of the two Wightman functions, Re⟨V(x)V(x′)⟩, and
Θ(0) = ½. The functionals over a monitoring window [0, Δt] are

    S_L  =  ∫∫ [G(r₁(t), r₁(t′)) + G(r₂(t′), r₂(t))]
    S_NL = −∫∫ [G(r₁(t), r₂(t′)) + G(r₂(t′), r₁(t))]

and the stationary rates are their slopes in Δt.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from opentelemetry import trace

from decoh.core_types import Path, PathPair, RateReport
from decoh.errors import DimensionMismatch, NonLinearGrowth, TooFewPoints, ValidationError
from decoh.quadrature import (
    DEFAULT_SPEC,
    MIN_FIT_POINTS,
    QuadratureSpec,
    fit_linear_tail,
    integrate_2d_rotated,
    tail_count,
)

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

DEFAULT_FIT_TOLERANCE = 1e-3
DEFAULT_TAIL_FRACTION = 0.5

# part(t, t′, r, r′) -> array; t broadcastable, r of shape (..., 3).
KernelPart = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], Any]
# g(t, r, t′, r′) -> real array.
KernelG = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], Any]
PairFactory = Callable[[float], PathPair]


@dataclass(frozen=True)
class CorrelationKernel:
    """Two-point correlation of one coupled degree of freedom.

    Isotropic kernels (A_ij = δ_ij·a) return the scalar a with the shape of
    the time arguments; other kernels return (..., dim, dim) arrays. When
    built from a Wightman function the contraction uses it directly.
    `horizon` bounds the |t − t′| range that contributes; None means 40
    memory times.
    """

    dim: int
    sym: KernelPart
    antisym: KernelPart
    memory_time: float
    max_frequency: float = 0.0
    horizon: float | None = None
    isotropic: bool = False
    stationary: bool = False
    wightman: KernelPart | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not (isinstance(self.dim, int) and self.dim > 0):
            raise DimensionMismatch(f"kernel dimension must be a positive integer, got {self.dim!r}")
        if not self.memory_time > 0:
            raise ValidationError(f"memory_time must be > 0, got {self.memory_time}")
        if not self.max_frequency >= 0:
            raise ValidationError(f"max_frequency must be >= 0, got {self.max_frequency}")

    @classmethod
    def from_wightman(
        cls,
        wightman: KernelPart,
        dim: int,
        memory_time: float,
        *,
        max_frequency: float = 0.0,
        horizon: float | None = None,
        isotropic: bool = False,
        stationary: bool = False,
    ) -> CorrelationKernel:
        """Kernel from W(x, x′) = ⟨A(x)A(x′)⟩: sym = Re W, antisym = 2 Im W."""

        def sym(t, t2, r, r2):
            return np.real(wightman(t, t2, r, r2))

        def antisym(t, t2, r, r2):
            return 2.0 * np.imag(wightman(t, t2, r, r2))

        return cls(dim, sym, antisym, memory_time, max_frequency, horizon, isotropic, stationary, wightman)

    @property
    def effective_horizon(self) -> float:
        return 40.0 * self.memory_time if self.horizon is None else self.horizon

    def scaled(self, factor: float) -> CorrelationKernel:
        """Same kernel multiplied by `factor`."""
        sym, antisym, wightman = self.sym, self.antisym, self.wightman
        return replace(
            self,
            sym=lambda *args: factor * sym(*args),
            antisym=lambda *args: factor * antisym(*args),
            wightman=None if wightman is None else (lambda *args: factor * wightman(*args)),
        )


def _contract(kq: CorrelationKernel, kx: CorrelationKernel, a: Any, b: Any) -> Any:
    """Σ_ij A_ij B_ij with isotropic parts stored as scalars."""
    if kq.isotropic and kx.isotropic:
        return kq.dim * a * b
    if kq.isotropic:
        return a * np.trace(b, axis1=-2, axis2=-1)
    if kx.isotropic:
        return np.trace(a, axis1=-2, axis2=-1) * b
    return np.einsum("...ij,...ij->...", a, b)


def correlation(
    kq: CorrelationKernel, kx: CorrelationKernel, t: Any, t2: Any, r: np.ndarray, r2: np.ndarray
) -> np.ndarray:
    """Re⟨V(x)V(x′)⟩ = Σ_ij [sym_q·sym_X − ¼·antisym_q·antisym_X]."""
    if kq.dim != kx.dim:
        raise DimensionMismatch(f"q kernel has dim {kq.dim}, X kernel has dim {kx.dim}")
    if kq.wightman is not None and kx.wightman is not None:
        return np.real(_contract(kq, kx, kq.wightman(t, t2, r, r2), kx.wightman(t, t2, r, r2)))
    symmetric = _contract(kq, kx, kq.sym(t, t2, r, r2), kx.sym(t, t2, r, r2))
    commutator = _contract(kq, kx, kq.antisym(t, t2, r, r2), kx.antisym(t, t2, r, r2))
    return symmetric - 0.25 * commutator


def eval_G(kq: CorrelationKernel, kx: CorrelationKernel, x: tuple[Any, Any], x2: tuple[Any, Any]) -> Any:
    """G(x, x′) for x = (t, r); scalars in, float out."""
    t, r = np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)
    t2, r2 = np.asarray(x2[0], dtype=float), np.asarray(x2[1], dtype=float)
    value = np.heaviside(t - t2, 0.5) * correlation(kq, kx, t, t2, r, r2)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class InfluenceKernel:
    """G(x, x′) together with the scales its quadrature needs."""

    g: KernelG
    memory_time: float
    max_frequency: float = 0.0
    horizon: float | None = None
    stationary: bool = False

    def __post_init__(self) -> None:
        if not self.memory_time > 0:
            raise ValidationError(f"memory_time must be > 0, got {self.memory_time}")
        if not self.max_frequency >= 0:
            raise ValidationError(f"max_frequency must be >= 0, got {self.max_frequency}")

    @property
    def oscillation_scale(self) -> float:
        return 2 * math.pi / self.max_frequency if self.max_frequency > 0 else math.inf

    @classmethod
    def from_correlations(cls, kq: CorrelationKernel, kx: CorrelationKernel) -> InfluenceKernel:
        if kq.dim != kx.dim:
            raise DimensionMismatch(f"q kernel has dim {kq.dim}, X kernel has dim {kx.dim}")

        def g(t, r, t2, r2):
            return np.heaviside(t - t2, 0.5) * correlation(kq, kx, t, t2, r, r2)

        return cls(
            g,
            memory_time=min(kq.memory_time, kx.memory_time),
            max_frequency=max(kq.max_frequency, kx.max_frequency),
            horizon=min(kq.effective_horizon, kx.effective_horizon),
            stationary=kq.stationary and kx.stationary,
        )

    @classmethod
    def exponential_test_kernel(cls, memory_time: float, frequency: float) -> InfluenceKernel:
        """G = e^{−|t−t′|/τ_c}·cos(Ω(t−t′)), position independent."""

        def g(t, r, t2, r2):
            tau = t - t2
            return np.exp(-np.abs(tau) / memory_time) * np.cos(frequency * tau)

        return cls(g, memory_time, frequency, None, stationary=True)


@dataclass(frozen=True)
class FunctionalValue:
    s_local: float
    s_nonlocal: float
    duration: float
    diagnostics: Mapping[str, Any] = field(default_factory=dict, compare=False)


def _pair_integrands(kernel: InfluenceKernel, path1: Path, path2: Path):
    g = kernel.g

    def local(tm, tau):
        t, t2 = tm + 0.5 * tau, tm - 0.5 * tau
        return g(t, path1.at(t), t2, path1.at(t2)) + g(t2, path2.at(t2), t, path2.at(t))

    def nonlocal_(tm, tau):
        t, t2 = tm + 0.5 * tau, tm - 0.5 * tau
        return -(g(t, path1.at(t), t2, path2.at(t2)) + g(t2, path2.at(t2), t, path1.at(t)))

    return local, nonlocal_


def kernel_functionals(kernel: InfluenceKernel, pair: PathPair, quad: QuadratureSpec = DEFAULT_SPEC) -> FunctionalValue:
    """S_L and S_NL for an arbitrary G over the pair's window."""
    if kernel.stationary and pair.is_static:
        tm_scale = None
    else:
        tm_scale = min(pair.resolution, kernel.oscillation_scale, pair.duration)
    local, nonlocal_ = _pair_integrands(kernel, pair.path1, pair.path2)
    options = {"tau_max": kernel.horizon, "tm_scale": tm_scale}
    with tracer.start_as_current_span("ctp.functionals") as span:
        span.set_attribute("ctp.duration", pair.duration)
        s_local = integrate_2d_rotated(
            local, pair.duration, kernel.memory_time, kernel.oscillation_scale, quad, **options
        )
        s_nonlocal = integrate_2d_rotated(
            nonlocal_, pair.duration, kernel.memory_time, kernel.oscillation_scale, quad, **options
        )
        span.set_attribute("ctp.tau_panels", max(s_local.panels, s_nonlocal.panels))
    return FunctionalValue(
        float(s_local.value),
        float(s_nonlocal.value),
        pair.duration,
        {
            "local_error": s_local.error_estimate,
            "nonlocal_error": s_nonlocal.error_estimate,
            "tau_panels": max(s_local.panels, s_nonlocal.panels),
            "tau_cut": s_local.tau_cut,
            "truncation_bound": s_local.truncation_bound,
        },
    )


def eval_functionals(
    kq: CorrelationKernel, kx: CorrelationKernel, pair: PathPair, quad: QuadratureSpec = DEFAULT_SPEC
) -> FunctionalValue:
    return kernel_functionals(InfluenceKernel.from_correlations(kq, kx), pair, quad)


def kernel_stationary_rates(
    kernel: InfluenceKernel,
    pair_factory: PairFactory,
    schedule: Sequence[float],
    quad: QuadratureSpec = DEFAULT_SPEC,
    *,
    tolerance: float = DEFAULT_FIT_TOLERANCE,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
) -> RateReport:
    """Slopes of S_L and S_NL over the tail of a Δt schedule."""
    durations = [float(dt) for dt in schedule]
    if len(durations) < MIN_FIT_POINTS:
        raise TooFewPoints(f"Δt schedule needs at least {MIN_FIT_POINTS} points, got {len(durations)}")
    if any(b <= a for a, b in zip(durations, durations[1:])):
        raise ValidationError(f"Δt schedule must be strictly increasing, got {durations}")
    fitted = tail_count(len(durations), tail_fraction, MIN_FIT_POINTS)

    with tracer.start_as_current_span("ctp.stationary_rates") as span:
        values = [kernel_functionals(kernel, pair_factory(dt), quad) for dt in durations]
        local = [v.s_local for v in values]
        nonlocal_ = [v.s_nonlocal for v in values]
        scale = max(abs(s) for s in local)
        fit_local = fit_linear_tail(durations, local, tail_fraction, scale=scale, min_points=MIN_FIT_POINTS)
        fit_nonlocal = fit_linear_tail(durations, nonlocal_, tail_fraction, scale=scale, min_points=MIN_FIT_POINTS)
        residual = max(fit_local.residual, fit_nonlocal.residual)
        span.set_attribute("ctp.schedule", durations)
        span.set_attribute("ctp.fitted_points", fitted)
        span.set_attribute("ctp.fit_residual", residual)
    if residual > tolerance:
        raise NonLinearGrowth(
            f"decoherence functional is not linear in Δt over {durations[-fitted:]}: "
            f"residual {residual:.3e} exceeds {tolerance:g}"
        )
    logger.debug("stationary rates: Γ_L=%.9g Γ_NL=%.9g residual %.2e", fit_local.slope, fit_nonlocal.slope, residual)
    return RateReport(
        fit_local.slope,
        fit_nonlocal.slope,
        {
            "route": "ctp",
            "schedule": durations,
            "fit_residual": residual,
            "intercept_local": fit_local.intercept,
            "intercept_nonlocal": fit_nonlocal.intercept,
            "tau_panels": values[-1].diagnostics["tau_panels"],
            "truncation_bound": values[-1].diagnostics["truncation_bound"],
        },
    )


def stationary_rates(
    kq: CorrelationKernel,
    kx: CorrelationKernel,
    pair_factory: PairFactory,
    schedule: Sequence[float],
    quad: QuadratureSpec = DEFAULT_SPEC,
    **options: Any,
) -> RateReport:
    return kernel_stationary_rates(InfluenceKernel.from_correlations(kq, kx), pair_factory, schedule, quad, **options)


def pairwise_decoherence_matrix(
    kq: CorrelationKernel,
    kx: CorrelationKernel,
    paths: Sequence[Path],
    schedule: Sequence[float],
    quad: QuadratureSpec = DEFAULT_SPEC,
    **options: Any,
) -> tuple[tuple[RateReport, ...], ...]:
    """Rates for every ordered pair of paths; entry (j, k) uses PathPair(paths[j], paths[k])."""
    if len(paths) < 2:
        raise ValidationError(f"pairwise matrix needs at least 2 paths, got {len(paths)}")
    kernel = InfluenceKernel.from_correlations(kq, kx)

    def factory(first: Path, second: Path) -> PairFactory:
        return lambda dt: PathPair(first.restrict(dt), second.restrict(dt), dt)

    with tracer.start_as_current_span("ctp.pairwise_matrix") as span:
        span.set_attribute("ctp.paths", len(paths))
        return tuple(
            tuple(kernel_stationary_rates(kernel, factory(p, q), schedule, quad, **options) for q in paths)
            for p in paths
        )
