"""Shared fixtures and constants for decoh tests."""

import os

import pytest
from opentelemetry import trace
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import SimpleSpanProcessor
from opentelemetry.sdk.trace.export.in_memory_span_exporter import InMemorySpanExporter

from decoh.core_types import AtomModel, Channel
from decoh.quadrature import QuadratureSpec

# Worker counts exercised by the determinism checks; override with e.g. DECOH_TEST_WORKERS=1,4.
WORKER_COUNTS = tuple(int(w) for w in os.environ.get("DECOH_TEST_WORKERS", "1,2,8").split(","))

# Cross-route tolerance in units of γ.
ROUTE_TOLERANCE = float(os.environ.get("DECOH_ROUTE_TOLERANCE", "2e-2"))

# Cutoff factor and window used by the CTP route in Tier 1; smaller values trade accuracy for speed.
CTP_CUTOFF_FACTOR = float(os.environ.get("DECOH_CTP_CUTOFF_FACTOR", "20"))
CTP_MAX_DURATION = float(os.environ.get("DECOH_CTP_MAX_DURATION", "200"))
OVERLAP_DURATION = float(os.environ.get("DECOH_OVERLAP_DURATION", "400"))

_SPAN_EXPORTER = InMemorySpanExporter()


@pytest.fixture
def two_level() -> AtomModel:
    return AtomModel.two_level()


@pytest.fixture
def two_channel() -> AtomModel:
    """Decay channels at ω = 1 and ω = 2, unit dipoles."""
    return AtomModel((Channel("e->g1", 1.0, 1.0), Channel("e->g2", 2.0, 1.0)))


@pytest.fixture
def fast_quad() -> QuadratureSpec:
    """Coarser convergence target for tests that only check structure."""
    return QuadratureSpec(rel_tolerance=1e-5)


@pytest.fixture(scope="session")
def span_exporter() -> InMemorySpanExporter:
    """In-memory exporter behind the global tracer provider, installed once per session."""
    provider = TracerProvider()
    provider.add_span_processor(SimpleSpanProcessor(_SPAN_EXPORTER))
    trace.set_tracer_provider(provider)
    return _SPAN_EXPORTER


@pytest.fixture
def spans(span_exporter: InMemorySpanExporter) -> InMemorySpanExporter:
    span_exporter.clear()
    yield span_exporter
    span_exporter.clear()
