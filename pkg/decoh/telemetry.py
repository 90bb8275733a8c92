"""Tracing setup for command-line runs.

Library modules only talk to the OpenTelemetry API; spans are dropped until a
provider is installed here.
"""

from __future__ import annotations

import os
import sys
from typing import TextIO

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import ConsoleSpanExporter, SimpleSpanProcessor, SpanExporter

from decoh.errors import ConfigError

TRACE_MODES = ("off", "console", "otlp")
DEFAULT_OTLP_ENDPOINT = "localhost:4317"
SERVICE_NAME = "decoh"


def build_exporter(mode: str, *, endpoint: str | None = None, stream: TextIO | None = None) -> SpanExporter:
    if mode == "console":
        return ConsoleSpanExporter(out=stream or sys.stderr)
    if mode == "otlp":
        # Imported lazily so console-only runs never load gRPC.
        from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter

        target = endpoint or os.environ.get("OTEL_EXPORTER_OTLP_ENDPOINT", DEFAULT_OTLP_ENDPOINT)
        return OTLPSpanExporter(endpoint=target, insecure=True)
    raise ConfigError(f"trace mode must be one of {TRACE_MODES}, got {mode!r}")


def build_tracer_provider(exporter: SpanExporter) -> TracerProvider:
    provider = TracerProvider(resource=Resource.create({"service.name": SERVICE_NAME}))
    provider.add_span_processor(SimpleSpanProcessor(exporter))
    return provider


def configure_tracing(mode: str = "off", **options) -> TracerProvider | None:
    """Install a global provider for `mode`; the caller shuts it down."""
    if mode == "off":
        return None
    provider = build_tracer_provider(build_exporter(mode, **options))
    trace.set_tracer_provider(provider)
    return provider
