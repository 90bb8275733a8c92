"""Command-line front end.

    decoh scan --out fig2.csv
    decoh crosscheck --config run.json --threads 8

Exit codes: 0 ok, 2 configuration error, 3 numerical non-convergence,
4 crosscheck tolerance breach.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from opentelemetry import trace

from decoh.config import COMMANDS, FORMATS, RunConfig, apply_overrides, load_config, resolve_workers
from decoh.core_types import ConstantPath, PathPair
from decoh.ctp_functional import InfluenceKernel, kernel_stationary_rates
from decoh.errors import ConfigError, CrosscheckFailed, DecohError
from decoh.mismatch import MismatchScan, ShiftedAtomPair, gamma_nl_mismatch, reference_rate, scan_detuning
from decoh.overlap_view import overlap_rates
from decoh.qed_rates import (
    CSV_HEADER,
    ctp_rates,
    default_schedule,
    format_float,
    gamma_spontaneous,
    overshoot_point,
    scan_separation,
    total_rate,
)
from decoh.telemetry import TRACE_MODES, configure_tracing

logger = logging.getLogger("decoh")
tracer = trace.get_tracer(__name__)


@dataclass(frozen=True)
class CommandOutput:
    document: Any
    write_csv: Callable[[io.TextIOBase], None] | None = None
    default_format: str = "json"
    failure: str | None = None


def rounded(value: Any) -> Any:
    """Round floats to the 12 significant digits every output uses; NaN becomes null."""
    if isinstance(value, float):
        return None if math.isnan(value) else float(format_float(value))
    if isinstance(value, dict):
        return {k: rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [rounded(v) for v in value]
    return value


def cmd_rates(config: RunConfig) -> CommandOutput:
    scan = scan_separation(config.atom, config.separations())
    a_star, ratio_star = overshoot_point(config.atom.reference)
    document = {
        "atom": config.atom.to_dict(),
        "gamma_spontaneous": gamma_spontaneous(config.atom),
        "overshoot": {"a_over_lambda": a_star, "ratio": ratio_star},
        "reports": [
            {"a_over_lambda": a, **report.to_dict()} for a, report in zip(scan.a_over_lambda, scan.reports)
        ],
    }
    return CommandOutput(document, scan.write_csv, "json")


def cmd_scan(config: RunConfig) -> CommandOutput:
    scan = scan_separation(config.atom, config.separations())
    a_star, ratio_star = overshoot_point(config.atom.reference)
    document = {
        "reference_wavelength": scan.reference_wavelength,
        # Grid rows straddle the maximum; this is the exact point.
        "overshoot": {"a_over_lambda": a_star, "ratio": ratio_star},
        "rows": [
            dict(zip(CSV_HEADER, row)) for row in scan.rows()
        ],
    }
    return CommandOutput(document, scan.write_csv, "csv")


def cmd_mismatch(config: RunConfig) -> CommandOutput:
    settings = config.mismatch
    if settings.duration is None:
        raise ConfigError("mismatch: 'mismatch.duration' (Δt in units of 1/ω₀) is required")
    duration = settings.duration * config.time_unit
    a = config.atom.units.length_from_wavelengths(settings.a_over_lambda)
    quad = config.quadrature
    cutoff = config.ctp.cutoff_factor * config.atom.max_frequency
    if settings.mode == "extended":
        scan = scan_detuning(config.atom, a, duration, settings.products, cutoff=cutoff, quad=quad)
    else:
        ratios = []
        for x in settings.products:
            pair = ShiftedAtomPair.symmetric(config.atom, x / duration)
            rate = gamma_nl_mismatch(pair, a, duration, cutoff=cutoff, quad=quad, mode="finite")
            gamma_bar = reference_rate(pair)
            ratios.append(rate / gamma_bar if gamma_bar > 0 else 0.0)
        scan = MismatchScan(settings.products, tuple(ratios))
    document = {
        "duration": duration,
        "a_over_lambda": settings.a_over_lambda,
        "mode": settings.mode,
        "rows": [{"d_omega_dt": x, "ratio": r} for x, r in zip(scan.products, scan.ratios)],
    }
    return CommandOutput(document, scan.write_csv, "csv")


def cmd_kernel_demo(config: RunConfig) -> CommandOutput:
    settings = config.kernel_demo
    kernel = InfluenceKernel.exponential_test_kernel(settings.memory_time, settings.omega)
    origin = ConstantPath((0.0, 0.0, 0.0))
    schedule = default_schedule(settings.max_duration, settings.schedule_points)
    report = kernel_stationary_rates(
        kernel,
        lambda dt: PathPair(origin, origin, dt),
        schedule,
        config.quadrature,
        tolerance=config.ctp.fit_tolerance,
        tail_fraction=config.ctp.tail_fraction,
    )
    tau_c, omega = settings.memory_time, settings.omega
    expected = 4.0 * tau_c / (1.0 + (omega * tau_c) ** 2)
    document = {
        "memory_time": tau_c,
        "omega": omega,
        "expected_gamma_local": expected,
        "relative_deviation": abs(report.gamma_local - expected) / expected,
        "report": report.to_dict(),
    }
    return CommandOutput(document)


def _deviation(value: float, reference: float, scale: float) -> float:
    return abs(value - reference) / scale if scale > 0 else abs(value - reference)


def cmd_crosscheck(config: RunConfig) -> CommandOutput:
    atom = config.atom
    gamma = gamma_spontaneous(atom)
    unit = 1.0 / atom.min_frequency
    cutoff = config.ctp.cutoff_factor * atom.max_frequency
    schedule = default_schedule(config.ctp.max_duration * unit, config.ctp.schedule_points)
    duration = config.overlap.duration * unit
    rows, worst = [], {"ctp": 0.0, "overlap": 0.0}
    for a_over_lambda in config.separations():
        a = atom.units.length_from_wavelengths(a_over_lambda)
        closed = total_rate(atom, a)
        ctp = ctp_rates(
            atom,
            a,
            cutoff=cutoff,
            schedule=schedule,
            quad=config.quadrature,
            axis=config.axis,
            tolerance=config.ctp.fit_tolerance,
            tail_fraction=config.ctp.tail_fraction,
        )
        overlap = overlap_rates(atom, a, duration, axis=config.axis, span_fraction=config.overlap.span_fraction)
        refined = overlap_rates(atom, a, 2 * duration, axis=config.axis, span_fraction=config.overlap.span_fraction)
        row: dict[str, Any] = {"a_over_lambda": a_over_lambda, "closed_form": closed.to_dict()}
        for name, report in (("ctp", ctp), ("overlap", overlap)):
            deviations = {
                "gamma_L": _deviation(report.gamma_local, closed.gamma_local, gamma),
                "gamma_NL": _deviation(report.gamma_nonlocal, closed.gamma_nonlocal, gamma),
                "gamma_total": _deviation(report.gamma_total, closed.gamma_total, gamma),
            }
            worst[name] = max(worst[name], *deviations.values())
            row[name] = {**report.to_dict(), "deviation": deviations}
        row["overlap_refined"] = {
            "duration": 2 * duration,
            "gamma_total_deviation": _deviation(refined.gamma_total, closed.gamma_total, gamma),
        }
        rows.append(row)
    tolerances = {"ctp": config.tolerances.ctp, "overlap": config.tolerances.overlap}
    breaches = [
        f"{name} deviation {worst[name]:.3e} > {tolerances[name]:g}" for name in worst if worst[name] > tolerances[name]
    ]
    document = {
        "gamma_spontaneous": gamma,
        "cutoff": cutoff,
        "ctp_schedule": schedule,
        "overlap_duration": duration,
        "tolerances": tolerances,
        "max_deviation": worst,
        "passed": not breaches,
        "separations": rows,
    }
    return CommandOutput(document, failure="; ".join(breaches) or None)


HANDLERS: dict[str, Callable[[RunConfig], CommandOutput]] = {
    "rates": cmd_rates,
    "scan": cmd_scan,
    "mismatch": cmd_mismatch,
    "kernel-demo": cmd_kernel_demo,
    "crosscheck": cmd_crosscheck,
}


def render(output: CommandOutput, output_format: str) -> str:
    if output_format == "csv":
        if output.write_csv is None:
            raise ConfigError("this command only produces JSON output")
        buffer = io.StringIO()
        output.write_csv(buffer)
        return buffer.getvalue()
    return json.dumps(rounded(output.document), indent=2, sort_keys=True) + "\n"


def write_output(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decoh", description="Local and nonlocal decoherence rates.")
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="defaults to the config's 'command'")
    parser.add_argument("--config", help="JSON (or YAML) run configuration")
    parser.add_argument("--out", help="output file, '-' for standard output")
    parser.add_argument("--format", choices=FORMATS, dest="output_format")
    parser.add_argument("--tolerance", type=float, help="crosscheck tolerance for every route")
    parser.add_argument("--threads", type=int, help="worker threads (default $DECOH_THREADS or 1)")
    parser.add_argument("--trace", choices=TRACE_MODES, default="off", help="export OpenTelemetry spans")
    parser.add_argument("--verbose", action="store_true", help="debug logging on standard error")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    provider = None
    try:
        provider = configure_tracing(args.trace)
        config = load_config(args.config) if args.config else RunConfig()
        config = apply_overrides(
            config,
            command=args.command,
            out=args.out,
            output_format=args.output_format,
            tolerance=args.tolerance,
            workers=resolve_workers(args.threads),
        )
        if config.command is None:
            raise ConfigError(f"no command given; choose one of {COMMANDS}")
        with tracer.start_as_current_span(f"cli.{config.command}") as span:
            span.set_attribute("cli.workers", config.quadrature.workers)
            output = HANDLERS[config.command](config)
        write_output(render(output, config.output_format or output.default_format), config.output_path)
        if output.failure:
            raise CrosscheckFailed(f"crosscheck failed: {output.failure}")
        return 0
    except DecohError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    finally:
        if provider is not None:
            provider.shutdown()


if __name__ == "__main__":
    raise SystemExit(main())
