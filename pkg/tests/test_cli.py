"""Tier 0: Pure unit tests — command-line front end, output rendering and exit codes."""

import json
import math
from unittest.mock import patch

import pytest
from helpers import OVERSHOOT_A_OVER_LAMBDA, OVERSHOOT_RATIO, parse_csv, spontaneous_rate

from decoh.cli import CommandOutput, build_parser, main, render, rounded, write_output
from decoh.config import CROSSCHECK_SEPARATIONS
from decoh.core_types import RateReport
from decoh.errors import ConfigError
from decoh.qed_rates import total_rate


def _exact(atom, a, *args, **kwargs):
    return total_rate(atom, a)


def _biased(atom, a, *args, **kwargs):
    closed = total_rate(atom, a)
    return RateReport(closed.gamma_local, closed.gamma_nonlocal + 0.1 * spontaneous_rate(1.0))


class TestRendering:
    def test_rounded_keeps_twelve_digits(self):
        assert rounded(1 / 3) == 0.333333333333

    def test_rounded_maps_nan_to_null(self):
        assert rounded({"ratio": math.nan, "rows": [1.0, (2, math.nan)]}) == {"ratio": None, "rows": [1.0, [2, None]]}

    def test_json_is_sorted(self):
        text = render(CommandOutput({"b": 1, "a": 2.0}), "json")
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_csv_needs_a_table(self):
        with pytest.raises(ConfigError, match="only produces JSON"):
            render(CommandOutput({"a": 1}), "csv")

    def test_write_output_to_stdout(self, capsys):
        write_output("hello\n", "-")
        assert capsys.readouterr().out == "hello\n"

    def test_write_output_failure(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot write"):
            write_output("x", str(tmp_path / "missing" / "out.csv"))

    def test_parser_defaults(self):
        args = build_parser().parse_args(["rates"])
        assert args.trace == "off"
        assert args.threads is None and args.output_format is None


class TestCommands:
    def test_scan_writes_301_rows(self, tmp_path):
        path = tmp_path / "scan.csv"
        assert main(["scan", "--out", str(path)]) == 0
        rows = parse_csv(path.read_text())
        assert len(rows) == 301
        assert rows[0]["gamma_total"] == 0.0
        assert rows[50]["ratio"] == pytest.approx(1.0, abs=1e-11)

    def test_scan_as_json(self, capsys):
        assert main(["scan", "--format", "json"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert len(document["rows"]) == 301
        assert document["reference_wavelength"] == pytest.approx(2 * math.pi)

    def test_scan_reports_exact_maximum(self, capsys):
        """The 0.01 grid peaks at 0.72 (1.2171332); the exact maximum rides alongside the rows."""
        assert main(["scan", "--format", "json"]) == 0
        document = json.loads(capsys.readouterr().out)
        overshoot = document["overshoot"]
        assert overshoot["a_over_lambda"] == pytest.approx(OVERSHOOT_A_OVER_LAMBDA, abs=1e-6)
        assert overshoot["ratio"] == pytest.approx(OVERSHOOT_RATIO, abs=1e-5)
        grid_max = max(row["ratio"] for row in document["rows"])
        assert grid_max == pytest.approx(1.2171332, abs=1e-6)
        assert grid_max < overshoot["ratio"]

    def test_rates_report_overshoot(self, capsys):
        assert main(["rates"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["overshoot"]["a_over_lambda"] == pytest.approx(OVERSHOOT_A_OVER_LAMBDA, abs=1e-6)
        assert document["overshoot"]["ratio"] == pytest.approx(OVERSHOOT_RATIO, abs=1e-5)
        assert document["gamma_spontaneous"] == pytest.approx(spontaneous_rate(1.0), rel=1e-11)
        assert len(document["reports"]) == 7
        assert document["reports"][0]["gamma_total"] == 0.0

    def test_rates_from_config(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "rates", "geometry": {"a_over_lambda": [0.5]}}))
        assert main(["--config", str(path)]) == 0
        document = json.loads(capsys.readouterr().out)
        assert [r["a_over_lambda"] for r in document["reports"]] == [0.5]

    def test_mismatch_needs_duration(self):
        assert main(["mismatch"]) == 2

    def test_mismatch_scan(self, tmp_path, capsys):
        path = tmp_path / "run.yaml"
        path.write_text("mismatch:\n  duration: 200\n  x_grid: {start: 0, stop: 4, num: 3}\n")
        assert main(["mismatch", "--config", str(path)]) == 0
        rows = parse_csv(capsys.readouterr().out)
        assert [row["d_omega_dt"] for row in rows] == [0.0, 2.0, 4.0]
        assert rows[0]["ratio"] == pytest.approx(-1.0, abs=1e-3)

    def test_kernel_demo(self, capsys):
        assert main(["kernel-demo"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["expected_gamma_local"] == pytest.approx(0.8)
        assert document["relative_deviation"] < 1e-3


class TestCrosscheck:
    @patch("decoh.cli.overlap_rates", side_effect=_exact)
    @patch("decoh.cli.ctp_rates", side_effect=_exact)
    def test_passes_when_routes_agree(self, mock_ctp, mock_overlap, capsys):
        assert main(["crosscheck", "--tolerance", "1e-9"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["passed"] is True
        assert len(document["separations"]) == len(CROSSCHECK_SEPARATIONS)
        assert mock_ctp.call_count == len(CROSSCHECK_SEPARATIONS)
        assert mock_overlap.call_count == 2 * len(CROSSCHECK_SEPARATIONS)

    @patch("decoh.cli.overlap_rates", side_effect=_biased)
    @patch("decoh.cli.ctp_rates", side_effect=_exact)
    def test_breach_exits_with_code_4(self, mock_ctp, mock_overlap, capsys):
        assert main(["crosscheck"]) == 4
        document = json.loads(capsys.readouterr().out)
        assert document["passed"] is False
        assert document["max_deviation"]["overlap"] == pytest.approx(0.1, rel=1e-9)
        assert document["max_deviation"]["ctp"] == 0.0

    @patch("decoh.cli.overlap_rates", side_effect=_exact)
    @patch("decoh.cli.ctp_rates", side_effect=_exact)
    def test_threads_reach_quadrature(self, mock_ctp, mock_overlap):
        assert main(["crosscheck", "--threads", "3", "--out", "-"]) == 0
        assert mock_ctp.call_args.kwargs["quad"].workers == 3

    @patch("decoh.cli.overlap_rates", side_effect=_exact)
    @patch("decoh.cli.ctp_rates", side_effect=_exact)
    def test_csv_not_available(self, mock_ctp, mock_overlap):
        assert main(["crosscheck", "--format", "csv"]) == 2


class TestExitCodes:
    def test_no_command(self):
        assert main([]) == 2

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"command": "rates", "atom": {"channels": [{"bohr_frequency": -1}]}}))
        assert main(["--config", str(path)]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["rates", "--config", str(tmp_path / "absent.json")]) == 2

    def test_bad_threads(self):
        assert main(["rates", "--threads", "0"]) == 2

    def test_errors_are_logged(self, caplog):
        assert main([]) == 2
        assert "no command given" in caplog.text


class TestTracing:
    @patch("decoh.telemetry.trace.set_tracer_provider")
    def test_console_tracing_installs_provider(self, mock_set):
        assert main(["rates", "--trace", "console", "--out", "-"]) == 0
        mock_set.assert_called_once()

    @patch("decoh.telemetry.trace.set_tracer_provider")
    def test_tracing_off_by_default(self, mock_set):
        assert main(["rates", "--out", "-"]) == 0
        mock_set.assert_not_called()
