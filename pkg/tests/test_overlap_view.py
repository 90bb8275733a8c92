"""Tier 0: Pure unit tests — perturbed environment states and the overlap route."""

import io
import math
from dataclasses import replace

import numpy as np
import pytest
from helpers import sinc, spontaneous_rate

from decoh.errors import GridMismatch, GridTooCoarse, NegativeSeparation, NonPositiveDuration
from decoh.overlap_view import (
    STATE_CSV_HEADER,
    ModeGrid,
    inner_product,
    local_rate_from_norm,
    overlap_rate,
    overlap_rates,
    partial_wave_cutoff,
    perturb_env_state,
    time_window,
    total_rate_from_difference,
)

DURATION = 400.0


def sinc_array(x):
    return np.array([sinc(v) for v in x])


def _wells(atom, a, duration=DURATION):
    grid = ModeGrid.for_double_well(atom, a, duration)
    plus = perturb_env_state(atom, (0.0, 0.0, 0.5 * a), duration, grid, label="+")
    minus = perturb_env_state(atom, (0.0, 0.0, -0.5 * a), duration, grid, label="-")
    return grid, plus, minus


class TestHelpers:
    def test_partial_wave_cutoff(self):
        assert partial_wave_cutoff(0.0) == 16
        assert partial_wave_cutoff(100.0) > 100

    def test_time_window_on_resonance(self):
        assert time_window(np.array([0.0]), 10.0)[0] == pytest.approx(10.0)

    def test_time_window_zero(self):
        assert abs(time_window(np.array([2 * math.pi / 10.0]), 10.0)[0]) < 1e-14

    def test_time_window_matches_integral(self):
        detuning, duration = 0.37, 5.0
        expected = (1 - np.exp(-1j * detuning * duration)) / (1j * detuning)
        assert time_window(np.array([detuning]), duration)[0] == pytest.approx(expected, rel=1e-12)


class TestModeGrid:
    def test_spacing_and_span(self, two_level):
        grid = ModeGrid.build(two_level, DURATION)
        nodes = grid.nodes[0]
        assert nodes[1] - nodes[0] <= math.pi / (4 * DURATION) * (1 + 1e-12)
        assert nodes[0] == pytest.approx(0.5) and nodes[-1] == pytest.approx(1.5)
        assert grid.weights[0].sum() == pytest.approx(1.0, rel=1e-12)

    def test_short_window_widens_span(self, two_level):
        grid = ModeGrid.build(two_level, 20.0)
        assert grid.nodes[0][0] == 0.0
        assert grid.nodes[0][-1] == pytest.approx(3.0)

    def test_one_grid_per_channel(self, two_channel):
        grid = ModeGrid.build(two_channel, DURATION)
        assert len(grid.nodes) == 2
        assert grid.size == sum(n.size for n in grid.nodes)

    def test_l_max_follows_extent(self, two_level):
        assert ModeGrid.for_double_well(two_level, 0.0, DURATION).l_max == 16
        assert ModeGrid.for_double_well(two_level, 40.0, DURATION).l_max > 30

    def test_rejects_bad_inputs(self, two_level):
        with pytest.raises(NonPositiveDuration):
            ModeGrid.build(two_level, 0.0)
        with pytest.raises(NegativeSeparation):
            ModeGrid.for_double_well(two_level, -1.0, DURATION)

    def test_coarse_grid(self, two_level):
        grid = ModeGrid.build(two_level, DURATION, spacing=math.pi / DURATION)
        with pytest.raises(GridTooCoarse, match="spacing"):
            perturb_env_state(two_level, (0, 0, 0), DURATION, grid)

    def test_narrow_grid(self, two_level):
        grid = ModeGrid.build(two_level, DURATION, span_fraction=0.0)
        grid.check_resolves(two_level, DURATION)
        shorter = replace(grid, duration=0.5 * DURATION)
        with pytest.raises(GridTooCoarse, match="main lobes"):
            shorter.check_resolves(two_level, 0.5 * DURATION)

    def test_window_mismatch(self, two_level):
        grid = ModeGrid.build(two_level, DURATION)
        with pytest.raises(GridMismatch):
            perturb_env_state(two_level, (0, 0, 0), 2 * DURATION, grid)

    def test_channel_mismatch(self, two_level, two_channel):
        grid = ModeGrid.build(two_level, DURATION)
        with pytest.raises(GridMismatch, match="channels"):
            perturb_env_state(two_channel, (0, 0, 0), DURATION, grid)

    def test_well_off_axis(self, two_level):
        grid = ModeGrid.for_double_well(two_level, 2.0, DURATION)
        with pytest.raises(GridMismatch, match="off the grid axis"):
            grid.coordinate((0.5, 0.0, 0.0))

    def test_well_beyond_extent(self, two_level):
        grid = ModeGrid.for_double_well(two_level, 2.0, DURATION)
        with pytest.raises(GridMismatch, match="exceeds"):
            grid.coordinate((0.0, 0.0, 3.0))


class TestPerturbedEnvState:
    def test_partial_waves_reproduce_sinc(self, two_level):
        a = 3.7
        _, plus, minus = _wells(two_level, a)
        nodes = plus.grid.nodes[0]
        angular = np.sum(plus.angular[0] * minus.angular[0], axis=1)
        assert np.allclose(angular, sinc_array(nodes * a), atol=1e-12)

    def test_amplitude_shape(self, two_level):
        grid, plus, _ = _wells(two_level, 1.0)
        assert plus.amplitudes(0).shape == (grid.nodes[0].size, grid.l_max + 1)

    def test_norm_per_time_is_spontaneous_rate(self, two_level):
        _, plus, _ = _wells(two_level, 0.0)
        assert plus.norm_squared() / DURATION == pytest.approx(spontaneous_rate(1.0), rel=1e-2)

    def test_bias_shrinks_with_window(self, two_level):
        gamma = spontaneous_rate(1.0)
        errors = []
        for duration in (DURATION, 2 * DURATION):
            _, plus, minus = _wells(two_level, 0.0, duration)
            errors.append(abs(local_rate_from_norm(plus, minus) - gamma))
        assert errors[1] < 0.6 * errors[0]

    def test_states_must_share_grid(self, two_level):
        _, plus, _ = _wells(two_level, 1.0)
        _, other, _ = _wells(two_level, 1.0)
        with pytest.raises(GridMismatch):
            inner_product(plus, other)

    def test_local_rate_needs_a_state(self):
        with pytest.raises(GridMismatch):
            local_rate_from_norm()

    def test_csv(self, two_level):
        grid, plus, _ = _wells(two_level, 1.0)
        buffer = io.StringIO()
        plus.write_csv(buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == ",".join(STATE_CSV_HEADER)
        assert len(lines) == 1 + grid.size
        assert lines[1].endswith(",0,+")


class TestOverlapRates:
    @pytest.mark.parametrize("a_over_lambda", [0.0, 0.25, 0.5, 1.5])
    def test_matches_closed_form(self, two_level, a_over_lambda):
        gamma = spontaneous_rate(1.0)
        a = 2 * math.pi * a_over_lambda
        report = overlap_rates(two_level, a, DURATION)
        assert report.gamma_local == pytest.approx(gamma, rel=1e-2)
        assert report.gamma_nonlocal == pytest.approx(-gamma * sinc(a), abs=2e-2 * gamma)

    @pytest.mark.parametrize("a", [0.0, 1.0, 4.5])
    def test_difference_norm_identity(self, two_level, a):
        report = overlap_rates(two_level, a, DURATION)
        identity = abs(report.gamma_total - report.diagnostics["total_from_difference"])
        assert identity <= 1e-12 * report.gamma_local

    def test_coincident_wells_do_not_decohere(self, two_channel):
        report = overlap_rates(two_channel, 0.0, DURATION)
        assert report.gamma_total == 0.0
        assert report.diagnostics["total_from_difference"] == 0.0

    def test_two_channels(self, two_channel):
        a = 1.2
        report = overlap_rates(two_channel, a, DURATION)
        expected = -(spontaneous_rate(1.0) * sinc(a) + spontaneous_rate(2.0) * sinc(2 * a))
        gamma = spontaneous_rate(1.0) + spontaneous_rate(2.0)
        assert report.gamma_nonlocal == pytest.approx(expected, abs=2e-2 * gamma)

    def test_axis_does_not_matter(self, two_level):
        along_z = overlap_rates(two_level, 2.0, DURATION)
        along_x = overlap_rates(two_level, 2.0, DURATION, axis=(1.0, 0.0, 0.0))
        assert along_x.gamma_nonlocal == pytest.approx(along_z.gamma_nonlocal, rel=1e-12)

    def test_overlap_rate_sign(self, two_level):
        _, plus, minus = _wells(two_level, 0.0)
        assert overlap_rate(plus, minus) < 0
        assert total_rate_from_difference(plus, minus) == 0.0

    def test_emits_spans(self, two_level, spans):
        overlap_rates(two_level, 1.0, 100.0)
        names = [span.name for span in spans.get_finished_spans()]
        assert "overlap.rates" in names
        assert names.count("overlap.perturb_env_state") == 2
