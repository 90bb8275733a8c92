"""Tier 0: Pure unit tests — nonlocal rate of wells with shifted Bohr frequencies."""

import io
import math

import numpy as np
import pytest
from helpers import mismatch_ratio, sinc, spontaneous_rate

from decoh.core_types import AtomModel, Channel
from decoh.errors import ConfigError, NegativeSeparation, NonPositiveDuration, NonPositiveFrequency
from decoh.mismatch import (
    CSV_HEADER,
    MismatchScan,
    ShiftedAtomPair,
    gamma_l_mismatch,
    gamma_nl_mismatch,
    gamma_nl_mismatch_overlap,
    mismatch_closed_form,
    reference_rate,
    resonant_overlap,
    scan_detuning,
    scan_mismatch,
    window_suppression,
)
from decoh.qed_rates import MODE_DENSITY

PRODUCTS = tuple(float(x) for x in np.linspace(0.0, 20.0, 41))


class TestShiftedAtomPair:
    def test_symmetric_shift(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.2)
        assert pair.plus == pytest.approx((1.1,))
        assert pair.minus == pytest.approx((0.9,))
        assert pair.detunings == pytest.approx((0.2,))
        assert pair.mean_frequencies == pytest.approx((1.0,))

    def test_per_channel_shifts(self, two_channel):
        pair = ShiftedAtomPair.symmetric(two_channel, [0.1, 0.4])
        assert pair.detunings == pytest.approx((0.1, 0.4))
        assert list(pair.mean_atom.frequencies) == pytest.approx([1.0, 2.0])

    def test_rejects_non_positive_frequency(self, two_level):
        with pytest.raises(NonPositiveFrequency):
            ShiftedAtomPair.symmetric(two_level, 3.0)

    def test_rejects_wrong_length(self, two_channel):
        with pytest.raises(ConfigError):
            ShiftedAtomPair(two_channel, (1.0,), (1.0,))

    def test_local_rate_is_mean_of_wells(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.2)
        assert gamma_l_mismatch(pair) == pytest.approx(1.030 / (6 * math.pi), rel=1e-12)

    def test_reference_rate_uses_mean_frequency(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.2)
        assert reference_rate(pair) == pytest.approx(spontaneous_rate(1.0), rel=1e-12)


class TestClosedForm:
    def test_no_shift_reduces_to_static_wells(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.0)
        assert mismatch_closed_form(pair, 1.3, 50.0) == pytest.approx(-spontaneous_rate(1.0) * sinc(1.3))

    @pytest.mark.parametrize("x", [0.5, 4.0, 17.0])
    def test_window_suppression(self, two_level, x):
        duration = 100.0
        pair = ShiftedAtomPair.symmetric(two_level, x / duration)
        expected = mismatch_ratio(x) * reference_rate(pair)
        assert mismatch_closed_form(pair, 0.0, duration) == pytest.approx(expected, rel=1e-12)
        assert window_suppression(x) == pytest.approx(sinc(x))


class TestResonantOverlap:
    @pytest.mark.parametrize("a", [0.0, 2.0])
    def test_fourier_transform_of_field_correlator(self, a):
        cutoff = 20.0
        value = resonant_overlap(1.0, a, cutoff)
        expected = 2 * math.pi * MODE_DENSITY * sinc(a) * math.exp(-1.0 / cutoff)
        assert value.real == pytest.approx(expected, rel=1e-5)
        assert abs(value.imag) < 1e-6 * abs(expected)


class TestGammaNlMismatch:
    DURATION = 200.0

    def test_extended_mode_matches_oracle(self, two_level):
        scan = scan_detuning(two_level, 0.0, self.DURATION, PRODUCTS)
        for x, ratio in zip(scan.products, scan.ratios):
            assert ratio == pytest.approx(mismatch_ratio(x), abs=1e-3)

    def test_separated_wells(self, two_level):
        a = 2.5
        scan = scan_detuning(two_level, a, self.DURATION, [0.0, 3.0, 9.0])
        for x, ratio in zip(scan.products, scan.ratios):
            assert ratio == pytest.approx(mismatch_ratio(x, a), abs=1e-3)

    def test_large_mismatch_is_suppressed(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 100.0 / self.DURATION)
        rate = gamma_nl_mismatch(pair, 0.0, self.DURATION)
        assert abs(rate) <= 0.02 * reference_rate(pair)

    def test_ratio_depends_only_on_product(self, two_level):
        short = scan_detuning(two_level, 0.0, 100.0, [1.0, 5.0])
        long = scan_detuning(two_level, 0.0, 400.0, [1.0, 5.0])
        assert short.ratios == pytest.approx(long.ratios, abs=1e-5)

    def test_single_point_agrees_with_scan(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 4.0 / self.DURATION)
        rate = gamma_nl_mismatch(pair, 0.0, self.DURATION)
        scan = scan_detuning(two_level, 0.0, self.DURATION, [4.0])
        assert rate / reference_rate(pair) == pytest.approx(scan.ratios[0], rel=1e-9)

    def test_two_channels(self, two_channel):
        x = 2.0
        pair = ShiftedAtomPair.symmetric(two_channel, x / self.DURATION)
        expected = -(spontaneous_rate(1.0) + spontaneous_rate(2.0)) * sinc(x)
        assert gamma_nl_mismatch(pair, 0.0, self.DURATION) == pytest.approx(expected, rel=1e-3)

    def test_finite_mode_transient_decays(self, two_level):
        """The exact-square result approaches the extended one like 1/Δt."""
        pair = ShiftedAtomPair.symmetric(two_level, 0.0)
        gaps = []
        for duration in (20.0, 40.0):
            finite = gamma_nl_mismatch(pair, 0.0, duration, cutoff=10.0, mode="finite")
            extended = gamma_nl_mismatch(pair, 0.0, duration, cutoff=10.0)
            gaps.append(abs(finite - extended))
        assert gaps[1] < 0.6 * gaps[0]

    def test_finite_mode_with_shift(self, two_level):
        duration = 20.0
        shifted = ShiftedAtomPair.symmetric(two_level, 2.0 / duration)
        finite = gamma_nl_mismatch(shifted, 0.0, duration, cutoff=10.0, mode="finite")
        assert math.isfinite(finite)

    def test_unknown_mode(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.0)
        with pytest.raises(ConfigError, match="mode"):
            gamma_nl_mismatch(pair, 0.0, 10.0, mode="exact")

    def test_input_validation(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.0)
        with pytest.raises(NegativeSeparation):
            gamma_nl_mismatch(pair, -1.0, 10.0)
        with pytest.raises(NonPositiveDuration):
            gamma_nl_mismatch(pair, 0.0, 0.0)


class TestOverlapView:
    @pytest.mark.parametrize("x", [0.0, 3.0, 8.0])
    def test_overlap_route_matches_oracle(self, two_level, x):
        duration = 400.0
        pair = ShiftedAtomPair.symmetric(two_level, x / duration)
        rate = gamma_nl_mismatch_overlap(pair, 0.0, duration)
        assert rate / reference_rate(pair) == pytest.approx(mismatch_ratio(x), abs=2e-2)


class TestMismatchScan:
    def test_scan_over_windows(self, two_level):
        pair = ShiftedAtomPair.symmetric(two_level, 0.05)
        scan = scan_mismatch(pair, 0.0, [20.0, 100.0])
        assert scan.products == pytest.approx((1.0, 5.0))
        assert scan.ratios == pytest.approx((mismatch_ratio(1.0), mismatch_ratio(5.0)), abs=1e-3)

    def test_csv_round_trip(self):
        scan = MismatchScan((0.0, 0.5), (-1.0, -0.9589))
        buffer = io.StringIO()
        scan.write_csv(buffer)
        assert buffer.getvalue().splitlines()[0] == ",".join(CSV_HEADER)
        buffer.seek(0)
        assert MismatchScan.read_csv(buffer) == scan

    def test_csv_rejects_other_tables(self):
        with pytest.raises(ConfigError):
            MismatchScan.read_csv(io.StringIO("a_over_lambda,gamma_L\n0,1\n"))

    def test_dark_channel_gives_zero_ratio(self):
        dark = AtomModel((Channel("dark", 1.0, 0.0),))
        scan = scan_detuning(dark, 0.0, 50.0, [0.0, 1.0])
        assert scan.ratios == (0.0, 0.0)
