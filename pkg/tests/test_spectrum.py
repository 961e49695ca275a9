import math

import numpy as np
import pytest

from tpmr.types import DriveTone, FitResult, NvParams, SpurLine, SweepAxis
from tpmr.core.spin_model import tpmr_positions
from tpmr.spectrum import (
    DiplexerTable,
    SynthRequest,
    SynthSettings,
    apply_spurs,
    carrier_detunings,
    carrier_fwhm,
    gaussian_profile,
    model_dips,
    power_to_rabi,
    sideband_visible,
    spur_depth_ratio,
    spur_lines,
    sweep,
    synth_spectrum,
    visibility_onset,
)

GRID = np.round(np.arange(-15.0, 15.0001, 0.02), 10)
POWERS = (0.63, 2.00, 10.0, 31.6, 63.0)


def _pump(power_mw: float, freq: float = 5.3) -> DriveTone:
    return DriveTone.pump(power_to_rabi(power_mw, 0.19), freq)


def _request(nv: NvParams, power_mw: float, **kwargs: float) -> SynthRequest:
    return SynthRequest(p=nv, pump=_pump(power_mw), probe_rabi=0.0909, grid=GRID, **kwargs)


def _model_fit(nv: NvParams, power_mw: float) -> FitResult:
    dips = tuple(model_dips(_request(nv, power_mw)))
    return FitResult(dips=dips, baseline=0.0, rss=0.0, n_peaks=len(dips), score=0.0,
                     converged=True, iterations=0)


class TestModelDips:
    def test_pump_off_gives_hyperfine_triplet(self, nv: NvParams) -> None:
        dips = model_dips(_request(nv, 0.0))
        assert [d.center for d in dips] == pytest.approx([-2.2, 0.0, 2.2])
        assert all(d.depth == pytest.approx(0.017) for d in dips)
        assert all(d.fwhm == pytest.approx(1.0 / (math.pi * 0.448)) for d in dips)

    def test_strong_pump_gives_nine_dips(self, nv: NvParams) -> None:
        dips = model_dips(_request(nv, 63.0))
        assert len(dips) == 9
        sidebands = [f - nv.f0 for f in tpmr_positions(nv, 5.3)]
        centers = [d.center for d in dips]
        assert sorted(sidebands + list(carrier_detunings(nv))) == pytest.approx(centers)

    def test_depths_and_widths_at_63_mw(self, nv: NvParams) -> None:
        dips = model_dips(_request(nv, 63.0))
        carrier = min(dips, key=lambda d: abs(d.center))
        sideband = min(dips, key=lambda d: abs(d.center + 7.5))
        assert carrier.depth == pytest.approx(0.0157, abs=2e-4)
        assert sideband.depth == pytest.approx(0.0046, abs=2e-4)
        assert carrier.fwhm == pytest.approx(carrier_fwhm(nv))
        assert sideband.fwhm == pytest.approx(0.45 * carrier_fwhm(nv))

    def test_positions_do_not_depend_on_power(self, nv: NvParams) -> None:
        strong = [d.center for d in model_dips(_request(nv, 63.0))]
        weak = [d.center for d in model_dips(_request(nv, 10.0))]
        assert strong == pytest.approx(weak)


class TestSynthSpectrum:
    def test_noiseless_spectrum_is_the_profile(self, nv: NvParams) -> None:
        s = synth_spectrum(nv, _pump(63.0), 0.0909, GRID, 0.0, 0)
        assert np.array_equal(s.contrast, gaussian_profile(GRID, model_dips(_request(nv, 63.0))))
        assert s.meta["pump_freq_mhz"] == 5.3
        assert s.meta["source"] == "synth"

    def test_seeded_noise_is_reproducible(self, nv: NvParams) -> None:
        first = synth_spectrum(nv, _pump(10.0), 0.0909, GRID, 1e-3, 42)
        second = synth_spectrum(nv, _pump(10.0), 0.0909, GRID, 1e-3, 42)
        other = synth_spectrum(nv, _pump(10.0), 0.0909, GRID, 1e-3, 43)
        assert np.array_equal(first.contrast, second.contrast)
        assert not np.array_equal(first.contrast, other.contrast)

    def test_power_conversion(self) -> None:
        assert power_to_rabi(63.0, 0.19) == pytest.approx(1.508, abs=1e-3)


class TestSweep:
    def test_power_sweep_metadata(self, nv: NvParams) -> None:
        spectra = sweep(nv, SweepAxis.PUMP_POWER, POWERS, 5.3, GRID, seed=7)
        assert len(spectra) == 5
        assert [s.meta["pump_power_mw"] for s in spectra] == list(POWERS)
        assert len({s.meta["seed"] for s in spectra}) == 5

    def test_frequency_sweep_holds_power(self, nv: NvParams) -> None:
        spectra = sweep(nv, SweepAxis.PUMP_FREQ, (3.0, 8.0), 63.0, GRID, seed=7)
        assert [s.meta["pump_freq_mhz"] for s in spectra] == [3.0, 8.0]
        assert all(s.meta["pump_power_mw"] == 63.0 for s in spectra)

    def test_worker_count_does_not_change_output(self, nv: NvParams) -> None:
        serial = sweep(nv, SweepAxis.PUMP_POWER, POWERS[:3], 5.3, GRID, seed=1)
        parallel = sweep(nv, SweepAxis.PUMP_POWER, POWERS[:3], 5.3, GRID, seed=1, jobs=2)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.contrast, b.contrast)


class TestVisibility:
    def test_ratio_crosses_threshold_at_10_mw(self, nv: NvParams) -> None:
        carriers = carrier_detunings(nv)
        assert not sideband_visible(_model_fit(nv, 2.0), carriers, 5.3)
        assert sideband_visible(_model_fit(nv, 10.0), carriers, 5.3)

    def test_three_dip_fit_is_never_visible(self, nv: NvParams) -> None:
        assert not sideband_visible(_model_fit(nv, 0.0), carrier_detunings(nv), 5.3)

    def test_onset_over_power_series(self, nv: NvParams) -> None:
        fits = [_model_fit(nv, p) for p in POWERS]
        onset = visibility_onset(POWERS, fits, carrier_detunings(nv), 5.3)
        assert onset == 10.0
        assert 2.0 < onset < 31.6


class TestDiplexer:
    def test_table_levels(self) -> None:
        table = DiplexerTable()
        assert table.at(63.0) == {1: -48.0, 2: -15.0}
        assert table.at(2.0) == {}

    def test_extrapolation_follows_intermodulation_slope(self) -> None:
        levels = DiplexerTable().at(31.6)
        shift = 10.0 * math.log10(31.6 / 63.0)
        assert levels[1] == pytest.approx(-48.0 + shift)
        assert levels[2] == pytest.approx(-15.0 + 2.0 * shift)

    def test_levels_clamped_at_carrier(self) -> None:
        assert DiplexerTable().at(630.0)[2] == 0.0

    def test_spur_lines(self) -> None:
        lines = spur_lines(2822.0, 5.3, 2, {1: -48.0, 2: -15.0})
        assert [line.n for line in lines] == [-2, -1, 0, 1, 2]
        assert [line.freq for line in lines] == pytest.approx(
            [2811.4, 2816.7, 2822.0, 2827.3, 2832.6]
        )
        assert lines[2].amplitude_db == 0.0

    def test_orders_missing_from_model_are_skipped(self) -> None:
        lines = spur_lines(2822.0, 5.3, 2, {2: -15.0})
        assert [line.n for line in lines] == [-2, 0, 2]

    def test_depth_ratio(self) -> None:
        assert spur_depth_ratio(0.0) == pytest.approx(1.0)
        assert spur_depth_ratio(-48.0) < 1e-3
        assert spur_depth_ratio(-15.0) == pytest.approx(0.076, abs=2e-3)

    def test_measured_first_order_spurs_are_negligible(self, nv: NvParams) -> None:
        request = _request(nv, 0.0)
        clean = apply_spurs(request, [])
        spurs = [SpurLine(n, 2822.0 + 5.3 * n, -48.0) for n in (-1, 1)]
        dirty = apply_spurs(request, spurs)
        difference = float(np.max(np.abs(dirty.contrast - clean.contrast)))
        assert difference < 1e-3 * 0.017
        assert dirty.meta["spurs"] == 2

    def test_full_amplitude_spur_is_visible(self, nv: NvParams) -> None:
        request = _request(nv, 0.0)
        dirty = apply_spurs(request, [SpurLine(1, 2827.3, 0.0)])
        at_shifted = float(np.interp(-5.3, GRID, dirty.contrast))
        assert at_shifted == pytest.approx(-0.017, rel=1e-3)
