import math

import numpy as np
import pytest

from tpmr.types import (
    DensityState, DriveTone, NvParams, PhaseMode, PropagationFrame, PulseSequence, SpinLabel
)
from tpmr.errors import ErrorCode
from tpmr.core.spin_model import SPIN_VALUES, energy_level, tpmr_positions
from tpmr.fitting import select_model
from tpmr.core.dynamics import (
    FWHM_PER_SIGMA,
    OracleSettings,
    initial_state,
    quasi_static_sigma,
    detuning_offsets,
    pulse_response,
    max_drive_frequency,
    resolve_step,
    lab_hamiltonian,
    rotating_hamiltonian,
    propagate,
    step_doubling_error,
    rabi_trace,
    transition_probability,
    simulate_odmr,
)

PUMP_OFF = DriveTone.pump(0.0, 5.3)
PUMP_ON = DriveTone.pump(1.508, 5.3)


@pytest.fixture
def probe(nv: NvParams) -> DriveTone:
    return DriveTone.probe(0.0909, nv.f0)


def _index(ms: int, mi: int) -> int:
    return SPIN_VALUES.index(ms) * 3 + SPIN_VALUES.index(mi)


class TestStateAndSteps:
    def test_initial_state(self) -> None:
        rho = initial_state()
        assert rho.trace() == pytest.approx(1.0)
        assert rho.purity() == pytest.approx(1.0 / 3.0)
        assert rho.is_physical()
        assert rho.electron_populations()[0] == pytest.approx(1.0)
        assert rho.nuclear_populations() == pytest.approx({1: 1 / 3, 0: 1 / 3, -1: 1 / 3})

    def test_quasi_static_width_matches_linewidth(self) -> None:
        assert quasi_static_sigma(0.448) * FWHM_PER_SIGMA == pytest.approx(1.0 / (math.pi * 0.448))

    def test_max_drive_frequency(self, nv: NvParams, probe: DriveTone) -> None:
        assert max_drive_frequency(nv, probe, PUMP_OFF) == 0.0
        assert max_drive_frequency(nv, probe, PUMP_ON) == pytest.approx(5.3)
        assert max_drive_frequency(nv, probe, PUMP_ON, PropagationFrame.LAB) == nv.d_gs
        with_fast = max_drive_frequency(nv, probe, PUMP_OFF, counter_rotating=True)
        assert with_fast == pytest.approx(2.0 * probe.freq)

    def test_resolve_step(self) -> None:
        assert resolve_step(0.0, 0.0, 5.5).unwrap() == 5.5
        assert resolve_step(0.0, 5.3, 5.5).unwrap() == pytest.approx(1.0 / 265.0)
        assert resolve_step(0.001, 5.3, 5.5).unwrap() == 0.001

    def test_step_above_limit_rejected(self) -> None:
        result = resolve_step(0.01, 5.3, 5.5)
        assert result.is_err()
        assert result.unwrap_err().code == ErrorCode.STEP_SIZE_VIOLATION

    def test_negative_step_rejected(self) -> None:
        assert resolve_step(-1.0, 5.3, 5.5).unwrap_err().code == ErrorCode.INVALID_PARAMETER


class TestHamiltonians:
    def test_lab_diagonal_holds_level_energies(self, nv: NvParams, probe: DriveTone) -> None:
        h = lab_hamiltonian(nv, probe, PUMP_OFF, 0.0) / (2.0 * math.pi)
        for ms in SPIN_VALUES:
            for mi in SPIN_VALUES:
                i = _index(ms, mi)
                assert h[i, i].real == pytest.approx(energy_level(nv, SpinLabel(ms, mi)))

    @pytest.mark.parametrize("t", [0.0, 0.037, 1.3])
    def test_hermitian_and_block_diagonal(
        self, nv: NvParams, probe: DriveTone, t: float
    ) -> None:
        for h in (
            lab_hamiltonian(nv, probe, PUMP_ON, t),
            rotating_hamiltonian(nv, probe, PUMP_ON, t),
            rotating_hamiltonian(nv, probe, PUMP_ON, t, counter_rotating=True),
        ):
            assert np.allclose(h, h.conj().T)
            assert h[_index(0, 1), _index(-1, 0)] == 0.0
            assert h[_index(0, 0), _index(0, -1)] == 0.0

    def test_rotating_frame_probe_coupling(self, nv: NvParams, probe: DriveTone) -> None:
        h = rotating_hamiltonian(nv, probe, PUMP_OFF, 0.0) / (2.0 * math.pi)
        assert h[_index(0, 0), _index(-1, 0)] == pytest.approx(0.5 * probe.rabi)
        assert h[_index(0, 0), _index(0, 0)] == pytest.approx(
            h[_index(-1, 0), _index(-1, 0)]
        )


class TestPropagation:
    def test_zero_duration_is_identity(self, nv: NvParams, probe: DriveTone) -> None:
        rho0 = initial_state()
        assert propagate(rho0, nv, probe, PUMP_ON, 0.0, 0.0).unwrap() is rho0

    def test_negative_duration_rejected(self, nv: NvParams, probe: DriveTone) -> None:
        result = propagate(initial_state(), nv, probe, PUMP_ON, -1.0, 0.0)
        assert result.unwrap_err().code == ErrorCode.INVALID_PARAMETER

    def test_unitary_evolution_keeps_state_physical(
        self, nv: NvParams, probe: DriveTone
    ) -> None:
        rho = propagate(initial_state(), nv, probe, PUMP_ON, 1.0, 0.0).unwrap()
        assert rho.is_physical()
        assert rho.purity() == pytest.approx(1.0 / 3.0, abs=1e-10)
        assert rho.nuclear_populations() == pytest.approx({1: 1 / 3, 0: 1 / 3, -1: 1 / 3})

    def test_resonant_probe_flips_one_manifold(self, nv: NvParams, probe: DriveTone) -> None:
        rho = propagate(initial_state(), nv, probe, PUMP_OFF, 5.5, 0.0).unwrap()
        populations = rho.populations()
        assert populations[_index(-1, 0)] == pytest.approx(1.0 / 3.0, abs=1e-3)
        assert populations[_index(-1, 1)] < 0.05

    def test_step_doubling_error_is_small(self, nv: NvParams, probe: DriveTone) -> None:
        estimate = step_doubling_error(initial_state(), nv, probe, PUMP_ON, 0.5, 1.0 / 265.0)
        assert estimate.is_ok()
        assert estimate.unwrap() < 1e-4

    def test_pi_pulse_transfer(self, nv: NvParams) -> None:
        transfer = transition_probability(nv, 0.0909, [nv.f0], PUMP_OFF, 5.5)
        assert transfer.unwrap()[0] == pytest.approx(1.0, abs=1e-3)

    def test_rabi_trace_oscillates(self, nv: NvParams, probe: DriveTone) -> None:
        times, population = rabi_trace(nv, probe, PUMP_OFF, 11.0, 0.05).unwrap()
        assert population[0] == 0.0
        assert times[-1] == pytest.approx(11.0)
        assert population.max() == pytest.approx(1.0, abs=1e-3)

    def test_rabi_trace_invalid_manifold(self, nv: NvParams, probe: DriveTone) -> None:
        result = rabi_trace(nv, probe, PUMP_OFF, 1.0, 0.0, manifold=2)
        assert result.unwrap_err().code == ErrorCode.INVALID_PARAMETER

    @pytest.mark.slow
    def test_lab_and_rotating_frames_agree(self, nv: NvParams) -> None:
        strong = DriveTone.probe(1.0, nv.f0)
        rotating = propagate(initial_state(), nv, strong, PUMP_OFF, 0.2, 0.0).unwrap()
        lab = propagate(
            initial_state(), nv, strong, PUMP_OFF, 0.2, 0.0, frame=PropagationFrame.LAB
        ).unwrap()
        assert np.allclose(rotating.populations(), lab.populations(), atol=5e-3)


class TestSimulateOdmr:
    @pytest.fixture
    def sequence(self, nv: NvParams) -> PulseSequence:
        return PulseSequence(probe_tone=DriveTone.probe(0.0909, nv.f0), pump_tone=PUMP_ON)

    def test_deterministic_for_fixed_seed(self, nv: NvParams, sequence: PulseSequence) -> None:
        grid = nv.f0 + np.array([-0.2, 0.0, 0.2])
        first = simulate_odmr(nv, sequence, grid, 4, seed=11).unwrap()
        second = simulate_odmr(nv, sequence, grid, 4, seed=11).unwrap()
        assert np.array_equal(first.contrast, second.contrast)
        assert first.detuning_grid == pytest.approx([-0.2, 0.0, 0.2])
        assert np.all(first.contrast <= 1e-12)
        assert first.meta["source"] == "oracle"

    def test_chunking_does_not_change_result(
        self, nv: NvParams, sequence: PulseSequence
    ) -> None:
        grid = nv.f0 + np.array([-2.2, -0.1, 0.0, 0.1])
        whole = simulate_odmr(nv, sequence, grid, 3, seed=5).unwrap()
        split = simulate_odmr(
            nv, sequence, grid, 3, seed=5, settings=OracleSettings(chunk_points=1)
        ).unwrap()
        assert np.allclose(whole.contrast, split.contrast, atol=1e-12)

    def test_fixed_phase_mode(self, nv: NvParams, sequence: PulseSequence) -> None:
        grid = nv.f0 + np.array([0.0, 0.5])
        result = simulate_odmr(
            nv, sequence, grid, 2, seed=1, settings=OracleSettings(phase_mode=PhaseMode.FIXED)
        )
        assert result.is_ok()

    def test_invalid_grid(self, nv: NvParams, sequence: PulseSequence) -> None:
        result = simulate_odmr(nv, sequence, [2829.0, 2828.0], 2, seed=0)
        assert result.unwrap_err().code == ErrorCode.INVALID_PARAMETER

    def test_explicit_step_too_large(self, nv: NvParams, sequence: PulseSequence) -> None:
        result = simulate_odmr(
            nv, sequence, [nv.f0], 2, seed=0, settings=OracleSettings(dt=0.01)
        )
        assert result.unwrap_err().code == ErrorCode.STEP_SIZE_VIOLATION

    @pytest.mark.slow
    def test_nine_resonances_at_predicted_positions(self, nv: NvParams) -> None:
        sequence = PulseSequence(probe_tone=DriveTone.probe(0.0909, nv.f0), pump_tone=PUMP_ON)
        grid = nv.f0 + np.round(np.arange(-8.0, 8.0001, 0.02), 10)
        spectrum = simulate_odmr(nv, sequence, grid, 32, seed=3).unwrap()

        fit = select_model(spectrum, nv).unwrap()
        assert fit.n_peaks == 9
        assert fit.converged
        expected = sorted(
            [f - nv.f0 for f in tpmr_positions(nv, 5.3)] + [-2.2, 0.0, 2.2]
        )
        centers = [dip.center for dip in fit.dips]
        assert centers == pytest.approx(expected, abs=0.05)

    def test_pump_off_linewidth_follows_t2_star(self, nv: NvParams) -> None:
        sequence = PulseSequence(probe_tone=DriveTone.probe(0.0909, nv.f0), pump_tone=PUMP_OFF)
        grid = nv.f0 + np.round(np.arange(-4.0, 4.0001, 0.02), 10)
        spectrum = simulate_odmr(nv, sequence, grid, 32, seed=0).unwrap()

        fit = select_model(spectrum, nv).unwrap()
        assert fit.n_peaks == 3
        for dip in fit.dips:
            assert dip.fwhm == pytest.approx(1.0 / (math.pi * nv.t2_star), rel=0.05)


class TestDetuningOffsets:
    def test_calibrated_width_is_narrower_than_bare(self) -> None:
        bare = quasi_static_sigma(0.448)
        calibrated = quasi_static_sigma(0.448, 0.0909, 5.5, 32)
        assert 0.0 < calibrated < bare

    def test_no_pulse_keeps_bare_width(self) -> None:
        assert quasi_static_sigma(0.448, 0.0909, 0.0, 32) == quasi_static_sigma(0.448)
        assert quasi_static_sigma(0.448, 0.0909, 5.5, 1) == quasi_static_sigma(0.448)

    def test_seeded_and_reproducible(self) -> None:
        first = detuning_offsets(0.3, 16, 7, PhaseMode.RANDOM, 0.0)
        second = detuning_offsets(0.3, 16, 7, PhaseMode.RANDOM, 0.0)
        other = detuning_offsets(0.3, 16, 8, PhaseMode.RANDOM, 0.0)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])
        assert not np.array_equal(first[0], other[0])

    def test_one_sample_per_stratum(self) -> None:
        detunings, phases = detuning_offsets(0.3, 16, 2, PhaseMode.RANDOM, 0.0)
        assert np.all(np.diff(detunings) > 0.0)
        assert np.all((phases >= 0.0) & (phases < 2.0 * math.pi))
        strata = np.floor(phases * 16 / (2.0 * math.pi)).astype(int)
        assert sorted(strata.tolist()) == list(range(16))

    def test_fixed_phase_mode(self) -> None:
        _, phases = detuning_offsets(0.3, 8, 2, PhaseMode.FIXED, 0.4)
        assert np.all(phases == 0.4)

    def test_pulse_response_on_resonance(self) -> None:
        response = pulse_response(np.array([0.0, 0.05]), 0.0909, 5.5)
        assert response[0] == pytest.approx(1.0, abs=1e-3)
        assert response[1] < response[0]
