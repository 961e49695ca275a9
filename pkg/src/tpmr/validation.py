"""Oracle-versus-theory checks behind the `validate` command."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, special

from .types import CheckResult, DriveTone, NvParams, Result, SteadyStateMethod
from .errors import TpmrError, ErrorCode, create_error
from .core.spin_model import esr_line, nmr_coincidences
from .core.bloch import (
    bloch_steady_state_oracle, multiphoton_absorption, steady_state_absorption
)
from .core.dynamics import rabi_trace, transition_probability
from .seeding import rng_stream
from .spectrum import SynthSettings, power_to_rabi, synth_spectrum
from .fitting import select_model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationSettings:
    ratios: tuple[float, ...] = (0.1, 0.2, 0.3)   # modulation index 2 w2 / w_rf
    rf: float = 5.3
    tolerance: float = 0.05
    center_step: float = 0.005
    center_points: int = 6
    bloch_draws: int = 1000
    bloch_tolerance: float = 1e-9
    cycles: float = 1.25


def fit_rabi_frequency(
    times: NDArray[np.float64],
    population: NDArray[np.float64]
) -> Result[float, TpmrError]:
    """Frequency f of a (1 - cos 2 pi f t) / 2 oscillation with free amplitude."""
    peak = int(np.argmax(population))
    if peak == 0 or times[peak] <= 0:
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "Population trace has no oscillation maximum",
            samples=int(times.size)
        ))

    def residual(theta: NDArray[np.float64]) -> NDArray[np.float64]:
        amplitude, freq = theta
        return amplitude * 0.5 * (1.0 - np.cos(2.0 * math.pi * freq * times)) - population

    res = optimize.least_squares(
        residual, np.array([float(population[peak]), 0.5 / float(times[peak])]), xtol=1e-12
    )
    if not res.success:
        return Result.err(create_error(
            ErrorCode.NON_CONVERGENCE,
            "Rabi oscillation fit did not converge",
            message=str(res.message)
        ))
    return Result.ok(abs(float(res.x[1])))


def expected_sideband_rabi(probe_rabi: float, ratio: float) -> float:
    return probe_rabi * abs(float(special.jv(1, ratio)))


def _sideband_pump(ratio: float, rf: float) -> DriveTone:
    return DriveTone.pump(0.5 * ratio * rf, rf)


def check_sideband_rabi(
    p: NvParams,
    probe_rabi: float,
    ratio: float,
    settings: ValidationSettings = ValidationSettings()
) -> Result[CheckResult, TpmrError]:
    """Time-domain k=1 sideband Rabi frequency of the mi=0 manifold."""
    expected = expected_sideband_rabi(probe_rabi, ratio)
    pump = _sideband_pump(ratio, settings.rf)
    probe = DriveTone.probe(probe_rabi, esr_line(p, 0) - settings.rf)

    trace = rabi_trace(p, probe, pump, settings.cycles / expected, 0.0, manifold=0)
    if trace.is_err():
        return Result.err(trace.unwrap_err())
    times, population = trace.unwrap()

    measured = fit_rabi_frequency(times, population)
    if measured.is_err():
        return Result.err(measured.unwrap_err())

    value = measured.unwrap()
    relative = abs(value / expected - 1.0)
    logger.info(
        "Sideband Rabi at 2w2/w_rf=%.2f: %.5f MHz vs %.5f MHz (%.2f%%)",
        ratio, value, expected, 100.0 * relative
    )
    return Result.ok(CheckResult(
        name=f"sideband_rabi_z{ratio:g}",
        measured=value,
        expected=expected,
        tolerance=settings.tolerance,
        passed=relative <= settings.tolerance
    ))


def check_sideband_center(
    p: NvParams,
    probe_rabi: float,
    ratio: float,
    settings: ValidationSettings = ValidationSettings()
) -> Result[CheckResult, TpmrError]:
    """Scan the probe around f0 - f_rf with a sideband pi pulse and locate the maximum."""
    expected = esr_line(p, 0) - settings.rf
    offsets = np.arange(-settings.center_points, settings.center_points + 1)
    freqs = expected + settings.center_step * offsets
    duration = 0.5 / expected_sideband_rabi(probe_rabi, ratio)

    transfer = transition_probability(
        p, probe_rabi, freqs, _sideband_pump(ratio, settings.rf), duration
    )
    if transfer.is_err():
        return Result.err(transfer.unwrap_err())

    measured = float(freqs[int(np.argmax(transfer.unwrap()))])
    return Result.ok(CheckResult(
        name=f"sideband_center_z{ratio:g}",
        measured=measured,
        expected=expected,
        tolerance=settings.center_step,
        passed=abs(measured - expected) <= settings.center_step * (1.0 + 1e-9)
    ))


def check_bloch_closed_form(
    seed: int,
    settings: ValidationSettings = ValidationSettings()
) -> Result[CheckResult, TpmrError]:
    rng = rng_stream(seed, 0xB10C)
    worst = 0.0
    for _ in range(settings.bloch_draws):
        offset = rng.uniform(-10.0, 10.0)
        rabi = rng.uniform(1e-3, 1.0)
        t2 = rng.uniform(0.1, 10.0)
        t1 = t2 * rng.uniform(1.0, 1000.0)
        state = bloch_steady_state_oracle(offset, rabi, t1, t2, SteadyStateMethod.LINEAR_SOLVE)
        if state.is_err():
            return Result.err(state.unwrap_err())
        closed = steady_state_absorption(offset, rabi, t1, t2)
        worst = max(worst, abs(state.unwrap().y - closed) / abs(closed))

    return Result.ok(CheckResult(
        name="bloch_closed_form",
        measured=worst,
        expected=0.0,
        tolerance=settings.bloch_tolerance,
        passed=worst <= settings.bloch_tolerance
    ))


def check_multiphoton_reduction(p: NvParams, probe_rabi: float) -> CheckResult:
    """With the pump off the multiphoton sum collapses to the single-photon line."""
    probe = DriveTone.probe(probe_rabi, p.f0)
    pump = DriveTone.pump(0.0, 5.3)
    worst = 0.0
    for offset in np.linspace(-5.0, 5.0, 41):
        single = -steady_state_absorption(float(offset), probe_rabi, p.t1, p.t2)
        multi = multiphoton_absorption(float(offset), probe, pump, p.t1, p.t2, k_max=3)
        worst = max(worst, abs(multi - single) / abs(single))
    return CheckResult(
        name="multiphoton_reduces_to_single",
        measured=worst,
        expected=0.0,
        tolerance=1e-12,
        passed=worst <= 1e-12
    )


def check_nmr_exclusion(
    p: NvParams,
    probe_rabi: float,
    grid: NDArray[np.float64],
    seed: int,
    synth: SynthSettings = SynthSettings(),
    pump_power_mw: float = 63.0,
    rf: float = 5.3
) -> Result[CheckResult, TpmrError]:
    """No NMR line lies inside the FWHM band of any dip of the 9-dip scenario fit."""
    pump = DriveTone.pump(power_to_rabi(pump_power_mw, synth.kappa), rf)
    spectrum = synth_spectrum(p, pump, probe_rabi, grid, synth.noise_sigma, seed, synth)
    fit = select_model(spectrum, p)
    if fit.is_err():
        return Result.err(fit.unwrap_err())

    hits = nmr_coincidences(p, fit.unwrap().dips)
    for line, dip in hits:
        logger.warning("NMR line at %.3f MHz overlaps dip at %.3f MHz", line, dip.center)
    return Result.ok(CheckResult(
        name="nmr_exclusion",
        measured=float(len(hits)),
        expected=0.0,
        tolerance=0.0,
        passed=not hits
    ))


def run_validation(
    p: NvParams,
    probe_rabi: float,
    grid: NDArray[np.float64],
    seed: int,
    settings: ValidationSettings = ValidationSettings(),
    synth: SynthSettings = SynthSettings()
) -> Result[list[CheckResult], TpmrError]:
    checks: list[CheckResult] = []
    for ratio in settings.ratios:
        result = check_sideband_rabi(p, probe_rabi, ratio, settings)
        if result.is_err():
            return Result.err(result.unwrap_err())
        checks.append(result.unwrap())

    center = check_sideband_center(p, probe_rabi, max(settings.ratios), settings)
    if center.is_err():
        return Result.err(center.unwrap_err())
    checks.append(center.unwrap())

    bloch = check_bloch_closed_form(seed, settings)
    if bloch.is_err():
        return Result.err(bloch.unwrap_err())
    checks.append(bloch.unwrap())
    checks.append(check_multiphoton_reduction(p, probe_rabi))

    nmr = check_nmr_exclusion(p, probe_rabi, grid, seed, synth, rf=settings.rf)
    if nmr.is_err():
        return Result.err(nmr.unwrap_err())
    checks.append(nmr.unwrap())
    return Result.ok(checks)
