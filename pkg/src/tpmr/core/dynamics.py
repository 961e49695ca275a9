"""Time-domain oracle: electron x 14N propagation through the probe pulse.

The 9x9 Hamiltonian is block diagonal in the nuclear projection mi, so every
manifold is evolved as its own 3-level electron block and the blocks are
stacked into one numpy batch. Frequencies are MHz; matrices handed to the
integrator are angular (2*pi*MHz), times are us.

Drive convention:
    probe  2 w1 cos(w_mw t) S_x / sqrt(2)   (so <0,mi|H|-1,mi> = w1 cos(w_mw t))
    pump   2 w2 cos(w_rf t + phi) S_z
With that normalization DriveTone.rabi is the population Rabi frequency of the
ms=0 <-> -1 transition.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, special

from ..types import (
    DensityState, DriveTone, NvParams, PhaseMode, PropagationFrame, PulseSequence,
    Result, SpinLabel, Spectrum
)
from ..errors import TpmrError, ErrorCode, create_error
from ..seeding import rng_stream
from .spin_model import SPIN_VALUES, energy_level

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
STEPS_PER_PERIOD = 50
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

_GAUSS_LO = 0.5 - math.sqrt(3.0) / 6.0
_GAUSS_HI = 0.5 + math.sqrt(3.0) / 6.0
_COMMUTATOR_WEIGHT = math.sqrt(3.0) / 12.0

# electron operators, basis ms = (+1, 0, -1)
S_Z: NDArray[np.complex128] = np.diag([1.0, 0.0, -1.0]).astype(np.complex128)
S_X: NDArray[np.complex128] = np.array(
    [[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=np.complex128
) / math.sqrt(2.0)
MS_ZERO = 1
MS_MINUS = 2

Hamiltonian = Callable[[float], NDArray[np.complex128]]


@dataclass(frozen=True)
class OracleSettings:
    detuning_samples: int = 32
    dt: float = 0.0                      # 0 selects the largest admissible step
    frame: PropagationFrame = PropagationFrame.ROTATING
    counter_rotating: bool = False
    phase_mode: PhaseMode = PhaseMode.RANDOM
    check_error: bool = False
    contrast_scale: float = 1.0
    chunk_points: int = 64


def initial_state() -> DensityState:
    electron = np.zeros((3, 3), dtype=np.complex128)
    electron[MS_ZERO, MS_ZERO] = 1.0
    return DensityState(rho=np.kron(electron, np.eye(3, dtype=np.complex128) / 3.0))


def unit_quantile_nodes(samples: int, shift: float = 0.5) -> NDArray[np.float64]:
    """Standard-normal quantiles at (j + shift) / samples, one per equal-mass stratum."""
    return np.asarray(special.ndtri((np.arange(samples) + shift) / samples), dtype=float)


def pulse_response(
    offsets: NDArray[np.float64],
    rabi: float,
    duration: float
) -> NDArray[np.float64]:
    """Two-level transfer after a square pulse of population Rabi frequency `rabi`."""
    w2 = rabi ** 2 + np.asarray(offsets, dtype=float) ** 2
    return rabi ** 2 / w2 * np.sin(math.pi * np.sqrt(w2) * duration) ** 2


def _gaussian_fit_fwhm(x: NDArray[np.float64], y: NDArray[np.float64], guess: float) -> float:
    def line(
        u: NDArray[np.float64], base: float, height: float, fwhm: float
    ) -> NDArray[np.float64]:
        return base + height * np.exp(-4.0 * math.log(2.0) * u ** 2 / fwhm ** 2)

    popt, _ = optimize.curve_fit(line, x, y, p0=(0.0, float(y.max()), guess), maxfev=2000)
    return abs(float(popt[2]))


@lru_cache(maxsize=32)
def quasi_static_sigma(
    t2_star: float,
    probe_rabi: float = 0.0,
    probe_duration: float = 0.0,
    samples: int = 32
) -> float:
    """Std. dev. (MHz) of the static detuning distribution.

    Bare, the Gaussian FWHM is 1/(pi t2_star). Given the probe pulse, the
    Gaussian is narrowed until a Gaussian fit to the pulse response averaged
    over the `samples` quantile offsets has that FWHM again, so the power
    broadening of the pi pulse is not counted twice.
    """
    target = 1.0 / (math.pi * t2_star)
    bare = target / FWHM_PER_SIGMA
    if probe_rabi <= 0.0 or probe_duration <= 0.0 or samples < 2:
        return bare

    x = target * np.linspace(-3.0, 3.0, 1201)
    unit = unit_quantile_nodes(samples)

    def excess(gauss_fwhm: float) -> float:
        nodes = unit * gauss_fwhm / FWHM_PER_SIGMA
        profile = pulse_response(x[:, None] - nodes[None, :], probe_rabi, probe_duration)
        return _gaussian_fit_fwhm(x, profile.mean(axis=1), target) - target

    lo, hi = 0.05 * target, target
    try:
        if excess(lo) >= 0.0:
            logger.warning(
                "Probe pulse alone is wider than 1/(pi T2*) = %.3f MHz; using the bare width",
                target
            )
            return bare
        while excess(hi) < 0.0 and hi < 8.0 * target:
            hi *= 2.0
        fwhm = optimize.brentq(excess, lo, hi, xtol=1e-6 * target)
    except (RuntimeError, ValueError) as exc:
        logger.warning("Linewidth calibration failed (%s); using the bare width", exc)
        return bare
    logger.debug("Quasi-static FWHM %.4f MHz for a fitted linewidth of %.4f MHz", fwhm, target)
    return float(fwhm) / FWHM_PER_SIGMA


def detuning_offsets(
    sigma: float,
    samples: int,
    seed: int,
    phase_mode: PhaseMode,
    fixed_phase: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Quasi-static detunings and pump phases shared by every probe frequency.

    Detunings sit at seeded stratified Gaussian quantiles; random pump phases
    are stratified over [0, 2 pi) and paired with the detunings by a seeded
    permutation.
    """
    rng = rng_stream(seed, 0x0DE7)
    detunings = sigma * unit_quantile_nodes(samples, rng.uniform(0.25, 0.75))
    if phase_mode == PhaseMode.RANDOM:
        phases = TWO_PI * (rng.permutation(samples) + rng.uniform(0.0, 1.0)) / samples
    else:
        phases = np.full(samples, fixed_phase)
    return detunings, phases


def max_drive_frequency(
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    frame: PropagationFrame = PropagationFrame.ROTATING,
    counter_rotating: bool = False
) -> float:
    """Largest time-dependent frequency of the propagated frame; static terms are exact."""
    freqs = [0.0]
    if pump.rabi != 0.0:
        freqs.append(abs(pump.freq))
    if frame == PropagationFrame.LAB:
        freqs.extend([abs(probe.freq), p.d_gs])
    elif counter_rotating and probe.rabi != 0.0:
        freqs.append(2.0 * abs(probe.freq))
    return max(freqs)


def resolve_step(dt: float, f_max: float, duration: float) -> Result[float, TpmrError]:
    limit = math.inf if f_max == 0.0 else 1.0 / (STEPS_PER_PERIOD * f_max)
    if dt < 0 or not math.isfinite(dt):
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Time step must be a finite non-negative number",
            dt=dt
        ))
    if dt == 0.0:
        return Result.ok(min(duration, limit))
    if dt > limit * (1.0 + 1e-9):
        return Result.err(create_error(
            ErrorCode.STEP_SIZE_VIOLATION,
            f"Time step exceeds 1/({STEPS_PER_PERIOD} f_max)",
            dt=dt,
            limit=limit,
            f_max=f_max
        ))
    return Result.ok(dt)


class _BlockHamiltonian:
    """Stacked 3x3 electron Hamiltonians, one per (manifold, probe frequency, sample)."""

    def __init__(
        self,
        p: NvParams,
        probe_rabi: float,
        probe_freqs: NDArray[np.float64],
        manifolds: NDArray[np.int64],
        detunings: NDArray[np.float64],
        pump: DriveTone,
        pump_phases: NDArray[np.float64],
        frame: PropagationFrame,
        counter_rotating: bool
    ) -> None:
        self._probe_rabi = probe_rabi
        self._probe_freqs = probe_freqs
        self._pump_amp = 2.0 * pump.rabi
        self._pump_freq = pump.freq
        self._pump_phases = pump_phases
        self._frame = frame
        self._counter_rotating = counter_rotating and frame == PropagationFrame.ROTATING

        table = np.array([
            [energy_level(p, SpinLabel(ms, mi)) for ms in SPIN_VALUES] for mi in SPIN_VALUES
        ])
        mi_index = np.array([SPIN_VALUES.index(int(mi)) for mi in manifolds])
        ms = np.array(SPIN_VALUES, dtype=float)

        diagonal = table[mi_index] + detunings[:, None] * ms[None, :]
        if frame == PropagationFrame.ROTATING:
            diagonal = diagonal - probe_freqs[:, None] * ms[None, :] ** 2

        static = np.zeros((manifolds.size, 3, 3), dtype=np.complex128)
        static[:, [0, 1, 2], [0, 1, 2]] = diagonal
        if frame == PropagationFrame.ROTATING:
            coupling = 0.5 * probe_rabi
            static[:, 0, 1] = static[:, 1, 0] = coupling
            static[:, 1, 2] = static[:, 2, 1] = coupling
        self._static = static

    @property
    def size(self) -> int:
        return int(self._static.shape[0])

    @property
    def period(self) -> float | None:
        """Common period of the drive terms, when the frame has one."""
        if self._frame != PropagationFrame.ROTATING or self._counter_rotating:
            return None
        if self._pump_amp == 0.0:
            return None
        return 1.0 / self._pump_freq

    @property
    def is_static(self) -> bool:
        return (
            self._frame == PropagationFrame.ROTATING
            and not self._counter_rotating
            and self._pump_amp == 0.0
        )

    def __call__(self, t: float) -> NDArray[np.complex128]:
        h = self._static.copy()
        if self._pump_amp != 0.0:
            mod = self._pump_amp * np.cos(TWO_PI * self._pump_freq * t + self._pump_phases)
            h[:, 0, 0] += mod
            h[:, 2, 2] -= mod

        if self._frame == PropagationFrame.LAB:
            drive = self._probe_rabi * np.cos(TWO_PI * self._probe_freqs * t)
            h[:, 0, 1] += drive
            h[:, 1, 0] += drive
            h[:, 1, 2] += drive
            h[:, 2, 1] += drive
        elif self._counter_rotating:
            fast = 0.5 * self._probe_rabi * np.exp(2j * TWO_PI * self._probe_freqs * t)
            h[:, 0, 1] += fast
            h[:, 1, 0] += fast.conj()
            h[:, 1, 2] += fast.conj()
            h[:, 2, 1] += fast
        return TWO_PI * h


def _dagger(m: NDArray[np.complex128]) -> NDArray[np.complex128]:
    return m.conj().swapaxes(-1, -2)


def magnus_step(hamiltonian: Hamiltonian, t: float, h: float) -> NDArray[np.complex128]:
    """Fourth-order Magnus propagator over [t, t+h], exponentiated by eigendecomposition."""
    h1 = hamiltonian(t + _GAUSS_LO * h)
    h2 = hamiltonian(t + _GAUSS_HI * h)
    generator = 0.5 * h * (h1 + h2) - 1j * _COMMUTATOR_WEIGHT * h * h * (h2 @ h1 - h1 @ h2)
    generator = 0.5 * (generator + _dagger(generator))
    w, v = np.linalg.eigh(generator)
    return (v * np.exp(-1j * w)[..., None, :]) @ _dagger(v)


def _evolve(
    hamiltonian: Hamiltonian,
    start: float,
    duration: float,
    dt: float,
    shape: tuple[int, ...]
) -> NDArray[np.complex128]:
    u = np.broadcast_to(np.eye(shape[-1], dtype=np.complex128), shape).copy()
    if duration <= 0.0:
        return u
    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    h = duration / n_steps
    for i in range(n_steps):
        u = magnus_step(hamiltonian, start + i * h, h) @ u
    return u


def _evolve_blocks(
    blocks: _BlockHamiltonian,
    duration: float,
    dt: float
) -> NDArray[np.complex128]:
    shape = (blocks.size, 3, 3)
    if blocks.is_static:
        return _evolve(blocks, 0.0, duration, duration, shape)

    period = blocks.period
    if period is None or duration < 2.0 * period:
        return _evolve(blocks, 0.0, duration, dt, shape)

    cycles = int(duration // period)
    u_cycle = _evolve(blocks, 0.0, period, dt, shape)
    u = np.linalg.matrix_power(u_cycle, cycles)
    return _evolve(blocks, 0.0, duration - cycles * period, dt, shape) @ u


def _embed(blocks: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Place three per-manifold 3x3 blocks into the 9x9 (ms, mi) lexicographic basis."""
    full = np.zeros((9, 9), dtype=np.complex128)
    for j in range(3):
        full[j::3, j::3] = blocks[j]
    return full


def _manifold_blocks(
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    frame: PropagationFrame,
    counter_rotating: bool
) -> _BlockHamiltonian:
    return _BlockHamiltonian(
        p,
        probe.rabi,
        np.full(3, probe.freq),
        np.array(SPIN_VALUES, dtype=np.int64),
        np.zeros(3),
        pump,
        np.full(3, pump.phase),
        frame,
        counter_rotating
    )


def lab_hamiltonian(
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    t: float
) -> NDArray[np.complex128]:
    """Full 9x9 lab-frame Hamiltonian at time t, in angular MHz."""
    return _embed(_manifold_blocks(p, probe, pump, PropagationFrame.LAB, False)(t))


def rotating_hamiltonian(
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    t: float,
    counter_rotating: bool = False
) -> NDArray[np.complex128]:
    """9x9 Hamiltonian in the frame rotating at the probe frequency on S_z^2."""
    blocks = _manifold_blocks(p, probe, pump, PropagationFrame.ROTATING, counter_rotating)
    return _embed(blocks(t))


def propagate(
    rho0: DensityState,
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    duration: float,
    dt: float,
    frame: PropagationFrame = PropagationFrame.ROTATING,
    counter_rotating: bool = False
) -> Result[DensityState, TpmrError]:
    """Unitary evolution of rho0; the returned state is in the propagation frame."""
    if duration < 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Duration cannot be negative",
            duration=duration
        ))
    if duration == 0:
        return Result.ok(rho0)

    f_max = max_drive_frequency(p, probe, pump, frame, counter_rotating)
    step = resolve_step(dt, f_max, duration)
    if step.is_err():
        return Result.err(step.unwrap_err())

    blocks = _manifold_blocks(p, probe, pump, frame, counter_rotating)
    u = _embed(_evolve(blocks, 0.0, duration, step.unwrap(), (3, 3, 3)))
    return Result.ok(DensityState(rho=u @ rho0.rho @ _dagger(u)))


def step_doubling_error(
    rho0: DensityState,
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    duration: float,
    dt: float,
    frame: PropagationFrame = PropagationFrame.ROTATING,
    counter_rotating: bool = False
) -> Result[float, TpmrError]:
    """Largest element change of the final state when the step is halved."""
    full = propagate(rho0, p, probe, pump, duration, dt, frame, counter_rotating)
    if full.is_err():
        return Result.err(full.unwrap_err())
    half = propagate(rho0, p, probe, pump, duration, 0.5 * dt, frame, counter_rotating)
    if half.is_err():
        return Result.err(half.unwrap_err())
    return Result.ok(float(np.max(np.abs(full.unwrap().rho - half.unwrap().rho))))


def rabi_trace(
    p: NvParams,
    probe: DriveTone,
    pump: DriveTone,
    duration: float,
    dt: float,
    manifold: int = 0,
    frame: PropagationFrame = PropagationFrame.ROTATING
) -> Result[tuple[NDArray[np.float64], NDArray[np.float64]], TpmrError]:
    """ms=-1 population of one nuclear manifold sampled every step, starting from ms=0."""
    if manifold not in SPIN_VALUES or duration <= 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Trace needs a valid manifold and a positive duration",
            manifold=manifold,
            duration=duration
        ))

    step = resolve_step(dt, max_drive_frequency(p, probe, pump, frame), duration)
    if step.is_err():
        return Result.err(step.unwrap_err())

    blocks = _BlockHamiltonian(
        p, probe.rabi, np.array([probe.freq]), np.array([manifold], dtype=np.int64),
        np.zeros(1), pump, np.array([pump.phase]), frame, False
    )
    n_steps = max(1, math.ceil(duration / step.unwrap() - 1e-9))
    h = duration / n_steps
    psi = np.zeros((1, 3, 1), dtype=np.complex128)
    psi[0, MS_ZERO, 0] = 1.0

    times = np.arange(n_steps + 1) * h
    population = np.zeros(n_steps + 1)
    for i in range(n_steps):
        psi = magnus_step(blocks, i * h, h) @ psi
        population[i + 1] = float(np.abs(psi[0, MS_MINUS, 0]) ** 2)
    return Result.ok((times, population))


def transition_probability(
    p: NvParams,
    probe_rabi: float,
    probe_freqs: Sequence[float],
    pump: DriveTone,
    duration: float,
    dt: float = 0.0,
    manifold: int = 0
) -> Result[NDArray[np.float64], TpmrError]:
    """P(ms=-1) of one manifold after `duration`, for each probe frequency."""
    freqs = np.asarray(probe_freqs, dtype=float)
    if freqs.size == 0 or manifold not in SPIN_VALUES or duration <= 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Need probe frequencies, a valid manifold and a positive duration",
            points=int(freqs.size),
            manifold=manifold,
            duration=duration
        ))

    probe_top = DriveTone.probe(probe_rabi, float(freqs.max()))
    step = resolve_step(dt, max_drive_frequency(p, probe_top, pump), duration)
    if step.is_err():
        return Result.err(step.unwrap_err())

    blocks = _BlockHamiltonian(
        p, probe_rabi, freqs, np.full(freqs.size, manifold, dtype=np.int64),
        np.zeros(freqs.size), pump, np.full(freqs.size, pump.phase),
        PropagationFrame.ROTATING, False
    )
    u = _evolve_blocks(blocks, duration, step.unwrap())
    return Result.ok(np.abs(u[:, MS_MINUS, MS_ZERO]) ** 2)


@dataclass(frozen=True)
class _OdmrChunk:
    p: NvParams
    seq: PulseSequence
    freqs: tuple[float, ...]
    detunings: tuple[float, ...]
    phases: tuple[float, ...]
    settings: OracleSettings
    dt: float


def _chunk_transfer(chunk: _OdmrChunk) -> NDArray[np.float64]:
    """Mean (1 - P(ms=0)) per probe frequency, averaged over manifolds and samples."""
    samples = len(chunk.detunings)
    per_point = 3 * samples
    n_points = len(chunk.freqs)

    freqs = np.repeat(np.asarray(chunk.freqs, dtype=float), per_point)
    manifolds = np.tile(np.repeat(np.array(SPIN_VALUES, dtype=np.int64), samples), n_points)
    detunings = np.tile(np.asarray(chunk.detunings, dtype=float), 3 * n_points)
    phases = np.tile(np.asarray(chunk.phases, dtype=float), 3 * n_points)

    blocks = _BlockHamiltonian(
        chunk.p,
        chunk.seq.probe_tone.rabi,
        freqs,
        manifolds,
        detunings,
        chunk.seq.pump_tone,
        phases,
        chunk.settings.frame,
        chunk.settings.counter_rotating
    )
    u = _evolve_blocks(blocks, chunk.seq.probe_duration, chunk.dt)
    survival = np.abs(u[:, MS_ZERO, MS_ZERO]) ** 2
    return 1.0 - survival.reshape(n_points, per_point).mean(axis=1)


def simulate_odmr(
    p: NvParams,
    seq: PulseSequence,
    probe_freq_grid: Sequence[float],
    detuning_samples: int,
    seed: int,
    settings: OracleSettings = OracleSettings(),
    jobs: int = 1
) -> Result[Spectrum, TpmrError]:
    """ODMR contrast -contrast_scale * (1 - P(ms=0)) after the probe pulse.

    Every grid point is averaged over the same seeded quasi-static detunings
    and pump phases, so the line shape is smooth at any sample count and
    chunking or worker count never change the result.
    """
    grid = np.asarray(probe_freq_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Probe frequency grid must be nonempty and strictly ascending",
            points=int(grid.size)
        ))
    if detuning_samples < 1 or seq.probe_duration <= 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Need at least one detuning sample and a positive probe duration",
            detuning_samples=detuning_samples,
            probe_duration=seq.probe_duration
        ))

    probe_top = DriveTone.probe(seq.probe_tone.rabi, float(grid[-1]))
    f_max = max_drive_frequency(
        p, probe_top, seq.pump_tone, settings.frame, settings.counter_rotating
    )
    step = resolve_step(settings.dt, f_max, seq.probe_duration)
    if step.is_err():
        return Result.err(step.unwrap_err())
    dt = step.unwrap()

    sigma = quasi_static_sigma(
        p.t2_star, seq.probe_tone.rabi, seq.probe_duration, detuning_samples
    )
    detunings, phases = detuning_offsets(
        sigma, detuning_samples, seed, settings.phase_mode, seq.pump_tone.phase
    )
    size = max(1, settings.chunk_points)
    chunks = [
        _OdmrChunk(
            p=p,
            seq=seq,
            freqs=tuple(float(f) for f in grid[i:i + size]),
            detunings=tuple(float(d) for d in detunings),
            phases=tuple(float(phi) for phi in phases),
            settings=settings,
            dt=dt
        )
        for i in range(0, grid.size, size)
    ]
    logger.info(
        "Oracle: %d points, %d samples (sigma %.4f MHz), dt=%.3g us, %d chunks, jobs=%d",
        grid.size, detuning_samples, sigma, dt, len(chunks), jobs
    )

    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_chunk_transfer, chunks))
    else:
        parts = [_chunk_transfer(chunk) for chunk in chunks]
    transfer = np.concatenate(parts)

    if settings.check_error:
        first = chunks[0]
        halved = _chunk_transfer(replace(first, dt=0.5 * dt))
        estimate = float(np.max(np.abs(parts[0] - halved)))
        logger.info("Step-doubling estimate on first chunk: %.3e", estimate)

    meta: dict[str, str | int | float] = {
        "source": "oracle",
        "reference_mhz": p.f0,
        "probe_rabi_mhz": seq.probe_tone.rabi,
        "probe_duration_us": seq.probe_duration,
        "pump_rabi_mhz": seq.pump_tone.rabi,
        "pump_freq_mhz": seq.pump_tone.freq,
        "detuning_samples": detuning_samples,
        "frame": settings.frame.value,
        "dt_us": dt,
        "seed": seed,
    }
    return Result.ok(Spectrum(
        detuning_grid=grid - p.f0,
        contrast=-settings.contrast_scale * transfer,
        meta=meta
    ))
