"""Phenomenological ODMR spectra: dip positions from the spin model, depths from
the multiphoton line weights, Gaussian line shapes, seeded noise and diplexer
spurs.

Grids are detunings in MHz relative to the central carrier f0. Dips are
negative-going with depth in dPL/PL.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .types import (
    DriveTone, FitResult, GaussianDip, NvParams, Spectrum, SpurLine, SweepAxis
)
from .core.spin_model import SPIN_VALUES, esr_line
from .core.bloch import multiphoton_line_weights
from .seeding import derive_seed, rng_stream

logger = logging.getLogger(__name__)

FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class SynthSettings:
    kappa: float = 0.19              # MHz per sqrt(mW)
    contrast_scale: float = 0.017    # pump-off carrier depth
    width_ratio: float = 0.45        # sideband FWHM / carrier FWHM
    noise_sigma: float = 1e-3
    max_order: int = 1
    visibility: float = 0.1


@dataclass(frozen=True)
class DiplexerTable:
    """Measured spur levels (dB re carrier) per |n| at given pump powers.

    Between rows the level is interpolated in log-power; outside the rows it
    follows the intermodulation slope of |n| * 10 dB per decade. Below
    `threshold_mw` the diplexer output is the carrier alone.
    """

    rows: tuple[tuple[float, tuple[tuple[int, float], ...]], ...] = (
        (63.0, ((1, -48.0), (2, -15.0))),
    )
    threshold_mw: float = 5.0

    def at(self, power_mw: float) -> dict[int, float]:
        if power_mw < self.threshold_mw or not self.rows:
            return {}

        orders = sorted({n for _, levels in self.rows for n, _ in levels})
        log_p = math.log10(power_mw)
        result: dict[int, float] = {}
        for n in orders:
            points = sorted(
                (math.log10(power), dict(levels)[n])
                for power, levels in self.rows
                if n in dict(levels)
            )
            xs = [x for x, _ in points]
            ys = [y for _, y in points]
            if log_p < xs[0]:
                level = ys[0] - abs(n) * 10.0 * (xs[0] - log_p)
            elif log_p > xs[-1]:
                level = ys[-1] + abs(n) * 10.0 * (log_p - xs[-1])
            else:
                level = float(np.interp(log_p, xs, ys))
            result[n] = min(level, 0.0)
        return result


@dataclass(frozen=True, eq=False)
class SynthRequest:
    p: NvParams
    pump: DriveTone
    probe_rabi: float
    grid: NDArray[np.float64]
    noise_sigma: float = 0.0
    seed: int = 0
    settings: SynthSettings = field(default_factory=SynthSettings)
    pump_power_mw: float | None = None


def power_to_rabi(power_mw: float, kappa: float) -> float:
    return kappa * math.sqrt(power_mw)


def gaussian_profile(
    x: NDArray[np.float64],
    dips: Sequence[GaussianDip]
) -> NDArray[np.float64]:
    total = np.zeros_like(x, dtype=float)
    for dip in dips:
        total -= dip.depth * np.exp(-FOUR_LN2 * (x - dip.center) ** 2 / dip.fwhm ** 2)
    return total


def carrier_fwhm(p: NvParams) -> float:
    return 1.0 / (math.pi * p.t2_star)


def model_dips(request: SynthRequest) -> list[GaussianDip]:
    """Noise-free dips of a request, sorted by center."""
    p = request.p
    s = request.settings
    probe = DriveTone.probe(request.probe_rabi, p.f0)
    pump_off = DriveTone.pump(0.0, request.pump.freq)

    reference = multiphoton_line_weights(probe, pump_off, p.t1, p.t2, 0)[0]
    weights = multiphoton_line_weights(probe, request.pump, p.t1, p.t2, s.max_order)
    wide = carrier_fwhm(p)

    dips: list[GaussianDip] = []
    for mi in SPIN_VALUES:
        carrier = esr_line(p, mi) - p.f0
        for k, weight in weights.items():
            depth = s.contrast_scale * weight / reference
            if depth <= 0.0:
                continue
            dips.append(GaussianDip(
                center=carrier - k * request.pump.freq,
                fwhm=wide if k == 0 else wide * s.width_ratio,
                depth=depth
            ))
    return sorted(dips, key=lambda d: d.center)


def spur_depth_ratio(amplitude_db: float) -> float:
    """pi-pulse transfer of a tone 10^(dB/20) weaker than the calibrated probe."""
    return math.sin(0.5 * math.pi * 10.0 ** (amplitude_db / 20.0)) ** 2


def _render(request: SynthRequest, spurs: Sequence[SpurLine]) -> Spectrum:
    base = model_dips(request)
    dips = list(base)
    for spur in spurs:
        if spur.n == 0:
            continue
        ratio = spur_depth_ratio(spur.amplitude_db)
        dips.extend(
            replace(dip, center=dip.center - spur.n * request.pump.freq, depth=dip.depth * ratio)
            for dip in base
        )

    grid = np.asarray(request.grid, dtype=float)
    contrast = gaussian_profile(grid, dips)
    if request.noise_sigma > 0.0:
        contrast = contrast + rng_stream(request.seed).normal(0.0, request.noise_sigma, grid.size)

    meta: dict[str, str | int | float] = {
        "source": "synth",
        "reference_mhz": request.p.f0,
        "probe_rabi_mhz": request.probe_rabi,
        "pump_rabi_mhz": request.pump.rabi,
        "pump_freq_mhz": request.pump.freq,
        "noise_sigma": request.noise_sigma,
        "seed": request.seed,
        "spurs": len([s for s in spurs if s.n != 0]),
    }
    if request.pump_power_mw is not None:
        meta["pump_power_mw"] = request.pump_power_mw
    return Spectrum(detuning_grid=grid, contrast=contrast, meta=meta)


def synth_spectrum(
    p: NvParams,
    pump: DriveTone,
    probe_rabi: float,
    grid: Sequence[float] | NDArray[np.float64],
    noise_sigma: float,
    seed: int,
    settings: SynthSettings = SynthSettings()
) -> Spectrum:
    request = SynthRequest(
        p=p,
        pump=pump,
        probe_rabi=probe_rabi,
        grid=np.asarray(grid, dtype=float),
        noise_sigma=noise_sigma,
        seed=seed,
        settings=settings
    )
    return _render(request, ())


def render(request: SynthRequest) -> Spectrum:
    return _render(request, ())


def spur_lines(
    f_probe: float,
    f_pump: float,
    max_order: int,
    model: Mapping[int, float]
) -> list[SpurLine]:
    """Diplexer output lines f_probe + n * f_pump, for |n| present in the amplitude model."""
    lines = [SpurLine(n=0, freq=f_probe, amplitude_db=0.0)]
    for order in range(1, max_order + 1):
        if order not in model:
            continue
        for n in (-order, order):
            lines.append(SpurLine(n=n, freq=f_probe + n * f_pump, amplitude_db=model[order]))
    return sorted(lines, key=lambda line: line.n)


def apply_spurs(request: SynthRequest, spurs: Sequence[SpurLine]) -> Spectrum:
    """Each spur acts as a weaker copy of the probe shifted by n * f_pump."""
    for spur in spurs:
        if spur.n != 0:
            logger.debug(
                "Spur n=%+d at %.1f dB: depth ratio %.3e",
                spur.n, spur.amplitude_db, spur_depth_ratio(spur.amplitude_db)
            )
    return _render(request, spurs)


def _sweep_request(
    p: NvParams,
    axis: SweepAxis,
    value: float,
    fixed: float,
    probe_rabi: float,
    grid: NDArray[np.float64],
    seed: int,
    settings: SynthSettings
) -> SynthRequest:
    if axis == SweepAxis.PUMP_POWER:
        power, freq = value, fixed
    else:
        power, freq = fixed, value
    return SynthRequest(
        p=p,
        pump=DriveTone.pump(power_to_rabi(power, settings.kappa), freq),
        probe_rabi=probe_rabi,
        grid=grid,
        noise_sigma=settings.noise_sigma,
        seed=seed,
        settings=settings,
        pump_power_mw=power
    )


def sweep(
    p: NvParams,
    axis: SweepAxis,
    values: Sequence[float],
    fixed: float,
    grid: Sequence[float] | NDArray[np.float64],
    seed: int,
    probe_rabi: float = 0.0909,
    settings: SynthSettings = SynthSettings(),
    jobs: int = 1
) -> list[Spectrum]:
    """One spectrum per swept value.

    `fixed` is the pump frequency (MHz) for a power sweep and the pump power
    (mW) for a frequency sweep. Entry i is seeded with derive_seed(seed, i).
    """
    shared = np.asarray(grid, dtype=float)
    requests = [
        _sweep_request(
            p, axis, float(v), fixed, probe_rabi, shared, derive_seed(seed, i), settings
        )
        for i, v in enumerate(values)
    ]
    if jobs > 1 and len(requests) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(render, requests))
    return [render(r) for r in requests]


def carrier_detunings(p: NvParams) -> tuple[float, ...]:
    return tuple(sorted(esr_line(p, mi) - p.f0 for mi in SPIN_VALUES))


def _nearest(dips: Sequence[GaussianDip], target: float) -> GaussianDip:
    return min(dips, key=lambda d: abs(d.center - target))


def sideband_visible(
    fit: FitResult,
    carriers: Sequence[float],
    pump_freq: float,
    threshold: float = 0.1
) -> bool:
    """Mean first-order sideband depth reaches `threshold` x mean carrier depth."""
    if fit.n_peaks < 9 or not fit.dips:
        return False
    carrier_depths = [_nearest(fit.dips, c).depth for c in carriers]
    sideband_depths = [
        _nearest(fit.dips, c + sign * pump_freq).depth for c in carriers for sign in (-1, 1)
    ]
    ratio = float(np.mean(sideband_depths) / np.mean(carrier_depths))
    logger.debug("Sideband/carrier depth ratio %.3f (threshold %.2f)", ratio, threshold)
    return ratio >= threshold


def visibility_onset(
    powers: Sequence[float],
    fits: Sequence[FitResult],
    carriers: Sequence[float],
    pump_freq: float,
    threshold: float = 0.1
) -> float | None:
    """Lowest power of a sweep at which sidebands are visible, or None."""
    for power, fit in sorted(zip(powers, fits), key=lambda pair: pair[0]):
        if sideband_visible(fit, carriers, pump_freq, threshold):
            return float(power)
    return None
