"""Steady-state Bloch absorption for single- and multiphoton resonance.

Inputs are MHz and us; rates are converted to angular units here. Outputs are
in the dimensionless normalization of the Bloch equation with equilibrium
sigma0 = (0, 0, -1).
"""

import logging
import math
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, special

from ..types import BlochState, DriveTone, Result, SteadyStateMethod
from ..errors import TpmrError, ErrorCode, create_error
from .frames import modulation_index

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
SIGMA0: NDArray[np.float64] = np.array([0.0, 0.0, -1.0])
VALIDITY_RF_MHZ = 2.5


def steady_state_absorption(offset: float, rabi: float, t1: float, t2: float) -> float:
    w1 = TWO_PI * rabi
    omega_s = TWO_PI * offset
    return -w1 * t2 / ((1.0 + w1 ** 2 * t1 * t2) + omega_s ** 2 * t2 ** 2)


def _generator(offset: float, rabi: float, t1: float, t2: float) -> tuple[
    NDArray[np.float64], NDArray[np.float64]
]:
    w1 = TWO_PI * rabi
    omega_s = TWO_PI * offset
    rotation = np.array([
        [0.0, -omega_s, 0.0],
        [omega_s, 0.0, w1],
        [0.0, -w1, 0.0],
    ])
    relaxation = np.diag([1.0 / t2, 1.0 / t2, 1.0 / t1])
    return rotation - relaxation, relaxation @ SIGMA0


def bloch_steady_state_oracle(
    offset: float,
    rabi: float,
    t1: float,
    t2: float,
    method: SteadyStateMethod = SteadyStateMethod.LINEAR_SOLVE,
    max_doublings: int = 96,
    tol: float = 1e-15
) -> Result[BlochState, TpmrError]:
    """Fixed point of d(sigma)/dt = (L - R) sigma + R sigma0.

    LINEAR_SOLVE solves the stationarity condition directly. PROPAGATION
    evolves sigma0 with the exact affine propagator over t2 and squares it
    until the state stops changing well beyond t1.
    """
    if t1 <= 0 or t2 <= 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Relaxation times must be positive",
            t1=t1,
            t2=t2
        ))

    a, b = _generator(offset, rabi, t1, t2)

    if method == SteadyStateMethod.LINEAR_SOLVE:
        sigma = np.linalg.solve(a, -b)
        return Result.ok(BlochState(sigma=(float(sigma[0]), float(sigma[1]), float(sigma[2]))))

    augmented = np.zeros((4, 4))
    augmented[:3, :3] = a
    augmented[:3, 3] = b
    step = linalg.expm(augmented * t2)
    elapsed = t2
    start = np.append(SIGMA0, 1.0)
    previous = (step @ start)[:3]

    for iteration in range(1, max_doublings + 1):
        step = step @ step
        elapsed *= 2.0
        current = (step @ start)[:3]
        change = float(np.max(np.abs(current - previous)))
        previous = current
        if elapsed > 20.0 * t1 and change <= tol * max(1.0, float(np.max(np.abs(current)))):
            logger.debug("Bloch propagation converged after %d doublings", iteration)
            return Result.ok(BlochState(
                sigma=(float(current[0]), float(current[1]), float(current[2]))
            ))

    return Result.err(create_error(
        ErrorCode.NON_CONVERGENCE,
        "Bloch propagation did not reach a steady state",
        iterations=max_doublings,
        elapsed_us=elapsed,
        last_change=change
    ))


def _order_amplitudes(pump: DriveTone, k_max: int) -> dict[int, float]:
    z = modulation_index(pump)
    return {k: float(special.jv(k, z)) for k in range(-k_max, k_max + 1)}


def multiphoton_absorption(
    offset: float,
    probe: DriveTone,
    pump: DriveTone,
    t1: float,
    t2: float,
    k_max: int = 1
) -> float:
    """Sum of order-k resonances centred at Omega_s = k * w_rf (positive magnitude)."""
    w1 = TWO_PI * probe.rabi
    omega_s = TWO_PI * offset
    w_rf = TWO_PI * pump.freq
    total = 0.0
    for k, jk in _order_amplitudes(pump, k_max).items():
        weight = jk ** 2
        total += w1 * t2 * weight / (
            1.0 + w1 ** 2 * weight * t1 * t2 + (omega_s - k * w_rf) ** 2 * t2 ** 2
        )
    return total


def multiphoton_line_weights(
    probe: DriveTone,
    pump: DriveTone,
    t1: float,
    t2: float,
    k_max: int = 1
) -> dict[int, float]:
    """Area of each resonance term of multiphoton_absorption, integrated over offset in MHz."""
    w1 = TWO_PI * probe.rabi
    weights: dict[int, float] = {}
    for k, jk in _order_amplitudes(pump, k_max).items():
        weight = jk ** 2
        weights[k] = w1 * weight / (2.0 * math.sqrt(1.0 + w1 ** 2 * weight * t1 * t2))
    return weights


def tpmr_intensity_curve(
    probe: DriveTone,
    pump_rabi: float,
    rf_grid: Sequence[float],
    t1: float,
    t2: float,
    k_max: int = 1,
    validity_mhz: float = VALIDITY_RF_MHZ
) -> Result[list[tuple[float, float]], TpmrError]:
    """Absorption at the k=1 sideband centre (Omega_s = w_rf) for each rf frequency."""
    grid = np.asarray(rf_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "rf grid must be strictly positive and ascending",
            points=int(grid.size)
        ))

    below = int(np.count_nonzero(grid < validity_mhz))
    if below:
        logger.warning(
            "%d rf points below %.2f MHz: unpolarized hyperfine structure is not modelled there",
            below, validity_mhz
        )

    curve: list[tuple[float, float]] = []
    for f_rf in grid:
        pump = DriveTone.pump(pump_rabi, float(f_rf))
        intensity = multiphoton_absorption(float(f_rf), probe, pump, t1, t2, k_max)
        curve.append((float(f_rf), intensity))
    return Result.ok(curve)
