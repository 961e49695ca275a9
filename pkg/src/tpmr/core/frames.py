"""Effective two-level theory of multiphoton resonance.

The probe (x) and pump (z) drive a two-level transition at omega0. Moving to
the frame rotating at the probe frequency, then to the toggling frame of the
pump modulation, leaves a static Hamiltonian per order k:

    H_k = (Omega_s - k * w_rf) S_z + w1 * J_{-k}(2 w2 / w_rf) S_x

with Omega_s = omega0 - w_mw. Offsets and amplitudes are returned in MHz;
ratios such as 2 w2 / w_rf do not depend on the angular convention.
"""

import logging
import math

from scipy import special

from ..types import DriveTone, EffectiveTwoLevel, Result
from ..errors import TpmrError, ErrorCode, create_error

logger = logging.getLogger(__name__)

BESSEL_ARG_LIMIT = 50.0
SMALL_ARG_LIMIT = 0.2
DEFAULT_K_MAX = 3


def bessel_j(n: int, z: float) -> Result[float, TpmrError]:
    if not math.isfinite(z) or abs(z) > BESSEL_ARG_LIMIT:
        return Result.err(create_error(
            ErrorCode.OUT_OF_RANGE,
            "Bessel argument outside supported range",
            order=n,
            argument=z,
            limit=BESSEL_ARG_LIMIT
        ))
    return Result.ok(float(special.jv(n, z)))


def modulation_index(pump: DriveTone) -> float:
    return 2.0 * pump.rabi / pump.freq


def effective_order_params(
    probe: DriveTone,
    pump: DriveTone,
    omega0: float,
    k: int,
    k_max: int = DEFAULT_K_MAX
) -> Result[EffectiveTwoLevel, TpmrError]:
    if abs(k) > k_max:
        return Result.err(create_error(
            ErrorCode.ORDER_LIMIT_EXCEEDED,
            "Multiphoton order exceeds configured limit",
            order=k,
            k_max=k_max
        ))

    if pump.freq <= 0:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Pump frequency must be positive",
            pump_freq=pump.freq
        ))

    amplitude = bessel_j(-k, modulation_index(pump))
    if amplitude.is_err():
        return Result.err(amplitude.unwrap_err())

    omega_s = omega0 - probe.freq
    return Result.ok(EffectiveTwoLevel(
        offset=omega_s - k * pump.freq,
        rabi_eff=probe.rabi * amplitude.unwrap(),
        order=k
    ))


def small_arg_rabi(probe: DriveTone, pump: DriveTone, k: int) -> float:
    """Leading small-argument term of w1 * J_{-k}(2 w2 / w_rf).

    Uses J_n(z) ~ (z/2)^n / n!, so the ratio w2/w_rf carries the |k| exponent.
    """
    if modulation_index(pump) > SMALL_ARG_LIMIT:
        logger.warning(
            "Modulation index %.3f exceeds small-argument limit %.2f; "
            "use effective_order_params for exact amplitudes",
            modulation_index(pump), SMALL_ARG_LIMIT
        )

    order = abs(k)
    sign = 1.0 if k == 0 else math.copysign(1.0, -k) ** k
    return probe.rabi * sign / math.factorial(order) * (pump.rabi / pump.freq) ** order


def toggling_rotation_phase(t: float, k: int, pump: DriveTone) -> float:
    """Angle of the toggling-frame rotation about z at time t (us), in radians."""
    w_rf = 2.0 * math.pi * pump.freq
    modulation = modulation_index(pump) * (
        math.sin(w_rf * t + pump.phase) - math.sin(pump.phase)
    )
    return k * w_rf * t + modulation


def tilt_angle(probe: DriveTone, omega0: float) -> float:
    """Tilt of the effective nutation axis from z in the singly rotating frame."""
    return math.atan2(probe.rabi, omega0 - probe.freq)


def doubly_rotating_params(
    probe: DriveTone,
    pump: DriveTone,
    omega0: float
) -> EffectiveTwoLevel:
    """First-order two-photon parameters before the near-resonance approximation."""
    omega_s = omega0 - probe.freq
    w_eff = math.hypot(probe.rabi, omega_s)
    return EffectiveTwoLevel(
        offset=w_eff - pump.freq,
        rabi_eff=-pump.rabi * math.sin(tilt_angle(probe, omega0)),
        order=1
    )
