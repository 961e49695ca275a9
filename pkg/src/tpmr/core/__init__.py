from .spin_model import (
    SPIN_VALUES,
    energy_level,
    esr_line,
    esr_frequencies,
    nmr_lines,
    transition_allowed,
    tpmr_positions,
    all_labels,
    is_valid_label,
    nmr_coincidences,
)
from .frames import (
    bessel_j,
    modulation_index,
    effective_order_params,
    small_arg_rabi,
    toggling_rotation_phase,
    tilt_angle,
    doubly_rotating_params,
)
from .bloch import (
    steady_state_absorption,
    bloch_steady_state_oracle,
    multiphoton_absorption,
    multiphoton_line_weights,
    tpmr_intensity_curve,
)
from .dynamics import (
    OracleSettings,
    initial_state,
    lab_hamiltonian,
    rotating_hamiltonian,
    propagate,
    step_doubling_error,
    rabi_trace,
    transition_probability,
    simulate_odmr,
)

__all__ = [
    "SPIN_VALUES",
    "energy_level",
    "esr_line",
    "esr_frequencies",
    "nmr_lines",
    "transition_allowed",
    "tpmr_positions",
    "all_labels",
    "is_valid_label",
    "nmr_coincidences",
    "bessel_j",
    "modulation_index",
    "effective_order_params",
    "small_arg_rabi",
    "toggling_rotation_phase",
    "tilt_angle",
    "doubly_rotating_params",
    "steady_state_absorption",
    "bloch_steady_state_oracle",
    "multiphoton_absorption",
    "multiphoton_line_weights",
    "tpmr_intensity_curve",
    "OracleSettings",
    "initial_state",
    "lab_hamiltonian",
    "rotating_hamiltonian",
    "propagate",
    "step_doubling_error",
    "rabi_trace",
    "transition_probability",
    "simulate_odmr",
]
