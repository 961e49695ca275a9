from .controller import TpmrController
from .config import RunConfig, parse_config, load_config, load_scenario
from .types import (
    Result,
    RunState,
    NvParams,
    SpinLabel,
    DriveTone,
    PulseSequence,
    Spectrum,
    GaussianDip,
    FitResult,
    RunReport,
    SweepAxis,
    OutputFormat,
)
from .errors import TpmrError, ErrorCode
from .spectrum import SynthSettings, synth_spectrum, sweep, apply_spurs, spur_lines
from .fitting import fit_gaussians, select_model, splitting_regression, extract_t2star

__version__ = "0.1.0"

__all__ = [
    "TpmrController",
    "RunConfig",
    "parse_config",
    "load_config",
    "load_scenario",
    "Result",
    "RunState",
    "NvParams",
    "SpinLabel",
    "DriveTone",
    "PulseSequence",
    "Spectrum",
    "GaussianDip",
    "FitResult",
    "RunReport",
    "SweepAxis",
    "OutputFormat",
    "TpmrError",
    "ErrorCode",
    "SynthSettings",
    "synth_spectrum",
    "sweep",
    "apply_spurs",
    "spur_lines",
    "fit_gaussians",
    "select_model",
    "splitting_regression",
    "extract_t2star",
]
