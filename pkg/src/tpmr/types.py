from typing import Callable, TypeVar, Generic, Union
from enum import Enum, IntEnum, auto
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


T = TypeVar('T')
E = TypeVar('E')
U = TypeVar('U')

MetaValue = Union[str, int, float]


class Result(Generic[T, E]):
    def __init__(self, value: Union[T, E], is_success: bool) -> None:
        self._value = value
        self._is_success = is_success

    @staticmethod
    def ok(value: T) -> 'Result[T, E]':
        return Result(value, True)

    @staticmethod
    def err(error: E) -> 'Result[T, E]':
        return Result(error, False)

    def is_ok(self) -> bool:
        return self._is_success

    def is_err(self) -> bool:
        return not self._is_success

    def unwrap(self) -> T:
        if not self._is_success:
            raise ValueError(f"Called unwrap on an Err value: {self._value}")
        return self._value  # type: ignore[return-value]

    def unwrap_err(self) -> E:
        if self._is_success:
            raise ValueError("Called unwrap_err on an Ok value")
        return self._value  # type: ignore[return-value]

    def unwrap_or(self, default: T) -> T:
        if self._is_success:
            return self._value  # type: ignore[return-value]
        return default

    def map(self, fn: Callable[[T], U]) -> 'Result[U, E]':
        if self._is_success:
            return Result.ok(fn(self._value))  # type: ignore[arg-type]
        return Result.err(self._value)  # type: ignore[arg-type]


class Axis(Enum):
    X = "x"
    Z = "z"


class Role(Enum):
    PROBE = "probe"
    PUMP = "pump"


class TransitionKind(Enum):
    ESR = "esr"
    NMR = "nmr"


class PropagationFrame(Enum):
    ROTATING = "rotating"
    LAB = "lab"


class PhaseMode(Enum):
    RANDOM = "random"
    FIXED = "fixed"


class SteadyStateMethod(Enum):
    LINEAR_SOLVE = "linear_solve"
    PROPAGATION = "propagation"


class SweepAxis(Enum):
    PUMP_POWER = "pump_power"
    PUMP_FREQ = "pump_freq"


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class RunState(IntEnum):
    IDLE = auto()
    CONFIGURED = auto()
    COMPUTING = auto()
    WRITING = auto()
    DONE = auto()
    ERROR = auto()


@dataclass(frozen=True)
class NvParams:
    """Ground-state spin Hamiltonian constants. Frequencies in MHz, times in us."""

    d_gs: float = 2870.0
    zeeman: float = 42.0
    a_hf: float = 2.2
    q_quad: float = 4.95
    t1: float = 6000.0
    t2: float = 1.0
    t2_star: float = 0.448

    @staticmethod
    def from_field(
        b0_mt: float,
        gamma_mhz_per_mt: float = 28.025,
        **overrides: float
    ) -> 'NvParams':
        return NvParams(zeeman=b0_mt * gamma_mhz_per_mt, **overrides)

    @property
    def f0(self) -> float:
        return self.d_gs - self.zeeman


@dataclass(frozen=True)
class SpinLabel:
    ms: int
    mi: int


@dataclass(frozen=True)
class DriveTone:
    """One oscillating field. `rabi` is the amplitude w of the 2w*cos(...) drive, in MHz."""

    rabi: float
    freq: float
    axis: Axis
    role: Role
    phase: float = 0.0

    @staticmethod
    def probe(rabi: float, freq: float) -> 'DriveTone':
        return DriveTone(rabi=rabi, freq=freq, axis=Axis.X, role=Role.PROBE)

    @staticmethod
    def pump(rabi: float, freq: float, phase: float = 0.0) -> 'DriveTone':
        return DriveTone(rabi=rabi, freq=freq, axis=Axis.Z, role=Role.PUMP, phase=phase)


@dataclass(frozen=True)
class EffectiveTwoLevel:
    offset: float
    rabi_eff: float
    order: int


@dataclass(frozen=True)
class BlochState:
    """Bloch vector of the probed two-level transition, normalised to |sigma| <= 1.

    The thermal start is (0, 0, -1). Absorption is read from the y component on
    that scale, which is twice the value on a |sigma| <= 1/2 spin-expectation scale.
    """

    sigma: tuple[float, float, float]

    @property
    def x(self) -> float:
        return self.sigma[0]

    @property
    def y(self) -> float:
        return self.sigma[1]

    @property
    def z(self) -> float:
        return self.sigma[2]

    def norm(self) -> float:
        return float(np.linalg.norm(self.sigma))


@dataclass(frozen=True, eq=False)
class DensityState:
    """9x9 density matrix, basis (ms, mi) lexicographic over ms, mi in (+1, 0, -1)."""

    rho: NDArray[np.complex128]

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def populations(self) -> NDArray[np.float64]:
        return np.real(np.diag(self.rho)).copy()

    def electron_populations(self) -> dict[int, float]:
        pops = self.populations().reshape(3, 3)
        return {ms: float(pops[i].sum()) for i, ms in enumerate((1, 0, -1))}

    def nuclear_populations(self) -> dict[int, float]:
        pops = self.populations().reshape(3, 3)
        return {mi: float(pops[:, j].sum()) for j, mi in enumerate((1, 0, -1))}

    def is_physical(self, tol: float = 1e-10) -> bool:
        if self.hermiticity_error() > tol:
            return False
        if abs(self.trace() - 1.0) > tol:
            return False
        eigenvalues = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        return bool(eigenvalues.min() >= -1e-9)


@dataclass(frozen=True)
class PulseSequence:
    probe_duration: float = 5.5
    probe_tone: DriveTone = field(default_factory=lambda: DriveTone.probe(0.0909, 2828.0))
    pump_tone: DriveTone = field(default_factory=lambda: DriveTone.pump(0.0, 5.3))
    laser_init: bool = True


@dataclass(frozen=True, eq=False)
class Spectrum:
    detuning_grid: NDArray[np.float64]
    contrast: NDArray[np.float64]
    meta: dict[str, MetaValue] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.detuning_grid.size)

    @property
    def step(self) -> float:
        if self.detuning_grid.size < 2:
            return 0.0
        return float(np.min(np.diff(self.detuning_grid)))


@dataclass(frozen=True)
class SpurLine:
    n: int
    freq: float
    amplitude_db: float


@dataclass(frozen=True)
class GaussianDip:
    center: float
    fwhm: float
    depth: float
    center_err: float = 0.0
    fwhm_err: float = 0.0
    depth_err: float = 0.0


@dataclass(frozen=True)
class FitResult:
    dips: tuple[GaussianDip, ...]
    baseline: float
    rss: float
    n_peaks: int
    score: float
    converged: bool
    iterations: int
    message: str = ""


@dataclass(frozen=True)
class Regression:
    slope: float
    intercept: float
    r2: float


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    expected: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class RunReport:
    command: str
    files: tuple[str, ...] = ()
    summary: tuple[str, ...] = ()
    checks: tuple[CheckResult, ...] = ()

    @property
    def all_passed(self) -> bool:
        return all(check.passed for check in self.checks)
