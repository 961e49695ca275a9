"""Run configuration: flat `section.key = value` files, environment overrides,
shipped scenario presets.

Precedence is defaults < file < environment (TPMR_<SECTION>_<KEY>) < CLI flags.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from numpy.typing import NDArray

from .types import (
    DriveTone, NvParams, OutputFormat, PhaseMode, PropagationFrame, PulseSequence, Result,
    SweepAxis
)
from .errors import TpmrError, ErrorCode, create_error
from .guards import ParameterGuards
from .core.dynamics import OracleSettings
from .spectrum import DiplexerTable, SynthSettings, power_to_rabi
from .validation import ValidationSettings

logger = logging.getLogger(__name__)

ENV_PREFIX = "TPMR_"
SCENARIOS = ("fig3", "fig4", "fig5-spurs", "fig6")


@dataclass(frozen=True)
class GridSpec:
    start: float = -15.0
    stop: float = 15.0
    step: float = 0.02

    def points(self) -> NDArray[np.float64]:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(count)


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    out: Path = Path("out")
    fmt: OutputFormat = OutputFormat.CSV
    jobs: int = 1


@dataclass(frozen=True)
class SweepSettings:
    axis: SweepAxis = SweepAxis.PUMP_POWER
    powers: tuple[float, ...] = (0.63, 2.00, 10.0, 31.6, 63.0)
    freqs: tuple[float, ...] = (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)


@dataclass(frozen=True)
class SpurSettings:
    max_order: int = 2
    table: DiplexerTable = field(default_factory=DiplexerTable)
    force_db: float | None = None   # replaces every table level when set


@dataclass(frozen=True)
class CurveSettings:
    rf_start: float = 0.5
    rf_stop: float = 8.0
    rf_step: float = 0.1
    validity_mhz: float = 2.5
    k_max: int = 1
    pump_rabi: float | None = None


@dataclass(frozen=True)
class FitSettings:
    prominence: float = 0.0          # 0: derived from noise floor and dip depth
    fwhm_guess: float = 0.5
    max_iter: int = 500


@dataclass(frozen=True)
class RunConfig:
    nv: NvParams = field(default_factory=NvParams)
    sequence: PulseSequence = field(default_factory=PulseSequence)
    pump_power_mw: float = 63.0
    grid: GridSpec = field(default_factory=GridSpec)
    run: RunSettings = field(default_factory=RunSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    spurs: SpurSettings = field(default_factory=SpurSettings)
    curve: CurveSettings = field(default_factory=CurveSettings)
    fit: FitSettings = field(default_factory=FitSettings)
    validate: ValidationSettings = field(default_factory=ValidationSettings)
    k_max: int = 3

    @property
    def probe(self) -> DriveTone:
        return self.sequence.probe_tone

    @property
    def pump(self) -> DriveTone:
        return self.sequence.pump_tone


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(item) for item in text.split(",") if item.strip())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def _enum(kind: type[Enum]) -> Callable[[str], Any]:
    def parse(text: str) -> Any:
        return kind(text.strip().lower())
    return parse


# key -> (parser, default)
KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "nv.d_gs": (float, 2870.0),
    "nv.zeeman": (float, 42.0),
    "nv.b0": (_optional_float, None),
    "nv.gamma": (float, 28.025),
    "nv.a_hf": (float, 2.2),
    "nv.q_quad": (float, 4.95),
    "nv.t1": (float, 6000.0),
    "nv.t2": (float, 1.0),
    "nv.t2_star": (float, 0.448),
    "probe.rabi": (float, 0.0909),
    "probe.freq": (float, 2828.0),
    "pump.power": (float, 63.0),
    "pump.freq": (float, 5.3),
    "pump.rabi": (_optional_float, None),
    "pump.phase": (float, 0.0),
    "sequence.probe_duration": (float, 5.5),
    "sequence.laser_init": (_bool, True),
    "grid.start": (float, -15.0),
    "grid.stop": (float, 15.0),
    "grid.step": (float, 0.02),
    "run.seed": (int, 0),
    "run.out": (str, "out"),
    "run.format": (_enum(OutputFormat), OutputFormat.CSV),
    "run.jobs": (int, 1),
    "synth.kappa": (float, 0.19),
    "synth.contrast_scale": (float, 0.017),
    "synth.width_ratio": (float, 0.45),
    "synth.noise_sigma": (float, 1e-3),
    "synth.max_order": (int, 1),
    "synth.visibility": (float, 0.1),
    "frames.k_max": (int, 3),
    "oracle.detuning_samples": (int, 32),
    "oracle.dt": (float, 0.0),
    "oracle.frame": (_enum(PropagationFrame), PropagationFrame.ROTATING),
    "oracle.counter_rotating": (_bool, False),
    "oracle.phase": (_enum(PhaseMode), PhaseMode.RANDOM),
    "oracle.check_error": (_bool, False),
    "oracle.chunk_points": (int, 64),
    "sweep.axis": (_enum(SweepAxis), SweepAxis.PUMP_POWER),
    "sweep.powers": (_floats, (0.63, 2.00, 10.0, 31.6, 63.0)),
    "sweep.freqs": (_floats, (3.0, 4.0, 5.0, 6.0, 7.0, 8.0)),
    "spurs.max_order": (int, 2),
    "spurs.table_power": (float, 63.0),
    "spurs.table_db": (_floats, (-48.0, -15.0)),
    "spurs.threshold_mw": (float, 5.0),
    "spurs.force_db": (_optional_float, None),
    "curve.rf_start": (float, 0.5),
    "curve.rf_stop": (float, 8.0),
    "curve.rf_step": (float, 0.1),
    "curve.validity_mhz": (float, 2.5),
    "curve.k_max": (int, 1),
    "curve.pump_rabi": (_optional_float, None),
    "fit.prominence": (float, 0.0),
    "fit.fwhm_guess": (float, 0.5),
    "fit.max_iter": (int, 500),
    "validate.ratios": (_floats, (0.1, 0.2, 0.3)),
    "validate.rf": (float, 5.3),
    "validate.tolerance": (float, 0.05),
    "validate.center_step": (float, 0.005),
    "validate.bloch_draws": (int, 1000),
}


def env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def _parse_value(key: str, text: str, line: int | None) -> Result[Any, TpmrError]:
    parser, _ = KEYS[key]
    try:
        return Result.ok(parser(text.strip()))
    except ValueError as e:
        context: dict[str, str | int | float] = {"field": key, "value": text.strip()}
        if line is not None:
            context["line"] = line
        return Result.err(create_error(
            ErrorCode.CONFIG_PARSE_ERROR,
            f"Cannot parse value: {e}",
            **context
        ))


def parse_assignments(text: str) -> Result[dict[str, Any], TpmrError]:
    """Parse `section.key = value` lines into typed values (only keys present)."""
    values: dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            return Result.err(create_error(
                ErrorCode.CONFIG_PARSE_ERROR,
                "Expected 'section.key = value'",
                line=number,
                text=raw.strip()
            ))
        if key not in KEYS:
            return Result.err(create_error(
                ErrorCode.UNKNOWN_CONFIG_KEY,
                f"Unknown configuration key '{key}'",
                field=key,
                line=number
            ))

        parsed = _parse_value(key, value, number)
        if parsed.is_err():
            return Result.err(parsed.unwrap_err())
        values[key] = parsed.unwrap()
    return Result.ok(values)


def _env_overrides(env: Mapping[str, str]) -> Result[dict[str, Any], TpmrError]:
    values: dict[str, Any] = {}
    for key in KEYS:
        name = env_name(key)
        if name not in env:
            continue
        parsed = _parse_value(key, env[name], None)
        if parsed.is_err():
            return Result.err(parsed.unwrap_err())
        logger.debug("Environment override %s=%s", name, env[name])
        values[key] = parsed.unwrap()
    return Result.ok(values)


def _build(v: Mapping[str, Any]) -> RunConfig:
    nv_fields = dict(
        d_gs=v["nv.d_gs"], zeeman=v["nv.zeeman"], a_hf=v["nv.a_hf"], q_quad=v["nv.q_quad"],
        t1=v["nv.t1"], t2=v["nv.t2"], t2_star=v["nv.t2_star"]
    )
    if v["nv.b0"] is not None:
        nv_fields.pop("zeeman")
        nv = NvParams.from_field(v["nv.b0"], v["nv.gamma"], **nv_fields)
    else:
        nv = NvParams(**nv_fields)

    synth = SynthSettings(
        kappa=v["synth.kappa"],
        contrast_scale=v["synth.contrast_scale"],
        width_ratio=v["synth.width_ratio"],
        noise_sigma=v["synth.noise_sigma"],
        max_order=v["synth.max_order"],
        visibility=v["synth.visibility"]
    )
    pump_rabi = v["pump.rabi"]
    if pump_rabi is None:
        pump_rabi = power_to_rabi(v["pump.power"], synth.kappa)

    sequence = PulseSequence(
        probe_duration=v["sequence.probe_duration"],
        probe_tone=DriveTone.probe(v["probe.rabi"], v["probe.freq"]),
        pump_tone=DriveTone.pump(pump_rabi, v["pump.freq"], v["pump.phase"]),
        laser_init=v["sequence.laser_init"]
    )
    levels = tuple(
        (order, db) for order, db in enumerate(v["spurs.table_db"], start=1)
    )
    return RunConfig(
        nv=nv,
        sequence=sequence,
        pump_power_mw=v["pump.power"],
        grid=GridSpec(v["grid.start"], v["grid.stop"], v["grid.step"]),
        run=RunSettings(
            seed=v["run.seed"], out=Path(v["run.out"]), fmt=v["run.format"], jobs=v["run.jobs"]
        ),
        synth=synth,
        oracle=OracleSettings(
            detuning_samples=v["oracle.detuning_samples"],
            dt=v["oracle.dt"],
            frame=v["oracle.frame"],
            counter_rotating=v["oracle.counter_rotating"],
            phase_mode=v["oracle.phase"],
            check_error=v["oracle.check_error"],
            contrast_scale=synth.contrast_scale,
            chunk_points=v["oracle.chunk_points"]
        ),
        sweep=SweepSettings(
            axis=v["sweep.axis"], powers=v["sweep.powers"], freqs=v["sweep.freqs"]
        ),
        spurs=SpurSettings(
            max_order=v["spurs.max_order"],
            table=DiplexerTable(
                rows=((v["spurs.table_power"], levels),),
                threshold_mw=v["spurs.threshold_mw"]
            ),
            force_db=v["spurs.force_db"]
        ),
        curve=CurveSettings(
            rf_start=v["curve.rf_start"],
            rf_stop=v["curve.rf_stop"],
            rf_step=v["curve.rf_step"],
            validity_mhz=v["curve.validity_mhz"],
            k_max=v["curve.k_max"],
            pump_rabi=v["curve.pump_rabi"]
        ),
        fit=FitSettings(
            prominence=v["fit.prominence"],
            fwhm_guess=v["fit.fwhm_guess"],
            max_iter=v["fit.max_iter"]
        ),
        validate=ValidationSettings(
            ratios=v["validate.ratios"],
            rf=v["validate.rf"],
            tolerance=v["validate.tolerance"],
            center_step=v["validate.center_step"],
            bloch_draws=v["validate.bloch_draws"]
        ),
        k_max=v["frames.k_max"]
    )


def validate_config(cfg: RunConfig) -> Result[bool, TpmrError]:
    guards = ParameterGuards()
    checks = [
        guards.check_nv_params(cfg.nv),
        guards.check_drive_tone(cfg.probe, "probe"),
        guards.check_drive_tone(cfg.pump, "pump"),
        guards.check_non_negative(cfg.pump_power_mw, "pump.power"),
        guards.check_positive(cfg.sequence.probe_duration, "sequence.probe_duration"),
        guards.check_grid(cfg.grid.start, cfg.grid.stop, cfg.grid.step),
        guards.check_positive(cfg.synth.kappa, "synth.kappa"),
        guards.check_positive(cfg.synth.contrast_scale, "synth.contrast_scale"),
        guards.check_positive(cfg.synth.width_ratio, "synth.width_ratio"),
        guards.check_non_negative(cfg.synth.noise_sigma, "synth.noise_sigma"),
        guards.check_non_negative(cfg.synth.max_order, "synth.max_order"),
        guards.check_order(cfg.synth.max_order, cfg.k_max),
        guards.check_positive(cfg.oracle.detuning_samples, "oracle.detuning_samples"),
        guards.check_non_negative(cfg.oracle.dt, "oracle.dt"),
        guards.check_positive(cfg.oracle.chunk_points, "oracle.chunk_points"),
        guards.check_positive(cfg.run.jobs, "run.jobs"),
        guards.check_non_negative(cfg.spurs.max_order, "spurs.max_order"),
        guards.check_positive(cfg.curve.rf_start, "curve.rf_start"),
        guards.check_positive(cfg.curve.rf_step, "curve.rf_step"),
        guards.check_non_negative(cfg.fit.prominence, "fit.prominence"),
        guards.check_positive(cfg.fit.fwhm_guess, "fit.fwhm_guess"),
        guards.check_positive(cfg.fit.max_iter, "fit.max_iter"),
        guards.check_positive(cfg.validate.rf, "validate.rf"),
        guards.check_positive(cfg.validate.tolerance, "validate.tolerance"),
    ]
    checks.extend(guards.check_non_negative(p, "sweep.powers") for p in cfg.sweep.powers)
    checks.extend(guards.check_positive(f, "sweep.freqs") for f in cfg.sweep.freqs)
    checks.extend(guards.check_positive(r, "validate.ratios") for r in cfg.validate.ratios)
    checks.extend(
        guards.check_non_positive_db(db, "spurs.table_db")
        for _, levels in cfg.spurs.table.rows for _, db in levels
    )
    for check in checks:
        if check.is_err():
            return check
    return Result.ok(True)


def parse_config(
    text: str,
    env: Mapping[str, str] | None = None,
    preset: str = ""
) -> Result[RunConfig, TpmrError]:
    """Fully defaulted, range-checked RunConfig.

    `preset` (a scenario file) is applied first, then `text`, then `env`.
    """
    values = {key: default for key, (_, default) in KEYS.items()}

    for source in (preset, text):
        from_file = parse_assignments(source)
        if from_file.is_err():
            return Result.err(from_file.unwrap_err())
        values.update(from_file.unwrap())

    from_env = _env_overrides(env or {})
    if from_env.is_err():
        return Result.err(from_env.unwrap_err())
    values.update(from_env.unwrap())

    power = ParameterGuards().check_non_negative(values["pump.power"], "pump.power")
    if power.is_err():
        return Result.err(power.unwrap_err())

    cfg = _build(values)
    valid = validate_config(cfg)
    if valid.is_err():
        return Result.err(valid.unwrap_err())
    return Result.ok(cfg)


def read_config_text(path: Path | None) -> Result[str, TpmrError]:
    if path is None:
        return Result.ok("")
    try:
        return Result.ok(path.read_text(encoding="utf-8"))
    except OSError as e:
        return Result.err(create_error(
            ErrorCode.IO_ERROR,
            "Cannot read config file",
            path=str(path),
            reason=str(e)
        ))


def load_config(
    path: Path | None,
    env: Mapping[str, str] | None = None
) -> Result[RunConfig, TpmrError]:
    text = read_config_text(path)
    if text.is_err():
        return Result.err(text.unwrap_err())
    return parse_config(text.unwrap(), env)


def scenario_text(name: str) -> Result[str, TpmrError]:
    if name not in SCENARIOS:
        return Result.err(create_error(
            ErrorCode.UNKNOWN_COMMAND,
            f"Unknown scenario '{name}'",
            scenario=name
        ))
    resource = resources.files("tpmr").joinpath("scenarios").joinpath(f"{name}.conf")
    return Result.ok(resource.read_text(encoding="utf-8"))


def load_scenario(
    name: str,
    overrides: str = "",
    env: Mapping[str, str] | None = None
) -> Result[RunConfig, TpmrError]:
    """Scenario preset, then `overrides` text (e.g. a user config file), then env."""
    base = scenario_text(name)
    if base.is_err():
        return Result.err(base.unwrap_err())
    return parse_config(overrides, env, preset=base.unwrap())


def with_cli_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    out: Path | None = None,
    jobs: int | None = None,
    fmt: OutputFormat | None = None
) -> RunConfig:
    run = cfg.run
    if seed is not None:
        run = replace(run, seed=seed)
    if out is not None:
        run = replace(run, out=out)
    if jobs is not None:
        run = replace(run, jobs=jobs)
    if fmt is not None:
        run = replace(run, fmt=fmt)
    return replace(cfg, run=run)


def config_for_command(
    command: str,
    path: Path | None,
    env: Mapping[str, str] | None = None
) -> Result[RunConfig, TpmrError]:
    """Scenario commands start from their shipped preset; the rest from defaults."""
    if command not in SCENARIOS:
        return load_config(path, env)
    text = read_config_text(path)
    if text.is_err():
        return Result.err(text.unwrap_err())
    return load_scenario(command, text.unwrap(), env)
