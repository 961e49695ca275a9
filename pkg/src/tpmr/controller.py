import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .types import (
    CheckResult, DriveTone, FitResult, GaussianDip, Result, RunReport, RunState, Spectrum,
    SpurLine, SweepAxis
)
from .errors import TpmrError, ErrorCode, create_error
from .fsm import RunFSM
from .guards import ParameterGuards
from .config import GridSpec, RunConfig, validate_config
from .core.spin_model import (
    all_labels, energy_level, esr_line, nmr_lines, tpmr_positions, SPIN_VALUES
)
from .core.bloch import tpmr_intensity_curve
from .core.dynamics import simulate_odmr
from .spectrum import (
    SynthRequest, apply_spurs, carrier_detunings, render, spur_depth_ratio, spur_lines,
    sweep, visibility_onset
)
from .fitting import (
    extract_t2star, select_model, sideband_offsets, splitting_regression, t2star_ratio
)
from .export import read_spectrum, write_fit, write_spectrum, write_table
from .validation import run_validation

logger = logging.getLogger(__name__)

SPUR_NEGLIGIBLE = 1e-3
STATED_T2STAR_RATIO = 2.6

Handler = Callable[[], Result[RunReport, TpmrError]]


def _label(value: int) -> str:
    return f"{value:+d}" if value else "0"


def _mean_dip(dips: Sequence[GaussianDip]) -> GaussianDip:
    return GaussianDip(
        center=float(np.mean([d.center for d in dips])),
        fwhm=float(np.mean([d.fwhm for d in dips])),
        depth=float(np.mean([d.depth for d in dips]))
    )


class TpmrController:
    """Runs one command against a validated RunConfig and writes its outputs.

    Each instance is single-use: IDLE -> CONFIGURED -> COMPUTING <-> WRITING -> DONE.
    """

    def __init__(self, config: RunConfig, fit_input: Path | None = None) -> None:
        self._config = config
        self._fit_input = fit_input
        self._fsm = RunFSM()
        self._guards = ParameterGuards(output_dir=config.run.out)
        self._files: list[str] = []

        self._fsm.add_guard(self._guards.check_output_writable)

        self._command_dispatch: dict[str, Handler] = {
            "levels": self._execute_levels,
            "synth": self._execute_synth,
            "sweep": self._execute_sweep,
            "oracle": self._execute_oracle,
            "fit": self._execute_fit,
            "tpmr-curve": self._execute_curve,
            "spurs": self._execute_spurs,
            "validate": self._execute_validate,
            "fig3": self._execute_sweep,
            "fig4": self._execute_fig4,
            "fig5-spurs": self._execute_spurs,
            "fig6": self._execute_curve,
        }

    @property
    def commands(self) -> tuple[str, ...]:
        return tuple(self._command_dispatch)

    def get_state(self) -> RunState:
        return self._fsm.get_current_state()

    def execute(self, command: str) -> Result[RunReport, TpmrError]:
        handler = self._command_dispatch.get(command)
        if handler is None:
            return Result.err(create_error(
                ErrorCode.UNKNOWN_COMMAND,
                f"Unknown command '{command}'",
                command=command
            ))

        if self._fsm.get_current_state() != RunState.IDLE:
            return Result.err(create_error(
                ErrorCode.INVALID_STATE_TRANSITION,
                "Controller has already run a command",
                current_state=self._fsm.get_current_state().name
            ))

        valid = validate_config(self._config)
        if valid.is_err():
            self._fsm.force_error_state()
            return Result.err(valid.unwrap_err())

        for state in (RunState.CONFIGURED, RunState.COMPUTING):
            step = self._fsm.transition(state)
            if step.is_err():
                self._fsm.force_error_state()
                return Result.err(step.unwrap_err())

        run = self._config.run
        logger.info("Running '%s' (seed=%d, out=%s)", command, run.seed, run.out)
        result = handler()
        if result.is_err():
            logger.error("'%s' failed: %s", command, result.unwrap_err())
            self._fsm.force_error_state()
            return result

        done = self._fsm.transition(RunState.DONE)
        if done.is_err():
            self._fsm.force_error_state()
            return Result.err(done.unwrap_err())

        return Result.ok(replace(result.unwrap(), command=command, files=tuple(self._files)))

    # --- output -------------------------------------------------------

    def _write(self, writer: Callable[[], Result[Path, TpmrError]]) -> Result[Path, TpmrError]:
        entered = self._fsm.transition(RunState.WRITING)
        if entered.is_err():
            return Result.err(entered.unwrap_err())

        written = writer()
        if written.is_err():
            return written
        self._files.append(str(written.unwrap()))
        logger.debug("Wrote %s", written.unwrap())

        back = self._fsm.transition(RunState.COMPUTING)
        if back.is_err():
            return Result.err(back.unwrap_err())
        return written

    def _path(self, name: str) -> Path:
        return self._config.run.out / name

    def _write_spectrum(self, name: str, s: Spectrum) -> Result[Path, TpmrError]:
        return self._write(lambda: write_spectrum(self._path(name), s, self._config.run.fmt))

    def _write_table(
        self,
        name: str,
        columns: Sequence[str],
        rows: Sequence[Sequence[Any]],
        meta: Mapping[str, Any] | None = None
    ) -> Result[Path, TpmrError]:
        return self._write(
            lambda: write_table(self._path(name), columns, rows, meta, self._config.run.fmt)
        )

    def _write_fit(
        self,
        name: str,
        fit: FitResult,
        meta: Mapping[str, Any] | None = None
    ) -> Result[Path, TpmrError]:
        return self._write(lambda: write_fit(self._path(name), fit, self._config.run.fmt, meta))

    def _fit(self, s: Spectrum) -> Result[FitResult, TpmrError]:
        fit_cfg = self._config.fit
        return select_model(
            s, self._config.nv, fit_cfg.prominence, fit_cfg.fwhm_guess, fit_cfg.max_iter
        )

    def _synth_request(self, pump: DriveTone, power_mw: float | None) -> SynthRequest:
        cfg = self._config
        return SynthRequest(
            p=cfg.nv,
            pump=pump,
            probe_rabi=cfg.probe.rabi,
            grid=cfg.grid.points(),
            noise_sigma=cfg.synth.noise_sigma,
            seed=cfg.run.seed,
            settings=cfg.synth,
            pump_power_mw=power_mw
        )

    # --- commands -----------------------------------------------------

    def _execute_levels(self) -> Result[RunReport, TpmrError]:
        p = self._config.nv
        rows: list[tuple[str, str, float]] = [
            ("energy", f"|{_label(s.ms)},{_label(s.mi)}>", energy_level(p, s))
            for s in all_labels()
        ]
        rows.extend(("esr", f"mi={_label(mi)}", esr_line(p, mi)) for mi in SPIN_VALUES)
        rows.extend(("nmr", str(i), f) for i, f in enumerate(nmr_lines(p), start=1))
        positions = tpmr_positions(p, self._config.pump.freq)
        rows.extend(("tpmr", str(i), f) for i, f in enumerate(positions, start=1))

        written = self._write_table(
            "levels", ("kind", "label", "freq_mhz"), rows,
            {"f0_mhz": p.f0, "pump_freq_mhz": self._config.pump.freq}
        )
        if written.is_err():
            return Result.err(written.unwrap_err())
        return Result.ok(RunReport(command="levels", summary=(
            f"f0 = {p.f0:.3f} MHz, {len(rows)} rows",
        )))

    def _execute_synth(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        s = render(self._synth_request(cfg.pump, cfg.pump_power_mw))
        written = self._write_spectrum("synth", s)
        if written.is_err():
            return Result.err(written.unwrap_err())
        return Result.ok(RunReport(command="synth", summary=(
            f"{len(s)} points, pump {cfg.pump_power_mw:g} mW at {cfg.pump.freq:g} MHz, "
            f"min contrast {float(np.min(s.contrast)):.4g}",
        )))

    def _sweep_values(self) -> tuple[SweepAxis, tuple[float, ...], float]:
        cfg = self._config
        if cfg.sweep.axis == SweepAxis.PUMP_POWER:
            return cfg.sweep.axis, cfg.sweep.powers, cfg.pump.freq
        return cfg.sweep.axis, cfg.sweep.freqs, cfg.pump_power_mw

    def _sweep_fits(
        self,
        axis: SweepAxis,
        values: Sequence[float],
        spectra: Sequence[Spectrum]
    ) -> Result[list[FitResult], TpmrError]:
        fits: list[FitResult] = []
        rows: list[tuple[Any, ...]] = []
        dip_rows: list[tuple[Any, ...]] = []
        for value, s in zip(values, spectra):
            written = self._write_spectrum(f"spectrum_{axis.value}_{value:g}", s)
            if written.is_err():
                return Result.err(written.unwrap_err())

            fitted = self._fit(s)
            if fitted.is_err():
                return Result.err(fitted.unwrap_err())
            fit = fitted.unwrap()
            fits.append(fit)
            rows.append((value, fit.n_peaks, fit.score, fit.rss, fit.converged))
            dip_rows.extend((value, d.center, d.fwhm, d.depth) for d in fit.dips)

        summary = self._write_table(
            f"fits_{axis.value}", (axis.value, "n_peaks", "score", "rss", "converged"), rows,
            {"axis": axis.value, "seed": self._config.run.seed}
        )
        if summary.is_err():
            return Result.err(summary.unwrap_err())
        dips = self._write_table(
            f"dips_{axis.value}", (axis.value, "center_mhz", "fwhm_mhz", "depth"), dip_rows,
            {"axis": axis.value, "seed": self._config.run.seed}
        )
        if dips.is_err():
            return Result.err(dips.unwrap_err())
        return Result.ok(fits)

    def _power_summary(self, powers: Sequence[float], fits: Sequence[FitResult]) -> list[str]:
        cfg = self._config
        carriers = carrier_detunings(cfg.nv)
        lines = [
            "dips per power: " + ", ".join(
                f"{power:g} mW -> {fit.n_peaks}" for power, fit in zip(powers, fits)
            )
        ]

        onset = visibility_onset(powers, fits, carriers, cfg.pump.freq, cfg.synth.visibility)
        lines.append(
            "sideband visibility onset: none" if onset is None
            else f"sideband visibility onset: {onset:g} mW"
        )

        drift = 0.0
        for carrier in carriers:
            centers = [min(fit.dips, key=lambda d: abs(d.center - carrier)).center for fit in fits]
            drift = max(drift, max(centers) - min(centers))
        lines.append(f"max carrier drift across powers: {drift:.4f} MHz")
        return lines

    def _frequency_summary(
        self,
        freqs: Sequence[float],
        fits: Sequence[FitResult]
    ) -> Result[list[str], TpmrError]:
        lower_points: list[tuple[float, float]] = []
        upper_points: list[tuple[float, float]] = []
        for freq, fit in zip(freqs, fits):
            offsets = sideband_offsets(fit, freq)
            if offsets.is_err():
                logger.warning("No sideband pair at %g MHz: %s", freq, offsets.unwrap_err())
                continue
            lower, upper = offsets.unwrap()
            lower_points.append((freq, lower))
            upper_points.append((freq, upper))

        spread_points = [
            (f, 0.5 * (up - low)) for (f, low), (_, up) in zip(lower_points, upper_points)
        ]
        lines: list[str] = []
        for name, points in (
            ("lower", lower_points), ("upper", upper_points), ("half-spread", spread_points)
        ):
            regression = splitting_regression(points)
            if regression.is_err():
                return Result.err(regression.unwrap_err())
            reg = regression.unwrap()
            lines.append(
                f"{name} sideband offset vs pump freq: slope {reg.slope:+.4f}, "
                f"intercept {reg.intercept:+.4f} MHz, r2 {reg.r2:.5f}"
            )
        return Result.ok(lines)

    def _execute_sweep(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        axis, values, fixed = self._sweep_values()
        spectra = sweep(
            cfg.nv, axis, values, fixed, cfg.grid.points(), cfg.run.seed,
            cfg.probe.rabi, cfg.synth, cfg.run.jobs
        )
        fitted = self._sweep_fits(axis, values, spectra)
        if fitted.is_err():
            return Result.err(fitted.unwrap_err())
        fits = fitted.unwrap()

        if axis == SweepAxis.PUMP_POWER:
            summary = self._power_summary(values, fits)
        else:
            lines = self._frequency_summary(values, fits)
            if lines.is_err():
                return Result.err(lines.unwrap_err())
            summary = lines.unwrap()
        return Result.ok(RunReport(command="sweep", summary=tuple(summary)))

    def _linewidth_summary(self, dressed: FitResult, bare: FitResult | None) -> list[str]:
        """Mean carrier FWHM of the pump-off fit against the mean sideband FWHM."""
        cfg = self._config
        pump_freq = cfg.pump.freq
        carriers = carrier_detunings(cfg.nv)
        source = bare if bare is not None else dressed
        carrier_dips = [min(source.dips, key=lambda d: abs(d.center - c)) for c in carriers]
        sideband_dips = [
            min(dressed.dips, key=lambda d: abs(d.center - (c + sign * pump_freq)))
            for c in carriers for sign in (-1, 1)
        ]
        wide = _mean_dip(carrier_dips)
        narrow = _mean_dip(sideband_dips)
        ratio = t2star_ratio(narrow, wide)
        line = (
            f"carrier FWHM {wide.fwhm:.3f} MHz (T2* {extract_t2star(wide):.3f} us), "
            f"sideband FWHM {narrow.fwhm:.3f} MHz (T2* {extract_t2star(narrow):.3f} us), "
            f"ratio {ratio:.2f}"
        )
        if abs(ratio - STATED_T2STAR_RATIO) > 0.05 * STATED_T2STAR_RATIO:
            logger.warning(
                "T2* ratio %.2f from the fitted widths differs from the quoted %.1f",
                ratio, STATED_T2STAR_RATIO
            )
        return [line]

    def _execute_fig4(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        references = (
            ("reference_pump", cfg.pump, cfg.pump_power_mw),
            ("reference_nopump", replace(cfg.pump, rabi=0.0), 0.0),
        )
        summary: list[str] = []
        dressed: FitResult | None = None
        bare: FitResult | None = None
        for name, pump, power in references:
            s = render(self._synth_request(pump, power))
            written = self._write_spectrum(name, s)
            if written.is_err():
                return Result.err(written.unwrap_err())
            fitted = self._fit(s)
            if fitted.is_err():
                return Result.err(fitted.unwrap_err())
            fit = fitted.unwrap()
            stored = self._write_fit(f"{name}_fit", fit, {"pump_power_mw": power})
            if stored.is_err():
                return Result.err(stored.unwrap_err())
            summary.append(f"{name}: {fit.n_peaks} dips")
            if pump.rabi > 0.0:
                dressed = fit
            elif fit.n_peaks == 3:
                bare = fit

        if dressed is not None and dressed.n_peaks == 9:
            summary.extend(self._linewidth_summary(dressed, bare))

        swept = self._execute_sweep()
        if swept.is_err():
            return swept
        summary.extend(swept.unwrap().summary)
        return Result.ok(RunReport(command="fig4", summary=tuple(summary)))

    def _execute_oracle(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        freqs = cfg.nv.f0 + cfg.grid.points()
        simulated = simulate_odmr(
            cfg.nv, cfg.sequence, freqs, cfg.oracle.detuning_samples, cfg.run.seed,
            cfg.oracle, cfg.run.jobs
        )
        if simulated.is_err():
            return Result.err(simulated.unwrap_err())
        s = simulated.unwrap()

        written = self._write_spectrum("oracle", s)
        if written.is_err():
            return Result.err(written.unwrap_err())
        return Result.ok(RunReport(command="oracle", summary=(
            f"{len(s)} points, {cfg.oracle.detuning_samples} detuning samples, "
            f"min contrast {float(np.min(s.contrast)):.4g}",
        )))

    def _execute_fit(self) -> Result[RunReport, TpmrError]:
        if self._fit_input is None:
            return Result.err(create_error(
                ErrorCode.USAGE_ERROR,
                "The fit command needs an input spectrum file"
            ))

        loaded = read_spectrum(self._fit_input)
        if loaded.is_err():
            return Result.err(loaded.unwrap_err())
        fitted = self._fit(loaded.unwrap())
        if fitted.is_err():
            return Result.err(fitted.unwrap_err())
        fit = fitted.unwrap()

        written = self._write_fit(f"{self._fit_input.stem}_fit", fit,
                                  {"source_file": self._fit_input.name})
        if written.is_err():
            return Result.err(written.unwrap_err())
        centers = ", ".join(f"{d.center:+.3f}" for d in fit.dips)
        return Result.ok(RunReport(command="fit", summary=(
            f"{fit.n_peaks} dips at {centers} MHz (converged={fit.converged})",
        )))

    def _execute_curve(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        curve = cfg.curve
        pump_rabi = curve.pump_rabi if curve.pump_rabi is not None else cfg.pump.rabi
        rf_grid = GridSpec(curve.rf_start, curve.rf_stop, curve.rf_step).points()
        probe = DriveTone.probe(cfg.probe.rabi, cfg.nv.f0)

        computed = tpmr_intensity_curve(
            probe, pump_rabi, rf_grid, cfg.nv.t1, cfg.nv.t2, curve.k_max, curve.validity_mhz
        )
        if computed.is_err():
            return Result.err(computed.unwrap_err())
        points = computed.unwrap()

        rows = [(f, value, f >= curve.validity_mhz) for f, value in points]
        written = self._write_table(
            "tpmr_curve", ("rf_mhz", "intensity", "valid"), rows,
            {"probe_rabi_mhz": cfg.probe.rabi, "pump_rabi_mhz": pump_rabi,
             "t1_us": cfg.nv.t1, "t2_us": cfg.nv.t2, "validity_mhz": curve.validity_mhz}
        )
        if written.is_err():
            return Result.err(written.unwrap_err())

        valid = [value for f, value in points if f >= curve.validity_mhz]
        decreasing = all(b < a for a, b in zip(valid, valid[1:]))
        return Result.ok(RunReport(command="tpmr-curve", summary=(
            f"{len(points)} points, {len(points) - len(valid)} below "
            f"{curve.validity_mhz:g} MHz validity limit",
            f"monotone decreasing above limit: {decreasing}",
        )))

    def _spur_model(self) -> dict[int, float]:
        spurs = self._config.spurs
        model = spurs.table.at(self._config.pump_power_mw)
        if spurs.force_db is not None:
            forced = min(spurs.force_db, 0.0)
            model = {n: forced for n in range(1, spurs.max_order + 1)}
        return model

    def _execute_spurs(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        lines: list[SpurLine] = spur_lines(
            cfg.probe.freq, cfg.pump.freq, cfg.spurs.max_order, self._spur_model()
        )
        rows = [
            (line.n, line.freq, line.amplitude_db, spur_depth_ratio(line.amplitude_db))
            for line in lines
        ]
        table = self._write_table(
            "spur_lines", ("n", "freq_mhz", "amplitude_db", "depth_ratio"), rows,
            {"pump_power_mw": cfg.pump_power_mw, "pump_freq_mhz": cfg.pump.freq,
             "probe_freq_mhz": cfg.probe.freq}
        )
        if table.is_err():
            return Result.err(table.unwrap_err())

        request = self._synth_request(cfg.pump, cfg.pump_power_mw)
        for name, spurs in (("spectrum_clean", ()), ("spectrum_spurs", lines)):
            written = self._write_spectrum(name, apply_spurs(request, spurs))
            if written.is_err():
                return Result.err(written.unwrap_err())

        summary: list[str] = []
        for order in range(1, cfg.spurs.max_order + 1):
            level = next((line for line in lines if line.n == order), None)
            if level is None:
                summary.append(f"|n|={order}: no spur below {cfg.spurs.table.threshold_mw:g} mW")
                continue
            ratio = spur_depth_ratio(level.amplitude_db)
            if ratio < SPUR_NEGLIGIBLE:
                verdict = "negligible"
            elif cfg.spurs.force_db is None:
                verdict = (
                    f"transfer model gives more than {SPUR_NEGLIGIBLE:.0e}; "
                    "no such dip is seen in measured spectra"
                )
                logger.warning(
                    "|n|=%d spur at %.1f dB: the pi-pulse transfer model gives depth ratio "
                    "%.3g, above %.0e, while measured spectra show no spur dip",
                    order, level.amplitude_db, ratio, SPUR_NEGLIGIBLE
                )
            else:
                verdict = "visible"
            summary.append(
                f"|n|={order}: {level.amplitude_db:.1f} dB -> depth ratio {ratio:.3g} ({verdict})"
            )
        return Result.ok(RunReport(command="spurs", summary=tuple(summary)))

    def _execute_validate(self) -> Result[RunReport, TpmrError]:
        cfg = self._config
        ran = run_validation(
            cfg.nv, cfg.probe.rabi, cfg.grid.points(), cfg.run.seed, cfg.validate, cfg.synth
        )
        if ran.is_err():
            return Result.err(ran.unwrap_err())
        checks: list[CheckResult] = ran.unwrap()

        rows = [(c.name, c.measured, c.expected, c.tolerance, c.passed) for c in checks]
        written = self._write_table(
            "validation", ("check", "measured", "expected", "tolerance", "passed"), rows,
            {"seed": cfg.run.seed}
        )
        if written.is_err():
            return Result.err(written.unwrap_err())

        failed = [c.name for c in checks if not c.passed]
        if failed:
            return Result.err(create_error(
                ErrorCode.VALIDATION_FAILED,
                "Validation checks failed",
                failed=",".join(failed)
            ))
        return Result.ok(RunReport(
            command="validate",
            summary=tuple(
                f"{c.name}: {c.measured:.6g} vs {c.expected:.6g} (tol {c.tolerance:g}) PASS"
                for c in checks
            ),
            checks=tuple(checks)
        ))
