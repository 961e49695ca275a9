import os
from pathlib import Path

from .types import NvParams, DriveTone, Axis, Role, Result, RunState
from .errors import TpmrError, ErrorCode, create_error


class ParameterGuards:
    """Range checks shared by the config parser and the physics entry points."""

    def __init__(self, output_dir: Path | None = None) -> None:
        self._output_dir = output_dir

    def check_nv_params(self, p: NvParams) -> Result[bool, TpmrError]:
        if p.d_gs <= 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Zero-field splitting must be positive",
                field="nv.d_gs",
                value=p.d_gs
            ))

        if p.zeeman < 0 or p.zeeman >= p.d_gs:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Zeeman shift must lie in [0, d_gs)",
                field="nv.zeeman",
                value=p.zeeman,
                d_gs=p.d_gs
            ))

        if p.t2 <= 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Transverse relaxation time must be positive",
                field="nv.t2",
                value=p.t2
            ))

        if p.t1 < p.t2:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Longitudinal relaxation time must be at least t2",
                field="nv.t1",
                value=p.t1,
                t2=p.t2
            ))

        if p.t2_star <= 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Dephasing time must be positive",
                field="nv.t2_star",
                value=p.t2_star
            ))

        return Result.ok(True)

    def check_drive_tone(self, tone: DriveTone, name: str) -> Result[bool, TpmrError]:
        if tone.rabi < 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Drive amplitude cannot be negative",
                field=f"{name}.rabi",
                value=tone.rabi
            ))

        if tone.freq <= 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Drive frequency must be positive",
                field=f"{name}.freq",
                value=tone.freq
            ))

        expected_axis = Axis.X if tone.role == Role.PROBE else Axis.Z
        if tone.axis != expected_axis:
            return Result.err(create_error(
                ErrorCode.INVALID_PARAMETER,
                "Probe couples on x and pump on z",
                field=f"{name}.axis",
                axis=tone.axis.value
            ))

        return Result.ok(True)

    def check_grid(self, start: float, stop: float, step: float) -> Result[bool, TpmrError]:
        if step <= 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Grid step must be positive",
                field="grid.step",
                value=step
            ))

        if start >= stop:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Grid start must be below grid stop",
                field="grid.start",
                start=start,
                stop=stop
            ))

        return Result.ok(True)

    def check_positive(self, value: float, name: str) -> Result[bool, TpmrError]:
        if not value > 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Value must be positive",
                field=name,
                value=value
            ))
        return Result.ok(True)

    def check_non_negative(self, value: float, name: str) -> Result[bool, TpmrError]:
        if value < 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Value cannot be negative",
                field=name,
                value=value
            ))
        return Result.ok(True)

    def check_non_positive_db(self, level_db: float, name: str) -> Result[bool, TpmrError]:
        if level_db > 0:
            return Result.err(create_error(
                ErrorCode.CONFIG_RANGE_ERROR,
                "Spur level must be at or below the carrier (<= 0 dB)",
                field=name,
                value=level_db
            ))
        return Result.ok(True)

    def check_order(self, k: int, k_max: int) -> Result[bool, TpmrError]:
        if abs(k) > k_max:
            return Result.err(create_error(
                ErrorCode.ORDER_LIMIT_EXCEEDED,
                "Multiphoton order exceeds configured limit",
                order=k,
                k_max=k_max
            ))
        return Result.ok(True)

    def check_output_writable(
        self,
        from_state: RunState,
        to_state: RunState
    ) -> Result[bool, TpmrError]:
        if to_state != RunState.WRITING or self._output_dir is None:
            return Result.ok(True)

        try:
            self._output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            return Result.err(create_error(
                ErrorCode.IO_ERROR,
                "Cannot create output directory",
                path=str(self._output_dir),
                reason=str(e)
            ))

        if not os.access(self._output_dir, os.W_OK):
            return Result.err(create_error(
                ErrorCode.IO_ERROR,
                "Output directory is not writable",
                path=str(self._output_dir),
                from_state=from_state.name
            ))

        return Result.ok(True)
