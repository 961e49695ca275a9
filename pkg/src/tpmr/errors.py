from enum import Enum, auto
from dataclasses import dataclass


class ErrorCode(Enum):
    INVALID_PARAMETER = auto()
    OUT_OF_RANGE = auto()
    ORDER_LIMIT_EXCEEDED = auto()
    STEP_SIZE_VIOLATION = auto()
    NON_CONVERGENCE = auto()
    RANK_DEFICIENT = auto()
    DEGENERATE_INPUT = auto()
    CONFIG_PARSE_ERROR = auto()
    CONFIG_RANGE_ERROR = auto()
    UNKNOWN_CONFIG_KEY = auto()
    UNKNOWN_COMMAND = auto()
    USAGE_ERROR = auto()
    IO_ERROR = auto()
    INVALID_STATE_TRANSITION = auto()
    VALIDATION_FAILED = auto()


_EXIT_CODES: dict[ErrorCode, int] = {
    ErrorCode.UNKNOWN_COMMAND: 1,
    ErrorCode.USAGE_ERROR: 1,
    ErrorCode.INVALID_STATE_TRANSITION: 1,
    ErrorCode.CONFIG_PARSE_ERROR: 2,
    ErrorCode.CONFIG_RANGE_ERROR: 2,
    ErrorCode.UNKNOWN_CONFIG_KEY: 2,
    ErrorCode.INVALID_PARAMETER: 2,
    ErrorCode.OUT_OF_RANGE: 2,
    ErrorCode.ORDER_LIMIT_EXCEEDED: 2,
    ErrorCode.STEP_SIZE_VIOLATION: 2,
    ErrorCode.NON_CONVERGENCE: 3,
    ErrorCode.RANK_DEFICIENT: 3,
    ErrorCode.DEGENERATE_INPUT: 3,
    ErrorCode.VALIDATION_FAILED: 3,
    ErrorCode.IO_ERROR: 4,
}


@dataclass(frozen=True)
class TpmrError:
    code: ErrorCode
    message: str
    context: dict[str, str | int | float] | None = None

    def __str__(self) -> str:
        base_msg = f"[{self.code.name}] {self.message}"
        if self.context:
            context_str = ", ".join(f"{k}={v}" for k, v in self.context.items())
            return f"{base_msg} (Context: {context_str})"
        return base_msg


def create_error(
    code: ErrorCode,
    message: str,
    **context: str | int | float
) -> TpmrError:
    return TpmrError(
        code=code,
        message=message,
        context=context if context else None
    )


def exit_code_for(code: ErrorCode) -> int:
    """CLI exit status: 1 usage, 2 config, 3 numeric, 4 I/O."""
    return _EXIT_CODES.get(code, 1)
