"""Run lifecycle: IDLE -> CONFIGURED -> COMPUTING <-> WRITING, then COMPUTING -> DONE.

ERROR is never a table transition; `force_error_state` enters it from any
state and nothing leaves it.
"""

from typing import Callable

from .types import RunState, Result
from .errors import TpmrError, ErrorCode, create_error


StateTransitionGuard = Callable[[RunState, RunState], Result[bool, TpmrError]]

RUN_TRANSITIONS: frozenset[tuple[RunState, RunState]] = frozenset({
    (RunState.IDLE, RunState.CONFIGURED),
    (RunState.CONFIGURED, RunState.COMPUTING),
    (RunState.COMPUTING, RunState.WRITING),
    (RunState.WRITING, RunState.COMPUTING),
    (RunState.COMPUTING, RunState.DONE),
})


class RunFSM:
    def __init__(self, initial_state: RunState = RunState.IDLE) -> None:
        self._current_state = initial_state
        self._guards: list[StateTransitionGuard] = []

    def add_guard(self, guard: StateTransitionGuard) -> None:
        self._guards.append(guard)

    def get_current_state(self) -> RunState:
        return self._current_state

    def can_transition(self, to_state: RunState) -> bool:
        return (self._current_state, to_state) in RUN_TRANSITIONS

    def transition(self, to_state: RunState) -> Result[RunState, TpmrError]:
        if not self.can_transition(to_state):
            return Result.err(create_error(
                ErrorCode.INVALID_STATE_TRANSITION,
                f"Cannot transition from {self._current_state.name} to {to_state.name}",
                from_state=self._current_state.name,
                to_state=to_state.name
            ))

        for guard in self._guards:
            verdict = guard(self._current_state, to_state)
            if verdict.is_err():
                return Result.err(verdict.unwrap_err())

        self._current_state = to_state
        return Result.ok(to_state)

    def force_error_state(self) -> None:
        self._current_state = RunState.ERROR
