"""Static checks that never fail a program, only flag suspicious structure."""

from __future__ import annotations

from collections import deque
from typing import Iterable

from ..diagnostics import Diagnostic, warning
from ..points import Chain, Direction, IoPoint
from .rung import RungProgram
from .state import StateProgram


def lint_program(
    program: RungProgram | StateProgram,
    points: Iterable[IoPoint],
) -> list[Diagnostic]:
    """Warnings for dead structure: unused map points, unreachable states,
    coils nothing reads.

    ``points`` is the slice of the station map the program is responsible
    for; callers filter out engine-driven points (combined outputs, fault
    indicators) before linting.
    """
    if isinstance(program, RungProgram):
        return _lint_rung(program, list(points))
    return _lint_state(program, list(points))


def _lint_rung(program: RungProgram, points: list[IoPoint]) -> list[Diagnostic]:
    warnings: list[Diagnostic] = []
    referenced = program.referenced_names()
    written = program.declared_coils
    for point in points:
        if not point.visible_to_chain(Chain.B):
            continue
        if point.direction is Direction.INPUT and point.name not in referenced:
            warnings.append(warning(1, f"input {point.name} is never read by the program"))
        if point.direction is Direction.OUTPUT and point.name not in written:
            warnings.append(warning(1, f"output {point.name} is never written by the program"))

    output_names = {p.name for p in points if p.direction is Direction.OUTPUT}
    for rung in program.rungs:
        if rung.coil not in referenced and rung.coil not in output_names:
            warnings.append(
                warning(rung.line, f"coil {rung.coil} is never referenced by any expression or output mapping")
            )
    return warnings


def _lint_state(program: StateProgram, points: list[IoPoint]) -> list[Diagnostic]:
    warnings: list[Diagnostic] = []
    referenced = program.referenced_names()
    emitted = program.emitted_points
    for point in points:
        if not point.visible_to_chain(Chain.A):
            continue
        if point.direction is Direction.INPUT and point.name not in referenced:
            warnings.append(warning(1, f"input {point.name} is never read by the program"))
        if point.direction is Direction.OUTPUT and point.name not in emitted:
            warnings.append(warning(1, f"output {point.name} is never written by the program"))

    for task in program.tasks:
        reachable = _reachable_states(task.initial_state, task)
        for state in task.states:
            if state.name not in reachable:
                warnings.append(
                    warning(state.line, f"unreachable state {state.name} in task {task.name}")
                )
    return warnings


def _reachable_states(initial: str, task) -> set[str]:
    edges: dict[str, list[str]] = {s.name: [t.target for t in s.transitions] for s in task.states}
    seen = {initial}
    queue = deque([initial])
    while queue:
        for target in edges.get(queue.popleft(), ()):
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return seen
