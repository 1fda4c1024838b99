"""The state-task language (``.state`` files, Chain A).

Line-oriented blocks::

    input NAME
    task NAME
      state NAME [initial]
        emit NAME 0|1
        when <expr> goto NAME
        timeout <ms> goto NAME

Indentation is conventional, not significant; ``task`` opens a task block,
``state`` a state block inside it.  A task's outputs are whatever its
states emit: while a state is active its emissions hold, and owned points
the active state does not mention read 0.  Transitions are tried in
declaration order and at most one fires per scan; ``timeout`` fires once
the task has sat in the state for the given simulated time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..diagnostics import SourceError, error
from ..points import is_point_name
from . import expr as ex
from .rung import _Collector, _source_lines


@dataclass(frozen=True)
class Transition:
    guard: ex.Expr | None  # None for timeout transitions
    timeout_ms: int | None
    target: str
    line: int = field(default=0, compare=False)

    @property
    def is_timeout(self) -> bool:
        return self.timeout_ms is not None


@dataclass(frozen=True)
class State:
    name: str
    initial: bool
    emissions: tuple[tuple[str, int], ...]
    transitions: tuple[Transition, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class StateTask:
    name: str
    states: tuple[State, ...]
    line: int = field(default=0, compare=False)

    @property
    def initial_state(self) -> str:
        for state in self.states:
            if state.initial:
                return state.name
        raise ValueError(f"task {self.name} has no initial state")

    def emitted_points(self) -> set[str]:
        return {point for state in self.states for point, _ in state.emissions}


@dataclass(frozen=True)
class StateProgram:
    inputs: tuple[str, ...]
    tasks: tuple[StateTask, ...]

    @property
    def declared_inputs(self) -> frozenset[str]:
        return frozenset(self.inputs)

    @property
    def emitted_points(self) -> frozenset[str]:
        return frozenset(p for task in self.tasks for p in task.emitted_points())

    def referenced_names(self) -> set[str]:
        names: set[str] = set()
        for task in self.tasks:
            for state in task.states:
                for tr in state.transitions:
                    if tr.guard is not None:
                        names.update(ex.refs(tr.guard))
        return names


class _StateBuilder:
    def __init__(self, name: str, initial: bool, line: int):
        self.name = name
        self.initial = initial
        self.line = line
        self.emissions: list[tuple[str, int]] = []
        self.transitions: list[Transition] = []

    def build(self) -> State:
        return State(self.name, self.initial, tuple(self.emissions), tuple(self.transitions), self.line)


class _TaskBuilder:
    def __init__(self, name: str, line: int):
        self.name = name
        self.line = line
        self.states: list[_StateBuilder] = []

    def build(self) -> StateTask:
        return StateTask(self.name, tuple(s.build() for s in self.states), self.line)


def parse_state_program(text: str) -> StateProgram:
    """Parse a Chain A program; raises SourceError listing every Error found."""
    diags = _Collector()
    inputs: list[str] = []
    tasks: list[_TaskBuilder] = []
    task: _TaskBuilder | None = None
    state: _StateBuilder | None = None

    for lineno, line in _source_lines(text):
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "input":
            if task is not None:
                diags.error(lineno, "input declarations must precede task blocks")
                continue
            if not is_point_name(rest):
                diags.error(lineno, f"illegal input name {rest!r}")
            elif rest in inputs:
                diags.error(lineno, f"duplicate input {rest}")
            else:
                inputs.append(rest)
        elif head == "task":
            if not is_point_name(rest):
                diags.error(lineno, f"illegal task name {rest!r}")
                continue
            task = _TaskBuilder(rest, lineno)
            tasks.append(task)
            state = None
        elif head == "state":
            if task is None:
                diags.error(lineno, "state outside a task block")
                continue
            parts = rest.split()
            if not parts or not is_point_name(parts[0]):
                diags.error(lineno, f"illegal state name {rest!r}")
                continue
            initial = False
            if len(parts) == 2 and parts[1] == "initial":
                initial = True
            elif len(parts) > 1:
                diags.error(lineno, f"unexpected text after state name: {' '.join(parts[1:])!r}")
                continue
            state = _StateBuilder(parts[0], initial, lineno)
            task.states.append(state)
        elif head == "emit":
            if state is None:
                diags.error(lineno, "emit outside a state block")
                continue
            parts = rest.split()
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                diags.error(lineno, "expected: emit NAME 0|1")
                continue
            if not is_point_name(parts[0]):
                diags.error(lineno, f"illegal point name {parts[0]!r}")
                continue
            state.emissions.append((parts[0], int(parts[1])))
        elif head == "when":
            if state is None:
                diags.error(lineno, "when outside a state block")
                continue
            tr = _parse_when(rest, lineno, diags)
            if tr is not None:
                state.transitions.append(tr)
        elif head == "timeout":
            if state is None:
                diags.error(lineno, "timeout outside a state block")
                continue
            tr = _parse_timeout(rest, lineno, diags)
            if tr is not None:
                state.transitions.append(tr)
        else:
            diags.error(lineno, f"unknown declaration {head!r}")

    _validate(inputs, tasks, diags)
    diags.raise_if_errors()
    return StateProgram(tuple(inputs), tuple(t.build() for t in tasks))


def _split_goto(rest: str, lineno: int, diags: _Collector) -> tuple[str, str] | None:
    before, sep, target = rest.rpartition(" goto ")
    if not sep:
        diags.error(lineno, "expected 'goto STATE'")
        return None
    return before.strip(), target.strip()


def _parse_when(rest: str, lineno: int, diags: _Collector) -> Transition | None:
    split = _split_goto(rest, lineno, diags)
    if split is None:
        return None
    guard_text, target = split
    if not is_point_name(target):
        diags.error(lineno, f"illegal goto target {target!r}")
        return None
    if not guard_text:
        diags.error(lineno, "expected guard expression")
        return None
    try:
        guard = ex.parse_expr(guard_text)
    except ex.ExprSyntaxError as err:
        diags.error(lineno, str(err))
        return None
    return Transition(guard, None, target, lineno)


def _parse_timeout(rest: str, lineno: int, diags: _Collector) -> Transition | None:
    split = _split_goto(rest, lineno, diags)
    if split is None:
        return None
    ms_text, target = split
    if not is_point_name(target):
        diags.error(lineno, f"illegal goto target {target!r}")
        return None
    try:
        ms = int(ms_text)
    except ValueError:
        diags.error(lineno, f"timeout {ms_text!r} is not an integer")
        return None
    if ms <= 0:
        diags.error(lineno, "timeout must be positive")
        return None
    return Transition(None, ms, target, lineno)


def _validate(inputs: list[str], tasks: list[_TaskBuilder], diags: _Collector) -> None:
    input_set = set(inputs)
    task_names: dict[str, int] = {}
    emitters: dict[str, str] = {}

    for task in tasks:
        if task.name in task_names:
            diags.error(task.line, f"duplicate task {task.name}")
        task_names.setdefault(task.name, task.line)

        if not task.states:
            diags.error(task.line, f"task {task.name} has no states")
            continue
        state_names: dict[str, int] = {}
        initials = [s for s in task.states if s.initial]
        if not initials:
            diags.error(task.line, f"task {task.name} has no initial state")
        elif len(initials) > 1:
            diags.error(initials[1].line, f"task {task.name} has more than one initial state")

        for state in task.states:
            if state.name in state_names:
                diags.error(state.line, f"duplicate state {state.name} in task {task.name}")
            state_names.setdefault(state.name, state.line)

        for state in task.states:
            seen_points: set[str] = set()
            for point, _ in state.emissions:
                if point in seen_points:
                    diags.error(state.line, f"state {state.name} emits {point} twice")
                seen_points.add(point)
                owner = emitters.get(point)
                if owner is not None and owner != task.name:
                    diags.error(state.line, f"point {point} emitted by multiple tasks ({owner} and {task.name})")
                emitters.setdefault(point, task.name)
            for tr in state.transitions:
                if tr.target not in {s.name for s in task.states}:
                    diags.error(tr.line, f"unknown state {tr.target}")
                if tr.guard is not None:
                    for name in ex.refs(tr.guard):
                        if name not in input_set:
                            diags.error(tr.line, f"guard references undeclared input {name}")


def print_state_program(program: StateProgram) -> str:
    """Canonical text form; reparsing yields a structurally identical program."""
    lines = [f"input {name}" for name in program.inputs]
    for task in program.tasks:
        lines.append(f"task {task.name}")
        for state in task.states:
            suffix = " initial" if state.initial else ""
            lines.append(f"  state {state.name}{suffix}")
            for point, value in state.emissions:
                lines.append(f"    emit {point} {value}")
            for tr in state.transitions:
                if tr.is_timeout:
                    lines.append(f"    timeout {tr.timeout_ms} goto {tr.target}")
                else:
                    lines.append(f"    when {ex.to_source(tr.guard)} goto {tr.target}")
    return "\n".join(lines) + ("\n" if lines else "")
