"""The relay-ladder rung language (``.rung`` files, Chain B).

Line-oriented: every non-blank line is one declaration, ``#`` starts a
comment.  Three declaration forms::

    input NAME
    timer NAME preset <ms> enable <expr>
    rung NAME := <expr>

A rung both declares its coil and gives the expression evaluated for it
every scan.  Expressions may reference inputs, any coil (including the
rung's own, which reads the previous scan's value and gives the classic
seal-in latch), and timer names (a timer name reads its done flag).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..diagnostics import Diagnostic, SourceError, error
from ..points import is_point_name
from . import expr as ex


# line numbers are diagnostic metadata, not program structure: keep them out
# of equality so parse/print round trips compare equal.


@dataclass(frozen=True)
class Rung:
    coil: str
    expr: ex.Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class TimerDecl:
    name: str
    preset_ms: int
    enable: ex.Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RungProgram:
    inputs: tuple[str, ...]
    timers: tuple[TimerDecl, ...]
    rungs: tuple[Rung, ...]

    @property
    def declared_inputs(self) -> frozenset[str]:
        return frozenset(self.inputs)

    @property
    def declared_coils(self) -> frozenset[str]:
        return frozenset(r.coil for r in self.rungs)

    @property
    def timer_names(self) -> frozenset[str]:
        return frozenset(t.name for t in self.timers)

    def referenced_names(self) -> set[str]:
        names: set[str] = set()
        for rung in self.rungs:
            names.update(ex.refs(rung.expr))
        for timer in self.timers:
            names.update(ex.refs(timer.enable))
        return names


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


def _source_lines(text: str) -> list[tuple[int, str]]:
    lines = text.replace("\r\n", "\n").split("\n")
    return [(i + 1, _strip_comment(raw).strip()) for i, raw in enumerate(lines)]


@dataclass
class _Collector:
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def error(self, line: int, message: str) -> None:
        self.diagnostics.append(error(line, message))

    def raise_if_errors(self) -> None:
        if self.diagnostics:
            raise SourceError(self.diagnostics)


def parse_rung_program(text: str) -> RungProgram:
    """Parse a Chain B program; raises SourceError listing every Error found."""
    diags = _Collector()
    inputs: list[str] = []
    timers: list[TimerDecl] = []
    rungs: list[Rung] = []

    for lineno, line in _source_lines(text):
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "input":
            name = _parse_name(rest, lineno, diags, "input")
            if name is not None:
                if name in inputs:
                    diags.error(lineno, f"duplicate input {name}")
                else:
                    inputs.append(name)
        elif head == "timer":
            decl = _parse_timer(rest, lineno, diags)
            if decl is not None:
                timers.append(decl)
        elif head == "rung":
            rung = _parse_rung(rest, lineno, diags)
            if rung is not None:
                rungs.append(rung)
        else:
            diags.error(lineno, f"unknown declaration {head!r}")

    _validate(inputs, timers, rungs, diags)
    diags.raise_if_errors()
    return RungProgram(tuple(inputs), tuple(timers), tuple(rungs))


def _parse_name(text: str, lineno: int, diags: _Collector, what: str) -> str | None:
    if not text:
        diags.error(lineno, f"expected {what} name")
        return None
    if not is_point_name(text):
        diags.error(lineno, f"illegal {what} name {text!r}")
        return None
    return text


def _parse_timer(rest: str, lineno: int, diags: _Collector) -> TimerDecl | None:
    parts = rest.split(None, 4)
    if len(parts) < 5 or parts[1] != "preset" or parts[3] != "enable":
        diags.error(lineno, "expected: timer NAME preset <ms> enable <expr>")
        return None
    name, _, preset_text, _, enable_text = parts
    if not is_point_name(name):
        diags.error(lineno, f"illegal timer name {name!r}")
        return None
    try:
        preset = int(preset_text)
    except ValueError:
        diags.error(lineno, f"timer preset {preset_text!r} is not an integer")
        return None
    if preset <= 0:
        diags.error(lineno, "timer preset must be positive")
        return None
    enable = _parse_expression(enable_text, lineno, diags)
    if enable is None:
        return None
    return TimerDecl(name, preset, enable, lineno)


def _parse_rung(rest: str, lineno: int, diags: _Collector) -> Rung | None:
    target, sep, expr_text = rest.partition(":=")
    if not sep:
        diags.error(lineno, "expected: rung NAME := <expr>")
        return None
    name = _parse_name(target.strip(), lineno, diags, "coil")
    expr = _parse_expression(expr_text.strip(), lineno, diags)
    if name is None or expr is None:
        return None
    return Rung(name, expr, lineno)


def _parse_expression(text: str, lineno: int, diags: _Collector) -> ex.Expr | None:
    if not text:
        diags.error(lineno, "expected expression")
        return None
    try:
        return ex.parse_expr(text)
    except ex.ExprSyntaxError as err:
        diags.error(lineno, str(err))
        return None


def _validate(
    inputs: list[str],
    timers: list[TimerDecl],
    rungs: list[Rung],
    diags: _Collector,
) -> None:
    input_set = set(inputs)
    coil_lines: dict[str, int] = {}
    for rung in rungs:
        if rung.coil in coil_lines:
            diags.error(rung.line, f"duplicate coil {rung.coil} (first rung at line {coil_lines[rung.coil]})")
        else:
            coil_lines[rung.coil] = rung.line
        if rung.coil in input_set:
            diags.error(rung.line, f"coil {rung.coil} collides with a declared input")

    timer_names: dict[str, int] = {}
    for timer in timers:
        if timer.name in timer_names:
            diags.error(timer.line, f"duplicate timer {timer.name}")
        else:
            timer_names[timer.name] = timer.line
        if timer.name in input_set or timer.name in coil_lines:
            diags.error(timer.line, f"timer {timer.name} collides with another declaration")

    known = input_set | set(coil_lines) | set(timer_names)
    for rung in rungs:
        for name in ex.refs(rung.expr):
            if name not in known:
                diags.error(rung.line, f"reference to undeclared point {name}")
    for timer in timers:
        for name in ex.refs(timer.enable):
            if name not in known:
                diags.error(timer.line, f"reference to undeclared point {name}")


def print_rung_program(program: RungProgram) -> str:
    """Canonical text form; reparsing yields a structurally identical program."""
    lines = [f"input {name}" for name in program.inputs]
    lines += [
        f"timer {t.name} preset {t.preset_ms} enable {ex.to_source(t.enable)}"
        for t in program.timers
    ]
    lines += [f"rung {r.coil} := {ex.to_source(r.expr)}" for r in program.rungs]
    return "\n".join(lines) + ("\n" if lines else "")
