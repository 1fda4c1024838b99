"""Parsers, printers and lint for the two chain-program languages."""

from .expr import Expr, Ref, Not, And, Or, evaluate, parse_expr, refs, to_source
from .lint import lint_program
from .rung import Rung, RungProgram, TimerDecl, parse_rung_program, print_rung_program
from .state import (
    State,
    StateProgram,
    StateTask,
    Transition,
    parse_state_program,
    print_state_program,
)

__all__ = [
    "And",
    "Expr",
    "Not",
    "Or",
    "Ref",
    "Rung",
    "RungProgram",
    "State",
    "StateProgram",
    "StateTask",
    "TimerDecl",
    "Transition",
    "evaluate",
    "lint_program",
    "parse_expr",
    "parse_rung_program",
    "parse_state_program",
    "print_rung_program",
    "print_state_program",
    "refs",
    "to_source",
]
