"""Boolean expression trees shared by both chain-program languages.

Grammar (lowest to highest precedence)::

    expr    := or
    or      := and ("OR" and)*
    and     := unary ("AND" unary)*
    unary   := "NOT" unary | atom
    atom    := NAME | "(" expr ")"

OR and AND associate left.  ``evaluate`` is a plain recursive tree walk and
is deliberately kept independent of the compiled evaluation path the scan
engine uses, so the two can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

from ..points import RESERVED_WORDS, is_point_name

Expr = Union["Ref", "Not", "And", "Or"]


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Not:
    operand: Expr


@dataclass(frozen=True)
class And:
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Or:
    lhs: Expr
    rhs: Expr


class ExprSyntaxError(Exception):
    """Expression-level syntax error; the line parsers convert it to a Diagnostic."""


def tokenize(text: str) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == ":" and text[i : i + 2] == ":=":
            tokens.append(":=")
            i += 2
        else:
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_" or text[j] == "-"):
                j += 1
            if j == i:
                raise ExprSyntaxError(f"unexpected character {ch!r}")
            tokens.append(text[i:j])
            i = j
    return tokens


class _Cursor:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok


def parse_expr_tokens(cur: _Cursor) -> Expr:
    expr = _parse_or(cur)
    return expr


def parse_expr(text: str) -> Expr:
    """Parse a complete expression; trailing tokens are an error."""
    cur = _Cursor(tokenize(text))
    if cur.peek() is None:
        raise ExprSyntaxError("expected expression")
    expr = _parse_or(cur)
    if cur.peek() is not None:
        raise ExprSyntaxError(f"unexpected token {cur.peek()!r} after expression")
    return expr


def _parse_or(cur: _Cursor) -> Expr:
    expr = _parse_and(cur)
    while cur.peek() == "OR":
        cur.take()
        expr = Or(expr, _parse_and(cur))
    return expr


def _parse_and(cur: _Cursor) -> Expr:
    expr = _parse_unary(cur)
    while cur.peek() == "AND":
        cur.take()
        expr = And(expr, _parse_unary(cur))
    return expr


def _parse_unary(cur: _Cursor) -> Expr:
    tok = cur.peek()
    if tok == "NOT":
        cur.take()
        return Not(_parse_unary(cur))
    return _parse_atom(cur)


def _parse_atom(cur: _Cursor) -> Expr:
    tok = cur.take()
    if tok is None:
        raise ExprSyntaxError("expected expression")
    if tok == "(":
        expr = _parse_or(cur)
        closing = cur.take()
        if closing != ")":
            raise ExprSyntaxError("missing closing parenthesis")
        return expr
    if tok in RESERVED_WORDS or tok in (")", ":="):
        raise ExprSyntaxError(f"unexpected token {tok!r}")
    if not is_point_name(tok):
        raise ExprSyntaxError(f"illegal name {tok!r}")
    return Ref(tok)


def refs(expr: Expr) -> Iterator[str]:
    """All names referenced, in left-to-right order (with repeats)."""
    if isinstance(expr, Ref):
        yield expr.name
    elif isinstance(expr, Not):
        yield from refs(expr.operand)
    else:
        yield from refs(expr.lhs)
        yield from refs(expr.rhs)


def evaluate(expr: Expr, env: Mapping[str, int]) -> int:
    """Reference evaluation by direct tree walk."""
    if isinstance(expr, Ref):
        return 1 if env[expr.name] else 0
    if isinstance(expr, Not):
        return 1 - evaluate(expr.operand, env)
    if isinstance(expr, And):
        return evaluate(expr.lhs, env) & evaluate(expr.rhs, env)
    return evaluate(expr.lhs, env) | evaluate(expr.rhs, env)


def to_source(expr: Expr) -> str:
    """Render with the minimal parentheses the grammar needs to round-trip."""
    return _render(expr, parent=None)


def _render(expr: Expr, parent: str | None) -> str:
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Not):
        inner = _render(expr.operand, "NOT")
        if isinstance(expr.operand, (And, Or)):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(expr, And):
        lhs = _render(expr.lhs, "AND")
        rhs = _render(expr.rhs, "AND")
        if isinstance(expr.lhs, Or):
            lhs = f"({lhs})"
        # AND is left-associative: a right-hand AND/OR needs parens to survive.
        if isinstance(expr.rhs, (And, Or)):
            rhs = f"({rhs})"
        text = f"{lhs} AND {rhs}"
    else:
        lhs = _render(expr.lhs, "OR")
        rhs = _render(expr.rhs, "OR")
        if isinstance(expr.rhs, Or):
            rhs = f"({rhs})"
        text = f"{lhs} OR {rhs}"
    return text


def compile_source(expr: Expr, resolve: Callable[[str], str]) -> str:
    """Emit a fully parenthesised Python expression over 0/1 ints.

    ``resolve`` maps a referenced name to the code that loads its value.
    Used by the engine to build its per-program scan kernels.
    """
    if isinstance(expr, Ref):
        return f"({resolve(expr.name)})"
    if isinstance(expr, Not):
        return f"(1 - {compile_source(expr.operand, resolve)})"
    if isinstance(expr, And):
        return f"({compile_source(expr.lhs, resolve)} & {compile_source(expr.rhs, resolve)})"
    return f"({compile_source(expr.lhs, resolve)} | {compile_source(expr.rhs, resolve)})"
