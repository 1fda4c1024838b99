"""Digital I/O points: names, directions, chain affinity.

Point names are the shared identifier vocabulary of the chain programs, the
station map, the test scripts and the wire protocol, so the grammar lives
here rather than in any one parser.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

POINT_NAME_RE = re.compile(r"[A-Z0-9_]{1,64}")

# Operator tokens of the expression grammar; excluded from the name space.
RESERVED_WORDS = frozenset({"AND", "OR", "NOT"})


def is_point_name(text: str) -> bool:
    """True if ``text`` is a legal point/task/state identifier."""
    return bool(POINT_NAME_RE.fullmatch(text)) and text not in RESERVED_WORDS


class Direction(Enum):
    INPUT = "Input"
    OUTPUT = "Output"


class Chain(Enum):
    A = "A"
    B = "B"
    BOTH = "Both"


@dataclass(frozen=True)
class IoPoint:
    """One digital point in a station map.

    Inputs are written only by the environment (bus, HMI, test script);
    outputs only by chain programs or the engine's combiner stage.
    """

    name: str
    direction: Direction
    chain: Chain
    initial: int = 0

    def __post_init__(self) -> None:
        if not is_point_name(self.name):
            raise ValueError(f"illegal point name {self.name!r}")
        if self.initial not in (0, 1):
            raise ValueError(f"{self.name}: initial value must be 0 or 1")

    def visible_to_chain(self, chain: Chain) -> bool:
        return self.chain is chain or self.chain is Chain.BOTH
