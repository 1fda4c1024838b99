"""Shared hypothesis strategies for chain-program structures."""

from __future__ import annotations

from hypothesis import strategies as st

from artts.chaindsl import And, Not, Or, Ref

DEFAULT_NAMES = [f"P{i}" for i in range(6)]


def exprs(names=DEFAULT_NAMES):
    leaf = st.sampled_from(list(names)).map(Ref)
    return st.recursive(
        leaf,
        lambda children: st.one_of(
            children.map(Not),
            st.tuples(children, children).map(lambda t: And(*t)),
            st.tuples(children, children).map(lambda t: Or(*t)),
        ),
        max_leaves=12,
    )
