"""Exhaustive reachability oracle for a loaded station.

Breadth-first exploration of the product state space (task states x live
coil values x fault codes) under a bounded per-scan input alphabet.  Each
edge writes a complete input vector and executes one real engine scan, so
everything the explorer certifies is certified about the actual engine.

Timers are abstracted: accumulators quotient to {idle, running, expired}
and dedicated expiry events force a pending window to its preset before
stepping, standing in for the thousands of scans real expiry would take.
The abstraction assumes an enabling configuration can persist, which holds
for programs whose timer enables are stable under held inputs.

Every committed scan is checked against a safety predicate: a permit
asserted without both door contacts closed, a secured chain state on both
chains and clear fault registers is reported as a violation, per combined
permit and per chain permit (the per-chain checks catch single-chain logic
defects the two-chain vote would mask).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from .engine import Engine, load
from .station import StationModel


@dataclass(frozen=True)
class SafetySpec:
    """Names the points and states the safety predicate quantifies over."""

    doors: tuple[str, str] = ("DOOR_CLOSED_1", "DOOR_CLOSED_2")
    combined_permit: str = "SHUTTER_PERMIT"
    chain_a_permit: str = "SHUTTER_PERMIT_A"
    chain_b_permit: str = "SHUTTER_PERMIT_B"
    secured_task: str = "ACCESS"
    secured_states: frozenset[str] = frozenset({"SECURED", "BEAM_ON"})
    secured_coil: str = "SECURED"


@dataclass(frozen=True)
class TraceStep:
    inputs: tuple[tuple[str, int], ...]
    expired: tuple[str, ...]


@dataclass(frozen=True)
class Violation:
    permit: str
    scan_line: str
    trace: tuple[TraceStep, ...]


@dataclass
class ReachabilityReport:
    complete: bool
    state_cap: int
    abstract_states: int
    projected_states: int
    edges: int
    violations: list[Violation]
    total_violations: int
    reached_task_states: dict[str, frozenset[str]]

    def summary(self) -> str:
        status = "complete" if self.complete else "INCOMPLETE (state cap exceeded)"
        return (
            f"exploration {status}: {self.projected_states} product states "
            f"({self.abstract_states} abstract), {self.edges} edges, "
            f"{self.total_violations} safety violations"
        )


def all_input_vectors(engine: Engine) -> list[tuple[int, ...]]:
    n = len(engine.input_names)
    return [tuple(bits) for bits in itertools.product((0, 1), repeat=n)]


class _Explorer:
    def __init__(self, engine: Engine, safety: SafetySpec | None, max_violations: int):
        self.engine = engine
        self.safety = safety
        self.max_violations = max_violations
        e = engine
        # live coils: the ones some expression reads; the rest are outputs
        # whose next-scan values do not depend on their own previous values.
        referenced = e.program_b.referenced_names()
        self.live_coils = [i for i, n in enumerate(e._b_coil_names) if n in referenced]
        self.input_idx = [e._index[n] for n in e.input_names]
        # per (task, state): distinct timeout presets, for expiry events
        self.state_timeouts: list[list[list[int]]] = []
        for task in e.program_a.tasks:
            rows = []
            for state in task.states:
                rows.append(sorted({t.timeout_ms for t in state.transitions if t.is_timeout}))
            self.state_timeouts.append(rows)
        if safety is not None:
            idx = e._index
            self.s_doors = (idx[safety.doors[0]], idx[safety.doors[1]])
            self.s_cp = idx.get(safety.combined_permit)
            self.s_ap = idx.get(safety.chain_a_permit)
            self.s_bp = idx.get(safety.chain_b_permit)
            self.s_task = e.task_names.index(safety.secured_task)
            names = e._a_state_names[self.s_task]
            self.s_secured_states = {i for i, n in enumerate(names) if n in safety.secured_states}
            self.s_secured_coil = (
                e._b_coil_names.index(safety.secured_coil)
                if safety.secured_coil in e._b_coil_names
                else None
            )

    def canon_key(self) -> tuple:
        e = self.engine
        coils = e._b_coils
        phases = tuple(
            2 if done else (1 if acc > 0 else 0)
            for acc, done in zip(e._b_accs, e._b_done)
        )
        window = e.discrepancy_window_scans
        disc = tuple(
            0 if c == 0 else (2 if c > window else 1) for c in e._disc_counters
        )
        return (
            tuple(e._a_state),
            tuple(coils[i] for i in self.live_coils),
            phases,
            e._fa,
            e._fb,
            disc,
        )

    def projection(self) -> tuple:
        e = self.engine
        return (tuple(e._a_state), tuple(e._b_coils), e._fa, e._fb)

    def expiry_events(self) -> list[tuple]:
        """Eligible expiry targets in the engine's current state.

        Each event is ("timer", index), ("timeout", task, preset) or
        ("disc", pair): windows whose natural expiry would take thousands
        of scans are forced one step short of their preset instead.
        """
        e = self.engine
        events = []
        for i, acc in enumerate(e._b_accs):
            if acc > 0 and not e._b_done[i]:
                events.append(("timer", i))
        for ti, si in enumerate(e._a_state):
            for preset in self.state_timeouts[ti][si]:
                events.append(("timeout", ti, preset))
        window = e.discrepancy_window_scans
        for pi, count in enumerate(e._disc_counters):
            if 0 < count <= window:
                events.append(("disc", pi))
        return events

    def expire_sets(self) -> list[tuple]:
        events = self.expiry_events()
        if not events:
            return [()]
        if len(events) <= 3:
            sets: list[tuple] = []
            for r in range(len(events) + 1):
                sets.extend(itertools.combinations(events, r))
            return sets
        singles = [(ev,) for ev in events]
        return [(), *singles, tuple(events)]

    def apply_expiry(self, events: tuple) -> None:
        e = self.engine
        period = e.scan_period_ms
        now_next = e.time_ms + period
        for ev in events:
            kind = ev[0]
            if kind == "timer":
                # one advance short of the preset: expiry happens through the
                # normal advance path under the edge's own input vector
                e._b_accs[ev[1]] = e._b_presets[ev[1]] - period
            elif kind == "timeout":
                _, ti, preset = ev
                e._a_entry[ti] = now_next - preset
            else:
                e._disc_counters[ev[1]] = e.discrepancy_window_scans

    def check_safety(self, prev_b_secured: int) -> list[str]:
        """Safety predicate over one committed scan.

        The B-side permit rung reads the previous scan's coil image, so a
        permit asserted on the scan its own secured latch dropped is not a
        defect as long as the doors are still proven closed; the B checks
        therefore accept the previous scan's secured latch.
        """
        if self.safety is None:
            return []
        e = self.engine
        v = e._values
        doors_ok = v[self.s_doors[0]] == 1 and v[self.s_doors[1]] == 1
        a_secured = e._a_state[self.s_task] in self.s_secured_states
        b_secured = self.s_secured_coil is None or prev_b_secured == 1
        fault_a_ok = e._fa == 0
        fault_b_ok = e._fb == 0
        bad = []
        if self.s_cp is not None and v[self.s_cp] == 1:
            if not (doors_ok and a_secured and b_secured and fault_a_ok and fault_b_ok):
                bad.append(self.engine._points[self.s_cp].name)
        if self.s_ap is not None and v[self.s_ap] == 1:
            if not (doors_ok and a_secured and fault_a_ok):
                bad.append(self.engine._points[self.s_ap].name)
        if self.s_bp is not None and v[self.s_bp] == 1:
            if not (doors_ok and b_secured and fault_b_ok):
                bad.append(self.engine._points[self.s_bp].name)
        return bad


def explore_reachable(
    station: StationModel,
    input_alphabet: list[tuple[int, ...]] | None = None,
    *,
    state_cap: int = 10**6,
    safety: SafetySpec | None = None,
    max_violations: int = 20,
) -> ReachabilityReport:
    """BFS over the station's product state space under the input alphabet.

    ``input_alphabet`` is a list of per-scan input vectors in station input
    declaration order; by default every combination.  ``safety=None`` uses
    the reference predicate when the station declares the reference permit
    points, otherwise safety checking is skipped.
    """
    engine = load(station)
    if input_alphabet is None:
        input_alphabet = all_input_vectors(engine)
    if safety is None and "SHUTTER_PERMIT" in engine._index and "ACCESS" in engine.task_names:
        safety = SafetySpec()

    ex = _Explorer(engine, safety, max_violations)
    input_idx = ex.input_idx
    input_names = engine.input_names

    key0 = ex.canon_key()
    snapshots: dict[tuple, tuple] = {key0: engine.snapshot_state()}
    parents: dict[tuple, tuple | None] = {key0: None}
    frontier: deque[tuple] = deque([key0])
    projected: set[tuple] = {ex.projection()}
    violations: list[Violation] = []
    total_violations = 0
    edges = 0
    complete = True

    def trace_to(key: tuple, last_symbol: tuple | None) -> tuple[TraceStep, ...]:
        steps: list[TraceStep] = []
        if last_symbol is not None:
            steps.append(_symbol_step(last_symbol, input_names, engine))
        cursor = key
        while parents[cursor] is not None:
            parent_key, symbol = parents[cursor]
            steps.append(_symbol_step(symbol, input_names, engine))
            cursor = parent_key
        steps.reverse()
        return tuple(steps)

    while frontier:
        key = frontier.popleft()
        snap = snapshots[key]
        engine.restore_state(snap)
        secured_idx = ex.s_secured_coil if safety is not None else None
        prev_b_secured = (
            engine._b_coils[secured_idx] if secured_idx is not None else 0
        )
        for expire in ex.expire_sets():
            for vector in input_alphabet:
                engine.restore_state(snap)
                if expire:
                    ex.apply_expiry(expire)
                pending = engine._pending
                for idx, value in zip(input_idx, vector):
                    pending[idx] = value
                engine._step_core()
                edges += 1
                projected.add(ex.projection())

                bad = ex.check_safety(prev_b_secured)
                if bad:
                    total_violations += len(bad)
                    if len(violations) < max_violations:
                        line = _scan_line(engine)
                        trace = trace_to(key, (expire, vector))
                        for permit in bad:
                            if len(violations) < max_violations:
                                violations.append(Violation(permit, line, trace))

                k2 = ex.canon_key()
                if k2 not in snapshots:
                    if len(snapshots) >= state_cap:
                        complete = False
                        continue
                    snapshots[k2] = engine.snapshot_state()
                    parents[k2] = (key, (expire, vector))
                    frontier.append(k2)

    reached: dict[str, set[str]] = {name: set() for name in engine.task_names}
    for key in snapshots:
        for ti, si in enumerate(key[0]):
            reached[engine.task_names[ti]].add(engine._a_state_names[ti][si])

    return ReachabilityReport(
        complete=complete,
        state_cap=state_cap,
        abstract_states=len(snapshots),
        projected_states=len(projected),
        edges=edges,
        violations=violations,
        total_violations=total_violations,
        reached_task_states={k: frozenset(v) for k, v in reached.items()},
    )


def _symbol_step(symbol: tuple, input_names: list[str], engine: Engine) -> TraceStep:
    expire, vector = symbol
    expired = []
    for ev in expire:
        if ev[0] == "timer":
            expired.append(engine.program_b.timers[ev[1]].name)
        elif ev[0] == "timeout":
            expired.append(f"{engine.task_names[ev[1]]} timeout {ev[2]}ms")
        else:
            a, b = engine.station.redundant_pairs[ev[1]]
            expired.append(f"discrepancy window {a}/{b}")
    return TraceStep(tuple(zip(input_names, vector)), tuple(expired))


def _scan_line(engine: Engine) -> str:
    from .engine import canonical_line

    return canonical_line(engine._record(), engine.input_names, engine.output_names)
