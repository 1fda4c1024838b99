"""Deterministic dual-chain scan-cycle interpreter.

One scan executes a fixed phase order:

1. latch pending environment writes into the input image
2. Chain B: advance timers, evaluate every rung against the previous
   scan's coil values, commit the new coil values
3. Chain A: for each task try the active state's transitions in order,
   fire at most one, apply the (new) state's emissions
4. discrepancy check over the declared redundant input pairs
5. combiner: each chain-Both output = A source AND B source AND both
   fault registers clear; fault LEDs track the registers
6. advance the simulated clock by one scan period

The whole scan (phases 2-5) is compiled at load time into one generated
Python function with the station's indexes and presets baked in: the
exhaustive reachability oracle executes millions of real scans, so the
per-scan cost matters.  All time is simulated; nothing here reads a wall
clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .chaindsl import expr as ex
from .chaindsl.rung import RungProgram, parse_rung_program
from .chaindsl.state import StateProgram, parse_state_program
from .diagnostics import SourceError
from .points import Chain, Direction
from .station import StationModel


class FaultCode(Enum):
    NO_FAULT = "NoFault"
    DISCREPANCY = "DISCREPANCY"
    WATCHDOG = "WATCHDOG"
    ESTOP_LATCH = "ESTOP_LATCH"
    SEARCH_TIMEOUT = "SEARCH_TIMEOUT"
    PROGRAM_HALT = "PROGRAM_HALT"


# scan kernels juggle fault codes as small ints; order matches the enum
FAULT_CODES: tuple[FaultCode, ...] = tuple(FaultCode)
_FAULT_INDEX = {code: i for i, code in enumerate(FAULT_CODES)}
_NO_FAULT = 0
_DISCREPANCY = _FAULT_INDEX[FaultCode.DISCREPANCY]
_PROGRAM_HALT = _FAULT_INDEX[FaultCode.PROGRAM_HALT]


class EngineError(Exception):
    pass


class LoadError(EngineError):
    pass


class UnknownPointError(EngineError):
    pass


class NotAnInputError(EngineError):
    pass


class BadValueError(EngineError):
    pass


@dataclass(frozen=True)
class FaultRegister:
    chain: Chain
    code: FaultCode
    latched_at_ms: int | None

    def __post_init__(self) -> None:
        if (self.code is FaultCode.NO_FAULT) != (self.latched_at_ms is None):
            raise ValueError("latched_at_ms present iff a fault is latched")


@dataclass(frozen=True)
class ScanRecord:
    """Audit entry for one scan: committed images and chain status."""

    seq: int
    time_ms: int
    inputs: dict[str, int]
    outputs: dict[str, int]
    fault_a: FaultCode
    fault_b: FaultCode
    active_states: dict[str, str]


def _values_hex(values: Iterable[int]) -> str:
    mask = 0
    count = 0
    for i, v in enumerate(values):
        mask |= v << i
        count += 1
    width = max(1, (count + 3) // 4)
    return format(mask, f"0{width}x")


def canonical_line(record: ScanRecord, input_names: list[str], output_names: list[str]) -> str:
    """Tab-separated canonical form; bit order is point-map declaration order."""
    fields = [
        str(record.seq),
        str(record.time_ms),
        _values_hex(record.inputs[n] for n in input_names),
        _values_hex(record.outputs[n] for n in output_names),
        record.fault_a.value,
        record.fault_b.value,
    ]
    fields.extend(f"{task}={state}" for task, state in record.active_states.items())
    return "\t".join(fields)


def canonical_trace(records: Iterable[ScanRecord], engine: "Engine") -> str:
    lines = [canonical_line(r, engine.input_names, engine.output_names) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


class Engine:
    """A loaded station: single-owner mutable state machine.

    All mutation must be serialized by the caller; independent engines are
    fully isolated from each other.
    """

    def __init__(self, station: StationModel, rng_seed: int = 0):
        self.station = station
        self.rng_seed = rng_seed
        self.scan_period_ms = station.scan_period_ms
        self.discrepancy_window_scans = station.discrepancy_window_scans

        try:
            self.program_a: StateProgram = parse_state_program(station.chain_a_source)
            self.program_b: RungProgram = parse_rung_program(station.chain_b_source)
        except SourceError as err:
            raise LoadError(f"chain program does not parse: {err}") from err

        self._build_point_tables()
        self._validate_programs()
        self._compile_kernel()
        self.reset()

    # -- construction ------------------------------------------------------

    def _build_point_tables(self) -> None:
        self._points = list(self.station.points)
        self._index = {p.name: i for i, p in enumerate(self._points)}
        self.input_names = [p.name for p in self._points if p.direction is Direction.INPUT]
        self.output_names = [p.name for p in self._points if p.direction is Direction.OUTPUT]
        self._initials = [p.initial if p.direction is Direction.INPUT else 0 for p in self._points]
        self._pairs = [(self._index[a], self._index[b]) for a, b in self.station.redundant_pairs]

        prog = self.program_b
        self._b_coil_names = [r.coil for r in prog.rungs]
        self._b_presets = [t.preset_ms for t in prog.timers]
        self.task_names = [t.name for t in self.program_a.tasks]
        self._a_state_names = [[s.name for s in t.states] for t in self.program_a.tasks]
        self._a_initial = [
            [s.name for s in t.states].index(t.initial_state) for t in self.program_a.tasks
        ]

    def _validate_programs(self) -> None:
        pmap = self.station.point_map()
        driven = self.station.engine_driven()
        period = self.scan_period_ms

        def check_inputs(declared: Iterable[str], chain: Chain) -> None:
            for name in declared:
                p = pmap.get(name)
                if p is None or p.direction is not Direction.INPUT:
                    raise LoadError(f"program input {name} is not a station input")
                if not p.visible_to_chain(chain):
                    raise LoadError(f"input {name} is not visible to chain {chain.value}")

        check_inputs(self.program_b.inputs, Chain.B)
        check_inputs(self.program_a.inputs, Chain.A)

        for rung in self.program_b.rungs:
            p = pmap.get(rung.coil)
            if p is not None:
                if p.direction is not Direction.OUTPUT or p.chain is not Chain.B or rung.coil in driven:
                    raise LoadError(f"coil {rung.coil} collides with a point the program may not drive")
        for timer in self.program_b.timers:
            if timer.name in pmap:
                raise LoadError(f"timer {timer.name} collides with a station point")
            if timer.preset_ms % period != 0:
                raise LoadError(
                    f"timer {timer.name} preset {timer.preset_ms} ms is not a multiple of the {period} ms scan period"
                )
        for task in self.program_a.tasks:
            for state in task.states:
                for point, _ in state.emissions:
                    p = pmap.get(point)
                    if p is None or p.direction is not Direction.OUTPUT or p.chain is not Chain.A or point in driven:
                        raise LoadError(f"emitted point {point} is not a chain A program output")
                for tr in state.transitions:
                    if tr.is_timeout and tr.timeout_ms % period != 0:
                        raise LoadError(
                            f"timeout {tr.timeout_ms} ms in task {task.name} is not a multiple of the {period} ms scan period"
                        )

    def _compile_kernel(self) -> None:
        """Generate the fused scan function for this station.

        Signature: kernel(v, coils, accs, done, a_state, a_entry, disc,
        fa, fb, now) -> (fa, fb); mutates the lists in place.
        """
        station = self.station
        driven = station.engine_driven()
        period = self.scan_period_ms
        prog_b = self.program_b
        prog_a = self.program_a
        coil_idx = {n: i for i, n in enumerate(self._b_coil_names)}
        timer_idx = {t.name: i for i, t in enumerate(prog_b.timers)}

        def resolve_b(name: str) -> str:
            if name in coil_idx:
                return f"coils[{coil_idx[name]}]"
            if name in timer_idx:
                return f"done[{timer_idx[name]}]"
            return f"v[{self._index[name]}]"

        def resolve_a(name: str) -> str:
            return f"v[{self._index[name]}]"

        b_forced = [
            self._index[p.name]
            for p in self._points
            if p.direction is Direction.OUTPUT and p.chain is Chain.B and p.name not in driven
        ]
        a_forced = [
            self._index[p.name]
            for p in self._points
            if p.direction is Direction.OUTPUT and p.chain is Chain.A and p.name not in driven
        ]

        w = []  # generated source lines
        w.append("def kernel(v, coils, accs, done, a_state, a_entry, disc, fa, fb, now):")

        # phase 2: chain B
        w.append("    if fb == 0:")
        w.append("        try:")
        for i, timer in enumerate(prog_b.timers):
            enable = ex.compile_source(timer.enable, resolve_b)
            w.append(f"            if {enable}:")
            w.append(f"                acc = accs[{i}] + {period}")
            w.append(f"                if acc >= {timer.preset_ms}:")
            w.append(f"                    acc = {timer.preset_ms}")
            w.append(f"                    done[{i}] = 1")
            w.append(f"                accs[{i}] = acc")
            w.append("            else:")
            w.append(f"                accs[{i}] = 0")
            w.append(f"                done[{i}] = 0")
        for i, rung in enumerate(prog_b.rungs):
            w.append(f"            c{i} = {ex.compile_source(rung.expr, resolve_b)}")
        for i in range(len(prog_b.rungs)):
            w.append(f"            coils[{i}] = c{i}")
        for name, i in coil_idx.items():
            if name in self._index:
                w.append(f"            v[{self._index[name]}] = c{i}")
        if not prog_b.rungs and not prog_b.timers:
            w.append("            pass")
        w.append("        except Exception:")
        w.append(f"            fb = {_PROGRAM_HALT}")
        for idx in b_forced:
            w.append(f"            v[{idx}] = 0")
        w.append("    else:")
        for idx in b_forced:
            w.append(f"        v[{idx}] = 0")
        if not b_forced:
            w.append("        pass")

        # phase 3: chain A
        w.append("    if fa == 0:")
        w.append("        try:")
        for ti, task in enumerate(prog_a.tasks):
            state_idx = {s.name: i for i, s in enumerate(task.states)}
            owned = sorted(task.emitted_points())
            w.append(f"            s = a_state[{ti}]")
            branch = "if"
            for si, state in enumerate(task.states):
                w.append(f"            {branch} s == {si}:")
                branch = "elif"
                cond = "if"
                for tr in state.transitions:
                    if tr.is_timeout:
                        guard = f"now - a_entry[{ti}] >= {tr.timeout_ms}"
                    else:
                        guard = ex.compile_source(tr.guard, resolve_a)
                    w.append(f"                {cond} {guard}:")
                    w.append(f"                    s = {state_idx[tr.target]}")
                    w.append(f"                    a_entry[{ti}] = now")
                    cond = "elif"
                if cond == "if":
                    w.append("                pass")
            w.append(f"            a_state[{ti}] = s")
            # emissions: full owned-point assignment for the (new) state
            branch = "if"
            for si, state in enumerate(task.states):
                emitted = dict(state.emissions)
                w.append(f"            {branch} s == {si}:")
                branch = "elif"
                if owned:
                    for point in owned:
                        w.append(f"                v[{self._index[point]}] = {emitted.get(point, 0)}")
                else:
                    w.append("                pass")
        if not prog_a.tasks:
            w.append("            pass")
        w.append("        except Exception:")
        w.append(f"            fa = {_PROGRAM_HALT}")
        for idx in a_forced:
            w.append(f"            v[{idx}] = 0")
        w.append("    else:")
        for idx in a_forced:
            w.append(f"        v[{idx}] = 0")
        if not a_forced:
            w.append("        pass")

        # phase 4: discrepancy check (counter saturates one past the window)
        window = self.discrepancy_window_scans
        for pi, (ia, ib) in enumerate(self._pairs):
            w.append(f"    if v[{ia}] != v[{ib}]:")
            w.append(f"        d = disc[{pi}] + 1")
            w.append(f"        if d > {window + 1}: d = {window + 1}")
            w.append(f"        disc[{pi}] = d")
            w.append(f"        if d > {window}:")
            w.append(f"            if fa == 0: fa = {_DISCREPANCY}")
            w.append(f"            if fb == 0: fb = {_DISCREPANCY}")
            w.append("    else:")
            w.append(f"        disc[{pi}] = 0")

        # phase 5: combiner and fault LEDs
        w.append("    ok = 1 if (fa == 0 and fb == 0) else 0")
        for c in station.combined:
            t, a, b = self._index[c.point], self._index[c.a_source], self._index[c.b_source]
            w.append(f"    v[{t}] = v[{a}] & v[{b}] & ok")
        if station.fault_led_a:
            w.append(f"    v[{self._index[station.fault_led_a]}] = 0 if fa == 0 else 1")
        if station.fault_led_b:
            w.append(f"    v[{self._index[station.fault_led_b]}] = 0 if fb == 0 else 1")
        w.append("    return fa, fb")

        self.kernel_source = "\n".join(w) + "\n"
        namespace: dict = {}
        exec(self.kernel_source, namespace)  # noqa: S102 - compiling our own validated AST
        self._kernel = namespace["kernel"]

    # -- reset and state access --------------------------------------------

    def reset(self) -> None:
        """Back to the load state: inputs at declared initials, outputs 0,
        faults clear, every task at its initial state."""
        self._values = list(self._initials)
        self._pending: dict[int, int] = {}
        self.seq = 0
        self.time_ms = 0
        self._fa = _NO_FAULT
        self._fb = _NO_FAULT
        self._latched_a: int | None = None
        self._latched_b: int | None = None
        self._disc_counters = [0] * len(self._pairs)
        self._init_chains()

    def _init_chains(self) -> None:
        self._b_coils = [0] * len(self._b_coil_names)
        self._b_accs = [0] * len(self._b_presets)
        self._b_done = [0] * len(self._b_presets)
        self._a_state = list(self._a_initial)
        self._a_entry = [self.time_ms] * len(self._a_state)

    def fault_register(self, chain: Chain) -> FaultRegister:
        if chain is Chain.A:
            return FaultRegister(Chain.A, FAULT_CODES[self._fa], self._latched_a)
        if chain is Chain.B:
            return FaultRegister(Chain.B, FAULT_CODES[self._fb], self._latched_b)
        raise BadValueError("fault registers are per chain A or B")

    def task_states(self) -> dict[str, str]:
        """Active state of every Chain A task as of the last scan boundary."""
        return {
            name: self._a_state_names[ti][self._a_state[ti]]
            for ti, name in enumerate(self.task_names)
        }

    # -- environment operations ---------------------------------------------

    def _point_index(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            raise UnknownPointError(f"unknown point {name}")
        return idx

    def write_point(self, name: str, value: int) -> None:
        """Stage an input write; it latches at the next scan (last write wins)."""
        idx = self._point_index(name)
        if self._points[idx].direction is not Direction.INPUT:
            raise NotAnInputError(f"{name} is not an input")
        if value not in (0, 1):
            raise BadValueError(f"value for {name} must be 0 or 1")
        self._pending[idx] = value

    def read_point(self, name: str) -> int:
        """Committed value as of the most recent scan boundary."""
        return self._values[self._point_index(name)]

    def inject_fault(self, chain: Chain, code: FaultCode) -> None:
        if code is FaultCode.NO_FAULT:
            raise BadValueError("cannot inject NoFault; use reset_faults")
        if chain is Chain.A:
            self._fa = _FAULT_INDEX[code]
            self._latched_a = self.time_ms
        elif chain is Chain.B:
            self._fb = _FAULT_INDEX[code]
            self._latched_b = self.time_ms
        else:
            raise BadValueError("faults are injected per chain A or B")

    def reset_faults(self) -> None:
        """Clear both registers and re-initialize the chains.

        Secure status is lost: both chains restart from their initial
        states.  A still-present latching condition (for example a
        persistent redundant-pair disagreement) re-latches within the
        discrepancy window.
        """
        self._fa = _NO_FAULT
        self._fb = _NO_FAULT
        self._latched_a = None
        self._latched_b = None
        self._disc_counters = [0] * len(self._pairs)
        self._init_chains()

    def combined_permit(self) -> dict[str, int]:
        """The combiner truth row for the current committed values."""
        ok = 1 if (self._fa == _NO_FAULT and self._fb == _NO_FAULT) else 0
        v = self._values
        idx = self._index
        return {
            c.point: v[idx[c.a_source]] & v[idx[c.b_source]] & ok
            for c in self.station.combined
        }

    # -- scanning ------------------------------------------------------------

    def step(self) -> ScanRecord:
        """Execute exactly one scan and return its audit record."""
        self._step_core()
        return self._record()

    def run_for(self, duration_ms: int) -> list[ScanRecord]:
        if duration_ms < 0 or duration_ms % self.scan_period_ms != 0:
            raise BadValueError(
                f"duration {duration_ms} ms is not a multiple of the {self.scan_period_ms} ms scan period"
            )
        return [self.step() for _ in range(duration_ms // self.scan_period_ms)]

    def _step_core(self) -> None:
        v = self._values
        now = self.time_ms + self.scan_period_ms
        if self._pending:
            for idx, val in self._pending.items():
                v[idx] = val
            self._pending.clear()
        fa, fb = self._kernel(
            v,
            self._b_coils,
            self._b_accs,
            self._b_done,
            self._a_state,
            self._a_entry,
            self._disc_counters,
            self._fa,
            self._fb,
            now,
        )
        if fa != self._fa:
            self._fa = fa
            self._latched_a = now
        if fb != self._fb:
            self._fb = fb
            self._latched_b = now
        self.time_ms = now
        self.seq += 1

    def _record(self) -> ScanRecord:
        v = self._values
        return ScanRecord(
            seq=self.seq,
            time_ms=self.time_ms,
            inputs={n: v[self._index[n]] for n in self.input_names},
            outputs={n: v[self._index[n]] for n in self.output_names},
            fault_a=FAULT_CODES[self._fa],
            fault_b=FAULT_CODES[self._fb],
            active_states=self.task_states(),
        )

    # -- state capture (used by the reachability explorer) -------------------

    def snapshot_state(self) -> tuple:
        """Full mutable state as an immutable value; pair with restore_state."""
        return (
            tuple(self._values),
            tuple(sorted(self._pending.items())),
            self.seq,
            self.time_ms,
            self._fa,
            self._fb,
            self._latched_a,
            self._latched_b,
            tuple(self._disc_counters),
            tuple(self._b_coils),
            tuple(self._b_accs),
            tuple(self._b_done),
            tuple(self._a_state),
            tuple(self._a_entry),
        )

    def restore_state(self, snap: tuple) -> None:
        (
            values,
            pending,
            self.seq,
            self.time_ms,
            self._fa,
            self._fb,
            self._latched_a,
            self._latched_b,
            disc,
            b_coils,
            b_accs,
            b_done,
            a_state,
            a_entry,
        ) = snap
        self._values = list(values)
        self._pending = dict(pending)
        self._disc_counters = list(disc)
        self._b_coils = list(b_coils)
        self._b_accs = list(b_accs)
        self._b_done = list(b_done)
        self._a_state = list(a_state)
        self._a_entry = list(a_entry)


def load(station: StationModel, rng_seed: int = 0) -> Engine:
    """Build an Engine in its reset state; validates programs against the map."""
    return Engine(station, rng_seed=rng_seed)
