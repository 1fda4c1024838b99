"""Station models: point maps, panels, chain-program sources.

A station directory holds ``station.json`` plus the two program sources
``chain_a.state`` and ``chain_b.rung``.  The reference "Station A" ships
both as data under ``stations/station-a/`` and as `build_reference_station`,
which constructs it in code with no I/O.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .chaindsl import parse_rung_program, parse_state_program
from .points import Chain, Direction, IoPoint


class PanelKind(Enum):
    USER = "UserPanel"
    DOOR = "DoorPanel"
    SYSTEM = "SystemController"


class WidgetKind(Enum):
    SWITCH = "Switch"
    MOMENTARY = "MomentaryButton"
    KEY = "KeySwitch"
    LED = "Led"
    BEACON = "Beacon"


INPUT_WIDGETS = {WidgetKind.SWITCH, WidgetKind.MOMENTARY, WidgetKind.KEY}


@dataclass(frozen=True)
class PanelWidget:
    kind: WidgetKind
    point: str
    label: str


@dataclass(frozen=True)
class PanelSpec:
    panel: PanelKind
    widgets: tuple[PanelWidget, ...]


@dataclass(frozen=True)
class CombinedPoint:
    """A chain-Both output and the per-chain permit points it votes on."""

    point: str
    a_source: str
    b_source: str


class StationError(Exception):
    pass


@dataclass(frozen=True)
class StationModel:
    name: str
    points: tuple[IoPoint, ...]
    redundant_pairs: tuple[tuple[str, str], ...]
    combined: tuple[CombinedPoint, ...]
    chain_a_source: str
    chain_b_source: str
    panels: tuple[PanelSpec, ...] = ()
    fault_led_a: str | None = None
    fault_led_b: str | None = None
    scan_period_ms: int = 10
    discrepancy_window_scans: int = 5

    def __post_init__(self) -> None:
        self._validate()

    # -- lookups ---------------------------------------------------------

    def point_map(self) -> dict[str, IoPoint]:
        return {p.name: p for p in self.points}

    def inputs(self) -> tuple[IoPoint, ...]:
        return tuple(p for p in self.points if p.direction is Direction.INPUT)

    def outputs(self) -> tuple[IoPoint, ...]:
        return tuple(p for p in self.points if p.direction is Direction.OUTPUT)

    def engine_driven(self) -> frozenset[str]:
        """Points the engine computes itself: combined votes and fault LEDs."""
        names = {c.point for c in self.combined}
        names.update(n for n in (self.fault_led_a, self.fault_led_b) if n)
        return frozenset(names)

    def program_points(self, chain: Chain) -> tuple[IoPoint, ...]:
        """The point-map slice one chain program is responsible for."""
        driven = self.engine_driven()
        out = []
        for p in self.points:
            if p.name in driven:
                continue
            if p.direction is Direction.INPUT and p.visible_to_chain(chain):
                out.append(p)
            elif p.direction is Direction.OUTPUT and p.chain is chain:
                out.append(p)
        return tuple(out)

    # -- validation ------------------------------------------------------

    def _validate(self) -> None:
        by_name: dict[str, IoPoint] = {}
        for p in self.points:
            if p.name in by_name:
                raise StationError(f"duplicate point {p.name}")
            by_name[p.name] = p
        if self.scan_period_ms <= 0:
            raise StationError("scan period must be positive")
        if self.discrepancy_window_scans <= 0:
            raise StationError("discrepancy window must be positive")

        for a, b in self.redundant_pairs:
            for name in (a, b):
                p = by_name.get(name)
                if p is None or p.direction is not Direction.INPUT:
                    raise StationError(f"redundant pair references non-input {name}")

        combined_targets = set()
        for c in self.combined:
            target = by_name.get(c.point)
            if target is None or target.direction is not Direction.OUTPUT or target.chain is not Chain.BOTH:
                raise StationError(f"combined point {c.point} must be a chain-Both output")
            src_a = by_name.get(c.a_source)
            if src_a is None or src_a.direction is not Direction.OUTPUT or src_a.chain is not Chain.A:
                raise StationError(f"combined source {c.a_source} must be a chain A output")
            src_b = by_name.get(c.b_source)
            if src_b is None or src_b.direction is not Direction.OUTPUT or src_b.chain is not Chain.B:
                raise StationError(f"combined source {c.b_source} must be a chain B output")
            combined_targets.add(c.point)
        for p in self.points:
            if p.direction is Direction.OUTPUT and p.chain is Chain.BOTH and p.name not in combined_targets:
                raise StationError(f"chain-Both output {p.name} has no combiner mapping")

        for led, chain in ((self.fault_led_a, Chain.A), (self.fault_led_b, Chain.B)):
            if led is None:
                continue
            p = by_name.get(led)
            if p is None or p.direction is not Direction.OUTPUT or p.chain is not chain:
                raise StationError(f"fault LED {led} must be a chain {chain.value} output")

        required = {
            "SHUTTER_PERMIT_A": (Direction.OUTPUT, Chain.A),
            "SHUTTER_PERMIT_B": (Direction.OUTPUT, Chain.B),
            "SHUTTER_PERMIT": (Direction.OUTPUT, Chain.BOTH),
        }
        for name, (direction, chain) in required.items():
            p = by_name.get(name)
            if p is None or p.direction is not direction or p.chain is not chain:
                raise StationError(f"station must declare {name} as a chain {chain.value} {direction.value}")

        for panel in self.panels:
            for w in panel.widgets:
                p = by_name.get(w.point)
                if p is None:
                    raise StationError(f"panel widget binds unknown point {w.point}")
                want = Direction.INPUT if w.kind in INPUT_WIDGETS else Direction.OUTPUT
                if p.direction is not want:
                    raise StationError(f"widget {w.kind.value} on {w.point} must bind an {want.value}")


# -- directory (de)serialization ------------------------------------------

STATION_FILE = "station.json"
CHAIN_A_FILE = "chain_a.state"
CHAIN_B_FILE = "chain_b.rung"


def station_to_dict(station: StationModel) -> dict:
    """The station.json shape (programs live in their own files)."""
    return {
        "name": station.name,
        "scan_period_ms": station.scan_period_ms,
        "discrepancy_window_scans": station.discrepancy_window_scans,
        "points": [
            {
                "name": p.name,
                "direction": p.direction.value,
                "chain": p.chain.value,
                "initial": p.initial,
            }
            for p in station.points
        ],
        "redundant_pairs": [list(pair) for pair in station.redundant_pairs],
        "combined": [
            {"point": c.point, "a": c.a_source, "b": c.b_source} for c in station.combined
        ],
        "fault_leds": {
            **({"A": station.fault_led_a} if station.fault_led_a else {}),
            **({"B": station.fault_led_b} if station.fault_led_b else {}),
        },
        "panels": [
            {
                "panel": panel.panel.value,
                "widgets": [
                    {"kind": w.kind.value, "point": w.point, "label": w.label}
                    for w in panel.widgets
                ],
            }
            for panel in station.panels
        ],
    }


def station_from_dict(doc: dict, chain_a_source: str, chain_b_source: str) -> StationModel:
    try:
        points = tuple(
            IoPoint(
                name=p["name"],
                direction=Direction(p["direction"]),
                chain=Chain(p["chain"]),
                initial=int(p.get("initial", 0)),
            )
            for p in doc["points"]
        )
        panels = tuple(
            PanelSpec(
                panel=PanelKind(entry["panel"]),
                widgets=tuple(
                    PanelWidget(WidgetKind(w["kind"]), w["point"], w.get("label", w["point"]))
                    for w in entry["widgets"]
                ),
            )
            for entry in doc.get("panels", [])
        )
        fault_leds = doc.get("fault_leds", {})
        return StationModel(
            name=doc["name"],
            points=points,
            redundant_pairs=tuple((a, b) for a, b in doc.get("redundant_pairs", [])),
            combined=tuple(
                CombinedPoint(c["point"], c["a"], c["b"]) for c in doc.get("combined", [])
            ),
            chain_a_source=chain_a_source,
            chain_b_source=chain_b_source,
            panels=panels,
            fault_led_a=fault_leds.get("A"),
            fault_led_b=fault_leds.get("B"),
            scan_period_ms=int(doc.get("scan_period_ms", 10)),
            discrepancy_window_scans=int(doc.get("discrepancy_window_scans", 5)),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise StationError(f"malformed station document: {err}") from err


def load_station(directory: str | Path) -> StationModel:
    directory = Path(directory)
    try:
        doc = json.loads((directory / STATION_FILE).read_text(encoding="utf-8"))
        chain_a = (directory / CHAIN_A_FILE).read_text(encoding="utf-8")
        chain_b = (directory / CHAIN_B_FILE).read_text(encoding="utf-8")
    except OSError as err:
        raise StationError(f"cannot load station from {directory}: {err}") from err
    except json.JSONDecodeError as err:
        raise StationError(f"{directory / STATION_FILE}: {err}") from err
    return station_from_dict(doc, chain_a, chain_b)


def save_station(station: StationModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = json.dumps(station_to_dict(station), indent=2) + "\n"
    (directory / STATION_FILE).write_text(doc, encoding="utf-8")
    (directory / CHAIN_A_FILE).write_text(station.chain_a_source, encoding="utf-8")
    (directory / CHAIN_B_FILE).write_text(station.chain_b_source, encoding="utf-8")


# -- the reference station -------------------------------------------------

REFERENCE_CHAIN_B = """\
# Chain B interlock logic: relay-ladder implementation.
#
# Seal-in latches carry the search/secure sequence; every latch's hold
# condition repeats the conditions that must stay true, so a break drops
# the latch in the same scan the condition is lost.

input DOOR_CLOSED_1
input DOOR_CLOSED_2
input ESTOP_USER
input ESTOP_DOOR
input SEARCH_BTN_1
input SEARCH_BTN_2
input SECURE_KEY
input BEAM_REQ
input RESET_BTN

# Search windows: step two must follow step one, and the key must follow
# step two, each within 30 s of simulated time.
timer T_SEARCH preset 30000 enable SEARCH1 AND NOT SEARCHED
timer T_SECURE preset 30000 enable SEARCHED AND NOT SECURED

# Trip latch: an E-stop at any time, or losing a door while secured.
# Cleared only by RESET_BTN once both E-stops are released.
rung TRIPPED := (ESTOP_USER OR ESTOP_DOOR OR (SECURED AND NOT (DOOR_CLOSED_1 AND DOOR_CLOSED_2)) OR TRIPPED) AND NOT (RESET_BTN AND NOT ESTOP_USER AND NOT ESTOP_DOOR)

# Search step 1: sealed in by the first button, released by step 2,
# window expiry, or any break condition.
rung SEARCH1 := (SEARCH_BTN_1 OR SEARCH1) AND NOT T_SEARCH AND NOT SEARCHED AND NOT SECURED AND NOT TRIPPED AND NOT ESTOP_USER AND NOT ESTOP_DOOR

# Search complete: second button pressed while step 1 is sealed.
rung SEARCHED := ((SEARCH1 AND SEARCH_BTN_2) OR SEARCHED) AND NOT T_SECURE AND NOT SECURED AND NOT TRIPPED AND NOT ESTOP_USER AND NOT ESTOP_DOOR

# Secured: key turned with both doors closed after a completed search.
# Doors and key are in the hold path: opening a door or releasing the key
# drops the latch the same scan.
rung SECURED := ((SEARCHED AND SECURE_KEY AND DOOR_CLOSED_1 AND DOOR_CLOSED_2) OR SECURED) AND SECURE_KEY AND DOOR_CLOSED_1 AND DOOR_CLOSED_2 AND NOT ESTOP_USER AND NOT ESTOP_DOOR AND NOT TRIPPED

# The safety-critical output: beam permitted only while secured, requested,
# doors proven closed and nothing tripped.
rung SHUTTER_PERMIT_B := SECURED AND BEAM_REQ AND DOOR_CLOSED_1 AND DOOR_CLOSED_2 AND NOT ESTOP_USER AND NOT ESTOP_DOOR AND NOT TRIPPED

rung SEARCH_LED_B := SEARCH1 OR SEARCHED
rung SECURED_LED_B := SECURED
rung WARNING_BEACON_B := SEARCH1 OR SEARCHED OR SECURED
rung DOOR_LOCK_B := SECURED
"""

REFERENCE_CHAIN_A = """\
# Chain A interlock logic: state-task implementation.
#
# One task walks the search-and-secure procedure.  Outputs are a pure
# function of the active state: a state's emissions hold while it is
# active and every owned point it does not mention reads 0.

input DOOR_CLOSED_1
input DOOR_CLOSED_2
input ESTOP_USER
input ESTOP_DOOR
input SEARCH_BTN_1
input SEARCH_BTN_2
input SECURE_KEY
input BEAM_REQ
input RESET_BTN

task ACCESS
  state IDLE initial
    when ESTOP_USER OR ESTOP_DOOR goto TRIPPED
    when SEARCH_BTN_1 goto SEARCHING

  state SEARCHING
    emit SEARCH_LED_A 1
    emit WARNING_BEACON_A 1
    when ESTOP_USER OR ESTOP_DOOR goto TRIPPED
    when SEARCH_BTN_2 goto SEARCHED
    timeout 30000 goto IDLE

  state SEARCHED
    emit SEARCH_LED_A 1
    emit WARNING_BEACON_A 1
    when ESTOP_USER OR ESTOP_DOOR goto TRIPPED
    when SECURE_KEY AND DOOR_CLOSED_1 AND DOOR_CLOSED_2 goto SECURED
    timeout 30000 goto IDLE

  state SECURED
    emit SECURED_LED_A 1
    emit WARNING_BEACON_A 1
    emit DOOR_LOCK_A 1
    when ESTOP_USER OR ESTOP_DOOR goto TRIPPED
    when NOT DOOR_CLOSED_1 OR NOT DOOR_CLOSED_2 goto TRIPPED
    when NOT SECURE_KEY goto IDLE
    when BEAM_REQ goto BEAM_ON

  state BEAM_ON
    emit SECURED_LED_A 1
    emit WARNING_BEACON_A 1
    emit DOOR_LOCK_A 1
    emit SHUTTER_PERMIT_A 1
    when ESTOP_USER OR ESTOP_DOOR goto TRIPPED
    when NOT DOOR_CLOSED_1 OR NOT DOOR_CLOSED_2 goto TRIPPED
    when NOT SECURE_KEY goto IDLE
    when NOT BEAM_REQ goto SECURED

  state TRIPPED
    when RESET_BTN AND NOT ESTOP_USER AND NOT ESTOP_DOOR goto IDLE
"""


def _inp(name: str) -> IoPoint:
    return IoPoint(name, Direction.INPUT, Chain.BOTH, 0)


def _out(name: str, chain: Chain) -> IoPoint:
    return IoPoint(name, Direction.OUTPUT, chain, 0)


def build_reference_station() -> StationModel:
    """The shipped Station A model; pure construction, no I/O."""
    points = (
        _inp("DOOR_CLOSED_1"),
        _inp("DOOR_CLOSED_2"),
        _inp("ESTOP_USER"),
        _inp("ESTOP_DOOR"),
        _inp("SEARCH_BTN_1"),
        _inp("SEARCH_BTN_2"),
        _inp("SECURE_KEY"),
        _inp("BEAM_REQ"),
        _inp("RESET_BTN"),
        _out("SHUTTER_PERMIT_A", Chain.A),
        _out("SEARCH_LED_A", Chain.A),
        _out("SECURED_LED_A", Chain.A),
        _out("FAULT_LED_A", Chain.A),
        _out("WARNING_BEACON_A", Chain.A),
        _out("DOOR_LOCK_A", Chain.A),
        _out("SHUTTER_PERMIT_B", Chain.B),
        _out("SEARCH_LED_B", Chain.B),
        _out("SECURED_LED_B", Chain.B),
        _out("FAULT_LED_B", Chain.B),
        _out("WARNING_BEACON_B", Chain.B),
        _out("DOOR_LOCK_B", Chain.B),
        _out("SHUTTER_PERMIT", Chain.BOTH),
        _out("DOOR_LOCK", Chain.BOTH),
        _out("WARNING_BEACON", Chain.BOTH),
        _out("SECURED_LED", Chain.BOTH),
    )
    combined = (
        CombinedPoint("SHUTTER_PERMIT", "SHUTTER_PERMIT_A", "SHUTTER_PERMIT_B"),
        CombinedPoint("DOOR_LOCK", "DOOR_LOCK_A", "DOOR_LOCK_B"),
        CombinedPoint("WARNING_BEACON", "WARNING_BEACON_A", "WARNING_BEACON_B"),
        CombinedPoint("SECURED_LED", "SECURED_LED_A", "SECURED_LED_B"),
    )
    panels = (
        PanelSpec(
            PanelKind.USER,
            (
                PanelWidget(WidgetKind.MOMENTARY, "SEARCH_BTN_1", "Search 1"),
                PanelWidget(WidgetKind.MOMENTARY, "SEARCH_BTN_2", "Search 2"),
                PanelWidget(WidgetKind.KEY, "SECURE_KEY", "Secure key"),
                PanelWidget(WidgetKind.SWITCH, "ESTOP_USER", "E-stop (user)"),
                PanelWidget(WidgetKind.LED, "SEARCH_LED_A", "Search A"),
                PanelWidget(WidgetKind.LED, "SEARCH_LED_B", "Search B"),
                PanelWidget(WidgetKind.LED, "SECURED_LED", "Secured"),
                PanelWidget(WidgetKind.BEACON, "WARNING_BEACON", "Warning beacon"),
            ),
        ),
        PanelSpec(
            PanelKind.DOOR,
            (
                PanelWidget(WidgetKind.SWITCH, "DOOR_CLOSED_1", "Door contact 1"),
                PanelWidget(WidgetKind.SWITCH, "DOOR_CLOSED_2", "Door contact 2"),
                PanelWidget(WidgetKind.SWITCH, "ESTOP_DOOR", "E-stop (door)"),
                PanelWidget(WidgetKind.LED, "DOOR_LOCK", "Door lock"),
            ),
        ),
        PanelSpec(
            PanelKind.SYSTEM,
            (
                PanelWidget(WidgetKind.SWITCH, "BEAM_REQ", "Beam request"),
                PanelWidget(WidgetKind.MOMENTARY, "RESET_BTN", "Reset"),
                PanelWidget(WidgetKind.LED, "SHUTTER_PERMIT", "Shutter permit"),
                PanelWidget(WidgetKind.LED, "SECURED_LED_A", "Secured A"),
                PanelWidget(WidgetKind.LED, "SECURED_LED_B", "Secured B"),
                PanelWidget(WidgetKind.LED, "FAULT_LED_A", "Fault A"),
                PanelWidget(WidgetKind.LED, "FAULT_LED_B", "Fault B"),
            ),
        ),
    )
    return StationModel(
        name="Station A",
        points=points,
        redundant_pairs=(("DOOR_CLOSED_1", "DOOR_CLOSED_2"),),
        combined=combined,
        chain_a_source=REFERENCE_CHAIN_A,
        chain_b_source=REFERENCE_CHAIN_B,
        panels=panels,
        fault_led_a="FAULT_LED_A",
        fault_led_b="FAULT_LED_B",
    )


def parse_station_programs(station: StationModel):
    """Parse both chain sources; raises SourceError on the first bad program."""
    return parse_state_program(station.chain_a_source), parse_rung_program(station.chain_b_source)
