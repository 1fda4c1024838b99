from __future__ import annotations

import dataclasses
import random

from artts.engine import load
from artts.explore import explore_reachable


def test_empty_alphabet_reaches_only_reset_state(reference_station):
    report = explore_reachable(reference_station, input_alphabet=[])
    assert report.complete
    assert report.projected_states == 1
    assert report.abstract_states == 1
    assert report.total_violations == 0


def test_reference_station_has_no_safety_violations(reference_exploration):
    assert reference_exploration.complete
    assert reference_exploration.total_violations == 0
    assert reference_exploration.violations == []
    assert reference_exploration.abstract_states < reference_exploration.state_cap


def test_secured_is_reachable(reference_exploration):
    reached = reference_exploration.reached_task_states["ACCESS"]
    assert {"IDLE", "SEARCHING", "SEARCHED", "SECURED", "BEAM_ON", "TRIPPED"} <= reached


def test_sabotaged_chain_b_is_caught(reference_station):
    sabotaged = reference_station.chain_b_source.replace(
        "rung SHUTTER_PERMIT_B := SECURED AND BEAM_REQ AND DOOR_CLOSED_1 AND DOOR_CLOSED_2",
        "rung SHUTTER_PERMIT_B := SECURED AND BEAM_REQ AND DOOR_CLOSED_2",
    )
    assert sabotaged != reference_station.chain_b_source
    station = dataclasses.replace(reference_station, chain_b_source=sabotaged)
    report = explore_reachable(station)
    assert report.total_violations >= 1
    violation = report.violations[0]
    assert violation.permit == "SHUTTER_PERMIT_B"
    assert len(violation.trace) >= 1  # concrete input path from reset


def test_state_cap_reports_incomplete(reference_station):
    report = explore_reachable(reference_station, state_cap=10)
    assert not report.complete
    assert "INCOMPLETE" in report.summary()


def test_chain_symmetry_at_quiescence(reference_station):
    """Both chains' permits agree once inputs hold still for two scans."""
    rng = random.Random(99)
    inputs = [p.name for p in reference_station.inputs()]
    for _ in range(300):
        engine = load(reference_station)
        for _ in range(rng.randrange(1, 25)):
            for name in inputs:
                if rng.random() < 0.3:
                    engine.write_point(name, rng.randrange(2))
            engine.step()
        engine.step()
        engine.step()  # quiescence: two settle scans with held inputs
        assert engine.read_point("SHUTTER_PERMIT_A") == engine.read_point("SHUTTER_PERMIT_B")


def test_exploration_is_deterministic(reference_station):
    alphabet = [tuple(int(b) for b in f"{i:09b}") for i in (0, 3, 96, 257, 511)]
    one = explore_reachable(reference_station, input_alphabet=alphabet)
    two = explore_reachable(reference_station, input_alphabet=alphabet)
    assert one.abstract_states == two.abstract_states
    assert one.projected_states == two.projected_states
    assert one.edges == two.edges


def test_exploration_of_station_without_reference_points():
    """Stations lacking the reference safety points explore with safety
    checking skipped rather than crashing."""
    from tests.test_engine import make_station

    station = make_station(
        "input PB\nrung SHUTTER_PERMIT_B := PB\n",
        inputs=["PB"],
        b_outputs=["SHUTTER_PERMIT_B"],
    )
    report = explore_reachable(station)  # inputs: PA, PB -> 4 vectors
    assert report.complete
    assert report.total_violations == 0
    assert report.projected_states >= 2
