from __future__ import annotations

from pathlib import Path

import pytest

from artts.chaindsl import parse_rung_program, parse_state_program
from artts.points import Chain, Direction, IoPoint
from artts.station import (
    CombinedPoint,
    StationError,
    StationModel,
    build_reference_station,
    load_station,
    save_station,
)

STATION_DIR = Path(__file__).resolve().parent.parent / "stations" / "station-a"


def test_reference_station_has_three_panels(reference_station):
    assert len(reference_station.panels) == 3
    kinds = [p.panel.value for p in reference_station.panels]
    assert kinds == ["UserPanel", "DoorPanel", "SystemController"]


def test_reference_programs_parse_clean(reference_station):
    # shipping requirement: zero Error diagnostics
    parse_state_program(reference_station.chain_a_source)
    parse_rung_program(reference_station.chain_b_source)


def test_reference_redundant_pairs(reference_station):
    assert reference_station.redundant_pairs == (("DOOR_CLOSED_1", "DOOR_CLOSED_2"),)


def test_permit_trio_present(reference_station):
    pmap = reference_station.point_map()
    assert pmap["SHUTTER_PERMIT_A"].chain is Chain.A
    assert pmap["SHUTTER_PERMIT_B"].chain is Chain.B
    assert pmap["SHUTTER_PERMIT"].chain is Chain.BOTH


def test_checked_in_station_dir_matches_builder(tmp_path, reference_station):
    """stations/station-a is the serialized form of build_reference_station."""
    save_station(reference_station, tmp_path)
    for name in ("station.json", "chain_a.state", "chain_b.rung"):
        assert (tmp_path / name).read_text() == (STATION_DIR / name).read_text(), name


def test_load_station_round_trip(tmp_path, reference_station):
    save_station(reference_station, tmp_path)
    loaded = load_station(tmp_path)
    assert loaded == reference_station


def test_load_station_missing_dir(tmp_path):
    with pytest.raises(StationError):
        load_station(tmp_path / "nope")


def _mini_points():
    return (
        IoPoint("PA", Direction.INPUT, Chain.BOTH),
        IoPoint("SHUTTER_PERMIT_A", Direction.OUTPUT, Chain.A),
        IoPoint("SHUTTER_PERMIT_B", Direction.OUTPUT, Chain.B),
        IoPoint("SHUTTER_PERMIT", Direction.OUTPUT, Chain.BOTH),
    )


def test_station_requires_permit_trio():
    with pytest.raises(StationError, match="SHUTTER_PERMIT"):
        StationModel(
            name="broken",
            points=(IoPoint("PA", Direction.INPUT, Chain.BOTH),),
            redundant_pairs=(),
            combined=(),
            chain_a_source="",
            chain_b_source="",
        )


def test_station_rejects_unmapped_both_output():
    points = _mini_points() + (IoPoint("ORPHAN", Direction.OUTPUT, Chain.BOTH),)
    with pytest.raises(StationError, match="ORPHAN"):
        StationModel(
            name="broken",
            points=points,
            redundant_pairs=(),
            combined=(CombinedPoint("SHUTTER_PERMIT", "SHUTTER_PERMIT_A", "SHUTTER_PERMIT_B"),),
            chain_a_source="",
            chain_b_source="",
        )


def test_station_rejects_redundant_pair_on_output():
    with pytest.raises(StationError, match="non-input"):
        StationModel(
            name="broken",
            points=_mini_points(),
            redundant_pairs=(("PA", "SHUTTER_PERMIT"),),
            combined=(CombinedPoint("SHUTTER_PERMIT", "SHUTTER_PERMIT_A", "SHUTTER_PERMIT_B"),),
            chain_a_source="",
            chain_b_source="",
        )


def test_widgets_bind_correct_directions(reference_station):
    pmap = reference_station.point_map()
    for panel in reference_station.panels:
        for w in panel.widgets:
            direction = pmap[w.point].direction
            if w.kind.value in ("Switch", "MomentaryButton", "KeySwitch"):
                assert direction is Direction.INPUT
            else:
                assert direction is Direction.OUTPUT
