from __future__ import annotations

import pytest

from artts.explore import ReachabilityReport, explore_reachable
from artts.station import StationModel, build_reference_station


@pytest.fixture(scope="session")
def reference_station() -> StationModel:
    return build_reference_station()


@pytest.fixture(scope="session")
def reference_exploration(reference_station) -> ReachabilityReport:
    """Full exhaustive exploration of the reference station, shared across
    the suite (it is the oracle several modules check against)."""
    return explore_reachable(reference_station)
