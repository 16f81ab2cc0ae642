from __future__ import annotations

import pytest

from decoymix.roads import make_grid, zone_from_center


@pytest.fixture(scope="session")
def grid4():
    """4x4 bidirectional grid, 500 m spacing, 50 km/h limits."""
    return make_grid(4, 4, 500.0)


@pytest.fixture(scope="session")
def zone_j1_1(grid4):
    """100 m mix zone on junction j1_1 at (500, 500)."""
    return zone_from_center(grid4, (500.0, 500.0), 100.0)
