from fastped.agents import Agent
from fastped.engine import SimState
from fastped.scenario_io import spawn_agents
from fastped.world import (
    Boundary,
    CellKind,
    Grid,
    StaticField,
    compute_static_field,
    load_scenario,
    parse_scenario,
)

from pathlib import Path

import numpy as np
import pytest

SCENARIO_DIR = Path(__file__).parent.parent / "scenarios"


def grid_from_rows(rows: list[str], boundary: str = "closed", cell_size: float = 0.4) -> Grid:
    text = "\n".join(
        [
            "FAST-SCENARIO v1",
            f"width {len(rows[0])}",
            f"height {len(rows)}",
            f"cell_size {cell_size}",
            f"boundary {boundary}",
            "grid:",
            *rows,
        ]
    )
    return parse_scenario(text + "\n")


def state_with_agents(grid: Grid, cells: list[tuple[int, int]], v_max: int, field=None) -> SimState:
    if field is None:
        field = compute_static_field(grid)
    roster = [Agent(id=i, pos=cell, v_max=v_max) for i, cell in enumerate(cells)]
    return SimState.from_roster(grid, field, roster, v_max)


@pytest.fixture
def small_room() -> Grid:
    return load_scenario(SCENARIO_DIR / "small_room.txt")


@pytest.fixture
def short_corridor() -> Grid:
    return load_scenario(SCENARIO_DIR / "short_corridor.txt")


@pytest.fixture
def random_world():
    """Factory of random worlds: (state, v_max) from a numpy Generator"""

    def build(rng: np.random.Generator, max_side: int = 100, max_agents: int = 1000):
        width = int(rng.integers(5, max_side + 1))
        height = int(rng.integers(5, max_side + 1))
        periodic = bool(rng.random() < 0.3)
        cells = np.where(
            rng.random((height, width)) < 0.1, CellKind.WALL, CellKind.FREE
        ).astype(np.int8)
        cells[[0, -1], :] = CellKind.WALL
        if periodic:
            boundary = Boundary.PERIODIC_X
        else:
            boundary = Boundary.CLOSED
            cells[:, [0, -1]] = CellKind.WALL
            for _ in range(int(rng.integers(1, 4))):
                y = int(rng.integers(1, height - 1))
                cells[y, 0 if rng.random() < 0.5 else width - 1] = CellKind.EXIT
        grid = Grid(cells, boundary=boundary)
        if periodic:
            field = StaticField.uniform_gradient(grid, float(rng.uniform(0.5, 4.0)))
        else:
            field = compute_static_field(grid)
        v_max = int(rng.integers(1, 6))
        n = int(rng.integers(0, min(max_agents, grid.count(CellKind.FREE)) + 1))
        roster = spawn_agents(grid, n, v_max, int(rng.integers(0, 2**63)))
        return SimState.from_roster(grid, field, roster, v_max), v_max

    return build
