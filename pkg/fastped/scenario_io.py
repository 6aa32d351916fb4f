from fastped.agents import SPAWN_CHANNEL, Agent, rng_u64
from fastped.config import MAX_SPEED
from fastped.errors import CapacityError, ConfigError, ResultsIOError, ScenarioError
from fastped.world import DEFAULT_CELL_SIZE, Boundary, CellKind, Grid

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import polars as pl

RUN_COLUMNS = [
    "scenario",
    "agents_initial",
    "v_max",
    "cores",
    "steps",
    "wall_time_s",
    "plan_time_s",
    "move_time_s",
    "seed",
]
RUN_SCHEMA = {
    "scenario": pl.String,
    "agents_initial": pl.Int64,
    "v_max": pl.Int64,
    "cores": pl.Int64,
    "steps": pl.Int64,
    "wall_time_s": pl.Float64,
    "plan_time_s": pl.Float64,
    "move_time_s": pl.Float64,
    "seed": pl.UInt64,
}
SECONDS_DIGITS = 6


@dataclass
class RunRecord:
    """One benchmark measurement

    Attributes
    ----------
    scenario_name: str
        Name of the scenario (file stem or generator name)
    agents_initial: int
        Agents spawned before the run
    v_max: int
        Maximum speed in cells per step
    cores: int
        Planning workers
    steps: int
        Time steps run
    wall_time_s: float
        Wall-clock seconds of the stepping loop
    plan_time_s: float
        Seconds in the planning phase
    move_time_s: float
        Seconds in the movement phase
    seed: int
        Seed of the run
    """

    scenario_name: str
    agents_initial: int
    v_max: int
    cores: int
    steps: int
    wall_time_s: float
    plan_time_s: float
    move_time_s: float
    seed: int


def spawn_agents(grid: Grid, n: int, v_max: int, seed: int) -> list[Agent]:
    """Place n agents on distinct Free cells

    A partial Fisher-Yates shuffle of the row-major Free-cell list, driven by
    the spawn stream of the seed, selects the cells.

    Parameters
    ----------
    grid: Grid
        Scenario geometry
    n: int
        Number of agents
    v_max: int
        Their shared maximum speed
    seed: int
        Seed of the placement

    Returns
    -------
    list[Agent]
        Agents with ids 0..n-1
    """
    if not 1 <= v_max <= MAX_SPEED:
        raise ConfigError(f"v_max must be in [1, {MAX_SPEED}], got {v_max}")
    free = grid.free_cells()
    if n < 0:
        raise CapacityError(f"cannot spawn a negative number of agents ({n})")
    if n > len(free):
        raise CapacityError(
            f"requested {n} agents but the scenario has only {len(free)} free cells"
        )
    for k in range(n):
        j = k + rng_u64(seed, SPAWN_CHANNEL, 0, k) % (len(free) - k)
        free[k], free[j] = free[j], free[k]
    return [Agent(id=k, pos=free[k], v_max=v_max) for k in range(n)]


def _cells_along(length_m: float, cell_size: float, what: str) -> int:
    if not cell_size > 0.0:
        raise ScenarioError(f"cell_size must be > 0, got {cell_size}")
    cells = int(round(length_m / cell_size))
    if cells < 3:
        raise ScenarioError(
            f"{what} of {length_m} m is {cells} cells at cell_size {cell_size} m; at least 3 needed"
        )
    return cells


def make_plaza(side_m: float, exits: int, cell_size: float = DEFAULT_CELL_SIZE) -> Grid:
    """Square closed room with exits spread evenly along its border

    Parameters
    ----------
    side_m: float
        Side length in meters, walls included
    exits: int
        Number of single-cell exits; 0 gives a closed room
    cell_size: float
        Cell edge in meters

    Returns
    -------
    Grid
        The plaza
    """
    side = _cells_along(side_m, cell_size, "plaza side")
    # Border cells without the corners, walked clockwise from the top left
    ring = (
        [(x, 0) for x in range(1, side - 1)]
        + [(side - 1, y) for y in range(1, side - 1)]
        + [(x, side - 1) for x in range(side - 2, 0, -1)]
        + [(0, y) for y in range(side - 2, 0, -1)]
    )
    if exits < 0 or exits > len(ring):
        raise ScenarioError(f"a {side}x{side} plaza holds 0 to {len(ring)} exits, got {exits}")
    cells = np.full((side, side), CellKind.FREE, dtype=np.int8)
    cells[[0, -1], :] = CellKind.WALL
    cells[:, [0, -1]] = CellKind.WALL
    for k in range(exits):
        x, y = ring[((2 * k + 1) * len(ring)) // (2 * exits)]
        cells[y, x] = CellKind.EXIT
    return Grid(cells, cell_size=cell_size, boundary=Boundary.CLOSED)


def make_corridor(
    length_m: float, width_m: float, cell_size: float = DEFAULT_CELL_SIZE
) -> Grid:
    """Corridor wrapping in x with solid top and bottom rows and no exits

    The width includes the two wall rows, so make_corridor(10, 2) at 0.4 m
    cells is 25x5 with 3 walkable rows.
    """
    length = _cells_along(length_m, cell_size, "corridor length")
    width = _cells_along(width_m, cell_size, "corridor width")
    cells = np.full((width, length), CellKind.FREE, dtype=np.int8)
    cells[[0, -1], :] = CellKind.WALL
    return Grid(cells, cell_size=cell_size, boundary=Boundary.PERIODIC_X)


def write_table(df: pl.DataFrame, destination: Path, float_digits: int = SECONDS_DIGITS) -> None:
    """Write a results table as CSV with fixed decimals and '\\n' line endings

    Parameters
    ----------
    df: pl.DataFrame
        The table; Float64 columns are rendered with float_digits decimals
    destination: Path
        Output file
    float_digits: int
        Fractional digits of every float column
    """
    text = df.write_csv(float_precision=float_digits, line_terminator="\n")
    try:
        Path(destination).write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise ResultsIOError(f"could not write results to {destination}: {e}")


def records_frame(records: list[RunRecord]) -> pl.DataFrame:
    data: dict[str, list] = {column: [] for column in RUN_COLUMNS}
    for record in records:
        row = asdict(record)
        row["scenario"] = row.pop("scenario_name")
        for column in RUN_COLUMNS:
            data[column].append(row[column])
    return pl.DataFrame(data, schema=RUN_SCHEMA)


def write_csv(records: list[RunRecord], destination: Path) -> None:
    """Write run records in the benchmark CSV schema

    Header scenario,agents_initial,v_max,cores,steps,wall_time_s,plan_time_s,
    move_time_s,seed; seconds carry 6 fractional digits; the file ends with
    exactly one newline.
    """
    write_table(records_frame(records), destination, SECONDS_DIGITS)


def read_csv(source: Path) -> list[RunRecord]:
    """Read run records written by write_csv"""
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as e:
        raise ResultsIOError(f"could not read results from {source}: {e}")
    header = text.split("\n", 1)[0].split(",")
    if header != RUN_COLUMNS:
        raise ResultsIOError(f"{source} does not have the run record header")
    df = pl.read_csv(text.encode("utf-8"), schema=RUN_SCHEMA)
    names = [f.name for f in fields(RunRecord)]
    return [
        RunRecord(**dict(zip(names, row)))
        for row in df.select(RUN_COLUMNS).iter_rows()
    ]
