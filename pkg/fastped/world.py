from fastped.errors import ScenarioError

from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
import math

from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
import numpy as np

SCENARIO_MAGIC = "FAST-SCENARIO v1"
DEFAULT_CELL_SIZE = 0.4  # m
UNREACHABLE = np.inf
SQRT2 = math.sqrt(2.0)

# Plain ints for use inside kernels
FREE_CELL = 0
WALL_CELL = 1
EXIT_CELL = 2


class CellKind(IntEnum):
    FREE = FREE_CELL
    WALL = WALL_CELL
    EXIT = EXIT_CELL


class Boundary(Enum):
    CLOSED = "closed"
    PERIODIC_X = "periodic-x"


CELL_CHARS: dict[str, CellKind] = {
    ".": CellKind.FREE,
    "#": CellKind.WALL,
    "E": CellKind.EXIT,
}
CHAR_OF_KIND: dict[int, str] = {int(kind): char for char, kind in CELL_CHARS.items()}

# Scenario text line (1-based) holding grid row 0
FIRST_ROW_LINE = 7

_NEIGHBOR_OFFSETS = [
    (dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)
]


def _boundary_violation(cells: np.ndarray, boundary: Boundary) -> tuple[int, str] | None:
    """Find the first row breaking the boundary rule, if any

    Returns
    -------
    tuple[int, str] | None
        (row index, description) of the first violation, or None
    """
    height, width = cells.shape
    if boundary is Boundary.PERIODIC_X:
        for row in (0, height - 1):
            if np.any(cells[row] != CellKind.WALL):
                return (row, "periodic-x requires the top and bottom rows to be Wall")
        return None
    for row in range(height):
        if row in (0, height - 1):
            border = cells[row]
        else:
            border = cells[row, [0, width - 1]]
        if np.any(border == CellKind.FREE):
            return (row, "closed boundary requires every border cell to be Wall or Exit")
    return None


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable scenario geometry

    Parameters
    ----------
    cells: np.ndarray
        (height, width) array of CellKind values; row 0 is the top row
    cell_size: float
        Edge length of a cell in meters
    boundary: Boundary
        Closed room or corridor wrapping in x

    Attributes
    ----------
    cells: np.ndarray
        Read-only int8 copy of the cell kinds
    cell_size: float
        Edge length of a cell in meters
    boundary: Boundary
        The boundary condition
    """

    cells: np.ndarray
    cell_size: float = DEFAULT_CELL_SIZE
    boundary: Boundary = Boundary.CLOSED

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int8, copy=True)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ScenarioError(f"grid must be a non-empty 2-D array, got shape {cells.shape}")
        if not np.all(np.isin(cells, list(CHAR_OF_KIND.keys()))):
            raise ScenarioError("grid holds values that are not cell kinds")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0.0):
            raise ScenarioError(f"cell_size must be > 0, got {self.cell_size}")
        violation = _boundary_violation(cells, self.boundary)
        if violation is not None:
            row, message = violation
            raise ScenarioError(f"row {row}: {message}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC_X

    def count(self, kind: CellKind) -> int:
        return int(np.count_nonzero(self.cells == kind))

    def free_cells(self) -> list[tuple[int, int]]:
        """Free cells as (x, y) in row-major order"""
        ys, xs = np.nonzero(self.cells == CellKind.FREE)
        return list(zip(xs.tolist(), ys.tolist()))

    def exit_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.cells == CellKind.EXIT)
        return list(zip(xs.tolist(), ys.tolist()))

    @property
    def free_area_m2(self) -> float:
        return self.count(CellKind.FREE) * self.cell_size**2

    def normalize(self, cell: tuple[int, int]) -> tuple[int, int]:
        """Wrap a cell into the grid, raising ValueError if it lies outside"""
        x, y = cell
        if self.periodic:
            x %= self.width
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ValueError(f"cell {cell} lies outside the {self.width}x{self.height} grid")
        return (x, y)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.cell_size == other.cell_size
            and self.boundary is other.boundary
            and np.array_equal(self.cells, other.cells)
        )


@dataclass(frozen=True, eq=False)
class StaticField:
    """Static floor field, one potential value per cell

    Parameters
    ----------
    S: np.ndarray
        (height, width) potential in cell units; UNREACHABLE (inf) on Wall and
        unreachable cells
    wrap_offset: float
        Potential added per +x wrap across a periodic seam. Zero for distance
        fields.
    """

    S: np.ndarray
    wrap_offset: float = 0.0

    def __post_init__(self):
        S = np.array(self.S, dtype=np.float64, copy=True)
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @property
    def reachable(self) -> np.ndarray:
        return np.isfinite(self.S)

    @classmethod
    def uniform_gradient(cls, grid: Grid, slope: float = 1.0) -> "StaticField":
        """Potential decreasing uniformly in +x

        S(x) = slope * (width - 1 - x) on non-Wall cells, continued across the
        periodic seam through wrap_offset = -slope * width.
        """
        xs = np.arange(grid.width, dtype=np.float64)
        S = np.broadcast_to(slope * (grid.width - 1 - xs), (grid.height, grid.width))
        S = np.where(grid.cells == CellKind.WALL, UNREACHABLE, S)
        return cls(S, wrap_offset=-slope * grid.width)


def _header_value(lines: list[str], index: int, key: str) -> str:
    line_number = index + 1
    if index >= len(lines):
        raise ScenarioError(f"malformed header: missing '{key}' line", line_number)
    parts = lines[index].split()
    if len(parts) != 2 or parts[0] != key:
        raise ScenarioError(
            f"malformed header: expected '{key} <value>', got {lines[index]!r}",
            line_number,
        )
    return parts[1]


def _header_int(lines: list[str], index: int, key: str) -> int:
    raw = _header_value(lines, index, key)
    try:
        value = int(raw)
    except ValueError:
        raise ScenarioError(f"malformed header: {key} {raw!r} is not an integer", index + 1)
    if value < 1:
        raise ScenarioError(f"malformed header: {key} must be >= 1, got {value}", index + 1)
    return value


def parse_scenario(text: str) -> Grid:
    """Parse scenario text in the FAST-SCENARIO v1 format

    Parameters
    ----------
    text: str
        Scenario file content

    Returns
    -------
    Grid
        The declared geometry

    Raises
    ------
    ScenarioError
        On a malformed header, a dimension mismatch, an unknown cell character
        or a boundary violation; the message names the offending line.
    """
    lines = text.splitlines()
    if len(lines) == 0 or lines[0].strip() != SCENARIO_MAGIC:
        raise ScenarioError(f"malformed header: first line must be '{SCENARIO_MAGIC}'", 1)
    width = _header_int(lines, 1, "width")
    height = _header_int(lines, 2, "height")

    raw_size = _header_value(lines, 3, "cell_size")
    try:
        cell_size = float(raw_size)
    except ValueError:
        raise ScenarioError(f"malformed header: cell_size {raw_size!r} is not a number", 4)
    if not (math.isfinite(cell_size) and cell_size > 0.0):
        raise ScenarioError(f"malformed header: cell_size must be > 0, got {raw_size}", 4)

    raw_boundary = _header_value(lines, 4, "boundary")
    try:
        boundary = Boundary(raw_boundary)
    except ValueError:
        raise ScenarioError(
            f"malformed header: boundary must be 'closed' or 'periodic-x', got {raw_boundary!r}",
            5,
        )
    if len(lines) < 6 or lines[5].strip() != "grid:":
        raise ScenarioError("malformed header: expected 'grid:'", 6)

    cells = np.empty((height, width), dtype=np.int8)
    for row in range(height):
        index = FIRST_ROW_LINE - 1 + row
        if index >= len(lines):
            raise ScenarioError(
                f"dimension mismatch: expected {height} grid rows, found {row}", index + 1
            )
        line = lines[index]
        if len(line) != width:
            raise ScenarioError(
                f"dimension mismatch: expected {width} cells, found {len(line)}", index + 1
            )
        for col, char in enumerate(line):
            kind = CELL_CHARS.get(char)
            if kind is None:
                raise ScenarioError(f"unknown cell character {char!r}", index + 1)
            cells[row, col] = kind
    for index in range(FIRST_ROW_LINE - 1 + height, len(lines)):
        if lines[index].strip() != "":
            raise ScenarioError(
                f"dimension mismatch: more than {height} grid rows", index + 1
            )

    violation = _boundary_violation(cells, boundary)
    if violation is not None:
        row, message = violation
        raise ScenarioError(message, FIRST_ROW_LINE + row)
    return Grid(cells, cell_size=cell_size, boundary=boundary)


def serialize_scenario(grid: Grid) -> str:
    """Render a Grid in the FAST-SCENARIO v1 format (inverse of parse_scenario)"""
    lines = [
        SCENARIO_MAGIC,
        f"width {grid.width}",
        f"height {grid.height}",
        f"cell_size {grid.cell_size!r}",
        f"boundary {grid.boundary.value}",
        "grid:",
    ]
    for row in grid.cells:
        lines.append("".join(CHAR_OF_KIND[int(kind)] for kind in row))
    return "\n".join(lines) + "\n"


def load_scenario(path: Path) -> Grid:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"could not read scenario {path}: {e}")
    try:
        return parse_scenario(text)
    except ScenarioError as e:
        raise ScenarioError(f"{path}: {e}") from e


def save_scenario(grid: Grid, path: Path) -> None:
    try:
        Path(path).write_text(serialize_scenario(grid), encoding="utf-8", newline="\n")
    except OSError as e:
        raise ScenarioError(f"could not write scenario {path}: {e}")


def compute_static_field(grid: Grid) -> StaticField:
    """Distance from every cell to the nearest exit

    Shortest paths over 8-connected moves with weight 1 (orthogonal) and
    sqrt(2) (diagonal). Paths never enter Wall cells and a diagonal move is
    forbidden when both orthogonal cells beside it are Wall. Wall and
    unreachable cells hold UNREACHABLE.

    Parameters
    ----------
    grid: Grid
        The scenario geometry

    Returns
    -------
    StaticField
        The distance field; all UNREACHABLE if the grid has no exits
    """
    height, width = grid.height, grid.width
    n_cells = height * width
    exits = np.flatnonzero(grid.cells.ravel() == CellKind.EXIT)
    if exits.size == 0:
        return StaticField(np.full((height, width), UNREACHABLE))

    passable = grid.cells != CellKind.WALL
    ys, xs = np.nonzero(passable)
    sources: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for dy, dx in _NEIGHBOR_OFFSETS:
        ny = ys + dy
        nx = xs + dx
        valid = (ny >= 0) & (ny < height)
        if grid.periodic:
            nx = nx % width
        else:
            valid &= (nx >= 0) & (nx < width)
        sy, sx, ty, tx = ys[valid], xs[valid], ny[valid], nx[valid]
        keep = passable[ty, tx]
        diagonal = dx != 0 and dy != 0
        if diagonal:
            # No corner cutting: one of the two orthogonal cells must be open
            keep &= passable[sy, tx] | passable[ty, sx]
        sources.append(sy[keep] * width + sx[keep])
        targets.append(ty[keep] * width + tx[keep])
        weights.append(np.full(np.count_nonzero(keep), SQRT2 if diagonal else 1.0))

    src = np.concatenate(sources)
    dst = np.concatenate(targets)
    wts = np.concatenate(weights)
    # Narrow periodic grids produce self loops and duplicate pairs; keep the
    # cheapest edge of each pair since csr_matrix would sum duplicates
    not_loop = src != dst
    src, dst, wts = src[not_loop], dst[not_loop], wts[not_loop]
    order = np.lexsort((wts, dst, src))
    src, dst, wts = src[order], dst[order], wts[order]
    first = np.ones(src.size, dtype=bool)
    first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    graph = csr_matrix((wts[first], (src[first], dst[first])), shape=(n_cells, n_cells))

    dist = dijkstra(graph, directed=True, indices=exits, min_only=True)
    S = dist.reshape(height, width)
    S[~passable] = UNREACHABLE
    return StaticField(S)


@njit(cache=True, nogil=True)
def wrap_dx(raw: int, width: int) -> int:
    """Shorter of the direct and wrapped x offsets; ties keep the direct one"""
    if raw > 0:
        alt = raw - width
    elif raw < 0:
        alt = raw + width
    else:
        return raw
    if abs(alt) < abs(raw):
        return alt
    return raw


@njit(cache=True, nogil=True)
def _is_wall(cells: np.ndarray, periodic: bool, x: int, y: int) -> bool:
    height, width = cells.shape
    if y < 0 or y >= height:
        return True
    if periodic:
        x = x % width
    elif x < 0 or x >= width:
        return True
    return cells[y, x] == WALL_CELL


@njit(cache=True, nogil=True)
def line_clear(cells: np.ndarray, periodic: bool, ax: int, ay: int, bx: int, by: int) -> bool:
    """Bresenham visibility test from (ax, ay) to (bx, by)

    Every cell after a up to and including b must be non-Wall, and a diagonal
    step may not squeeze between two Wall cells.
    """
    width = cells.shape[1]
    dx_total = bx - ax
    if periodic:
        dx_total = wrap_dx(dx_total, width)
    x1 = ax + dx_total
    y1 = by
    dx = abs(x1 - ax)
    dy = -abs(y1 - ay)
    sx = 1 if ax < x1 else -1
    sy = 1 if ay < y1 else -1
    err = dx + dy
    x = ax
    y = ay
    while x != x1 or y != y1:
        e2 = 2 * err
        nx = x
        ny = y
        if e2 >= dy:
            err += dy
            nx += sx
        if e2 <= dx:
            err += dx
            ny += sy
        if nx != x and ny != y:
            if _is_wall(cells, periodic, nx, y) and _is_wall(cells, periodic, x, ny):
                return False
        x = nx
        y = ny
        if _is_wall(cells, periodic, x, y):
            return False
    return True


def line_of_sight(grid: Grid, a: tuple[int, int], b: tuple[int, int]) -> bool:
    """Whether b is visible from a on the grid

    Parameters
    ----------
    grid: Grid
        The scenario geometry
    a: tuple[int, int]
        Start cell (x, y)
    b: tuple[int, int]
        End cell (x, y)

    Returns
    -------
    bool
        True if no Wall lies on the Bresenham line (a excluded, b included).
        Under periodic-x the shorter wrapped segment is traced.
    """
    ax, ay = grid.normalize(a)
    bx, by = grid.normalize(b)
    return bool(line_clear(grid.cells, grid.periodic, ax, ay, bx, by))
