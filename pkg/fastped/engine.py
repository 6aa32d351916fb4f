from fastped.agents import ORDER_CHANNEL, Agent, choose_for_agent, stream_u64
from fastped.config import ScheduleParams, SimParams
from fastped.errors import ConfigError, StateError
from fastped.ped_log import ped_debug
from fastped.world import (
    EXIT_CELL,
    WALL_CELL,
    CellKind,
    Grid,
    StaticField,
    compute_static_field,
    wrap_dx,
)

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import atexit
import functools
import hashlib
import itertools
import time

from numba import njit
import numpy as np

EMPTY = -1
MAX_BLOCKSIZE = 32767
_ORDER_CHANNEL = np.uint64(ORDER_CHANNEL)


@dataclass(eq=False)
class SimState:
    """The single mutable world of a simulation

    Agents are stored as parallel arrays indexed by agent id.

    Attributes
    ----------
    grid: Grid
        Scenario geometry
    field: StaticField
        Static floor field of the geometry
    v_max: int
        Maximum speed shared by all agents
    pos: np.ndarray
        (n, 2) int64 cells (x, y); exited agents keep their exit cell
    alive: np.ndarray
        (n,) bool
    occupancy: np.ndarray
        (height, width) int64 agent id per cell, EMPTY where free
    desired: np.ndarray
        (n, 2) int64 planned cells, valid between the two phases
    hops: np.ndarray
        (n,) int64 cells moved by each agent in the last step
    shift_x: np.ndarray
        (n,) int64 signed x cells moved by each agent in the last step
    step: int
        Number of completed steps
    """

    grid: Grid
    field: StaticField
    v_max: int
    pos: np.ndarray
    alive: np.ndarray
    occupancy: np.ndarray
    desired: np.ndarray
    hops: np.ndarray
    shift_x: np.ndarray
    step: int = 0

    @classmethod
    def from_roster(
        cls, grid: Grid, field: StaticField, roster: list[Agent], v_max: int | None = None
    ) -> "SimState":
        """Build a state from a roster of agents

        Parameters
        ----------
        grid: Grid
            Scenario geometry
        field: StaticField
            Its static field, same shape as the grid
        roster: list[Agent]
            Agents with ids 0..n-1 in order and one shared v_max
        v_max: int | None
            Speed to use for an empty roster (default 1)

        Returns
        -------
        SimState
            A consistent state at step 0
        """
        if field.S.shape != grid.cells.shape:
            raise StateError(
                f"field shape {field.S.shape} does not match grid shape {grid.cells.shape}"
            )
        speeds = {agent.v_max for agent in roster}
        if len(speeds) > 1:
            raise StateError(f"all agents must share one v_max, got {sorted(speeds)}")
        if roster:
            v_max = roster[0].v_max
        elif v_max is None:
            v_max = 1
        n = len(roster)
        pos = np.zeros((n, 2), dtype=np.int64)
        alive = np.zeros(n, dtype=bool)
        occupancy = np.full(grid.cells.shape, EMPTY, dtype=np.int64)
        for index, agent in enumerate(roster):
            if agent.id != index:
                raise StateError(f"agent ids must be dense from 0, found id {agent.id} at {index}")
            x, y = grid.normalize(agent.pos)
            pos[index] = (x, y)
            alive[index] = agent.alive
            if not agent.alive:
                continue
            if grid.cells[y, x] == CellKind.WALL:
                raise StateError(f"agent {agent.id} placed on Wall cell {(x, y)}")
            if occupancy[y, x] != EMPTY:
                raise StateError(
                    f"agents {occupancy[y, x]} and {agent.id} share cell {(x, y)}"
                )
            occupancy[y, x] = agent.id
        return cls(
            grid=grid,
            field=field,
            v_max=int(v_max),
            pos=pos,
            alive=alive,
            occupancy=occupancy,
            desired=pos.copy(),
            hops=np.zeros(n, dtype=np.int64),
            shift_x=np.zeros(n, dtype=np.int64),
        )

    @property
    def n_agents(self) -> int:
        return int(self.alive.size)

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    def agent(self, index: int) -> Agent:
        return Agent(
            id=index,
            pos=(int(self.pos[index, 0]), int(self.pos[index, 1])),
            v_max=self.v_max,
            alive=bool(self.alive[index]),
        )

    @property
    def agents(self) -> list[Agent]:
        return [self.agent(index) for index in range(self.n_agents)]

    def check_consistency(self) -> None:
        """Verify occupancy and positions agree and no cell holds two agents

        Raises
        ------
        StateError
            On the first inconsistency found
        """
        for index in np.flatnonzero(self.alive):
            x, y = int(self.pos[index, 0]), int(self.pos[index, 1])
            if self.grid.cells[y, x] == CellKind.WALL:
                raise StateError(f"alive agent {index} stands on Wall cell {(x, y)}")
            if self.occupancy[y, x] != index:
                raise StateError(
                    f"alive agent {index} at {(x, y)} but occupancy holds {self.occupancy[y, x]}"
                )
        ys, xs = np.nonzero(self.occupancy != EMPTY)
        for x, y in zip(xs.tolist(), ys.tolist()):
            holder = int(self.occupancy[y, x])
            if not (0 <= holder < self.n_agents) or not self.alive[holder]:
                raise StateError(f"cell {(x, y)} held by agent {holder} which is not alive")
            if (int(self.pos[holder, 0]), int(self.pos[holder, 1])) != (x, y):
                raise StateError(f"cell {(x, y)} held by agent {holder} standing elsewhere")
        if xs.size != self.n_alive:
            raise StateError(f"{xs.size} occupied cells for {self.n_alive} alive agents")

    def digest(self) -> str:
        """Hash of the step counter, positions and alive flags"""
        h = hashlib.blake2b(digest_size=16)
        h.update(np.int64(self.step).tobytes())
        h.update(np.ascontiguousarray(self.pos).tobytes())
        h.update(np.ascontiguousarray(self.alive).tobytes())
        return h.hexdigest()


@dataclass
class StepStats:
    """Outcome of one time step

    Attributes
    ----------
    alive: int
        Agents alive after the step
    exited: int
        Agents that left through an exit during the step
    displacement: int
        Sum over agents of cells moved during the step
    """

    alive: int = 0
    exited: int = 0
    displacement: int = 0


@dataclass
class RunStats:
    """Timing and outcome of a run

    Attributes
    ----------
    steps: int
        Steps executed
    wall_time_s: float
        Wall-clock seconds of the stepping loop
    plan_time_s: float
        Seconds spent in the planning phase
    move_time_s: float
        Seconds spent in the movement phase
    alive: int
        Agents alive at the end
    exited: int
        Agents exited over the whole run
    displacement: int
        Cells moved over the whole run
    """

    steps: int
    wall_time_s: float
    plan_time_s: float
    move_time_s: float
    alive: int
    exited: int
    displacement: int


def compute_blocksize(number_of_agents: int, cores: int) -> int:
    """Chunk size of the planning loop: max(min(n // cores, 32767), 1)"""
    if cores < 1:
        raise ConfigError(f"cores must be >= 1, got {cores}")
    if number_of_agents < 0:
        raise ConfigError(f"number_of_agents must be >= 0, got {number_of_agents}")
    return max(min(number_of_agents // cores, MAX_BLOCKSIZE), 1)


@njit(cache=True, nogil=True)
def _plan_chunk(
    cells: np.ndarray,
    S: np.ndarray,
    wrap_offset: float,
    periodic: bool,
    occupancy: np.ndarray,
    pos: np.ndarray,
    active: np.ndarray,
    start: int,
    stop: int,
    v_max: int,
    k_s: float,
    seed: np.uint64,
    step: np.uint64,
    desired: np.ndarray,
) -> None:
    size = (2 * v_max + 1) * (2 * v_max + 1)
    cand_x = np.empty(size, dtype=np.int64)
    cand_y = np.empty(size, dtype=np.int64)
    cand_s = np.empty(size, dtype=np.float64)
    weights = np.empty(size, dtype=np.float64)
    for j in range(start, stop):
        i = active[j]
        x, y = choose_for_agent(
            cells, S, wrap_offset, periodic, occupancy, pos[i, 0], pos[i, 1], v_max, i,
            k_s, seed, step, cand_x, cand_y, cand_s, weights,
        )
        desired[i, 0] = x
        desired[i, 1] = y


_EXECUTORS: dict[int, ThreadPoolExecutor] = {}


def _executor(cores: int) -> ThreadPoolExecutor:
    executor = _EXECUTORS.get(cores)
    if executor is None:
        executor = ThreadPoolExecutor(max_workers=cores, thread_name_prefix="fastped-plan")
        _EXECUTORS[cores] = executor
    return executor


@atexit.register
def shutdown_workers() -> None:
    for executor in _EXECUTORS.values():
        executor.shutdown(wait=True)
    _EXECUTORS.clear()


def plan_phase(state: SimState, params: SimParams, sched: ScheduleParams) -> None:
    """Fill the desired cell of every alive agent

    Alive agents are split into contiguous chunks of compute_blocksize agents
    which the workers claim one at a time from a shared counter. Planning only
    reads the world, so any number of workers give identical results.

    Parameters
    ----------
    state: SimState
        The world; only state.desired is written
    params: SimParams
        Supplies k_s and the seed
    sched: ScheduleParams
        Number of workers
    """
    active = np.flatnonzero(state.alive)
    n = int(active.size)
    if n == 0:
        return
    blocksize = compute_blocksize(n, sched.cores)
    grid = state.grid
    seed = np.uint64(params.seed)
    step = np.uint64(state.step)

    def plan(start: int) -> None:
        _plan_chunk(
            grid.cells, state.field.S, state.field.wrap_offset, grid.periodic,
            state.occupancy, state.pos, active, start, min(start + blocksize, n),
            state.v_max, params.k_s, seed, step, state.desired,
        )

    if sched.cores == 1:
        for start in range(0, n, blocksize):
            plan(start)
        return

    chunks = itertools.count()

    def drain() -> None:
        while True:
            start = next(chunks) * blocksize
            if start >= n:
                return
            plan(start)

    executor = _executor(sched.cores)
    futures = [executor.submit(drain) for _ in range(sched.cores)]
    for future in futures:
        future.result()


@njit(cache=True, nogil=True)
def _move_all(
    cells: np.ndarray,
    periodic: bool,
    occupancy: np.ndarray,
    pos: np.ndarray,
    alive: np.ndarray,
    desired: np.ndarray,
    v_max: int,
    seed: np.uint64,
    step: np.uint64,
    hops: np.ndarray,
    shift_x: np.ndarray,
    exited: np.ndarray,
) -> tuple[int, int]:
    width = cells.shape[1]
    n_agents = alive.shape[0]
    n_alive = 0
    for i in range(n_agents):
        hops[i] = 0
        shift_x[i] = 0
        if alive[i]:
            n_alive += 1
    order = np.empty(n_alive, dtype=np.int64)
    k = 0
    for i in range(n_agents):
        if alive[i]:
            order[k] = i
            k += 1

    # Fisher-Yates, draw k swaps position n_alive - 1 - k
    for k in range(n_alive - 1):
        top = n_alive - 1 - k
        r = stream_u64(seed, _ORDER_CHANNEL, step, np.uint64(k))
        j = np.int64(r % np.uint64(top + 1))
        tmp = order[top]
        order[top] = order[j]
        order[j] = tmp

    n_exited = 0
    total = 0
    for t in range(n_alive):
        a = order[t]
        x0 = pos[a, 0]
        y0 = pos[a, 1]
        d = desired[a, 0] - x0
        if periodic:
            d = wrap_dx(d, width)
        x1 = x0 + d
        y1 = desired[a, 1]
        dx = abs(d)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        x = x0
        y = y0
        moved = 0
        while (x != x1 or y != y1) and moved < v_max:
            e2 = 2 * err
            nx = x
            ny = y
            if e2 >= dy:
                err += dy
                nx += sx
            if e2 <= dx:
                err += dx
                ny += sy
            cx = nx % width if periodic else nx
            kind = cells[ny, cx]
            if kind == WALL_CELL or occupancy[ny, cx] >= 0:
                break
            occupancy[pos[a, 1], pos[a, 0]] = -1
            moved += 1
            shift_x[a] += nx - x
            x = nx
            y = ny
            pos[a, 0] = cx
            pos[a, 1] = ny
            if kind == EXIT_CELL:
                alive[a] = False
                exited[n_exited] = a
                n_exited += 1
                break
            occupancy[ny, cx] = a
        hops[a] = moved
        total += moved
    return n_exited, total


def _move(state: SimState, params: SimParams) -> tuple[list[int], int]:
    exited = np.empty(state.n_agents, dtype=np.int64)
    n_exited, displacement = _move_all(
        state.grid.cells, state.grid.periodic, state.occupancy, state.pos, state.alive,
        state.desired, state.v_max, np.uint64(params.seed), np.uint64(state.step),
        state.hops, state.shift_x, exited,
    )
    return exited[:n_exited].tolist(), int(displacement)


def move_phase(state: SimState, params: SimParams) -> list[int]:
    """Carry out the planned moves one agent at a time

    Agents move in a seeded random order. Each walks the Bresenham path
    towards its desired cell, at most v_max cells, stopping before a Wall or
    an occupied cell. Stepping onto an Exit removes the agent. Occupancy is
    updated after every single-cell hop. Only integer arithmetic and
    comparisons are used.

    Parameters
    ----------
    state: SimState
        The world, with desired cells filled by plan_phase
    params: SimParams
        Supplies the seed of the movement order

    Returns
    -------
    list[int]
        Ids of agents that exited, in movement order
    """
    exited, _ = _move(state, params)
    return exited


def _check_speed(state: SimState, params: SimParams) -> None:
    if state.n_agents > 0 and params.v_max != state.v_max:
        raise ConfigError(
            f"params.v_max = {params.v_max} but the agents have v_max = {state.v_max}"
        )


def _timed_step(
    state: SimState, params: SimParams, sched: ScheduleParams
) -> tuple[StepStats, float, float]:
    t0 = time.perf_counter()
    plan_phase(state, params, sched)
    t1 = time.perf_counter()
    exited, displacement = _move(state, params)
    t2 = time.perf_counter()
    state.step += 1
    stats = StepStats(alive=state.n_alive, exited=len(exited), displacement=displacement)
    return stats, t1 - t0, t2 - t1


def step(state: SimState, params: SimParams, sched: ScheduleParams) -> StepStats:
    """Advance the world by one time step: plan, move, count"""
    _check_speed(state, params)
    stats, _, _ = _timed_step(state, params, sched)
    return stats


def _stepping_loop(
    state: SimState, params: SimParams, sched: ScheduleParams, until_empty: bool
) -> RunStats:
    if params.steps < 1:
        raise ConfigError(f"steps must be >= 1, got {params.steps}")
    _check_speed(state, params)
    plan_time = 0.0
    move_time = 0.0
    exited = 0
    displacement = 0
    steps = 0
    start = time.perf_counter()
    while steps < params.steps and not (until_empty and state.n_alive == 0):
        stats, t_plan, t_move = _timed_step(state, params, sched)
        steps += 1
        plan_time += t_plan
        move_time += t_move
        exited += stats.exited
        displacement += stats.displacement
        ped_debug(__name__, f"step {state.step}: {stats.alive} alive, {stats.exited} exited")
    wall_time = time.perf_counter() - start
    return RunStats(
        steps=steps,
        wall_time_s=wall_time,
        plan_time_s=plan_time,
        move_time_s=move_time,
        alive=state.n_alive,
        exited=exited,
        displacement=displacement,
    )


def run(state: SimState, params: SimParams, sched: ScheduleParams) -> RunStats:
    """Execute params.steps steps and time the stepping loop

    Parameters
    ----------
    state: SimState
        The world, advanced in place
    params: SimParams
        Model parameters and run length
    sched: ScheduleParams
        Number of planning workers

    Returns
    -------
    RunStats
        Wall time of the loop, its split into phases, and the outcome
    """
    return _stepping_loop(state, params, sched, until_empty=False)


def run_until_empty(state: SimState, params: SimParams, sched: ScheduleParams) -> RunStats:
    """Step until every agent has exited, at most params.steps steps

    RunStats.steps is the number of steps executed; RunStats.alive is 0 only
    if the world drained within the bound.
    """
    return _stepping_loop(state, params, sched, until_empty=True)


@functools.cache
def warm_up() -> None:
    """Compile every kernel once so timed regions exclude JIT compilation"""
    cells = np.full((5, 6), CellKind.FREE, dtype=np.int8)
    cells[[0, -1], :] = CellKind.WALL
    cells[:, [0, -1]] = CellKind.WALL
    cells[2, -1] = CellKind.EXIT
    room = Grid(cells)
    field = compute_static_field(room)
    roster = [Agent(0, (1, 1), 2), Agent(1, (2, 3), 2)]
    params = SimParams(v_max=2, steps=1)
    for cores in (1, 2):
        state = SimState.from_roster(room, field, roster)
        run(state, params, ScheduleParams(cores=cores))
