from fastped.config import ScheduleParams, SimParams, SweepSpec
from fastped.engine import SimState, run, run_until_empty, warm_up
from fastped.errors import BaselineError, CapacityError, ConfigError, EquivalenceError, ScenarioError
from fastped.ped_log import ped_debug, ped_info, ped_warn
from fastped.scenario_io import RunRecord, spawn_agents
from fastped.world import CellKind, Grid, StaticField, compute_static_field

from dataclasses import dataclass
from typing import Callable
import math

import polars as pl

REALTIME_START = 1000
# Absorbs float noise in the interpolated capacity before flooring
FLOOR_TOLERANCE = 1e-6


@dataclass
class RealtimeResult:
    """Outcome of the real-time capacity search

    Attributes
    ----------
    capacity: int
        Largest agent count simulated within the budget; 0 if even the
        starting count exceeded it
    budget_s: float
        Wall-clock budget (simulated seconds of the run)
    n_lo: int
        Largest measured count within budget (0 if none)
    t_lo: float
        Its wall time
    n_hi: int | None
        Smallest measured count over budget, None if never exceeded
    t_hi: float | None
        Its wall time
    capped: bool
        True if the scenario ran out of free cells before the budget was
        exceeded, so capacity is a lower bound
    """

    capacity: int
    budget_s: float
    n_lo: int
    t_lo: float
    n_hi: int | None
    t_hi: float | None
    capped: bool = False

    @property
    def below_start(self) -> bool:
        return self.n_lo == 0


def measure_run(
    grid: Grid,
    field: StaticField,
    scenario_name: str,
    agents: int,
    v_max: int,
    cores: int,
    steps: int,
    seed: int,
    k_s: float = 1.2,
) -> tuple[RunRecord, str]:
    """Spawn agents, run the simulation and record its timing

    Returns
    -------
    tuple[RunRecord, str]
        The measurement and the digest of the final state
    """
    roster = spawn_agents(grid, agents, v_max, seed)
    state = SimState.from_roster(grid, field, roster, v_max)
    params = SimParams(v_max=v_max, k_s=k_s, seed=seed, steps=steps)
    stats = run(state, params, ScheduleParams(cores=cores))
    record = RunRecord(
        scenario_name=scenario_name,
        agents_initial=agents,
        v_max=v_max,
        cores=cores,
        steps=steps,
        wall_time_s=stats.wall_time_s,
        plan_time_s=stats.plan_time_s,
        move_time_s=stats.move_time_s,
        seed=seed,
    )
    return record, state.digest()


def check_capacity(grid: Grid, agents: int) -> None:
    free = grid.count(CellKind.FREE)
    if agents > free:
        raise CapacityError(
            f"requested {agents} agents but the scenario has only {free} free cells"
        )


def run_sweep(
    spec: SweepSpec,
    grid: Grid,
    seed: int,
    scenario_name: str = "scenario",
    field: StaticField | None = None,
    k_s: float = 1.2,
) -> list[RunRecord]:
    """Measure every (agents, v_max, cores) combination of a sweep

    Each combination is run spec.repetitions times with the same seed and the
    fastest run is kept. The final state of every run must be the same for
    all worker counts of an (agents, v_max) group.

    Parameters
    ----------
    spec: SweepSpec
        The measurement grid
    grid: Grid
        Scenario geometry
    seed: int
        Seed shared by all runs
    scenario_name: str
        Name written to the records
    field: StaticField | None
        Precomputed field, computed from the grid if None
    k_s: float
        Static field coupling

    Returns
    -------
    list[RunRecord]
        One record per combination, ordered by agents, v_max, cores
    """
    check_capacity(grid, max(spec.agents_list))
    if field is None:
        field = compute_static_field(grid)
    warm_up()
    records: list[RunRecord] = []
    for agents in spec.agents_list:
        for v_max in spec.vmax_list:
            digests: dict[int, set[str]] = {}
            for cores in spec.cores_list:
                best: RunRecord | None = None
                for _ in range(spec.repetitions):
                    record, digest = measure_run(
                        grid, field, scenario_name, agents, v_max, cores, spec.steps, seed, k_s
                    )
                    digests.setdefault(cores, set()).add(digest)
                    ped_debug(
                        __name__,
                        f"agents={agents} v_max={v_max} cores={cores}: {record.wall_time_s:.3f} s, final state {digest}",
                    )
                    if best is None or record.wall_time_s < best.wall_time_s:
                        best = record
                assert best is not None
                records.append(best)
                ped_info(
                    __name__,
                    f"agents={agents} v_max={v_max} cores={cores}: "
                    f"{best.wall_time_s:.3f} s (plan {best.plan_time_s:.3f} s, move {best.move_time_s:.3f} s)",
                )
            distinct = set().union(*digests.values())
            if len(distinct) != 1:
                raise EquivalenceError(
                    f"final states differ across worker counts for agents={agents}, v_max={v_max}: "
                    + ", ".join(f"cores={c}: {sorted(d)}" for c, d in digests.items())
                )
    return records


def speed_factor(records: list[RunRecord]) -> dict[tuple[int, int], dict[int, float]]:
    """Speed factor wall_time(1 core) / wall_time(cores) per (agents, v_max)

    Parameters
    ----------
    records: list[RunRecord]
        Measurements; the fastest record per (agents, v_max, cores) is used

    Returns
    -------
    dict[tuple[int, int], dict[int, float]]
        For each (agents, v_max) group, the factor of every worker count
    """
    fastest: dict[tuple[int, int], dict[int, float]] = {}
    for record in records:
        group = fastest.setdefault((record.agents_initial, record.v_max), {})
        wall = group.get(record.cores)
        if wall is None or record.wall_time_s < wall:
            group[record.cores] = record.wall_time_s

    factors: dict[tuple[int, int], dict[int, float]] = {}
    for (agents, v_max), walls in sorted(fastest.items()):
        if 1 not in walls:
            raise BaselineError(f"no 1-core record for agents={agents}, v_max={v_max}")
        baseline = walls[1]
        factors[(agents, v_max)] = {
            cores: (1.0 if cores == 1 else (baseline / wall if wall > 0.0 else math.inf))
            for cores, wall in sorted(walls.items())
        }
    return factors


def factors_frame(factors: dict[tuple[int, int], dict[int, float]]) -> pl.DataFrame:
    data: dict[str, list] = {"agents": [], "v_max": [], "cores": [], "factor": []}
    for (agents, v_max), by_cores in factors.items():
        for cores, factor in by_cores.items():
            data["agents"].append(agents)
            data["v_max"].append(v_max)
            data["cores"].append(cores)
            data["factor"].append(factor)
    return pl.DataFrame(
        data,
        schema={"agents": pl.Int64, "v_max": pl.Int64, "cores": pl.Int64, "factor": pl.Float64},
    )


def realtime_capacity(
    measure: Callable[[int], float],
    budget_s: float,
    start: int = REALTIME_START,
    max_agents: int | None = None,
) -> RealtimeResult:
    """Largest agent count whose run fits in the wall-clock budget

    The count doubles from start until a measured wall time exceeds the
    budget; the capacity is then interpolated linearly between the last two
    measurements and rounded down.

    Parameters
    ----------
    measure: Callable[[int], float]
        Wall time in seconds of a run with the given agent count
    budget_s: float
        Wall-clock budget, normally steps * dt
    start: int
        First agent count measured
    max_agents: int | None
        Largest count the scenario can hold

    Returns
    -------
    RealtimeResult
        The capacity and the bracketing measurements
    """
    if not budget_s > 0.0:
        raise ConfigError(f"budget must be > 0, got {budget_s}")
    if start < 1:
        raise ConfigError(f"start must be >= 1, got {start}")
    if max_agents is not None and start > max_agents:
        raise CapacityError(
            f"the search starts at {start} agents but the scenario holds only {max_agents}"
        )
    t = measure(start)
    if t > budget_s:
        return RealtimeResult(0, budget_s, 0, 0.0, start, t)

    n_lo, t_lo = start, t
    while True:
        n = 2 * n_lo
        if max_agents is not None and n > max_agents:
            if n_lo == max_agents:
                return RealtimeResult(n_lo, budget_s, n_lo, t_lo, None, None, capped=True)
            n = max_agents
        t = measure(n)
        if t > budget_s:
            break
        n_lo, t_lo = n, t

    estimate = n_lo + (budget_s - t_lo) * (n - n_lo) / (t - t_lo)
    capacity = min(max(math.floor(estimate + FLOOR_TOLERANCE), n_lo), n - 1)
    return RealtimeResult(capacity, budget_s, n_lo, t_lo, n, t)


def timing_from_scenario(
    grid: Grid,
    field: StaticField,
    v_max: int,
    cores: int,
    steps: int,
    seed: int,
    k_s: float = 1.2,
) -> Callable[[int], float]:
    """A measure(N) function that times a real run of N agents"""

    def measure(agents: int) -> float:
        record, _ = measure_run(grid, field, "realtime", agents, v_max, cores, steps, seed, k_s)
        ped_info(__name__, f"{agents} agents: {record.wall_time_s:.3f} s")
        return record.wall_time_s

    return measure


def measure_realtime(
    grid: Grid,
    v_max: int,
    cores: int,
    seed: int,
    steps: int = 396,
    dt: float = 1.0,
    k_s: float = 1.2,
    start: int = REALTIME_START,
) -> RealtimeResult:
    """Real-time capacity of a scenario: budget = steps * dt seconds"""
    field = compute_static_field(grid)
    warm_up()
    measure = timing_from_scenario(grid, field, v_max, cores, steps, seed, k_s)
    result = realtime_capacity(measure, steps * dt, start, grid.count(CellKind.FREE))
    if result.below_start:
        ped_warn(
            __name__,
            f"capacity below {start} agents: {result.t_hi:.3f} s exceeds the {result.budget_s} s budget",
        )
    elif result.capped:
        ped_warn(
            __name__,
            f"scenario full at {result.capacity} agents ({result.t_lo:.3f} s), capacity is a lower bound",
        )
    else:
        ped_info(
            __name__,
            f"real-time capacity {result.capacity} agents "
            f"(bracket {result.n_lo}: {result.t_lo:.3f} s, {result.n_hi}: {result.t_hi:.3f} s)",
        )
    return result


def realtime_frame(result: RealtimeResult, scenario_name: str, v_max: int, cores: int, steps: int) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "scenario": [scenario_name],
            "v_max": [v_max],
            "cores": [cores],
            "steps": [steps],
            "budget_s": [float(result.budget_s)],
            "capacity": [result.capacity],
            "n_lo": [result.n_lo],
            "t_lo": [float(result.t_lo)],
            "n_hi": [result.n_hi],
            "t_hi": [result.t_hi],
            "capped": [result.capped],
        },
        schema={
            "scenario": pl.String,
            "v_max": pl.Int64,
            "cores": pl.Int64,
            "steps": pl.Int64,
            "budget_s": pl.Float64,
            "capacity": pl.Int64,
            "n_lo": pl.Int64,
            "t_lo": pl.Float64,
            "n_hi": pl.Int64,
            "t_hi": pl.Float64,
            "capped": pl.Boolean,
        },
    )


@dataclass
class EvacuationResult:
    """Outcome of a drain run

    Attributes
    ----------
    scenario_name: str
        Scenario the agents evacuated from
    agents_initial: int
        Agents spawned
    v_max: int
        Maximum speed in cells per step
    cores: int
        Planning workers
    steps: int
        Steps until the last agent exited, or the step bound if some remain
    remaining: int
        Agents still inside when the run stopped
    wall_time_s: float
        Wall-clock seconds of the stepping loop
    simulated_s: float
        steps * dt
    seed: int
        Seed of placement and dynamics
    """

    scenario_name: str
    agents_initial: int
    v_max: int
    cores: int
    steps: int
    remaining: int
    wall_time_s: float
    simulated_s: float
    seed: int

    @property
    def evacuated(self) -> bool:
        return self.remaining == 0

    @property
    def realtime_fraction(self) -> float:
        """Wall time as a fraction of the simulated evacuation time"""
        return self.wall_time_s / self.simulated_s if self.simulated_s > 0.0 else 0.0


def measure_evacuation(
    grid: Grid,
    agents: int,
    v_max: int,
    cores: int,
    seed: int,
    max_steps: int = 10_000,
    dt: float = 1.0,
    k_s: float = 1.2,
    scenario_name: str = "scenario",
    field: StaticField | None = None,
) -> EvacuationResult:
    """Time how long a crowd takes to leave a scenario through its exits

    Parameters
    ----------
    grid: Grid
        Scenario with at least one Exit
    agents: int
        Agents spawned on free cells
    v_max: int
        Maximum speed in cells per step
    cores: int
        Planning workers
    seed: int
        Seed of placement and dynamics
    max_steps: int
        Bound on the run for crowds that cannot reach an exit
    dt: float
        Simulated seconds per step
    k_s: float
        Static field coupling
    scenario_name: str
        Name written to the result
    field: StaticField | None
        Precomputed field, computed from the grid if None

    Returns
    -------
    EvacuationResult
        Evacuation steps and wall time of the drain
    """
    if grid.count(CellKind.EXIT) == 0:
        raise ScenarioError("drain runs need a scenario with at least one exit")
    check_capacity(grid, agents)
    if field is None:
        field = compute_static_field(grid)
    warm_up()
    roster = spawn_agents(grid, agents, v_max, seed)
    state = SimState.from_roster(grid, field, roster, v_max)
    params = SimParams(v_max=v_max, k_s=k_s, seed=seed, steps=max_steps, dt=dt)
    stats = run_until_empty(state, params, ScheduleParams(cores=cores))
    result = EvacuationResult(
        scenario_name=scenario_name,
        agents_initial=agents,
        v_max=v_max,
        cores=cores,
        steps=stats.steps,
        remaining=stats.alive,
        wall_time_s=stats.wall_time_s,
        simulated_s=stats.steps * dt,
        seed=seed,
    )
    if result.evacuated:
        ped_info(
            __name__,
            f"{agents} agents evacuated in {result.steps} steps ({result.simulated_s:.1f} s simulated), "
            f"wall time {result.wall_time_s:.3f} s = {100.0 * result.realtime_fraction:.1f}% of real time",
        )
    else:
        ped_warn(
            __name__,
            f"{result.remaining} of {agents} agents still inside after {max_steps} steps",
        )
    return result


def evacuation_frame(results: list[EvacuationResult]) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "scenario": [r.scenario_name for r in results],
            "agents": [r.agents_initial for r in results],
            "v_max": [r.v_max for r in results],
            "cores": [r.cores for r in results],
            "steps": [r.steps for r in results],
            "remaining": [r.remaining for r in results],
            "wall_time_s": [r.wall_time_s for r in results],
            "simulated_s": [r.simulated_s for r in results],
            "realtime_fraction": [r.realtime_fraction for r in results],
            "seed": [r.seed for r in results],
        },
        schema={
            "scenario": pl.String,
            "agents": pl.Int64,
            "v_max": pl.Int64,
            "cores": pl.Int64,
            "steps": pl.Int64,
            "remaining": pl.Int64,
            "wall_time_s": pl.Float64,
            "simulated_s": pl.Float64,
            "realtime_fraction": pl.Float64,
            "seed": pl.UInt64,
        },
    )
