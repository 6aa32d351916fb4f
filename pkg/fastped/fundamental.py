from fastped.config import ScheduleParams, SimParams
from fastped.engine import SimState, step, warm_up
from fastped.errors import CapacityError, FundamentalDiagramError
from fastped.ped_log import ped_info
from fastped.scenario_io import spawn_agents
from fastped.world import CellKind, Grid, StaticField

from dataclasses import dataclass
import math

import lmfit
import numpy as np
import polars as pl

# Kladek form of the Weidmann curve
WEIDMANN_V_FREE = 1.34  # m/s
WEIDMANN_GAMMA = 1.913  # 1/m^2
WEIDMANN_RHO_MAX = 5.4  # 1/m^2


@dataclass
class FdRecord:
    """One point of a fundamental diagram

    Attributes
    ----------
    density: float
        Realized density in persons per square meter
    mean_speed: float
        Mean speed along the corridor in m/s
    flow: float
        Specific flow density * mean_speed in persons per meter per second
    agents: int
        Agents in the corridor
    """

    density: float
    mean_speed: float
    flow: float
    agents: int


@dataclass
class WeidmannRow:
    density: float
    model_speed: float
    reference_speed: float
    abs_error: float


@dataclass
class WeidmannFit:
    """Weidmann parameters fitted to a simulated fundamental diagram

    Attributes
    ----------
    v_f: float
        Free walking speed in m/s
    gamma: float
        Shape parameter in 1/m^2
    rho_max: float
        Jam density in 1/m^2 (held fixed)
    chisqr: float
        Sum of squared residuals
    """

    v_f: float
    gamma: float
    rho_max: float
    chisqr: float


def weidmann_speed(
    rho: float | np.ndarray,
    v_f: float = WEIDMANN_V_FREE,
    gamma: float = WEIDMANN_GAMMA,
    rho_max: float = WEIDMANN_RHO_MAX,
) -> float | np.ndarray:
    """Walking speed at density rho: v_f * (1 - exp(-gamma * (1/rho - 1/rho_max)))

    Zero at and above rho_max, v_f in the limit rho -> 0.
    """
    rho_arr = np.asarray(rho, dtype=np.float64)
    with np.errstate(divide="ignore"):
        inverse = np.where(rho_arr > 0.0, 1.0 / rho_arr, np.inf)
    speed = v_f * (1.0 - np.exp(-gamma * (inverse - 1.0 / rho_max)))
    speed = np.where(rho_arr >= rho_max, 0.0, speed)
    if speed.ndim == 0:
        return float(speed)
    return speed


def agents_for_density(corridor: Grid, density: float) -> int:
    return int(round(density * corridor.free_area_m2))


def fundamental_diagram(
    corridor: Grid,
    v_max: int,
    densities: list[float],
    seed: int = 0,
    warmup: int = 100,
    measure: int = 296,
    gradient: float = 4.0,
    k_s: float = 1.2,
    cores: int = 1,
    dt: float = 1.0,
) -> list[FdRecord]:
    """Measure mean speed and flow against density on a periodic corridor

    The corridor's field is replaced by a potential falling uniformly in +x
    so agents stream along it. For every density the corridor is filled,
    run for warmup steps, and the x-displacement of all agents is averaged
    over the following measure steps.

    The default slope of 4 per cell makes a lone agent walk at about
    1.6 m/s with v_max = 4 and k_s = 1.2; a unit slope gives only about
    1.43 m/s, because the weaker drive leaves more probability on the
    nearer columns.

    Parameters
    ----------
    corridor: Grid
        Periodic-x grid without exits
    v_max: int
        Maximum speed in cells per step
    densities: list[float]
        Requested densities in persons per square meter
    seed: int
        Seed of placement and dynamics
    warmup: int
        Steps before measuring
    measure: int
        Steps measured
    gradient: float
        Slope of the driving potential per cell
    k_s: float
        Coupling of the driving potential
    cores: int
        Planning workers
    dt: float
        Seconds per step

    Returns
    -------
    list[FdRecord]
        One record per requested density
    """
    if not corridor.periodic:
        raise FundamentalDiagramError("the fundamental diagram needs a periodic-x corridor")
    if corridor.count(CellKind.EXIT) > 0:
        raise FundamentalDiagramError("the fundamental diagram corridor must not have exits")
    if measure < 1:
        raise FundamentalDiagramError(f"measure must be >= 1 step, got {measure}")
    if not gradient > 0.0:
        raise FundamentalDiagramError(f"gradient must be > 0, got {gradient}")
    max_density = 1.0 / corridor.cell_size**2
    for density in densities:
        if density * corridor.cell_size**2 > 1.0 + 1e-12:
            raise CapacityError(
                f"density {density} /m^2 exceeds one agent per cell ({max_density:.4g} /m^2)"
            )

    field = StaticField.uniform_gradient(corridor, gradient)
    params = SimParams(v_max=v_max, k_s=k_s, seed=seed, steps=warmup + measure, dt=dt)
    sched = ScheduleParams(cores=cores)
    area = corridor.free_area_m2
    warm_up()
    records: list[FdRecord] = []
    for density in densities:
        n = agents_for_density(corridor, density)
        roster = spawn_agents(corridor, n, v_max, seed)
        state = SimState.from_roster(corridor, field, roster, v_max)
        for _ in range(warmup):
            step(state, params, sched)
        shift = 0
        for _ in range(measure):
            step(state, params, sched)
            shift += int(state.shift_x.sum())
        mean_cells = shift / (n * measure) if n > 0 else 0.0
        mean_speed = mean_cells * corridor.cell_size / dt
        realized = n / area
        records.append(FdRecord(realized, mean_speed, realized * mean_speed, n))
        ped_info(
            __name__,
            f"density {realized:.3f} /m^2 ({n} agents): {mean_speed:.3f} m/s",
        )
    return records


def compare_weidmann(fd: list[FdRecord]) -> list[WeidmannRow]:
    """Set the simulated speeds against the Weidmann reference curve"""
    rows = []
    for record in fd:
        reference = float(weidmann_speed(record.density))
        rows.append(
            WeidmannRow(
                density=record.density,
                model_speed=record.mean_speed,
                reference_speed=reference,
                abs_error=abs(record.mean_speed - reference),
            )
        )
    return rows


def mean_abs_error(rows: list[WeidmannRow], lo: float = 0.5, hi: float = 3.0) -> float:
    """Mean |model - reference| speed over densities in [lo, hi]; nan if none"""
    # Realized densities carry float noise from the cell area
    errors = [row.abs_error for row in rows if lo - 1e-9 <= row.density <= hi + 1e-9]
    if len(errors) == 0:
        return math.nan
    return float(np.mean(errors))


def fit_weidmann(fd: list[FdRecord]) -> WeidmannFit:
    """Least-squares fit of the Weidmann curve to a simulated diagram

    rho_max stays at its reference value; v_f and gamma are fitted.
    """
    points = [r for r in fd if 0.0 < r.density < WEIDMANN_RHO_MAX]
    if len(points) < 2:
        raise FundamentalDiagramError(
            f"fitting needs at least 2 densities in (0, {WEIDMANN_RHO_MAX}), got {len(points)}"
        )
    rho = np.array([r.density for r in points])
    speed = np.array([r.mean_speed for r in points])
    model = lmfit.Model(weidmann_speed, independent_vars=["rho"])
    params = model.make_params(
        v_f=WEIDMANN_V_FREE, gamma=WEIDMANN_GAMMA, rho_max=WEIDMANN_RHO_MAX
    )
    params["rho_max"].set(vary=False)
    params["v_f"].set(min=0.0)
    params["gamma"].set(min=1e-6)
    result = model.fit(speed, params, rho=rho)
    return WeidmannFit(
        v_f=float(result.params["v_f"].value),
        gamma=float(result.params["gamma"].value),
        rho_max=float(result.params["rho_max"].value),
        chisqr=float(result.chisqr),
    )


def fd_frame(rows: list[WeidmannRow], fd: list[FdRecord]) -> pl.DataFrame:
    return pl.DataFrame(
        {
            "density": [r.density for r in fd],
            "agents": [r.agents for r in fd],
            "mean_speed": [r.mean_speed for r in fd],
            "flow": [r.flow for r in fd],
            "reference_speed": [r.reference_speed for r in rows],
            "abs_error": [r.abs_error for r in rows],
        },
        schema={
            "density": pl.Float64,
            "agents": pl.Int64,
            "mean_speed": pl.Float64,
            "flow": pl.Float64,
            "reference_speed": pl.Float64,
            "abs_error": pl.Float64,
        },
    )
