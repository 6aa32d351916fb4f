from fastped.bench import (
    check_capacity,
    evacuation_frame,
    factors_frame,
    measure_evacuation,
    measure_run,
    measure_realtime,
    realtime_frame,
    run_sweep,
    speed_factor,
)
from fastped.config import SweepSpec
from fastped.engine import warm_up
from fastped.errors import FastPedError
from fastped.fundamental import (
    compare_weidmann,
    fd_frame,
    fundamental_diagram,
    mean_abs_error,
)
from fastped.ped_log import init_ped_logger, ped_error, ped_info
from fastped.scenario_io import (
    make_corridor,
    make_plaza,
    read_csv,
    write_csv,
    write_table,
)
from fastped.world import DEFAULT_CELL_SIZE, compute_static_field, load_scenario, save_scenario

from pathlib import Path
import functools

import click


class CommaList(click.ParamType):
    """Comma separated list of numbers, e.g. 1,2,4,8"""

    name = "list"

    def __init__(self, item_type: type):
        self.item_type = item_type

    def convert(self, value, param, ctx):
        if isinstance(value, list):
            return value
        try:
            items = [self.item_type(v) for v in str(value).split(",") if v.strip() != ""]
        except ValueError:
            self.fail(f"{value!r} is not a comma separated list of {self.item_type.__name__}", param, ctx)
        if len(items) == 0:
            self.fail("list must not be empty", param, ctx)
        return items


def diagnose(command):
    """Turn library errors into a one-line diagnostic and exit code 1"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except FastPedError as e:
            ped_error(__name__, str(e))
            raise click.ClickException(str(e))

    return wrapper


scenario_option = click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Scenario file in the FAST-SCENARIO v1 format",
)
out_option = click.option(
    "--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True
)


@click.group()
@click.option("--log-file", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--verbose", is_flag=True, help="Log debug records")
def main(log_file: Path | None, verbose: bool):
    """Pedestrian simulation with parallel planning and sequential movement."""
    init_ped_logger(log_file, verbose)


@main.command()
@scenario_option
@click.option("--agents", type=int, required=True)
@click.option("--vmax", type=click.IntRange(1, 5), default=4, show_default=True)
@click.option("--cores", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=396, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@out_option
@diagnose
def run(scenario_path: Path, agents: int, vmax: int, cores: int, steps: int, seed: int, out_path: Path):
    """Time one simulation run."""
    grid = load_scenario(scenario_path)
    check_capacity(grid, agents)
    field = compute_static_field(grid)
    warm_up()
    record, digest = measure_run(
        grid, field, scenario_path.stem, agents, vmax, cores, steps, seed
    )
    write_csv([record], out_path)
    ped_info(__name__, f"{record.wall_time_s:.3f} s for {steps} steps, final state {digest}")


@main.command()
@scenario_option
@click.option("--cores", type=CommaList(int), default="1", show_default=True)
@click.option("--agents", type=CommaList(int), required=True)
@click.option("--vmax", type=CommaList(int), default="4", show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--steps", type=click.IntRange(min=1), default=396, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@out_option
@diagnose
def sweep(
    scenario_path: Path,
    cores: list[int],
    agents: list[int],
    vmax: list[int],
    reps: int,
    steps: int,
    seed: int,
    out_path: Path,
):
    """Time every combination of cores, agents and maximum speed."""
    spec = SweepSpec(
        cores_list=cores, agents_list=agents, vmax_list=vmax, steps=steps, repetitions=reps
    )
    grid = load_scenario(scenario_path)
    records = run_sweep(spec, grid, seed, scenario_path.stem)
    write_csv(records, out_path)


@main.command()
@scenario_option
@click.option("--vmax", type=click.IntRange(1, 5), default=4, show_default=True)
@click.option("--cores", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--budget-steps", type=click.IntRange(min=1), default=396, show_default=True)
@click.option("--dt", type=click.FloatRange(min=0.0, min_open=True), default=1.0, show_default=True)
@click.option("--start", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@out_option
@diagnose
def realtime(
    scenario_path: Path,
    vmax: int,
    cores: int,
    budget_steps: int,
    dt: float,
    start: int,
    seed: int,
    out_path: Path,
):
    """Find the largest agent count simulated in real time."""
    grid = load_scenario(scenario_path)
    result = measure_realtime(grid, vmax, cores, seed, budget_steps, dt, start=start)
    write_table(realtime_frame(result, scenario_path.stem, vmax, cores, budget_steps), out_path)


@main.command()
@scenario_option
@click.option("--agents", type=int, required=True)
@click.option("--vmax", type=click.IntRange(1, 5), default=4, show_default=True)
@click.option("--cores", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--max-steps", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--dt", type=click.FloatRange(min=0.0, min_open=True), default=1.0, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@out_option
@diagnose
def evacuate(
    scenario_path: Path,
    agents: int,
    vmax: int,
    cores: int,
    max_steps: int,
    dt: float,
    seed: int,
    out_path: Path,
):
    """Time a crowd draining through the scenario's exits."""
    grid = load_scenario(scenario_path)
    result = measure_evacuation(
        grid, agents, vmax, cores, seed, max_steps, dt, scenario_name=scenario_path.stem
    )
    write_table(evacuation_frame([result]), out_path)


@main.command()
@click.option("--length-m", type=float, default=50.0, show_default=True)
@click.option("--width-m", type=float, default=4.0, show_default=True)
@click.option("--cell-size", type=float, default=DEFAULT_CELL_SIZE, show_default=True)
@click.option("--vmax", type=click.IntRange(1, 5), default=4, show_default=True)
@click.option(
    "--densities", type=CommaList(float), default="0.25,0.5,1,2,3,4,5", show_default=True
)
@click.option("--warmup", type=click.IntRange(min=0), default=100, show_default=True)
@click.option("--measure", type=click.IntRange(min=1), default=296, show_default=True)
@click.option(
    "--gradient",
    type=click.FloatRange(min=0.0, min_open=True),
    default=4.0,
    show_default=True,
    help="Slope of the driving potential per cell",
)
@click.option("--cores", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True)
@out_option
@diagnose
def fd(
    length_m: float,
    width_m: float,
    cell_size: float,
    vmax: int,
    densities: list[float],
    warmup: int,
    measure: int,
    gradient: float,
    cores: int,
    seed: int,
    out_path: Path,
):
    """Measure the fundamental diagram on a periodic corridor."""
    corridor = make_corridor(length_m, width_m, cell_size)
    records = fundamental_diagram(
        corridor, vmax, densities, seed, warmup, measure, gradient, cores=cores
    )
    rows = compare_weidmann(records)
    write_table(fd_frame(rows, records), out_path)
    ped_info(
        __name__,
        f"mean |model - Weidmann| over 0.5-3 /m^2: {mean_abs_error(rows):.3f} m/s",
    )


@main.command()
@click.option(
    "--in", "in_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True
)
@out_option
@diagnose
def speedup(in_path: Path, out_path: Path):
    """Compute speed factors from sweep results."""
    factors = speed_factor(read_csv(in_path))
    write_table(factors_frame(factors), out_path, float_digits=3)
    for (agents, v_max), by_cores in factors.items():
        summary = ", ".join(f"{cores}: {factor:.3f}" for cores, factor in by_cores.items())
        ped_info(__name__, f"agents={agents} v_max={v_max}: {summary}")


@main.command()
@click.option("--side-m", type=float, required=True)
@click.option("--exits", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--cell-size", type=float, default=DEFAULT_CELL_SIZE, show_default=True)
@out_option
@diagnose
def plaza(side_m: float, exits: int, cell_size: float, out_path: Path):
    """Write a square plaza scenario."""
    save_scenario(make_plaza(side_m, exits, cell_size), out_path)


@main.command()
@click.option("--length-m", type=float, required=True)
@click.option("--width-m", type=float, required=True)
@click.option("--cell-size", type=float, default=DEFAULT_CELL_SIZE, show_default=True)
@out_option
@diagnose
def corridor(length_m: float, width_m: float, cell_size: float, out_path: Path):
    """Write a periodic corridor scenario."""
    save_scenario(make_corridor(length_m, width_m, cell_size), out_path)


if __name__ == "__main__":
    main()
