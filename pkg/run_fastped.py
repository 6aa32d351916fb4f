from fastped.bench import (
    evacuation_frame,
    factors_frame,
    measure_evacuation,
    measure_realtime,
    realtime_frame,
    run_sweep,
    speed_factor,
)
from fastped.config import FundamentalDiagramParameters, SweepSpec
from fastped.fundamental import (
    compare_weidmann,
    fd_frame,
    fit_weidmann,
    fundamental_diagram,
    mean_abs_error,
)
from fastped.ped_log import init_ped_logger, ped_info
from fastped.scenario_io import make_corridor, make_plaza, write_csv, write_table
from fastped.world import save_scenario

from pathlib import Path
import os

#########################################################################################################
# Set up workspace
workspace_path = Path("./workspace")
if not workspace_path.exists():
    workspace_path.mkdir()

seed = 0
n_cores = os.cpu_count() or 1

#########################################################################################################
# Define configuration
plaza_side_m = 100.0
plaza_exits = 4

sweep_spec = SweepSpec(
    cores_list=[c for c in (1, 2, 4, 8) if c <= n_cores],
    agents_list=[10000, 20000, 40000],
    vmax_list=[4],
    steps=396,
    repetitions=3,
)

fd_params = FundamentalDiagramParameters(
    v_max=4,
    densities=[0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0],
    warmup=100,
    measure=296,
    gradient=4.0,
    k_s=1.2,
    seed=seed,
    cores=n_cores,
)
corridor_length_m = 50.0
corridor_width_m = 4.0

evacuation_agents = 40000
evacuation_max_steps = 10000


#########################################################################################################
# Run the campaign
def main():
    init_ped_logger(workspace_path / "fastped.log")

    plaza = make_plaza(plaza_side_m, plaza_exits)
    save_scenario(plaza, workspace_path / "plaza.txt")

    records = run_sweep(sweep_spec, plaza, seed, "plaza")
    write_csv(records, workspace_path / "sweep.csv")
    write_table(
        factors_frame(speed_factor(records)), workspace_path / "factors.csv", float_digits=3
    )

    result = measure_realtime(plaza, 4, max(sweep_spec.cores_list), seed)
    write_table(
        realtime_frame(result, "plaza", 4, max(sweep_spec.cores_list), 396),
        workspace_path / "realtime.csv",
    )

    evacuation = measure_evacuation(
        plaza,
        evacuation_agents,
        4,
        max(sweep_spec.cores_list),
        seed,
        evacuation_max_steps,
        scenario_name="plaza",
    )
    write_table(evacuation_frame([evacuation]), workspace_path / "evacuation.csv")

    corridor = make_corridor(corridor_length_m, corridor_width_m)
    fd = fundamental_diagram(
        corridor,
        fd_params.v_max,
        fd_params.densities,
        fd_params.seed,
        fd_params.warmup,
        fd_params.measure,
        fd_params.gradient,
        fd_params.k_s,
        fd_params.cores,
    )
    rows = compare_weidmann(fd)
    write_table(fd_frame(rows, fd), workspace_path / "fd.csv")
    fit = fit_weidmann(fd)
    ped_info(
        __name__,
        f"mean |model - Weidmann| over 0.5-3 /m^2: {mean_abs_error(rows):.3f} m/s; "
        f"fitted v_f = {fit.v_f:.3f} m/s, gamma = {fit.gamma:.3f} /m^2",
    )


if __name__ == "__main__":
    main()
