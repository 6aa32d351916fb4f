from fastped.agents import Agent
from fastped.config import ScheduleParams, SimParams
from fastped.engine import (
    EMPTY,
    SimState,
    compute_blocksize,
    move_phase,
    plan_phase,
    run,
    run_until_empty,
    step,
)
from fastped.errors import ConfigError, StateError
from fastped.world import CellKind, StaticField, compute_static_field, wrap_dx

from conftest import grid_from_rows, state_with_agents

import numpy as np
import pytest

LANE = [
    "##########",
    "#........E",
    "##########",
]


@pytest.mark.parametrize(
    "n, cores, expected",
    [(100000, 8, 12500), (500000, 2, 32767), (3, 8, 1), (0, 4, 1), (7, 1, 7), (32767 * 3, 3, 32767)],
)
def test_compute_blocksize(n, cores, expected):
    assert compute_blocksize(n, cores) == expected


def test_compute_blocksize_rejects_zero_cores():
    with pytest.raises(ConfigError):
        compute_blocksize(10, 0)


def test_from_roster_rejects_shared_cell(small_room):
    field = compute_static_field(small_room)
    roster = [Agent(0, (2, 2), 2), Agent(1, (2, 2), 2)]
    with pytest.raises(StateError):
        SimState.from_roster(small_room, field, roster)


def test_from_roster_rejects_wall(small_room):
    field = compute_static_field(small_room)
    with pytest.raises(StateError):
        SimState.from_roster(small_room, field, [Agent(0, (0, 0), 2)])


def test_from_roster_rejects_mixed_speeds(small_room):
    field = compute_static_field(small_room)
    with pytest.raises(StateError):
        SimState.from_roster(small_room, field, [Agent(0, (1, 1), 2), Agent(1, (2, 1), 3)])


def test_step_rejects_other_speed(small_room):
    state = state_with_agents(small_room, [(1, 1)], v_max=2)
    with pytest.raises(ConfigError):
        step(state, SimParams(v_max=3), ScheduleParams())


def test_move_stops_before_occupied_cell():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(1, 1), (4, 1)], v_max=5)
    state.desired[0] = (6, 1)
    state.desired[1] = (4, 1)
    assert move_phase(state, SimParams(v_max=5)) == []
    assert tuple(state.pos[0]) == (3, 1)
    assert tuple(state.pos[1]) == (4, 1)
    assert state.hops.tolist() == [2, 0]
    state.check_consistency()


def test_move_is_capped_at_v_max():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(1, 1)], v_max=2)
    state.desired[0] = (8, 1)
    move_phase(state, SimParams(v_max=2))
    assert tuple(state.pos[0]) == (3, 1)
    assert state.occupancy[1, 3] == 0
    assert state.occupancy[1, 1] == EMPTY


def test_move_stops_at_wall():
    grid = grid_from_rows(
        [
            "#######",
            "#.....#",
            "#..#..#",
            "#.....E",
            "#######",
        ]
    )
    state = state_with_agents(grid, [(1, 2)], v_max=4)
    state.desired[0] = (5, 2)
    move_phase(state, SimParams(v_max=4))
    assert tuple(state.pos[0]) == (2, 2)


def test_exit_removes_agent():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(7, 1), (2, 1)], v_max=3)
    state.desired[0] = (9, 1)
    state.desired[1] = (2, 1)
    assert move_phase(state, SimParams(v_max=3)) == [0]
    assert not state.alive[0]
    assert tuple(state.pos[0]) == (9, 1)
    assert state.occupancy[1, 7] == EMPTY
    assert state.occupancy[1, 9] == EMPTY
    assert state.n_alive == 1
    state.check_consistency()


def test_lane_empties_through_exit():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(1, 1), (3, 1), (5, 1)], v_max=2)
    params = SimParams(v_max=2, steps=30)
    stats = run(state, params, ScheduleParams(cores=1))
    assert stats.exited == 3
    assert stats.alive == 0
    assert state.step == 30
    assert (state.occupancy == EMPTY).all()


def test_run_until_empty_stops_when_drained():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(1, 1), (3, 1), (5, 1)], v_max=2)
    stats = run_until_empty(state, SimParams(v_max=2, steps=1000), ScheduleParams(cores=1))
    assert stats.alive == 0
    assert stats.exited == 3
    assert 0 < stats.steps <= 30
    assert state.step == stats.steps


def test_exited_agents_are_not_planned():
    grid = grid_from_rows(LANE)
    state = state_with_agents(grid, [(8, 1)], v_max=1)
    state.alive[0] = False
    state.occupancy[1, 8] = EMPTY
    state.desired[0] = (5, 5)
    plan_phase(state, SimParams(v_max=1), ScheduleParams(cores=2))
    assert tuple(state.desired[0]) == (5, 5)


def test_digest_tracks_state(small_room):
    a = state_with_agents(small_room, [(1, 1), (5, 5), (8, 2)], v_max=3)
    b = state_with_agents(small_room, [(1, 1), (5, 5), (8, 2)], v_max=3)
    assert a.digest() == b.digest()
    params = SimParams(v_max=3, seed=11)
    step(a, params, ScheduleParams(cores=1))
    assert a.digest() != b.digest()
    step(b, params, ScheduleParams(cores=3))
    assert a.digest() == b.digest()


def test_run_reports_phase_times(small_room):
    state = state_with_agents(small_room, [(1, 1), (2, 6), (9, 5)], v_max=4)
    stats = run(state, SimParams(v_max=4, steps=5), ScheduleParams(cores=2))
    assert stats.steps == 5
    assert stats.wall_time_s >= stats.plan_time_s + stats.move_time_s - 1e-9
    assert stats.alive + stats.exited == 3


def test_cores_do_not_change_trajectories(random_world):
    rng = np.random.default_rng(2024)
    for _ in range(20):
        seed = int(rng.integers(0, 2**63))
        template, v_max = random_world(rng)
        params = SimParams(v_max=v_max, seed=seed, steps=50)
        trajectories = {}
        for cores in (1, 2, 4, 8):
            state = SimState.from_roster(template.grid, template.field, template.agents, v_max)
            sched = ScheduleParams(cores=cores)
            frames = []
            for _ in range(params.steps):
                step(state, params, sched)
                frames.append((state.pos.copy(), state.alive.copy()))
            trajectories[cores] = frames
        for cores in (2, 4, 8):
            for (pos_1, alive_1), (pos_c, alive_c) in zip(trajectories[1], trajectories[cores]):
                np.testing.assert_array_equal(pos_1, pos_c)
                np.testing.assert_array_equal(alive_1, alive_c)


def test_exclusion_and_conservation(random_world):
    rng = np.random.default_rng(99)
    for _ in range(100):
        state, v_max = random_world(rng, max_side=40, max_agents=300)
        params = SimParams(v_max=v_max, seed=int(rng.integers(0, 2**63)), steps=20)
        sched = ScheduleParams(cores=int(rng.integers(1, 5)))
        initial = state.n_agents
        exited = 0
        width = state.grid.width
        for _ in range(params.steps):
            before = state.pos.copy()
            was_alive = state.alive.copy()
            stats = step(state, params, sched)
            exited += stats.exited
            state.check_consistency()
            assert initial == state.n_alive + exited
            assert np.all(state.hops <= v_max)
            dx = np.abs(state.pos[:, 0] - before[:, 0])
            if state.grid.periodic:
                dx = np.minimum(dx, width - dx)
            dy = np.abs(state.pos[:, 1] - before[:, 1])
            assert np.all(np.maximum(dx, dy)[was_alive] <= v_max)
            gone = was_alive & ~state.alive
            for index in np.flatnonzero(gone):
                x, y = state.pos[index]
                assert state.grid.cells[y, x] == CellKind.EXIT


def test_wrapped_shift_is_signed(short_corridor):
    field = StaticField.uniform_gradient(short_corridor, 4.0)
    state = state_with_agents(short_corridor, [(18, 2)], v_max=4, field=field)
    state.desired[0] = (2, 2)
    move_phase(state, SimParams(v_max=4))
    assert tuple(state.pos[0]) == (2, 2)
    assert state.shift_x[0] == wrap_dx(2 - 18, short_corridor.width) == 4
