from fastped.agents import (
    ORDER_CHANNEL,
    SPAWN_CHANNEL,
    candidate_probabilities,
    choice_weights,
    choose_desired_cell,
    enumerate_candidates,
    rng_u64,
    sample_index,
    stream_u64,
    unit_from_u64,
)
from fastped.config import SimParams
from fastped.world import CellKind, StaticField

from conftest import grid_from_rows, state_with_agents

import math

from numba import njit
import numpy as np
import pytest

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

OPEN_ROOM = [
    "#######",
    "#.....#",
    "#.....#",
    "#.....E",
    "#.....#",
    "#.....#",
    "#######",
]


def splitmix_reference(seed: int, agent_id: int, step: int, draw: int) -> int:
    z = seed ^ ((agent_id * GOLDEN) & MASK) ^ ((step * MIX1) & MASK) ^ ((draw * MIX2) & MASK)
    z = ((z ^ (z >> 30)) * MIX1) & MASK
    z = ((z ^ (z >> 27)) * MIX2) & MASK
    return z ^ (z >> 31)


def test_rng_known_value():
    # First output of a SplitMix64 generator seeded with 0
    assert rng_u64(0, 1, 0, 0) == 0xE220A8397B1DCDAF
    assert rng_u64(0, 0, 0, 0) == 0


@pytest.mark.parametrize(
    "seed, agent_id, step, draw",
    [
        (0, 0, 1, 0),
        (42, 7, 3, 0),
        (MASK, 123456, 395, 2),
        (2**40 + 17, ORDER_CHANNEL, 12, 99),
        (5, SPAWN_CHANNEL, 0, 40000),
    ],
)
def test_rng_matches_integer_reference(seed, agent_id, step, draw):
    assert rng_u64(seed, agent_id, step, draw) == splitmix_reference(seed, agent_id, step, draw)


def test_unit_from_u64_range():
    assert unit_from_u64(0) == 0.0
    assert unit_from_u64(MASK) < 1.0
    assert unit_from_u64(1 << 63) == 0.5


@pytest.mark.parametrize("u, index", [(0.0, 0), (0.2, 0), (0.25, 1), (0.49, 1), (0.5, 2), (0.999, 2)])
def test_sample_index_strictly_exceeds(u, index):
    assert sample_index(np.array([1.0, 1.0, 2.0]), u) == index


def test_sample_index_skips_zero_weights():
    assert sample_index(np.array([0.0, 3.0, 0.0, 1.0]), 0.0) == 1
    assert sample_index(np.array([0.0, 3.0, 0.0, 1.0]), 0.8) == 3


def test_choice_weights_closed_form():
    cand_s = np.array([2.0, np.inf, 3.0, 4.5])
    weights = np.empty(4)
    choice_weights(3.0, cand_s, 4, 1.2, weights)
    expected = np.array([math.exp(1.2), 0.0, 1.0, math.exp(-1.8)])
    np.testing.assert_allclose(weights, expected / expected.max())


def test_choice_weights_all_unreachable_is_uniform():
    weights = np.empty(3)
    choice_weights(np.inf, np.full(3, np.inf), 3, 1.2, weights)
    np.testing.assert_array_equal(weights, [1.0, 1.0, 1.0])


def test_candidates_row_major_and_exclusive():
    grid = grid_from_rows(OPEN_ROOM)
    state = state_with_agents(grid, [(3, 3), (4, 3)], v_max=1)
    cells = enumerate_candidates(state, state.agent(0))
    assert cells == [(2, 2), (3, 2), (4, 2), (2, 3), (3, 3), (2, 4), (3, 4), (4, 4)]


def test_candidates_stop_at_walls_and_line_of_sight():
    grid = grid_from_rows(
        [
            "#######",
            "#.....#",
            "#.###.#",
            "#.....E",
            "#######",
        ]
    )
    state = state_with_agents(grid, [(3, 3)], v_max=2)
    cells = enumerate_candidates(state, state.agent(0))
    # Row 1 lies behind the wall row
    assert all(y != 1 for _, y in cells)
    assert all(grid.cells[y, x] != CellKind.WALL for x, y in cells)
    assert (3, 3) in cells
    assert (5, 3) in cells


def test_candidates_wrap_across_seam(short_corridor):
    state = state_with_agents(
        short_corridor, [(0, 2)], v_max=1, field=StaticField.uniform_gradient(short_corridor)
    )
    cells = enumerate_candidates(state, state.agent(0))
    assert cells == [(0, 1), (1, 1), (19, 1), (0, 2), (1, 2), (19, 2), (0, 3), (1, 3), (19, 3)]


def test_probabilities_follow_field():
    grid = grid_from_rows(OPEN_ROOM)
    state = state_with_agents(grid, [(3, 3)], v_max=1)
    params = SimParams(v_max=1, k_s=1.2)
    cells, probs = candidate_probabilities(state, state.agent(0), params)
    S = state.field.S
    weights = np.array([math.exp(1.2 * (S[3, 3] - S[y, x])) for x, y in cells])
    np.testing.assert_allclose(probs, weights / weights.sum())
    assert probs.sum() == pytest.approx(1.0)
    assert cells[int(np.argmax(probs))] == (4, 3)


def test_choice_is_deterministic_and_a_candidate(small_room):
    state = state_with_agents(small_room, [(5, 4), (6, 4), (2, 1)], v_max=3)
    params = SimParams(v_max=3, seed=99)
    for agent in state.agents:
        cell = choose_desired_cell(state, agent, params)
        assert cell == choose_desired_cell(state, agent, params)
        assert cell in enumerate_candidates(state, agent)


def _draw_counts(state, agent, params, cells, draws):
    index = {cell: j for j, cell in enumerate(cells)}
    counts = np.zeros(len(cells), dtype=np.int64)
    for seed in range(draws):
        params.seed = seed
        counts[index[choose_desired_cell(state, agent, params)]] += 1
    return counts


def _assert_matches_categorical(counts, probs):
    n = counts.sum()
    expected = n * probs
    sigma = np.sqrt(n * probs * (1.0 - probs))
    # 4 sigma per candidate, about 50 candidates across the fixtures
    assert np.all(np.abs(counts - expected) <= 4.0 * sigma + 1.0)


def test_sampling_distribution_open_room():
    grid = grid_from_rows(OPEN_ROOM)
    state = state_with_agents(grid, [(3, 3)], v_max=1)
    params = SimParams(v_max=1, k_s=1.2)
    agent = state.agent(0)
    cells = enumerate_candidates(state, agent)
    S = state.field.S
    weights = np.array([math.exp(1.2 * (S[3, 3] - S[y, x])) for x, y in cells])
    counts = _draw_counts(state, agent, params, cells, 100_000)
    _assert_matches_categorical(counts, weights / weights.sum())


def test_sampling_distribution_near_obstacle(small_room):
    state = state_with_agents(small_room, [(6, 2), (7, 3)], v_max=2)
    params = SimParams(v_max=2, k_s=1.2)
    agent = state.agent(0)
    cells = enumerate_candidates(state, agent)
    assert (7, 3) not in cells
    S = state.field.S
    weights = np.array([math.exp(1.2 * (S[2, 6] - S[y, x])) for x, y in cells])
    counts = _draw_counts(state, agent, params, cells, 100_000)
    _assert_matches_categorical(counts, weights / weights.sum())


def test_sampling_distribution_across_seam(short_corridor):
    slope = 0.5
    field = StaticField.uniform_gradient(short_corridor, slope)
    state = state_with_agents(short_corridor, [(19, 2)], v_max=2, field=field)
    params = SimParams(v_max=2, k_s=1.2)
    agent = state.agent(0)
    cells = enumerate_candidates(state, agent)
    assert len(cells) == 15
    width = short_corridor.width

    def unwrapped_x(x):
        return 19 + ((x - 19 + width // 2) % width - width // 2)

    # Potential keeps falling past the seam
    weights = np.array([math.exp(1.2 * slope * (unwrapped_x(x) - 19)) for x, _ in cells])
    counts = _draw_counts(state, agent, params, cells, 100_000)
    _assert_matches_categorical(counts, weights / weights.sum())


@pytest.mark.parametrize("scale", [0.5, 2.0, 1024.0])
def test_sample_index_ignores_weight_scale(scale):
    weights = np.array([0.3, 1.7, 0.0, 2.25, 0.75])
    for u in np.linspace(0.0, 0.999, 97):
        assert sample_index(weights * scale, u) == sample_index(weights, u)


def test_lone_agent_descends_on_average():
    grid = grid_from_rows(OPEN_ROOM)
    state = state_with_agents(grid, [(2, 3)], v_max=2)
    params = SimParams(v_max=2, k_s=1.2)
    agent = state.agent(0)
    S = state.field.S
    total = 0.0
    draws = 100_000
    for seed in range(draws):
        params.seed = seed
        x, y = choose_desired_cell(state, agent, params)
        total += S[3, 2] - S[y, x]
    assert total / draws > 0.0


@njit
def _next_draw_differs(seeds, ids, steps, draws) -> bool:
    for i in range(seeds.size):
        here = stream_u64(seeds[i], ids[i], steps[i], draws[i])
        if here == stream_u64(seeds[i], ids[i], steps[i], draws[i] + np.uint64(1)):
            return False
    return True


def test_consecutive_draws_differ():
    rng = np.random.default_rng(11)
    top = np.iinfo(np.uint64).max
    seeds, ids, steps, draws = (
        rng.integers(0, top, size=1_000_000, dtype=np.uint64, endpoint=True) for _ in range(4)
    )
    assert _next_draw_differs(seeds, ids, steps, draws)


def test_choice_weights_survive_steep_fields():
    cand_s = np.array([1000.0, 5.0, 0.0, 0.0, np.inf])
    weights = np.empty(5)
    choice_weights(1800.0, cand_s, 5, 1.2, weights)
    assert np.all(np.isfinite(weights))
    np.testing.assert_allclose(weights, [0.0, math.exp(-6.0), 1.0, 1.0, 0.0], atol=1e-300)


def test_steep_drive_spreads_over_equal_best_cells(short_corridor):
    field = StaticField.uniform_gradient(short_corridor, 200.0)
    state = state_with_agents(short_corridor, [(10, 2)], v_max=4, field=field)
    params = SimParams(v_max=4, k_s=1.2)
    agent = state.agent(0)
    cells, probs = candidate_probabilities(state, agent, params)
    assert np.all(np.isfinite(probs))
    best = [(14, 1), (14, 2), (14, 3)]
    for cell in best:
        assert probs[cells.index(cell)] == pytest.approx(1.0 / 3.0)
    counts = _draw_counts(state, agent, params, cells, 3000)
    _assert_matches_categorical(counts[[cells.index(c) for c in best]], np.full(3, 1.0 / 3.0))


def test_zero_coupling_is_uniform():
    grid = grid_from_rows(OPEN_ROOM)
    state = state_with_agents(grid, [(3, 3)], v_max=2)
    cells, probs = candidate_probabilities(state, state.agent(0), SimParams(v_max=2, k_s=0.0))
    assert len(cells) == 25
    np.testing.assert_allclose(probs, np.full(25, 1.0 / 25.0))


def test_two_candidates_closed_form():
    grid = grid_from_rows(
        [
            "####",
            "#.E#",
            "####",
        ]
    )
    state = state_with_agents(grid, [(1, 1)], v_max=1)
    cells, probs = candidate_probabilities(state, state.agent(0), SimParams(v_max=1, k_s=1.2))
    assert cells == [(1, 1), (2, 1)]
    e = math.exp(1.2)
    np.testing.assert_allclose(probs, [1.0 / (1.0 + e), e / (1.0 + e)])
