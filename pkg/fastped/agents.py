from fastped.config import SimParams, U64_MASK
from fastped.world import WALL_CELL, line_clear, wrap_dx

from dataclasses import dataclass
from typing import TYPE_CHECKING
import math

from numba import njit
import numpy as np

if TYPE_CHECKING:
    from fastped.engine import SimState

# SplitMix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0

# Stream channels above the agent id range
ORDER_CHANNEL = 1 << 63
SPAWN_CHANNEL = (1 << 63) + 1


@dataclass
class Agent:
    """A pedestrian

    Attributes
    ----------
    id: int
        Dense index from 0
    pos: tuple[int, int]
        Current cell (x, y)
    v_max: int
        Maximum speed in cells per step
    alive: bool
        False once the agent has left through an exit
    """

    id: int
    pos: tuple[int, int]
    v_max: int
    alive: bool = True


@njit(cache=True, nogil=True)
def splitmix64_finalize(z: np.uint64) -> np.uint64:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def stream_u64(seed: np.uint64, agent_id: np.uint64, step: np.uint64, draw: np.uint64) -> np.uint64:
    """Counter-based draw, a pure function of the four stream coordinates"""
    z = seed ^ (agent_id * _GOLDEN) ^ (step * _MIX1) ^ (draw * _MIX2)
    return splitmix64_finalize(z)


@njit(cache=True, nogil=True)
def unit_interval(u: np.uint64) -> float:
    return np.float64(u >> np.uint64(11)) * _INV_2_53


def rng_u64(seed: int, agent_id: int, step: int, draw: int) -> int:
    """Uniform 64-bit value for the stream (seed, agent_id, step, draw)

    Parameters
    ----------
    seed: int
        Run seed
    agent_id: int
        Agent id, or a reserved channel >= 2**63
    step: int
        Time step index
    draw: int
        Draw index within the step

    Returns
    -------
    int
        The SplitMix64 finalizer of
        seed ^ (agent_id * 0x9E3779B97F4A7C15) ^ (step * 0xBF58476D1CE4E5B9)
        ^ (draw * 0x94D049BB133111EB), all in wrapping 64-bit arithmetic
    """
    return int(
        stream_u64(
            np.uint64(seed & U64_MASK),
            np.uint64(agent_id & U64_MASK),
            np.uint64(step & U64_MASK),
            np.uint64(draw & U64_MASK),
        )
    )


def unit_from_u64(u: int) -> float:
    """Map a 64-bit value to [0, 1) using its top 53 bits"""
    return (u >> 11) * _INV_2_53


@njit(cache=True, nogil=True)
def _x_spans(px: int, v_max: int, width: int, periodic: bool) -> tuple[int, int, int, int]:
    # Two ascending column spans covering the ball in x; second may be empty
    if periodic:
        if 2 * v_max + 1 >= width:
            return 0, width - 1, 1, 0
        lo = px - v_max
        hi = px + v_max
        if lo < 0:
            return 0, hi, lo + width, width - 1
        if hi >= width:
            return 0, hi - width, lo, width - 1
        return lo, hi, 1, 0
    return max(0, px - v_max), min(width - 1, px + v_max), 1, 0


@njit(cache=True, nogil=True)
def fill_candidates(
    cells: np.ndarray,
    S: np.ndarray,
    wrap_offset: float,
    periodic: bool,
    occupancy: np.ndarray,
    px: int,
    py: int,
    v_max: int,
    agent_id: int,
    cand_x: np.ndarray,
    cand_y: np.ndarray,
    cand_s: np.ndarray,
) -> int:
    """Write the candidate cells of one agent into the buffers

    Candidates lie within Chebyshev distance v_max, are not Wall, are not held
    by another agent and are visible from the agent. They are written in
    row-major order together with their potential as seen from the agent.

    Returns
    -------
    int
        Number of candidates written
    """
    height, width = cells.shape
    n = 0
    a0, b0, a1, b1 = _x_spans(px, v_max, width, periodic)
    for dy in range(-v_max, v_max + 1):
        cy = py + dy
        if cy < 0 or cy >= height:
            continue
        for span in range(2):
            lo = a0 if span == 0 else a1
            hi = b0 if span == 0 else b1
            for cx in range(lo, hi + 1):
                d = cx - px
                if periodic:
                    d = wrap_dx(d, width)
                if abs(d) > v_max:
                    continue
                if cells[cy, cx] == WALL_CELL:
                    continue
                holder = occupancy[cy, cx]
                if holder >= 0 and holder != agent_id:
                    continue
                if not line_clear(cells, periodic, px, py, cx, cy):
                    continue
                s = S[cy, cx]
                unwrapped = px + d
                if unwrapped != cx:
                    s += ((unwrapped - cx) // width) * wrap_offset
                cand_x[n] = cx
                cand_y[n] = cy
                cand_s[n] = s
                n += 1
    return n


@njit(cache=True, nogil=True)
def _sample_scan(weights: np.ndarray, n: int, u: float) -> int:
    total = 0.0
    for j in range(n):
        total += weights[j]
    acc = 0.0
    for j in range(n):
        acc += weights[j]
        if acc / total > u:
            return j
    return n - 1


@njit(cache=True, nogil=True)
def choice_weights(s_pos: float, cand_s: np.ndarray, n: int, k_s: float, weights: np.ndarray) -> None:
    """Weights proportional to exp(k_s * (s_pos - S(c))), the largest scaled to 1

    Exponents are shifted by their maximum before exp so steep fields never
    overflow. Unreachable candidates weigh 0 unless none is reachable.
    """
    top = -np.inf
    for j in range(n):
        if np.isfinite(cand_s[j]):
            top = max(top, -k_s * cand_s[j])
    for j in range(n):
        if top == -np.inf:
            weights[j] = 1.0
        elif np.isfinite(cand_s[j]):
            weights[j] = math.exp(-k_s * cand_s[j] - top)
        else:
            weights[j] = 0.0


@njit(cache=True, nogil=True)
def choose_for_agent(
    cells: np.ndarray,
    S: np.ndarray,
    wrap_offset: float,
    periodic: bool,
    occupancy: np.ndarray,
    px: int,
    py: int,
    v_max: int,
    agent_id: int,
    k_s: float,
    seed: np.uint64,
    step: np.uint64,
    cand_x: np.ndarray,
    cand_y: np.ndarray,
    cand_s: np.ndarray,
    weights: np.ndarray,
) -> tuple[int, int]:
    n = fill_candidates(
        cells, S, wrap_offset, periodic, occupancy, px, py, v_max, agent_id,
        cand_x, cand_y, cand_s,
    )
    choice_weights(S[py, px], cand_s, n, k_s, weights)
    u = unit_interval(stream_u64(seed, np.uint64(agent_id), step, np.uint64(0)))
    j = _sample_scan(weights, n, u)
    return cand_x[j], cand_y[j]


def _buffers(v_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    size = (2 * v_max + 1) ** 2
    return (
        np.empty(size, dtype=np.int64),
        np.empty(size, dtype=np.int64),
        np.empty(size, dtype=np.float64),
        np.empty(size, dtype=np.float64),
    )


def sample_index(weights: np.ndarray, u: float) -> int:
    """Index of the first cumulative probability strictly above u

    Parameters
    ----------
    weights: np.ndarray
        Non-negative weights with a positive sum
    u: float
        Variate in [0, 1)

    Returns
    -------
    int
        The sampled index
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return int(_sample_scan(weights, weights.size, u))


def enumerate_candidates(state: "SimState", agent: Agent) -> list[tuple[int, int]]:
    """Cells the agent may plan to move to, in row-major order

    Reads only the pre-step state: the stay option is always included, other
    agents' cells are excluded, and every candidate is visible from the agent.

    Parameters
    ----------
    state: SimState
        The world before the step
    agent: Agent
        An alive agent

    Returns
    -------
    list[tuple[int, int]]
        Candidate cells (x, y) ordered by (y, x)
    """
    cand_x, cand_y, cand_s, _ = _buffers(agent.v_max)
    n = fill_candidates(
        state.grid.cells,
        state.field.S,
        state.field.wrap_offset,
        state.grid.periodic,
        state.occupancy,
        agent.pos[0],
        agent.pos[1],
        agent.v_max,
        agent.id,
        cand_x,
        cand_y,
        cand_s,
    )
    return list(zip(cand_x[:n].tolist(), cand_y[:n].tolist()))


def candidate_probabilities(
    state: "SimState", agent: Agent, params: SimParams
) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Candidates of an agent and the probability of choosing each"""
    cand_x, cand_y, cand_s, weights = _buffers(agent.v_max)
    x, y = agent.pos
    n = fill_candidates(
        state.grid.cells, state.field.S, state.field.wrap_offset, state.grid.periodic,
        state.occupancy, x, y, agent.v_max, agent.id, cand_x, cand_y, cand_s,
    )
    choice_weights(state.field.S[y, x], cand_s, n, params.k_s, weights)
    probabilities = weights[:n] / weights[:n].sum()
    return list(zip(cand_x[:n].tolist(), cand_y[:n].tolist())), probabilities


def choose_desired_cell(state: "SimState", agent: Agent, params: SimParams) -> tuple[int, int]:
    """Sample the cell an agent plans to move to this step

    Each candidate c is weighted exp(k_s * (S(pos) - S(c))); unreachable
    candidates weigh 0 unless no candidate is reachable, in which case all
    weigh 1. One variate from stream (seed, id, step, 0) selects the first
    candidate whose cumulative probability strictly exceeds it.

    Parameters
    ----------
    state: SimState
        The world before the step
    agent: Agent
        An alive agent
    params: SimParams
        Supplies k_s and the seed

    Returns
    -------
    tuple[int, int]
        The desired cell (x, y), always one of the candidates
    """
    cand_x, cand_y, cand_s, weights = _buffers(agent.v_max)
    x, y = choose_for_agent(
        state.grid.cells,
        state.field.S,
        state.field.wrap_offset,
        state.grid.periodic,
        state.occupancy,
        agent.pos[0],
        agent.pos[1],
        agent.v_max,
        agent.id,
        params.k_s,
        np.uint64(params.seed),
        np.uint64(state.step),
        cand_x,
        cand_y,
        cand_s,
        weights,
    )
    return (int(x), int(y))
