"""Commons gridworlds: apple Harvest and river Cleanup.

Agents walk a small grid eating apples (+1 each). In Harvest apples regrow
in proportion to nearby apples, so overharvesting kills the orchard. In
Cleanup apples grow only while the river is clean, and cleaning earns
nothing, so someone has to do unpaid work for anyone to eat. Observations
are engineered feature vectors, not pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..contracts import ContractSpace, make_space
from ..game import ActionSpace, MarkovGame

MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}  # up, down, left, right
STAY, CONSUME, CLEAN = 4, 5, 6
ORIENTATIONS = 4  # orientation = direction of last move

GRID_HORIZON = 1000

HARVEST_SHAPE = (15, 15)
HARVEST_RESPAWN_RADIUS = 2
HARVEST_DENSITY_RADIUS = 5.0
HARVEST_LOW_DENSITY = 4
HARVEST_FINE_MAX = 10.0

CLEANUP_SHAPE = (9, 18)
CLEANUP_RIVER_COLS = 3
CLEANUP_ORCHARD_COLS = 6
CLEANUP_WASTE_SPAWN = 0.5
CLEANUP_APPLE_RATE = 0.05
CLEANUP_DEPLETION = 0.4
CLEANUP_CLEAN_RANGE = 5.0
CLEANUP_REWARD_MAX = 0.2

_SPAWN_POINTS = [(0, 0), (-1, -1), (0, -1), (-1, 0), (0, 7), (-1, 7), (7, 0), (7, -1)]


def _disc_offsets(radius: float) -> list[tuple[int, int]]:
    r = int(np.floor(radius))
    return [
        (dr, dc)
        for dr in range(-r, r + 1)
        for dc in range(-r, r + 1)
        if dr * dr + dc * dc <= radius * radius
    ]

_RESPAWN_OFFSETS = _disc_offsets(HARVEST_RESPAWN_RADIUS)


@dataclass(frozen=True)
class GridState:
    positions: tuple[tuple[int, int], ...]
    orientations: tuple[int, ...]
    apples: frozenset
    waste: frozenset
    eaten_last: tuple[int, ...]


def resolve_step(state: GridState, joint_action, shape, clean_range=None):
    """Deterministic part of a grid step, shared with the contract families.

    Moves resolve in agent-index order (a blocked mover stays put); an agent
    consumes the apple on its landing cell when it moved there or played
    consume; clean removes the nearest waste within range. Returns the new
    positions/orientations plus per-agent consumed and cleaned cell lists.
    """
    n = len(state.positions)
    height, width = shape
    positions = list(state.positions)
    orientations = list(state.orientations)
    moved = [False] * n
    for i, raw in enumerate(joint_action):
        action = int(raw)
        if action in MOVES:
            dr, dc = MOVES[action]
            r = min(max(positions[i][0] + dr, 0), height - 1)
            c = min(max(positions[i][1] + dc, 0), width - 1)
            target = (r, c)
            if target != positions[i] and all(
                positions[j] != target for j in range(n) if j != i
            ):
                positions[i] = target
                moved[i] = True
            orientations[i] = action

    apples = set(state.apples)
    waste = set(state.waste)
    consumed: list[list] = [[] for _ in range(n)]
    cleaned: list[list] = [[] for _ in range(n)]
    for i, raw in enumerate(joint_action):
        action = int(raw)
        cell = positions[i]
        if (moved[i] or action == CONSUME) and cell in apples:
            apples.discard(cell)
            consumed[i].append(cell)
        elif action == CLEAN and clean_range is not None and waste:
            best = None
            for w in waste:
                d2 = (w[0] - cell[0]) ** 2 + (w[1] - cell[1]) ** 2
                if d2 <= clean_range * clean_range:
                    key = (d2, w)
                    if best is None or key < best:
                        best = key
            if best is not None:
                waste.discard(best[1])
                cleaned[i].append(best[1])

    return tuple(positions), tuple(orientations), apples, waste, consumed, cleaned


def _apple_grid(apples, shape) -> np.ndarray:
    grid = np.zeros(shape, dtype=bool)
    for r, c in apples:
        grid[r, c] = True
    return grid


def _neighbor_counts(grid: np.ndarray, offsets) -> np.ndarray:
    counts = np.zeros(grid.shape, dtype=int)
    height, width = grid.shape
    for dr, dc in offsets:
        src = grid[
            max(0, -dr) : height - max(0, dr), max(0, -dc) : width - max(0, dc)
        ]
        counts[
            max(0, dr) : height - max(0, -dr), max(0, dc) : width - max(0, -dc)
        ] += src
    return counts


def harvest_respawn_probability(nearby_apples: int) -> float:
    """Step function of the apple count within the respawn radius."""
    if nearby_apples <= 0:
        return 0.0
    if nearby_apples <= 2:
        return 0.005
    if nearby_apples <= 5:
        return 0.02
    return 0.05


def _nearest(cell, cells) -> tuple[int, int] | None:
    best = None
    for other in cells:
        d2 = (other[0] - cell[0]) ** 2 + (other[1] - cell[1]) ** 2
        key = (d2, other)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def _agent_starts(num_agents: int, shape) -> tuple[tuple[int, int], ...]:
    if num_agents > len(_SPAWN_POINTS):
        raise ValueError(f"gridworlds support at most {len(_SPAWN_POINTS)} agents")
    height, width = shape
    out = []
    for raw_r, raw_c in _SPAWN_POINTS[:num_agents]:
        out.append((raw_r % height, raw_c % width))
    return tuple(out)


def low_density_consumptions(state: GridState, joint_action, shape) -> list[int]:
    """Consumer indices for apples eaten with < 4 other apples within radius 5."""
    _, _, _, _, consumed, _ = resolve_step(state, joint_action, shape)
    fined = []
    for agent, cells in enumerate(consumed):
        for cell in cells:
            nearby = sum(
                1
                for a in state.apples
                if a != cell
                and (a[0] - cell[0]) ** 2 + (a[1] - cell[1]) ** 2
                <= HARVEST_DENSITY_RADIUS ** 2
            )
            if nearby < HARVEST_LOW_DENSITY:
                fined.append(agent)
    return fined


def harvest_fine_family(num_agents: int) -> ContractSpace:
    """Fine theta for consuming in a low-density region, shared by the others."""

    def delta(params, state, joint_action):
        theta = float(params[0])
        out = np.zeros(num_agents)
        if theta == 0.0:
            return out
        for agent in low_density_consumptions(state, joint_action, HARVEST_SHAPE):
            out[agent] -= theta
            out += np.where(np.arange(num_agents) == agent, 0.0, theta / (num_agents - 1))
        return out

    return make_space(
        family_id="harvest_fine",
        param_bounds=[(0.0, HARVEST_FINE_MAX)],
        num_agents=num_agents,
        delta_fn=delta,
        meta={"low_density_threshold": HARVEST_LOW_DENSITY, "radius": HARVEST_DENSITY_RADIUS},
    )


def cleanup_reward_family(num_agents: int) -> ContractSpace:
    """Payment theta per waste cell cleaned, funded evenly by the others."""

    def delta(params, state, joint_action):
        theta = float(params[0])
        out = np.zeros(num_agents)
        if theta == 0.0:
            return out
        _, _, _, _, _, cleaned = resolve_step(
            state, joint_action, CLEANUP_SHAPE, clean_range=CLEANUP_CLEAN_RANGE
        )
        for agent, cells in enumerate(cleaned):
            for _ in cells:
                out[agent] += theta
                out -= np.where(
                    np.arange(num_agents) == agent, 0.0, theta / (num_agents - 1)
                )
        return out

    return make_space(
        family_id="cleanup_reward",
        param_bounds=[(0.0, CLEANUP_REWARD_MAX)],
        num_agents=num_agents,
        delta_fn=delta,
        meta={"clean_range": CLEANUP_CLEAN_RANGE},
    )


def _initial_harvest_apples(shape) -> frozenset:
    apples = set()
    for r0, c0 in ((2, 2), (shape[0] - 6, shape[1] - 6)):
        for dr in range(4):
            for dc in range(4):
                apples.add((r0 + dr, c0 + dc))
    return frozenset(apples)


def _grid_features(state: GridState, agent: int, shape, num_agents: int, with_waste: bool):
    height, width = shape
    r, c = state.positions[agent]
    feats = [1.0, r / height, c / width]
    orient = np.zeros(ORIENTATIONS)
    orient[state.orientations[agent]] = 1.0
    feats += orient.tolist()

    others = [j for j in range(num_agents) if j != agent]
    nearest_other = min(
        others,
        key=lambda j: (
            (state.positions[j][0] - r) ** 2 + (state.positions[j][1] - c) ** 2,
            j,
        ),
    )
    orr, occ = state.positions[nearest_other]
    feats += [(orr - r) / height, (occ - c) / width]
    other_orient = np.zeros(ORIENTATIONS)
    other_orient[state.orientations[nearest_other]] = 1.0
    feats += other_orient.tolist()

    apple = _nearest((r, c), state.apples)
    if apple is None:
        feats += [0.0, 0.0, 0.0]
    else:
        feats += [(apple[0] - r) / height, (apple[1] - c) / width, 1.0]

    if with_waste:
        waste = _nearest((r, c), state.waste)
        if waste is None:
            feats += [0.0, 0.0, 0.0]
        else:
            feats += [(waste[0] - r) / height, (waste[1] - c) / width, 1.0]
        feats += [len(state.waste) / (height * CLEANUP_RIVER_COLS)]
    else:
        close = sum(
            1
            for a in state.apples
            if (a[0] - r) ** 2 + (a[1] - c) ** 2 <= HARVEST_DENSITY_RADIUS ** 2
        )
        feats += [close / 10.0]

    feats += [len(state.apples) / (height * width / 2)]
    feats += [min(e, 3) / 3.0 for e in state.eaten_last]
    return np.asarray(feats)


def make_harvest(
    num_agents: int, grid_shape: tuple[int, int] = HARVEST_SHAPE
) -> tuple[MarkovGame, ContractSpace]:
    if num_agents < 1:
        raise ValueError("need at least one agent")
    if grid_shape[0] < 5 or grid_shape[1] < 5:
        raise ValueError("harvest grid must be at least 5x5")
    shape = tuple(grid_shape)

    start = GridState(
        positions=_agent_starts(num_agents, shape),
        orientations=(0,) * num_agents,
        apples=_initial_harvest_apples(shape),
        waste=frozenset(),
        eaten_last=(0,) * num_agents,
    )

    def full_step(state, joint_action, rng):
        positions, orientations, apples, waste, consumed, _ = resolve_step(
            state, joint_action, shape
        )
        grid = _apple_grid(apples, shape)
        counts = _neighbor_counts(grid, _RESPAWN_OFFSETS)
        probs = np.select(
            [counts <= 0, counts <= 2, counts <= 5],
            [0.0, 0.005, 0.02],
            default=0.05,
        )
        probs[grid] = 0.0
        spawns = rng.random(shape) < probs
        if spawns.any():
            apples.update(zip(*np.nonzero(spawns)))
        reward_vec = np.array([float(len(c)) for c in consumed])
        return reward_vec, GridState(
            positions=positions,
            orientations=orientations,
            apples=frozenset(apples),
            waste=frozenset(),
            eaten_last=tuple(len(c) for c in consumed),
        )

    def transition(state, joint_action, rng):
        return full_step(state, joint_action, rng)[1]

    def reward(state, joint_action):
        _, _, _, _, consumed, _ = resolve_step(state, joint_action, shape)
        return np.array([float(len(c)) for c in consumed])

    obs_dim = len(_grid_features(start, 0, shape, num_agents, with_waste=False))

    def observe(state, agent):
        return _grid_features(state, agent, shape, num_agents, with_waste=False)

    actions = ActionSpace(labels=("up", "down", "left", "right", "stay", "consume"))
    game = MarkovGame(
        num_agents=num_agents,
        action_spaces=(actions,) * num_agents,
        initial_state=start,
        transition=transition,
        reward=reward,
        discount=0.99,
        horizon=GRID_HORIZON,
        reward_bound=1.0,
        env_id="harvest",
        observe=observe,
        obs_dim=obs_dim,
        step=full_step,
        meta={
            "horizon": GRID_HORIZON,
            "reward_bound": 1.0,
            "grid_shape": shape,
            "respawn_radius": HARVEST_RESPAWN_RADIUS,
            "respawn_probs": "0 / 0.005 / 0.02 / 0.05 for 0 / 1-2 / 3-5 / 6+ nearby apples",
            "density_radius": HARVEST_DENSITY_RADIUS,
            "low_density_threshold": HARVEST_LOW_DENSITY,
            "contract_family": "fine for low-density consumption, theta in [0, 10]",
            "gifting_bound": HARVEST_FINE_MAX,
        },
    )
    return game, harvest_fine_family(num_agents)


def make_cleanup(
    num_agents: int, grid_shape: tuple[int, int] = CLEANUP_SHAPE
) -> tuple[MarkovGame, ContractSpace]:
    if num_agents < 1:
        raise ValueError("need at least one agent")
    if grid_shape[0] < 5 or grid_shape[1] < 5:
        raise ValueError("cleanup grid must be at least 5x5")
    shape = tuple(grid_shape)
    height, width = shape
    river_cells = tuple(
        (r, c) for r in range(height) for c in range(CLEANUP_RIVER_COLS)
    )
    orchard_cols = range(width - CLEANUP_ORCHARD_COLS, width)
    orchard_cells = tuple((r, c) for r in range(height) for c in orchard_cols)

    start = GridState(
        positions=_agent_starts(num_agents, shape),
        orientations=(0,) * num_agents,
        apples=frozenset(),
        waste=frozenset(river_cells),
        eaten_last=(0,) * num_agents,
    )

    def full_step(state, joint_action, rng):
        positions, orientations, apples, waste, consumed, _ = resolve_step(
            state, joint_action, shape, clean_range=CLEANUP_CLEAN_RANGE
        )
        if rng.random() < CLEANUP_WASTE_SPAWN:
            empty = [cell for cell in river_cells if cell not in waste]
            if empty:
                waste.add(empty[int(rng.integers(len(empty)))])
        waste_fraction = len(waste) / len(river_cells)
        rate = CLEANUP_APPLE_RATE * max(0.0, 1.0 - waste_fraction / CLEANUP_DEPLETION)
        if rate > 0.0:
            occupied = set(positions)
            for cell in orchard_cells:
                if cell not in apples and cell not in occupied and rng.random() < rate:
                    apples.add(cell)
        reward_vec = np.array([float(len(c)) for c in consumed])
        return reward_vec, GridState(
            positions=positions,
            orientations=orientations,
            apples=frozenset(apples),
            waste=frozenset(waste),
            eaten_last=tuple(len(c) for c in consumed),
        )

    def transition(state, joint_action, rng):
        return full_step(state, joint_action, rng)[1]

    def reward(state, joint_action):
        _, _, _, _, consumed, _ = resolve_step(
            state, joint_action, shape, clean_range=CLEANUP_CLEAN_RANGE
        )
        return np.array([float(len(c)) for c in consumed])

    obs_dim = len(_grid_features(start, 0, shape, num_agents, with_waste=True))

    def observe(state, agent):
        return _grid_features(state, agent, shape, num_agents, with_waste=True)

    actions = ActionSpace(
        labels=("up", "down", "left", "right", "stay", "consume", "clean")
    )
    game = MarkovGame(
        num_agents=num_agents,
        action_spaces=(actions,) * num_agents,
        initial_state=start,
        transition=transition,
        reward=reward,
        discount=0.99,
        horizon=GRID_HORIZON,
        reward_bound=1.0,
        env_id="cleanup",
        observe=observe,
        obs_dim=obs_dim,
        step=full_step,
        meta={
            "horizon": GRID_HORIZON,
            "reward_bound": 1.0,
            "grid_shape": shape,
            "river_cols": CLEANUP_RIVER_COLS,
            "orchard_cols": CLEANUP_ORCHARD_COLS,
            "waste_spawn_prob": CLEANUP_WASTE_SPAWN,
            "apple_rate": CLEANUP_APPLE_RATE,
            "depletion_threshold": CLEANUP_DEPLETION,
            "clean_range": CLEANUP_CLEAN_RANGE,
            "contract_family": "payment per waste cleaned, theta in [0, 0.2]",
            "gifting_bound": CLEANUP_REWARD_MAX,
        },
    )
    return game, cleanup_reward_family(num_agents)
