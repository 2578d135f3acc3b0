"""Emergency-merge driving dilemma.

An ambulance (agent 0, its own approach lane) and N-1 cars (a shared
approach lane) accelerate toward a merge point; past it everyone shares one
lane with a fixed following gap, so whoever crosses first leads the queue.
The ambulance pays 100 per unfinished step, cars pay 1, and cars are four
times slower, so selfish cars clog the merge at a huge social cost. The
contract family lets the ambulance promise each car a payment proportional
to how far behind the ambulance it is when the ambulance crosses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..contracts import ContractSpace, make_space
from ..game import ActionSpace, MarkovGame

ROAD_LENGTH = 20.0
MERGE_POINT = 10.0
FOLLOW_GAP = 0.5
ACCEL_LIMIT = 0.1
AMBULANCE_VMAX = 1.0
CAR_VMAX = AMBULANCE_VMAX / 4.0
AMBULANCE_PENALTY = 100.0
CAR_PENALTY = 1.0
MERGE_HORIZON = 200
CAR_SPAWN_FRONT = 9.5
CAR_SPAWN_BACK = 5.0
SUBSIDY_MAX = 100.0

AMBULANCE = 0  # the proposing agent


@dataclass(frozen=True)
class MergeState:
    positions: tuple[float, ...]
    velocities: tuple[float, ...]
    done: tuple[bool, ...]

    @property
    def all_done(self) -> bool:
        return all(self.done)


def _vmax(num_agents: int) -> np.ndarray:
    v = np.full(num_agents, CAR_VMAX)
    v[AMBULANCE] = AMBULANCE_VMAX
    return v


def _lane(agent: int) -> int:
    return 0 if agent == AMBULANCE else 1


def initial_merge_state(num_agents: int) -> MergeState:
    positions = np.zeros(num_agents)
    if num_agents > 2:
        positions[1:] = np.linspace(CAR_SPAWN_FRONT, CAR_SPAWN_BACK, num_agents - 1)
    elif num_agents == 2:
        positions[1] = CAR_SPAWN_FRONT
    return MergeState(
        positions=tuple(positions),
        velocities=(0.0,) * num_agents,
        done=(False,) * num_agents,
    )


def advance(state: MergeState, joint_action) -> MergeState:
    """One step of the merge kinematics; deterministic.

    Vehicles are processed front to back. Pre-merge, a vehicle follows only
    vehicles in its own lane; the merged segment is one lane, and a vehicle
    may cross the merge point only if it fits FOLLOW_GAP behind the last
    merged vehicle. Finished vehicles leave the road.
    """
    n = len(state.positions)
    pos = np.asarray(state.positions)
    vel = np.asarray(state.velocities)
    vmax = _vmax(n)
    accel = np.array(
        [float(np.clip(np.asarray(a).reshape(-1)[0], -ACCEL_LIMIT, ACCEL_LIMIT)) for a in joint_action]
    )

    new_pos = pos.copy()
    new_vel = vel.copy()
    order = sorted(
        (i for i in range(n) if not state.done[i]),
        key=lambda i: (-pos[i], i),
    )
    processed: list[int] = []
    for k in order:
        v = float(np.clip(vel[k] + accel[k], 0.0, vmax[k]))
        target = pos[k] + v
        for j in processed:
            if new_pos[j] < MERGE_POINT:
                if _lane(j) == _lane(k):
                    target = min(target, new_pos[j] - FOLLOW_GAP)
            else:
                if target >= MERGE_POINT:
                    target = min(target, new_pos[j] - FOLLOW_GAP)
        target = max(target, pos[k])
        new_pos[k] = target
        new_vel[k] = target - pos[k]
        processed.append(k)

    done = tuple(bool(d or p >= ROAD_LENGTH) for d, p in zip(state.done, new_pos))
    return MergeState(tuple(float(p) for p in new_pos), tuple(float(v) for v in new_vel), done)


def ambulance_crossing(state: MergeState, joint_action) -> MergeState | None:
    """The post-step state if the ambulance crosses the merge this step."""
    if state.done[AMBULANCE] or state.positions[AMBULANCE] >= MERGE_POINT:
        return None
    nxt = advance(state, joint_action)
    if nxt.positions[AMBULANCE] >= MERGE_POINT:
        return nxt
    return None


def merge_subsidy_family(num_agents: int, charge_finished: bool = True) -> ContractSpace:
    """Per-unit-distance subsidy theta, settled when the ambulance merges.

    Cars behind the ambulance receive theta times their distance behind it;
    cars ahead pay theta times their lead. Finished cars settle at their
    final recorded position when ``charge_finished`` is set.
    """

    def delta(params, state, joint_action):
        theta = float(params[0])
        out = np.zeros(num_agents)
        if theta == 0.0:
            return out
        crossing = ambulance_crossing(state, joint_action)
        if crossing is None:
            return out
        amb_pos = crossing.positions[AMBULANCE]
        for car in range(num_agents):
            if car == AMBULANCE:
                continue
            if crossing.done[car] and not charge_finished:
                continue
            gap = amb_pos - crossing.positions[car]
            out[car] += theta * gap
            out[AMBULANCE] -= theta * gap
        return out

    return make_space(
        family_id="merge_subsidy",
        param_bounds=[(0.0, SUBSIDY_MAX)],
        num_agents=num_agents,
        delta_fn=delta,
        meta={"charge_finished": charge_finished},
    )


def make_emergency_merge(
    num_agents: int, charge_finished: bool = True
) -> tuple[MarkovGame, ContractSpace]:
    if num_agents < 2:
        raise ValueError("emergency merge needs an ambulance and at least one car")

    start = initial_merge_state(num_agents)
    accel_space = ActionSpace(low=np.array([-ACCEL_LIMIT]), high=np.array([ACCEL_LIMIT]))

    def transition(state, joint_action, rng):
        return advance(state, joint_action)

    def penalties(nxt):
        out = np.zeros(num_agents)
        for i in range(num_agents):
            if not nxt.done[i]:
                out[i] = -AMBULANCE_PENALTY if i == AMBULANCE else -CAR_PENALTY
        return out

    def reward(state, joint_action):
        return penalties(advance(state, joint_action))

    def step(state, joint_action, rng):
        nxt = advance(state, joint_action)
        return penalties(nxt), nxt

    def is_terminal(state):
        return state.all_done

    obs_dim = 1 + 4 + 3 * (num_agents - 1)
    vmax = _vmax(num_agents)

    def observe(state, agent):
        feats = [1.0]
        feats += [
            state.positions[agent] / ROAD_LENGTH,
            state.velocities[agent] / vmax[agent],
            1.0 if state.done[agent] else 0.0,
            (state.positions[agent] - MERGE_POINT) / ROAD_LENGTH,
        ]
        for j in range(num_agents):
            if j == agent:
                continue
            feats += [
                state.positions[j] / ROAD_LENGTH,
                state.velocities[j] / vmax[j],
                1.0 if state.done[j] else 0.0,
            ]
        return np.asarray(feats)

    game = MarkovGame(
        num_agents=num_agents,
        action_spaces=(accel_space,) * num_agents,
        initial_state=start,
        transition=transition,
        reward=reward,
        discount=0.99,
        horizon=MERGE_HORIZON,
        reward_bound=AMBULANCE_PENALTY,
        env_id="merge",
        is_terminal=is_terminal,
        observe=observe,
        obs_dim=obs_dim,
        step=step,
        meta={
            "horizon": MERGE_HORIZON,
            "reward_bound": AMBULANCE_PENALTY,
            "road_length": ROAD_LENGTH,
            "merge_point": MERGE_POINT,
            "follow_gap": FOLLOW_GAP,
            "accel_limit": ACCEL_LIMIT,
            "ambulance_vmax": AMBULANCE_VMAX,
            "car_vmax": CAR_VMAX,
            "car_spawn_band": (CAR_SPAWN_BACK, CAR_SPAWN_FRONT),
            "charge_finished_cars": charge_finished,
            "contract_family": "per-unit distance subsidy at crossing, theta in [0, 100]",
            "gifting_bound": 10.0,
        },
    )
    return game, merge_subsidy_family(num_agents, charge_finished)
