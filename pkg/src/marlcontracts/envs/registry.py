"""Name-addressable environment constructors and their constants."""

from __future__ import annotations

from ..contracts import ContractSpace
from ..errors import ConfigError
from ..game import MarkovGame
from .gridworld import make_cleanup, make_harvest
from .matrix import make_pd, make_stag_hunt, pd_table, STAG_HUNT_TABLE, STAG_HUNT_CANONICAL
from .merge import make_emergency_merge
from .public_goods import make_public_goods, pg_rewards
import numpy as np

ENV_IDS = ("pd", "stag_hunt", "public_goods", "merge", "harvest", "cleanup")

# envs whose episodes are long; they train on the larger batch size
DYNAMIC_ENVS = ("merge", "harvest", "cleanup")


def make_env(env_id: str, num_agents: int, **params) -> tuple[MarkovGame, ContractSpace]:
    """Build (game, contract family) for a registered environment id.

    ``contract_bound`` overrides the family's parameter interval upper end
    (every bundled family is one-parameter), so configs can address a
    family as id + parameter range.
    """
    bound = params.pop("contract_bound", None)
    try:
        if env_id == "pd":
            built = make_pd(num_agents)
        elif env_id == "stag_hunt":
            built = make_stag_hunt(canonical=bool(params.get("canonical", False)))
        elif env_id == "public_goods":
            built = make_public_goods(num_agents, horizon=int(params.get("horizon", 100)))
        elif env_id == "merge":
            built = make_emergency_merge(
                num_agents, charge_finished=bool(params.get("charge_finished", True))
            )
        elif env_id == "harvest":
            built = make_harvest(num_agents, grid_shape=tuple(params.get("grid_shape", (15, 15))))
        elif env_id == "cleanup":
            built = make_cleanup(num_agents, grid_shape=tuple(params.get("grid_shape", (9, 18))))
        else:
            raise ConfigError(f"unknown environment id {env_id!r}; known: {ENV_IDS}")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot build environment {env_id!r}: {exc}") from exc
    game, space = built
    if bound is not None:
        from dataclasses import replace

        lo, _ = space.param_bounds[0]
        space = replace(space, param_bounds=((lo, float(bound)),) + space.param_bounds[1:])
    return game, space


def gifting_bound(game: MarkovGame) -> float:
    """Gift cap matched to the contract family's transfer bound."""
    return float(game.meta.get("gifting_bound", 1.0))


def default_budget(env_id: str) -> int:
    return 1_000_000 if env_id in DYNAMIC_ENVS else 200_000


def default_batch_size(env_id: str) -> int:
    return 120_000 if env_id in DYNAMIC_ENVS else 12_000


def stage_table(env_id: str, num_agents: int, **params) -> tuple[dict, tuple[str, ...], tuple]:
    """One-shot payoff table for the exactly-solvable environments.

    Returns (table, labels, action_values). Public goods is discretized to
    the investment levels given in ``params`` (default {0, 1}).
    """
    if env_id == "pd":
        return pd_table(num_agents), ("C", "D"), (0, 1)
    if env_id == "stag_hunt":
        table = STAG_HUNT_CANONICAL if params.get("canonical") else STAG_HUNT_TABLE
        return dict(table), ("C", "D"), (0, 1)
    if env_id == "public_goods":
        levels = tuple(params.get("levels", (0.0, 1.0)))
        table = {}
        import itertools

        for profile in itertools.product(range(len(levels)), repeat=num_agents):
            invest = np.array([levels[a] for a in profile])
            table[profile] = tuple(pg_rewards(invest))
        return table, tuple(str(l) for l in levels), levels
    raise ConfigError(f"{env_id!r} has no exact one-shot table")


def environment_card(env_id: str, num_agents: int = 2, **params) -> dict:
    """Every constant an environment is built from, in one mapping."""
    game, space = make_env(env_id, num_agents, **params)
    card = {
        "env_id": env_id,
        "num_agents": num_agents,
        "discount": game.discount,
        "horizon": game.horizon,
        "reward_bound": game.reward_bound,
        "obs_dim": game.obs_dim,
        "contract_family": space.family_id,
        "contract_bounds": list(space.param_bounds),
        "default_budget": default_budget(env_id),
        "train_batch_size": default_batch_size(env_id),
    }
    card.update({k: v for k, v in game.meta.items() if k not in card})
    return card
