"""The six experimental domains, addressable by name via the registry."""

from .gridworld import make_cleanup, make_harvest
from .matrix import make_pd, make_stag_hunt
from .merge import make_emergency_merge
from .public_goods import make_public_goods
from .registry import ENV_IDS, environment_card, make_env, stage_table

__all__ = [
    "ENV_IDS",
    "environment_card",
    "make_cleanup",
    "make_emergency_merge",
    "make_env",
    "make_harvest",
    "make_pd",
    "make_public_goods",
    "make_stag_hunt",
    "stage_table",
]
