"""Experiment configuration: a line-based key-value format with includes.

Syntax, one statement per line::

    # comment
    include other.cfg
    env = pd
    env_params.canonical = true
    agents = [2, 4, 8]
    algorithms = [separate, contracting]
    seeds = [0, 1, 2, 3, 4]
    budget = 200000
    hp.lr = 1e-4
    out = results/pd

Dotted keys nest; later assignments (and including files) win. Values
parse as int, float, true/false, [comma, lists] or bare strings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..envs.registry import ENV_IDS, default_batch_size, default_budget
from ..errors import ConfigError

ALGORITHMS = ("separate", "joint", "gifting", "contracting")


def parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [parse_value(part) for part in inner.split(",")]
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _assign(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"key {dotted!r} clashes with a scalar entry")
    node[parts[-1]] = value


def parse_config_text(text: str, base_dir: Path | None = None) -> dict:
    tree: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("include "):
            target = line[len("include "):].strip()
            path = (base_dir / target) if base_dir is not None else Path(target)
            included = parse_config_file(path)
            _merge(tree, included)
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        _assign(tree, key.strip(), parse_value(value))
    return tree


def parse_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), base_dir=path.parent)


def _merge(into: dict, other: dict) -> None:
    for key, value in other.items():
        if isinstance(value, dict) and isinstance(into.get(key), dict):
            _merge(into[key], value)
        else:
            into[key] = value


def serialize_config(tree: dict) -> str:
    lines = []

    def walk(node: dict, prefix: str):
        for key in sorted(node):
            value = node[key]
            dotted = f"{prefix}{key}"
            if isinstance(value, dict):
                walk(value, dotted + ".")
            else:
                lines.append(f"{dotted} = {format_value(value)}")

    walk(tree, "")
    return "\n".join(lines) + "\n"


@dataclass
class ExperimentConfig:
    """One experiment grid: env x agent counts x algorithms x seeds."""

    env: str
    agents: list[int] = field(default_factory=lambda: [2, 4, 8])
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    budget: int | None = None
    env_params: dict = field(default_factory=dict)
    hp_overrides: dict = field(default_factory=dict)
    out: str = "results"
    workers: int = 1
    eval_episodes: int = 100

    def __post_init__(self):
        if self.env not in ENV_IDS:
            raise ConfigError(f"unknown environment {self.env!r}; known: {ENV_IDS}")
        for algo in self.algorithms:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}; known: {ALGORITHMS}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.budget is None:
            self.budget = default_budget(self.env)
        if "train_batch_size" not in self.hp_overrides:
            self.hp_overrides["train_batch_size"] = default_batch_size(self.env)

    @classmethod
    def from_tree(cls, tree: dict) -> "ExperimentConfig":
        known = {
            "env", "agents", "algorithms", "seeds", "budget",
            "env_params", "hp", "out", "workers", "eval_episodes",
        }
        unknown = set(tree) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "env" not in tree:
            raise ConfigError("config needs an 'env' entry")

        def as_list(value):
            return value if isinstance(value, list) else [value]

        kwargs = {"env": str(tree["env"])}
        if "agents" in tree:
            kwargs["agents"] = [int(a) for a in as_list(tree["agents"])]
        if "algorithms" in tree:
            kwargs["algorithms"] = [str(a) for a in as_list(tree["algorithms"])]
        if "seeds" in tree:
            kwargs["seeds"] = [int(s) for s in as_list(tree["seeds"])]
        if "budget" in tree:
            kwargs["budget"] = int(tree["budget"])
        if "env_params" in tree:
            kwargs["env_params"] = dict(tree["env_params"])
        if "hp" in tree:
            kwargs["hp_overrides"] = dict(tree["hp"])
        if "out" in tree:
            kwargs["out"] = str(tree["out"])
        if "workers" in tree:
            kwargs["workers"] = int(tree["workers"])
        if "eval_episodes" in tree:
            kwargs["eval_episodes"] = int(tree["eval_episodes"])
        return cls(**kwargs)

    def to_tree(self) -> dict:
        tree = {
            "env": self.env,
            "agents": list(self.agents),
            "algorithms": list(self.algorithms),
            "seeds": list(self.seeds),
            "budget": self.budget,
            "out": self.out,
            "workers": self.workers,
            "eval_episodes": self.eval_episodes,
        }
        if self.env_params:
            tree["env_params"] = dict(self.env_params)
        if self.hp_overrides:
            tree["hp"] = dict(self.hp_overrides)
        return tree

    def cells(self) -> list[tuple[int, str, int]]:
        """The (agents, algorithm, seed) grid, in execution order."""
        return [
            (n, algo, seed)
            for n in self.agents
            for algo in self.algorithms
            for seed in self.seeds
        ]


def load_experiment(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_tree(parse_config_file(path))
