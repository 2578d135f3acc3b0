"""Command-line interface.

Subcommands: solve (exact SPE of one-shot contracting games), train (one
cell), run (a full experiment grid), export-plots, envcard. Exit codes:
0 success, 2 configuration error, 3 runtime failure. The MARLCONTRACTS_OUT
environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..contracts import add_signing_transfer, null_only_family
from ..envs.registry import ENV_IDS, environment_card, make_env, stage_table
from ..equilibrium import (
    StageGame,
    solve_contract_spe,
    stage_game_from_table,
    proposer_value_upper_bound,
    verify_theorem1,
)
from ..errors import ConfigError, MarlContractsError
from .config import ALGORITHMS, ExperimentConfig, load_experiment, parse_value
from .metrics import append_rows, rows_from_report, run_id_for
from .runner import export_plot_data, hyperparams_from_overrides, run_experiment, train_cell


def _out_root() -> str:
    return os.environ.get("MARLCONTRACTS_OUT", "results")


def _solvable_stage(env_id: str, num_agents: int) -> StageGame:
    table, labels, values = stage_table(env_id, num_agents)
    return stage_game_from_table(table, labels, values)


def cmd_solve(args) -> int:
    stage = _solvable_stage(args.env, args.agents)
    _, family = make_env(args.env, args.agents)
    if args.family == "null":
        family = null_only_family(args.agents)
    elif args.family == "fine_signing":
        game, _ = make_env(args.env, args.agents)
        family = add_signing_transfer(family, bound=2.0 * game.reward_bound)
    solution = solve_contract_spe(stage, family, args.grid_step)
    report = verify_theorem1(solution, stage)
    bound = proposer_value_upper_bound(stage)

    params = ",".join(f"{p:g}" for p in solution.contract.params)
    values = ",".join(f"{v:g}" for v in solution.values)
    print(f"env:            {args.env} (N={args.agents})")
    print(f"family:         {family.family_id} (grid step {args.grid_step:g})")
    print(f"contract:       {solution.contract.describe()}")
    print(f"play profile:   {'/'.join(solution.play_labels(stage))}")
    print(f"values:         {values}")
    print(f"welfare:        {solution.welfare:g}")
    print(f"rejection play: {'/'.join(stage.profile_label(solution.rejection_profile))}")
    print(f"proposer bound: {bound:g}")
    print(f"theorem1_gap:   {report.gap:g} (tolerance {report.tolerance:g}, holds={report.holds})")
    if args.csv:
        header = "env,num_agents,family,grid_step,contract_params,play_profile,values,welfare,bound,theorem1_gap"
        line = ",".join(
            [
                args.env,
                str(args.agents),
                family.family_id,
                f"{args.grid_step:g}",
                params.replace(",", ";"),
                "/".join(solution.play_labels(stage)),
                values.replace(",", ";"),
                f"{solution.welfare:g}",
                f"{bound:g}",
                f"{report.gap:g}",
            ]
        )
        path = Path(args.csv)
        new = not path.exists()
        with path.open("a") as fh:
            if new:
                fh.write(header + "\n")
            fh.write(line + "\n")
        print(f"appended record to {path}")
    return 0


def cmd_train(args) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        if key.startswith("hp."):
            key = key[3:]
        overrides[key] = parse_value(value)
    hp = hyperparams_from_overrides(overrides, args.eval_episodes)
    report = train_cell(args.env, args.algo, args.agents, args.seed, args.budget, hp)
    run_id = run_id_for(args.env, args.algo, args.agents, args.seed)
    out = Path(args.out or _out_root())
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    append_rows(metrics_path, rows_from_report(report, run_id))
    final = report.final_eval
    print(f"run {run_id}: {report.total_env_steps} env steps, "
          f"final social {final.social_mean:.4g} +- {final.social_std:.4g}")
    print(f"metrics appended to {metrics_path}")
    return 0


def cmd_run(args) -> int:
    config = load_experiment(args.config)
    if args.workers is not None:
        config.workers = args.workers
    if args.out is not None:
        config.out = args.out
    result = run_experiment(config)
    print(f"metrics: {result['metrics_path']}")
    print(f"summary: {result['summary_path']}")
    for cell in result["summary"]:
        print(
            f"  {cell['env']} n={cell['num_agents']} {cell['algorithm']}: "
            f"{cell['mean_social']:.4g} +- {cell['std_social']:.4g}"
        )
    return 0


def cmd_export_plots(args) -> int:
    written = export_plot_data(
        args.metrics,
        args.out or (_out_root() + "/plots"),
        env=args.env,
        num_agents=args.agents,
        algorithm=args.algo,
    )
    for path in written:
        print(path)
    return 0


def cmd_envcard(args) -> int:
    envs = [args.env] if args.env else list(ENV_IDS)
    for env_id in envs:
        card = environment_card(env_id, args.agents)
        print(f"[{env_id}]")
        for key in sorted(card):
            print(f"  {key} = {card[key]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marlcontracts",
        description="Reward-transfer contracts for Markov games: exact solving and training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact SPE of the one-shot contracting game")
    p.add_argument("--env", required=True, choices=["pd", "stag_hunt", "public_goods"])
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--grid-step", type=float, default=0.25, dest="grid_step")
    p.add_argument("--family", choices=["fine", "fine_signing", "null"], default="fine_signing")
    p.add_argument("--csv", help="append a CSV record here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train one experiment cell")
    p.add_argument("--env", required=True, choices=list(ENV_IDS))
    p.add_argument("--algo", required=True, choices=list(ALGORITHMS))
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-episodes", type=int, default=100, dest="eval_episodes")
    p.add_argument("--set", action="append", help="hyperparameter override key=value")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run a config-defined experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("export-plots", help="aggregate metrics into plot series")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out")
    p.add_argument("--env")
    p.add_argument("--agents", type=int)
    p.add_argument("--algo")
    p.set_defaults(func=cmd_export_plots)

    p = sub.add_parser("envcard", help="print environment constants")
    p.add_argument("--env", choices=list(ENV_IDS))
    p.add_argument("--agents", type=int, default=2)
    p.set_defaults(func=cmd_envcard)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MarlContractsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
