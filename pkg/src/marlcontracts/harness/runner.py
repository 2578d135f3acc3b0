"""Experiment orchestration: run grids of training cells, resumably."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..envs.registry import gifting_bound, make_env
from ..errors import EmptySelectionError
from ..learning.ppo import Hyperparams
from ..learning.protocols import (
    TrainReport,
    train_contracting,
    train_gifting,
    train_joint,
    train_separate,
)
from .config import ExperimentConfig
from .metrics import (
    MetricsRow,
    append_rows,
    read_metrics,
    rows_from_report,
    run_id_for,
    summarize,
)


def hyperparams_from_overrides(overrides: dict, eval_episodes: int | None = None) -> Hyperparams:
    kwargs = dict(overrides)
    if eval_episodes is not None:
        kwargs.setdefault("eval_episodes", eval_episodes)
    if "hidden_sizes" in kwargs:
        kwargs["hidden_sizes"] = tuple(kwargs["hidden_sizes"])
    if "joint_hidden_sizes" in kwargs:
        kwargs["joint_hidden_sizes"] = tuple(kwargs["joint_hidden_sizes"])
    return Hyperparams(**kwargs)


def train_cell(
    env_id: str,
    algorithm: str,
    num_agents: int,
    seed: int,
    budget: int,
    hp: Hyperparams,
    env_params: dict | None = None,
) -> TrainReport:
    """Run one (env, algorithm, agents, seed) training cell."""
    game, space = make_env(env_id, num_agents, **(env_params or {}))
    if algorithm == "separate":
        return train_separate(game, hp, budget, seed)
    if algorithm == "joint":
        return train_joint(game, hp, budget, seed)
    if algorithm == "gifting":
        return train_gifting(game, gifting_bound(game), hp, budget, seed)
    if algorithm == "contracting":
        return train_contracting(game, space, hp, budget, seed)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _cell_worker(args: tuple) -> tuple[str, list, dict]:
    env_id, algorithm, num_agents, seed, budget, overrides, env_params, eval_episodes = args
    hp = hyperparams_from_overrides(overrides, eval_episodes)
    report = train_cell(env_id, algorithm, num_agents, seed, budget, hp, env_params)
    run_id = run_id_for(env_id, algorithm, num_agents, seed)
    rows = rows_from_report(report, run_id)
    final = {
        "run_id": run_id,
        "env": env_id,
        "algorithm": algorithm,
        "num_agents": num_agents,
        "seed": seed,
        "social_mean": report.final_eval.social_mean if report.final_eval else None,
        "social_std": report.final_eval.social_std if report.final_eval else None,
        "per_agent_mean": (
            [float(v) for v in report.final_eval.per_agent_mean]
            if report.final_eval is not None
            else None
        ),
        "acceptance_rate": (
            report.final_eval.acceptance_rate if report.final_eval else None
        ),
        "total_env_steps": report.total_env_steps,
        "fingerprint": report.fingerprint,
    }
    return run_id, rows, final


def run_experiment(config: ExperimentConfig, echo=print) -> dict:
    """Execute the whole grid; returns {"summary": ..., "metrics_path": ...}.

    Completed cells (marker file present) are skipped, so interrupted grids
    resume; a rerun with identical config and seeds rewrites byte-identical
    metrics.
    """
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(exist_ok=True)
    metrics_path = out_dir / "metrics.csv"

    pending = []
    for num_agents, algorithm, seed in config.cells():
        run_id = run_id_for(config.env, algorithm, num_agents, seed)
        if (cells_dir / f"{run_id}.done").exists():
            echo(f"[skip] {run_id} (marker present)")
            continue
        pending.append(
            (
                config.env,
                algorithm,
                num_agents,
                seed,
                config.budget,
                dict(config.hp_overrides),
                dict(config.env_params),
                config.eval_episodes,
            )
        )

    def finish(run_id: str, rows, final) -> None:
        append_rows(metrics_path, rows)
        (cells_dir / f"{run_id}.done").write_text(json.dumps(final, indent=2) + "\n")
        echo(f"[done] {run_id}: final social {final['social_mean']}")

    if config.workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for run_id, rows, final in pool.map(_cell_worker, pending):
                finish(run_id, rows, final)
    else:
        for args in pending:
            run_id, rows, final = _cell_worker(args)
            finish(run_id, rows, final)

    rows = read_metrics(metrics_path)
    summary = summarize(rows)
    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["env", "num_agents", "algorithm", "mean_social", "std_social", "runs"])
        for cell in summary:
            writer.writerow(
                [
                    cell["env"],
                    cell["num_agents"],
                    cell["algorithm"],
                    f"{cell['mean_social']:.6g}",
                    f"{cell['std_social']:.6g}",
                    " ".join(cell["runs"]),
                ]
            )
    return {"summary": summary, "metrics_path": str(metrics_path), "summary_path": str(summary_path)}


def export_plot_data(
    metrics_path: str | Path,
    out_dir: str | Path,
    env: str | None = None,
    num_agents: int | None = None,
    algorithm: str | None = None,
) -> list[str]:
    """Write per-cell series files: iteration vs mean/std social over seeds."""
    rows = read_metrics(metrics_path)
    selected = [
        r
        for r in rows
        if (env is None or r.env == env)
        and (num_agents is None or r.num_agents == num_agents)
        and (algorithm is None or r.algorithm == algorithm)
    ]
    if not selected:
        raise EmptySelectionError(
            f"no metrics match env={env!r} agents={num_agents!r} algorithm={algorithm!r}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells: dict[tuple, dict[int, list[float]]] = {}
    steps: dict[tuple, dict[int, int]] = {}
    for r in selected:
        cell = (r.env, r.num_agents, r.algorithm)
        cells.setdefault(cell, {}).setdefault(r.iteration, []).append(r.social_reward)
        steps.setdefault(cell, {})[r.iteration] = r.env_steps
    written = []
    for (env_id, n, algo), series in sorted(cells.items()):
        path = out_dir / f"{env_id}_n{n}_{algo}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "env_steps", "social_mean", "social_std", "seeds"])
            for iteration in sorted(series):
                values = np.array(series[iteration])
                writer.writerow(
                    [
                        iteration,
                        steps[(env_id, n, algo)][iteration],
                        f"{values.mean():.10g}",
                        f"{values.std():.10g}",
                        len(values),
                    ]
                )
        written.append(str(path))
    return written
