"""Metrics persistence: one CSV row per training iteration per run."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COLUMNS = (
    "run_id",
    "env",
    "algorithm",
    "num_agents",
    "seed",
    "iteration",
    "env_steps",
    "social_reward",
    "per_agent_rewards",
    "contract_params",
    "acceptance_rate",
)


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    env: str
    algorithm: str
    num_agents: int
    seed: int
    iteration: int
    env_steps: int
    social_reward: float
    per_agent_rewards: tuple[float, ...]
    contract_params: tuple[float, ...] = ()
    acceptance_rate: float | None = None

    def to_record(self) -> list[str]:
        return [
            self.run_id,
            self.env,
            self.algorithm,
            str(self.num_agents),
            str(self.seed),
            str(self.iteration),
            str(self.env_steps),
            _fmt(self.social_reward),
            ";".join(_fmt(v) for v in self.per_agent_rewards),
            ";".join(_fmt(v) for v in self.contract_params),
            "" if self.acceptance_rate is None else _fmt(self.acceptance_rate),
        ]

    @classmethod
    def from_record(cls, record: list[str]) -> "MetricsRow":
        return cls(
            run_id=record[0],
            env=record[1],
            algorithm=record[2],
            num_agents=int(record[3]),
            seed=int(record[4]),
            iteration=int(record[5]),
            env_steps=int(record[6]),
            social_reward=float(record[7]),
            per_agent_rewards=tuple(float(v) for v in record[8].split(";") if v),
            contract_params=tuple(float(v) for v in record[9].split(";") if v),
            acceptance_rate=float(record[10]) if record[10] else None,
        )


def run_id_for(env: str, algorithm: str, num_agents: int, seed: int) -> str:
    return f"{env}-{algorithm}-n{num_agents}-s{seed}"


def rows_from_report(report, run_id: str) -> list[MetricsRow]:
    out = []
    for it in report.iterations:
        out.append(
            MetricsRow(
                run_id=run_id,
                env=report.env_id,
                algorithm=report.algorithm,
                num_agents=report.num_agents,
                seed=report.seed,
                iteration=it.iteration,
                env_steps=it.env_steps,
                social_reward=it.mean_social,
                per_agent_rewards=tuple(float(v) for v in np.atleast_1d(it.per_agent)),
                contract_params=() if it.theta_mean is None else (it.theta_mean,),
                acceptance_rate=it.acceptance_rate,
            )
        )
    return out


def read_metrics(path: str | Path) -> list[MetricsRow]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and tuple(header) != COLUMNS:
            raise ValueError(f"unexpected metrics schema: {header}")
        return [MetricsRow.from_record(rec) for rec in reader]


def append_rows(path: str | Path, rows: list[MetricsRow]) -> None:
    """Append rows, dropping any existing rows with the same run ids."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    incoming = {row.run_id for row in rows}
    existing = [r for r in read_metrics(path) if r.run_id not in incoming]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in existing + rows:
            writer.writerow(row.to_record())


def summarize(rows: list[MetricsRow], tail: int = 5) -> list[dict]:
    """Mean and std of end-of-training social reward per grid cell.

    A run's end value is the mean over its last ``tail`` iteration rows;
    the cell aggregates those values over seeds.
    """
    by_cell: dict[tuple, dict[str, list]] = {}
    by_run: dict[str, list[MetricsRow]] = {}
    for row in rows:
        by_run.setdefault(row.run_id, []).append(row)
    for run_id, run_rows in by_run.items():
        run_rows.sort(key=lambda r: r.iteration)
        last = run_rows[-tail:]
        value = float(np.mean([r.social_reward for r in last]))
        cell = (run_rows[0].env, run_rows[0].num_agents, run_rows[0].algorithm)
        by_cell.setdefault(cell, {"values": [], "runs": []})
        by_cell[cell]["values"].append(value)
        by_cell[cell]["runs"].append(run_id)
    out = []
    for (env, n, algo), data in sorted(by_cell.items()):
        values = np.array(data["values"])
        out.append(
            {
                "env": env,
                "num_agents": n,
                "algorithm": algo,
                "mean_social": float(values.mean()),
                "std_social": float(values.std()),
                "runs": sorted(data["runs"]),
            }
        )
    return out
