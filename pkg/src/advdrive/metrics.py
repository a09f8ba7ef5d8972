"""Evaluation metrics and condition comparison.

Per victim and episode: the fraction of its simulated ticks with a vehicle
collision (cv_rate), an object collision (co_rate), or an out-of-lane flag
(os_rate), plus time-to-first-collision in seconds (absent when the episode
had no collision). Reports average over a fixed number of frozen-policy
episodes and carry a scenario fingerprint so only like-for-like conditions
can be compared.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .orchestrator import AgentPolicy, EpisodeLog, run_episode
from .raster import RasterConfig
from .rewards import RewardParams
from .scenario import ScenarioConfig
from .seeding import SeedTree

RATE_FLAGS = {"cv_rate": "cv", "co_rate": "co", "os_rate": "iol"}


@dataclass
class VictimEpisodeMetrics:
    cv_rate: float
    co_rate: float
    os_rate: float
    ttfc: float | None
    ticks: int

    def as_dict(self) -> dict:
        return {
            "cv_rate": self.cv_rate,
            "co_rate": self.co_rate,
            "os_rate": self.os_rate,
            "ttfc": self.ttfc,
            "ticks": self.ticks,
        }


def episode_metrics(log: EpisodeLog, agent_id: str) -> VictimEpisodeMetrics:
    """Error rates over the ticks this agent was actually simulated."""
    flags = log.flags[agent_id]
    ticks = len(flags["cv"])
    if ticks == 0:
        return VictimEpisodeMetrics(0.0, 0.0, 0.0, None, 0)
    cv = np.asarray(flags["cv"], dtype=bool)
    co = np.asarray(flags["co"], dtype=bool)
    iol = np.asarray(flags["iol"], dtype=bool)
    collided = cv | co
    ttfc = None
    if collided.any():
        first = int(np.flatnonzero(collided)[0])
        ttfc = (first + 1) * log.dt
    return VictimEpisodeMetrics(
        cv_rate=float(cv.mean()),
        co_rate=float(co.mean()),
        os_rate=float(iol.mean()),
        ttfc=ttfc,
        ticks=ticks,
    )


@dataclass
class MetricsReport:
    label: str
    episodes: int
    max_steps: int
    action_mode: str
    master_seed: int
    condition_key: int
    fingerprint: str
    victims: dict = field(default_factory=dict)  # agent -> aggregate dict
    per_episode: dict = field(default_factory=dict)  # agent -> list of episode dicts

    def composite(self, agent_id: str) -> float:
        v = self.victims[agent_id]
        return v["mean_cv_rate"] + v["mean_co_rate"] + v["mean_os_rate"]

    def mean_composite(self) -> float:
        return float(np.mean([self.composite(a) for a in sorted(self.victims)]))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "episodes": self.episodes,
            "max_steps": self.max_steps,
            "action_mode": self.action_mode,
            "master_seed": self.master_seed,
            "condition_key": self.condition_key,
            "fingerprint": self.fingerprint,
            "victims": self.victims,
            "per_episode": self.per_episode,
        }

    def to_json_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1).encode()

    def save(self, path) -> None:
        path = os.fspath(path)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(self.to_json_bytes())

    @staticmethod
    def load(path) -> "MetricsReport":
        with open(path, "rb") as fh:
            d = json.loads(fh.read().decode())
        return MetricsReport(
            label=d["label"],
            episodes=d["episodes"],
            max_steps=d["max_steps"],
            action_mode=d["action_mode"],
            master_seed=d["master_seed"],
            condition_key=d["condition_key"],
            fingerprint=d["fingerprint"],
            victims=d["victims"],
            per_episode=d["per_episode"],
        )

    def text_table(self) -> str:
        lines = [f"condition: {self.label}  (episodes={self.episodes}, mode={self.action_mode})"]
        header = f"{'metric':<28}" + "".join(f"{a:>14}" for a in sorted(self.victims))
        lines.append(header)
        for metric, title in (
            ("mean_cv_rate", "collision with cars"),
            ("mean_co_rate", "collision with objects"),
            ("mean_os_rate", "offroad steering"),
            ("mean_ttfc", "time to first collision"),
        ):
            row = f"{title:<28}"
            for a in sorted(self.victims):
                v = self.victims[a][metric]
                row += f"{'-':>14}" if v is None else f"{v:>14.4f}"
            lines.append(row)
        return "\n".join(lines)


def scenario_fingerprint(
    scenario: ScenarioConfig, raster_cfg: RasterConfig, episodes: int, max_steps: int, action_mode: str
) -> str:
    payload = {
        "scenario": scenario.fingerprint_payload(),
        "raster": {
            "mode": raster_cfg.resolution_mode,
            "view_ahead": raster_cfg.view_ahead,
            "view_side": raster_cfg.view_side,
        },
        "episodes": episodes,
        "max_steps": max_steps,
        "action_mode": action_mode,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


_WORKER_CTX: dict = {}


def _eval_worker_init(scenario, policies, raster_cfg, max_steps, master_seed, condition_key, action_mode):
    _WORKER_CTX.update(
        scenario=scenario,
        policies=policies,
        raster_cfg=raster_cfg,
        max_steps=max_steps,
        seed_tree=SeedTree(master_seed),
        condition_key=condition_key,
        action_mode=action_mode,
    )


def _eval_one_episode(ep: int):
    ctx = _WORKER_CTX
    _, log = run_episode(
        ctx["scenario"],
        ctx["policies"],
        ctx["raster_cfg"],
        RewardParams(),
        max_steps=ctx["max_steps"],
        seed_tree=ctx["seed_tree"],
        key_prefix=(ctx["condition_key"], ep),
        collect=set(),
        action_mode=ctx["action_mode"],
    )
    return ep, log


def evaluate(
    scenario: ScenarioConfig,
    policies: dict[str, AgentPolicy],
    raster_cfg: RasterConfig,
    *,
    label: str,
    episodes: int,
    max_steps: int,
    seed_tree: SeedTree,
    condition_key: int,
    action_mode: str = "sample",
    workers: int = 1,
    keep_logs: int = 1,
) -> tuple[MetricsReport, list[EpisodeLog]]:
    """Run frozen-policy test episodes and aggregate per-victim metrics.

    Deterministic in (scenario, policies, master seed, condition_key)
    regardless of worker count; logs for the first `keep_logs` episodes are
    returned for plotting.
    """
    victim_ids = [a.agent_id for a in scenario.victims()]
    if workers > 1:
        init_args = (
            scenario, policies, raster_cfg, max_steps,
            seed_tree.master_seed, condition_key, action_mode,
        )
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_eval_worker_init, initargs=init_args
        ) as pool:
            results = sorted(pool.map(_eval_one_episode, range(episodes)))
        logs = [log for _, log in results]
    else:
        logs = []
        for ep in range(episodes):
            _, log = run_episode(
                scenario,
                policies,
                raster_cfg,
                RewardParams(),
                max_steps=max_steps,
                seed_tree=seed_tree,
                key_prefix=(condition_key, ep),
                collect=set(),
                action_mode=action_mode,
            )
            logs.append(log)

    per_episode = {aid: [episode_metrics(log, aid) for log in logs] for aid in victim_ids}
    victims = {aid: aggregate_episode_metrics(per_episode[aid]) for aid in victim_ids}
    report = MetricsReport(
        label=label,
        episodes=episodes,
        max_steps=max_steps,
        action_mode=action_mode,
        master_seed=seed_tree.master_seed,
        condition_key=condition_key,
        fingerprint=scenario_fingerprint(scenario, raster_cfg, episodes, max_steps, action_mode),
        victims=victims,
        per_episode={aid: [m.as_dict() for m in per_episode[aid]] for aid in victim_ids},
    )
    return report, logs[: max(0, keep_logs)]


def aggregate_episode_metrics(metrics_list) -> dict:
    """Averages over episodes; ttfc averages only episodes with a collision.

    Uses exact summation so aggregation is bit-identical under any episode
    ordering (evaluation may run episodes in parallel).
    """
    n = len(metrics_list)
    ttfcs = sorted(m.ttfc for m in metrics_list if m.ttfc is not None)

    def exact_mean(values):
        values = list(values)
        return math.fsum(values) / len(values) if values else 0.0

    return {
        "episodes": n,
        "mean_cv_rate": exact_mean(m.cv_rate for m in metrics_list),
        "mean_co_rate": exact_mean(m.co_rate for m in metrics_list),
        "mean_os_rate": exact_mean(m.os_rate for m in metrics_list),
        "mean_ttfc": exact_mean(ttfcs) if ttfcs else None,
        "episodes_with_collision": len(ttfcs),
    }


@dataclass
class ComparisonTable:
    labels: list[str]
    victims: list[str]
    cells: dict  # (label, victim) -> metric dict
    deltas: dict  # (label, victim) -> composite delta vs first label

    def to_dict(self) -> dict:
        return {
            "labels": self.labels,
            "victims": self.victims,
            "cells": {f"{l}|{v}": m for (l, v), m in self.cells.items()},
            "composite_deltas_vs_first": {f"{l}|{v}": d for (l, v), d in self.deltas.items()},
        }

    def to_text(self) -> str:
        width = 16
        lines = ["Victim driving error comparison (rows: metrics, columns: condition/victim)"]
        head = f"{'metric':<26}"
        for label in self.labels:
            for v in self.victims:
                head += f"{label + '/' + v:>{width}}"[: width * 99]
        lines.append(head)
        rows = (
            ("collision with cars", "mean_cv_rate"),
            ("collision with objects", "mean_co_rate"),
            ("offroad steering", "mean_os_rate"),
            ("time to first collision", "mean_ttfc"),
            ("composite error", "composite"),
        )
        for title, key in rows:
            row = f"{title:<26}"
            for label in self.labels:
                for v in self.victims:
                    m = self.cells[(label, v)]
                    val = m.get(key)
                    row += f"{'-':>{width}}" if val is None else f"{val:>{width}.4f}"
            lines.append(row)
        delta_row = f"{'composite delta':<26}"
        for label in self.labels:
            for v in self.victims:
                d = self.deltas[(label, v)]
                cell = "baseline" if d is None else f"{d:+.4f} {'worse' if d > 0 else 'better' if d < 0 else 'same'}"
                delta_row += f"{cell:>{width}}"
        lines.append(delta_row)
        return "\n".join(lines)

    def save(self, json_path, text_path) -> None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        with open(text_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text() + "\n")


def compare(reports: list[MetricsReport]) -> ComparisonTable:
    """Side-by-side report comparison; all reports must share a fingerprint."""
    if len(reports) < 2:
        raise ContractViolationError("compare needs at least two reports")
    base = reports[0]
    for r in reports[1:]:
        if r.fingerprint != base.fingerprint:
            raise ContractViolationError(
                f"report '{r.label}' has fingerprint {r.fingerprint[:12]}..., "
                f"expected {base.fingerprint[:12]}... (different scenario or eval protocol)"
            )
    victims = sorted(base.victims)
    labels = [r.label for r in reports]
    cells = {}
    deltas = {}
    for r in reports:
        for v in victims:
            m = dict(r.victims[v])
            m["composite"] = r.composite(v)
            cells[(r.label, v)] = m
            deltas[(r.label, v)] = (
                None if r is base else r.composite(v) - base.composite(v)
            )
    return ComparisonTable(labels=labels, victims=victims, cells=cells, deltas=deltas)
