"""Multi-agent episode execution and the training phase loop.

Every agent renders its own observation from the shared pre-step world and
all live agents act simultaneously; no agent ever sees another agent's
network, only its rendered pixels. Training phases interleave episode
collection with per-policy PPO updates (each policy updates once its own
buffer holds at least one train batch of whole episodes), verify frozen
policies by checksum after every episode, and write checkpoints plus a
phase manifest sufficient to audit the freeze contracts.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import net
from .checkpoint import Checkpoint, params_checksum, save_checkpoint
from .errors import (
    ConfigurationError,
    FreezeViolationError,
    NonFiniteError,
    PhaseAbortedError,
)
from .net import AdamState, NetworkParams
from .ppo import PpoHyper, Trajectory, build_rollout_batch, update_policy
from .raster import RasterConfig, render
from .rewards import RewardParams, reward_function
from .scenario import ScenarioConfig
from .seeding import KEY_UPDATE_BASE, SeedTree
from .world import init_world, initial_flags, step

FLAG_NAMES = ("cv", "co", "io", "iol")


@dataclass
class AgentPolicy:
    agent_id: str
    role: str
    reward_kind: str
    params: NetworkParams
    adam: AdamState | None = None
    frozen: bool = False
    kl_coef: float = 0.3
    counters: dict = field(default_factory=lambda: {"episodes": 0, "env_steps": 0, "updates": 0})

    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            role=self.role,
            reward_kind=self.reward_kind,
            params=self.params,
            adam=self.adam,
            kl_coef=self.kl_coef,
            counters=dict(self.counters),
        )

    @staticmethod
    def from_checkpoint(ckpt: Checkpoint, agent_id: str, frozen: bool) -> "AgentPolicy":
        counters = dict(ckpt.counters)
        counters.setdefault("episodes", 0)
        counters.setdefault("env_steps", 0)
        counters.setdefault("updates", 0)
        return AgentPolicy(
            agent_id=agent_id,
            role=ckpt.role,
            reward_kind=ckpt.reward_kind,
            params=ckpt.params,
            adam=ckpt.adam,
            frozen=frozen,
            kl_coef=ckpt.kl_coef,
            counters=counters,
        )


@dataclass
class EpisodeLog:
    """Everything an episode leaves behind for metrics and plots."""

    agent_ids: list[str]
    dt: float
    seed_key: list[int]
    ticks: int = 0
    positions: np.ndarray | None = None  # (ticks, n_agents, 4): x, y, heading, speed
    flags: dict = field(default_factory=dict)  # agent -> flag -> list[bool], live ticks only
    events: list = field(default_factory=list)  # {tick, agent_id, flag}
    termination: dict = field(default_factory=dict)  # agent -> {tick, reason}

    def to_dict(self) -> dict:
        return {
            "agent_ids": self.agent_ids,
            "dt": self.dt,
            "seed_key": list(self.seed_key),
            "ticks": self.ticks,
            "positions": [] if self.positions is None else self.positions.tolist(),
            "flags": {a: {k: [bool(b) for b in v] for k, v in per.items()} for a, per in self.flags.items()},
            "events": self.events,
            "termination": self.termination,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeLog":
        log = EpisodeLog(
            agent_ids=list(d["agent_ids"]),
            dt=float(d["dt"]),
            seed_key=list(d["seed_key"]),
            ticks=int(d["ticks"]),
        )
        pos = d.get("positions") or []
        log.positions = np.asarray(pos, dtype=np.float64) if pos else None
        log.flags = {a: {k: list(v) for k, v in per.items()} for a, per in d["flags"].items()}
        log.events = list(d["events"])
        log.termination = dict(d["termination"])
        return log


def run_episode(
    scenario: ScenarioConfig,
    policies: dict[str, AgentPolicy],
    raster_cfg: RasterConfig,
    reward_params: RewardParams,
    max_steps: int,
    seed_tree: SeedTree,
    key_prefix: tuple[int, ...],
    collect: set[str] | None = None,
    action_mode: str = "sample",
) -> tuple[dict[str, Trajectory], EpisodeLog]:
    """Run one episode; returns per-agent trajectories for `collect` agents
    and the episode log. Deterministic in (scenario, policies, key_prefix)."""
    collect = set() if collect is None else set(collect)
    ids = scenario.agent_ids()
    for aid in ids:
        if aid not in policies:
            raise ConfigurationError(f"no policy provided for agent '{aid}'")
    greedy = action_mode == "greedy"

    world = init_world(scenario, seed=seed_tree.sequence(*key_prefix, 0))
    rngs = {
        aid: seed_tree.rng(*key_prefix, 10 + scenario.agent(aid).seed_index) for aid in ids
    }
    prev_flags = initial_flags(world)
    reward_fns = {aid: reward_function(policies[aid].reward_kind) for aid in ids}

    trajectories = {
        aid: Trajectory(agent_id=aid, episode_index=key_prefix[-1] if key_prefix else 0)
        for aid in collect
    }
    log = EpisodeLog(agent_ids=ids, dt=scenario.dt, seed_key=list(key_prefix))
    log.flags = {aid: {k: [] for k in FLAG_NAMES} for aid in ids}
    positions = []

    for t in range(max_steps):
        live = world.live_agents()
        if not live:
            break
        actions = {}
        pending = {}
        for aid in live:
            obs = render(world, aid, raster_cfg)
            logits, value = net.forward(policies[aid].params, obs.pixels)
            chosen = net.greedy_action(logits) if greedy else net.sample_action(logits, rngs[aid])
            actions[aid] = net.action_to_command(chosen.index)
            pending[aid] = (obs, chosen, value)

        world, flags = step(world, actions)

        for aid in live:
            fl = flags[aid]
            for name in FLAG_NAMES:
                value_flag = getattr(fl, name)
                log.flags[aid][name].append(bool(value_flag))
                if value_flag:
                    log.events.append({"tick": world.tick, "agent_id": aid, "flag": name})
            if aid in collect:
                obs, chosen, value = pending[aid]
                reward = reward_fns[aid](prev_flags[aid], fl, reward_params)
                done = world.terminated[aid] or (t == max_steps - 1)
                trajectories[aid].append(
                    obs.pixels, chosen.index, chosen.log_prob, chosen.log_prob_vector,
                    value, reward, done,
                )
            prev_flags[aid] = fl
            if world.terminated[aid] and aid not in log.termination:
                log.termination[aid] = {
                    "tick": world.tick,
                    "reason": world.termination_reason[aid],
                }

        positions.append(
            [
                [
                    world.vehicles[aid].position[0],
                    world.vehicles[aid].position[1],
                    world.vehicles[aid].heading,
                    world.vehicles[aid].speed,
                ]
                for aid in ids
            ]
        )

    log.ticks = len(positions)
    log.positions = (
        np.asarray(positions, dtype=np.float64) if positions else np.zeros((0, len(ids), 4))
    )
    for aid in ids:
        if aid not in log.termination:
            log.termination[aid] = {"tick": None, "reason": None}
    return trajectories, log


@dataclass
class PhaseResult:
    name: str
    episodes_run: int
    steps_run: int
    checkpoint_paths: dict[str, str]
    checkpoint_checksums: dict[str, str]
    manifest_path: str
    episode_rewards: dict[str, list[float]] = field(default_factory=dict)
    status: str = "completed"


class _StatsWriter:
    def __init__(self, path):
        self.path = os.fspath(path)
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")

    def write(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def _save_policy_checkpoints(policies, agent_ids, out_dir, suffix=""):
    paths = {}
    checksums = {}
    for aid in agent_ids:
        path = os.path.join(out_dir, "checkpoints", f"{aid}{suffix}.ckpt")
        checksums[aid] = save_checkpoint(path, policies[aid].to_checkpoint())
        paths[aid] = path
    return paths, checksums


def run_training_phase(
    *,
    phase_name: str,
    phase_key: int,
    scenario: ScenarioConfig,
    policies: dict[str, AgentPolicy],
    hyper: PpoHyper,
    reward_params: RewardParams,
    raster_cfg: RasterConfig,
    episodes: int,
    step_cap: int | None,
    seed_tree: SeedTree,
    out_dir: str,
    checkpoint_every: int = 25,
    config_echo: dict | None = None,
    on_episode_end=None,
) -> PhaseResult:
    """Collect-and-update loop for one phase. Frozen policies are checksum
    verified after every episode; any mutation aborts the phase. A non-finite
    loss or gradient aborts with the last good checkpoints preserved.
    """
    os.makedirs(out_dir, exist_ok=True)
    ids = scenario.agent_ids()
    trainable = [aid for aid in ids if not policies[aid].frozen]
    frozen = [aid for aid in ids if policies[aid].frozen]
    if not trainable:
        raise ConfigurationError(f"phase '{phase_name}' has no trainable policy")

    frozen_checksums = {aid: params_checksum(policies[aid].params) for aid in frozen}
    checksums_in = {aid: params_checksum(policies[aid].params) for aid in ids}
    stats = _StatsWriter(os.path.join(out_dir, "train_log.jsonl"))
    buffers: dict[str, list[Trajectory]] = {aid: [] for aid in trainable}
    episode_rewards: dict[str, list[float]] = {aid: [] for aid in trainable}

    episodes_run = 0
    steps_run = 0
    last_paths: dict[str, str] = {}
    status = "completed"
    abort_message = None
    try:
        for ep in range(episodes):
            if step_cap is not None and steps_run >= step_cap:
                break
            trajs, log = run_episode(
                scenario,
                policies,
                raster_cfg,
                reward_params,
                max_steps=scenario.max_steps,
                seed_tree=seed_tree,
                key_prefix=(phase_key, ep),
                collect=set(trainable),
            )
            episodes_run += 1
            steps_run += log.ticks
            for aid in trainable:
                pol = policies[aid]
                pol.counters["episodes"] += 1
                pol.counters["env_steps"] += len(trajs[aid])
                ep_reward = float(np.sum(trajs[aid].rewards))
                episode_rewards[aid].append(ep_reward)
                stats.write(
                    {"type": "episode", "phase": phase_name, "agent_id": aid,
                     "episode": ep, "reward": ep_reward, "length": len(trajs[aid])}
                )
                buffers[aid].append(trajs[aid])
                buffered = sum(len(t) for t in buffers[aid])
                if buffered >= hyper.train_batch:
                    rng = seed_tree.rng(
                        phase_key,
                        KEY_UPDATE_BASE + pol.counters["updates"],
                        scenario.agent(aid).seed_index,
                    )
                    batch = build_rollout_batch(buffers[aid], hyper.gamma, hyper.gae_lambda)
                    if pol.adam is None:
                        pol.adam = net.init_adam_state(pol.params)
                    pol.params, pol.adam, pol.kl_coef, upd = update_policy(
                        pol.params, pol.adam, batch, hyper, pol.kl_coef, rng
                    )
                    pol.counters["updates"] += 1
                    buffers[aid] = []
                    record = {"type": "update", "phase": phase_name, "agent_id": aid, "episode": ep}
                    record.update(upd)
                    stats.write(record)

            for aid in frozen:
                if params_checksum(policies[aid].params) != frozen_checksums[aid]:
                    raise FreezeViolationError(
                        f"frozen policy '{aid}' changed during phase '{phase_name}'"
                    )
            if on_episode_end is not None:
                on_episode_end(ep, policies)
            if (ep + 1) % checkpoint_every == 0:
                last_paths, _ = _save_policy_checkpoints(policies, trainable, out_dir, "_latest")
    except NonFiniteError as exc:
        status = "aborted"
        abort_message = str(exc)

    if status == "completed":
        paths, checksums = _save_policy_checkpoints(policies, trainable, out_dir)
    else:
        paths, checksums = dict(last_paths), {}

    for aid in frozen:
        if params_checksum(policies[aid].params) != frozen_checksums[aid]:
            raise FreezeViolationError(
                f"frozen policy '{aid}' changed during phase '{phase_name}'"
            )

    stats.close()
    manifest = {
        "phase": phase_name,
        "phase_key": phase_key,
        "master_seed": seed_tree.master_seed,
        "status": status,
        "abort_message": abort_message,
        "episodes_budget": episodes,
        "episodes_run": episodes_run,
        "step_cap": step_cap,
        "steps_run": steps_run,
        "agents": ids,
        "trainable": trainable,
        "frozen": frozen,
        "checksums_in": checksums_in,
        "checkpoints_out": {aid: {"path": paths.get(aid), "checksum": checksums.get(aid)} for aid in trainable},
        "frozen_checksums": frozen_checksums,
        "config": config_echo or {},
    }
    manifest_path = os.path.join(out_dir, "phase_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    if status == "aborted":
        raise PhaseAbortedError(
            f"phase '{phase_name}' aborted: {abort_message}", last_checkpoints=paths
        )
    return PhaseResult(
        name=phase_name,
        episodes_run=episodes_run,
        steps_run=steps_run,
        checkpoint_paths=paths,
        checkpoint_checksums=checksums,
        manifest_path=manifest_path,
        episode_rewards=episode_rewards,
    )
