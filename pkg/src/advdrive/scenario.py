"""Scenario definitions: which agents exist, where they spawn, what route
each one follows, and the vehicle/simulation parameters shared by all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import worldmap
from .errors import ConfigurationError
from .geometry import Polyline, smooth_corners
from .worldmap import MapGeometry

ROLES = ("victim", "adversary")
REWARD_KINDS = ("victim", "adv_collision", "adv_offroad")

VICTIM_1 = "victim1"
VICTIM_2 = "victim2"
ADVERSARY = "adversary"


@dataclass(frozen=True)
class VehicleParams:
    """Kinematic bicycle parameters, identical for every agent."""

    length: float = 4.5
    width: float = 2.0
    wheelbase: float = 2.7
    accel_max: float = 4.0
    brake_max: float = 8.0
    steer_max_deg: float = 35.0
    drag: float = 0.1
    speed_max: float = 15.0

    @property
    def steer_max_rad(self) -> float:
        return math.radians(self.steer_max_deg)


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    role: str
    reward_kind: str
    spawn: tuple[float, float]
    goal: tuple[float, float]
    route: Polyline
    seed_index: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown role '{self.role}' for agent {self.agent_id}")
        if self.reward_kind not in REWARD_KINDS:
            raise ConfigurationError(
                f"unknown reward_kind '{self.reward_kind}' for agent {self.agent_id}"
            )

    def payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "role": self.role,
            "spawn": list(self.spawn),
            "goal": list(self.goal),
            "route": self.route.points.tolist(),
        }


@dataclass
class ScenarioConfig:
    name: str
    map: MapGeometry
    agents: list[AgentSpec]
    dt: float = 0.05
    max_steps: int = 500
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    spawn_jitter: float = 0.0
    goal_tolerance: float = 1.0
    offroad_threshold: float | None = None  # None -> lane_width / 2

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        seen = set()
        for spec in self.agents:
            if spec.agent_id in seen:
                raise ConfigurationError(f"duplicate agent id '{spec.agent_id}'")
            seen.add(spec.agent_id)

    @property
    def lateral_limit(self) -> float:
        if self.offroad_threshold is not None:
            return self.offroad_threshold
        return self.map.lane_width / 2.0

    def agent(self, agent_id: str) -> AgentSpec:
        for spec in self.agents:
            if spec.agent_id == agent_id:
                return spec
        raise ConfigurationError(f"no agent '{agent_id}' in scenario '{self.name}'")

    def agent_ids(self) -> list[str]:
        return [a.agent_id for a in self.agents]

    def victims(self) -> list[AgentSpec]:
        return [a for a in self.agents if a.role == "victim"]

    def adversaries(self) -> list[AgentSpec]:
        return [a for a in self.agents if a.role == "adversary"]

    def subset(self, agent_ids) -> "ScenarioConfig":
        """Same world with only the named agents present."""
        wanted = list(agent_ids)
        missing = [a for a in wanted if a not in self.agent_ids()]
        if missing:
            raise ConfigurationError(f"subset names unknown agents: {missing}")
        kept = [a for a in self.agents if a.agent_id in wanted]
        return replace(self, agents=kept)

    def with_reward_kind(self, agent_id: str, reward_kind: str) -> "ScenarioConfig":
        updated = [
            replace(a, reward_kind=reward_kind) if a.agent_id == agent_id else a
            for a in self.agents
        ]
        if agent_id not in self.agent_ids():
            raise ConfigurationError(f"no agent '{agent_id}' in scenario '{self.name}'")
        return replace(self, agents=updated)

    def fingerprint_payload(self) -> dict:
        """Everything that defines the evaluation world except the policy set.

        Adversary entries are excluded on purpose: reports for baseline and
        attack conditions must compare as the same scenario.
        """
        return {
            "map": self.map.payload(),
            "dt": self.dt,
            "goal_tolerance": self.goal_tolerance,
            "lateral_limit": self.lateral_limit,
            "vehicle": {
                "length": self.vehicle.length,
                "width": self.vehicle.width,
                "wheelbase": self.vehicle.wheelbase,
                "accel_max": self.vehicle.accel_max,
                "brake_max": self.vehicle.brake_max,
                "steer_max_deg": self.vehicle.steer_max_deg,
                "drag": self.vehicle.drag,
                "speed_max": self.vehicle.speed_max,
            },
            "victims": [a.payload() for a in self.victims()],
        }


def _route_or_straight(spawn, goal, waypoints=None, radius: float = 6.0) -> Polyline:
    if waypoints is None:
        return Polyline([spawn, goal])
    return smooth_corners(waypoints, radius=radius)


def t_intersection_scenario(
    lane_width: float = 3.5,
    dt: float = 0.05,
    max_steps: int = 500,
    spawn_jitter: float = 0.0,
    adversary_reward: str = "adv_collision",
) -> ScenarioConfig:
    """Three-agent T-intersection: two victims crossing, one adversary turning in.

    victim1 approaches from the east and turns north up the stem; victim2
    drives straight west-to-east; the adversary comes down the stem and turns
    west, crossing both victims' paths.
    """
    geo = worldmap.t_intersection_map(lane_width)
    wb, eb = worldmap.WESTBOUND_Y, worldmap.EASTBOUND_Y
    nb, sb = worldmap.NORTHBOUND_X, worldmap.SOUTHBOUND_X
    agents = [
        AgentSpec(
            agent_id=VICTIM_1,
            role="victim",
            reward_kind="victim",
            spawn=(188.0, wb),
            goal=(nb, 75.7),
            route=_route_or_straight((188.0, wb), (nb, 75.7), [(188.0, wb), (nb, wb), (nb, 75.7)]),
            seed_index=0,
        ),
        AgentSpec(
            agent_id=VICTIM_2,
            role="victim",
            reward_kind="victim",
            spawn=(147.6, 62.6),
            goal=(191.2, eb),
            route=Polyline([(147.6, 62.6), (191.2, eb)]),
            seed_index=1,
        ),
        AgentSpec(
            agent_id=ADVERSARY,
            role="adversary",
            reward_kind=adversary_reward,
            spawn=(sb, 80.0),
            goal=(144.0, wb),
            route=_route_or_straight((sb, 80.0), (144.0, wb), [(sb, 80.0), (sb, wb), (144.0, wb)]),
            seed_index=2,
        ),
    ]
    return ScenarioConfig(
        name="t_intersection",
        map=geo,
        agents=agents,
        dt=dt,
        max_steps=max_steps,
        spawn_jitter=spawn_jitter,
    )


def corridor_scenario(
    length: float = 50.0,
    lane_width: float = 3.5,
    dt: float = 0.05,
    max_steps: int = 250,
    spawn_jitter: float = 0.0,
) -> ScenarioConfig:
    """Single victim driving a straight corridor; used for sanity training."""
    geo = worldmap.corridor_map(length, lane_width)
    agent = AgentSpec(
        agent_id=VICTIM_1,
        role="victim",
        reward_kind="victim",
        spawn=(0.0, 0.0),
        goal=(length, 0.0),
        route=Polyline([(0.0, 0.0), (length, 0.0)]),
        seed_index=0,
    )
    return ScenarioConfig(
        name="corridor",
        map=geo,
        agents=[agent],
        dt=dt,
        max_steps=max_steps,
        spawn_jitter=spawn_jitter,
    )


def custom_scenario(
    geo: MapGeometry,
    agent_dicts: list[dict],
    dt: float = 0.05,
    max_steps: int = 500,
    spawn_jitter: float = 0.0,
) -> ScenarioConfig:
    """Scenario from plain dicts (the config-file path)."""
    agents = []
    for i, raw in enumerate(agent_dicts):
        spawn = tuple(float(v) for v in raw["spawn"])
        goal = tuple(float(v) for v in raw["goal"])
        waypoints = raw.get("route")
        route = (
            Polyline(np.asarray(waypoints, dtype=float))
            if waypoints
            else Polyline([spawn, goal])
        )
        agents.append(
            AgentSpec(
                agent_id=str(raw["id"]),
                role=str(raw["role"]),
                reward_kind=str(raw.get("reward_kind", "victim")),
                spawn=spawn,
                goal=goal,
                route=route,
                seed_index=i,
            )
        )
    return ScenarioConfig(
        name="custom",
        map=geo,
        agents=agents,
        dt=dt,
        max_steps=max_steps,
        spawn_jitter=spawn_jitter,
    )
