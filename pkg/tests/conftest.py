"""Shared test fixtures and oracle helpers."""
from __future__ import annotations

import numpy as np
import pytest

from advdrive.geometry import Polyline, Rect
from advdrive.net import ConvSpec, NetConfig
from advdrive.scenario import AgentSpec, ScenarioConfig
from advdrive.worldmap import MapGeometry


def straight_scenario(
    *,
    route_length: float = 30.0,
    road_halfwidth: float = 5.25,
    with_intersection: bool = False,
    agents: list[dict] | None = None,
    dt: float = 0.05,
    max_steps: int = 200,
    lane_width: float = 3.5,
) -> ScenarioConfig:
    """Minimal custom world: one straight road along y=0 starting at x=-10."""
    geo = MapGeometry(
        name="test_road",
        lane_width=lane_width,
        drivable_rects=[Rect(-10.0, -road_halfwidth, route_length + 20.0, road_halfwidth)],
        intersection_region=Rect(20.0, -road_halfwidth, 30.0, road_halfwidth)
        if with_intersection
        else None,
        lane_segments=[],
        divider_lines=[],
    )
    if agents is None:
        agents = [{"id": "victim1", "role": "victim", "spawn": (0.0, 0.0), "goal": (route_length, 0.0)}]
    specs = []
    for i, a in enumerate(agents):
        spawn = tuple(a["spawn"])
        goal = tuple(a["goal"])
        specs.append(
            AgentSpec(
                agent_id=a["id"],
                role=a.get("role", "victim"),
                reward_kind=a.get("reward_kind", "victim"),
                spawn=spawn,
                goal=goal,
                route=Polyline(a["route"]) if "route" in a else Polyline([spawn, goal]),
                seed_index=i,
            )
        )
    return ScenarioConfig(
        name="test_road", map=geo, agents=specs, dt=dt, max_steps=max_steps
    )


def tiny_net_config(name: str = "tiny") -> NetConfig:
    """Small 21x21-input stack for fast finite-difference checks."""
    return NetConfig(
        name=name,
        decimation=4,
        convs=(ConvSpec(4, 3, 2), ConvSpec(4, 3, 1)),
        dense_units=8,
    )


def flatten_params(params) -> np.ndarray:
    return np.concatenate([params.arrays[n].ravel() for n, _ in params.config.param_layout()])


def fd_gradient(loss_fn, params, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of loss_fn(params) w.r.t. every parameter."""
    grads = {}
    for name, _ in params.config.param_layout():
        arr = params.arrays[name]
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def grad_close(analytic: np.ndarray, numeric: np.ndarray, rel_tol: float = 1e-4) -> tuple[bool, float]:
    """Relative-error check with an absolute floor for near-zero gradients."""
    a = np.asarray(analytic).ravel()
    b = np.asarray(numeric).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
    rel = np.abs(a - b) / denom
    return bool(np.all(rel < rel_tol)), float(rel.max())


def assert_relu_margin(cache, margin: float = 1e-3):
    """Guarantees the finite-difference probe never crosses a ReLU kink."""
    for layer in cache["convs"]:
        assert np.abs(layer["pre"]).min() > margin
    assert np.abs(cache["pre_dense"]).min() > margin


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
