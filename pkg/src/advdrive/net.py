"""Policy/value network: conv stack -> dense trunk -> 9 action logits + 1 value.

Forward, reverse-mode gradients, and Adam are implemented directly on
float64 numpy arrays (convolutions via im2col + BLAS). Two presets share
the 84x84x3 input contract:

* ``full84``: 32@8x8/4, 64@4x4/2, 64@3x3/1, dense 512 (the fidelity net).
* ``lite21``: block-decimates the input to 21x21 (the exact inverse of the
  lite raster's pixel replication), then 8@5x5/2, 16@3x3/2, 16@3x3/1,
  dense 64. Small enough for finite-difference checking and fast desk runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolationError, NonFiniteError
from .world import ActionCommand

INPUT_RES = 84
INPUT_CHANNELS = 3
N_ACTIONS = 9

STEER_VALUES = (-0.5, 0.0, 0.5)
THROTTLE_ON = 0.6
BRAKE_ON = 0.6


def action_to_command(index: int) -> ActionCommand:
    """Fixed 3x3 grid: steer {-0.5, 0, +0.5} x {throttle, coast, brake}."""
    if not 0 <= index < N_ACTIONS:
        raise ContractViolationError(f"action index {index} outside 0..{N_ACTIONS - 1}")
    steer = STEER_VALUES[index // 3]
    longitudinal = index % 3
    if longitudinal == 0:
        return ActionCommand(steer=steer, throttle=THROTTLE_ON, brake=0.0)
    if longitudinal == 1:
        return ActionCommand(steer=steer, throttle=0.0, brake=0.0)
    return ActionCommand(steer=steer, throttle=0.0, brake=BRAKE_ON)


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class NetConfig:
    name: str
    decimation: int
    convs: tuple[ConvSpec, ...]
    dense_units: int

    def core_res(self) -> int:
        return INPUT_RES // self.decimation

    def conv_output_sizes(self) -> list[int]:
        size = self.core_res()
        sizes = []
        for c in self.convs:
            if size < c.kernel:
                raise ContractViolationError(
                    f"conv kernel {c.kernel} does not fit input of size {size}"
                )
            size = (size - c.kernel) // c.stride + 1
            sizes.append(size)
        return sizes

    def flat_features(self) -> int:
        return self.conv_output_sizes()[-1] ** 2 * self.convs[-1].filters

    def param_layout(self) -> list[tuple[str, tuple[int, ...]]]:
        layout = []
        in_ch = INPUT_CHANNELS
        for i, c in enumerate(self.convs):
            layout.append((f"conv{i + 1}/w", (c.kernel, c.kernel, in_ch, c.filters)))
            layout.append((f"conv{i + 1}/b", (c.filters,)))
            in_ch = c.filters
        layout.append(("dense/w", (self.flat_features(), self.dense_units)))
        layout.append(("dense/b", (self.dense_units,)))
        layout.append(("policy/w", (self.dense_units, N_ACTIONS)))
        layout.append(("policy/b", (N_ACTIONS,)))
        layout.append(("value/w", (self.dense_units, 1)))
        layout.append(("value/b", (1,)))
        return layout

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "decimation": self.decimation,
            "convs": [[c.filters, c.kernel, c.stride] for c in self.convs],
            "dense_units": self.dense_units,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetConfig":
        return NetConfig(
            name=str(d["name"]),
            decimation=int(d["decimation"]),
            convs=tuple(ConvSpec(int(f), int(k), int(s)) for f, k, s in d["convs"]),
            dense_units=int(d["dense_units"]),
        )


def full84_config() -> NetConfig:
    return NetConfig(
        name="full84",
        decimation=1,
        convs=(ConvSpec(32, 8, 4), ConvSpec(64, 4, 2), ConvSpec(64, 3, 1)),
        dense_units=512,
    )


def lite21_config() -> NetConfig:
    return NetConfig(
        name="lite21",
        decimation=4,
        convs=(ConvSpec(8, 5, 2), ConvSpec(16, 3, 2), ConvSpec(16, 3, 1)),
        dense_units=64,
    )


def net_config_for_mode(obs_mode: str) -> NetConfig:
    if obs_mode == "full84":
        return full84_config()
    if obs_mode == "lite21":
        return lite21_config()
    raise ContractViolationError(f"unknown obs mode '{obs_mode}'")


@dataclass
class NetworkParams:
    config: NetConfig
    arrays: dict[str, np.ndarray]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def check_finite(self):
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise NonFiniteError(f"parameter array '{name}' contains NaN/Inf")

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays.values())


def _orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    rows, cols = max(fan_in, fan_out), min(fan_in, fan_out)
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    q = q * signs[None, :]
    if fan_in < fan_out:
        q = q.T
    return gain * q


def init_params(config: NetConfig, seed) -> NetworkParams:
    """Orthogonal weights (gain sqrt(2) in the trunk, 0.01 policy head,
    1.0 value head), zero biases. The small policy gain keeps the initial
    policy near-uniform."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in config.param_layout():
        if name.endswith("/b"):
            arrays[name] = np.zeros(shape, dtype=np.float64)
            continue
        if name == "policy/w":
            gain = 0.01
        elif name == "value/w":
            gain = 1.0
        else:
            gain = math.sqrt(2.0)
        fan_out = shape[-1]
        fan_in = int(np.prod(shape[:-1]))
        w = _orthogonal(rng, fan_in, fan_out, gain).reshape(shape)
        arrays[name] = np.ascontiguousarray(w)
    return NetworkParams(config=config, arrays=arrays)


def zero_params(config: NetConfig) -> NetworkParams:
    return NetworkParams(
        config=config,
        arrays={name: np.zeros(shape, dtype=np.float64) for name, shape in config.param_layout()},
    )


def _im2col(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(N, H, W, C) -> (N*OH*OW, kernel*kernel*C) patch matrix."""
    windows = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    # windows: (N, OH, OW, C, kh, kw) -> (N, OH, OW, kh, kw, C)
    patches = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3))
    n, oh, ow = patches.shape[:3]
    return patches.reshape(n * oh * ow, kernel * kernel * x.shape[3])


def _validate_obs_batch(x: np.ndarray):
    if x.ndim != 4 or x.shape[1:] != (INPUT_RES, INPUT_RES, INPUT_CHANNELS):
        raise ContractViolationError(
            f"observation batch must be (N, {INPUT_RES}, {INPUT_RES}, {INPUT_CHANNELS}), got {x.shape}"
        )


def core_input(config: NetConfig, obs: np.ndarray) -> np.ndarray:
    """Decimate a raw (N, 84, 84, 3) batch to the net's working resolution.

    Values are untouched; for lite nets this picks one pixel per 4x4 block
    (the inverse of the lite raster's replication). Contiguous output so
    repeated minibatch slicing stays cheap.
    """
    x = np.asarray(obs, dtype=np.float64)
    _validate_obs_batch(x)
    if config.decimation > 1:
        off = (config.decimation - 1) // 2
        x = x[:, off :: config.decimation, off :: config.decimation, :]
    return np.ascontiguousarray(x)


def forward_core(params: NetworkParams, x: np.ndarray):
    """Forward pass on an already-decimated batch (see core_input)."""
    cfg = params.config
    res = cfg.core_res()
    if x.ndim != 4 or x.shape[1:] != (res, res, INPUT_CHANNELS):
        raise ContractViolationError(
            f"core batch must be (N, {res}, {res}, {INPUT_CHANNELS}), got {x.shape}"
        )
    n = x.shape[0]

    cache = {"input": x, "convs": []}
    h = x
    for i, spec in enumerate(cfg.convs):
        w = params.arrays[f"conv{i + 1}/w"]
        b = params.arrays[f"conv{i + 1}/b"]
        cols = _im2col(h, spec.kernel, spec.stride)
        out_size = (h.shape[1] - spec.kernel) // spec.stride + 1
        pre = (cols @ w.reshape(-1, spec.filters) + b).reshape(n, out_size, out_size, spec.filters)
        post = np.maximum(pre, 0.0)
        cache["convs"].append({"in_shape": h.shape, "cols": cols, "pre": pre})
        h = post

    flat = h.reshape(n, -1)
    pre_dense = flat @ params.arrays["dense/w"] + params.arrays["dense/b"]
    hidden = np.maximum(pre_dense, 0.0)
    logits = hidden @ params.arrays["policy/w"] + params.arrays["policy/b"]
    values = (hidden @ params.arrays["value/w"] + params.arrays["value/b"])[:, 0]
    cache["flat"] = flat
    cache["pre_dense"] = pre_dense
    cache["hidden"] = hidden
    return logits, values, cache


def forward_batch(params: NetworkParams, obs: np.ndarray):
    """Returns (logits (N, 9), values (N,), cache for backward)."""
    return forward_core(params, core_input(params.config, obs))


def forward(params: NetworkParams, obs: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-observation forward pass: (logits (9,), value)."""
    x = np.asarray(obs, dtype=np.float64)
    if x.shape != (INPUT_RES, INPUT_RES, INPUT_CHANNELS):
        raise ContractViolationError(
            f"observation must be ({INPUT_RES}, {INPUT_RES}, {INPUT_CHANNELS}), got {x.shape}"
        )
    logits, values, _ = forward_batch(params, x[None])
    return logits[0], float(values[0])


def backward(
    params: NetworkParams,
    cache: dict,
    dlogits: np.ndarray,
    dvalues: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of sum(dlogits * logits) + sum(dvalues * values) w.r.t. params."""
    cfg = params.config
    hidden = cache["hidden"]
    dlogits = np.asarray(dlogits, dtype=np.float64)
    dvalues = np.asarray(dvalues, dtype=np.float64).reshape(-1, 1)

    grads: dict[str, np.ndarray] = {}
    grads["policy/w"] = hidden.T @ dlogits
    grads["policy/b"] = dlogits.sum(axis=0)
    grads["value/w"] = hidden.T @ dvalues
    grads["value/b"] = dvalues.sum(axis=0)

    dhidden = dlogits @ params.arrays["policy/w"].T + dvalues @ params.arrays["value/w"].T
    dpre_dense = dhidden * (cache["pre_dense"] > 0.0)
    grads["dense/w"] = cache["flat"].T @ dpre_dense
    grads["dense/b"] = dpre_dense.sum(axis=0)
    dflat = dpre_dense @ params.arrays["dense/w"].T

    n = hidden.shape[0]
    last = cache["convs"][-1]
    dpost = dflat.reshape(last["pre"].shape)
    for i in range(len(cfg.convs) - 1, -1, -1):
        spec = cfg.convs[i]
        layer = cache["convs"][i]
        dpre = dpost * (layer["pre"] > 0.0)
        oh = dpre.shape[1]
        dpre_mat = dpre.reshape(-1, spec.filters)
        grads[f"conv{i + 1}/w"] = (layer["cols"].T @ dpre_mat).reshape(
            params.arrays[f"conv{i + 1}/w"].shape
        )
        grads[f"conv{i + 1}/b"] = dpre_mat.sum(axis=0)
        if i == 0:
            break
        in_shape = layer["in_shape"]
        dcols = dpre_mat @ params.arrays[f"conv{i + 1}/w"].reshape(-1, spec.filters).T
        dcols = dcols.reshape(n, oh, oh, spec.kernel, spec.kernel, in_shape[3])
        dx = np.zeros(in_shape, dtype=np.float64)
        s = spec.stride
        for a in range(spec.kernel):
            for b in range(spec.kernel):
                dx[:, a : a + s * oh : s, b : b + s * oh : s, :] += dcols[:, :, :, a, b, :]
        dpost = dx
    return grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    def copy(self) -> "AdamState":
        return AdamState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
        )


def init_adam_state(params: NetworkParams) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(a) for k, a in params.arrays.items()},
        v={k: np.zeros_like(a) for k, a in params.arrays.items()},
        step=0,
    )


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_update(
    params: NetworkParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam step; rejects non-finite gradients."""
    if lr <= 0:
        raise ContractViolationError("learning rate must be positive")
    for name, g in grads.items():
        if g.shape != params.arrays[name].shape:
            raise ContractViolationError(f"gradient shape mismatch for '{name}'")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in '{name}'")
    t = state.step + 1
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    new_arrays = {}
    new_m = {}
    new_v = {}
    for name, p in params.arrays.items():
        g = grads[name]
        m = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * (g * g)
        new_arrays[name] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    new_params = NetworkParams(params.config, new_arrays)
    new_params.check_finite()
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def entropy_from_logp(logp: np.ndarray) -> np.ndarray:
    return -(np.exp(logp) * logp).sum(axis=-1)


@dataclass
class SampledAction:
    index: int
    log_prob: float
    entropy: float
    log_prob_vector: np.ndarray  # (9,)


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> SampledAction:
    """Categorical draw from softmax(logits) via inverse transform."""
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("cannot sample from non-finite logits")
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    probs = np.exp(logp)
    u = rng.random()
    index = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    index = min(index, N_ACTIONS - 1)
    return SampledAction(
        index=index,
        log_prob=float(logp[index]),
        entropy=float(entropy_from_logp(logp)),
        log_prob_vector=logp,
    )


def greedy_action(logits: np.ndarray) -> SampledAction:
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    index = int(np.argmax(logits))
    return SampledAction(
        index=index,
        log_prob=float(logp[index]),
        entropy=float(entropy_from_logp(logp)),
        log_prob_vector=logp,
    )
