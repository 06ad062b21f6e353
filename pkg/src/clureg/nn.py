"""MLP backbones, optimizers, learning-rate schedules and weight averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .streams import rng_stream
from .tape import Tape, Tensor, add, dropout, make_dropout_mask, matmul, relu


@dataclass(frozen=True)
class MLPConfig:
    layer_sizes: tuple  # input width, hidden widths..., feature dim
    dropout_rate: float = 0.0
    input_noise_sigma: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("MLPConfig needs at least one layer (two sizes)")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError(f"zero-width layer in {self.layer_sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.input_noise_sigma < 0.0:
            raise ValueError("input_noise_sigma must be >= 0")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def feature_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1


class ParamSet:
    """Named float64 arrays; insertion order is the canonical order."""

    def __init__(self, arrays: dict | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        if arrays:
            for name, a in arrays.items():
                self[name] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        self._arrays[name] = np.asarray(value, dtype=np.float64)

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def clone(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._arrays.items()})

    def save(self, path) -> None:
        """Flat binary blob of f64 arrays plus a JSON shape manifest."""
        path = Path(path)
        manifest = {
            "dtype": "<f8",
            "arrays": [[name, list(a.shape)] for name, a in self._arrays.items()],
        }
        with open(path, "wb") as f:
            for a in self._arrays.values():
                f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
        with open(path.with_suffix(path.suffix + ".json"), "w") as f:
            json.dump(manifest, f, indent=1)

    @staticmethod
    def load(path) -> "ParamSet":
        path = Path(path)
        with open(path.with_suffix(path.suffix + ".json")) as f:
            manifest = json.load(f)
        raw = np.fromfile(path, dtype=manifest["dtype"])
        out = ParamSet()
        offset = 0
        for name, shape in manifest["arrays"]:
            n = int(np.prod(shape)) if shape else 1
            out[name] = raw[offset: offset + n].reshape(shape)
            offset += n
        if offset != raw.size:
            raise ValueError(
                f"checkpoint {path}: manifest covers {offset} values, file has {raw.size}"
            )
        return out


def init_mlp(config: MLPConfig, seed: int, prefix: str = "backbone") -> ParamSet:
    """He-style scaled uniform fan-in init for the weights, zero biases."""
    params = ParamSet()
    sizes = config.layer_sizes
    for i in range(config.n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(6.0 / fan_in)  # uniform with variance 2/fan_in
        rng = rng_stream(seed, f"init/{prefix}.W{i}")
        params[f"{prefix}.W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{prefix}.b{i}"] = np.zeros(fan_out)
    return params


def forward_features(params: ParamSet, X, config: MLPConfig, mode: str = "eval",
                     seed: int = 0, step: int = 0, stream: str = "ff",
                     tape: Tape | None = None, prefix: str = "backbone"):
    """Run the backbone. Train mode adds input noise and dropout drawn
    from the (seed, stream, step) streams; eval mode is deterministic.

    Returns a Tensor when a tape is supplied, else a plain ndarray.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    own_tape = tape is None
    if own_tape:
        tape = Tape()

    if isinstance(X, Tensor):
        h = X
        width = X.value.shape[1]
    else:
        X = np.asarray(X, dtype=np.float64)
        width = X.shape[1]
        h = tape.constant(X)
    if width != config.layer_sizes[0]:
        raise ValueError(
            f"input width {width} does not match configured {config.layer_sizes[0]}"
        )

    train = mode == "train"
    if train and config.input_noise_sigma > 0:
        rng = rng_stream(seed, f"{stream}/input_noise", step)
        h = add(h, config.input_noise_sigma * rng.standard_normal(h.value.shape))

    for i in range(config.n_layers):
        h = relu(add(matmul(h, params[f"{prefix}.W{i}"]), params[f"{prefix}.b{i}"]))
        if train and config.dropout_rate > 0:
            rng = rng_stream(seed, f"{stream}/dropout{i}", step)
            mask = make_dropout_mask(rng, h.value.shape, config.dropout_rate)
            h = dropout(h, mask, config.dropout_rate)
    return h if not own_tape else h.value


@dataclass
class OptimizerState:
    kind: str  # "sgd_nesterov" | "adam"
    momentum: float = 0.9
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    velocity: dict = field(default_factory=dict)
    moment1: dict = field(default_factory=dict)
    moment2: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd_nesterov", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def optimizer_step(state: OptimizerState, params: ParamSet, grads: dict,
                   lr: float) -> tuple[OptimizerState, ParamSet]:
    """One in-place update over the names present in `grads`."""
    state.step_count += 1
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        if not np.isfinite(g).all():
            raise ValueError(f"non-finite gradient for parameter '{name}'")
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match '{name}' {p.shape}"
            )
        if state.weight_decay:
            g = g + state.weight_decay * p
        if state.kind == "sgd_nesterov":
            v = state.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = state.momentum * v + g
            state.velocity[name] = v
            params[name] = p - lr * (g + state.momentum * v)
        else:  # adam
            m = state.moment1.get(name)
            if m is None:
                m = np.zeros_like(p)
                state.moment2[name] = np.zeros_like(p)
            v2 = state.moment2[name]
            m = state.beta1 * m + (1 - state.beta1) * g
            v2 = state.beta2 * v2 + (1 - state.beta2) * g * g
            state.moment1[name] = m
            state.moment2[name] = v2
            t = state.step_count
            m_hat = m / (1 - state.beta1 ** t)
            v_hat = v2 / (1 - state.beta2 ** t)
            params[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, params


@dataclass(frozen=True)
class LRSchedule:
    kind: str  # "step_decay" | "cosine" | "polynomial"
    base_lr: float
    decay_factor: float = 0.1
    milestones: tuple = ()  # fractions of the horizon, e.g. (0.8,)
    poly_a: float = 10.0
    poly_b: float = 0.75

    def __post_init__(self):
        if self.kind not in ("step_decay", "cosine", "polynomial"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")


def lr_at(schedule: LRSchedule, t: int, horizon: int) -> float:
    if horizon <= 0:
        raise ValueError("schedule horizon must be positive")
    if not 0 <= t <= horizon:
        raise ValueError(f"step {t} outside [0, {horizon}]")
    progress = t / horizon
    if schedule.kind == "step_decay":
        passed = sum(1 for m in schedule.milestones if progress >= m)
        return schedule.base_lr * schedule.decay_factor ** passed
    if schedule.kind == "cosine":
        return schedule.base_lr * (1.0 + np.cos(np.pi * progress)) / 2.0
    return schedule.base_lr / (1.0 + schedule.poly_a * progress) ** schedule.poly_b


class WeightAverager:
    """Either a running arithmetic mean of snapshots (swa) or an
    exponential moving average shadow (ema)."""

    def __init__(self, mode: str, decay: float = 0.99,
                 init_params: ParamSet | None = None):
        if mode not in ("swa", "ema"):
            raise ValueError(f"unknown averaging mode {mode!r}")
        if mode == "ema" and not 0.0 < decay < 1.0:
            raise ValueError(f"ema decay must be in (0, 1), got {decay}")
        self.mode = mode
        self.decay = decay
        self.count = 0
        self._sum: dict[str, np.ndarray] = {}
        self._shadow: dict[str, np.ndarray] = {}
        if mode == "ema":
            if init_params is None:
                raise ValueError("ema averaging needs initial parameters")
            self._shadow = {k: v.copy() for k, v in init_params.items()}


def average_weights(averager: WeightAverager, params: ParamSet) -> WeightAverager:
    if averager.mode == "swa":
        for name, p in params.items():
            if name in averager._sum:
                averager._sum[name] = averager._sum[name] + p
            else:
                averager._sum[name] = p.copy()
        averager.count += 1
    else:
        d = averager.decay
        for name, p in params.items():
            averager._shadow[name] = d * averager._shadow[name] + (1 - d) * p
    return averager


def averaged_params(averager: WeightAverager) -> ParamSet:
    if averager.mode == "swa":
        if averager.count == 0:
            raise ValueError("swa averager has absorbed no snapshots")
        return ParamSet({k: v / averager.count for k, v in averager._sum.items()})
    return ParamSet({k: v.copy() for k, v in averager._shadow.items()})
