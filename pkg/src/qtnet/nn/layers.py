"""Parameterised layers built on the autodiff ops."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import numpy as np

from ..errors import ConfigError
from . import tensor as T
from .optim import kaiming_init
from .tensor import Tensor


class Module:
    """Minimal container: named parameters, named buffers, train/eval flag."""

    training = True

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def _own(self, kind):
        return {k: v for k, v in vars(self).items() if isinstance(v, kind)}

    def named_parameters(self, prefix="") -> Dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._own(Tensor).items()}
        for name, child in self.children():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def named_buffers(self, prefix="") -> Dict[str, np.ndarray]:
        out = {prefix + k: v for k, v in getattr(self, "buffers", {}).items()}
        for name, child in self.children():
            out.update(child.named_buffers(f"{prefix}{name}."))
        return out

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {k: v.data for k, v in self.named_parameters().items()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        buffers = self.named_buffers()
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ConfigError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, p in params.items():
            if p.data.shape != state[k].shape:
                raise ConfigError(f"{k}: shape {state[k].shape}, expected {p.data.shape}")
            p.data = np.array(state[k], dtype=np.float64)
        for k, b in buffers.items():
            if b.shape != state[k].shape:
                raise ConfigError(f"{k}: shape {state[k].shape}, expected {b.shape}")
            b[...] = state[k]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def __call__(self, *args):
        return self.forward(*args)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 bias=False, rng=None):
        if stride < 1 or kernel_size < 1:
            raise ConfigError("conv1d needs kernel_size >= 1 and stride >= 1")
        rng = np.random.default_rng() if rng is None else rng
        self.stride, self.padding = stride, padding
        fan_in = in_channels * kernel_size
        self.weight = Tensor(kaiming_init(fan_in, (out_channels, in_channels, kernel_size), rng),
                             requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(out_channels), requires_grad=True)
        else:
            self.bias = None

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm1d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        if not eps > 0:
            raise ConfigError("batchnorm epsilon must be positive")
        self.momentum, self.eps = momentum, eps
        self.weight = Tensor(np.ones(channels), requires_grad=True)
        self.bias = Tensor(np.zeros(channels), requires_grad=True)
        self.buffers = {"running_mean": np.zeros(channels), "running_var": np.ones(channels)}

    def forward(self, x):
        return T.batch_norm1d(x, self.weight, self.bias, self.buffers["running_mean"],
                              self.buffers["running_var"], self.training, self.momentum, self.eps)


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class MaxPool1d(Module):
    def __init__(self, kernel_size, stride=None, padding=0):
        self.kernel_size, self.stride, self.padding = kernel_size, stride, padding

    def forward(self, x):
        return T.max_pool1d(x, self.kernel_size, self.stride, self.padding)


class GlobalAvgPool(Module):
    def forward(self, x):
        return T.global_avg_pool(x)


class ResidualAdd(Module):
    def forward(self, a, b):
        return T.residual_add(a, b)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, rng=None):
        rng = np.random.default_rng() if rng is None else rng
        self.weight = Tensor(kaiming_init(in_features, (out_features, in_features), rng),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features), requires_grad=True) if bias else None

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative layer description, e.g. ``LayerSpec("conv1d", {"in_channels": 1, ...})``."""

    kind: str
    params: dict = field(default_factory=dict)


_KINDS = {
    "conv1d": Conv1d,
    "batchnorm1d": BatchNorm1d,
    "relu": ReLU,
    "residual_add": ResidualAdd,
    "maxpool1d": MaxPool1d,
    "global_avg_pool": GlobalAvgPool,
    "linear": Linear,
}


def build_layer(spec: LayerSpec, rng=None) -> Module:
    try:
        cls = _KINDS[spec.kind]
    except KeyError:
        raise ConfigError(f"unknown layer kind {spec.kind!r}") from None
    params = dict(spec.params)
    if cls in (Conv1d, Linear):
        params["rng"] = rng
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad hyperparameters for {spec.kind}: {exc}") from None


def forward(layer, *inputs):
    """Apply a layer (or a :class:`LayerSpec`, built fresh) to its inputs."""
    if isinstance(layer, LayerSpec):
        layer = build_layer(layer)
    return layer(*inputs)
