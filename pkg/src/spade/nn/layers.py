"""Parameter containers and the basic layer zoo."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, conv2d, depthwise_conv2d


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Minimal recursive container with named parameters and buffers."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=np.float64)
        object.__setattr__(self, name, self._buffers[name])

    def _set_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=np.float64)
        object.__setattr__(self, name, self._buffers[name])

    def named_parameters(self, prefix=""):
        for k, p in self._params.items():
            yield f"{prefix}{k}", p
        for k, m in self._modules.items():
            yield from m.named_parameters(prefix=f"{prefix}{k}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for k, b in self._buffers.items():
            yield f"{prefix}{k}", b
        for k, m in self._modules.items():
            yield from m.named_buffers(prefix=f"{prefix}{k}.")

    def train(self, mode=True):
        object.__setattr__(self, "training", mode)
        for m in self._modules.values():
            m.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> dict:
        state = {f"param.{k}": p.data.copy() for k, p in self.named_parameters()}
        state.update({f"buffer.{k}": b.copy() for k, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict):
        params = dict(self.named_parameters())
        missing = []
        for k, p in params.items():
            key = f"param.{k}"
            if key not in state:
                missing.append(key)
                continue
            if state[key].shape != p.data.shape:
                raise ShapeError(f"{key}: checkpoint shape {state[key].shape} != model {p.data.shape}")
            p.data = state[key].astype(np.float64).copy()
        for holder, k, b in self._walk_buffers():
            key = f"buffer.{k}"
            if key not in state:
                missing.append(key)
                continue
            if state[key].shape != b.shape:
                raise ShapeError(f"{key}: checkpoint shape {state[key].shape} != model {b.shape}")
            holder._set_buffer(k.split(".")[-1], state[key])
        if missing:
            raise ConfigError(f"checkpoint is missing entries: {missing[:5]}")

    def _walk_buffers(self, prefix=""):
        for k, b in self._buffers.items():
            yield self, f"{prefix}{k}", b
        for k, m in self._modules.items():
            yield from m._walk_buffers(prefix=f"{prefix}{k}.")


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._list = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        self._modules[str(len(self._list))] = module
        self._list.append(module)

    def __iter__(self):
        return iter(self._list)

    def __len__(self):
        return len(self._list)

    def __getitem__(self, i):
        return self._list[i]


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, padding=None, bias=True):
        super().__init__()
        if padding is None:
            padding = kernel // 2
        self.stride, self.padding = stride, padding
        fan_in = in_ch * kernel * kernel
        self.weight = Parameter(kaiming_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(out_ch)) if bias else None

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    __call__ = forward


class DepthwiseConv2d(Module):
    def __init__(self, channels, kernel, rng, stride=1, padding=None, bias=True):
        super().__init__()
        if padding is None:
            padding = kernel // 2
        self.stride, self.padding = stride, padding
        self.weight = Parameter(kaiming_uniform(rng, (channels, kernel, kernel), kernel * kernel))
        self.bias = Parameter(np.zeros(channels)) if bias else None

    def forward(self, x):
        return depthwise_conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    __call__ = forward


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        super().__init__()
        self.weight = Parameter(kaiming_uniform(rng, (in_dim, out_dim), in_dim))
        self.bias = Parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x):
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y

    __call__ = forward


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x):
        C = x.shape[1]
        g = self.gamma.reshape(1, C, 1, 1)
        b = self.beta.reshape(1, C, 1, 1)
        if self.training:
            mu = x.mean(axis=(0, 2, 3), keepdims=True)
            var = ((x - mu) ** 2).mean(axis=(0, 2, 3), keepdims=True)
            n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
            unbiased = var.data.reshape(-1) * (n / max(n - 1, 1))
            self._set_buffer(
                "running_mean",
                (1 - self.momentum) * self.running_mean + self.momentum * mu.data.reshape(-1),
            )
            self._set_buffer(
                "running_var", (1 - self.momentum) * self.running_var + self.momentum * unbiased
            )
            xhat = (x - mu) / ((var + self.eps) ** 0.5)
        else:
            mu = Tensor(self.running_mean.reshape(1, C, 1, 1))
            var = Tensor(self.running_var.reshape(1, C, 1, 1))
            xhat = (x - mu) / ((var + self.eps) ** 0.5)
        return xhat * g + b

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        return (x - mu) / ((var + self.eps) ** 0.5) * self.gamma + self.beta

    __call__ = forward


class MLP(Module):
    def __init__(self, dim, hidden, rng):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x):
        return self.fc2(self.fc1(x).gelu())

    __call__ = forward
