"""Layer containers with named, stable parameters."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator, Optional

import numpy as np

from . import ops
from .tensor import Tensor, default_dtype


class Module:
    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_modules(f"{prefix}{name}.{i}.")

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for mname, m in self.named_modules():
            if isinstance(m, BatchNorm2d):
                yield f"{mname}.running_mean", m.stats.running_mean
                yield f"{mname}.running_var", m.stats.running_var

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = np.zeros_like(p.data)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data) for n, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict, strict: bool = True) -> list[str]:
        """Copy arrays by name. Returns the names that were loaded."""
        params = dict(self.named_parameters())
        bn = {f"{n}.{k}": (m.stats, k) for n, m in self.named_modules()
              if isinstance(m, BatchNorm2d) for k in ("running_mean", "running_var")}
        loaded = []
        for name, arr in state.items():
            arr = np.asarray(arr)
            if name in params:
                p = params[name]
                if p.shape != arr.shape:
                    raise ValueError(f"shape conflict for '{name}': model {p.shape}, checkpoint {arr.shape}")
                p.data = arr.astype(p.dtype, copy=True)
            elif name in bn:
                stats, attr = bn[name]
                cur = getattr(stats, attr)
                if cur.shape != arr.shape:
                    raise ValueError(f"shape conflict for '{name}': model {cur.shape}, checkpoint {arr.shape}")
                setattr(stats, attr, arr.astype(cur.dtype, copy=True))
            elif strict:
                raise KeyError(f"unexpected key '{name}'")
            else:
                continue
            loaded.append(name)
        if strict:
            missing = set(params) | set(bn)
            missing -= set(loaded)
            if missing:
                raise KeyError(f"missing keys: {sorted(missing)[:5]}")
        return loaded


def _param(data: np.ndarray) -> Tensor:
    return Tensor(data.astype(default_dtype()), requires_grad=True)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator, stride: int = 1,
                 bias: bool = False):
        fan_in = cin * kernel * kernel
        self.weight = _param(rng.normal(0.0, np.sqrt(2.0 / fan_in), (cout, cin, kernel, kernel)))
        self.bias = _param(np.zeros(cout)) if bias else None
        self.stride = stride
        self.padding = (kernel - 1) // 2

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, channels: int, kernel: int, rng: np.random.Generator, stride: int = 1):
        self.weight = _param(rng.normal(0.0, np.sqrt(2.0 / (kernel * kernel)), (channels, 1, kernel, kernel)))
        self.stride = stride
        self.padding = (kernel - 1) // 2

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1):
        self.gamma = _param(np.ones(channels))
        self.beta = _param(np.zeros(channels))
        self.stats = ops.BatchNormStats(channels, momentum, default_dtype())

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.stats, self.training, self.gamma, self.beta)


class LayerNorm(Module):
    def __init__(self, dim: int, bias: bool = True):
        self.gamma = _param(np.ones(dim))
        self.beta = _param(np.zeros(dim)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta)


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(din)
        self.weight = _param(rng.uniform(-bound, bound, (din, dout)))
        self.bias = _param(np.zeros(dout)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class ConvNormAct(Module):
    """Conv (dense or depthwise) followed by batch norm and optional swish."""

    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator, stride: int = 1,
                 act: bool = True, depthwise: bool = False):
        if depthwise:
            assert cin == cout
            self.conv = DepthwiseConv2d(cin, kernel, rng, stride)
        else:
            self.conv = Conv2d(cin, cout, kernel, rng, stride)
        self.bn = BatchNorm2d(cout)
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = self.bn(self.conv(x))
        return ops.swish(y) if self.act else y


def count_parameters(module: Module, prefix: Optional[str] = None) -> int:
    return sum(p.data.size for n, p in module.named_parameters()
               if prefix is None or n.startswith(prefix))
