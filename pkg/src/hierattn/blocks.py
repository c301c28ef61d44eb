"""HierAttn building blocks: SCAttn, SCADW, CTH, stage and branch attention."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import ops
from .nn import Conv2d, ConvNormAct, LayerNorm, Linear, Module
from .tensor import Tensor, concat, mean, sigmoid, take

HEAD_POOL_SIZES = (5, 3, 1)


def scattn(x: Tensor) -> Tensor:
    """Same-channel attention: gate each channel by sigmoid of its own mean.

    Adds no learnable parameters.
    """
    return x * sigmoid(ops.global_avg_pool(x))


class SEAttn(Module):
    """Squeeze-and-excitation gate, kept for the parameter-count comparison."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 4):
        hidden = max(1, channels // reduction)
        self.reduce = Conv2d(channels, hidden, 1, rng, bias=True)
        self.expand = Conv2d(hidden, channels, 1, rng, bias=True)

    def forward(self, x: Tensor) -> Tensor:
        s = ops.swish(self.reduce(ops.global_avg_pool(x)))
        return x * sigmoid(self.expand(s))


@dataclass
class ScadwConfig:
    in_channels: int
    out_channels: int
    stride: int = 1
    kernel: int = 3
    expansion: int = 1
    survival_prob: float = 0.8
    attention: str = "sc"  # "sc" | "se" | "none"

    def __post_init__(self):
        if self.stride not in (1, 2):
            raise ValueError(f"SCADW stride must be 1 or 2, got {self.stride}")
        if self.attention not in ("sc", "se", "none"):
            raise ValueError(f"unknown attention '{self.attention}'")
        if not 0.0 < self.survival_prob <= 1.0:
            raise ValueError("survival_prob must lie in (0, 1]")

    @property
    def has_skip(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels


class SCADW(Module):
    """Depthwise separable conv block with SCAttn between depthwise and pointwise.

    [1x1 expand -> BN -> swish] -> depthwise kxk (stride) -> BN -> swish ->
    attention -> pointwise 1x1 -> BN, plus a stochastic-depth residual when
    stride is 1 and channel counts match.
    """

    def __init__(self, cfg: ScadwConfig, rng: np.random.Generator):
        self.cfg = cfg
        mid = cfg.in_channels * cfg.expansion
        self.expand = ConvNormAct(cfg.in_channels, mid, 1, rng) if cfg.expansion != 1 else None
        self.dw = ConvNormAct(mid, mid, cfg.kernel, rng, stride=cfg.stride, depthwise=True)
        self.se = SEAttn(mid, rng) if cfg.attention == "se" else None
        self.pw = ConvNormAct(mid, cfg.out_channels, 1, rng, act=False)

    def residual(self, x: Tensor) -> Tensor:
        y = x if self.expand is None else self.expand(x)
        y = self.dw(y)
        if self.cfg.attention == "sc":
            y = scattn(y)
        elif self.se is not None:
            y = self.se(y)
        return self.pw(y)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"SCADW expects {self.cfg.in_channels} channels, got {x.shape[1]}")
        y = self.residual(x)
        if not self.cfg.has_skip:
            return y
        return x + ops.drop_path(y, self.cfg.survival_prob, self.training, rng)


@dataclass
class CthConfig:
    channels: int
    dim: int
    depth: int
    heads: int = 4
    mlp_ratio: int = 4
    patch: int = 2
    kernel: int = 3
    survival_prob: float = 0.8
    skip: bool = True

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"transformer dim {self.dim} not divisible by {self.heads} heads")
        if self.depth < 1:
            raise ValueError("CTH depth must be >= 1")


class TransformerLayer(Module):
    """Pre-norm encoder layer: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.heads = heads
        self.norm1 = LayerNorm(dim)
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, mlp_ratio * dim, rng)
        self.fc2 = Linear(mlp_ratio * dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.multi_head_self_attention(self.norm1(x), self.qkv.weight, self.qkv.bias,
                                          self.proj.weight, self.proj.bias, self.heads)
        x = x + h
        return x + self.fc2(ops.swish(self.fc1(self.norm2(x))))


class CTH(Module):
    """Convolution-transformer hybrid block with a whole-block skip connection."""

    def __init__(self, cfg: CthConfig, rng: np.random.Generator):
        self.cfg = cfg
        c, d = cfg.channels, cfg.dim
        self.local = ConvNormAct(c, c, cfg.kernel, rng)
        self.to_tokens = Conv2d(c, d, 1, rng)
        self.layers = [TransformerLayer(d, cfg.heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        # no shift: the projection's batch norm would cancel it in training
        self.norm = LayerNorm(d, bias=False)
        self.project = ConvNormAct(d, c, 1, rng)

    def residual(self, x: Tensor) -> Tensor:
        n, _, h, w = x.shape
        p = self.cfg.patch
        y = self.to_tokens(self.local(x))
        tokens = ops.unfold_patches(y, p, p)  # N, P, T, d
        _, pp, t, d = tokens.shape
        seq = tokens.reshape(n * pp, t, d)
        for layer in self.layers:
            seq = layer(seq)
        seq = self.norm(seq)
        y = ops.fold_patches(seq.reshape(n, pp, t, d), h, w, p, p)
        return self.project(y)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        p = self.cfg.patch
        if x.shape[2] % p or x.shape[3] % p:
            raise ValueError(f"CTH input {x.shape[2]}x{x.shape[3]} not divisible by patch {p}")
        y = self.residual(x)
        if not self.cfg.skip:
            return y
        return x + ops.drop_path(y, self.cfg.survival_prob, self.training, rng)


class StageAttention(Module):
    """Stride-2 SCADW followed by a CTH block."""

    def __init__(self, scadw: ScadwConfig, cth: CthConfig, rng: np.random.Generator):
        self.scadw = SCADW(scadw, rng)
        self.cth = CTH(cth, rng)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        return self.cth(self.scadw(x, rng), rng)


def hierarchical_pool(x: Tensor, sizes: Sequence[int] = HEAD_POOL_SIZES) -> list[Tensor]:
    h, w = x.shape[2:]
    if min(h, w) < max(sizes):
        raise ValueError(f"hierarchical pooling needs at least {max(sizes)}x{max(sizes)}, got {h}x{w}")
    return [ops.adaptive_avg_pool2d(x, s, s) for s in sizes]


def branch_fuse_stages(stages: Sequence[Tensor]) -> Tensor:
    """Pool every stage output to the smallest spatial size present and stack channels."""
    if not stages:
        raise ValueError("need at least one stage output")
    n = stages[0].shape[0]
    if any(s.shape[0] != n for s in stages):
        raise ValueError("stage outputs disagree on batch size")
    th = min(s.shape[2] for s in stages)
    tw = min(s.shape[3] for s in stages)
    pooled = [ops.adaptive_avg_pool2d(s, th, tw) for s in stages]
    return pooled[0] if len(pooled) == 1 else concat(pooled, axis=1)


def branch_attention_head(x: Tensor, training: bool,
                          rng: Optional[np.random.Generator] = None) -> Tensor:
    """Pool to 5x5, 3x3 and 1x1, assemble the 35 positions, shuffle them in
    training, and average positions into an N x C x 1 x 1 descriptor."""
    n, c = x.shape[:2]
    branches = hierarchical_pool(x)
    flat = [b.reshape(n, c, -1) for b in branches]  # channel-wise assembly
    positions = concat(flat, axis=2)  # pixel-wise assembly: N, C, 35
    if training:
        if rng is None:
            raise ValueError("branch attention in training mode needs an rng")
        positions = take(positions, rng.permutation(positions.shape[2]), axis=2)
    return mean(positions, axis=2, keepdims=True).reshape(n, c, 1, 1)


class BranchAttentionHead(Module):
    """Conv1x1 expansion of the fused stages followed by the pooled head."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.expand = ConvNormAct(cin, cout, 1, rng)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        return branch_attention_head(self.expand(x), self.training, rng)

