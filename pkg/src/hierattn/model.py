"""Full HierAttn assembly and the XS / S / tiny layer plans."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .blocks import (SCADW, BranchAttentionHead, CthConfig, ScadwConfig, StageAttention,
                     branch_attention_head, branch_fuse_stages)
from .nn import ConvNormAct, Linear, Module
from .tensor import Tensor, make_rng


@dataclass
class ModelConfig:
    variant: str
    stem_channels: tuple[int, int, int, int]  # conv1, scadw1, conv2, scadw2
    stage_channels: tuple[int, int, int]
    stage_dims: tuple[int, int, int]
    stage_depths: tuple[int, int, int] = (2, 4, 3)
    head_channels: int = 768
    num_classes: int = 8
    input_size: int = 256
    stem_strides: tuple[int, int] = (2, 2)
    stage_strides: tuple[int, int, int] = (2, 2, 2)
    scadw2_repeat: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    expansion: int = 1
    survival_prob: float = 0.8
    attention: str = "sc"
    cth_skip: bool = True

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


VARIANTS = {
    "xs": ModelConfig("xs", (16, 16, 24, 24), (48, 64, 80), (64, 80, 96), head_channels=768),
    "s": ModelConfig("s", (16, 32, 48, 48), (64, 80, 96), (96, 120, 144), head_channels=960),
    # desk-scale plan; stride-1 stems keep the fused map >= 5x5 at 16x16 input
    "tiny": ModelConfig("tiny", (8, 8, 8, 8), (8, 12, 16), (16, 20, 24), stage_depths=(1, 1, 1),
                        head_channels=144, num_classes=3, input_size=32, stem_strides=(1, 1),
                        stage_strides=(2, 1, 1)),
}


def model_config(variant: str, **overrides) -> ModelConfig:
    key = variant.lower()
    if key not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}' (expected one of {sorted(VARIANTS)})")
    return VARIANTS[key].replace(**overrides)


class HierAttn(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        c1, c2, c3, c4 = cfg.stem_channels
        sd = cfg.survival_prob

        def scadw(cin, cout, stride):
            return SCADW(ScadwConfig(cin, cout, stride, expansion=cfg.expansion, survival_prob=sd,
                                     attention=cfg.attention), rng)

        self.conv1 = ConvNormAct(3, c1, 3, rng, stride=cfg.stem_strides[0])
        self.scadw1 = scadw(c1, c2, 1)
        self.conv2 = ConvNormAct(c2, c3, 3, rng, stride=cfg.stem_strides[1])
        self.scadw2 = [scadw(c3 if i == 0 else c4, c4, 1) for i in range(cfg.scadw2_repeat)]
        self.stages = []
        cin = c4
        for c, d, depth, stride in zip(cfg.stage_channels, cfg.stage_dims, cfg.stage_depths,
                                       cfg.stage_strides):
            self.stages.append(StageAttention(
                ScadwConfig(cin, c, stride, expansion=cfg.expansion, survival_prob=sd,
                            attention=cfg.attention),
                CthConfig(c, d, depth, heads=cfg.heads, mlp_ratio=cfg.mlp_ratio, survival_prob=sd,
                          skip=cfg.cth_skip),
                rng))
            cin = c
        self.head = BranchAttentionHead(sum(cfg.stage_channels), cfg.head_channels, rng)
        self.classifier = Linear(cfg.head_channels, cfg.num_classes, rng)
        self._rng = rng
        self._trace: list[tuple[str, tuple[int, ...]]] = []
        self._stage_outputs: list[Tensor] = []

    @property
    def trace(self) -> list[tuple[str, tuple[int, ...]]]:
        """(layer, (C, H, W) or (K,)) for every row of the last forward pass."""
        return list(self._trace)

    @property
    def stage_outputs(self) -> list[Tensor]:
        return list(self._stage_outputs)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        size = self.cfg.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2:] != (size, size):
            raise ValueError(f"expected input of shape (N, 3, {size}, {size}), got {x.shape}")
        if self.training and rng is None:
            rng = self._rng
        trace = []

        def tap(name, t):
            trace.append((name, t.shape[1:]))
            return t

        y = tap("conv1", self.conv1(x))
        y = tap("scadw1", self.scadw1(y, rng))
        y = tap("conv2", self.conv2(y))
        for i, block in enumerate(self.scadw2):
            y = tap(f"scadw2.{i}", block(y, rng))
        stage_out = []
        for i, stage in enumerate(self.stages):
            y = tap(f"stage{i + 1}.scadw", stage.scadw(y, rng))
            y = tap(f"stage{i + 1}.cth", stage.cth(y, rng))
            stage_out.append(y)
        fused = tap("branch_fuse", branch_fuse_stages(stage_out))
        expanded = tap("conv1x1", self.head.expand(fused))
        pooled = tap("branch_head", branch_attention_head(expanded, self.training, rng))
        logits = tap("linear", self.classifier(pooled.reshape(x.shape[0], -1)))
        self._trace = trace
        self._stage_outputs = stage_out
        return logits

    def set_survival_prob(self, p: float) -> None:
        """Change the stochastic-depth survival probability of every residual block."""
        from .blocks import CTH
        for _, m in self.named_modules():
            if isinstance(m, (SCADW, CTH)):
                m.cfg = dataclasses.replace(m.cfg, survival_prob=p)
        self.cfg = self.cfg.replace(survival_prob=p)


def build_model(cfg: Union[ModelConfig, str], seed: Union[int, np.random.Generator] = 0) -> HierAttn:
    if isinstance(cfg, str):
        cfg = model_config(cfg)
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return HierAttn(cfg, rng)


def count_params(model: Module) -> int:
    """Number of learnable scalars (norm running statistics excluded)."""
    return sum(p.data.size for p in model.parameters())


def param_table(model: HierAttn) -> list[tuple[str, int]]:
    """Parameter count per top-level layer, in forward order."""
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] in ("stages", "scadw2") else parts[0]
        groups[key] = groups.get(key, 0) + p.data.size
    return list(groups.items())

