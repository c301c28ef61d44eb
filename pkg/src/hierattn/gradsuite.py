"""Finite-difference checks over every differentiable op and block, in float64."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from . import tensor as T
from .blocks import (CTH, SCADW, CthConfig, ScadwConfig, SEAttn, TransformerLayer, branch_attention_head,
                     branch_fuse_stages, scattn)
from .gradcheck import check_gradients
from .model import build_model, model_config
from .tensor import Tensor, make_rng, precision

OP_TOL = 1e-4
MODEL_TOL = 1e-3


@dataclass(frozen=True)
class GradResult:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.error < self.tol


def _leaf(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


def _probe(rng, out: Tensor) -> Tensor:
    return Tensor(rng.standard_normal(out.shape))


def _case(fn: Callable, leaves: list[Tensor], rng) -> float:
    probe = _probe(rng, fn())
    errs = check_gradients(lambda: (fn() * probe).sum(), leaves)
    return max(errs.values())


def op_cases(rng: np.random.Generator) -> dict[str, Callable[[], float]]:
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4)
    pos = _leaf(rng, 3, 4, positive=True)
    m1, m2 = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 4, 5)
    x = _leaf(rng, 2, 3, 6, 6)
    w = _leaf(rng, 4, 3, 3, 3)
    bias = _leaf(rng, 4)
    dw = _leaf(rng, 3, 1, 3, 3)
    tok = _leaf(rng, 2, 5, 8)
    wqkv, bqkv = _leaf(rng, 8, 24), _leaf(rng, 24)
    wo, bo = _leaf(rng, 8, 8), _leaf(rng, 8)
    g8, b8 = _leaf(rng, 8), _leaf(rng, 8)
    g3, b3 = _leaf(rng, 3), _leaf(rng, 3)
    perm = rng.permutation(6)
    stats = ops.BatchNormStats(3, dtype=np.float64)
    stats.running_var = np.abs(rng.standard_normal(3)) + 0.5
    stats.running_mean = rng.standard_normal(3)
    labels = rng.integers(0, 4, 3)
    logits = _leaf(rng, 3, 4)

    def bn_train():
        s = ops.BatchNormStats(3, dtype=np.float64)
        return ops.batch_norm(x, s, True, g3, b3)

    cases = {
        "add_broadcast": (lambda: a + b, [a, b]),
        "sub": (lambda: a - pos, [a, pos]),
        "mul_broadcast": (lambda: a * b, [a, b]),
        "div": (lambda: a / pos, [a, pos]),
        "power": (lambda: T.power(pos, 1.7), [pos]),
        "exp": (lambda: T.exp(a), [a]),
        "log": (lambda: T.log(pos), [pos]),
        "sqrt": (lambda: T.sqrt(pos), [pos]),
        "sigmoid": (lambda: T.sigmoid(a), [a]),
        "swish": (lambda: T.swish(a), [a]),
        "sum_axis": (lambda: T.sum_(m1, axis=1, keepdims=True), [m1]),
        "mean": (lambda: T.mean(m1, axis=(0, 2)), [m1]),
        "reshape_transpose": (lambda: m1.reshape(4, 6).transpose(1, 0), [m1]),
        "getitem": (lambda: m1[:, 1:, ::2], [m1]),
        "take": (lambda: T.take(x, perm, axis=3), [x]),
        "take_repeated": (lambda: T.take(a, np.array([0, 0, 2]), axis=0), [a]),
        "concat": (lambda: T.concat([a, pos], axis=0), [a, pos]),
        "matmul_batched": (lambda: T.matmul(m1, m2), [m1, m2]),
        "conv2d": (lambda: ops.conv2d(x, w, bias, stride=1, padding=1), [x, w, bias]),
        "conv2d_stride2": (lambda: ops.conv2d(x, w, None, stride=2, padding=1), [x, w]),
        "conv2d_1x1": (lambda: ops.conv2d(x, w[:, :, 1:2, 1:2], bias), [x, w, bias]),
        "depthwise_conv2d": (lambda: ops.depthwise_conv2d(x, dw, stride=2, padding=1), [x, dw]),
        "adaptive_avg_pool": (lambda: ops.adaptive_avg_pool2d(x, 5, 3), [x]),
        "global_avg_pool": (lambda: ops.global_avg_pool(x), [x]),
        "unfold_fold": (lambda: ops.fold_patches(ops.unfold_patches(x, 2, 2) * 2.0, 6, 6, 2, 2), [x]),
        "softmax": (lambda: ops.softmax(a, axis=-1), [a]),
        "log_softmax": (lambda: ops.log_softmax(a, axis=0), [a]),
        "linear": (lambda: ops.linear(tok, wo, bo), [tok, wo, bo]),
        "layer_norm": (lambda: ops.layer_norm(tok, g8, b8), [tok, g8, b8]),
        "batch_norm_train": (bn_train, [x, g3, b3]),
        "batch_norm_eval": (lambda: ops.batch_norm(x, stats, False, g3, b3), [x, g3, b3]),
        "mhsa": (lambda: ops.multi_head_self_attention(tok, wqkv, bqkv, wo, bo, 2), [tok, wqkv, bqkv, wo, bo]),
        "cross_entropy": (lambda: ops.cross_entropy(logits, labels), [logits]),
        "drop_path_train": (lambda: ops.drop_path(x, 0.6, True, make_rng(3)), [x]),
        "drop_path_eval": (lambda: ops.drop_path(x, 0.6, False, None), [x]),
    }
    return {k: (lambda fn=fn, lv=lv: _case(fn, lv, rng)) for k, (fn, lv) in cases.items()}


def block_cases(rng: np.random.Generator) -> dict[str, Callable[[], float]]:
    def module_case(block, x, forward):
        return lambda: _case(lambda: forward(block, x), [x] + block.parameters(), rng)

    x4 = _leaf(rng, 3, 4, 5, 5)
    out = {"scattn": lambda: _case(lambda: scattn(x4), [x4], rng)}
    se = SEAttn(4, make_rng(0))
    out["se_attn"] = module_case(se, x4, lambda m, x: m(x))
    for att in ("sc", "se", "none"):
        blk = SCADW(ScadwConfig(4, 4, 1, survival_prob=0.7, attention=att), make_rng(0)).train()
        out[f"scadw_{att}"] = module_case(blk, x4, lambda m, x: m(x, make_rng(11)))
    down = SCADW(ScadwConfig(4, 6, 2, expansion=2), make_rng(1)).train()
    out["scadw_stride2_expand"] = module_case(down, x4, lambda m, x: m(x, make_rng(2)))
    layer = TransformerLayer(8, 2, 2, make_rng(0))
    out["transformer_layer"] = module_case(layer, _leaf(rng, 2, 4, 8), lambda m, x: m(x))
    cth = CTH(CthConfig(4, 8, 1, heads=2, mlp_ratio=2), make_rng(0)).train()
    out["cth"] = module_case(cth, _leaf(rng, 2, 4, 4, 4), lambda m, x: m(x, make_rng(3)))
    xs = [_leaf(rng, 1, 2, 8, 8), _leaf(rng, 1, 3, 4, 4)]
    out["branch_fusion"] = lambda: _case(lambda: branch_fuse_stages(xs), xs, rng)
    xh = _leaf(rng, 2, 3, 6, 6)
    out["branch_head"] = lambda: _case(lambda: branch_attention_head(xh, True, make_rng(2)), [xh], rng)
    return out


def model_case(max_entries: int = 2) -> float:
    m = build_model(model_config("tiny", input_size=16)).train()
    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 16, 16)))
    errs = check_gradients(lambda: ops.cross_entropy(m(x, make_rng(5)), [0, 2]), m.parameters(),
                           max_entries=max_entries)
    return max(errs.values())


def run_suite(seed: int = 0, include_model: bool = True, report: Callable[[GradResult], None] = None) -> list[GradResult]:
    """Every op and block case (tolerance 1e-4) plus the tiny model end to end (1e-3)."""
    results = []
    with precision(np.float64):
        rng = np.random.default_rng(seed)
        todo = [(k, f, OP_TOL) for k, f in {**op_cases(rng), **block_cases(rng)}.items()]
        if include_model:
            todo.append(("model_tiny", model_case, MODEL_TOL))
        for name, fn, tol in todo:
            r = GradResult(name, float(fn()), tol)
            results.append(r)
            if report is not None:
                report(r)
    return results
