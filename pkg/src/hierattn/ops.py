"""Differentiable image and sequence primitives built on :mod:`hierattn.tensor`."""
from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, apply, matmul, swish  # noqa: F401

NORM_EPS = 1e-5


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]  # N, C, H', W', kh, kw


def _scatter_windows(gwin: np.ndarray, in_shape, stride: int, padding: int) -> np.ndarray:
    """Adjoint of :func:`_windows`: sum window gradients back onto the input grid."""
    n, c, h, w = in_shape
    _, _, ho, wo, kh, kw = gwin.shape
    buf = np.zeros((n, c, h + 2 * padding, w + 2 * padding), gwin.dtype)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gwin[:, :, :, :, i, j]
    if padding:
        buf = buf[:, :, padding:-padding, padding:-padding]
    return buf


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Dense 2-D cross-correlation, NCHW input and OIHW weight."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    xd, wd = x.data, weight.data

    if kh == kw == 1 and padding == 0:
        xs = xd[:, :, ::stride, ::stride]
        wm = wd.reshape(cout, cin)
        out = np.einsum("oc,nchw->nohw", wm, xs, optimize=True)

        def backward(g):
            gw = np.einsum("nohw,nchw->oc", g, xs, optimize=True).reshape(wd.shape)
            gxs = np.einsum("oc,nohw->nchw", wm, g, optimize=True)
            if stride == 1:
                gx = gxs
            else:
                gx = np.zeros_like(xd)
                gx[:, :, ::stride, ::stride] = gxs
            return gx, gw
    else:
        win = _windows(xd, kh, kw, stride, padding)
        ho, wo = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
        wm = wd.reshape(cout, -1)
        out = (cols @ wm.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)

        def backward(g):
            gm = g.transpose(0, 2, 3, 1).reshape(-1, cout)
            gw = (gm.T @ cols).reshape(wd.shape)
            gcols = (gm @ wm).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            return _scatter_windows(gcols, xd.shape, stride, padding), gw

    out = np.ascontiguousarray(out)
    y = apply("conv2d", out, (x, weight), backward)
    if bias is not None:
        y = y + bias.reshape(1, cout, 1, 1)
    return y


def depthwise_conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel convolution; weight has shape (C, 1, kh, kw)."""
    n, c, h, w = x.shape
    if weight.shape[0] != c or weight.shape[1] != 1:
        raise ValueError(f"depthwise weight {weight.shape} incompatible with {c} channels")
    kh, kw = weight.shape[2:]
    xd, wd = x.data, weight.data
    win = _windows(xd, kh, kw, stride, padding)
    k = wd[:, 0]
    out = np.einsum("nchwij,cij->nchw", win, k, optimize=True)

    def backward(g):
        gw = np.einsum("nchw,nchwij->cij", g, win, optimize=True)[:, None]
        gwin = g[..., None, None] * k[None, :, None, None]
        return _scatter_windows(gwin, xd.shape, stride, padding), gw

    return apply("depthwise_conv2d", out, (x, weight), backward)


def pool_boundaries(size: int, out: int) -> list[tuple[int, int]]:
    """Window [start, end) for each output cell: floor(i*size/out) to floor((i+1)*size/out)."""
    return [((i * size) // out, ((i + 1) * size) // out) for i in range(out)]


def _pool_matrix(size: int, out: int, dtype) -> np.ndarray:
    m = np.zeros((out, size), dtype)
    for i, (s, e) in enumerate(pool_boundaries(size, out)):
        m[i, s:e] = 1.0 / (e - s)
    return m


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: Optional[int] = None) -> Tensor:
    """Average over a non-overlapping tiling of the input into out_h x out_w windows."""
    out_w = out_h if out_w is None else out_w
    n, c, h, w = x.shape
    if not (1 <= out_h <= h and 1 <= out_w <= w):
        raise ValueError(f"cannot pool {h}x{w} to {out_h}x{out_w}")
    if out_h == h and out_w == w:
        return x
    a = _pool_matrix(h, out_h, x.dtype)
    b = _pool_matrix(w, out_w, x.dtype)
    out = np.einsum("ih,nchw,jw->ncij", a, x.data, b, optimize=True)
    return apply("adaptive_avg_pool2d", out, (x,),
                 lambda g: (np.einsum("ih,ncij,jw->nchw", a, g, b, optimize=True),))


def global_avg_pool(x: Tensor) -> Tensor:
    return x.mean(axis=(2, 3), keepdims=True)


def unfold_patches(x: Tensor, ph: int, pw: int) -> Tensor:
    """(N, C, H, W) -> (N, ph*pw, patches, C).

    Pixel (a, b) of patch (i, j) maps to position a*pw + b and token
    i*(W//pw) + j.
    """
    n, c, h, w = x.shape
    if h % ph or w % pw:
        raise ValueError(f"spatial dims {h}x{w} not divisible by patch {ph}x{pw}")
    t = x.reshape(n, c, h // ph, ph, w // pw, pw).transpose(0, 3, 5, 2, 4, 1)
    return t.reshape(n, ph * pw, (h // ph) * (w // pw), c)


def fold_patches(tokens: Tensor, h: int, w: int, ph: int, pw: int) -> Tensor:
    """Inverse of :func:`unfold_patches`."""
    n, p, t, c = tokens.shape
    if h % ph or w % pw or p != ph * pw or t != (h // ph) * (w // pw):
        raise ValueError(f"token layout {tokens.shape} inconsistent with {h}x{w} / {ph}x{pw}")
    x = tokens.reshape(n, ph, pw, h // ph, w // pw, c).transpose(0, 5, 3, 1, 4, 2)
    return x.reshape(n, c, h, w)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return apply("softmax", s, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    s = np.exp(out)
    return apply("log_softmax", out, (x,),
                 lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight + bias with weight of shape (in, out)."""
    lead = x.shape[:-1]
    y = matmul(x.reshape(-1, x.shape[-1]), weight)
    if bias is not None:
        y = y + bias
    return y.reshape(*lead, weight.shape[1])


def layer_norm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = NORM_EPS) -> Tensor:
    """Normalise over the last axis."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        return (inv * (g - g.mean(axis=-1, keepdims=True)
                       - xhat * (g * xhat).mean(axis=-1, keepdims=True)),)

    y = apply("layer_norm", xhat, (x,), backward)
    if gamma is not None:
        y = y * gamma
    if beta is not None:
        y = y + beta
    return y


class BatchNormStats:
    """Running statistics for :func:`batch_norm`."""

    def __init__(self, channels: int, momentum: float = 0.1, dtype=np.float32):
        self.momentum = momentum
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)


def batch_norm(x: Tensor, stats: BatchNormStats, training: bool, gamma: Optional[Tensor] = None,
               beta: Optional[Tensor] = None, eps: float = NORM_EPS) -> Tensor:
    """Per-channel normalisation of an NCHW tensor.

    In training mode the batch statistics are used and the running averages
    updated with ``stats.momentum`` (unbiased variance); in eval mode the
    running averages give a fixed affine map.
    """
    xd = x.data
    c = xd.shape[1]
    axes = (0, 2, 3)
    shape = (1, c, 1, 1)
    if training:
        m = xd.size // c
        mu = xd.mean(axis=axes, keepdims=True)
        xc = xd - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        mom = stats.momentum
        stats.running_mean = ((1 - mom) * stats.running_mean + mom * mu.reshape(c)).astype(stats.running_mean.dtype)
        unbiased = var.reshape(c) * (m / max(m - 1, 1))
        stats.running_var = ((1 - mom) * stats.running_var + mom * unbiased).astype(stats.running_var.dtype)

        def backward(g):
            return (inv * (g - g.mean(axis=axes, keepdims=True)
                           - xhat * (g * xhat).mean(axis=axes, keepdims=True)),)
    else:
        inv = (1.0 / np.sqrt(stats.running_var + eps)).astype(xd.dtype).reshape(shape)
        xhat = (xd - stats.running_mean.astype(xd.dtype).reshape(shape)) * inv

        def backward(g):
            return (g * inv,)

    y = apply("batch_norm", xhat, (x,), backward)
    if gamma is not None:
        y = y * gamma.reshape(shape)
    if beta is not None:
        y = y + beta.reshape(shape)
    return y


def multi_head_self_attention(tokens: Tensor, w_qkv: Tensor, b_qkv: Tensor, w_out: Tensor,
                              b_out: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention over axis 1 of a (B, T, d) tensor."""
    bsz, t, d = tokens.shape
    if d % heads:
        raise ValueError(f"dim {d} not divisible by {heads} heads")
    dh = d // heads
    qkv = linear(tokens, w_qkv, b_qkv).reshape(bsz, t, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v).transpose(0, 2, 1, 3).reshape(bsz, t, d)
    return linear(ctx, w_out, b_out)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the true class."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    return apply("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def drop_path(x: Tensor, survival_prob: float, training: bool,
              rng: Optional[np.random.Generator]) -> Tensor:
    """Stochastic depth on a residual branch, one keep/drop draw per sample.

    Training keeps each sample's branch with probability ``survival_prob``
    (unscaled); evaluation multiplies the branch by ``survival_prob``.
    """
    if survival_prob >= 1.0:
        return x
    if not training:
        return x * survival_prob
    if rng is None:
        raise ValueError("stochastic depth in training mode needs an rng")
    keep = rng.random(x.shape[0]) < survival_prob
    mask = keep.astype(x.dtype).reshape((-1,) + (1,) * (x.ndim - 1))
    return apply("drop_path", x.data * mask, (x,), lambda g: (g * mask,))
