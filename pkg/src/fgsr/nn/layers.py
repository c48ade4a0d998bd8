"""Forward/backward pairs for the layers the U-Net is built from.

Tensors are NHWC numpy arrays. Every function computes in the dtype of its
input, so the same code trains in float32 and runs gradient checks in
float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

KERNEL = 3


@dataclass
class ConvLayer:
    """3x3, stride 1, zero 'same' padding."""

    weights: np.ndarray  # (3, 3, c_in, c_out)
    bias: np.ndarray  # (c_out,)

    @property
    def c_in(self) -> int:
        return self.weights.shape[2]

    @property
    def c_out(self) -> int:
        return self.weights.shape[3]


def he_uniform_conv(c_in: int, c_out: int, rng: np.random.Generator,
                    dtype=np.float32) -> ConvLayer:
    bound = np.sqrt(6.0 / (KERNEL * KERNEL * c_in))
    w = rng.uniform(-bound, bound, size=(KERNEL, KERNEL, c_in, c_out)).astype(dtype)
    return ConvLayer(w, np.zeros(c_out, dtype=dtype))


def _check4(x, name="input"):
    if x.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N, H, W, C), got shape {x.shape}")


def _im2col(x: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(1, 2))  # n,h,w,c,kh,kw
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, KERNEL * KERNEL * c)


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    _check4(x)
    if x.shape[3] != layer.c_in:
        raise ValueError(f"channel mismatch: input has {x.shape[3]}, layer expects {layer.c_in}")
    n, h, w, _ = x.shape
    wmat = layer.weights.reshape(-1, layer.c_out).astype(x.dtype, copy=False)
    out = _im2col(x) @ wmat
    out += layer.bias.astype(x.dtype, copy=False)
    return out.reshape(n, h, w, layer.c_out)


def conv2d_backward(x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray,
                    need_input_grad: bool = True):
    """Return ``(grad_input, grad_weights, grad_bias)``.

    ``grad_input`` is None when ``need_input_grad`` is False (first layer).
    """
    _check4(x)
    n, h, w, c_in = x.shape
    if c_in != layer.c_in or grad_out.shape != (n, h, w, layer.c_out):
        raise ValueError(
            f"shape mismatch: input {x.shape}, grad_out {grad_out.shape}, "
            f"layer {layer.weights.shape}"
        )
    g = grad_out.reshape(-1, layer.c_out)
    grad_w = (_im2col(x).T @ g).reshape(layer.weights.shape)
    grad_b = g.sum(axis=0)
    if not need_input_grad:
        return None, grad_w, grad_b

    wmat = layer.weights.reshape(-1, layer.c_out).astype(grad_out.dtype, copy=False)
    gcols = (g @ wmat.T).reshape(n, h, w, KERNEL, KERNEL, c_in)
    gxp = np.zeros((n, h + 2, w + 2, c_in), dtype=gcols.dtype)
    for i in range(KERNEL):
        for j in range(KERNEL):
            gxp[:, i:i + h, j:j + w, :] += gcols[:, :, :, i, j, :]
    return gxp[:, 1:-1, 1:-1, :], grad_w, grad_b


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """``x`` may be the pre-activation or the ReLU output; both give the same mask."""
    return grad_out * (x > 0)


def maxpool2_forward(x: np.ndarray):
    """2x2 stride-2 max pool. Returns ``(out, argmax)``; ties go to the first element."""
    _check4(x)
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even height and width, got {h}x{w}")
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h // 2, w // 2, c, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(grad_out: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    n, hh, ww, c = grad_out.shape
    onehot = argmax[..., None] == np.arange(4)
    g = onehot * grad_out[..., None]  # n, hh, ww, c, 4
    g = g.reshape(n, hh, ww, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return g.reshape(n, hh * 2, ww * 2, c)


def upsample2_forward(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbour x2: every pixel becomes a 2x2 block."""
    _check4(x)
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(grad_out: np.ndarray) -> np.ndarray:
    n, h, w, c = grad_out.shape
    return grad_out.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def dropout_forward(x: np.ndarray, rate: float, train_mode: bool, rng_seed: int):
    """Inverted dropout. Returns ``(out, keep_scale)``; ``keep_scale`` is None in eval mode.

    ``keep_scale`` holds 0 for dropped elements and ``1/(1-rate)`` for kept ones,
    so the backward pass is a single multiply.
    """
    if not train_mode or rate == 0.0:
        return x, None
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = np.random.default_rng(rng_seed).random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return x * scale, scale


def dropout_backward(grad_out: np.ndarray, keep_scale) -> np.ndarray:
    if keep_scale is None:
        return grad_out
    return grad_out * keep_scale


def mse_loss_and_grad(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every element, and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)
