"""Two-level U-Net with additive skips, hand-written forward and backward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (
    ConvLayer,
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    he_uniform_conv,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    upsample2_backward,
    upsample2_forward,
)


def layer_plan(c1: int, c2: int) -> list[tuple[str, int, int]]:
    """(name, c_in, c_out) for every conv, in forward order."""
    return [
        ("down1.conv1", 3, c1),
        ("down1.conv2", c1, c1),
        ("down2.conv1", c1, c2),
        ("down2.conv2", c2, c2),
        ("bottleneck.conv", c2, c2),
        ("up1.conv1", c2, c2),
        ("up1.conv2", c2, c2),
        ("up2.conv1", c2, c1),
        ("up2.conv2", c1, c1),
        ("head", c1, 3),
    ]


@dataclass
class UNetModel:
    """All learnable parameters, keyed ``<layer>.weight`` / ``<layer>.bias``."""

    params: dict[str, np.ndarray]
    dropout_rate: float = 0.25

    @classmethod
    def init(cls, seed: int, channels: tuple[int, int] = (32, 64),
             dropout_rate: float = 0.25, dtype=np.float32) -> "UNetModel":
        rng = np.random.default_rng(seed)
        params = {}
        for name, c_in, c_out in layer_plan(*channels):
            conv = he_uniform_conv(c_in, c_out, rng, dtype)
            params[f"{name}.weight"] = conv.weights
            params[f"{name}.bias"] = conv.bias
        return cls(params, dropout_rate)

    @property
    def channels(self) -> tuple[int, int]:
        return (self.params["down1.conv1.weight"].shape[3],
                self.params["down2.conv1.weight"].shape[3])

    def conv(self, name: str) -> ConvLayer:
        return ConvLayer(self.params[f"{name}.weight"], self.params[f"{name}.bias"])

    def copy(self, dtype=None) -> "UNetModel":
        return UNetModel(
            {k: v.astype(dtype or v.dtype, copy=True) for k, v in self.params.items()},
            self.dropout_rate,
        )

    def validate(self) -> None:
        """Raise ValueError unless the parameter set matches the layer plan."""
        c1, c2 = self.channels
        expected = {}
        for name, c_in, c_out in layer_plan(c1, c2):
            expected[f"{name}.weight"] = (3, 3, c_in, c_out)
            expected[f"{name}.bias"] = (c_out,)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names disagree: missing {missing}, unexpected {extra}")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ValueError(f"{k} has shape {self.params[k].shape}, expected {shape}")


@dataclass
class Tape:
    """Activations cached by :func:`unet_forward` for the backward pass."""

    param_shapes: dict[str, tuple]
    acts: dict[str, np.ndarray] = field(default_factory=dict)
    argmax: dict[str, np.ndarray] = field(default_factory=dict)
    dropout_scale: np.ndarray | None = None


def _check_input(x: np.ndarray) -> None:
    if x.ndim != 4 or x.shape[3] != 3:
        raise ValueError(f"U-Net input must be (N, H, W, 3), got {x.shape}")
    if x.shape[1] % 4 or x.shape[2] % 4:
        raise ValueError(f"U-Net input height and width must be divisible by 4, got {x.shape[1]}x{x.shape[2]}")


def unet_forward(model: UNetModel, x: np.ndarray, train_mode: bool = False,
                 rng_seed: int = 0):
    """Run the network. Returns ``(output, tape)``.

    Dropout (first down block only) is active only when ``train_mode`` is set,
    and its mask is drawn from ``rng_seed`` so training runs are repeatable.
    """
    _check_input(x)
    tape = Tape({k: v.shape for k, v in model.params.items()})
    a = tape.acts

    def conv_relu(name, inp):
        a[name + ".in"] = inp
        out = relu_forward(conv2d_forward(inp, model.conv(name)))
        a[name + ".out"] = out
        return out

    h = conv_relu("down1.conv1", x)
    h = conv_relu("down1.conv2", h)
    skip1, tape.dropout_scale = dropout_forward(h, model.dropout_rate, train_mode, rng_seed)
    h, tape.argmax["pool1"] = maxpool2_forward(skip1)

    h = conv_relu("down2.conv1", h)
    skip2 = conv_relu("down2.conv2", h)
    h, tape.argmax["pool2"] = maxpool2_forward(skip2)

    h = conv_relu("bottleneck.conv", h)

    h = conv_relu("up1.conv1", upsample2_forward(h))
    h = conv_relu("up1.conv2", h) + skip2

    h = conv_relu("up2.conv1", upsample2_forward(h))
    h = conv_relu("up2.conv2", h) + skip1

    a["head.in"] = h
    out = conv2d_forward(h, model.conv("head"))
    return out, tape


def unet_backward(model: UNetModel, tape: Tape, grad_output: np.ndarray) -> dict[str, np.ndarray]:
    """Gradient of ``sum(output * grad_output)`` w.r.t. every parameter."""
    if {k: v.shape for k, v in model.params.items()} != tape.param_shapes:
        raise ValueError("tape was recorded with a different model")
    a = tape.acts
    if grad_output.shape != a["down1.conv1.in"].shape:
        raise ValueError(
            f"grad_output shape {grad_output.shape} does not match the recorded "
            f"output shape {a['down1.conv1.in'].shape}"
        )
    grads: dict[str, np.ndarray] = {}

    def conv_back(name, g, relu=True, need_input=True):
        if relu:
            g = relu_backward(a[name + ".out"], g)
        gi, gw, gb = conv2d_backward(a[name + ".in"], model.conv(name), g, need_input)
        grads[name + ".weight"] = gw
        grads[name + ".bias"] = gb
        return gi

    g = conv_back("head", grad_output, relu=False)
    # the additive skip sends the same gradient down both branches
    g_skip1 = g
    g = conv_back("up2.conv2", g)
    g = upsample2_backward(conv_back("up2.conv1", g))

    g_skip2 = g
    g = conv_back("up1.conv2", g)
    g = upsample2_backward(conv_back("up1.conv1", g))

    g = conv_back("bottleneck.conv", g)
    g = maxpool2_backward(g, tape.argmax["pool2"]) + g_skip2
    g = conv_back("down2.conv2", g)
    g = conv_back("down2.conv1", g)

    g = maxpool2_backward(g, tape.argmax["pool1"]) + g_skip1
    g = dropout_backward(g, tape.dropout_scale)
    g = conv_back("down1.conv2", g)
    conv_back("down1.conv1", g, need_input=False)

    return {k: grads[k] for k in model.params}
