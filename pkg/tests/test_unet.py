import numpy as np
import pytest

from fgsr.nn import UNetModel, unet_backward, unet_forward

from .gradcheck import full_model_gradcheck


def test_output_shape_default_plan():
    model = UNetModel.init(0)
    x = np.random.default_rng(0).uniform(0, 255, size=(2, 64, 64, 3)).astype(np.float32)
    out, _ = unet_forward(model, x)
    assert out.shape == x.shape
    assert model.channels == (32, 64)


def test_zero_model_gives_zero_output():
    model = UNetModel.init(0, channels=(4, 6))
    for p in model.params.values():
        p[...] = 0
    out, _ = unet_forward(model, np.ones((1, 8, 8, 3), np.float32) * 50)
    assert not out.any()


def test_eval_mode_is_deterministic():
    model = UNetModel.init(3, channels=(8, 8))
    x = np.random.default_rng(1).uniform(0, 255, size=(1, 16, 16, 3)).astype(np.float32)
    a, _ = unet_forward(model, x, train_mode=False, rng_seed=1)
    b, _ = unet_forward(model, x, train_mode=False, rng_seed=2)
    assert np.array_equal(a, b)


def test_train_mode_is_deterministic_given_seed():
    model = UNetModel.init(3, channels=(8, 8))
    x = np.random.default_rng(1).uniform(0, 255, size=(1, 16, 16, 3)).astype(np.float32)
    a, _ = unet_forward(model, x, train_mode=True, rng_seed=7)
    b, _ = unet_forward(model, x, train_mode=True, rng_seed=7)
    c, _ = unet_forward(model, x, train_mode=True, rng_seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_input_validation():
    model = UNetModel.init(0, channels=(4, 4))
    with pytest.raises(ValueError, match="divisible by 4"):
        unet_forward(model, np.zeros((1, 6, 8, 3)))
    with pytest.raises(ValueError):
        unet_forward(model, np.zeros((1, 8, 8, 1)))


def test_backward_zero_and_linearity():
    model = UNetModel.init(0, channels=(4, 6), dtype=np.float64)
    x = np.random.default_rng(2).normal(size=(1, 8, 8, 3))
    out, tape = unet_forward(model, x)
    zero = unet_backward(model, tape, np.zeros_like(out))
    assert all(not g.any() for g in zero.values())
    g_out = np.random.default_rng(3).normal(size=out.shape)
    g1 = unet_backward(model, tape, g_out)
    g2 = unet_backward(model, tape, 2 * g_out)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-12, atol=1e-12)


def test_backward_rejects_foreign_tape():
    a = UNetModel.init(0, channels=(4, 6))
    b = UNetModel.init(0, channels=(4, 8))
    _, tape = unet_forward(a, np.zeros((1, 8, 8, 3), np.float32))
    with pytest.raises(ValueError, match="different model"):
        unet_backward(b, tape, np.zeros((1, 8, 8, 3), np.float32))


def test_skip_gradient_reaches_both_branches():
    # with every up-path conv zeroed, the first block still gets gradient via the additive skip
    model = UNetModel.init(1, channels=(4, 6), dtype=np.float64)
    for name in ("up1.conv1", "up1.conv2", "up2.conv1", "up2.conv2", "bottleneck.conv"):
        model.params[f"{name}.weight"][...] = 0
        model.params[f"{name}.bias"][...] = 0
    x = np.abs(np.random.default_rng(0).normal(size=(1, 8, 8, 3)))
    out, tape = unet_forward(model, x)
    grads = unet_backward(model, tape, np.ones_like(out))
    assert np.abs(grads["down1.conv1.weight"]).sum() > 0
    assert not grads["down2.conv1.weight"].any()


def test_full_model_gradient_check():
    report = full_model_gradcheck()
    assert report.kink_crossings == 0
    assert report.checked == report.total
    assert report.worst_rel < 1e-3, report
    # every layer must actually carry signal, otherwise the check is vacuous
    assert all(report.nonzero_by_param[k] > 0 for k in report.nonzero_by_param if k.endswith("weight"))
