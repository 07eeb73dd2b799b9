import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from wavesr import network, wavelet
from wavesr.errors import DimensionError
from wavesr.network import Conv2d, Discriminator, Generator, ResidualBlock


def _sampled_fd_check(loss, param, analytic, rng, n=12, eps=1e-5):
    """Central differences at ``n`` random entries of ``param``."""
    flat = param.reshape(-1)
    idx = rng.choice(flat.size, size=min(n, flat.size), replace=False)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = loss()
        flat[i] = orig - eps
        fm = loss()
        flat[i] = orig
        num = (fp - fm) / (2 * eps)
        assert rel_error(analytic.reshape(-1)[i], num) < 1e-4, (i, analytic.reshape(-1)[i], num)


def test_prelu_examples():
    x = np.array([-2.0, -0.5, 0.0, 3.0]).reshape(1, 1, 1, 4)
    np.testing.assert_array_equal(network.prelu(x, [0.25])[0, 0, 0], [-0.5, -0.125, 0.0, 3.0])


def test_prelu_backward_finite_differences(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    slope = rng.random(3)
    w = rng.standard_normal(x.shape)

    def f():
        return float(np.sum(w * network.prelu(x, slope)))

    gx, gs = network.prelu_backward(x, slope, w)
    assert rel_error(gx, numeric_grad(f, x)) < 1e-4
    assert rel_error(gs, numeric_grad(f, slope)) < 1e-4


def test_sigmoid_stable_and_symmetric():
    z = np.array([-800.0, -3.0, 0.0, 3.0, 800.0])
    s = network.sigmoid(z)
    assert np.all(np.isfinite(s))
    np.testing.assert_allclose(s + network.sigmoid(-z), 1.0, atol=1e-15)
    assert s[2] == 0.5


def test_leaky_relu_backward_finite_differences(rng):
    x = rng.standard_normal((1, 2, 3, 3))
    w = rng.standard_normal(x.shape)
    g = network.leaky_relu_backward(x, w)
    assert rel_error(g, numeric_grad(lambda: float(np.sum(w * network.leaky_relu(x))), x)) < 1e-4


def test_conv_layer_he_init_variance():
    conv = Conv2d(64, 64)
    conv.init(np.random.default_rng(0))
    fan_in = 64 * 9
    assert np.var(conv.weight.data) == pytest.approx(2.0 / fan_in, rel=0.2)
    assert not conv.bias.data.any()


def test_residual_block_identity_when_conv2_zero(rng):
    block = ResidualBlock(4)
    block.init(rng)
    block.conv2.weight.data[:] = 0.0
    x = rng.standard_normal((1, 4, 5, 5))
    np.testing.assert_array_equal(block.forward(x), x)


def test_residual_block_finite_differences(rng):
    block = ResidualBlock(3)
    block.init(rng)
    block.prelu.slope.data = rng.random(3)
    x = rng.standard_normal((2, 3, 5, 4))
    w = rng.standard_normal(x.shape)

    def f():
        return float(np.sum(w * block.forward(x)))

    block.zero_grad()
    block.forward(x)
    gx = block.backward(w)
    assert rel_error(gx, numeric_grad(f, x)) < 1e-4
    for name, p in block.named_parameters():
        assert rel_error(p.grad, numeric_grad(f, p.data)) < 1e-4, name


def test_generator_parameter_inventory():
    gen = Generator(features=8, blocks=2)
    names = list(gen.parameters())
    assert names[:3] == ["embed.weight", "embed.bias", "embed_act.slope"]
    assert "blocks.1.conv2.weight" in names
    assert names[-2:] == ["head.weight", "head.bias"]
    assert gen.num_parameters() == 6672
    assert not any("norm" in n for n in names)


def test_generator_output_shape(rng):
    gen = network.init_generator(0, features=8, blocks=1)
    out = gen.forward(rng.random((2, 3, 5, 7)))
    assert out.shape == (2, 48, 5, 7)
    sr, coeffs = network.sr_reconstruct(gen, rng.random((1, 3, 6, 6)))
    assert sr.shape == (1, 3, 24, 24) and coeffs.shape == (1, 48, 6, 6)


def test_generator_init_starts_mid_grey(rng):
    gen = network.init_generator(3, features=8, blocks=2)
    sr, _ = network.sr_reconstruct(gen, rng.random((1, 3, 4, 4)))
    assert abs(sr.mean() - 0.5) < 0.05


def test_generator_crafted_head_bias_gives_grey():
    gen = Generator(features=8, blocks=2)  # all parameters zero
    sr, _ = network.sr_reconstruct(gen, np.ones((1, 3, 4, 4)))
    assert not sr.any()
    gen.head.bias.data[:: wavelet.N_BANDS] = 2.0
    sr, _ = network.sr_reconstruct(gen, np.ones((1, 3, 4, 4)))
    np.testing.assert_allclose(sr, 0.5, atol=1e-15)


def test_generator_seed_reproducible():
    a = network.init_generator(5, features=8, blocks=1).state_dict()
    b = network.init_generator(5, features=8, blocks=1).state_dict()
    c = network.init_generator(6, features=8, blocks=1).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


@pytest.mark.parametrize("mode", ["pixels", "wavelet"])
def test_generator_backward_finite_differences(rng, mode):
    gen = network.init_generator(1, features=4, blocks=1, input_mode=mode)
    gen.head.weight.data = rng.standard_normal(gen.head.weight.shape) * 0.3
    for _, p in gen.named_parameters():
        p.data = p.data + 0.05 * rng.standard_normal(p.shape)
    lr = rng.random((1, 3, 4, 4))
    w = rng.standard_normal((1, 48, 4, 4))

    def f():
        return float(np.sum(w * gen.forward(lr)))

    gen.zero_grad()
    gen.forward(lr)
    gin = gen.backward(w)
    for name, p in gen.named_parameters():
        _sampled_fd_check(f, p.data, p.grad, rng)
    if mode == "pixels":
        assert rel_error(gin, numeric_grad(f, lr)) < 1e-4


def test_wavelet_input_features():
    lr = np.arange(2 * 3 * 4 * 4, dtype=float).reshape(2, 3, 4, 4)
    feats = network.wavelet_input_features(lr)
    assert feats.shape == (2, 15, 4, 4)
    np.testing.assert_array_equal(feats[:, :3], lr)
    with pytest.raises(DimensionError):
        network.wavelet_input_features(np.zeros((1, 3, 5, 4)))


def test_discriminator_shapes_and_range(rng):
    disc = network.init_discriminator(0, channels=4)
    p = disc.forward(rng.random((3, 3, 16, 16)))
    assert p.shape == (3,)
    assert np.all((p > 0) & (p < 1))
    with pytest.raises(DimensionError):
        disc.forward(np.zeros((1, 3, 12, 16)))


def test_discriminator_layout():
    disc = Discriminator(channels=4)
    strides = [c._stride for c in disc.convs]
    widths = [c.weight.shape[0] for c in disc.convs]
    assert strides == [1, 2, 1, 2, 1, 2]
    assert widths == [4, 4, 8, 8, 16, 16]


def test_discriminator_backward_finite_differences(rng):
    disc = network.init_discriminator(2, channels=2)
    x = rng.random((2, 3, 16, 16))
    w = rng.standard_normal(2)

    def f():
        return float(np.sum(w * disc.forward(x)))

    disc.zero_grad()
    disc.forward(x)
    gx = disc.backward(w)
    _sampled_fd_check(f, x, gx, rng, n=20)
    for _, p in disc.named_parameters():
        _sampled_fd_check(f, p.data, p.grad, rng)


def test_backward_without_param_grads_leaves_grads_untouched(rng):
    disc = network.init_discriminator(2, channels=2)
    disc.zero_grad()
    disc.forward(rng.random((1, 3, 16, 16)))
    disc.backward(np.ones(1), param_grads=False)
    assert all(not p.grad.any() for _, p in disc.named_parameters())


def test_state_dict_roundtrip_and_strict():
    a = network.init_generator(0, features=4, blocks=1)
    b = Generator(features=4, blocks=1)
    b.load_state_dict(a.state_dict())
    assert all(np.array_equal(x, y) for x, y in zip(a.state_dict().values(), b.state_dict().values()))
    state = a.state_dict()
    state.pop("head.bias")
    with pytest.raises(DimensionError, match="head.bias"):
        b.load_state_dict(state)
    bad = a.state_dict()
    bad["head.bias"] = np.zeros(3)
    with pytest.raises(DimensionError, match="head.bias"):
        b.load_state_dict(bad)


def test_to_display_clamps():
    np.testing.assert_array_equal(network.to_display(np.array([-1.0, 0.5, 2.0])), [0.0, 0.5, 1.0])


def test_no_dead_generator_parameters(rng):
    gen = network.init_generator(0, features=8, blocks=2)
    sr, _ = network.sr_reconstruct(gen, rng.random((1, 3, 8, 8)))
    w = rng.standard_normal(sr.shape)
    gen.zero_grad()
    gen.backward(network.sr_backward(w))
    dead = [name for name, p in gen.named_parameters() if not np.any(p.grad)]
    assert dead == []


def test_discriminator_zero_params_gives_half(rng):
    disc = Discriminator(channels=4)
    np.testing.assert_array_equal(disc.forward(rng.random((2, 3, 20, 17))), [0.5, 0.5])


def test_discriminator_output_in_open_interval():
    disc = network.init_discriminator(4, channels=2)
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = rng.standard_normal((1, 3, 16, 16)) * rng.uniform(0.1, 10)
        p = disc.forward(x)
        assert 0.0 < p[0] < 1.0
