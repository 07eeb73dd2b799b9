import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from wavesr import checkpoint, loss, network, wavelet
from wavesr.errors import ConfigError, DimensionError
from wavesr.loss import FeatureExtractor, LossWeights


def test_adversarial_at_half_is_ln2():
    assert loss.adversarial_loss_g(np.array([0.5, 0.5])) == pytest.approx(0.693147, abs=1e-6)


def test_adversarial_clamped_at_zero():
    v, g = loss.adversarial_loss_g_grad(np.array([0.0]))
    assert v == pytest.approx(-np.log(loss.PROB_EPS))
    assert g[0] == 0.0


def test_adversarial_grad_finite_differences(rng):
    p = rng.uniform(0.1, 0.9, 5)
    _, g = loss.adversarial_loss_g_grad(p)
    assert rel_error(g, numeric_grad(lambda: loss.adversarial_loss_g(p), p)) < 1e-4


def test_discriminator_loss_values_and_grad(rng):
    assert loss.discriminator_loss(np.array([0.5]), np.array([0.5])) == pytest.approx(2 * np.log(2))
    r = rng.uniform(0.1, 0.9, 4)
    f = rng.uniform(0.1, 0.9, 4)
    _, gr, gf = loss.discriminator_loss_grad(r, f)
    assert rel_error(gr, numeric_grad(lambda: loss.discriminator_loss(r, f), r)) < 1e-4
    assert rel_error(gf, numeric_grad(lambda: loss.discriminator_loss(r, f), f)) < 1e-4
    with pytest.raises(DimensionError):
        loss.discriminator_loss(np.ones(2) * 0.5, np.ones(3) * 0.5)


def test_wavelet_loss_zero_on_equal(rng):
    c = rng.standard_normal((2, 3, 16, 4, 4))
    assert loss.wavelet_loss(c, c) == 0.0


def test_wavelet_loss_weighted_band_example():
    sr = np.zeros((1, 16, 2, 2))
    hr = np.zeros((1, 16, 2, 2))
    hr[0, 5] = 2.0
    alpha = np.ones(16)
    alpha[5] = 0.5
    assert loss.wavelet_loss(sr, hr, alpha) == pytest.approx(0.5 * 4.0)


def test_wavelet_loss_channel_and_band_layouts_agree(rng):
    a = rng.standard_normal((2, 48, 3, 3))
    b = rng.standard_normal((2, 48, 3, 3))
    assert loss.wavelet_loss(a, b) == pytest.approx(
        loss.wavelet_loss(wavelet.channels_to_bands(a), wavelet.channels_to_bands(b)), rel=1e-14
    )


def test_wavelet_loss_grad_finite_differences(rng):
    a = rng.standard_normal((1, 48, 2, 3))
    b = rng.standard_normal((1, 48, 2, 3))
    alpha = rng.random(16)
    _, g = loss.wavelet_loss_grad(a, b, alpha)
    assert g.shape == a.shape
    assert rel_error(g, numeric_grad(lambda: loss.wavelet_loss(a, b, alpha), a)) < 1e-4


def test_wavelet_loss_bad_alpha():
    with pytest.raises(DimensionError):
        loss.wavelet_loss(np.zeros((16, 2, 2)), np.zeros((16, 2, 2)), np.ones(15))


def test_loss_weights_validation():
    with pytest.raises(ConfigError):
        LossWeights(alpha=np.ones(4))
    with pytest.raises(ConfigError):
        LossWeights(lambda_adv=-1.0)


@pytest.mark.parametrize("kind", ["random", "identity"])
def test_content_loss_grad_finite_differences(rng, kind):
    ext = FeatureExtractor(kind, seed=3)
    sr = rng.random((1, 3, 8, 8))
    hr = rng.random((1, 3, 8, 8))
    v, g = loss.content_loss_grad(sr, hr, ext)
    assert v > 0
    assert rel_error(g, numeric_grad(lambda: loss.content_loss(sr, hr, ext), sr)) < 1e-4


def test_content_loss_identity_extractor_is_pixel_mse(rng):
    sr, hr = rng.random((1, 3, 4, 4)), rng.random((1, 3, 4, 4))
    assert loss.content_loss(sr, hr, FeatureExtractor("identity")) == pytest.approx(np.mean((sr - hr) ** 2))


def test_content_loss_shape_mismatch():
    with pytest.raises(DimensionError):
        loss.content_loss(np.zeros((1, 3, 8, 8)), np.zeros((1, 3, 8, 4)), FeatureExtractor("identity"))


def test_extractor_is_frozen_and_seeded(rng):
    a, b = FeatureExtractor(seed=1), FeatureExtractor(seed=1)
    assert a.trainable_parameters() == {}
    x = rng.random((1, 3, 16, 16))
    np.testing.assert_array_equal(a.forward(x), b.forward(x))
    assert a.forward(x).shape == (1, 64, 2, 2)
    a.forward(x)
    a.backward(np.ones((1, 64, 2, 2)))
    assert all(c.weight.grad is None or not c.weight.grad.any() for c in a._convs)


def test_extractor_file_roundtrip(tmp_path, rng):
    ext = FeatureExtractor(seed=4)
    path = tmp_path / "vgg.wsr"
    checkpoint.save(path, ext.to_entries())
    loaded = FeatureExtractor.from_file(path)
    x = rng.random((1, 3, 16, 16))
    np.testing.assert_allclose(loaded.forward(x), ext.forward(x), rtol=1e-6, atol=1e-6)
    checkpoint.save(path, {"other": np.zeros(2)})
    with pytest.raises(ConfigError, match="conv0.weight"):
        FeatureExtractor.from_file(path)


def test_total_loss_fixed_point(rng):
    hr = rng.random((2, 3, 16, 16))
    coeffs = wavelet.bands_to_channels(wavelet.wpt2(hr))
    out = loss.generator_total_loss(hr, hr, np.ones(2), coeffs, coeffs, LossWeights(), FeatureExtractor())
    assert out.total < 1e-6
    assert out.content == 0.0 and out.wavelet == 0.0


def test_total_loss_combination(rng):
    sr, hr = rng.random((1, 3, 16, 16)), rng.random((1, 3, 16, 16))
    cs = wavelet.bands_to_channels(wavelet.wpt2(sr))
    ch = wavelet.bands_to_channels(wavelet.wpt2(hr))
    w = LossWeights(lambda_adv=0.1, lambda_wavelet=2.0)
    out = loss.generator_total_loss(sr, hr, np.array([0.3]), cs, ch, w, FeatureExtractor())
    assert out.total == pytest.approx(out.content + 0.1 * out.adversarial + 2.0 * out.wavelet, rel=1e-14)


def _composite(gen, disc, ext, lr, hr, weights):
    """Total generator loss as a function of the generator parameters."""
    sr, coeffs = network.sr_reconstruct(gen, lr)
    target = wavelet.bands_to_channels(wavelet.wpt2(hr))
    d_fake = disc.forward(sr)
    return loss.generator_total_loss(sr, hr, d_fake, coeffs, target, weights, ext).total


def test_end_to_end_composite_gradient():
    rng = np.random.default_rng(11)
    gen = network.init_generator(0, features=8, blocks=2)
    gen.head.weight.data = gen.head.weight.data * 10.0
    disc = network.init_discriminator(0, channels=2)
    ext = FeatureExtractor(seed=0)
    weights = LossWeights(lambda_adv=0.5, lambda_wavelet=1.0, alpha=rng.random(16) + 0.5)
    lr = rng.random((1, 3, 8, 8))
    hr = rng.random((1, 3, 32, 32))

    # analytic, following the trainer's wiring
    sr, coeffs = network.sr_reconstruct(gen, lr)
    d_fake = disc.forward(sr)
    target = wavelet.bands_to_channels(wavelet.wpt2(hr))
    _, grads = loss.generator_total_loss(sr, hr, d_fake, coeffs, target, weights, ext, need_grad=True)
    g_sr = grads.sr + disc.backward(grads.d_fake, param_grads=False)
    gen.zero_grad()
    gen.backward(network.sr_backward(g_sr) + grads.coeffs)

    def f():
        return _composite(gen, disc, ext, lr, hr, weights)

    eps = 1e-5
    for name, p in gen.named_parameters():
        flat = p.data.reshape(-1)
        for i in rng.choice(flat.size, size=min(6, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f()
            flat[i] = orig - eps
            fm = f()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            assert rel_error(p.grad.reshape(-1)[i], num) < 1e-3, (name, i)
