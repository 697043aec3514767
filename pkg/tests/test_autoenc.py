import numpy as np
import pytest
import torch

from gradcheck import fd_gradient, max_rel_error
from zoneprior.autoenc import (
    AeConfig,
    ae_forward,
    decode,
    encode,
    init_autoencoder,
)
from zoneprior.losses import bce, latent_loss


def _random_stack(seed=0):
    rng = np.random.default_rng(seed)
    return (rng.random((36, 36, 18, 2)) < 0.3).astype(np.float32)


def test_init_determinism():
    a = init_autoencoder(AeConfig(seed=7))
    b = init_autoencoder(AeConfig(seed=7))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_encode_shape():
    model = init_autoencoder()
    z = encode(model, _random_stack())
    assert z.shape == (9, 9, 5, 1)

    wide = init_autoencoder(AeConfig(latent_channels=3))
    assert encode(wide, _random_stack()).shape == (9, 9, 5, 3)


def test_encode_deterministic():
    model = init_autoencoder()
    s = _random_stack(1)
    assert np.array_equal(encode(model, s), encode(model, s))


def test_decode_shape_and_range():
    model = init_autoencoder()
    z = np.random.default_rng(2).normal(size=(9, 9, 5, 1)).astype(np.float32)
    out = decode(model, z)
    assert out.shape == (36, 36, 18, 2)
    assert out.min() > 0.0 and out.max() < 1.0
    assert np.array_equal(out, decode(model, z))


def test_shape_roundtrip():
    model = init_autoencoder()
    s = _random_stack(3)
    assert ae_forward(model, s).shape == s.shape


def test_bad_shapes_rejected():
    model = init_autoencoder()
    with pytest.raises(ValueError):
        model.encode(torch.zeros(1, 2, 36, 36, 17))
    with pytest.raises(ValueError):
        model.decode(torch.zeros(1, 1, 9, 9, 4))


def test_untrained_loss_finite():
    model = init_autoencoder()
    s = _random_stack(4)
    loss = bce(torch.tensor(ae_forward(model, s)), torch.tensor(s))
    assert torch.isfinite(loss)


def _conv_params(cin, cout, k):
    kx, ky, kz = (k, k, k) if isinstance(k, int) else k
    return cin * cout * kx * ky * kz + cout


def test_parameter_count_shape_walk():
    f0, f1, k = 16, 32, 1
    # independent walk over the declared layers
    expected = (
        _conv_params(2, f0, 3) + _conv_params(f0, f0, 3)        # enc conv + stride
        + _conv_params(f0, f1, 3) + _conv_params(f1, f1, 3)     # enc conv + stride
        + _conv_params(f1, k, 1)                                # latent 1x1x1
        + _conv_params(k, f1, 3) + _conv_params(f1, f0, 3)      # dec up + conv
        + _conv_params(f0, f0, 3) + _conv_params(f0, f0, 3)     # dec up + conv
        + _conv_params(f0, 2, 1)                                # output 1x1x1
    )
    model = init_autoencoder(AeConfig(filters=(f0, f1), latent_channels=k))
    assert sum(p.numel() for p in model.parameters()) == expected


def test_rescale_latent_preserves_reconstruction():
    model = init_autoencoder(AeConfig(seed=8))
    s = _random_stack(7)
    before_recon = ae_forward(model, s)
    before_enc = encode(model, s)
    model.rescale_latent(4.0)
    after_recon = ae_forward(model, s)
    after_enc = encode(model, s)
    assert np.allclose(after_enc, before_enc / 4.0, atol=1e-5)
    assert np.allclose(after_recon, before_recon, atol=1e-5)
    with pytest.raises(ValueError):
        model.rescale_latent(0.0)


def test_encoder_input_gradient_matches_fd():
    # gradient of latent_loss(encode(x), e0) with respect to the input
    model = init_autoencoder(AeConfig(filters=(2, 3), seed=5)).double()
    rng = np.random.default_rng(6)
    x = torch.tensor(rng.random((1, 2, 36, 36, 18)), dtype=torch.float64)
    e0 = torch.tensor(rng.normal(size=(1, 1, 9, 9, 5)), dtype=torch.float64)

    def fn(inp):
        return latent_loss(model.encode(inp), e0)

    x_req = x.clone().requires_grad_(True)
    fn(x_req).backward()
    analytic = x_req.grad.detach()

    # spot-check a random subset of coordinates (full FD would be slow)
    flat = x.clone()
    idx = rng.choice(x.numel(), size=25, replace=False)
    view = flat.reshape(-1)
    h = 1e-4
    for i in idx:
        orig = view[i].item()
        view[i] = orig + h
        hi = fn(flat).item()
        view[i] = orig - h
        lo = fn(flat).item()
        view[i] = orig
        numeric = (hi - lo) / (2 * h)
        a = analytic.reshape(-1)[i].item()
        assert abs(a - numeric) / max(abs(numeric), 1e-6) < 1e-3
