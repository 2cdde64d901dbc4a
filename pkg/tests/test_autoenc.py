import gzip

import numpy as np
import pytest

from critbench.autoenc import (AutoencoderParams, MinibatchSampler, NonFiniteActivation, Shape, autoencoder_objective,
                               batch_loss, batch_loss_and_grad, flatten, forward, glorot_init, kink_distance,
                               pearlmutter_hvp, read_idx_images, synthetic_images, unflatten, write_idx_images)
from critbench.core import ObjectiveMeta
from oracles import central_diff_grad, rel_err

FD_H = 1e-6


def random_point(rng, shape, scale=1.0):
    return flatten(glorot_init(rng, shape.ell, shape.d, shape.h)) * scale + 0.1 * rng.standard_normal(shape.size)


def kink_safe_fd(shape, x, Z, h=FD_H, margin=1e-6):
    """Central differences on coordinates whose +-h perturbation keeps every ReLU on one side.

    Returns (fd gradient, mask of usable coordinates).
    """
    f = lambda y: batch_loss(shape, y, Z)
    g = np.zeros_like(x)
    ok = np.ones(x.size, dtype=bool)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        if min(kink_distance(shape, xp, Z), kink_distance(shape, xm, Z)) < margin:
            ok[i] = False
            continue
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g, ok


# -- layout --------------------------------------------------------------------

@pytest.mark.parametrize("ell,d,h", [(1, 4, 3), (2, 5, 5), (3, 7, 2)])
def test_flat_length_and_round_trip(ell, d, h):
    shape = Shape(ell, d, h)
    assert shape.size == h * d + (ell - 1) * h * h + ell * h + (ell - 1) * h + d
    x = np.random.default_rng(0).standard_normal(shape.size)
    np.testing.assert_array_equal(flatten(unflatten(shape, x)), x)


def test_unflatten_rejects_wrong_length():
    with pytest.raises(ValueError):
        unflatten(Shape(1, 3, 2), np.zeros(5))


def test_glorot_limit_and_zero_biases():
    p = glorot_init(np.random.default_rng(0), 2, 4, 4)
    limit = np.sqrt(6 / 8)
    assert limit == pytest.approx(0.86603, abs=1e-5)
    for w in p.W:
        assert np.all(np.abs(w) <= limit)
    assert all(not np.any(b) for b in p.b)


def test_glorot_is_seeded():
    a = glorot_init(np.random.default_rng(5), 2, 6, 4).flat
    b = glorot_init(np.random.default_rng(5), 2, 6, 4).flat
    assert a.tobytes() == b.tobytes()


# -- forward -------------------------------------------------------------------

def test_zero_network_reconstructs_zero():
    shape = Shape(2, 3, 4)
    p = unflatten(shape, np.zeros(shape.size))
    z = np.array([0.5, -1.0, 2.0])
    np.testing.assert_array_equal(forward(p, z), np.zeros(3))
    assert batch_loss(shape, p.flat, z) == pytest.approx(float(z @ z))


@pytest.mark.parametrize("c", [0.5, 1.0, 2.5])
def test_scaled_identity_gives_c_squared(c):
    d = 4
    shape = Shape(1, d, d)
    p = AutoencoderParams(shape, [c * np.eye(d)], [np.zeros(d), np.zeros(d)])
    z = np.array([0.2, 0.0, 1.3, 0.7])
    np.testing.assert_allclose(forward(p, z), c * c * z, rtol=1e-15)


def test_perfect_reconstruction_has_zero_loss_and_gradient():
    shape = Shape(1, 2, 2)
    p = AutoencoderParams(shape, [np.eye(2)], [np.zeros(2), np.zeros(2)])
    loss, g = batch_loss_and_grad(p, np.array([[1.0, 0.0]]))
    assert loss == 0.0
    # the second hidden unit sits exactly on its kink, where the ReLU derivative is 0
    assert not np.any(g)


def test_forward_batch_matches_rows():
    shape = Shape(2, 5, 3)
    rng = np.random.default_rng(1)
    p = unflatten(shape, random_point(rng, shape))
    Z = rng.uniform(0, 1, (4, 5))
    np.testing.assert_allclose(forward(p, Z), np.stack([forward(p, z) for z in Z]), rtol=1e-14)


def test_non_finite_activation_names_layer():
    shape = Shape(2, 2, 2)
    x = np.zeros(shape.size)
    x[0] = np.inf
    with pytest.raises(NonFiniteActivation) as info:
        batch_loss(shape, x, np.ones((1, 2)))
    assert info.value.layer == 1


# -- gradients -----------------------------------------------------------------

def test_zero_parameter_gradient():
    shape = Shape(2, 3, 3)
    Z = np.random.default_rng(2).uniform(0, 1, (6, 3))
    loss, g = batch_loss_and_grad(shape, Z, np.zeros(shape.size))
    p = unflatten(shape, g)
    np.testing.assert_allclose(p.b[-1], -2 * Z.mean(axis=0), rtol=1e-14)
    # every ReLU is at its kink, so only the output bias receives gradient
    assert not np.any(g[: -shape.d])
    fd = central_diff_grad(lambda y: batch_loss(shape, y, Z), np.zeros(shape.size))
    mask = np.zeros(shape.size, dtype=bool)
    mask[-shape.d:] = True  # one-sided kinks make the other finite differences meaningless
    assert rel_err(g[mask], fd[mask]) <= 1e-5


@pytest.mark.parametrize("ell,d,h", [(1, 4, 3), (2, 5, 5), (3, 3, 4)])
def test_gradient_matches_finite_differences(ell, d, h):
    shape = Shape(ell, d, h)
    rng = np.random.default_rng(10 + ell)
    for _ in range(3):
        x = random_point(rng, shape)
        Z = rng.uniform(0, 1, (7, d))
        _, g = batch_loss_and_grad(shape, Z, x)
        fd, ok = kink_safe_fd(shape, x, Z)
        assert ok.mean() > 0.9
        assert rel_err(g[ok], fd[ok]) <= 1e-5


def test_tied_gradient_is_sum_of_encoder_and_decoder_paths():
    # untie W_1 into encoder/decoder copies, differentiate each, then add
    d, h = 4, 3
    rng = np.random.default_rng(0)
    We, b1, b2 = rng.standard_normal((h, d)), rng.standard_normal(h), rng.standard_normal(d)
    Z = rng.uniform(0, 1, (5, d))

    def untied_loss(We_, Wd_):
        hid = np.maximum(Z @ We_.T + b1, 0)
        return float(np.sum((hid @ Wd_ + b2 - Z) ** 2)) / len(Z)

    gE = central_diff_grad(lambda w: untied_loss(w.reshape(h, d), We), We.ravel())
    gD = central_diff_grad(lambda w: untied_loss(We, w.reshape(h, d)), We.ravel())
    shape = Shape(1, d, h)
    x = np.concatenate([We.ravel(), b1, b2])
    _, g = batch_loss_and_grad(shape, Z, x)
    assert rel_err(g[: h * d], gE + gD) <= 1e-6


def test_params_and_shape_call_forms_agree():
    shape = Shape(2, 4, 3)
    rng = np.random.default_rng(3)
    x = random_point(rng, shape)
    Z = rng.uniform(0, 1, (5, 4))
    l1, g1 = batch_loss_and_grad(unflatten(shape, x), Z)
    l2, g2 = batch_loss_and_grad(shape, Z, x)
    assert l1 == l2 and np.array_equal(g1, g2)


# -- Hessian-vector products ---------------------------------------------------

def setup_hvp(seed=0, ell=2, d=5, h=5):
    shape = Shape(ell, d, h)
    rng = np.random.default_rng(seed)
    return shape, random_point(rng, shape), rng.uniform(0, 1, (6, d)), rng


def test_hvp_zero_direction():
    shape, x, Z, _ = setup_hvp()
    assert not np.any(pearlmutter_hvp(shape, Z, np.zeros(shape.size), x))


def test_hvp_linearity():
    shape, x, Z, rng = setup_hvp(1)
    v, w = rng.standard_normal(shape.size), rng.standard_normal(shape.size)
    a, b = 1.7, -0.4
    lhs = pearlmutter_hvp(shape, Z, a * v + b * w, x)
    rhs = a * pearlmutter_hvp(shape, Z, v, x) + b * pearlmutter_hvp(shape, Z, w, x)
    assert rel_err(lhs, rhs) <= 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_hvp_matches_gradient_differences(seed):
    shape, x, Z, rng = setup_hvp(seed)
    v = rng.standard_normal(shape.size)
    h = 1e-5 / np.linalg.norm(v)
    # a kink-free neighbourhood makes the central difference exact up to O(h^2)
    assert kink_distance(shape, x, Z) > 1e-3
    grad = lambda y: batch_loss_and_grad(shape, Z, y)[1]
    fd = (grad(x + h * v) - grad(x - h * v)) / (2 * h)
    assert rel_err(pearlmutter_hvp(shape, Z, v, x), fd) <= 1e-4


def test_hvp_symmetric():
    shape, x, Z, rng = setup_hvp(5, ell=3, d=4, h=3)
    u, v = rng.standard_normal(shape.size), rng.standard_normal(shape.size)
    a = float(u @ pearlmutter_hvp(shape, Z, v, x))
    b = float(v @ pearlmutter_hvp(shape, Z, u, x))
    assert a == pytest.approx(b, rel=1e-10)


def test_hvp_direction_shape_checked():
    shape, x, Z, _ = setup_hvp()
    with pytest.raises(ValueError):
        pearlmutter_hvp(shape, Z, np.zeros(3), x)


# -- objective wrapper and data --------------------------------------------------

def test_objective_wrapper_estimates_meta():
    shape = Shape(1, 4, 3)
    Z = np.random.default_rng(0).uniform(0, 1, (20, 4))
    obj = autoencoder_objective(shape, Z, rng=np.random.default_rng(1))
    assert obj.meta.sigma_estimated and obj.meta.L > 0 and obj.dim == shape.size
    given = ObjectiveMeta(L=5.0, sigma=3.0, f_star=0.0)
    assert autoencoder_objective(shape, Z, meta=given).meta is given
    with pytest.raises(ValueError):
        autoencoder_objective(Shape(1, 5, 3), Z, meta=given)


def test_synthetic_images_in_unit_range_and_seeded():
    a = synthetic_images(np.random.default_rng(0), 10, 6)
    b = synthetic_images(np.random.default_rng(0), 10, 6)
    assert a.shape == (10, 36) and a.min() >= 0 and a.max() <= 1
    assert a.tobytes() == b.tobytes()


def test_idx_round_trip_and_crop(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (3, 28, 28), dtype=np.uint8)
    path = tmp_path / "imgs.idx"
    write_idx_images(path, imgs)
    full = read_idx_images(path)
    np.testing.assert_array_equal(full, imgs.reshape(3, -1) / 255.0)
    cropped = read_idx_images(path, crop=3)
    assert cropped.shape == (3, 22 * 22)
    np.testing.assert_array_equal(cropped, imgs[:, 3:25, 3:25].reshape(3, -1) / 255.0)
    gz = tmp_path / "imgs.idx.gz"
    gz.write_bytes(gzip.compress(path.read_bytes()))
    np.testing.assert_array_equal(read_idx_images(gz), full)


def test_idx_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"\x00\x00\x08\x01" + b"\x00" * 12)
    with pytest.raises(ValueError, match="magic"):
        read_idx_images(bad)
    short = tmp_path / "short.idx"
    write_idx_images(short, np.zeros((2, 4, 4), dtype=np.uint8))
    short.write_bytes(short.read_bytes()[:-5])
    with pytest.raises(ValueError, match="expected"):
        read_idx_images(short)


def test_minibatch_sampler_covers_epoch_without_repeats():
    s = MinibatchSampler(10, 5, np.random.default_rng(0))
    epoch = np.concatenate([s.next(), s.next()])
    assert sorted(epoch) == list(range(10))
    with pytest.raises(ValueError):
        MinibatchSampler(3, 5, np.random.default_rng(0))
