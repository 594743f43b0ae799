"""Full architecture: shapes, determinism, identities, parameter audit."""

import numpy as np
import pytest

from dmsr import data as D
from dmsr import tensor as T
from dmsr.network import (DeformMambaNet, ModelConfig, MultiViewContext,
                          pixel_shuffle, preset, space_to_depth)
from dmsr.tensor import ConfigError, DimensionError, Tensor

DESK_PARAMS = 56_965  # frozen; a change means the architecture changed


def test_pixel_shuffle_space_to_depth_are_inverses():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(8, 3, 5)))
    round1 = space_to_depth(pixel_shuffle(x, 2), 2)
    np.testing.assert_array_equal(round1.data, x.data)
    y = Tensor(rng.normal(size=(2, 6, 10)))
    round2 = pixel_shuffle(space_to_depth(y, 2), 2)
    np.testing.assert_array_equal(round2.data, y.data)


def test_pixel_shuffle_subpixel_layout():
    # channel block k of r*r lands at spatial offset (k // r, k % r)
    x = np.zeros((4, 1, 1))
    x[:, 0, 0] = [1.0, 2.0, 3.0, 4.0]
    y = pixel_shuffle(Tensor(x), 2).data
    np.testing.assert_array_equal(y[0], [[1, 2], [3, 4]])


@pytest.mark.parametrize("scale", [2, 4])
@pytest.mark.parametrize("extent", [16, 32])
def test_forward_shape_contract(scale, extent):
    net = DeformMambaNet(preset("desk", scale=scale), seed=0)
    lr = Tensor(np.random.default_rng(1).uniform(0, 1, (1, extent, extent)))
    with T.no_grad():
        sr = net(lr)
    assert sr.shape == (1, scale * extent, scale * extent)


def test_rejects_indivisible_extents():
    net = DeformMambaNet(preset("desk"), seed=0)
    with pytest.raises(DimensionError, match="divisible"):
        net(Tensor(np.zeros((1, 15, 16))))


def test_desk_parameter_count_frozen():
    net = DeformMambaNet(preset("desk"), seed=0)
    assert net.parameter_count() == DESK_PARAMS


def test_every_parameter_receives_gradient():
    net = DeformMambaNet(preset("desk"), seed=0)
    lr = Tensor(np.random.default_rng(2).uniform(0, 1, (1, 16, 16)))
    T.reset_tape()
    sr = net(lr)
    T.backward(T.sum_(sr * sr))
    dead = [name for name, p in net.named_parameters()
            if p.grad is None or not np.any(p.grad)]
    not_finite = [name for name, p in net.named_parameters()
                  if p.grad is not None and not np.all(np.isfinite(p.grad))]
    assert dead == []
    assert not_finite == []


def test_same_seed_is_bitwise_identical():
    a = DeformMambaNet(preset("desk"), seed=7)
    b = DeformMambaNet(preset("desk"), seed=7)
    for (na, pa), (nb, pb) in zip(a.named_parameters(),
                                  b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    lr = Tensor(np.random.default_rng(3).uniform(0, 1, (1, 16, 16)))
    with T.no_grad():
        np.testing.assert_array_equal(a(lr).data, b(lr).data)


def test_different_seeds_differ():
    a = DeformMambaNet(preset("desk"), seed=0)
    b = DeformMambaNet(preset("desk"), seed=1)
    assert any(not np.array_equal(pa.data, pb.data)
               for (_, pa), (_, pb) in zip(a.named_parameters(),
                                           b.named_parameters()))


def test_upsample_path_starts_as_nearest_neighbor():
    for scale in (2, 4):
        net = DeformMambaNet(preset("desk", scale=scale), seed=0)
        lr = np.random.default_rng(4).uniform(0, 1, (1, 16, 16))
        with T.no_grad():
            up = net.upsampled_input(Tensor(lr)).data
        np.testing.assert_array_equal(up[0],
                                      D.upsample_nearest(lr[0], scale))


def test_multi_view_context_zero_weights_is_identity():
    mvc = MultiViewContext(6, (1, 2, 4), np.random.default_rng(5))
    for p in mvc.parameters():
        p.data = np.zeros_like(p.data)
    x = Tensor(np.random.default_rng(6).normal(size=(6, 8, 8)))
    np.testing.assert_array_equal(mvc(x).data, x.data)


def test_ablation_switches_change_parameter_tree():
    full = DeformMambaNet(preset("desk"), seed=0)
    no_deform = DeformMambaNet(preset("desk", use_deform=False), seed=0)
    no_mvc = DeformMambaNet(preset("desk", use_mvc=False), seed=0)
    assert no_deform.parameter_count() < full.parameter_count()
    assert no_mvc.parameter_count() < full.parameter_count()
    names = dict(full.named_parameters())
    assert not any(n.startswith("bottleneck")
                   for n, _ in no_mvc.named_parameters())
    assert any(n.startswith("bottleneck") for n in names)


def test_config_validation():
    with pytest.raises(ConfigError):
        preset("desk", scale=3).validate()
    with pytest.raises(ConfigError):
        ModelConfig(channels=(8, 12, 16)).validate()
    with pytest.raises(ConfigError):
        # bottleneck channels must split across dilation branches
        preset("desk", channels=(8, 12, 16, 25)).validate()
    with pytest.raises(ConfigError):
        preset("nonexistent")


def test_divisor_properties():
    cfg = preset("desk")  # patch_size 2, three merges
    assert cfg.hr_divisor == 16
    assert cfg.lr_divisor == 8
    cfg4 = preset("desk", scale=4)
    assert cfg4.hr_divisor == 16
    assert cfg4.lr_divisor == 4


def test_global_residual_toggle():
    cfg = preset("desk", global_residual=False)
    net = DeformMambaNet(cfg, seed=0)
    lr = Tensor(np.random.default_rng(7).uniform(0, 1, (1, 16, 16)))
    with T.no_grad():
        sr = net(lr)
    assert sr.shape == (1, 32, 32)
