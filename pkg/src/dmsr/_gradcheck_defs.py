"""Registered finite-difference checks for every differentiable piece.

Fixtures here must be pure functions of their tensor arguments (no RNG
inside the checked callable) and must keep inputs away from the kinks of
relu/abs/clamp and of bilinear sampling (integer offsets), otherwise the
central difference straddles the corner and the comparison is
meaningless rather than wrong.
"""

from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .deform import ModulatedDeformBlock, modulated_deform_conv
from .gradcheck import check_fn, register_check
from .losses import celoss, l1_loss, total_loss
from .network import (MultiViewContext, PatchEmbed, PatchExpanding,
                      PatchMerging, PixelShuffleUpsample, FinalProjection,
                      pixel_shuffle, space_to_depth)
from .ss2d import (SS2D, ChannelAttention, VisionMambaBlock, scan_expand,
                   scan_merge)
from .ssm import SelectiveScan, ssm_scan
from .tensor import Tensor


def _away_from_zero(x, margin):
    """Push every entry at least ``margin`` from 0 (kink of relu/abs)."""
    sign = np.where(x >= 0, 1.0, -1.0)
    return np.where(np.abs(x) < margin, x + sign * margin, x)


def _rebind(root, dotted: str, value):
    """Install ``value`` at a dotted parameter path ('scans.0.w_dt')."""
    obj = root
    parts = dotted.split(".")
    for part in parts[:-1]:
        obj = obj[int(part)] if isinstance(obj, list) else getattr(obj, part)
    last = parts[-1]
    if isinstance(obj, list):
        obj[int(last)] = value
    else:
        setattr(obj, last, value)


def _module_check(build, x_shape, seed, x_scale=0.5, jitter=None):
    """Check d(sum(w0 * module(x)))/d(x and every parameter)."""
    rng = np.random.default_rng(seed)
    m = build(rng)
    if jitter is not None:
        jitter(m, rng)
    names = [n for n, _ in m.named_parameters()]
    x0 = rng.normal(size=x_shape) * x_scale
    with T.no_grad():
        y0 = m(Tensor(x0))
    w0 = Tensor(rng.normal(size=y0.shape))

    def fn(x, *params):
        for name, p in zip(names, params):
            _rebind(m, name, p)
        return T.sum_(m(x) * w0)

    arrays = [x0] + [p.data.copy() for _, p in m.named_parameters()]
    return check_fn(fn, arrays)


# ----------------------------------------------------------------- tensor

@register_check("tensor", "add_mul_broadcast")
def _check_add_mul():
    rng = np.random.default_rng(0)
    a, b, c = rng.normal(size=(3, 4)), rng.normal(size=4), \
        rng.normal(size=(3, 1))
    return check_fn(lambda x, y, z: T.sum_((x + y) * z + x * 0.5 - y / 2.0),
                    [a, b, c])


@register_check("tensor", "sigmoid_silu_softplus")
def _check_smooth_activations():
    rng = np.random.default_rng(1)
    a, b, c = (rng.normal(size=(4, 3)) for _ in range(3))
    return check_fn(
        lambda x, y, z: T.sum_(T.sigmoid(x) * T.silu(y) + T.softplus(z)),
        [a, b, c])


@register_check("tensor", "exp_log")
def _check_exp_log():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 3)) * 0.5
    b = rng.uniform(0.5, 2.0, size=(3, 3))
    return check_fn(lambda x, y: T.sum_(T.exp(x) * T.log(y)), [a, b])


@register_check("tensor", "relu_abs_clamp")
def _check_kinked_activations():
    rng = np.random.default_rng(3)
    a = _away_from_zero(rng.normal(size=(4, 4)), 0.2)
    b = _away_from_zero(rng.normal(size=(4, 4)), 0.2)
    c = rng.uniform(-2.0, 2.0, size=(4, 4))
    for bound in (-0.8, 0.8):
        near = np.abs(c - bound) < 0.1
        c[near] = bound + 0.2 * np.sign(c[near] - bound + 1e-12)
    return check_fn(
        lambda x, y, z: T.sum_(T.relu(x) + T.absolute(y)
                               + T.clamp(z, -0.8, 0.8)),
        [a, b, c])


@register_check("tensor", "matmul")
def _check_matmul():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    w0 = Tensor(rng.normal(size=(3, 2)))
    return check_fn(lambda x, y: T.sum_(T.matmul(x, y) * w0), [a, b])


@register_check("tensor", "layer_norm")
def _check_layer_norm():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(5, 4))
    gamma = rng.normal(size=4) + 1.0
    beta = rng.normal(size=4)
    w0 = Tensor(rng.normal(size=(5, 4)))
    return check_fn(
        lambda a, g, b: T.sum_(T.layer_norm(a, g, b) * w0),
        [x, gamma, beta])


@register_check("tensor", "conv2d")
def _check_conv2d():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(1, 2, 5, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    w0 = Tensor(rng.normal(size=(1, 3, 5, 6)))
    return check_fn(
        lambda a, k, c: T.sum_(T.conv2d(a, k, c, padding=1) * w0),
        [x, w, b])


@register_check("tensor", "conv2d_strided_dilated")
def _check_conv2d_strided():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 2, 7, 7))
    w = rng.normal(size=(2, 2, 3, 3))
    return check_fn(
        lambda a, k: T.sum_(T.conv2d(a, k, stride=2, padding=2,
                                     dilation=2)),
        [x, w])


@register_check("tensor", "conv2d_grouped")
def _check_conv2d_grouped():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(1, 4, 5, 5))
    w = rng.normal(size=(4, 2, 3, 3))
    b = rng.normal(size=4)
    return check_fn(
        lambda a, k, c: T.sum_(T.conv2d(a, k, c, padding=1, groups=2)),
        [x, w, b])


@register_check("tensor", "shape_ops")
def _check_shape_ops():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(2, 3, 4))

    def fn(x):
        y = T.flip(T.transpose(x, (1, 0, 2)), axis=2)
        z = T.concat([y, y * 2.0], axis=1)
        s = T.mean(z[:, 1:, :], axis=(0, 2))
        return T.sum_(s * s) + T.sum_(T.reshape(x, (6, 4)))

    return check_fn(fn, [a])


# -------------------------------------------------------------------- ssm

@register_check("ssm", "ssm_scan")
def _check_ssm_scan():
    rng = np.random.default_rng(10)
    ll, d, n = 6, 3, 2
    x = rng.normal(size=(ll, d))
    delta = rng.uniform(0.05, 0.4, size=(ll, d))
    b = rng.normal(size=(ll, n))
    c = rng.normal(size=(ll, n))
    a = -rng.uniform(0.3, 1.5, size=(d, n))
    d_skip = rng.normal(size=d)
    w0 = Tensor(rng.normal(size=(ll, d)))
    return check_fn(
        lambda *args: T.sum_(ssm_scan(*args) * w0),
        [x, delta, b, c, a, d_skip])


@register_check("ssm", "selective_scan")
def _check_selective_scan():
    return _module_check(lambda rng: SelectiveScan(3, 2, rng), (6, 3),
                         seed=11)


# ------------------------------------------------------------------- ss2d

@register_check("ss2d", "scan_expand")
def _check_scan_expand():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(2, 3, 4))
    w0 = Tensor(rng.normal(size=(4, 12, 2)))
    return check_fn(lambda a: T.sum_(scan_expand(a) * w0), [x])


@register_check("ss2d", "scan_merge")
def _check_scan_merge():
    rng = np.random.default_rng(13)
    seqs = rng.normal(size=(4, 12, 2))
    w0 = Tensor(rng.normal(size=(2, 3, 4)))
    return check_fn(lambda a: T.sum_(scan_merge(a, 3, 4) * w0), [seqs])


@register_check("ss2d", "ss2d_module")
def _check_ss2d_module():
    return _module_check(lambda rng: SS2D(2, 2, rng), (2, 3, 4), seed=14)


@register_check("ss2d", "channel_attention")
def _check_channel_attention():
    return _module_check(lambda rng: ChannelAttention(4, 2, rng),
                         (4, 3, 3), seed=15)


@register_check("ss2d", "vision_mamba_block")
def _check_vm_block():
    return _module_check(lambda rng: VisionMambaBlock(2, 2, rng),
                         (2, 4, 4), seed=16)


# ----------------------------------------------------------------- deform

@register_check("deform", "modulated_deform_conv")
def _check_mdc():
    rng = np.random.default_rng(17)
    c, h, w = 2, 5, 5
    x = rng.normal(size=(c, h, w))
    wk = rng.normal(size=(2, c, 3, 3))
    # fractional sampling positions: |offset| in [0.15, 0.45] keeps every
    # tap well clear of the bilinear corner at integer coordinates
    off = (rng.uniform(0.15, 0.45, size=(h, w, 18))
           * rng.choice([-1.0, 1.0], size=(h, w, 18)))
    mask = rng.uniform(0.2, 0.9, size=(h, w, 9))
    w0 = Tensor(rng.normal(size=(2, h, w)))
    return check_fn(
        lambda *args: T.sum_(modulated_deform_conv(*args) * w0),
        [x, wk, off, mask])


def _jitter_predictor(m, rng):
    # zero-initialized offset convs would place every tap exactly on the
    # integer lattice; bias the predictions into fractional territory
    pred = m.predictor
    pred.offset_conv.w.data = rng.uniform(-0.05, 0.05,
                                          pred.offset_conv.w.shape)
    pred.offset_conv.b.data = rng.uniform(0.2, 0.45,
                                          pred.offset_conv.b.shape)
    pred.mask_conv.w.data = rng.uniform(-0.3, 0.3, pred.mask_conv.w.shape)
    pred.mask_conv.b.data = rng.uniform(-0.2, 0.2, pred.mask_conv.b.shape)


@register_check("deform", "deform_block")
def _check_deform_block():
    return _module_check(lambda rng: ModulatedDeformBlock(2, rng),
                         (2, 5, 5), seed=18, jitter=_jitter_predictor)


# ---------------------------------------------------------------- network

@register_check("network", "pixel_shuffle_roundtrip")
def _check_pixel_shuffle():
    rng = np.random.default_rng(19)
    x = rng.normal(size=(8, 3, 3))
    w0 = Tensor(rng.normal(size=(8, 3, 3)))
    return check_fn(
        lambda a: T.sum_(space_to_depth(pixel_shuffle(a, 2), 2) * w0), [x])


@register_check("network", "patch_embed")
def _check_patch_embed():
    return _module_check(lambda rng: PatchEmbed(1, 2, 3, rng), (1, 4, 6),
                         seed=20)


@register_check("network", "patch_merging")
def _check_patch_merging():
    return _module_check(lambda rng: PatchMerging(2, 3, rng), (2, 4, 4),
                         seed=21)


@register_check("network", "patch_expanding")
def _check_patch_expanding():
    return _module_check(lambda rng: PatchExpanding(4, 2, rng), (4, 2, 3),
                         seed=22)


@register_check("network", "multi_view_context")
def _check_mvc():
    return _module_check(lambda rng: MultiViewContext(3, (1, 2, 4), rng),
                         (3, 6, 6), seed=23)


@register_check("network", "upsample_head")
def _check_upsample_head():
    return _module_check(lambda rng: PixelShuffleUpsample(2, 2, rng),
                         (2, 3, 3), seed=24)


@register_check("network", "final_projection")
def _check_final_projection():
    return _module_check(lambda rng: FinalProjection(3, 2, rng), (3, 2, 2),
                         seed=25)


# ----------------------------------------------------------------- losses

def _loss_pair(seed, shape=(1, 6, 6)):
    rng = np.random.default_rng(seed)
    hr = rng.uniform(0.0, 1.0, size=shape)
    diff = (rng.uniform(0.1, 0.3, size=shape)
            * rng.choice([-1.0, 1.0], size=shape))
    return hr + diff, hr  # |sr - hr| >= 0.1: off the L1 tie


@register_check("losses", "l1_loss")
def _check_l1():
    sr, hr = _loss_pair(26)
    hrt = Tensor(hr)
    return check_fn(lambda a: l1_loss(a, hrt), [sr])


@register_check("losses", "celoss")
def _check_celoss():
    sr, hr = _loss_pair(27)
    hrt = Tensor(hr)
    return check_fn(lambda a: celoss(a, hrt), [sr])


@register_check("losses", "total_loss")
def _check_total_loss():
    sr, hr = _loss_pair(28)
    hrt = Tensor(hr)
    return check_fn(lambda a: total_loss(a, hrt, beta=0.1)[0], [sr])
