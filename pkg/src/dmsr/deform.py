"""Modulated deformable 3x3 convolution with learned offsets and masks.

Each of the nine kernel taps samples the input at its regular position
plus a predicted fractional offset, bilinearly interpolated with zero
outside the image, and scaled by a predicted per-tap mask in (0, 1):

    y[f, p] = sum_{c,k} w[f,c,k] * x_c(p + tap_k + dp[p,k]) * m[p,k]

Offset and mask convolutions are zero-initialized, so an untrained block
starts as a plain 3x3 convolution with all masks at 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .tensor import DimensionError, Tensor

K_TAPS = 9
# (dy, dx) per tap, row-major over the 3x3 neighborhood.
TAPS = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)],
                dtype=np.float64)


def bilinear_sample(img: np.ndarray, qy: float, qx: float) -> np.ndarray:
    """Sample [C, H, W] at fractional (qy, qx); zero outside the border."""
    c, h, w = img.shape
    y0, x0 = int(np.floor(qy)), int(np.floor(qx))
    fy, fx = qy - y0, qx - x0
    out = np.zeros(c)
    for yc, xc, wt in ((y0, x0, (1 - fy) * (1 - fx)),
                       (y0, x0 + 1, (1 - fy) * fx),
                       (y0 + 1, x0, fy * (1 - fx)),
                       (y0 + 1, x0 + 1, fy * fx)):
        if 0 <= yc < h and 0 <= xc < w:
            out += wt * img[:, yc, xc]
    return out


def _corner_tables(qy, qx, h, w):
    """Per corner: (clipped flat index, validity, bilinear weight, fy, fx)."""
    y0 = np.floor(qy)
    x0 = np.floor(qx)
    fy = qy - y0
    fx = qx - x0
    corners = []
    for dy, dx, wt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                       (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        yc = y0 + dy
        xc = x0 + dx
        valid = (yc >= 0) & (yc < h) & (xc >= 0) & (xc < w)
        flat = (np.clip(yc, 0, h - 1) * w + np.clip(xc, 0, w - 1)).astype(np.intp)
        corners.append((flat, valid.astype(np.float64), wt))
    return corners, fy, fx


def modulated_deform_conv(x: Tensor, w: Tensor, offsets: Tensor,
                          mask: Tensor) -> Tensor:
    """Deformable 3x3 cross-correlation, channel-preserving in extent.

    Shapes: x [C,H,W]; w [F,C,3,3]; offsets [H,W,18] with (dy, dx)
    interleaved per tap; mask [H,W,9].  Gradients flow to all four inputs.
    """
    c, h, wd = x.data.shape
    f = w.data.shape[0]
    if w.data.shape != (f, c, 3, 3):
        raise DimensionError(f"weight must be [F,{c},3,3], got {w.shape}")
    if offsets.data.shape != (h, wd, 2 * K_TAPS):
        raise DimensionError(
            f"offsets must be [{h},{wd},{2 * K_TAPS}], got {offsets.shape}")
    if mask.data.shape != (h, wd, K_TAPS):
        raise DimensionError(
            f"mask must be [{h},{wd},{K_TAPS}], got {mask.shape}")

    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(wd, dtype=np.float64), indexing="ij")
    off = offsets.data
    qy = gy[:, :, None] + TAPS[None, None, :, 0] + off[:, :, 0::2]
    qx = gx[:, :, None] + TAPS[None, None, :, 1] + off[:, :, 1::2]
    corners, fy, fx = _corner_tables(qy, qx, h, wd)

    xflat = x.data.reshape(c, -1)
    val = np.zeros((c, h, wd, K_TAPS))
    for flat, valid, wt in corners:
        val += xflat[:, flat] * (valid * wt)
    w9 = w.data.reshape(f, c, K_TAPS)
    out = np.einsum("fck,cijk,ijk->fij", w9, val, mask.data)

    def build(out_t):
        def bw(g):
            if w.requires_grad:
                dw = np.einsum("fij,cijk,ijk->fck", g, val, mask.data)
                w.accumulate_grad(dw.reshape(f, c, 3, 3))
            if mask.requires_grad:
                mask.accumulate_grad(
                    np.einsum("fij,fck,cijk->ijk", g, w9, val))
            need_x = x.requires_grad
            need_off = offsets.requires_grad
            if not (need_x or need_off):
                return
            dval = np.einsum("fij,fck->cijk", g, w9) * mask.data[None]
            if need_x:
                dxflat = np.zeros(c * h * wd)
                chan = (np.arange(c) * (h * wd))[:, None, None, None]
                for flat, valid, wt in corners:
                    dxflat += np.bincount(
                        (chan + flat[None]).ravel(),
                        weights=(dval * (valid * wt)).ravel(),
                        minlength=c * h * wd)
                x.accumulate_grad(dxflat.reshape(c, h, wd))
            if need_off:
                (fl00, v00, _), (fl01, v01, _), (fl10, v10, _), \
                    (fl11, v11, _) = corners
                x00 = xflat[:, fl00] * v00
                x01 = xflat[:, fl01] * v01
                x10 = xflat[:, fl10] * v10
                x11 = xflat[:, fl11] * v11
                dvdy = -(1 - fx) * x00 - fx * x01 + (1 - fx) * x10 + fx * x11
                dvdx = -(1 - fy) * x00 + (1 - fy) * x01 - fy * x10 + fy * x11
                doff = np.empty((h, wd, 2 * K_TAPS))
                doff[:, :, 0::2] = np.einsum("cijk,cijk->ijk", dval, dvdy)
                doff[:, :, 1::2] = np.einsum("cijk,cijk->ijk", dval, dvdx)
                offsets.accumulate_grad(doff)
        return bw

    return T._finish("modulated_deform_conv", out,
                     (x, w, offsets, mask), build)


@dataclass
class DeformField:
    """Predicted sampling field: offsets [H,W,18] and masks [H,W,9]."""

    offsets: Tensor
    mask: Tensor


class DeformPredictor(nn.Module):
    """Zero-initialized convs predicting offsets (clamped) and masks."""

    def __init__(self, c: int, rng: np.random.Generator,
                 max_offset: float = 8.0):
        self.offset_conv = nn.Conv2d(c, 2 * K_TAPS, 3, rng, padding=1,
                                     scheme="zeros")
        self.mask_conv = nn.Conv2d(c, K_TAPS, 3, rng, padding=1,
                                   scheme="zeros")
        self.max_offset = float(max_offset)

    def forward(self, x: Tensor) -> DeformField:
        off = T.clamp(T.transpose(self.offset_conv(x), (1, 2, 0)),
                      -self.max_offset, self.max_offset)
        m = T.sigmoid(T.transpose(self.mask_conv(x), (1, 2, 0)))
        return DeformField(off, m)


class ModulatedDeformBlock(nn.Module):
    """predict field -> deformable conv -> silu -> residual add."""

    def __init__(self, c: int, rng: np.random.Generator, *,
                 max_offset: float = 8.0, scheme: str = "fan_in_uniform"):
        self.predictor = DeformPredictor(c, rng, max_offset)
        self.w = nn.init_param((c, c, 3, 3), c * K_TAPS, rng, scheme)
        self.b = nn.init_param((c,), c * K_TAPS, rng, scheme)

    def forward(self, x: Tensor) -> Tensor:
        field = self.predictor(x)
        y = modulated_deform_conv(x, self.w, field.offsets, field.mask)
        y = y + T.reshape(self.b, (-1, 1, 1))
        return x + T.silu(y)
