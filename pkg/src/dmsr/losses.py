"""Training losses: pixel L1 plus a contrastive edge term.

The edge term compares high-frequency structure: three fixed zero-sum
3x3 kernels (two cross/diagonal Laplacians and the 8-neighbor Laplacian)
are convolved over both images and the squared difference of the
responses is penalized, normalized by pixel count by default.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor

EDGE_KERNELS = np.array([
    [[0., -1., 0.],
     [-1., 4., -1.],
     [0., -1., 0.]],
    [[-1., 0., -1.],
     [0., 4., 0.],
     [-1., 0., -1.]],
    [[1., 1., 1.],
     [1., -8., 1.],
     [1., 1., 1.]],
])

_KERNEL_BANK = Tensor(EDGE_KERNELS.reshape(3, 1, 3, 3))


def _as_image(t: Tensor) -> Tensor:
    """Accept [H,W] or [1,H,W]; return [1,1,H,W] for conv ops."""
    if t.data.ndim == 2:
        return T.reshape(t, (1, 1) + t.shape)
    if t.data.ndim == 3 and t.shape[0] == 1:
        return T.reshape(t, (1,) + t.shape)
    raise DimensionError(f"expected [H,W] or [1,H,W] image, got {t.shape}")


def l1_loss(sr: Tensor, hr: Tensor) -> Tensor:
    """Mean absolute error (subgradient 0 at ties)."""
    if sr.shape != hr.shape:
        raise DimensionError(f"shape mismatch {sr.shape} vs {hr.shape}")
    return T.mean(T.absolute(sr - hr))


def edge_responses(img: Tensor) -> Tensor:
    """[1,3,H-2,W-2] edge-kernel bank responses, valid windows only.

    Unpadded on purpose: with every window fully interior the zero-sum
    kernels make the responses exactly invariant to constant shifts,
    which zero padding would break along the border.
    """
    return T.conv2d(_as_image(img), _KERNEL_BANK)


def celoss(sr: Tensor, hr: Tensor, normalize: bool = True) -> Tensor:
    """Sum over kernels of ||E_i(sr) - E_i(hr)||^2, / pixel count if asked.

    Gradients flow to ``sr`` only; the reference image is treated as a
    constant.
    """
    if sr.shape != hr.shape:
        raise DimensionError(f"shape mismatch {sr.shape} vs {hr.shape}")
    with T.no_grad():
        e_hr = edge_responses(hr)
    d = edge_responses(sr) - Tensor(e_hr.data)
    total = T.sum_(d * d)
    if normalize:
        n_pixels = sr.data.size
        total = total / n_pixels
    return total


def total_loss(sr: Tensor, hr: Tensor, beta: float = 0.1,
               normalize_celoss: bool = True):
    """Returns (total, l1, edge): total = l1 + beta * edge.

    With beta == 0 the edge term is still computed (for logging) but is
    excluded from the total and from the gradient graph.
    """
    l1 = l1_loss(sr, hr)
    if beta == 0.0:
        with T.no_grad():
            edge = celoss(Tensor(sr.data), hr, normalize_celoss)
        return l1, l1, edge
    edge = celoss(sr, hr, normalize_celoss)
    return l1 + beta * edge, l1, edge
