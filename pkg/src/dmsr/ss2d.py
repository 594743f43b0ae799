"""Four-direction 2D selective scanning and the vision Mamba block.

A feature grid [C, H, W] is unrolled into four 1-D traversals (row-major
forward/reverse, column-major forward/reverse), each scanned by its own
selective state-space model, and the results are folded back onto the grid
and summed.  ``scan_merge(scan_expand(x)) == 4 * x`` since each direction
is a pure permutation.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import nn
from . import tensor as T
from .ssm import SelectiveScan
from .tensor import ConfigError, DimensionError, Tensor

DIRECTIONS = ("row_fwd", "row_rev", "col_fwd", "col_rev")


@lru_cache(maxsize=64)
def _orders(h: int, w: int):
    """Sequence-position -> flat-grid-index permutation for each direction."""
    ll = h * w
    row = np.arange(ll)
    col = (row % h) * w + row // h
    return (row, row[::-1].copy(), col, col[::-1].copy())


def scan_expand(x: Tensor) -> Tensor:
    """[C, H, W] -> [4, H*W, C]: the four directional token sequences."""
    if x.data.ndim != 3:
        raise DimensionError(f"scan_expand expects [C,H,W], got {x.shape}")
    c, h, w = x.data.shape
    perms = _orders(h, w)
    flat = x.data.reshape(c, -1)
    out = np.stack([flat[:, p].T for p in perms])

    def build(out_t):
        def bw(g):
            if x.requires_grad:
                dflat = np.zeros((c, h * w))
                for k, p in enumerate(perms):
                    dflat[:, p] += g[k].T
                x.accumulate_grad(dflat.reshape(c, h, w))
        return bw

    return T._finish("scan_expand", out, (x,), build)


def scan_merge(seqs: Tensor, h: int, w: int) -> Tensor:
    """[4, H*W, C] -> [C, H, W]: inverse-reorder each direction and sum."""
    if seqs.data.ndim != 3 or seqs.data.shape[0] != 4:
        raise DimensionError(f"scan_merge expects [4,L,C], got {seqs.shape}")
    if seqs.data.shape[1] != h * w:
        raise DimensionError(
            f"scan_merge length {seqs.data.shape[1]} != {h}*{w}")
    c = seqs.data.shape[2]
    perms = _orders(h, w)
    acc = np.zeros((c, h * w))
    for k, p in enumerate(perms):
        acc[:, p] += seqs.data[k].T
    out = acc.reshape(c, h, w)

    def build(out_t):
        def bw(g):
            if seqs.requires_grad:
                gflat = g.reshape(c, -1)
                seqs.accumulate_grad(np.stack([gflat[:, p].T for p in perms]))
        return bw

    return T._finish("scan_merge", out, (seqs,), build)


class SS2D(nn.Module):
    """Expand -> per-direction selective scan -> merge.

    Each direction gets independent scan parameters unless
    ``share_direction_params`` is set, in which case one parameter set is
    reused for all four traversals.
    """

    def __init__(self, d: int, n_state: int, rng: np.random.Generator,
                 share_direction_params: bool = False,
                 scheme: str = "fan_in_uniform"):
        if share_direction_params:
            shared = SelectiveScan(d, n_state, rng, scheme)
            self.scans = [shared]
        else:
            self.scans = [SelectiveScan(d, n_state, rng, scheme)
                          for _ in DIRECTIONS]

    def forward(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        seqs = scan_expand(x)
        ys = []
        for k in range(4):
            scan = self.scans[k % len(self.scans)]
            yk = scan(seqs[k])
            ys.append(T.reshape(yk, (1, h * w, c)))
        return scan_merge(T.concat(ys, axis=0), h, w)


class ChannelAttention(nn.Module):
    """Gate channels by a squeeze-excite factor in (0, 1).

    s = sigmoid(w2 . relu(w1 . mean_hw(x))); with zero weights every gate
    is exactly 0.5.
    """

    def __init__(self, c: int, reduction: int, rng: np.random.Generator,
                 scheme: str = "fan_in_uniform"):
        if reduction < 1:
            raise ConfigError("channel-attention reduction must be >= 1")
        hidden = max(1, c // reduction)
        self.w1 = nn.init_param((c, hidden), c, rng, scheme)
        self.w2 = nn.init_param((hidden, c), hidden, rng, scheme)

    def forward(self, x: Tensor) -> Tensor:
        c = x.shape[0]
        pooled = T.reshape(T.mean(x, axis=(1, 2)), (1, c))
        s = T.sigmoid(T.matmul(T.relu(T.matmul(pooled, self.w1)), self.w2))
        return x * T.reshape(s, (c, 1, 1))


class VisionMambaBlock(nn.Module):
    """Gated SS2D token mixer with channel attention and a residual.

    u = norm(x); path1 = silu(linear(u)); path2 = norm(ss2d(silu(dw3x3(
    linear(u))))); out = x + channel_attention(linear(path1 * path2)).
    With every branch weight zeroed the block is an exact identity.
    """

    def __init__(self, c: int, n_state: int, rng: np.random.Generator, *,
                 expand: int = 2, ca_reduction: int = 4,
                 share_direction_params: bool = False,
                 scheme: str = "fan_in_uniform"):
        d = expand * c
        self.norm = nn.LayerNorm(c)
        self.gate_proj = nn.Linear(c, d, rng, scheme=scheme)
        self.in_proj = nn.Linear(c, d, rng, scheme=scheme)
        self.dwconv = nn.Conv2d(d, d, 3, rng, padding=1, groups=d,
                                scheme=scheme)
        self.ss2d = SS2D(d, n_state, rng, share_direction_params, scheme)
        self.norm_post = nn.LayerNorm(d)
        self.out_proj = nn.Linear(d, c, rng, scheme=scheme)
        self.attn = ChannelAttention(c, ca_reduction, rng, scheme)

    def forward(self, x: Tensor) -> Tensor:
        c, h, w = x.shape
        tok = nn.tokens_from_grid(x)
        u = self.norm(tok)
        path1 = T.silu(self.gate_proj(u))
        v = nn.grid_from_tokens(self.in_proj(u), h, w)
        v = T.silu(self.dwconv(v))
        path2 = self.norm_post(nn.tokens_from_grid(self.ss2d(v)))
        out = self.out_proj(path1 * path2)
        return x + self.attn(nn.grid_from_tokens(out, h, w))
