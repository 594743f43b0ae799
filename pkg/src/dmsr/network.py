"""Encoder/decoder super-resolution network assembly.

The pipeline: learned pixel-shuffle upsampling of the low-resolution
input, patch embedding, three encoder stages (deformable branch + vision
Mamba stack, then patch merging), a multi-view atrous context bottleneck,
three decoder stages (patch expanding, skip fusion, vision Mamba stack),
and a final projection back to the pixel grid with a global residual from
the upsampled input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from . import tensor as T
from .deform import ModulatedDeformBlock
from .ss2d import VisionMambaBlock
from .tensor import ConfigError, DimensionError, Tensor

N_LEVELS = 4
_MERGES = N_LEVELS - 1


@dataclass
class ModelConfig:
    """Architecture knobs; defaults are the full-scale preset."""

    scale: int = 2
    patch_size: int = 2
    channels: tuple = (96, 128, 384, 768)
    blocks_per_level: int = 4
    d_state: int = 16
    expand: int = 2
    ca_reduction: int = 4
    mvc_dilations: tuple = (1, 2, 4)
    use_deform: bool = True
    use_mvc: bool = True
    use_celoss: bool = True
    celoss_weight: float = 0.1
    normalize_celoss: bool = True
    global_residual: bool = True
    max_offset: float = 8.0
    share_direction_params: bool = False
    init_scheme: str = "fan_in_uniform"

    def validate(self):
        if self.scale not in (2, 4):
            raise ConfigError(f"scale must be 2 or 4, got {self.scale}")
        if len(self.channels) != N_LEVELS:
            raise ConfigError(
                f"channels must list {N_LEVELS} levels, got {self.channels}")
        if self.patch_size < 1:
            raise ConfigError("patch_size must be >= 1")
        if self.use_mvc and self.channels[-1] % len(self.mvc_dilations):
            raise ConfigError(
                f"bottleneck channels {self.channels[-1]} must be divisible "
                f"by the {len(self.mvc_dilations)} dilation branches")
        if self.blocks_per_level < 1 or self.d_state < 1 or self.expand < 1:
            raise ConfigError("blocks_per_level, d_state and expand must "
                              "be positive")
        if self.init_scheme not in nn.INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {nn.INIT_SCHEMES}")

    @property
    def lr_divisor(self) -> int:
        """Extent divisor the low-resolution input must satisfy."""
        grid_div = self.patch_size * 2 ** _MERGES
        return int(np.lcm(grid_div, self.scale) // self.scale)

    @property
    def hr_divisor(self) -> int:
        """Extent divisor ground-truth images are cropped to."""
        return int(np.lcm(self.patch_size * 2 ** _MERGES, self.scale))


PRESETS = {
    "full": ModelConfig(),
    "desk": ModelConfig(channels=(8, 12, 16, 24), blocks_per_level=1,
                        d_state=4),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


# --------------------------------------------------------------------------
# assembly pieces
# --------------------------------------------------------------------------

def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """[r*r*C, H, W] -> [C, r*H, r*W], channel blocks become subpixels."""
    c2, h, w = x.shape
    if c2 % (r * r):
        raise DimensionError(
            f"pixel_shuffle needs channels divisible by {r * r}, got {c2}")
    c = c2 // (r * r)
    x = T.reshape(x, (c, r, r, h, w))
    x = T.transpose(x, (0, 3, 1, 4, 2))
    return T.reshape(x, (c, h * r, w * r))


def space_to_depth(x: Tensor, ps: int) -> Tensor:
    """[C, H, W] -> [C*ps*ps, H/ps, W/ps]; exact inverse of pixel_shuffle."""
    c, h, w = x.shape
    if h % ps or w % ps:
        raise DimensionError(
            f"extents {h}x{w} not divisible by patch size {ps}")
    x = T.reshape(x, (c, h // ps, ps, w // ps, ps))
    x = T.transpose(x, (0, 2, 4, 1, 3))
    return T.reshape(x, (c * ps * ps, h // ps, w // ps))


class PixelShuffleUpsample(nn.Module):
    """Channel-preserving upsampler: conv to r*r*C, then pixel shuffle.

    The conv starts as the identity embedding (a 1 at the center tap of
    every subpixel block, zero bias), so before any training the module
    is exactly nearest-neighbor upsampling; learning then refines the
    interpolation instead of having to rediscover it.
    """

    def __init__(self, c: int, r: int, rng, scheme="fan_in_uniform"):
        self.conv = nn.Conv2d(c, c * r * r, 3, rng, padding=1, scheme=scheme)
        w = np.zeros_like(self.conv.w.data)
        for ch in range(c):
            w[ch * r * r:(ch + 1) * r * r, ch, 1, 1] = 1.0
        self.conv.w.data = w
        self.conv.b.data = np.zeros_like(self.conv.b.data)
        self.r = r

    def forward(self, x: Tensor) -> Tensor:
        return pixel_shuffle(self.conv(x), self.r)


class PatchEmbed(nn.Module):
    """Non-overlapping ps x ps patches projected linearly to c_out."""

    def __init__(self, c_in: int, ps: int, c_out: int, rng,
                 scheme="fan_in_uniform"):
        self.proj = nn.Linear(c_in * ps * ps, c_out, rng, scheme=scheme)
        self.ps = ps

    def forward(self, x: Tensor) -> Tensor:
        d = space_to_depth(x, self.ps)
        _, gh, gw = d.shape
        return nn.grid_from_tokens(self.proj(nn.tokens_from_grid(d)), gh, gw)


class PatchMerging(nn.Module):
    """2x2 neighborhood concat (4C) -> layer norm -> linear to c_next."""

    def __init__(self, c: int, c_next: int, rng, scheme="fan_in_uniform"):
        self.norm = nn.LayerNorm(4 * c)
        self.reduce = nn.Linear(4 * c, c_next, rng, scheme=scheme)

    def forward(self, x: Tensor) -> Tensor:
        d = space_to_depth(x, 2)
        _, gh, gw = d.shape
        tok = self.reduce(self.norm(nn.tokens_from_grid(d)))
        return nn.grid_from_tokens(tok, gh, gw)


class PatchExpanding(nn.Module):
    """Linear to 4*c_out then pixel shuffle: halves channels, doubles grid."""

    def __init__(self, c: int, c_out: int, rng, scheme="fan_in_uniform"):
        self.proj = nn.Linear(c, 4 * c_out, rng, scheme=scheme)

    def forward(self, x: Tensor) -> Tensor:
        _, gh, gw = x.shape
        tok = self.proj(nn.tokens_from_grid(x))
        return pixel_shuffle(nn.grid_from_tokens(tok, gh, gw), 2)


class MultiViewContext(nn.Module):
    """Parallel dilated 3x3 views concatenated, fused 1x1, plus residual.

    Each dilation branch maps C -> C/len(dilations) with padding equal to
    its dilation so extents are preserved; zero weights make the module an
    exact identity.
    """

    def __init__(self, c: int, dilations, rng, scheme="fan_in_uniform"):
        if c % len(dilations):
            raise ConfigError(
                f"channels {c} not divisible by {len(dilations)} branches")
        cb = c // len(dilations)
        self.branches = [
            nn.Conv2d(c, cb, 3, rng, padding=d, dilation=d, scheme=scheme)
            for d in dilations]
        self.fuse = nn.Conv2d(c, c, 1, rng, scheme=scheme)

    def forward(self, x: Tensor) -> Tensor:
        views = T.concat([b(x) for b in self.branches], axis=0)
        return x + self.fuse(views)


class DeformMambaModule(nn.Module):
    """Parallel deformable branch and vision-Mamba stack, summed."""

    def __init__(self, c: int, cfg: ModelConfig, rng):
        self.deform = (ModulatedDeformBlock(
            c, rng, max_offset=cfg.max_offset, scheme=cfg.init_scheme)
            if cfg.use_deform else None)
        self.blocks = [
            VisionMambaBlock(
                c, cfg.d_state, rng, expand=cfg.expand,
                ca_reduction=cfg.ca_reduction,
                share_direction_params=cfg.share_direction_params,
                scheme=cfg.init_scheme)
            for _ in range(cfg.blocks_per_level)]

    def forward(self, x: Tensor) -> Tensor:
        y = x
        for blk in self.blocks:
            y = blk(y)
        if self.deform is not None:
            y = y + self.deform(x)
        return y


class FinalProjection(nn.Module):
    """Linear to ps*ps subpixels, shuffled back to the full pixel grid.

    The projection starts at half the usual fan-in scale: with a global
    residual the output then begins closer to the upsampled input, which
    conditions early training while keeping every gradient nonzero.
    """

    HEAD_INIT_SCALE = 0.5

    def __init__(self, c: int, ps: int, rng, scheme="fan_in_uniform"):
        self.proj = nn.Linear(c, ps * ps, rng, scheme=scheme)
        self.proj.w.data = self.proj.w.data * self.HEAD_INIT_SCALE
        self.proj.b.data = self.proj.b.data * self.HEAD_INIT_SCALE
        self.ps = ps

    def forward(self, x: Tensor) -> Tensor:
        _, gh, gw = x.shape
        tok = self.proj(nn.tokens_from_grid(x))
        return pixel_shuffle(nn.grid_from_tokens(tok, gh, gw), self.ps)


class DeformMambaNet(nn.Module):
    """The full super-resolution network."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        ch, ps, sch = cfg.channels, cfg.patch_size, cfg.init_scheme
        self.upsample = PixelShuffleUpsample(1, cfg.scale, rng, sch)
        self.embed = PatchEmbed(1, ps, ch[0], rng, sch)
        self.encoders = [DeformMambaModule(ch[i], cfg, rng)
                         for i in range(_MERGES)]
        self.merges = [PatchMerging(ch[i], ch[i + 1], rng, sch)
                       for i in range(_MERGES)]
        self.bottleneck = (MultiViewContext(ch[-1], cfg.mvc_dilations, rng,
                                            sch) if cfg.use_mvc else None)
        self.expands = [PatchExpanding(ch[i + 1], ch[i], rng, sch)
                        for i in reversed(range(_MERGES))]
        self.fusions = [nn.Linear(2 * ch[i], ch[i], rng, scheme=sch)
                        for i in reversed(range(_MERGES))]
        self.decoders = [
            [VisionMambaBlock(ch[i], cfg.d_state, rng, expand=cfg.expand,
                              ca_reduction=cfg.ca_reduction,
                              share_direction_params=cfg.share_direction_params,
                              scheme=sch)
             for _ in range(cfg.blocks_per_level)]
            for i in reversed(range(_MERGES))]
        self.head = FinalProjection(ch[0], ps, rng, sch)

    def _check_extents(self, h: int, w: int):
        div = self.cfg.lr_divisor
        if h % div or w % div:
            raise DimensionError(
                f"low-resolution extents {h}x{w} must be divisible by "
                f"{div} (patch_size*{2 ** _MERGES} on the embedded grid)")

    def upsampled_input(self, lr: Tensor) -> Tensor:
        """The learned-upsampling path that feeds the global residual."""
        return self.upsample(lr)

    def forward(self, lr: Tensor) -> Tensor:
        if lr.data.ndim != 3 or lr.shape[0] != 1:
            raise DimensionError(f"expected [1,H,W] input, got {lr.shape}")
        self._check_extents(lr.shape[1], lr.shape[2])
        x_up = self.upsample(lr)
        t = self.embed(x_up)
        skips = []
        for enc, merge in zip(self.encoders, self.merges):
            t = enc(t)
            skips.append(t)
            t = merge(t)
        if self.bottleneck is not None:
            t = self.bottleneck(t)
        for expand, fuse, blocks, skip in zip(self.expands, self.fusions,
                                              self.decoders,
                                              reversed(skips)):
            t = expand(t)
            _, gh, gw = t.shape
            tok = T.concat([nn.tokens_from_grid(t),
                            nn.tokens_from_grid(skip)], axis=1)
            t = nn.grid_from_tokens(fuse(tok), gh, gw)
            for blk in blocks:
                t = blk(t)
        sr = self.head(t)
        if self.cfg.global_residual:
            sr = sr + x_up
        return sr
