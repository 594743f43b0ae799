"""Image I/O and the k-space degradation pipeline.

Training pairs are built on the fly: each ground-truth grayscale image is
center-cropped so every network stage divides evenly, then pushed through
the frequency-domain downsampler (transform, centered crop of the
spectrum, inverse transform, real part, 1/r^2 rescale, clamp) to produce
its low-resolution counterpart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import checkpoint
from .tensor import ConfigError, DimensionError, Tensor

IMAGE_EXTENSIONS = (".png", ".pgm")


# --------------------------------------------------------------------------
# image files
# --------------------------------------------------------------------------

def load_image(path) -> np.ndarray:
    """Read an 8/16-bit grayscale PNG or PGM as float64 in [0, 1].

    Values are divided by the format peak (the PGM maxval, 255 for 8-bit
    PNG, 65535 for 16-bit), so save_image round trips are scale-exact
    and images that do not span the full range stay dim rather than
    being silently stretched.  Color inputs are converted to grayscale.
    """
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        arr, peak = _read_pgm(path)
    else:
        img = Image.open(path)
        if img.mode not in ("L", "I", "I;16"):
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64)
        peak = 255.0 if img.mode == "L" else 65535.0
    return arr / peak


def save_image(path, img, bit_depth: int = 16) -> None:
    """Write [0,1] floats as 8- or 16-bit grayscale (PNG or PGM)."""
    if bit_depth not in (8, 16):
        raise ConfigError(f"bit_depth must be 8 or 16, got {bit_depth}")
    path = Path(path)
    img = np.asarray(img.data if isinstance(img, Tensor) else img,
                     dtype=np.float64)
    img = np.squeeze(img)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    peak = (1 << bit_depth) - 1
    q = np.rint(np.clip(img, 0.0, 1.0) * peak)
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, q, peak)
    elif bit_depth == 8:
        Image.fromarray(q.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(q.astype(np.uint16)).save(path)


def _read_pgm(path):
    """Binary PGM payload and its header maxval."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ConfigError(f"{path}: only binary (P5) PGM is supported")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64), float(maxval)


def _write_pgm(path, q: np.ndarray, peak: int) -> None:
    h, w = q.shape
    payload = q.astype(">u2" if peak > 255 else "u1").tobytes()
    Path(path).write_bytes(f"P5\n{w} {h}\n{peak}\n".encode() + payload)


# --------------------------------------------------------------------------
# frequency-domain resampling
# --------------------------------------------------------------------------

def _as_plane(img) -> np.ndarray:
    a = img.data if isinstance(img, Tensor) else np.asarray(img, float)
    a = np.squeeze(a)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {a.shape}")
    return a


def degrade_kspace(hr, r: int) -> np.ndarray:
    """Low-pass downsample by keeping the centered (H/r, W/r) spectrum.

    The inverse transform of the cropped spectrum is taken, the real part
    kept, intensities rescaled by 1/r^2 so brightness is preserved, and
    the result clamped to [0, 1].
    """
    a = _as_plane(hr)
    h, w = a.shape
    if h % r or w % r:
        raise DimensionError(
            f"extents {h}x{w} must be divisible by scale {r}")
    spec = np.fft.fftshift(np.fft.fft2(a))
    hh, ww = h // r, w // r
    top, left = h // 2 - hh // 2, w // 2 - ww // 2
    crop = spec[top:top + hh, left:left + ww]
    lr = np.real(np.fft.ifft2(np.fft.ifftshift(crop))) / (r * r)
    return np.clip(lr, 0.0, 1.0)


def upsample_kspace(lr, r: int) -> np.ndarray:
    """Zero-pad the centered spectrum out to (rH, rW): the inverse of
    ``degrade_kspace`` on its pass band and the natural
    interpolation-free baseline.

    For even extents the source grid's Nyquist row/column have no
    conjugate partner; their mirrors (which land outside the original
    block) are filled in explicitly so the padded spectrum is Hermitian
    and the inverse transform exactly real.  ``degrade_kspace`` then
    crops the original block untouched, making the round trip exact.
    """
    a = _as_plane(lr)
    h, w = a.shape
    spec = np.fft.fftshift(np.fft.fft2(a))
    hh, ww = h * r, w * r
    big = np.zeros((hh, ww), dtype=complex)
    cy, cx = hh // 2, ww // 2
    top, left = cy - h // 2, cx - w // 2
    big[top:top + h, left:left + w] = spec
    if h % 2 == 0:
        cols = np.arange(left, left + w)
        big[cy + h // 2, 2 * cx - cols] = np.conj(big[top, cols])
    if w % 2 == 0:
        rows = np.arange(top, top + h)
        big[2 * cy - rows, cx + w // 2] = np.conj(big[rows, left])
    if h % 2 == 0 and w % 2 == 0:
        big[cy + h // 2, cx + w // 2] = np.conj(big[top, left])
    return np.real(np.fft.ifft2(np.fft.ifftshift(big))) * (r * r)


def upsample_nearest(lr, r: int) -> np.ndarray:
    """Pixel-replication upsample: the identity (no-model) baseline."""
    return np.repeat(np.repeat(_as_plane(lr), r, axis=0), r, axis=1)


def center_crop_divisible(img, divisor: int) -> np.ndarray:
    """Center-crop each extent to its largest multiple of ``divisor``."""
    a = _as_plane(img)
    h, w = a.shape
    ch, cw = (h // divisor) * divisor, (w // divisor) * divisor
    if ch == 0 or cw == 0:
        raise DimensionError(
            f"image {h}x{w} smaller than required divisor {divisor}")
    top, left = (h - ch) // 2, (w - cw) // 2
    return a[top:top + ch, left:left + cw]


# --------------------------------------------------------------------------
# pair iteration and caching
# --------------------------------------------------------------------------

@dataclass
class ImagePair:
    ident: str
    hr: Tensor  # [1, H, W]
    lr: Tensor  # [1, H/r, W/r]
    source: str = ""
    crop: tuple = field(default_factory=tuple)


def list_images(data_dir) -> list:
    paths = [p for p in sorted(Path(data_dir).iterdir())
             if p.suffix.lower() in IMAGE_EXTENSIONS]
    if not paths:
        raise ConfigError(f"no {'/'.join(IMAGE_EXTENSIONS)} images "
                          f"in {data_dir}")
    return paths


def iterate_pairs(data_dir, scale: int, divisor: int) -> list:
    """Deterministic (lexicographic) HR/LR pair list for a directory.

    Each image is center-cropped so its extents divide ``divisor`` (which
    callers derive from patch size, level count and scale), then degraded
    in k-space by ``scale``.
    """
    pairs = []
    for path in list_images(data_dir):
        hr = center_crop_divisible(load_image(path), divisor)
        lr = degrade_kspace(hr, scale)
        pairs.append(ImagePair(
            ident=path.stem, hr=Tensor(hr[None]), lr=Tensor(lr[None]),
            source=str(path), crop=hr.shape))
    return pairs


def cache_pairs(pairs, out_dir, scale: int) -> None:
    """Persist pairs as tensor records plus a manifest JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for p in pairs:
        for tag, t in (("hr", p.hr), ("lr", p.lr)):
            with open(out / f"{p.ident}_{tag}.ten", "wb") as f:
                checkpoint.write_tensor(f, t.data)
        manifest.append({"id": p.ident, "hr_path": p.source, "r": scale,
                         "crop": list(p.crop)})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_cached_pairs(cache_dir) -> list:
    cache = Path(cache_dir)
    manifest = json.loads((cache / "manifest.json").read_text())
    pairs = []
    for entry in manifest:
        tensors = {}
        for tag in ("hr", "lr"):
            with open(cache / f"{entry['id']}_{tag}.ten", "rb") as f:
                tensors[tag] = Tensor(checkpoint.read_tensor(f))
        pairs.append(ImagePair(ident=entry["id"], hr=tensors["hr"],
                               lr=tensors["lr"], source=entry["hr_path"],
                               crop=tuple(entry["crop"])))
    return pairs
