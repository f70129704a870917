"""Synthetic degradations and the patch tiling/merging protocol.

Noise is specified in 8-bit sigma units (0-50) and divided by 255 to
act on [0, 1] floats.  Degradations for the mixed task apply in the
order blur -> noise -> compression.  Tiling splits images into
patch-size regions at a fixed stride, clamping the last anchor to the
image edge; merging averages overlapping pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError

PATCH = 63
STRIDE = 53


# -- noise -------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "uniform"       # uniform | linear | peaks
    sigma_max: float = 50.0     # std in 8-bit units
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("uniform", "linear", "peaks"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.sigma_max <= 50.0:
            raise ConfigError("sigma_max must be in [0, 50]")


@dataclass(frozen=True)
class DegradationSpec:
    """Mixed-task ranges, sampled uniformly per patch."""
    blur_sigma: float = 5.0       # blur std upper bound, pixels
    noise_sigma: float = 50.0     # noise std upper bound, 8-bit units
    quality: tuple = (10, 100)    # compression quality range

    def __post_init__(self):
        if self.blur_sigma < 0:
            raise ConfigError("blur_sigma must be >= 0")
        if not 0.0 <= self.noise_sigma <= 50.0:
            raise ConfigError("noise_sigma must be in [0, 50]")
        lo, hi = self.quality
        if not 10 <= lo <= hi <= 100:
            raise ConfigError("quality range must sit inside [10, 100]")


def noise_map_uniform(h: int, w: int, sigma: float) -> np.ndarray:
    if not 0.0 <= sigma <= 50.0:
        raise ConfigError("sigma must be in [0, 50]")
    return np.full((h, w), sigma, dtype=np.float32)


def noise_map_linear(h: int, w: int) -> np.ndarray:
    """Column ramp from 0 on the left edge to 50 on the right edge."""
    if w < 2:
        raise ConfigError("linear map needs width >= 2")
    ramp = 50.0 * np.arange(w, dtype=np.float32) / (w - 1)
    return np.broadcast_to(ramp, (h, w)).copy()


def noise_map_peaks(h: int, w: int, seed: int = 0, bumps: int = 4) -> np.ndarray:
    """Smooth random bump field, min-max rescaled to span [0, 50].
    A degenerate constant field maps to all zeros."""
    rng = np.random.default_rng(np.random.SeedSequence([0x706B73, seed]))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    field = np.zeros((h, w), dtype=np.float32)
    for _ in range(bumps):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sy = rng.uniform(0.1, 0.35) * h
        sx = rng.uniform(0.1, 0.35) * w
        amp = rng.uniform(0.5, 1.0)
        field += amp * np.exp(-(((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2) / 2.0)
    lo, hi = float(field.min()), float(field.max())
    if hi - lo < 1e-12:
        return np.zeros((h, w), dtype=np.float32)
    return (50.0 * (field - lo) / (hi - lo)).astype(np.float32)


def apply_noise(image: np.ndarray, sigma_map: np.ndarray, seed: int = 0) -> np.ndarray:
    """Add zero-mean Gaussian noise with per-pixel std sigma_map/255,
    drawn independently per channel; result clamped to [0, 1]."""
    c, h, w = image.shape
    if sigma_map.shape != (h, w):
        raise ConfigError(f"apply_noise: map {sigma_map.shape} vs image spatial ({h}, {w})")
    rng = np.random.default_rng(np.random.SeedSequence([0x6E6F6973, seed]))
    noise = rng.standard_normal((c, h, w), dtype=np.float32) * (sigma_map / 255.0)
    return np.clip(image + noise, 0.0, 1.0)


# -- blur --------------------------------------------------------------------


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return (k / k.sum()).astype(np.float32)


def separable_filter_valid(plane: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Valid-mode correlation of a 2-D plane with a symmetric 1-D kernel
    applied along both axes."""
    rows = np.lib.stride_tricks.sliding_window_view(plane, len(k), axis=1) @ k
    return np.lib.stride_tricks.sliding_window_view(rows, len(k), axis=0) @ k


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; sigma 0 is identity."""
    if sigma < 0:
        raise ConfigError("blur sigma must be >= 0")
    if sigma == 0.0:
        return image.copy()
    k = _gauss_kernel(sigma)
    r = len(k) // 2
    out = np.empty_like(image)
    for ci in range(image.shape[0]):
        padded = np.pad(image[ci], r, mode="reflect")
        out[ci] = separable_filter_valid(padded, k)
    return out


# -- compression -------------------------------------------------------------

# standard luminance quantization table
_QTABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

# orthonormal 8-point DCT-II matrix: block transform is D @ X @ D.T
_DCT8 = np.zeros((8, 8))
_DCT8[0, :] = 1.0 / np.sqrt(8.0)
for _u in range(1, 8):
    _DCT8[_u, :] = np.sqrt(0.25) * np.cos((2 * np.arange(8) + 1) * _u * np.pi / 16.0)


def _quant_table(quality: float) -> np.ndarray:
    scale = 50.0 / quality if quality < 50 else 2.0 - quality / 50.0
    return np.clip(np.round(_QTABLE * scale), 1.0, 255.0)


def dct_compress(image: np.ndarray, quality: float) -> np.ndarray:
    """Block-transform quantization standing in for codec compression:
    per 8x8 block, forward DCT, divide by the quality-scaled table,
    round, dequantize, inverse DCT.  Channels independent; edges padded
    by reflection to a block multiple."""
    if not 10 <= quality <= 100:
        raise ConfigError("quality must be in [10, 100]")
    table = _quant_table(quality)
    c, h, w = image.shape
    hp = (h + 7) // 8 * 8
    wp = (w + 7) // 8 * 8
    out = np.empty_like(image)
    for ci in range(c):
        plane = image[ci].astype(np.float64) * 255.0 - 128.0
        if hp != h or wp != w:
            plane = np.pad(plane, ((0, hp - h), (0, wp - w)), mode="reflect")
        blocks = plane.reshape(hp // 8, 8, wp // 8, 8).transpose(0, 2, 1, 3)
        coef = _DCT8 @ blocks @ _DCT8.T
        coef = np.round(coef / table) * table
        rec = _DCT8.T @ coef @ _DCT8
        plane = rec.transpose(0, 2, 1, 3).reshape(hp, wp)[:h, :w]
        out[ci] = ((plane + 128.0) / 255.0).astype(np.float32)
    return np.clip(out, 0.0, 1.0)


# -- tiling ------------------------------------------------------------------


@dataclass(frozen=True)
class PatchGrid:
    patch: int
    rows: tuple          # row anchors
    cols: tuple          # column anchors
    padded_shape: tuple  # (C, H, W) after any reflect padding
    orig_shape: tuple    # caller's (C, H, W)


def _anchors(dim: int, patch: int, stride: int) -> tuple:
    xs = list(range(0, dim - patch + 1, stride))
    if xs[-1] != dim - patch:
        xs.append(dim - patch)
    return tuple(xs)


def extract_patches(image: np.ndarray, patch: int = PATCH,
                    stride: Optional[int] = None) -> tuple[PatchGrid, list[np.ndarray]]:
    """Split a (C, H, W) image into patch x patch regions at the given
    stride; the final anchor per axis is clamped to the image edge so
    every pixel is covered.  Images smaller than the patch are reflect-
    padded first (merge_patches crops back).

    The default stride keeps the nominal 10-pixel overlap (63/53),
    scaled to whatever patch size is in use.
    """
    if stride is None:
        stride = max(1, patch - (PATCH - STRIDE))
    if stride > patch:
        raise ConfigError(f"stride {stride} > patch {patch} would leave uncovered pixels")
    orig_shape = image.shape
    c, h, w = image.shape
    ph = max(0, patch - h)
    pw = max(0, patch - w)
    if ph or pw:
        image = np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="reflect")
        _, h, w = image.shape
    grid = PatchGrid(patch=patch, rows=_anchors(h, patch, stride),
                     cols=_anchors(w, patch, stride),
                     padded_shape=image.shape, orig_shape=orig_shape)
    patches = [image[:, r : r + patch, c0 : c0 + patch].copy()
               for r in grid.rows for c0 in grid.cols]
    return grid, patches


def merge_patches(patches: Sequence[np.ndarray], grid: PatchGrid,
                  out_shape: Optional[tuple] = None) -> np.ndarray:
    """Reassemble patches onto the grid, averaging overlapping pixels."""
    if len(patches) != len(grid.rows) * len(grid.cols):
        raise ConfigError(f"merge_patches: {len(patches)} patches for a "
                          f"{len(grid.rows)}x{len(grid.cols)} grid")
    c, h, w = grid.padded_shape
    acc = np.zeros((c, h, w), dtype=np.float32)
    cover = np.zeros((h, w), dtype=np.float32)
    k = 0
    for r in grid.rows:
        for c0 in grid.cols:
            acc[:, r : r + grid.patch, c0 : c0 + grid.patch] += patches[k]
            cover[r : r + grid.patch, c0 : c0 + grid.patch] += 1.0
            k += 1
    acc /= cover
    oc, oh, ow = out_shape if out_shape is not None else grid.orig_shape
    return acc[:, :oh, :ow]


# -- clean sources and dataset streams ----------------------------------------


def generate_clean_image(h: int, w: int, rng: np.random.Generator,
                         channels: int = 3) -> np.ndarray:
    """Procedural stand-in for a natural image: smooth color gradients,
    a few soft-edged shapes, and patches of sinusoidal texture."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    yn, xn = yy / max(h - 1, 1), xx / max(w - 1, 1)
    img = np.empty((channels, h, w), dtype=np.float32)
    for ci in range(channels):
        corners = rng.uniform(0.1, 0.9, size=4)
        img[ci] = (corners[0] * (1 - yn) * (1 - xn) + corners[1] * (1 - yn) * xn
                   + corners[2] * yn * (1 - xn) + corners[3] * yn * xn)
    for _ in range(rng.integers(3, 8)):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        mask = np.clip(1.5 - d, 0.0, 1.0)[None]  # feathered edge
        color = rng.uniform(0.05, 0.95, size=(channels, 1, 1)).astype(np.float32)
        img = img * (1 - mask) + color * mask
    if rng.random() < 0.8:
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.05, 0.45)
        amp = rng.uniform(0.02, 0.12)
        wave = amp * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy))
        img += wave[None].astype(np.float32)
    return np.clip(img, 0.0, 1.0)


@dataclass
class Sample:
    degraded: np.ndarray
    clean: np.ndarray
    meta: dict


class DatasetStream:
    """Deterministic stream of (degraded, clean, metadata) patch pairs.

    Indexable: sample(i) derives its randomness from (seed, i) alone,
    so any iteration order, resumption point or parallel split sees
    identical data.  ``spec`` is a NoiseSpec (denoising) or a
    DegradationSpec (mixed blur + noise + compression).
    """

    def __init__(self, sources: Optional[Sequence[np.ndarray]], spec, count: int,
                 seed: int = 0, patch: int = PATCH, channels: int = 3,
                 source_size: int = 160):
        if sources is not None and len(sources) == 0:
            raise ConfigError("DatasetStream: empty source set")
        if not isinstance(spec, (NoiseSpec, DegradationSpec)):
            raise ConfigError(f"DatasetStream: bad spec {type(spec).__name__}")
        self.sources = list(sources) if sources is not None else None
        self.spec = spec
        self.count = count
        self.seed = seed
        self.patch = patch
        self.channels = channels
        self.source_size = max(source_size, patch)

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[Sample]:
        return (self.sample(i) for i in range(self.count))

    def _clean_source(self, rng: np.random.Generator) -> np.ndarray:
        if self.sources is not None:
            return self.sources[int(rng.integers(len(self.sources)))]
        return generate_clean_image(self.source_size, self.source_size, rng, self.channels)

    def sample(self, i: int) -> Sample:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, i]))
        src = self._clean_source(rng)
        _, h, w = src.shape
        r = int(rng.integers(0, h - self.patch + 1))
        c = int(rng.integers(0, w - self.patch + 1))
        clean = src[:, r : r + self.patch, c : c + self.patch].copy()
        meta = {"index": i, "row": r, "col": c}
        noise_seed = int(rng.integers(2**31))

        if isinstance(self.spec, NoiseSpec):
            if self.spec.kind == "uniform":
                sigma = float(rng.uniform(0.0, self.spec.sigma_max))
                sub = noise_map_uniform(self.patch, self.patch, sigma)
            elif self.spec.kind == "linear":
                sub = noise_map_linear(h, w)[r : r + self.patch, c : c + self.patch]
            else:
                sub = noise_map_peaks(h, w, seed=noise_seed)[r : r + self.patch, c : c + self.patch]
            degraded = apply_noise(clean, sub, seed=noise_seed)
            meta["sigma"] = float(sub.mean())
        else:
            blur = float(rng.uniform(0.0, self.spec.blur_sigma))
            sigma = float(rng.uniform(0.0, self.spec.noise_sigma))
            quality = float(rng.uniform(self.spec.quality[0], self.spec.quality[1]))
            degraded = gaussian_blur(clean, blur)
            degraded = apply_noise(degraded, noise_map_uniform(self.patch, self.patch, sigma),
                                   seed=noise_seed)
            degraded = dct_compress(degraded, quality)
            meta.update({"sigma": sigma, "blur": blur, "quality": quality})
        return Sample(degraded=degraded, clean=clean, meta=meta)


def make_dataset(sources, spec, count: int, seed: int = 0, **kw) -> DatasetStream:
    """Build the deterministic patch-pair stream used for training and
    synthesis; ``sources=None`` generates procedural clean images."""
    return DatasetStream(sources, spec, count, seed=seed, **kw)


class PairDirectory:
    """Random-access view of a synthesized dataset directory
    (``NNNNNN_deg.f32`` / ``NNNNNN_cln.f32`` pairs); indices wrap."""

    def __init__(self, directory):
        from pathlib import Path

        self.dir = Path(directory)
        self.stems = sorted(p.name[:-8] for p in self.dir.glob("*_deg.f32"))
        if not self.stems:
            raise ConfigError(f"{directory}: no *_deg.f32 pair files found")

    def __len__(self):
        return len(self.stems)

    def sample(self, i: int) -> Sample:
        from .imageio import read_f32

        stem = self.stems[i % len(self.stems)]
        return Sample(
            degraded=read_f32(self.dir / f"{stem}_deg.f32"),
            clean=read_f32(self.dir / f"{stem}_cln.f32"),
            meta={"index": i, "stem": stem},
        )


def make_eval_pairs(count: int, size: int, spec, seed: int = 0, channels: int = 3,
                    sigma_eval: Optional[float] = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Full-image (degraded, clean) pairs for held-out evaluation.

    For uniform noise, ``sigma_eval`` pins the std (otherwise drawn per
    image); linear/peaks maps span each whole image.
    """
    pairs = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E7, i]))
        clean = generate_clean_image(size, size, rng, channels)
        noise_seed = int(rng.integers(2**31))
        if isinstance(spec, NoiseSpec):
            if spec.kind == "uniform":
                sigma = sigma_eval if sigma_eval is not None else float(rng.uniform(0, spec.sigma_max))
                m = noise_map_uniform(size, size, sigma)
            elif spec.kind == "linear":
                m = noise_map_linear(size, size)
            else:
                m = noise_map_peaks(size, size, seed=noise_seed)
            degraded = apply_noise(clean, m, seed=noise_seed)
        else:
            degraded = gaussian_blur(clean, float(rng.uniform(0, spec.blur_sigma)))
            sigma = float(rng.uniform(0, spec.noise_sigma))
            degraded = apply_noise(degraded, noise_map_uniform(size, size, sigma), seed=noise_seed)
            degraded = dct_compress(degraded, float(rng.uniform(spec.quality[0], spec.quality[1])))
        pairs.append((degraded, clean))
    return pairs
