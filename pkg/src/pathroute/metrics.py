"""Quality metrics and per-region compute accounting.

PSNR runs on [0, 1] floats with peak 1.0; a zero-MSE pair is capped at
99 dB so reports stay finite.  SSIM uses the usual 11x11 Gaussian
window (sigma 1.5) with C1=0.01^2, C2=0.03^2, computed on the luma
channel for color images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, no_grad
from .distortion import extract_patches, merge_patches, separable_filter_valid
from .errors import ConfigError
from .model import count_flops, max_route_flops, min_route_flops
from .reward import mean_sq

PSNR_CAP = 99.0

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/mse) in dB, capped at 99."""
    if a.shape != b.shape:
        raise ConfigError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    m = mean_sq(a, b)
    if m == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / m))


def _to_luma(img: np.ndarray) -> np.ndarray:
    if img.shape[0] == 1:
        return img[0].astype(np.float64)
    return np.tensordot(_LUMA, img.astype(np.float64), axes=(0, 0))


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local structural similarity over valid window positions."""
    if a.shape != b.shape:
        raise ConfigError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    x, y = _to_luma(a), _to_luma(b)
    if min(x.shape) < 11:
        raise ConfigError(f"ssim: image {x.shape} smaller than the 11x11 window")
    w = _ssim_window()
    c1, c2 = 0.01**2, 0.03**2
    mu_x = separable_filter_valid(x, w)
    mu_y = separable_filter_valid(y, w)
    xx = separable_filter_valid(x * x, w) - mu_x * mu_x
    yy = separable_filter_valid(y * y, w) - mu_y * mu_y
    xy = separable_filter_valid(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float((num / den).mean())


@dataclass
class EvalReport:
    """Aggregate evaluation over a test set: quality, per-region compute
    and the routing histogram (blocks x paths counts)."""
    psnr: float
    ssim: float
    mean_flops: float
    route_histogram: np.ndarray
    n_regions: int
    per_image: list = field(default_factory=list)  # (name, psnr, ssim, mean_flops, regions)

    def to_csv(self, path):
        lines = ["name,psnr,ssim,mean_flops,regions"]
        for name, p, s, f, n in self.per_image:
            lines.append(f"{name},{p:.4f},{s:.6f},{f:.1f},{n}")
        lines.append(f"summary,{self.psnr:.4f},{self.ssim:.6f},{self.mean_flops:.1f},{self.n_regions}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_text(self) -> str:
        return json.dumps(
            {
                "psnr": round(self.psnr, 4),
                "ssim": round(self.ssim, 6),
                "mean_flops": round(self.mean_flops, 1),
                "n_regions": self.n_regions,
                "route_histogram": self.route_histogram.tolist(),
            },
            indent=2,
        )


def evaluate(model, pairs, names=None) -> EvalReport:
    """Tiled argmax-mode evaluation of (distorted, clean) image pairs.

    Each image is split into nominal regions, every region is restored
    along its own argmax route, overlaps are averaged back together,
    and per-region FLOPs are taken from the compute accountant.
    """
    cfg = model.cfg
    hist = np.zeros((cfg.blocks, cfg.paths), dtype=np.int64)
    per_image = []
    flops_sum, regions_total = 0, 0
    psnrs, ssims = [], []
    for idx, (distorted, clean) in enumerate(pairs):
        name = names[idx] if names else f"image{idx:03d}"
        grid, patches = extract_patches(distorted, cfg.patch)
        outs = []
        img_flops = 0
        with no_grad():
            for patch in patches:
                restored, trace = model.forward(Tensor(patch[None]), mode="test")
                outs.append(np.clip(restored.data[0], 0.0, 1.0))
                img_flops += count_flops(trace, cfg)
                for i, a in enumerate(trace.actions):
                    hist[i, a - 1] += 1
        merged = merge_patches(outs, grid, distorted.shape)
        p = psnr(merged, clean)
        s = ssim(merged, clean)
        psnrs.append(p)
        ssims.append(s)
        flops_sum += img_flops
        regions_total += len(patches)
        per_image.append((name, p, s, img_flops / len(patches), len(patches)))
    return EvalReport(
        psnr=float(np.mean(psnrs)),
        ssim=float(np.mean(ssims)),
        mean_flops=flops_sum / regions_total,
        route_histogram=hist,
        n_regions=regions_total,
        per_image=per_image,
    )


def flops_bounds(cfg) -> tuple[int, int]:
    """(all-bypass, all-residual) per-region FLOPs envelope."""
    return min_route_flops(cfg), max_route_flops(cfg)
