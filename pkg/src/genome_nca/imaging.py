"""Image I/O: target loading, 8-bit RGB export and genome-channel heatmaps."""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from PIL import Image

# Heatmap stops for values -1, 0, +1: black, violet, yellow.  Luminance rises
# monotonically between stops; values outside [-1, 1] are clipped.
HEATMAP_STOPS = np.array([[0.0, 0.0, 0.0], [120.0, 40.0, 160.0], [250.0, 230.0, 30.0]])


class ImageError(ValueError):
    pass


def load_target(path: str | Path, size: int | tuple[int, int]) -> torch.Tensor:
    """Read a PNG/JPEG, bilinearly resize to ``size``, return (3, H, W) in [0, 1]."""
    h, w = (size, size) if isinstance(size, int) else size
    try:
        img = Image.open(path).convert("RGB")
    except (OSError, ValueError) as exc:
        raise ImageError(f"cannot read target image {path}: {exc}") from exc
    if img.size != (w, h):
        img = img.resize((w, h), Image.BILINEAR)
    return torch.from_numpy(np.asarray(img, dtype=np.float32) / 255.0).permute(2, 0, 1).contiguous()


def image_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def to_uint8(rgb: torch.Tensor) -> np.ndarray:
    """(3, H, W) float -> (H, W, 3) uint8: clip to [0, 1], round half up."""
    x = rgb.detach().cpu().to(torch.float64).clamp(0.0, 1.0).numpy()
    return np.floor(x * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def save_rgb(rgb: torch.Tensor, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(rgb), mode="RGB").save(path, format="PNG")
    return path


def heatmap_colors(values: torch.Tensor | np.ndarray) -> np.ndarray:
    """Map values in [-1, 1] to uint8 RGB via the three-stop ramp."""
    v = np.clip(np.asarray(values, dtype=np.float64), -1.0, 1.0)
    t = v + 1.0  # position along stops, in [0, 2]
    lo = np.minimum(np.floor(t), 1.0).astype(int)
    frac = (t - lo)[..., None]
    out = HEATMAP_STOPS[lo] * (1.0 - frac) + HEATMAP_STOPS[lo + 1] * frac
    return np.floor(out + 0.5).astype(np.uint8)


def save_heatmap(channel: torch.Tensor, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(heatmap_colors(channel.detach().cpu().numpy()), mode="RGB").save(path, format="PNG")
    return path

