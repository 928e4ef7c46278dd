"""Frozen VGG16 feature extractor used as the texture discriminator.

Weights come from an external file (``torch.save`` of a state dict).  Two key
schemes are understood:

* ``conv{block}_{index}.weight`` / ``.bias``: the manifest below, e.g.
  ``conv1_1.weight`` of shape (64, 3, 3, 3);
* torchvision's ``features.{i}.weight`` naming, so the stock
  ``vgg16-397923af.pth`` file loads as-is (classifier keys are ignored).

Only conv1_1 .. conv5_1 are needed; conv5_2 and conv5_3 are accepted and
ignored.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

# (name, in_channels, out_channels); a max-pool follows the last conv of each block.
VGG16_CONVS = (
    ("conv1_1", 3, 64), ("conv1_2", 64, 64),
    ("conv2_1", 64, 128), ("conv2_2", 128, 128),
    ("conv3_1", 128, 256), ("conv3_2", 256, 256), ("conv3_3", 256, 256),
    ("conv4_1", 256, 512), ("conv4_2", 512, 512), ("conv4_3", 512, 512),
    ("conv5_1", 512, 512), ("conv5_2", 512, 512), ("conv5_3", 512, 512),
)
# torchvision vgg16().features module indices of the 13 convolutions
TORCHVISION_INDEX = dict(zip((c[0] for c in VGG16_CONVS), (0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28)))
TAPS = ("conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1")
REQUIRED = tuple(c[0] for c in VGG16_CONVS[: VGG16_CONVS.index(("conv5_1", 512, 512)) + 1])
TAP_CHANNELS = (64, 128, 256, 512, 512)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
MIN_SIZE = 16


class DiscriminatorWeightsError(RuntimeError):
    pass


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _normalise_keys(state: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    out = {}
    by_index = {v: k for k, v in TORCHVISION_INDEX.items()}
    for key, value in state.items():
        parts = key.split(".")
        if parts[0] == "features" and len(parts) == 3 and parts[1].isdigit():
            idx = int(parts[1])
            if idx in by_index:
                out[f"{by_index[idx]}.{parts[2]}"] = value
        elif len(parts) == 2 and parts[0] in TORCHVISION_INDEX:
            out[key] = value
    return out


class VGGFeatures(nn.Module):
    """VGG16 convolutions up to conv5_1, returning the five ReLU'd tap outputs."""

    def __init__(self):
        super().__init__()
        self.convs = nn.ModuleDict(
            {name: nn.Conv2d(cin, cout, 3, padding=1) for name, cin, cout in VGG16_CONVS if name in REQUIRED}
        )
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()
        self.sha256: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> VGGFeatures:
        path = Path(path)
        if not path.is_file():
            raise DiscriminatorWeightsError(f"discriminator weights file not found: {path}")
        try:
            raw = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:  # torch raises a zoo of types for corrupt files
            raise DiscriminatorWeightsError(f"cannot read discriminator weights {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise DiscriminatorWeightsError(f"{path} does not hold a state dict")
        model = cls()
        model.load_conv_weights(_normalise_keys(raw), source=str(path))
        model.sha256 = file_sha256(path)
        return model

    @torch.no_grad()
    def load_conv_weights(self, state: dict[str, torch.Tensor], source: str = "state dict") -> None:
        for name, conv in self.convs.items():
            for part in ("weight", "bias"):
                key = f"{name}.{part}"
                if key not in state:
                    raise DiscriminatorWeightsError(f"{source} is missing {key}")
                target = getattr(conv, part)
                if tuple(state[key].shape) != tuple(target.shape):
                    raise DiscriminatorWeightsError(
                        f"{source}: {key} has shape {tuple(state[key].shape)}, expected {tuple(target.shape)}"
                    )
                target.copy_(state[key])

    def forward(self, rgb: torch.Tensor) -> list[torch.Tensor]:
        """``rgb``: (B, 3, H, W) in [0, 1]. Returns 5 maps (B, c_l, H_l, W_l)."""
        if rgb.dim() != 4 or rgb.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) image batch, got {tuple(rgb.shape)}")
        if min(rgb.shape[-2:]) < MIN_SIZE:
            raise ValueError(f"image is {rgb.shape[-2]}x{rgb.shape[-1]}; discriminator needs at least {MIN_SIZE}x{MIN_SIZE}")
        x = (rgb - self.mean.to(rgb.dtype)) / self.std.to(rgb.dtype)
        taps = []
        for name, _, _ in VGG16_CONVS:
            if name not in self.convs:
                break
            if name.endswith("_1") and name != "conv1_1":
                x = F.max_pool2d(x, 2)
            x = F.relu(self.convs[name](x))
            if name in TAPS:
                taps.append(x)
        return taps


def random_vgg_state(seed: int = 0, include_all: bool = True) -> dict[str, torch.Tensor]:
    """A seeded, randomly initialised weight set in the manifest naming.

    Useful for smoke runs and tests when no pretrained file is at hand; it
    uses He-normal (fan-out) initialisation like torchvision's VGG.
    """
    g = torch.Generator().manual_seed(seed)
    state = {}
    for name, cin, cout in VGG16_CONVS:
        if not include_all and name not in REQUIRED:
            continue
        std = (2.0 / (cout * 9)) ** 0.5
        state[f"{name}.weight"] = torch.randn(cout, cin, 3, 3, generator=g) * std
        state[f"{name}.bias"] = torch.zeros(cout)
    return state
