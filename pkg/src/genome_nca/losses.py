"""Texture objective: sliced Wasserstein matching of discriminator features,
plus the overflow penalty that keeps state channels inside [-1, 1].

Feature stacks are lists of five tensors shaped ``(B, M_l, c_l)`` (one row
per spatial position of layer ``l``).
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol

import torch

from .discriminator import VGGFeatures

FeatureStack = list[torch.Tensor]
N_LAYERS = 5


def state_to_rgb(state: torch.Tensor) -> torch.Tensor:
    """RGB channels read directly as colour, clipped to [0, 1]."""
    return state[..., :3, :, :].clamp(0.0, 1.0)


def extract_features(rgb: torch.Tensor, discriminator: VGGFeatures) -> FeatureStack:
    """Flatten the discriminator's five tap outputs into ``(B, H_l*W_l, c_l)``."""
    batched = rgb.dim() == 4
    x = rgb if batched else rgb.unsqueeze(0)
    maps = discriminator(x)
    feats = [m.flatten(2).transpose(1, 2) for m in maps]
    return feats if batched else [f[0] for f in feats]


def exact_1d_ot(s: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    """Squared 1D optimal-transport cost between equal-size empirical measures:
    the mean squared difference of the sorted samples."""
    if s.shape != t.shape or s.dim() != 1:
        raise ValueError(f"need two equal-length vectors, got {tuple(s.shape)} and {tuple(t.shape)}")
    if s.numel() == 0:
        raise ValueError("vectors must be non-empty")
    return (torch.sort(s).values - torch.sort(t).values).square().mean()


def random_projections(
    dim: int, n_proj: int = 32, generator: torch.Generator | None = None, dtype: torch.dtype = torch.float32
) -> torch.Tensor:
    """``(dim, n_proj)`` matrix of unit-norm columns (normalised Gaussians)."""
    v = torch.randn(dim, n_proj, generator=generator, dtype=dtype)
    return v / v.norm(dim=0, keepdim=True)


def sw_layer_loss(source: torch.Tensor, target: torch.Tensor, projections: torch.Tensor) -> torch.Tensor:
    """Mean over projection directions of the 1D OT cost.

    ``source``/``target``: ``(M, c)`` or ``(B, M, c)``; ``projections``: ``(c, n)``.
    Returns a scalar, or a ``(B,)`` tensor for batched input.
    """
    if source.shape != target.shape:
        raise ValueError(f"feature shapes differ: {tuple(source.shape)} vs {tuple(target.shape)}")
    if source.shape[-1] != projections.shape[0]:
        raise ValueError(f"features have depth {source.shape[-1]}, projections {projections.shape[0]}")
    proj = projections.to(source.dtype)
    s = torch.sort(source @ proj, dim=-2).values
    t = torch.sort(target @ proj, dim=-2).values
    return (s - t).square().mean(dim=(-2, -1))


class StyleLoss(Protocol):
    """Plug-in point for alternative texture losses.

    Called with generated and target stacks (batched) and returns per-sample,
    per-layer losses of shape ``(B, L)``.
    """

    def __call__(
        self, generated: FeatureStack, target: FeatureStack, generator: torch.Generator | None = None
    ) -> torch.Tensor: ...


class SlicedWassersteinLoss:
    """Sliced Wasserstein style loss.

    Fresh projections are drawn per layer on every call unless a fixed list is
    given (one ``(c_l, n)`` matrix per layer), which is handy for gradient checks.
    """

    def __init__(self, n_proj: int = 32, projections: Sequence[torch.Tensor] | None = None):
        if n_proj < 1:
            raise ValueError("n_proj must be positive")
        self.n_proj = n_proj
        self.projections = list(projections) if projections is not None else None

    def layer_projections(self, stack: FeatureStack, generator: torch.Generator | None) -> list[torch.Tensor]:
        if self.projections is not None:
            if len(self.projections) != len(stack):
                raise ValueError(f"{len(self.projections)} fixed projections for {len(stack)} layers")
            return self.projections
        return [random_projections(f.shape[-1], self.n_proj, generator, dtype=f.dtype) for f in stack]

    def __call__(
        self, generated: FeatureStack, target: FeatureStack, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        if len(generated) != len(target):
            raise ValueError(f"layer count mismatch: {len(generated)} vs {len(target)}")
        vs = self.layer_projections(generated, generator)
        return torch.stack([sw_layer_loss(g, t, v) for g, t, v in zip(generated, target, vs)], dim=-1)


def sw_loss(
    generated: FeatureStack,
    target: FeatureStack,
    generator: torch.Generator | None = None,
    n_proj: int = 32,
) -> torch.Tensor:
    """Sum over layers of the sliced Wasserstein layer loss."""
    return SlicedWassersteinLoss(n_proj)(generated, target, generator).sum(dim=-1)


def overflow_loss(state: torch.Tensor) -> torch.Tensor:
    """L1 distance of every state value to [-1, 1]; per sample for batches."""
    excess = (state - state.clamp(-1.0, 1.0)).abs()
    return excess.sum(dim=(-3, -2, -1))


@dataclass
class LossReport:
    sw: torch.Tensor  # (B,)
    overflow: torch.Tensor  # (B,)
    per_layer: torch.Tensor  # (B, L)

    @property
    def total(self) -> torch.Tensor:
        return self.sw + self.overflow

    def detached(self) -> LossReport:
        return LossReport(self.sw.detach(), self.overflow.detach(), self.per_layer.detach())


def select_targets(target_features: FeatureStack, genomes: torch.Tensor) -> FeatureStack:
    """Pick each sample's target rows from per-genome stacks ``(n_genomes, M_l, c_l)``."""
    return [t[genomes] for t in target_features]


def total_loss(
    states: torch.Tensor,
    target_features: FeatureStack,
    discriminator: VGGFeatures,
    generator: torch.Generator | None = None,
    style_loss: StyleLoss | None = None,
) -> LossReport:
    """Style loss on the RGB channels plus overflow on the full state.

    ``states`` is ``(B, n_s, H, W)``; ``target_features`` holds one
    ``(B, M_l, c_l)`` tensor per layer, already aligned to the batch.
    """
    if states.dim() != 4:
        raise ValueError("total_loss expects a batch of states (B, C, H, W)")
    style_loss = style_loss or SlicedWassersteinLoss()
    generated = extract_features(state_to_rgb(states), discriminator)
    per_layer = style_loss(generated, target_features, generator)
    return LossReport(sw=per_layer.sum(dim=-1), overflow=overflow_loss(states), per_layer=per_layer)
