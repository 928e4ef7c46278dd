"""Inference-time rollouts with snapshots, and the damage/regrowth demo."""
from __future__ import annotations

from collections.abc import Sequence

import torch

from .genome import disc_mask
from .nca import UpdateNetwork, rollout
from .trainer import damage_state


def run_snapshots(
    net: UpdateNetwork,
    seed: torch.Tensor,
    snapshots: Sequence[int],
    generator: torch.Generator,
    fire_rate: float = 0.5,
) -> dict[int, torch.Tensor]:
    """Roll ``seed`` forward, returning the state after each requested step count.

    Snapshot 0 is the seed itself.
    """
    out: dict[int, torch.Tensor] = {}
    x, t = seed, 0
    with torch.no_grad():
        for target in sorted(set(snapshots)):
            x = rollout(x, net, target - t, generator, fire_rate)
            t = target
            out[t] = x.clone()
    return out


def regen_demo(
    net: UpdateNetwork,
    seed: torch.Tensor,
    damage_at: int,
    radius: float,
    snapshots: Sequence[int],
    generator: torch.Generator,
    fire_rate: float = 0.5,
    center: tuple[int, int] | None = None,
) -> tuple[dict[int, torch.Tensor], torch.Tensor]:
    """Grow, damage, regrow.

    The disc is applied instead of the update at step ``damage_at``:
    ``state[damage_at] = damage(state[damage_at - 1])``.  The disc is filled
    with Uniform[-1, 1] noise and is centred on the canvas unless ``center``
    is given.  Returns the snapshots and the boolean damage mask.
    """
    if damage_at < 1:
        raise ValueError("damage_at must be at least 1")
    _, h, w = seed.shape
    if radius > min(h, w) / 2:
        raise ValueError(f"radius {radius} exceeds half the canvas ({min(h, w) / 2})")
    center = center if center is not None else (h // 2, w // 2)
    mask = disc_mask(h, w, radius, center, wrap=True)
    out: dict[int, torch.Tensor] = {}
    x, t = seed, 0
    with torch.no_grad():
        for target in sorted(set(snapshots) | {damage_at}):
            if t < damage_at <= target:
                x = rollout(x, net, damage_at - 1 - t, generator, fire_rate)
                if damage_at - 1 in snapshots:
                    out[damage_at - 1] = x.clone()
                x = damage_state(x, generator, radius=radius, center=center)
                t = damage_at
            x = rollout(x, net, target - t, generator, fire_rate)
            t = target
            if t in snapshots:
                out[t] = x.clone()
    return out, mask
