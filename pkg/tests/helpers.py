import itertools

import numpy as np
import torch

from genome_nca.config import NcaConfig, TrainConfig
from genome_nca.nca import UpdateNetwork


# Toy run shared by the acceptance and regrowth tests: two solid-colour 48x48
# targets, 300 epochs.  A small pool, a raised learning rate and small damage
# discs make 300 epochs enough for both colour and long-rollout stability.
TOY_NCA = NcaConfig(n_comm=9, n_genome=1, n_filters=64)
TOY_TRAIN = TrainConfig(
    epochs=300, batch_size=8, pool_size=32, step_min=16, step_max=32, canvas=48, learning_rate=3e-3,
    regeneration=True, damage_radius_min=6, damage_radius_max=12, seed=0, checkpoint_every=0,
)
TOY_COLORS = ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0))


def random_network(config: NcaConfig, seed: int = 0, scale: float = 0.1) -> UpdateNetwork:
    """Update network with a random (non-zero) second layer."""
    torch.manual_seed(seed)
    net = UpdateNetwork.from_config(config)
    with torch.no_grad():
        net.fc2.weight.normal_(0.0, scale)
    return net


def circular_correlate(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Reference 3x3 cross-correlation with wrap-around, by explicit loops."""
    h, w = channel.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            for a in range(3):
                for b in range(3):
                    out[i, j] += kernel[a, b] * channel[(i + a - 1) % h, (j + b - 1) % w]
    return out


def brute_force_ot(s, t) -> float:
    """Min over all matchings of the mean squared difference."""
    s, t = list(s), list(t)
    return min(
        sum((a - b) ** 2 for a, b in zip(s, perm)) / len(s) for perm in itertools.permutations(t)
    )


def lattice_disc_count(h: int, w: int, radius: float, center: tuple[int, int]) -> int:
    cy, cx = center
    return sum(1 for y in range(h) for x in range(w) if (y - cy) ** 2 + (x - cx) ** 2 <= radius**2)
