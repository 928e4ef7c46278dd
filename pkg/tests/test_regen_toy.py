"""Regrowth after damage, on the shared toy run trained with the damage curriculum."""
import pytest
import torch

from genome_nca.genome import seed_of_genome
from genome_nca.inference import regen_demo, run_snapshots

from helpers import TOY_NCA, TOY_TRAIN

T_DMG = 64
T_END = T_DMG + 300
RADIUS = 10


def pixel_distance(a, b):
    return float((a[:3].clamp(0, 1) - b[:3].clamp(0, 1)).norm(dim=0).mean())


def damaged_and_control(net, genome):
    seed = seed_of_genome(48, 48, genome, TOY_NCA)
    damaged, _ = regen_demo(net, seed, T_DMG, RADIUS, [T_DMG, T_END], torch.Generator().manual_seed(5))
    control = run_snapshots(net, seed, range(T_END - 10, T_END + 1), torch.Generator().manual_seed(6))
    return damaged, control


@pytest.mark.slow
@pytest.mark.parametrize("genome", [0, 1])
def test_damage_gap_closes(toy_run, genome):
    assert TOY_TRAIN.regeneration
    damaged, control = damaged_and_control(toy_run.net, genome)
    before = pixel_distance(damaged[T_DMG], control[T_END])
    after = pixel_distance(damaged[T_END], control[T_END])
    # at least 90% of the damage-induced difference is gone 300 steps later
    assert after < 0.1 * before, (before, after)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="a converged solid colour changes by ~2e-4 per step, less than the ~9e-4 spread between two "
    "undamaged rollouts, so no rollout with a different noise stream can meet this bound",
)
@pytest.mark.parametrize("genome", [0, 1])
def test_recovered_within_control_variability(toy_run, genome):
    damaged, control = damaged_and_control(toy_run.net, genome)
    variability = sum(pixel_distance(control[t], control[t + 1]) for t in range(T_END - 10, T_END)) / 10
    gap = pixel_distance(damaged[T_END], control[T_END])
    assert gap < 2 * variability, (gap, variability)
