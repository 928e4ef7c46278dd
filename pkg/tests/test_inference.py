import pytest
import torch

from genome_nca.config import NcaConfig
from genome_nca.genome import seed_of_genome
from genome_nca.inference import regen_demo, run_snapshots
from genome_nca.nca import rollout

from helpers import random_network

CFG = NcaConfig(n_comm=4, n_genome=2, n_filters=16)


@pytest.fixture
def net():
    return random_network(CFG, seed=2, scale=0.05)


def test_snapshots_match_single_rollouts(net):
    seed = seed_of_genome(12, 12, 2, CFG)
    snaps = run_snapshots(net, seed, [0, 5, 9], torch.Generator().manual_seed(3))
    assert torch.equal(snaps[0], seed)
    with torch.no_grad():
        direct = rollout(seed, net, 9, torch.Generator().manual_seed(3))
    assert torch.equal(snaps[9], direct)


def test_regen_demo_replaces_one_step(net):
    seed = seed_of_genome(20, 20, 1, CFG)
    snaps, mask = regen_demo(net, seed, 6, 4, [5, 6, 8], torch.Generator().manual_seed(0))
    assert sorted(snaps) == [5, 6, 8]
    assert torch.equal(snaps[6][:, ~mask], snaps[5][:, ~mask])
    assert (snaps[6][:, mask] != snaps[5][:, mask]).any()
    assert snaps[6][:, mask].abs().max() <= 1


def test_regen_demo_without_damage_snapshot(net):
    # the damage still happens when t_dmg itself is not requested
    seed = seed_of_genome(20, 20, 1, CFG)
    damaged, _ = regen_demo(net, seed, 6, 4, [10], torch.Generator().manual_seed(0))
    plain = run_snapshots(net, seed, [10], torch.Generator().manual_seed(0))
    assert not torch.equal(damaged[10], plain[10])


def test_regen_demo_validation(net):
    seed = seed_of_genome(20, 20, 1, CFG)
    with pytest.raises(ValueError):
        regen_demo(net, seed, 0, 4, [1], torch.Generator())
    with pytest.raises(ValueError):
        regen_demo(net, seed, 3, 11, [5], torch.Generator())
