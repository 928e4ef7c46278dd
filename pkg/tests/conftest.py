import copy

import pytest
import torch

from genome_nca.checkpoint import CheckpointBundle, save_checkpoint
from genome_nca.config import NcaConfig, TrainConfig
from genome_nca.discriminator import VGGFeatures, random_vgg_state
from genome_nca.trainer import train

from helpers import TOY_COLORS, TOY_NCA, TOY_TRAIN, random_network


@pytest.fixture(scope="session")
def vgg_weights_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("vgg") / "vgg16_random.pth"
    torch.save(random_vgg_state(seed=0, include_all=False), path)
    return path


@pytest.fixture(scope="session")
def discriminator(vgg_weights_file):
    return VGGFeatures.from_file(vgg_weights_file)


@pytest.fixture(scope="session")
def discriminator64(discriminator):
    return copy.deepcopy(discriminator).to(torch.float64)


@pytest.fixture
def g8m_config():
    return NcaConfig(n_comm=6, n_genome=3, n_filters=70)


@pytest.fixture
def small_config():
    return NcaConfig(n_comm=4, n_genome=2, n_filters=16)


@pytest.fixture
def checkpoint_file(tmp_path_factory):
    """A checkpoint with random (untrained) but non-trivial weights."""
    config = NcaConfig(n_comm=4, n_genome=3, n_filters=16)
    net = random_network(config, seed=3, scale=0.05)
    bundle = CheckpointBundle.from_network(net, config, train_config=TrainConfig(canvas=32, pool_size=16))
    return save_checkpoint(bundle, tmp_path_factory.mktemp("ckpt") / "random.nca")


@pytest.fixture(scope="session")
def toy_run():
    """Shared toy training run (a few minutes on one CPU core)."""
    discriminator = VGGFeatures()
    discriminator.load_conv_weights(random_vgg_state(seed=0))
    targets = [torch.tensor(c).view(3, 1, 1).expand(3, 48, 48).clone() for c in TOY_COLORS]
    with torch.random.fork_rng(devices=[]):
        return train(targets, TOY_NCA, TOY_TRAIN, discriminator)
