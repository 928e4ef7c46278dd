import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from genome_nca.config import NcaConfig
from genome_nca.genome import (
    GenomeError,
    GenomeLayout,
    disc_mask,
    encode_genome,
    interp_genome,
    nearest_genome,
    seed_from_layout,
    seed_of_genome,
)

from helpers import lattice_disc_count

CFG3 = NcaConfig(n_comm=6, n_genome=3, n_filters=70)


def binary_oracle(g, n):
    return [int(c) for c in format(g, f"0{n}b")]


@pytest.mark.parametrize("g,expected", [(0, (0, 0, 0)), (1, (0, 0, 1)), (3, (0, 1, 1)), (5, (1, 0, 1))])
def test_encode_genome(g, expected):
    assert tuple(encode_genome(g, 3).tolist()) == expected


def test_encode_matches_format_oracle():
    for n in range(1, 6):
        for g in range(2**n):
            assert encode_genome(g, n).tolist() == binary_oracle(g, n)


@pytest.mark.parametrize("g", [-1, 8, 100])
def test_encode_out_of_range(g):
    with pytest.raises(GenomeError):
        encode_genome(g, 3)


def test_seed_of_genome_zero():
    seed = seed_of_genome(5, 6, 0, CFG3)
    assert seed.shape == (12, 5, 6)
    assert torch.count_nonzero(seed) == 0


def test_seed_of_genome_one():
    seed = seed_of_genome(4, 4, 1, CFG3)
    assert torch.all(seed[-1] == 1)
    assert torch.count_nonzero(seed[:-1]) == 0


def test_seed_genome_channel_sum():
    seed = seed_of_genome(4, 4, 5, CFG3)
    assert seed[-3:].sum() == 32
    assert torch.count_nonzero(seed[:-3]) == 0


def test_seed_of_genome_rejects_bad_index():
    with pytest.raises(GenomeError):
        seed_of_genome(4, 4, 8, CFG3)


def test_interp_midpoint():
    assert interp_genome(0, 1, 0.5, CFG3).tolist() == [0.0, 0.0, 0.5]
    a, b = np.array(binary_oracle(2, 3)), np.array(binary_oracle(3, 3))
    assert interp_genome(2, 3, 0.5, CFG3).tolist() == ((a + b) / 2).tolist() == [0.0, 1.0, 0.5]


def test_interp_endpoints():
    assert torch.equal(interp_genome(2, 5, 0.0, CFG3), encode_genome(2, 3))
    assert torch.equal(interp_genome(2, 5, 1.0, CFG3), encode_genome(5, 3))


@pytest.mark.parametrize("alpha", [-0.1, 1.25])
def test_interp_alpha_range(alpha):
    with pytest.raises(GenomeError):
        interp_genome(0, 1, alpha, CFG3)


@given(g=st.integers(0, 7), alpha=st.floats(0, 1))
def test_interp_same_genome(g, alpha):
    assert torch.equal(interp_genome(g, g, alpha, CFG3), encode_genome(g, 3))


@pytest.mark.parametrize("code,expected", [((0, 1, 1), 3), ((0.1, 0.9, 0.2), 2), ((0.5, 0, 0), 0), ((0.51, 0, 0), 4)])
def test_nearest_genome(code, expected):
    assert nearest_genome(code) == expected


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_nearest_genome_round_trip(n):
    for g in range(2**n):
        assert nearest_genome(encode_genome(g, n)) == g


def test_uniform_layout_matches_seed():
    layout = GenomeLayout.uniform(6, 7, 5, 3)
    assert torch.equal(seed_from_layout(layout, CFG3), seed_of_genome(6, 7, 5, CFG3))


@pytest.mark.parametrize("w", [16, 17])
def test_half_layout_is_concatenation(w):
    layout = GenomeLayout.half(9, w, 2, 6, 3)
    left = seed_of_genome(9, w // 2, 2, CFG3)
    right = seed_of_genome(9, w - w // 2, 6, CFG3)
    assert torch.equal(seed_from_layout(layout, CFG3), torch.cat([left, right], dim=2))


def test_half_layout_horizontal():
    layout = GenomeLayout.half(10, 8, 3, 1, 3, vertical_split=False)
    expected = torch.cat([seed_of_genome(5, 8, 3, CFG3), seed_of_genome(5, 8, 1, CFG3)], dim=1)
    assert torch.equal(seed_from_layout(layout, CFG3), expected)


def test_disc_layout_count():
    layout = GenomeLayout.disc(16, 16, 0, 7, 4, 3)
    disc_cells = (layout.codes == 1).all(dim=0)
    assert int(disc_cells.sum()) == lattice_disc_count(16, 16, 4, (8, 8)) == 49


def test_disc_mask_matches_oracle():
    for h, w, r, c in [(16, 16, 4, None), (30, 20, 6.5, (3, 17)), (128, 128, 20, (64, 64))]:
        center = c or (h // 2, w // 2)
        assert int(disc_mask(h, w, r, c).sum()) == lattice_disc_count(h, w, r, center)
    assert int(disc_mask(128, 128, 20).sum()) == 1257


def test_disc_mask_wraps():
    plain = disc_mask(20, 20, 5, (0, 0))
    wrapped = disc_mask(20, 20, 5, (0, 0), wrap=True)
    assert int(wrapped.sum()) == lattice_disc_count(20, 20, 5, (10, 10))
    assert int(plain.sum()) < int(wrapped.sum())


def test_stripes_layout():
    layout = GenomeLayout.stripes(6, 12, [4, 3, 1], 3)
    seed = seed_from_layout(layout, CFG3)
    for i, g in enumerate([4, 3, 1]):
        assert torch.equal(seed[:, :, 4 * i : 4 * i + 4], seed_of_genome(6, 4, g, CFG3))


def test_raw_code_layout():
    layout = GenomeLayout.uniform(3, 3, [0.35, 0.35, 0.35], 3)
    assert torch.allclose(seed_from_layout(layout, CFG3)[-3:], torch.full((3, 3, 3), 0.35))


def test_layout_channel_mismatch():
    with pytest.raises(GenomeError):
        seed_from_layout(GenomeLayout.uniform(4, 4, 1, 2), CFG3)


def test_seed_from_layout_pointwise():
    codes = torch.rand(3, 5, 5)
    seed = seed_from_layout(GenomeLayout(codes), CFG3)
    codes2 = codes.clone()
    codes2[:, 2, 2] = torch.tensor([1.0, 0.0, 1.0])
    seed2 = seed_from_layout(GenomeLayout(codes2), CFG3)
    diff = (seed != seed2).any(dim=0)
    assert diff.sum() == 1 and diff[2, 2]


def test_layout_from_mask_images(tmp_path):
    grad = np.tile(np.linspace(0, 255, 8).astype(np.uint8), (4, 1))
    paths = []
    for i, arr in enumerate([np.zeros((4, 8), np.uint8), np.zeros((4, 8), np.uint8), grad]):
        p = tmp_path / f"ch{i}.png"
        Image.fromarray(arr, mode="L").save(p)
        paths.append(p)
    layout = GenomeLayout.from_mask_images(paths, size=(4, 8))
    assert layout.codes.shape == (3, 4, 8)
    assert layout.codes[2, 0, 0] == 0.0 and layout.codes[2, 0, -1] == 1.0
    assert torch.allclose(layout.codes[2, 1], torch.from_numpy(grad[1] / 255.0).float())
    with pytest.raises(GenomeError):
        GenomeLayout.from_mask_images(paths, size=(8, 8))
