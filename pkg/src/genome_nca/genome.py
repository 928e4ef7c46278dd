"""Genome codes, seeds and spatial genome layouts.

A genome index ``g`` is written big-endian on ``n_g`` bits into the last
``n_g`` state channels of the seed; every other channel starts at zero.
Layouts generalise this to a per-cell code map, which is how grafting and
mask-driven blends are set up.
"""
from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import NcaConfig


class GenomeError(ValueError):
    pass


def _n_genome(config_or_ng: NcaConfig | int) -> int:
    return config_or_ng if isinstance(config_or_ng, int) else config_or_ng.n_genome


def encode_genome(g: int, n_genome: int) -> torch.Tensor:
    """Big-endian binary expansion of ``g`` as a float vector of 0s and 1s."""
    if n_genome < 0:
        raise GenomeError("n_genome must be non-negative")
    if not 0 <= g < 2**n_genome:
        raise GenomeError(f"genome index {g} out of range for {n_genome} genome channels")
    bits = [(g >> (n_genome - 1 - i)) & 1 for i in range(n_genome)]
    return torch.tensor(bits, dtype=torch.float32)


def nearest_genome(code: Sequence[float] | torch.Tensor) -> int:
    """Decode a (possibly drifted) code by rounding each bit; 0.5 rounds down."""
    values = torch.as_tensor(code, dtype=torch.float64).flatten()
    g = 0
    for v in values.tolist():
        g = (g << 1) | int(v > 0.5)
    return g


def interp_genome(g1: int, g2: int, alpha: float, config_or_ng: NcaConfig | int) -> torch.Tensor:
    """Blend two genome codes: ``(1 - alpha) * code(g1) + alpha * code(g2)``."""
    if not 0.0 <= alpha <= 1.0:
        raise GenomeError(f"alpha must lie in [0, 1], got {alpha}")
    n_g = _n_genome(config_or_ng)
    a, b = encode_genome(g1, n_g), encode_genome(g2, n_g)
    if alpha == 0.0:
        return a
    if alpha == 1.0:
        return b
    return (1.0 - alpha) * a + alpha * b


def seed_from_code(h: int, w: int, code: Sequence[float] | torch.Tensor, config: NcaConfig) -> torch.Tensor:
    code = torch.as_tensor(code, dtype=torch.float32).flatten()
    if code.numel() != config.n_genome:
        raise GenomeError(f"code has {code.numel()} entries, config has {config.n_genome} genome channels")
    if h < 1 or w < 1:
        raise GenomeError("seed dimensions must be positive")
    seed = torch.zeros(config.n_channels, h, w)
    if config.n_genome:
        seed[-config.n_genome :] = code[:, None, None]
    return seed


def seed_of_genome(h: int, w: int, g: int, config: NcaConfig) -> torch.Tensor:
    return seed_from_code(h, w, encode_genome(g, config.n_genome), config)


def disc_mask(
    h: int,
    w: int,
    radius: float,
    center: tuple[int, int] | None = None,
    wrap: bool = False,
) -> torch.Tensor:
    """Boolean ``(h, w)`` mask of cells within ``radius`` of a center cell.

    Distances are measured between integer cell indices; the default center is
    cell ``(h // 2, w // 2)``.  With ``wrap=True`` distances are toroidal.
    """
    cy, cx = center if center is not None else (h // 2, w // 2)
    dy = (torch.arange(h) - cy).abs()
    dx = (torch.arange(w) - cx).abs()
    if wrap:
        dy = torch.minimum(dy, h - dy)
        dx = torch.minimum(dx, w - dx)
    return (dy[:, None] ** 2 + dx[None, :] ** 2) <= radius**2


class GenomeLayout:
    """A per-cell genome code map of shape ``(n_g, h, w)``."""

    def __init__(self, codes: torch.Tensor):
        codes = torch.as_tensor(codes, dtype=torch.float32)
        if codes.dim() != 3 or codes.shape[1] < 1 or codes.shape[2] < 1:
            raise GenomeError(f"layout must have shape (n_g, h, w), got {tuple(codes.shape)}")
        self.codes = codes

    @property
    def n_genome(self) -> int:
        return self.codes.shape[0]

    @property
    def height(self) -> int:
        return self.codes.shape[1]

    @property
    def width(self) -> int:
        return self.codes.shape[2]

    @staticmethod
    def _code(g: int | Sequence[float] | torch.Tensor, n_genome: int) -> torch.Tensor:
        if isinstance(g, (int, np.integer)):
            return encode_genome(int(g), n_genome)
        code = torch.as_tensor(g, dtype=torch.float32).flatten()
        if code.numel() != n_genome:
            raise GenomeError(f"code has {code.numel()} entries, expected {n_genome}")
        return code

    @classmethod
    def uniform(cls, h: int, w: int, g, n_genome: int) -> GenomeLayout:
        code = cls._code(g, n_genome)
        return cls(code[:, None, None].expand(n_genome, h, w).clone())

    @classmethod
    def half(cls, h: int, w: int, g_first, g_second, n_genome: int, vertical_split: bool = True) -> GenomeLayout:
        """Two halves: left/right when ``vertical_split`` else top/bottom.

        The first half gets ``size // 2`` cells, matching a concatenation of
        two seeds of sizes ``size // 2`` and ``size - size // 2``.
        """
        layout = cls.uniform(h, w, g_second, n_genome)
        first = cls._code(g_first, n_genome)[:, None, None]
        if vertical_split:
            layout.codes[:, :, : w // 2] = first
        else:
            layout.codes[:, : h // 2, :] = first
        return layout

    @classmethod
    def disc(
        cls,
        h: int,
        w: int,
        g_background,
        g_disc,
        radius: float,
        n_genome: int,
        center: tuple[int, int] | None = None,
    ) -> GenomeLayout:
        layout = cls.uniform(h, w, g_background, n_genome)
        mask = disc_mask(h, w, radius, center)
        layout.codes[:, mask] = cls._code(g_disc, n_genome)[:, None]
        return layout

    @classmethod
    def stripes(cls, h: int, w: int, genomes: Sequence, n_genome: int) -> GenomeLayout:
        """Equal-width vertical bands, left to right; band ``i`` spans
        columns ``[i*w//k, (i+1)*w//k)``."""
        if not genomes:
            raise GenomeError("stripes need at least one genome")
        k = len(genomes)
        if k > w:
            raise GenomeError(f"{k} stripes do not fit in width {w}")
        codes = torch.empty(n_genome, h, w)
        for i, g in enumerate(genomes):
            codes[:, :, i * w // k : (i + 1) * w // k] = cls._code(g, n_genome)[:, None, None]
        return cls(codes)

    @classmethod
    def from_mask_images(cls, paths: Sequence[str | Path], size: tuple[int, int] | None = None) -> GenomeLayout:
        """One grayscale image per genome channel, 0..255 mapped to [0, 1]."""
        planes = []
        for p in paths:
            try:
                img = Image.open(p).convert("L")
            except (OSError, ValueError) as exc:
                raise GenomeError(f"cannot read layout mask {p}: {exc}") from exc
            planes.append(np.asarray(img, dtype=np.float32) / 255.0)
        if len({pl.shape for pl in planes}) > 1:
            raise GenomeError("layout masks have differing sizes")
        layout = cls(torch.from_numpy(np.stack(planes)))
        if size is not None and (layout.height, layout.width) != tuple(size):
            raise GenomeError(
                f"layout masks are {layout.height}x{layout.width}, canvas is {size[0]}x{size[1]}"
            )
        return layout


def seed_from_layout(layout: GenomeLayout, config: NcaConfig) -> torch.Tensor:
    if layout.n_genome != config.n_genome:
        raise GenomeError(
            f"layout carries {layout.n_genome} genome channels, config has {config.n_genome}"
        )
    seed = torch.zeros(config.n_channels, layout.height, layout.width)
    if config.n_genome:
        seed[-config.n_genome :] = layout.codes
    return seed
