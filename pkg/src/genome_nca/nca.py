"""The cellular automaton: fixed-kernel perception, update network, stepping.

States are float tensors laid out channels-first, ``(n_s, H, W)`` for a single
grid or ``(B, n_s, H, W)`` for a batch.  Channel order is RGB, communication,
genome.  All spatial operations wrap around (the grid is a torus), so grown
textures tile seamlessly.
"""
from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .config import NcaConfig


class NonFiniteStateError(FloatingPointError):
    """A state grid picked up NaN or Inf values."""


class KernelSet(NamedTuple):
    identity: torch.Tensor
    sobel_x: torch.Tensor
    sobel_y: torch.Tensor
    laplacian: torch.Tensor


_SOBEL_X = ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0))
_LAPLACIAN = ((1.0, 2.0, 1.0), (2.0, -12.0, 2.0), (1.0, 2.0, 1.0))


def fixed_kernels(dtype: torch.dtype = torch.float32) -> KernelSet:
    """Return fresh copies of the four 3x3 perception kernels."""
    identity = torch.zeros(3, 3, dtype=dtype)
    identity[1, 1] = 1.0
    sobel_x = torch.tensor(_SOBEL_X, dtype=dtype)
    return KernelSet(identity, sobel_x, sobel_x.T.contiguous(), torch.tensor(_LAPLACIAN, dtype=dtype))


def _as_batch(state: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if state.dim() == 3:
        return state.unsqueeze(0), True
    if state.dim() == 4:
        return state, False
    raise ValueError(f"state must be (C, H, W) or (B, C, H, W), got shape {tuple(state.shape)}")


def perceive(state: torch.Tensor, kernels: KernelSet | None = None) -> torch.Tensor:
    """Convolve every channel with each kernel under circular padding.

    Kernels are applied as cross-correlations, so ``sobel_x`` responds
    positively to values increasing along the width axis.  The output is
    kernel-major: ``[identity(all C), sobel_x(all C), sobel_y(all C), lap(all C)]``,
    giving ``4 * C`` channels.  Checkpoints depend on this order.
    """
    x, squeezed = _as_batch(state)
    b, c, h, w = x.shape
    if kernels is None:
        kernels = fixed_kernels(x.dtype)
    weight = torch.stack(list(kernels)).to(dtype=x.dtype, device=x.device).unsqueeze(1)
    padded = F.pad(x.reshape(b * c, 1, h, w), (1, 1, 1, 1), mode="circular")
    out = F.conv2d(padded, weight)  # (b*c, 4, h, w)
    out = out.reshape(b, c, 4, h, w).transpose(1, 2).reshape(b, 4 * c, h, w)
    return out.squeeze(0) if squeezed else out


class UpdateNetwork(nn.Module):
    """Per-cell two-layer MLP, implemented as 1x1 convolutions.

    ``delta = W2 @ relu(W1 @ p + b1)``.  The second layer has no bias and is
    zero-initialised, so a fresh network leaves every state unchanged.
    """

    def __init__(self, n_channels: int, n_filters: int):
        super().__init__()
        self.n_channels = n_channels
        self.n_filters = n_filters
        self.fc1 = nn.Conv2d(4 * n_channels, n_filters, kernel_size=1)
        self.fc2 = nn.Conv2d(n_filters, n_channels, kernel_size=1, bias=False)
        nn.init.zeros_(self.fc2.weight)

    @classmethod
    def from_config(cls, config: NcaConfig) -> UpdateNetwork:
        return cls(config.n_channels, config.n_filters)

    def forward(self, perception: torch.Tensor) -> torch.Tensor:
        p, squeezed = _as_batch(perception)
        if p.shape[1] != 4 * self.n_channels:
            raise ValueError(
                f"perception has {p.shape[1]} channels, network expects {4 * self.n_channels}"
            )
        delta = self.fc2(F.relu(self.fc1(p)))
        return delta.squeeze(0) if squeezed else delta

    def weight_arrays(self) -> dict[str, torch.Tensor]:
        """Weights as plain matrices: W1 (n_f, 4n_s), b1 (n_f,), W2 (n_s, n_f)."""
        return {
            "W1": self.fc1.weight.detach()[:, :, 0, 0],
            "b1": self.fc1.bias.detach(),
            "W2": self.fc2.weight.detach()[:, :, 0, 0],
        }

    @torch.no_grad()
    def load_weight_arrays(self, arrays: dict[str, torch.Tensor]) -> None:
        expected = {k: tuple(v.shape) for k, v in self.weight_arrays().items()}
        for name, shape in expected.items():
            got = tuple(arrays[name].shape)
            if got != shape:
                raise ValueError(f"{name} has shape {got}, expected {shape}")
        self.fc1.weight.copy_(arrays["W1"][:, :, None, None])
        self.fc1.bias.copy_(arrays["b1"])
        self.fc2.weight.copy_(arrays["W2"][:, :, None, None])


def apply_update_network(perception: torch.Tensor, net: UpdateNetwork) -> torch.Tensor:
    return net(perception)


def param_count(config: NcaConfig) -> int:
    n_s, n_f = config.n_channels, config.n_filters
    return 4 * n_s * n_f + n_f + n_f * n_s


def step(
    state: torch.Tensor,
    net: UpdateNetwork,
    fire_rate: float,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """One stochastic update.

    A single Bernoulli(fire_rate) draw per cell decides whether that cell
    takes its proposed delta; cells that do not fire are returned untouched.
    Exactly one uniform tensor of shape ``(B, 1, H, W)`` is drawn from
    ``generator`` per call, which keeps rollouts reproducible and composable.
    """
    if not 0.0 <= fire_rate <= 1.0:
        raise ValueError(f"fire_rate must lie in [0, 1], got {fire_rate}")
    x, squeezed = _as_batch(state)
    if x.shape[1] != net.n_channels:
        raise ValueError(f"state has {x.shape[1]} channels, network expects {net.n_channels}")
    delta = net(perceive(x))
    b, _, h, w = x.shape
    draw = torch.rand((b, 1, h, w), generator=generator, dtype=x.dtype, device=x.device)
    fired = draw < fire_rate
    out = torch.where(fired, x + delta, x)
    return out.squeeze(0) if squeezed else out


def rollout(
    state: torch.Tensor,
    net: UpdateNetwork,
    steps: int,
    generator: torch.Generator | None = None,
    fire_rate: float = 0.5,
    check_finite: bool = True,
) -> torch.Tensor:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = state
    for _ in range(steps):
        x = step(x, net, fire_rate, generator)
    if check_finite and not torch.isfinite(x).all():
        raise NonFiniteStateError(f"state became non-finite within {steps} steps")
    return x


class NCA(nn.Module):
    """An update network bundled with the config that shaped it."""

    def __init__(self, config: NcaConfig):
        super().__init__()
        self.config = config
        self.net = UpdateNetwork.from_config(config)

    def forward(self, state: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
        return step(state, self.net, self.config.fire_rate, generator)

    def rollout(self, state: torch.Tensor, steps: int, generator: torch.Generator | None = None) -> torch.Tensor:
        return rollout(state, self.net, steps, generator, self.config.fire_rate)
