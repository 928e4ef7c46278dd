"""Pool-based training with genome-cycled seed replacement.

Each iteration samples a batch from a persistent pool, reseeds one entry
(the worst entry of genome ``iteration % n_genomes`` if the batch has one,
otherwise the worst overall), optionally damages the two best entries, rolls
the batch forward a random number of steps, and backpropagates the texture
loss through time.  Updated states go back into their pool slots.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .checkpoint import CheckpointBundle, save_checkpoint
from .config import NcaConfig, TrainConfig
from .discriminator import VGGFeatures
from .genome import disc_mask, seed_of_genome
from .losses import FeatureStack, LossReport, StyleLoss, extract_features, select_targets, total_loss
from .nca import UpdateNetwork, rollout

class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class Pool:
    """Pool entries: ``states[i]`` is a state grid, ``genomes[i]`` the genome it
    was seeded with (never changes), ``losses[i]`` its last evaluated loss
    (``inf`` until first evaluated)."""

    states: torch.Tensor
    genomes: torch.Tensor
    losses: torch.Tensor

    def __len__(self) -> int:
        return self.states.shape[0]


def init_pool(pool_size: int, n_genomes: int, config: NcaConfig, canvas: int | tuple[int, int]) -> Pool:
    """Seeds assigned round-robin, so each genome gets ``pool_size // n_genomes``
    entries and the first ``pool_size % n_genomes`` genomes get one more."""
    if pool_size < n_genomes:
        raise ValueError(f"pool_size {pool_size} is smaller than the number of genomes {n_genomes}")
    if n_genomes > config.n_genomes:
        raise ValueError(f"{n_genomes} genomes need more than {config.n_genome} genome channels")
    h, w = (canvas, canvas) if isinstance(canvas, int) else canvas
    seeds = torch.stack([seed_of_genome(h, w, g, config) for g in range(n_genomes)])
    genomes = torch.arange(pool_size) % n_genomes
    return Pool(
        states=seeds[genomes].clone(),
        genomes=genomes,
        losses=torch.full((pool_size,), math.inf),
    )


def select_and_replace(
    states: torch.Tensor,
    genomes: torch.Tensor,
    losses: torch.Tensor,
    iteration: int,
    n_genomes: int,
    config: NcaConfig,
) -> tuple[torch.Tensor, int]:
    """Reseed the highest-loss batch entry of genome ``iteration % n_genomes``,
    or the highest-loss entry overall when that genome is absent.

    Returns the new batch states and the batch position that was reseeded.
    """
    g_r = iteration % n_genomes
    candidates = (genomes == g_r).nonzero().flatten()
    if candidates.numel() == 0:
        candidates = torch.arange(len(genomes))
    worst = int(candidates[torch.argmax(losses[candidates])])
    states = states.clone()
    _, h, w = states.shape[1:]
    states[worst] = seed_of_genome(h, w, int(genomes[worst]), config)
    return states, worst


def lowest_loss_indices(losses: torch.Tensor, count: int, exclude: Sequence[int] = ()) -> list[int]:
    """Positions of the ``count`` lowest losses, skipping ``exclude``; ties by position."""
    order = sorted((i for i in range(len(losses)) if i not in set(exclude)), key=lambda i: (float(losses[i]), i))
    return order[:count]


def damage_state(
    state: torch.Tensor,
    generator: torch.Generator | None = None,
    radius_range: tuple[float, float] = (15.0, 25.0),
    radius: float | None = None,
    center: tuple[int, int] | None = None,
) -> torch.Tensor:
    """Re-randomise a disc of cells with i.i.d. Uniform[-1, 1] values.

    The center is a uniformly drawn cell and the radius is drawn uniformly
    from ``radius_range`` unless given.  The disc wraps around the torus; the
    radius is clamped to half the shorter side so it never overlaps itself.
    """
    c, h, w = state.shape
    if radius is None:
        lo, hi = radius_range
        radius = lo + (hi - lo) * float(torch.rand((), generator=generator))
    radius = min(radius, min(h, w) / 2)
    if center is None:
        center = (
            int(torch.randint(h, (), generator=generator)),
            int(torch.randint(w, (), generator=generator)),
        )
    mask = disc_mask(h, w, radius, center, wrap=True)
    noise = torch.rand((c, h, w), generator=generator, dtype=state.dtype) * 2.0 - 1.0
    return torch.where(mask, noise, state)


def sample_steps(generator: torch.Generator | None, step_min: int, step_max: int) -> int:
    return int(torch.randint(step_min, step_max + 1, (), generator=generator))


def normalize_gradients(params) -> None:
    """Scale each parameter's gradient to unit L2 norm (zero gradients stay zero)."""
    for p in params:
        if p.grad is None:
            continue
        norm = p.grad.norm()
        if norm > 0:
            p.grad.div_(norm)


@dataclass
class StepResult:
    iteration: int
    batch_indices: torch.Tensor
    genomes: torch.Tensor
    replaced: int
    damaged: list[int]
    steps: int
    report: LossReport


def compute_target_features(targets: Sequence[torch.Tensor], discriminator: VGGFeatures) -> FeatureStack:
    """Per-genome feature stacks ``(n_genomes, M_l, c_l)``, computed once."""
    with torch.no_grad():
        batch = torch.stack(list(targets)).to(next(discriminator.parameters()).dtype)
        return extract_features(batch, discriminator)


def train_step(
    net: UpdateNetwork,
    pool: Pool,
    target_features: FeatureStack,
    optimizer: torch.optim.Optimizer,
    iteration: int,
    train_config: TrainConfig,
    nca_config: NcaConfig,
    discriminator: VGGFeatures,
    generator: torch.Generator,
    style_loss: StyleLoss | None = None,
) -> StepResult:
    """One pool-training iteration; mutates ``pool``, ``net`` and ``optimizer``."""
    n_genomes = target_features[0].shape[0]
    idx = torch.randperm(len(pool), generator=generator)[: train_config.batch_size]
    genomes = pool.genomes[idx]
    states, replaced = select_and_replace(pool.states[idx], genomes, pool.losses[idx], iteration, n_genomes, nca_config)

    damaged: list[int] = []
    if train_config.regeneration and train_config.damage_count:
        damaged = lowest_loss_indices(pool.losses[idx], train_config.damage_count, exclude=(replaced,))
        radius_range = (train_config.damage_radius_min, train_config.damage_radius_max)
        for i in damaged:
            states[i] = damage_state(states[i], generator, radius_range)

    n_steps = sample_steps(generator, train_config.step_min, train_config.step_max)
    x = rollout(states, net, n_steps, generator, nca_config.fire_rate, check_finite=False)
    report = total_loss(x, select_targets(target_features, genomes), discriminator, generator, style_loss)

    if not torch.isfinite(report.total).all():
        raise TrainingDivergedError(
            f"non-finite loss at iteration {iteration}: batch indices {idx.tolist()}, "
            f"per-sample losses {report.total.detach().tolist()}"
        )
    optimizer.zero_grad(set_to_none=True)
    report.total.mean().backward()
    normalize_gradients(net.parameters())
    optimizer.step()

    pool.states[idx] = x.detach()
    pool.losses[idx] = report.total.detach()
    return StepResult(iteration, idx, genomes, replaced, damaged, n_steps, report.detached())


def build_network(nca_config: NcaConfig, seed: int) -> UpdateNetwork:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return UpdateNetwork.from_config(nca_config)


def make_optimizer(net: UpdateNetwork, train_config: TrainConfig):
    optimizer = torch.optim.Adam(net.parameters(), lr=train_config.learning_rate)
    milestones = sorted({max(1, int(m * train_config.epochs)) for m in train_config.lr_milestones})
    scheduler = torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones=milestones, gamma=train_config.lr_gamma)
    return optimizer, scheduler


@dataclass
class TrainResult:
    bundle: CheckpointBundle
    net: UpdateNetwork
    pool: Pool
    history: list[dict] = field(default_factory=list)


def _epoch_record(epoch: int, result: StepResult, n_genomes: int) -> dict:
    rec = {"epoch": epoch, "steps": result.steps}
    sw = result.report.sw
    for g in range(n_genomes):
        sel = result.genomes == g
        rec[f"loss_g{g}"] = float(sw[sel].mean()) if sel.any() else math.nan
    rec["sw"] = float(sw.mean())
    rec["overflow"] = float(result.report.overflow.mean())
    rec["total"] = float(result.report.total.mean())
    return rec


def train(
    targets: Sequence[torch.Tensor],
    nca_config: NcaConfig,
    train_config: TrainConfig,
    discriminator: VGGFeatures,
    out_dir: str | Path | None = None,
    target_digests: Sequence[str] = (),
    style_loss: StyleLoss | None = None,
    callback: Callable[[dict], None] | None = None,
    max_epochs: int | None = None,
) -> TrainResult:
    """Train one automaton on one target image per genome.

    ``targets`` are (3, canvas, canvas) tensors in [0, 1], in genome order.
    With ``out_dir`` set, a loss CSV is appended to every epoch, and
    checkpoints are written every ``checkpoint_every`` epochs and at the end.
    ``max_epochs`` stops early (dry runs) without changing the LR schedule.
    """
    n_genomes = len(targets)
    if n_genomes != nca_config.n_genomes:
        raise ValueError(
            f"{n_genomes} targets given but {nca_config.n_genome} genome channels encode {nca_config.n_genomes}"
        )
    canvas = train_config.canvas
    for i, t in enumerate(targets):
        if tuple(t.shape) != (3, canvas, canvas):
            raise ValueError(f"target {i} has shape {tuple(t.shape)}, expected (3, {canvas}, {canvas})")

    generator = torch.Generator().manual_seed(train_config.seed)
    net = build_network(nca_config, train_config.seed)
    optimizer, scheduler = make_optimizer(net, train_config)
    pool = init_pool(train_config.pool_size, n_genomes, nca_config, canvas)
    target_features = compute_target_features(targets, discriminator)

    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "loss.csv", "a", newline="")
        writer = csv.writer(log_file)
        if log_file.tell() == 0:
            writer.writerow(["epoch", *(f"loss_g{g}" for g in range(n_genomes)), "overflow", "total"])

    def bundle_at(epoch: int) -> CheckpointBundle:
        return CheckpointBundle.from_network(
            net,
            nca_config,
            train_config=train_config,
            epoch=epoch,
            vgg_sha256=discriminator.sha256,
            target_sha256=list(target_digests),
        )

    history = []
    epochs = train_config.epochs if max_epochs is None else min(max_epochs, train_config.epochs)
    try:
        for epoch in range(epochs):
            result = train_step(
                net, pool, target_features, optimizer, epoch, train_config, nca_config,
                discriminator, generator, style_loss,
            )
            scheduler.step()
            rec = _epoch_record(epoch, result, n_genomes)
            history.append(rec)
            if writer is not None:
                writer.writerow(
                    [epoch, *(f"{rec[f'loss_g{g}']:.6g}" for g in range(n_genomes)),
                     f"{rec['overflow']:.6g}", f"{rec['total']:.6g}"]
                )
                log_file.flush()
            if callback is not None:
                callback(rec)
            done = epoch + 1
            if out is not None and train_config.checkpoint_every and done % train_config.checkpoint_every == 0:
                save_checkpoint(bundle_at(done), out / f"checkpoint_{done:06d}.nca")
    finally:
        if writer is not None:
            log_file.close()

    bundle = bundle_at(epochs)
    if out is not None:
        save_checkpoint(bundle, out / "final.nca")
    return TrainResult(bundle=bundle, net=net, pool=pool, history=history)
