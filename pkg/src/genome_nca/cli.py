"""Command-line interface.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or config errors.
Every command validates its arguments (and loads the checkpoint) before it
runs any rollout, so bad flags never leave partial output behind.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from . import __version__
from .checkpoint import CheckpointError, ConfigConflictError, load_checkpoint
from .config import ConfigError, NcaConfig, load_config, load_preset
from .discriminator import DiscriminatorWeightsError, VGGFeatures
from .genome import GenomeError, GenomeLayout, encode_genome, interp_genome, seed_from_code, seed_from_layout
from .imaging import ImageError, image_sha256, load_target, save_heatmap, save_rgb
from .inference import regen_demo, run_snapshots
from .nca import NonFiniteStateError, param_count
from .trainer import TrainingDivergedError, train

DEFAULT_STEPS = 110


class UsageError(Exception):
    """Bad flags or config; maps to exit status 2."""


# ---------------------------------------------------------------- parsing helpers


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"--size must look like HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise UsageError("--size dimensions must be positive")
    return h, w


def parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None


def parse_code(text: str, n_genome: int) -> torch.Tensor:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--code expects comma-separated numbers, got {text!r}") from None
    if len(values) != n_genome:
        raise UsageError(f"--code has {len(values)} values, checkpoint has {n_genome} genome channels")
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise UsageError("--code values must lie in [0, 1]")
    return torch.tensor(values)


def resolve_snapshots(args, default: list[int]) -> list[int]:
    snaps = parse_int_list(args.snapshots, "--snapshots") if args.snapshots else default
    if not snaps:
        raise UsageError("--snapshots is empty")
    if any(t < 0 for t in snaps):
        raise UsageError("snapshot timestamps must be non-negative")
    if any(t > args.steps for t in snaps):
        raise UsageError(f"snapshot timestamps must not exceed --steps ({args.steps})")
    return sorted(set(snaps))


def snapshot_paths(out: Path, snaps: list[int], explicit: bool, tag: str = "") -> dict[int, Path]:
    if not explicit and len(snaps) == 1 and not tag:
        return {snaps[0]: out}
    return {t: out.with_name(f"{out.stem}_t{t:05d}{tag}{out.suffix or '.png'}") for t in snaps}


def load_model(args):
    try:
        bundle = load_checkpoint(args.checkpoint)
    except (CheckpointError, ConfigError) as exc:
        raise UsageError(str(exc)) from exc
    return bundle, bundle.build_network()


def check_genome(g: int, config: NcaConfig) -> None:
    if not 0 <= g < config.n_genomes:
        raise UsageError(f"genome {g} out of range; checkpoint encodes genomes 0..{config.n_genomes - 1}")


def seed_code(args, config: NcaConfig) -> torch.Tensor:
    if args.code is not None:
        return parse_code(args.code, config.n_genome)
    check_genome(args.genome, config)
    return encode_genome(args.genome, config.n_genome)


def write_rgb_snapshots(states: dict[int, torch.Tensor], paths: dict[int, Path]) -> None:
    for t, path in paths.items():
        save_rgb(states[t][:3], path)
        print(f"wrote {path}")


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    try:
        if args.preset:
            run = load_preset(args.preset)
        elif args.config:
            run = load_config(args.config)
        else:
            raise UsageError("train needs --config or --preset")
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc

    print(f"parameters: {param_count(run.nca)}")
    vgg_path = Path(args.vgg_weights) if args.vgg_weights else run.vgg_weights
    if vgg_path is None or not vgg_path.is_file():
        raise UsageError(f"discriminator weights not found ({vgg_path}); pass --vgg-weights PATH")
    if len(run.targets) != run.nca.n_genomes:
        raise UsageError(
            f"config lists {len(run.targets)} targets; {run.nca.n_genome} genome channels need {run.nca.n_genomes}"
        )
    try:
        discriminator = VGGFeatures.from_file(vgg_path)
        targets = [load_target(p, run.train.canvas) for p in run.targets]
    except (DiscriminatorWeightsError, ImageError) as exc:
        raise UsageError(str(exc)) from exc
    digests = [image_sha256(p) for p in run.targets]
    out_dir = Path(args.out) if args.out else run.out_dir
    every = max(1, args.log_every)

    def report(rec: dict) -> None:
        if rec["epoch"] % every == 0:
            per_genome = " ".join(f"g{g}={rec[f'loss_g{g}']:.4g}" for g in range(run.nca.n_genomes))
            print(f"epoch {rec['epoch']:6d}  {per_genome}  overflow={rec['overflow']:.4g}  total={rec['total']:.4g}")

    result = train(
        targets,
        run.nca,
        run.train,
        discriminator,
        out_dir=None if args.dry_run else out_dir,
        target_digests=digests,
        callback=report,
        max_epochs=1 if args.dry_run else None,
    )
    if args.dry_run:
        print("dry run ok")
    else:
        print(f"trained {result.bundle.epoch} epochs; checkpoint at {out_dir / 'final.nca'}")
    return 0


def cmd_generate(args) -> int:
    bundle, net = load_model(args)
    config = bundle.nca_config
    h, w = parse_size(args.size)
    snaps = resolve_snapshots(args, [args.steps])
    code = seed_code(args, config)
    paths = snapshot_paths(Path(args.out), snaps, bool(args.snapshots))
    gen = torch.Generator().manual_seed(args.seed)
    states = run_snapshots(net, seed_from_code(h, w, code, config), snaps, gen, config.fire_rate)
    write_rgb_snapshots(states, paths)
    return 0


def cmd_interpolate(args) -> int:
    bundle, net = load_model(args)
    config = bundle.nca_config
    h, w = parse_size(args.size)
    snaps = resolve_snapshots(args, [args.steps])
    check_genome(args.g1, config)
    check_genome(args.g2, config)
    try:
        code = interp_genome(args.g1, args.g2, args.alpha, config)
    except GenomeError as exc:
        raise UsageError(str(exc)) from exc
    paths = snapshot_paths(Path(args.out), snaps, bool(args.snapshots))
    print(f"seed code: ({', '.join(f'{v:g}' for v in code.tolist())})")
    gen = torch.Generator().manual_seed(args.seed)
    states = run_snapshots(net, seed_from_code(h, w, code, config), snaps, gen, config.fire_rate)
    write_rgb_snapshots(states, paths)
    return 0


def parse_layout(spec: str, h: int, w: int, config: NcaConfig) -> GenomeLayout:
    """Layout specs::

        uniform:G           half:G_LEFT,G_RIGHT     halfh:G_TOP,G_BOTTOM
        disc:G_BG,G_DISC,R  stripes:G1,G2,...       masks:ch0.png,ch1.png,...
    """
    kind, _, rest = spec.partition(":")
    n_g = config.n_genome
    try:
        if kind == "masks":
            paths = [p for p in rest.split(",") if p]
            if len(paths) != n_g:
                raise UsageError(f"masks layout needs {n_g} files, got {len(paths)}")
            return GenomeLayout.from_mask_images(paths, size=(h, w))
        parts = parse_int_list(rest, "--layout")
        for g in parts[:2] if kind == "disc" else parts:
            check_genome(g, config)
        if kind == "uniform" and len(parts) == 1:
            return GenomeLayout.uniform(h, w, parts[0], n_g)
        if kind in ("half", "halfh") and len(parts) == 2:
            return GenomeLayout.half(h, w, parts[0], parts[1], n_g, vertical_split=kind == "half")
        if kind == "disc" and len(parts) in (2, 3):
            radius = parts[2] if len(parts) == 3 else min(h, w) // 4
            return GenomeLayout.disc(h, w, parts[0], parts[1], radius, n_g)
        if kind == "stripes" and parts:
            return GenomeLayout.stripes(h, w, parts, n_g)
    except GenomeError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError(f"malformed --layout {spec!r}")


def cmd_graft(args) -> int:
    bundle, net = load_model(args)
    config = bundle.nca_config
    h, w = parse_size(args.size)
    snaps = resolve_snapshots(args, [args.steps])
    layout = parse_layout(args.layout, h, w, config)
    paths = snapshot_paths(Path(args.out), snaps, bool(args.snapshots))
    gen = torch.Generator().manual_seed(args.seed)
    states = run_snapshots(net, seed_from_layout(layout, config), snaps, gen, config.fire_rate)
    write_rgb_snapshots(states, paths)
    return 0


def cmd_regen_demo(args) -> int:
    bundle, net = load_model(args)
    config = bundle.nca_config
    h, w = parse_size(args.size)
    t_dmg = args.damage_at
    if t_dmg < 1:
        raise UsageError("--damage-at must be at least 1")
    if args.radius <= 0 or args.radius > min(h, w) / 2:
        raise UsageError(f"--radius must be in (0, {min(h, w) / 2}] for a {h}x{w} canvas")
    default = [t_dmg - 1, t_dmg, t_dmg + 200]
    if args.steps is None:
        args.steps = max(parse_int_list(args.snapshots, "--snapshots") or default) if args.snapshots else t_dmg + 200
    snaps = resolve_snapshots(args, default)
    code = seed_code(args, config)
    if bundle.train_config is not None and not bundle.train_config.regeneration:
        print("warning: checkpoint was trained without the damage curriculum; regrowth may fail", file=sys.stderr)
    paths = snapshot_paths(Path(args.out), snaps, True)
    gen = torch.Generator().manual_seed(args.seed)
    states, _ = regen_demo(net, seed_from_code(h, w, code, config), t_dmg, args.radius, snaps, gen, config.fire_rate)
    write_rgb_snapshots(states, paths)
    return 0


def cmd_inspect(args) -> int:
    bundle, net = load_model(args)
    config = bundle.nca_config
    h, w = parse_size(args.size)
    if not 0 <= args.channel < config.n_genome:
        raise UsageError(f"--channel {args.channel} out of range; checkpoint has {config.n_genome} genome channels")
    snaps = resolve_snapshots(args, [args.steps])
    code = seed_code(args, config)
    out = Path(args.out)
    rgb_paths = snapshot_paths(out, snaps, True, tag="_rgb")
    map_paths = snapshot_paths(out, snaps, True, tag=f"_genome{args.channel}")
    gen = torch.Generator().manual_seed(args.seed)
    states = run_snapshots(net, seed_from_code(h, w, code, config), snaps, gen, config.fire_rate)
    channel = config.n_channels - config.n_genome + args.channel
    for t in snaps:
        save_rgb(states[t][:3], rgb_paths[t])
        save_heatmap(states[t][channel], map_paths[t])
        print(f"wrote {rgb_paths[t]} {map_paths[t]}")
    return 0


# ---------------------------------------------------------------- argparse wiring


def _run_flags(p: argparse.ArgumentParser, steps_default: int | None = DEFAULT_STEPS) -> None:
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--size", default="128x128", help="canvas HxW (default 128x128)")
    p.add_argument("--steps", type=int, default=steps_default, help=f"rollout length (default {steps_default})")
    p.add_argument("--snapshots", help="comma-separated timestamps to export, each <= --steps")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for the stochastic updates")
    p.add_argument("--out", required=True, help="output PNG path (suffixed per snapshot)")


def _genome_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--genome", type=int, help="genome index")
    group.add_argument("--code", help="raw genome code, comma-separated values in [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genome-nca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an automaton from a config file or preset")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="TOML config file")
    src.add_argument("--preset", help="named preset (g2f, g4sim, g8m, ...); paths resolve against the cwd")
    p.add_argument("--vgg-weights", help="discriminator weights file (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--dry-run", action="store_true", help="validate, build, run one iteration, write nothing")
    p.add_argument("--log-every", type=int, default=1, help="print losses every N epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="grow a texture from a genome")
    _run_flags(p)
    _genome_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interpolate", help="grow a blend of two genomes")
    _run_flags(p)
    p.add_argument("--g1", type=int, required=True)
    p.add_argument("--g2", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.5, help="blend weight of --g2 in [0, 1]")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("graft", help="grow several genomes side by side")
    _run_flags(p)
    p.add_argument("--layout", required=True, help="half:A,B | halfh:A,B | disc:BG,G[,R] | stripes:A,B,... | uniform:G | masks:f0.png,...")
    p.set_defaults(func=cmd_graft)

    p = sub.add_parser("regen-demo", help="damage a grown texture and watch it regrow")
    _run_flags(p, steps_default=None)
    _genome_flags(p)
    p.add_argument("--damage-at", type=int, default=DEFAULT_STEPS, help="timestamp of the damage")
    p.add_argument("--radius", type=float, default=20.0, help="damage disc radius in cells")
    p.set_defaults(func=cmd_regen_demo)

    p = sub.add_parser("inspect", help="export RGB frames with a genome-channel heatmap")
    _run_flags(p)
    _genome_flags(p)
    p.add_argument("--channel", type=int, default=0, help="genome channel index (0 = first genome channel)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "steps", None) is not None and args.steps < 0:
        parser.error("--steps must be non-negative")
    try:
        return args.func(args)
    except (UsageError, ConfigConflictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, NonFiniteStateError, CheckpointError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
