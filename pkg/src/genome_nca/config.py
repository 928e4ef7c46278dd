"""Configuration objects, presets and config-file loading.

Config files are TOML with three sections::

    [nca]
    n_comm = 6
    n_genome = 3
    n_filters = 70
    fire_rate = 0.5

    [train]
    epochs = 10000
    batch_size = 8
    ...

    [paths]
    targets = ["a.png", "b.png", ...]   # one per genome, in genome order
    vgg_weights = "vgg16.pth"
    out_dir = "runs/g8m"

Relative paths under ``[paths]`` are resolved against the config file's
directory.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import tomli

KERNEL_SETS = ("sobel_laplace_identity",)
# Rollout-length ranges: the default and the longer range used in the pool-training pseudocode.
STEP_PRESETS = {"default": (32, 96), "long": (64, 90)}
PRESET_NAMES = ("g2f", "g2psv", "g4sim", "g4diff", "g4str", "g8l", "g8m", "g8snr")


class ConfigError(ValueError):
    """Raised for invalid or conflicting configuration values."""


@dataclass(frozen=True)
class NcaConfig:
    n_comm: int = 9
    n_genome: int = 1
    n_filters: int = 96
    fire_rate: float = 0.5
    kernel_set: str = "sobel_laplace_identity"

    def __post_init__(self) -> None:
        if self.n_comm < 0 or self.n_genome < 0:
            raise ConfigError("n_comm and n_genome must be non-negative")
        if self.n_filters < 1:
            raise ConfigError("n_filters must be positive")
        if not 0.0 < self.fire_rate <= 1.0:
            raise ConfigError(f"fire_rate must lie in (0, 1], got {self.fire_rate}")
        if self.kernel_set not in KERNEL_SETS:
            raise ConfigError(f"unknown kernel_set {self.kernel_set!r}")

    @property
    def n_channels(self) -> int:
        """Total state depth: RGB + communication + genome channels."""
        return 3 + self.n_comm + self.n_genome

    @property
    def n_genomes(self) -> int:
        return 2**self.n_genome

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10000
    batch_size: int = 8
    pool_size: int = 1024
    step_min: int = 32
    step_max: int = 96
    learning_rate: float = 1e-3
    lr_milestones: tuple[float, ...] = (0.4, 0.7)
    lr_gamma: float = 0.3
    regeneration: bool = False
    damage_count: int = 2
    damage_radius_min: float = 15.0
    damage_radius_max: float = 25.0
    canvas: int = 128
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if not 1 <= self.step_min <= self.step_max:
            raise ConfigError(f"need 1 <= step_min <= step_max, got [{self.step_min}, {self.step_max}]")
        if self.batch_size < 1 or self.batch_size > self.pool_size:
            raise ConfigError("batch_size must be in [1, pool_size]")
        if self.damage_radius_min <= 0 or self.damage_radius_min > self.damage_radius_max:
            raise ConfigError("invalid damage radius range")
        if self.damage_count < 0:
            raise ConfigError("damage_count must be non-negative")
        if self.canvas < 1:
            raise ConfigError("canvas must be positive")
        if any(not 0.0 < m < 1.0 for m in self.lr_milestones):
            raise ConfigError("lr_milestones are fractions of the run in (0, 1)")

    @property
    def step_range(self) -> tuple[int, int]:
        return (self.step_min, self.step_max)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TrainConfig:
        d = dict(d)
        if "step_preset" in d:
            name = d.pop("step_preset")
            if name not in STEP_PRESETS:
                raise ConfigError(f"unknown step_preset {name!r}; choose from {', '.join(STEP_PRESETS)}")
            d["step_min"], d["step_max"] = STEP_PRESETS[name]
        if "lr_milestones" in d:
            d["lr_milestones"] = tuple(d["lr_milestones"])
        return _build(cls, d, "train")


@dataclass
class RunConfig:
    """Everything a training run needs, as parsed from a config file."""

    nca: NcaConfig
    train: TrainConfig
    targets: list[Path] = field(default_factory=list)
    vgg_weights: Path | None = None
    out_dir: Path = Path("runs")


def _build(cls, values: dict[str, Any], section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


def nca_config_from_dict(d: dict[str, Any]) -> NcaConfig:
    return _build(NcaConfig, dict(d), "nca")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    unknown = set(raw) - {"nca", "train", "paths"}
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown))}")
    nca = nca_config_from_dict(raw.get("nca", {}))
    train = TrainConfig.from_dict(raw.get("train", {}))
    paths = dict(raw.get("paths", {}))
    base = base_dir or Path.cwd()

    def resolve(p: str) -> Path:
        path = Path(p).expanduser()
        return path if path.is_absolute() else base / path

    targets = [resolve(p) for p in paths.pop("targets", [])]
    vgg = paths.pop("vgg_weights", None)
    out_dir = resolve(paths.pop("out_dir", "runs"))
    if paths:
        raise ConfigError(f"unknown keys in [paths]: {', '.join(sorted(paths))}")
    return RunConfig(
        nca=nca,
        train=train,
        targets=targets,
        vgg_weights=resolve(vgg) if vgg else None,
        out_dir=out_dir,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def preset_text(name: str) -> str:
    name = name.lower()
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return resources.files("genome_nca.presets").joinpath(f"{name}.toml").read_text()


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name))
