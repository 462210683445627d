"""Run configuration: one serializable record per reproducible run.

The file format is flat `key = value` text with `#` comments; command-line
flags override file values. Every artifact-producing run writes its
resolved config next to its outputs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .data import SceneConfig
from .losses import LossWeights

__all__ = ["RunConfig", "parse_config_file", "write_config", "scene_config"]

VARIANTS = ("standard", "low-contrast", "high-contrast")


@dataclass
class RunConfig:
    seed: int = 0
    scenes: int = 240
    resolution: int = 128
    embed_dim: int = 5
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    lr_power: float = 0.9
    l124: float = 1.0
    l24: float = 0.4
    l4: float = 0.4
    lpull: float = 4.0
    lpush: float = 4.0
    folds: int = 10
    mode: str = "game"              # game | arena
    variant: str = "standard"       # standard | low-contrast | high-contrast
    n_games: int = 24
    n_arenas: int = 8
    augment_geometry: bool = True
    augment_jitter: bool = True
    validate_every: int = 1
    threads: int = 0                # 0 -> TEAMEMB_THREADS env or 1
    corpus_dir: Optional[str] = None
    out_dir: str = "runs/exp"

    def loss_weights(self) -> LossWeights:
        return LossWeights(l124=self.l124, l24=self.l24, l4=self.l4,
                           pull=self.lpull, push=self.lpush)

    def validate(self) -> None:
        if self.mode not in ("game", "arena"):
            raise ValueError(f"mode must be game or arena, got {self.mode!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.resolution % 16:
            raise ValueError("resolution must be divisible by 16")
        if not 1 <= self.embed_dim <= 8:
            raise ValueError("embed_dim must be in 1..8")


def scene_config(cfg: RunConfig) -> SceneConfig:
    """The generator config implied by a run's corpus variant."""
    common = dict(size=cfg.resolution, n_games=cfg.n_games, n_arenas=cfg.n_arenas)
    if cfg.variant == "low-contrast":
        return SceneConfig.low_contrast(**common)
    if cfg.variant == "high-contrast":
        return SceneConfig.high_contrast_fixture(**common)
    return SceneConfig(**common)


def _coerce(raw: str, target_type, name: str):
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {name}: expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if raw.lower() in ("none", ""):
        return None
    return raw


def parse_config_file(path, base: Optional[RunConfig] = None) -> RunConfig:
    """Read `key = value` lines over a base config."""
    cfg = base or RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        ftype = known[key].type
        base_type = {"int": int, "float": float, "bool": bool, "str": str}.get(
            ftype if isinstance(ftype, str) else getattr(ftype, "__name__", "str"), str
        )
        setattr(cfg, key, _coerce(raw, base_type, key))
    cfg.validate()
    return cfg


def write_config(cfg: RunConfig, path) -> None:
    lines = [f"{key} = {'' if value is None else value}" for key, value in asdict(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")
