"""Training objective: multi-scale segmentation MSE plus the pull/push
embedding pair, combined as a weighted sum.

All components are means over the pixels of their own map (not over
players or instances), which is why the default pull/push weights are much
larger than the segmentation ones. The pull term draws each labeled pixel
toward its team's embedding centroid; the push term charges a unit-margin
penalty whenever a pixel sits within unit squared distance of the
*opposing* centroid. Pixel-team sets exist only at the finest supervised
scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .net import NetOutputs, SCALES
from .tensor import Tensor, gather_pixels

__all__ = [
    "LossWeights",
    "TeamPixelSets",
    "Centroids",
    "seg_loss",
    "pull_loss",
    "push_loss",
    "total_loss",
]

LOSS_KEYS = ("L124", "L24", "L4", "Lpull", "Lpush")
_SCALE_TO_KEY = {"fine": "L124", "mid": "L24", "coarse": "L4"}


@dataclass
class LossWeights:
    """Per-component weights of the combined objective."""

    l124: float = 1.0
    l24: float = 0.4
    l4: float = 0.4
    pull: float = 4.0
    push: float = 4.0

    def validate(self) -> None:
        for name, v in self.as_dict().items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0")

    def as_dict(self) -> Dict[str, float]:
        return {"l124": self.l124, "l24": self.l24, "l4": self.l4,
                "pull": self.pull, "push": self.push}


def _as_coords(arr) -> np.ndarray:
    coords = np.asarray(arr, dtype=np.int64)
    if coords.size == 0:
        return coords.reshape(0, 2)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("team pixel sets must be (K,2) coordinate arrays")
    return coords


@dataclass
class TeamPixelSets:
    """Ground-truth (row, col) pixel coordinates per team at the fine scale."""

    team1: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    team2: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))

    def __post_init__(self):
        self.team1 = _as_coords(self.team1)
        self.team2 = _as_coords(self.team2)
        if len(self.team1) and len(self.team2):
            s1 = {tuple(c) for c in self.team1}
            if any(tuple(c) in s1 for c in self.team2):
                raise ValueError("team pixel sets overlap")

    def check_bounds(self, h: int, w: int) -> None:
        for coords in (self.team1, self.team2):
            if len(coords) and (
                coords[:, 0].min() < 0 or coords[:, 0].max() >= h
                or coords[:, 1].min() < 0 or coords[:, 1].max() >= w
            ):
                raise ValueError(f"team pixel coordinates out of bounds for {h}x{w}")


@dataclass
class Centroids:
    """Mean team embeddings, shaped (D,1); None when the team has no pixels."""

    t1: Optional[Tensor] = None
    t2: Optional[Tensor] = None


def seg_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error between predicted and reference player masks."""
    target = np.asarray(target, dtype=pred.data.dtype)
    if pred.shape[-2:] != target.shape[-2:]:
        raise ValueError(f"seg_loss: prediction {pred.shape} vs target {target.shape}")
    if target.ndim == 2 and len(pred.shape) == 3:
        target = target[None]
    diff = pred - Tensor(target, dtype=pred.data.dtype)
    return (diff * diff).sum() * (1.0 / (pred.shape[-2] * pred.shape[-1]))


def pull_loss(emb: Tensor, sets: TeamPixelSets) -> Tuple[Tensor, Centroids]:
    """Within-team embedding variance, averaged over the whole map area.

    Returns the scalar loss and the team centroids (graph nodes, so the
    push term and its gradients can reuse them). Teams with no pixels
    contribute nothing and get no centroid.
    """
    _, h, w = emb.shape
    sets.check_bounds(h, w)
    inv_area = 1.0 / (h * w)
    total = None
    cents = Centroids()
    for which, coords in (("t1", sets.team1), ("t2", sets.team2)):
        if len(coords) == 0:
            continue
        g = gather_pixels(emb, coords)              # (D, K)
        centroid = g.mean(axis=1, keepdims=True)    # (D, 1)
        setattr(cents, which, centroid)
        d = g - centroid
        term = (d * d).sum()
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.zeros((), emb.data.dtype)), cents
    return total * inv_area, cents


def push_loss(emb: Tensor, sets: TeamPixelSets, cents: Centroids) -> Tensor:
    """Margin penalty for pixels too close to the opposing team's centroid.

    Each labeled pixel pays max(0, 1 - d^2) against the other team's
    centroid, averaged over the whole map area. Zero when fewer than two
    teams are present.
    """
    _, h, w = emb.shape
    if cents.t1 is None or cents.t2 is None:
        return Tensor(np.zeros((), emb.data.dtype))
    if (len(sets.team1) == 0) or (len(sets.team2) == 0):
        raise ValueError("push_loss: centroids inconsistent with empty team sets")
    inv_area = 1.0 / (h * w)
    total = None
    for coords, other in ((sets.team1, cents.t2), (sets.team2, cents.t1)):
        g = gather_pixels(emb, coords)
        d = g - other
        sq = (d * d).sum(axis=0)                    # (K,) squared distances
        term = (1.0 - sq).relu().sum()
        total = term if total is None else total + term
    return total * inv_area


def total_loss(outputs: NetOutputs, seg_targets: Dict[str, np.ndarray],
               sets: TeamPixelSets, weights: LossWeights = LossWeights(),
               ) -> Tuple[Tensor, Dict[str, float]]:
    """Weighted sum of the five components, with a per-component breakdown.

    `seg_targets` maps each supervised scale to its reference mask. A
    non-finite component aborts with the component name.
    """
    weights.validate()
    parts: Dict[str, Tensor] = {}
    for scale in SCALES:
        if scale not in seg_targets:
            raise ValueError(f"total_loss: missing segmentation target for scale {scale!r}")
        parts[_SCALE_TO_KEY[scale]] = seg_loss(outputs.seg[scale], seg_targets[scale])
    lp, cents = pull_loss(outputs.emb, sets)
    parts["Lpull"] = lp
    parts["Lpush"] = push_loss(outputs.emb, sets, cents)

    breakdown: Dict[str, float] = {}
    for key, val in parts.items():
        value = float(val.data)
        if not np.isfinite(value):
            raise RuntimeError(f"loss component {key} is non-finite; aborting step")
        breakdown[key] = value

    w = [weights.l124, weights.l24, weights.l4, weights.pull, weights.push]
    combined = None
    for wi, key in zip(w, LOSS_KEYS):
        term = parts[key] * wi
        combined = term if combined is None else combined + term
    breakdown["total"] = float(combined.data)
    return combined, breakdown
