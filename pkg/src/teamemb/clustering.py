"""Greedy discovery of up to two team centroids in embedding space.

The seed for each team is the mask pixel whose embedding agrees best with
its 8-connected masked neighborhood (lowest neighborhood variance).
Membership is a unit ball in squared distance around the seed embedding;
the centroid is refined once to the member mean and membership recomputed.
Every mask pixel is finally assigned to the nearest discovered centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

__all__ = ["neighborhood_variance", "cluster_teams", "ClusterResult", "occupancy_to_rgb"]

# visualization palette: background black, team 1 red, team 2 blue
OCCUPANCY_PALETTE = np.array([[0, 0, 0], [220, 40, 40], [40, 80, 220]], dtype=np.uint8)

_NEIGHBOR_OFFSETS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


def neighborhood_variance(emb: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean squared embedding distance to the masked 8-neighborhood.

    `emb` is (H,W,D), `mask` boolean (H,W). Mask pixels whose neighborhood
    contains no mask pixel get +inf; entries outside the mask are +inf as
    well (only mask entries are meaningful).
    """
    emb = np.asarray(emb, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    acc = np.zeros((h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.int64)
    for di, dj in _NEIGHBOR_OFFSETS:
        src_i = slice(max(0, -di), min(h, h - di))
        src_j = slice(max(0, -dj), min(w, w - dj))
        dst_i = slice(max(0, di), min(h, h + di))
        dst_j = slice(max(0, dj), min(w, w + dj))
        nb_mask = mask[dst_i, dst_j]
        d2 = ((emb[src_i, src_j] - emb[dst_i, dst_j]) ** 2).sum(axis=-1)
        acc[src_i, src_j] += np.where(nb_mask, d2, 0.0)
        count[src_i, src_j] += nb_mask
    out = np.full((h, w), np.inf)
    valid = mask & (count > 0)
    out[valid] = acc[valid] / count[valid]
    return out


@dataclass
class ClusterResult:
    """Occupancy labels plus the centroids and distance maps behind them."""

    occupancy: np.ndarray                 # (H,W) uint8 in {0,1,2}
    centroids: List[np.ndarray] = field(default_factory=list)
    d1: Optional[np.ndarray] = None       # squared distance to centroid 1 over mask
    d2: Optional[np.ndarray] = None
    first_pass_members: List[np.ndarray] = field(default_factory=list)  # boolean maps

    @property
    def n_teams(self) -> int:
        return len(self.centroids)


def cluster_teams(seg: np.ndarray, emb: np.ndarray) -> ClusterResult:
    """Partition the predicted player mask into at most two teams.

    `seg` is the (H,W) segmentation probability map; pixels above 0.5 form
    the mask. `emb` is the (H,W,D) embedding map. An empty mask yields an
    all-zero occupancy map and no centroids.
    """
    seg = np.asarray(seg)
    emb = np.asarray(emb, dtype=np.float64)
    if seg.shape != emb.shape[:2]:
        raise ValueError(f"cluster_teams: seg {seg.shape} vs emb {emb.shape[:2]}")
    h, w = seg.shape
    s_mask = seg > 0.5
    occupancy = np.zeros((h, w), dtype=np.uint8)
    result = ClusterResult(occupancy=occupancy)
    if not s_mask.any():
        return result

    variance = neighborhood_variance(emb, s_mask)
    remaining = s_mask.copy()
    dist_maps: List[np.ndarray] = []

    while remaining.any() and len(result.centroids) < 2:
        # lowest-variance remaining pixel; np.argmin takes the first
        # (row-major) minimum, which also resolves the all-inf case
        flat_idx = np.flatnonzero(remaining.ravel())
        seed_flat = flat_idx[np.argmin(variance.ravel()[flat_idx])]
        si, sj = divmod(int(seed_flat), w)
        centroid = emb[si, sj].copy()

        d2_all = ((emb - centroid) ** 2).sum(axis=-1)
        members = remaining & (d2_all < 1.0)
        result.first_pass_members.append(members.copy())
        if members.any():
            refined = emb[members].mean(axis=0)
            d2_ref = ((emb - refined) ** 2).sum(axis=-1)
            refined_members = remaining & (d2_ref < 1.0)
            if refined_members.any():
                centroid = refined
                members = refined_members
            else:
                # degenerate: keep the raw seed embedding
                members = np.zeros_like(remaining)
        remaining &= ~members
        result.centroids.append(centroid)
        dist_maps.append(np.where(s_mask, ((emb - centroid) ** 2).sum(axis=-1), np.inf))

    if len(result.centroids) == 1:
        occupancy[s_mask] = 1
        result.d1 = dist_maps[0]
    elif len(result.centroids) == 2:
        result.d1, result.d2 = dist_maps
        # ties go to team 1 (first in index order)
        occupancy[s_mask] = np.where(result.d2[s_mask] < result.d1[s_mask], 2, 1)
    return result


def occupancy_to_rgb(occupancy: np.ndarray) -> np.ndarray:
    """Render an occupancy map with the documented palette."""
    return OCCUPANCY_PALETTE[np.asarray(occupancy, dtype=np.uint8)]
