"""Synthetic sport scenes: keypoint annotations, seven-ellipse pseudo-masks
with depth occlusion, procedural scene rendering, and train-time
augmentation.

A player is annotated by head, pelvis and foot keypoints plus a team label
and a per-scene depth rank (smaller = nearer the camera). The pseudo-mask
is the union of seven ellipses: head disc, body ellipse (head to pelvis),
pelvis disc, one ellipse per leg (pelvis to foot), and one disc per foot.
Ellipse half-widths are proportions of L = 2 * head-pelvis distance,
calibrated so a default player is roughly 12x30 px at the 128-px working
resolution.

Scenes are rendered over a plank-textured court with boundary lines, an
LED advertising band, and optional referee-like distractors in a reserved
gray; team jerseys color the body and pelvis ellipses while skin, shorts
and shoe tones are shared across teams. The jersey pair defines the
synthetic "game", the court palette the "arena".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .color import color_jitter, delta_e, lab_to_srgb, lch_to_rgb255, srgb_to_lab

__all__ = [
    "PlayerAnnotation",
    "Scene",
    "MaskPyramid",
    "SceneConfig",
    "AugmentParams",
    "AugmentedScene",
    "player_ellipses",
    "ellipse_mask",
    "rasterize_player",
    "compose_scene_masks",
    "downsample_mask",
    "jersey_palette",
    "generate_scene",
    "generate_corpus",
    "sample_augment_params",
    "apply_augment",
    "augment",
    "save_scene",
    "load_scene",
    "load_corpus",
    "save_mask_png",
]

# ellipse half-widths as fractions of L = 2 * head-pelvis distance
HEAD_RADIUS = 0.11
BODY_HALF_WIDTH = 0.18
PELVIS_RADIUS = 0.11
LEG_HALF_WIDTH = 0.08
FOOT_RADIUS = 0.06

SKIN_TONE = np.array([224, 172, 135], dtype=np.float64)
SHORTS_TONE = np.array([205, 205, 208], dtype=np.float64)
SHOE_TONE = np.array([52, 46, 44], dtype=np.float64)
REFEREE_TONE = np.array([58, 58, 60], dtype=np.float64)


@dataclass
class PlayerAnnotation:
    head: Tuple[float, float]
    pelvis: Tuple[float, float]
    foot_left: Tuple[float, float]
    foot_right: Tuple[float, float]
    team: str
    depth_rank: int

    def keypoints(self) -> np.ndarray:
        return np.array([self.head, self.pelvis, self.foot_left, self.foot_right], np.float64)

    def validate(self, h: int, w: int) -> None:
        if self.team not in ("A", "B"):
            raise ValueError(f"team must be 'A' or 'B', got {self.team!r}")
        pts = self.keypoints()
        mx, my = 0.2 * w, 0.2 * h
        if ((pts[:, 0] < -mx) | (pts[:, 0] >= w + mx) | (pts[:, 1] < -my) | (pts[:, 1] >= h + my)).any():
            raise ValueError("keypoints outside image bounds plus 20% margin")


@dataclass
class Scene:
    image: np.ndarray                     # (H,W,3) uint8
    players: List[PlayerAnnotation]
    game_id: str
    arena_id: str

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


# -- ellipse geometry ---------------------------------------------------------


@dataclass
class EllipsePart:
    name: str
    center: np.ndarray        # (x, y)
    axis: np.ndarray          # unit vector along the major axis
    semi_major: float
    semi_minor: float


def _part(name, p0, p1, half_width) -> EllipsePart:
    p0 = np.asarray(p0, np.float64)
    p1 = np.asarray(p1, np.float64)
    d = p1 - p0
    length = float(np.hypot(*d))
    if length < 1e-9:
        return EllipsePart(name, p0.copy(), np.array([1.0, 0.0]), half_width, half_width)
    return EllipsePart(name, (p0 + p1) / 2.0, d / length, length / 2.0, half_width)


def _disc(name, center, radius) -> EllipsePart:
    return EllipsePart(name, np.asarray(center, np.float64), np.array([1.0, 0.0]), radius, radius)


def player_ellipses(ann: PlayerAnnotation) -> List[EllipsePart]:
    """The seven ellipses of the pseudo-mask, in paint order."""
    head = np.asarray(ann.head, np.float64)
    pelvis = np.asarray(ann.pelvis, np.float64)
    body_len = float(np.hypot(*(pelvis - head)))
    if body_len < 1e-9:
        raise ValueError("degenerate body axis: head coincides with pelvis")
    scale = 2.0 * body_len
    return [
        _part("leg_l", ann.pelvis, ann.foot_left, LEG_HALF_WIDTH * scale),
        _part("leg_r", ann.pelvis, ann.foot_right, LEG_HALF_WIDTH * scale),
        _disc("foot_l", ann.foot_left, FOOT_RADIUS * scale),
        _disc("foot_r", ann.foot_right, FOOT_RADIUS * scale),
        _part("body", ann.head, ann.pelvis, BODY_HALF_WIDTH * scale),
        _disc("head", ann.head, HEAD_RADIUS * scale),
        _disc("pelvis", ann.pelvis, PELVIS_RADIUS * scale),
    ]


def ellipse_mask(part: EllipsePart, h: int, w: int) -> np.ndarray:
    """Boolean (H,W) raster of one ellipse, clipped to image bounds."""
    out = np.zeros((h, w), dtype=bool)
    cx, cy = part.center
    reach = part.semi_major + 1.0
    j0, j1 = max(0, int(np.floor(cx - reach))), min(w, int(np.ceil(cx + reach)) + 1)
    i0, i1 = max(0, int(np.floor(cy - reach))), min(h, int(np.ceil(cy + reach)) + 1)
    if j0 >= j1 or i0 >= i1:
        return out
    jj, ii = np.meshgrid(np.arange(j0, j1), np.arange(i0, i1))
    dx = jj - cx
    dy = ii - cy
    ux, uy = part.axis
    along = dx * ux + dy * uy
    across = -dx * uy + dy * ux
    inside = (along / part.semi_major) ** 2 + (across / max(part.semi_minor, 1e-9)) ** 2 <= 1.0
    out[i0:i1, j0:j1] = inside
    return out


def rasterize_player(ann: PlayerAnnotation, h: int, w: int) -> np.ndarray:
    """Union of the player's seven ellipses as a boolean (H,W) mask."""
    mask = np.zeros((h, w), dtype=bool)
    for part in player_ellipses(ann):
        mask |= ellipse_mask(part, h, w)
    return mask


# -- mask pyramid --------------------------------------------------------------


@dataclass
class MaskPyramid:
    """Occlusion-resolved instance masks, per-team masks and soft targets.

    `targets[f]` is the full-resolution player mask box-averaged by factor
    f (fractional values kept). For composed scenes the team masks are
    exactly the union of their member instances; augmented pyramids warp
    team masks independently (bilinear + re-threshold), so there they only
    agree with the warped instances up to boundary pixels.
    """

    instances: np.ndarray                 # (P,H,W) bool, mutually disjoint
    team_a: np.ndarray                    # (H,W) bool
    team_b: np.ndarray                    # (H,W) bool
    targets: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def player_mask(self) -> np.ndarray:
        return self.team_a | self.team_b

    def build_targets(self, factors: Sequence[int] = (4, 8, 16)) -> "MaskPyramid":
        full = self.player_mask.astype(np.float32)
        for f in factors:
            self.targets[int(f)] = downsample_mask(full, int(f))
        return self

    def team_coords(self, factor: int) -> Tuple[np.ndarray, np.ndarray]:
        """Fine-scale (row,col) coordinates whose box-average team share > 0.5."""
        a = downsample_mask(self.team_a.astype(np.float32), factor)
        b = downsample_mask(self.team_b.astype(np.float32), factor)
        return np.argwhere(a > 0.5), np.argwhere(b > 0.5)


def compose_scene_masks(players: Sequence[PlayerAnnotation], h: int, w: int) -> MaskPyramid:
    """Rasterize all players and resolve occlusions by depth rank.

    Nearer players (smaller depth_rank) overwrite farther ones; the
    instance masks of the result are therefore disjoint.
    """
    ranks = [p.depth_rank for p in players]
    if len(set(ranks)) != len(ranks):
        raise ValueError("duplicate depth_rank in scene")
    owner = np.full((h, w), -1, dtype=np.int32)
    order = sorted(range(len(players)), key=lambda i: players[i].depth_rank, reverse=True)
    for idx in order:  # farthest first, nearest last wins
        owner[rasterize_player(players[idx], h, w)] = idx
    instances = np.zeros((len(players), h, w), dtype=bool)
    for idx in range(len(players)):
        instances[idx] = owner == idx
    team_a = np.zeros((h, w), dtype=bool)
    team_b = np.zeros((h, w), dtype=bool)
    for idx, p in enumerate(players):
        if p.team == "A":
            team_a |= instances[idx]
        else:
            team_b |= instances[idx]
    return MaskPyramid(instances=instances, team_a=team_a, team_b=team_b)


def downsample_mask(mask: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping factor x factor box average; keeps fractional values."""
    mask = np.asarray(mask, dtype=np.float32)
    if factor < 1:
        raise ValueError("downsample_mask: factor must be >= 1")
    h, w = mask.shape
    if h % factor or w % factor:
        raise ValueError(f"downsample_mask: {h}x{w} not divisible by {factor}")
    if factor == 1:
        return mask.copy()
    return mask.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


# -- scene generation -----------------------------------------------------------


@dataclass
class SceneConfig:
    """Knobs of the procedural generator. The jersey palette (one color pair
    per synthetic game) is derived from `palette_seed`, so a config value
    pins the whole corpus appearance."""

    size: int = 128
    players_per_team: Tuple[int, int] = (2, 5)
    delta_e_min: float = 15.0
    delta_e_max: Optional[float] = None   # set to squeeze contrast (low-contrast corpora)
    n_games: int = 24
    n_arenas: int = 8
    distractors: Tuple[int, int] = (0, 2)
    noise_sigma: float = 5.0
    jersey_wobble: float = 3.0            # per-player jersey shade jitter
    illumination: float = 0.0             # max relative amplitude of a lighting ramp
    palette_seed: int = 2024
    fixed_jerseys: Optional[Tuple[Tuple[int, int, int], Tuple[int, int, int]]] = None

    @classmethod
    def low_contrast(cls, **overrides) -> "SceneConfig":
        """Corpus variant with near-minimum jersey separation, heavier noise
        and uneven lighting; color histograms degrade here while local
        contrast stays learnable."""
        base = dict(delta_e_min=15.0, delta_e_max=18.0, noise_sigma=10.0,
                    jersey_wobble=6.0, illumination=0.25)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def high_contrast_fixture(cls, **overrides) -> "SceneConfig":
        """Pure red vs pure blue jerseys under flat lighting."""
        base = dict(fixed_jerseys=((255, 0, 0), (0, 0, 255)), noise_sigma=4.0)
        base.update(overrides)
        return cls(**base)


def _sample_jersey(rng: np.random.Generator) -> np.ndarray:
    lch = np.array([rng.uniform(35, 75), rng.uniform(35, 70), rng.uniform(0, 360)])
    return lch_to_rgb255(lch).astype(np.float64)


def jersey_palette(config: SceneConfig) -> List[Tuple[np.ndarray, np.ndarray]]:
    """One (team A, team B) jersey pair per synthetic game."""
    if config.fixed_jerseys is not None:
        a = np.asarray(config.fixed_jerseys[0], np.float64)
        b = np.asarray(config.fixed_jerseys[1], np.float64)
        return [(a, b)] * config.n_games
    rng = np.random.default_rng(config.palette_seed)
    pairs = []
    for game in range(config.n_games):
        for _ in range(400):
            a = _sample_jersey(rng)
            if config.delta_e_max is None:
                b = _sample_jersey(rng)
            else:
                # walk a bounded distance from A in Lab to land in the band
                lab_a = srgb_to_lab(a / 255.0)
                direction = rng.normal(size=3)
                direction /= np.linalg.norm(direction)
                target = rng.uniform(config.delta_e_min, config.delta_e_max)
                b = np.clip(np.rint(lab_to_srgb(lab_a + direction * target) * 255), 0, 255)
            de = delta_e(a, b)
            if de >= config.delta_e_min and (config.delta_e_max is None or de <= config.delta_e_max):
                pairs.append((a, b))
                break
        else:
            raise ValueError(
                f"could not satisfy the jersey deltaE constraint for game {game} "
                f"(palette_seed {config.palette_seed})"
            )
    return pairs


def _arena_palette(config: SceneConfig) -> List[np.ndarray]:
    rng = np.random.default_rng(config.palette_seed + 1)
    courts = []
    for _ in range(config.n_arenas):
        lch = np.array([rng.uniform(55, 80), rng.uniform(6, 18), rng.uniform(55, 95)])
        courts.append(lch_to_rgb255(lch).astype(np.float64))
    return courts


def _paint_court(img: np.ndarray, base: np.ndarray, rng: np.random.Generator, size: int) -> None:
    img[:] = base
    # plank stripes
    period = int(rng.integers(6, 11))
    shade = rng.uniform(4, 8)
    rows = (np.arange(size) // period) % 2 == 0
    img[rows] = np.clip(img[rows] + shade, 0, 255)
    # boundary lines and center circle, 1 px, light
    m = max(4, size // 12)
    line = np.clip(base + 70, 0, 255)
    img[m, m:size - m] = line
    img[size - m - 1, m:size - m] = line
    img[m:size - m, m] = line
    img[m:size - m, size - m - 1] = line
    yy, xx = np.mgrid[0:size, 0:size]
    r = np.hypot(yy - size / 2, xx - size / 2)
    img[np.abs(r - size / 6.0) < 0.7] = line
    # LED advertising band along the top
    band = slice(2, max(3, size // 18))
    x = 0
    while x < size:
        seg = int(rng.integers(size // 16, size // 6))
        lch = np.array([rng.uniform(50, 75), rng.uniform(45, 80), rng.uniform(0, 360)])
        img[band, x:min(size, x + seg)] = lch_to_rgb255(lch)
        x += seg


def _sample_figure(rng: np.random.Generator, size: int, team: str, depth: int) -> PlayerAnnotation:
    unit = size / 128.0
    torso = rng.uniform(11, 15) * unit
    lean = np.radians(rng.uniform(-12, 12))
    court_top = max(10, size // 9)
    px = rng.uniform(10 * unit, size - 10 * unit)
    py = rng.uniform(court_top + 14 * unit, size - 12 * unit)
    head = (px + torso * np.sin(lean), py - torso * np.cos(lean))
    leg = rng.uniform(0.7, 1.0) * torso
    spread = rng.uniform(2, 5) * unit
    foot_l = (px - spread + rng.uniform(-1.5, 1.5) * unit, py + leg)
    foot_r = (px + spread + rng.uniform(-1.5, 1.5) * unit, py + leg)
    return PlayerAnnotation(head=head, pelvis=(px, py), foot_left=foot_l,
                            foot_right=foot_r, team=team, depth_rank=depth)


def _paint_figure(img: np.ndarray, ann: PlayerAnnotation, jersey: np.ndarray,
                  rng: np.random.Generator, wobble_sigma: float = 3.0) -> None:
    h, w = img.shape[:2]
    tones = {
        "head": SKIN_TONE, "foot_l": SHOE_TONE, "foot_r": SHOE_TONE,
        "leg_l": SHORTS_TONE, "leg_r": SHORTS_TONE,
        "body": jersey, "pelvis": jersey,
    }
    wobble = rng.normal(0, wobble_sigma, 3)
    for part in player_ellipses(ann):
        color = np.clip(tones[part.name] + wobble, 0, 255)
        img[ellipse_mask(part, h, w)] = color


def generate_scene(seed, config: SceneConfig = SceneConfig()) -> Scene:
    """Render one deterministic scene; the game (jersey pair) and arena
    (court palette) are drawn from the scene seed."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    size = config.size
    pairs = jersey_palette(config)
    courts = _arena_palette(config)
    game = int(rng.integers(config.n_games))
    arena = int(rng.integers(config.n_arenas))
    jersey_a, jersey_b = pairs[game]

    img = np.zeros((size, size, 3), dtype=np.float64)
    _paint_court(img, courts[arena], rng, size)

    lo, hi = config.players_per_team
    n_a = int(rng.integers(lo, hi + 1))
    n_b = int(rng.integers(lo, hi + 1))
    depths = rng.permutation(n_a + n_b)
    players = [
        _sample_figure(rng, size, "A" if i < n_a else "B", int(depths[i]))
        for i in range(n_a + n_b)
    ]
    for p in players:
        p.validate(size, size)

    # referee-like distractors are background: painted first, never annotated
    for _ in range(int(rng.integers(config.distractors[0], config.distractors[1] + 1))):
        ref = _sample_figure(rng, size, "A", -1)
        _paint_figure(img, ref, REFEREE_TONE, rng, config.jersey_wobble)

    for p in sorted(players, key=lambda q: q.depth_rank, reverse=True):
        _paint_figure(img, p, jersey_a if p.team == "A" else jersey_b, rng,
                      config.jersey_wobble)

    if config.illumination > 0:
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:size, 0:size]
        ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / size
        ramp = ramp - ramp.mean()
        ramp = ramp / max(np.abs(ramp).max(), 1e-9)
        img *= (1.0 + config.illumination * ramp)[..., None]

    if config.noise_sigma > 0:
        img += rng.normal(0, config.noise_sigma, img.shape)
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return Scene(image=image, players=players,
                 game_id=f"game{game:02d}", arena_id=f"arena{arena}")


def generate_corpus(config: SceneConfig, n_scenes: int, master_seed: int = 0) -> List[Scene]:
    """Independent per-scene substreams derived from one master seed."""
    return [generate_scene([master_seed, i], config) for i in range(n_scenes)]


# -- augmentation ---------------------------------------------------------------


@dataclass
class AugmentParams:
    mirror: bool = False
    angle_deg: float = 0.0
    scale: float = 1.0
    crop_x: float = 0.0
    crop_y: float = 0.0
    d_l: float = 0.0
    d_c: float = 0.0
    d_h: float = 0.0
    padded: bool = False


@dataclass
class AugmentedScene:
    image: np.ndarray              # (S,S,3) uint8
    pyramid: MaskPyramid
    players: List[PlayerAnnotation]
    params: AugmentParams
    matrix: np.ndarray             # 3x3 source->output affine


def sample_augment_params(rng: np.random.Generator, scene: Scene, out_size: int,
                          jitter: bool = True, geometry: bool = True) -> AugmentParams:
    h, w = scene.shape
    p = AugmentParams()
    if geometry:
        p.mirror = bool(rng.random() < 0.5)
        p.angle_deg = float(rng.uniform(-10, 10))
        p.scale = float(rng.uniform(2 / 3, 3 / 2)) * out_size / min(h, w)
    else:
        p.scale = out_size / min(h, w)
    if jitter:
        p.d_l = float(rng.uniform(-10, 10))
        p.d_c = float(rng.uniform(-7, 7))
        p.d_h = float(rng.uniform(-30, 30))
    sw, sh = w * p.scale, h * p.scale
    p.padded = sw < out_size or sh < out_size
    # random crop origin in scaled coords; centered when the image is smaller
    p.crop_x = float(rng.uniform(0, max(0.0, sw - out_size))) if sw > out_size else (sw - out_size) / 2
    p.crop_y = float(rng.uniform(0, max(0.0, sh - out_size))) if sh > out_size else (sh - out_size) / 2
    return p


def _affine_matrix(params: AugmentParams, h: int, w: int) -> np.ndarray:
    def translate(tx, ty):
        return np.array([[1, 0, tx], [0, 1, ty], [0, 0, 1]], np.float64)

    m = np.eye(3)
    if params.mirror:
        m = np.array([[-1, 0, w - 1], [0, 1, 0], [0, 0, 1]], np.float64) @ m
    th = np.radians(params.angle_deg)
    rot = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    m = translate(cx, cy) @ rot @ translate(-cx, -cy) @ m
    m = np.diag([params.scale, params.scale, 1.0]) @ m
    m = translate(-params.crop_x, -params.crop_y) @ m
    return m


_GRID_CACHE: Dict[int, np.ndarray] = {}


def _out_grid(out_size: int) -> np.ndarray:
    grid = _GRID_CACHE.get(out_size)
    if grid is None:
        yy, xx = np.mgrid[0:out_size, 0:out_size]
        grid = np.stack([xx, yy, np.ones_like(xx)], axis=0).reshape(3, -1).astype(np.float32)
        _GRID_CACHE[out_size] = grid
    return grid


def _warp_bilinear(channelled: np.ndarray, inv: np.ndarray, out_size: int,
                   fill: np.ndarray) -> np.ndarray:
    h, w = channelled.shape[:2]
    channelled = channelled.astype(np.float32, copy=False)
    sx, sy, _ = inv.astype(np.float32) @ _out_grid(out_size)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    out = np.empty((out_size * out_size, channelled.shape[2]), np.float32)
    out[:] = fill
    valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    x0v = np.clip(x0[valid], 0, w - 2) if w > 1 else np.zeros(valid.sum(), int)
    y0v = np.clip(y0[valid], 0, h - 2) if h > 1 else np.zeros(valid.sum(), int)
    fxv = (sx[valid] - x0v)[:, None].astype(np.float32)
    fyv = (sy[valid] - y0v)[:, None].astype(np.float32)
    c00 = channelled[y0v, x0v]
    c01 = channelled[y0v, x0v + 1]
    c10 = channelled[y0v + 1, x0v]
    c11 = channelled[y0v + 1, x0v + 1]
    top = c00 * (1 - fxv) + c01 * fxv
    bot = c10 * (1 - fxv) + c11 * fxv
    out[valid] = top * (1 - fyv) + bot * fyv
    return out.reshape(out_size, out_size, channelled.shape[2])


def _warp_nearest(arr: np.ndarray, inv: np.ndarray, out_size: int, fill) -> np.ndarray:
    h, w = arr.shape
    sx, sy, _ = inv.astype(np.float32) @ _out_grid(out_size)
    xi = np.rint(sx).astype(int)
    yi = np.rint(sy).astype(int)
    valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.full(out_size * out_size, fill, dtype=arr.dtype)
    out[valid] = arr[yi[valid], xi[valid]]
    return out.reshape(out_size, out_size)


def apply_augment(scene: Scene, params: AugmentParams, out_size: int,
                  base: Optional[MaskPyramid] = None,
                  fill: Optional[np.ndarray] = None) -> AugmentedScene:
    """Apply one sampled transform to image, masks and annotations.

    The image and team masks are warped bilinearly (masks re-thresholded
    at 0.5), the instance-id map with nearest neighbor; padded regions take
    the scene's median color. `base` may carry the precomputed full-size
    pyramid of the scene (and `fill` its pad color) to skip recomputation.
    """
    h, w = scene.shape
    m = _affine_matrix(params, h, w)
    inv = np.linalg.inv(m)
    if fill is None:
        fill = np.median(scene.image.reshape(-1, 3), axis=0)

    if base is None:
        base = compose_scene_masks(scene.players, h, w)
    # one stacked warp: 3 image channels + both team masks share the grid
    stacked = np.concatenate(
        [scene.image.astype(np.float32), base.team_a[..., None], base.team_b[..., None]],
        axis=2, dtype=np.float32,
    )
    warped = _warp_bilinear(stacked, inv, out_size,
                            np.concatenate([fill, [0.0, 0.0]]).astype(np.float32))
    image = np.clip(np.rint(warped[..., :3]), 0, 255).astype(np.uint8)
    if params.d_l or params.d_c or params.d_h:
        image = color_jitter(image, params.d_l, params.d_c, params.d_h)

    owner = np.full((h, w), -1, np.int32)
    for idx in range(len(scene.players)):
        owner[base.instances[idx]] = idx
    owner_out = _warp_nearest(owner, inv, out_size, -1)
    instances = np.zeros((len(scene.players), out_size, out_size), bool)
    for idx in range(len(scene.players)):
        instances[idx] = owner_out == idx

    pyramid = MaskPyramid(
        instances=instances,
        team_a=warped[..., 3] > 0.5,
        team_b=warped[..., 4] > 0.5,
    )

    moved = []
    for p in scene.players:
        pts = np.concatenate([p.keypoints(), np.ones((4, 1))], axis=1) @ m.T
        moved.append(replace(
            p,
            head=(float(pts[0, 0]), float(pts[0, 1])),
            pelvis=(float(pts[1, 0]), float(pts[1, 1])),
            foot_left=(float(pts[2, 0]), float(pts[2, 1])),
            foot_right=(float(pts[3, 0]), float(pts[3, 1])),
        ))
    return AugmentedScene(image=image, pyramid=pyramid, players=moved,
                          params=params, matrix=m)


def augment(scene: Scene, rng: np.random.Generator, out_size: int = 128,
            jitter: bool = True, geometry: bool = True) -> AugmentedScene:
    """Random mirror/rotation/scale, color jitter, and a working-size crop."""
    params = sample_augment_params(rng, scene, out_size, jitter=jitter, geometry=geometry)
    return apply_augment(scene, params, out_size)


# -- corpus IO ------------------------------------------------------------------


def _save_ppm(path: Path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(image.astype(np.uint8).tobytes())


def _load_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path}: not a P6 PPM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(parts[4][: w * h * 3], np.uint8).reshape(h, w, 3).copy()


def save_image(path, image: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        _save_ppm(path, image)
        return
    from PIL import Image

    Image.fromarray(image.astype(np.uint8), mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return _load_ppm(path)
    from PIL import Image

    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def save_mask_png(path, mask: np.ndarray) -> None:
    """8-bit single channel PNG for occupancy maps ({0,1,2}) or instance ids."""
    from PIL import Image

    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path).convert("L"), dtype=np.uint8)


def save_scene(scene: Scene, image_path, annotation_path) -> None:
    image_path = Path(image_path)
    save_image(image_path, scene.image)
    doc = {
        "game_id": scene.game_id,
        "arena_id": scene.arena_id,
        "image": image_path.name,
        "players": [
            {
                "head": [float(p.head[0]), float(p.head[1])],
                "pelvis": [float(p.pelvis[0]), float(p.pelvis[1])],
                "foot_l": [float(p.foot_left[0]), float(p.foot_left[1])],
                "foot_r": [float(p.foot_right[0]), float(p.foot_right[1])],
                "team": p.team,
                "depth": int(p.depth_rank),
            }
            for p in scene.players
        ],
    }
    Path(annotation_path).write_text(json.dumps(doc, indent=2) + "\n")


def load_scene(annotation_path) -> Scene:
    annotation_path = Path(annotation_path)
    doc = json.loads(annotation_path.read_text())
    image = load_image(annotation_path.parent / doc["image"])
    players = [
        PlayerAnnotation(
            head=tuple(p["head"]),
            pelvis=tuple(p["pelvis"]),
            foot_left=tuple(p["foot_l"]),
            foot_right=tuple(p["foot_r"]),
            team=p["team"],
            depth_rank=int(p["depth"]),
        )
        for p in doc["players"]
    ]
    return Scene(image=image, players=players,
                 game_id=doc["game_id"], arena_id=doc["arena_id"])


def save_corpus(scenes: Iterable[Scene], out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, scene in enumerate(scenes):
        img = out_dir / f"scene_{i:04d}.png"
        ann = out_dir / f"scene_{i:04d}.json"
        save_scene(scene, img, ann)
        paths.append(ann)
    return paths


def load_corpus(directory) -> List[Scene]:
    directory = Path(directory)
    annotations = sorted(directory.glob("scene_*.json"))
    if not annotations:
        raise FileNotFoundError(f"no scene_*.json annotations under {directory}")
    return [load_scene(p) for p in annotations]
