"""Generate a handful of synthetic sport scenes and inspect their anatomy.

Walks through the data layer: procedural scene rendering, the seven-ellipse
pseudo-masks with depth occlusion, the mask pyramid, and the train-time
augmentation. Writes PNGs into demos/out/scenes/ so you can eyeball them.
"""

from pathlib import Path

import numpy as np

from teamemb.data import (SceneConfig, augment, compose_scene_masks, generate_scene,
                          save_image)

OUT = Path(__file__).parent / "out" / "scenes"
OUT.mkdir(parents=True, exist_ok=True)

config = SceneConfig()
print(f"jersey deltaE floor: {config.delta_e_min}, working size: {config.size}px")

for seed in range(4):
    scene = generate_scene(seed, config)
    save_image(OUT / f"scene_{seed}.png", scene.image)
    print(f"scene {seed}: {scene.game_id} at {scene.arena_id}, "
          f"{len(scene.players)} players "
          f"({sum(p.team == 'A' for p in scene.players)} A / "
          f"{sum(p.team == 'B' for p in scene.players)} B)")

# pseudo-masks with occlusion: nearer players own contested pixels
scene = generate_scene(1, config)
pyramid = compose_scene_masks(scene.players, *scene.shape)
overlay = scene.image.copy()
overlay[pyramid.team_a] = (255, 80, 80)
overlay[pyramid.team_b] = (80, 80, 255)
save_image(OUT / "masks_overlay.png", overlay)
print(f"player pixels: {pyramid.player_mask.sum()} "
      f"({100 * pyramid.player_mask.mean():.1f}% of the image)")

# the multi-scale targets the network trains against
pyramid.build_targets((4, 8, 16))
for factor, target in pyramid.targets.items():
    print(f"  1/{factor} target: {target.shape}, mass {target.mean():.4f}")

# augmentation: mirror / rotate / rescale / recolor / crop
rng = np.random.default_rng(0)
for k in range(3):
    aug = augment(scene, rng, out_size=config.size)
    save_image(OUT / f"augmented_{k}.png", aug.image)
    p = aug.params
    print(f"augment {k}: mirror={p.mirror} angle={p.angle_deg:+.1f} deg "
          f"scale={p.scale:.2f} jitter=({p.d_l:+.1f} L, {p.d_c:+.1f} C, {p.d_h:+.1f} h)")

print(f"wrote images to {OUT}")
