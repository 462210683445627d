"""Train the toy network on a small corpus, run inference, and cluster the
embeddings into a team occupancy map.

A desk-sized run: ~60 scenes, a few minutes of CPU. Writes the predicted
occupancy maps next to the input scenes for visual comparison.
"""

import time
from pathlib import Path

import numpy as np

from teamemb.clustering import cluster_teams, occupancy_to_rgb
from teamemb.data import SceneConfig, generate_corpus, save_image
from teamemb.evaluation import compute_metrics, evaluate_embedding, kfold_split
from teamemb.train import image_to_tensor, train_model

OUT = Path(__file__).parent / "out" / "clusters"
OUT.mkdir(parents=True, exist_ok=True)

corpus = generate_corpus(SceneConfig(n_games=12, n_arenas=6), 72, master_seed=1)
split = kfold_split(corpus, k=4, mode="game")
train_scenes = [corpus[i] for i in split.train[0]]
val_scenes = [corpus[i] for i in split.val[0]]
test_scenes = [corpus[i] for i in split.test[0]]
print(f"train/val/test: {len(train_scenes)}/{len(val_scenes)}/{len(test_scenes)} scenes; "
      f"held-out games: {split.fold_groups[0]}")

t0 = time.perf_counter()
trained = train_model(train_scenes, val_scenes, epochs=40, batch_size=4, seed=5,
                      validate_every=4)
print(f"trained in {time.perf_counter() - t0:.0f}s; "
      f"best epoch {trained.best_epoch} (val IoU {trained.best_score:.3f})")

for k, scene in enumerate(test_scenes[:4]):
    seg, emb = trained.model.infer(image_to_tensor(scene.image))
    result = cluster_teams(seg, emb)
    save_image(OUT / f"test_{k}_image.png", scene.image)
    save_image(OUT / f"test_{k}_teams.png", occupancy_to_rgb(result.occupancy))
    n_px = (result.occupancy > 0).sum()
    sep = (np.linalg.norm(result.centroids[0] - result.centroids[1]) ** 2
           if result.n_teams == 2 else float("nan"))
    print(f"test scene {k}: {result.n_teams} teams, {n_px} player pixels, "
          f"centroid squared distance {sep:.2f}")

counts, _ = evaluate_embedding(trained.model, test_scenes)
r_miss, r_cta = compute_metrics(counts)
print(f"held-out games: R_miss={r_miss:.3f} "
      f"R_CTA={'n/a' if r_cta is None else f'{r_cta:.3f}'} ({counts})")
print(f"wrote occupancy maps to {OUT}")
