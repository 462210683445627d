"""Why learned embeddings beat color histograms when contrast drops.

Runs the DP-GMM histogram baseline on three corpora: pure red vs blue
jerseys (easy), the standard palette, and a low-contrast variant where the
two jerseys sit near the minimum perceptual separation under uneven
lighting. Histograms degrade with contrast; that is the gap the embedding
method closes.
"""

import numpy as np

from teamemb.baseline import baseline_assign, fit_dpgmm
from teamemb.data import SceneConfig, generate_scene


def corpus_cta(config, master_seed, n_scenes=30):
    correct = total = 0
    for s in range(n_scenes):
        scene = generate_scene([master_seed, s], config)
        labels, _ = baseline_assign(scene, seed=0)
        best = max(
            sum(1 for lab, p in zip(labels, scene.players)
                if lab is not None and mapping[lab] == p.team)
            for mapping in ({1: "A", 2: "B"}, {1: "B", 2: "A"})
        )
        correct += best
        total += sum(1 for lab in labels if lab is not None)
    return correct / total


for name, config in [
    ("high-contrast (pure red/blue)", SceneConfig.high_contrast_fixture()),
    ("standard palette", SceneConfig()),
    ("low-contrast variant", SceneConfig.low_contrast()),
]:
    cta = corpus_cta(config, master_seed=42)
    print(f"{name:32s} baseline R_CTA = {cta:.3f}")

# the mixture itself: two separable histogram clusters vs identical ones
rng = np.random.default_rng(0)
tight = np.zeros((8, 512))
tight[:4, 100] = 0.8
tight[4:, 300] = 0.8
tight += rng.normal(0, 0.01, tight.shape)
tight = np.clip(tight, 0, None) + 1e-6
tight /= tight.sum(axis=1, keepdims=True)
labels, effective, model = fit_dpgmm(tight, seed=0)
print(f"\nseparable histograms: {effective} components, labels {labels.tolist()}, "
      f"ELBO converged in {len(model.elbo_trace)} iterations")

same = np.tile(tight[0], (8, 1))
labels, effective, _ = fit_dpgmm(same, seed=0)
print(f"identical histograms: {effective} component(s), labels {labels.tolist()}")
