"""The objective from first principles: segmentation MSE plus pull/push
embedding losses, with finite-difference verification of the gradients.

Builds tiny hand-sized examples so every number is checkable on paper.
"""

import numpy as np

from teamemb.gradcheck import grad_check
from teamemb.losses import TeamPixelSets, pull_loss, push_loss, seg_loss
from teamemb.tensor import Tensor

# segmentation MSE on a 2x2 map: mean over pixels of squared error
pred = Tensor(np.full((1, 2, 2), 0.5, np.float32))
target = np.array([[1, 0], [0, 0]], np.float32)
print("seg_loss([.5 x4] vs [1,0,0,0]) =", float(seg_loss(pred, target).data), "(expect 0.25)")

# pull: 1-D embeddings, one team at values {0, 2} -> centroid 1, loss 2/4
emb = Tensor(np.array([[[0.0, 2.0], [0.0, 0.0]]], np.float32))
loss, cents = pull_loss(emb, TeamPixelSets(team1=[[0, 0], [0, 1]]))
print("pull_loss =", float(loss.data), "(expect 0.5), centroid =", cents.t1.data.ravel())

# push: both teams collapsed onto one embedding, margin fully violated
emb4 = Tensor(np.zeros((2, 4, 4), np.float32))
sets = TeamPixelSets(team1=[[0, 0], [0, 1], [0, 2]], team2=[[1, 0], [1, 1]])
_, cents = pull_loss(emb4, sets)
print("push_loss =", float(push_loss(emb4, sets, cents).data), "(expect 5/16 = 0.3125)")

# separate the teams by two units: margin satisfied, push vanishes
spread = np.zeros((2, 4, 4), np.float32)
spread[0, 1, :] = 2.0
emb_sep = Tensor(spread)
_, cents = pull_loss(emb_sep, sets)
print("push_loss after separating teams =", float(push_loss(emb_sep, sets, cents).data))

# every loss is backed by reverse-mode gradients; verify against central
# finite differences (float64 internally so the comparison is meaningful)
rng = np.random.default_rng(0)
emb_t = Tensor(rng.standard_normal((5, 4, 4)).astype(np.float32) * 0.5, requires_grad=True)
sets = TeamPixelSets(team1=[[0, 0], [1, 2], [3, 3]], team2=[[2, 1], [0, 3]])
err = grad_check(lambda: pull_loss(emb_t, sets)[0], [emb_t])
print(f"pull gradient max relative error: {err:.2e}")


def push_closure():
    _, c = pull_loss(emb_t, sets)
    return push_loss(emb_t, sets, c)


err = grad_check(push_closure, [emb_t])
print(f"push gradient max relative error: {err:.2e}")
