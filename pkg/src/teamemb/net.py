"""Three-branch multi-scale fully-convolutional model for joint player
segmentation and per-pixel team embeddings.

The image is processed at full, half and quarter resolution by branches of
increasing depth; coarse features are fused upward cascade-style
(upsample, project, add). Each fusion stage carries its own supervised
segmentation head, and the finest head emits D+1 channels: one
segmentation logit plus D linear embedding channels. A global-average
branch on the coarsest features gives every embedding a full-image
receptive field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from .serialize import load_checkpoint, save_checkpoint
from .tensor import Tensor, avgpool2d, channel_slice, conv2d, upsample

__all__ = ["TeamNet", "NetOutputs", "SCALES"]

SCALES = ("fine", "mid", "coarse")
ARCH_VERSION = "teamnet-1"


@dataclass
class NetOutputs:
    """Forward-pass products at the three supervised scales.

    `seg` holds sigmoid probabilities, `logits` the pre-activation heads
    (needed to upsample before activation at inference), `emb` the D-channel
    embedding map at the fine scale.
    """

    seg: Dict[str, Tensor]
    logits: Dict[str, Tensor]
    emb: Tensor

    def scale_shapes(self) -> Dict[str, Tuple[int, int]]:
        return {s: self.logits[s].shape[1:] for s in SCALES}


def _he_kernel(rng: np.random.Generator, cout: int, cin: int, k: int) -> np.ndarray:
    std = np.sqrt(2.0 / (cin * k * k))
    return (rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32)


class TeamNet:
    """Toy cascade segmentation/embedding network.

    Channel widths are sized for CPU training in minutes; batch
    normalization is deliberately absent (He initialization instead), so
    there is no train/eval mode split.
    """

    TRUNK_LAYERS = ("fine1", "fine2", "mid1", "mid2", "mid3", "coarse1", "coarse2",
                    "coarse3", "gap", "proj_cm", "fuse_mid", "proj_mf", "fuse_fine")

    def __init__(self, embed_dim: int = 5, resolution: int = 128, seed: int = 0):
        if not 1 <= embed_dim <= 8:
            raise ValueError("embed_dim must be in 1..8")
        if resolution % 8:
            raise ValueError("resolution must be divisible by 8")
        self.embed_dim = embed_dim
        self.resolution = resolution
        self.params: Dict[str, Tensor] = {}
        self._probe_name: str = ""
        self._probe_acts: list = []
        rng = np.random.default_rng(seed)

        def conv_param(name: str, cout: int, cin: int, k: int) -> None:
            self.params[name + ".w"] = Tensor(_he_kernel(rng, cout, cin, k), requires_grad=True)
            self.params[name + ".b"] = Tensor(np.zeros((cout, 1, 1), np.float32), requires_grad=True)

        # fine branch: full resolution -> 1/4
        conv_param("fine1", 8, 3, 3)
        conv_param("fine2", 16, 8, 3)
        # mid branch: 1/2 resolution -> 1/8
        conv_param("mid1", 16, 3, 3)
        conv_param("mid2", 24, 16, 3)
        conv_param("mid3", 24, 24, 3)
        # coarse branch: 1/4 resolution -> 1/16, plus global context
        conv_param("coarse1", 16, 3, 3)
        conv_param("coarse2", 32, 16, 3)
        conv_param("coarse3", 32, 32, 3)
        conv_param("gap", 32, 32, 1)
        # cascade fusion and heads
        conv_param("head_coarse", 1, 32, 1)
        conv_param("proj_cm", 24, 32, 1)
        conv_param("fuse_mid", 24, 24, 3)
        conv_param("head_mid", 1, 24, 1)
        conv_param("proj_mf", 16, 24, 1)
        conv_param("fuse_fine", 16, 16, 3)
        conv_param("head_fine", 1 + embed_dim, 16, 1)
        # start the segmentation logits near the player base rate instead of
        # 0.5: avoids the early background stampede that parks the sigmoid
        # in its flat region for hundreds of steps
        for head in ("head_fine", "head_mid", "head_coarse"):
            self.params[head + ".b"].data[0] = -2.5
        # damp the embedding channels at init so early pull/push gradients
        # cannot flood the shared trunk before segmentation features form
        self.params["head_fine.w"].data[1:] *= 0.1

    # -- parameter plumbing -------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self) -> Dict[str, Tensor]:
        return dict(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise ValueError(f"state dict missing parameters: {sorted(missing)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=np.float32)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def save(self, path) -> None:
        """Checkpoint plus a JSON sidecar with D, resolution, architecture."""
        path = Path(path)
        save_checkpoint(path, self.state_dict())
        meta = {
            "embed_dim": self.embed_dim,
            "resolution": self.resolution,
            "arch": ARCH_VERSION,
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "TeamNet":
        path = Path(path)
        meta_path = path.with_suffix(path.suffix + ".json")
        meta = json.loads(meta_path.read_text())
        if meta.get("arch") != ARCH_VERSION:
            raise ValueError(f"{path}: unsupported architecture {meta.get('arch')!r}")
        model = cls(embed_dim=int(meta["embed_dim"]), resolution=int(meta["resolution"]))
        model.load_state_dict(load_checkpoint(path))
        return model

    # -- forward passes -----------------------------------------------------

    def _conv(self, name: str, x: Tensor, stride: int = 1) -> Tensor:
        w = self.params[name + ".w"]
        k = w.shape[2]
        out = conv2d(x, w, stride=stride, pad=k // 2) + self.params[name + ".b"]
        if name == self._probe_name:
            self._probe_acts.append(out.data)
        return out

    def calibrate_init(self, images) -> None:
        """Rescale every trunk layer so its pre-activations are zero-mean and
        unit-variance per channel over a probe batch (the substitute for the
        batch normalization this model deliberately omits). Without it, half
        the relu units start dead under plain He initialization.
        """
        probes = [img if isinstance(img, Tensor) else Tensor(img) for img in images]
        if not probes:
            raise ValueError("calibrate_init: need at least one probe image")
        for name in self.TRUNK_LAYERS:
            self._probe_name = name
            self._probe_acts = []
            for img in probes:
                self.forward(img)
            z = np.concatenate([a.reshape(a.shape[0], -1) for a in self._probe_acts], axis=1)
            mean = z.mean(axis=1)
            std = z.std(axis=1)
            std = np.where(std > 1e-4, std, 1.0).astype(np.float32)
            w = self.params[name + ".w"]
            b = self.params[name + ".b"]
            w.data = (w.data / std[:, None, None, None]).astype(np.float32)
            b.data = ((b.data[:, 0, 0] - mean) / std)[:, None, None].astype(np.float32)
        self._probe_name = ""
        self._probe_acts = []

    def _check_input(self, image: Tensor) -> None:
        if image.shape[0] != 3 or len(image.shape) != 3:
            raise ValueError("forward expects a (3,H,W) image")
        _, h, w = image.shape
        if h % 8 or w % 8:
            raise ValueError(
                f"input {h}x{w} rejected: pad the image so height and width are divisible by 8"
            )
        lo, hi = float(image.data.min()), float(image.data.max())
        if lo < -1e-6 or hi > 1.0 + 1e-6:
            raise ValueError("image values must lie in [0,1]")

    def forward(self, image: Tensor) -> NetOutputs:
        """Run the cascade; returns multi-scale seg maps and embeddings."""
        self._check_input(image)

        # branch trunks (stride-2 convs give ceil(H/2) per step)
        f = self._conv("fine1", image, stride=2).relu()
        f = self._conv("fine2", f, stride=2).relu()

        half = avgpool2d(image, 2)
        m = self._conv("mid1", half, stride=2).relu()
        m = self._conv("mid2", m, stride=2).relu()
        m = self._conv("mid3", m).relu()

        quarter = avgpool2d(half, 2)
        c = self._conv("coarse1", quarter, stride=2).relu()
        c = self._conv("coarse2", c, stride=2).relu()
        c = self._conv("coarse3", c).relu()
        ctx = self._conv("gap", c.mean(axis=(1, 2), keepdims=True))
        c = (c + ctx).relu()

        fh, mh, ch = f.shape[1], m.shape[1], c.shape[1]
        fw, mw, cw = f.shape[2], m.shape[2], c.shape[2]
        if mh * (fh // max(mh, 1)) != fh or ch * (mh // max(ch, 1)) != mh \
                or mw * (fw // max(mw, 1)) != fw or cw * (mw // max(cw, 1)) != mw:
            raise ValueError(
                f"input {image.shape[1]}x{image.shape[2]} rejected: pad so the branch "
                "pyramid aligns (dims divisible by 16, or exactly 8)"
            )

        logit_coarse = self._conv("head_coarse", c)

        cm = upsample(self._conv("proj_cm", c), mh // ch, "bilinear")
        m = self._conv("fuse_mid", (m + cm).relu()).relu()
        logit_mid = self._conv("head_mid", m)

        mf = upsample(self._conv("proj_mf", m), fh // mh, "bilinear")
        f = self._conv("fuse_fine", (f + mf).relu()).relu()
        head = self._conv("head_fine", f)

        logit_fine = channel_slice(head, 0, 1)
        emb = channel_slice(head, 1, 1 + self.embed_dim)
        logits = {"fine": logit_fine, "mid": logit_mid, "coarse": logit_coarse}
        seg = {s: logits[s].sigmoid() for s in SCALES}
        return NetOutputs(seg=seg, logits=logits, emb=emb)

    def infer(self, image) -> Tuple[np.ndarray, np.ndarray]:
        """Full-resolution inference.

        Segmentation logits are bilinearly upsampled to the input size and
        then passed through the sigmoid; embedding channels are upsampled
        with nearest neighbor. Returns (seg (H,W) float32 in (0,1),
        emb (H,W,D) float32).
        """
        if not isinstance(image, Tensor):
            image = Tensor(image)
        out = self.forward(image)
        h, w = image.shape[1], image.shape[2]
        fh = out.logits["fine"].shape[1]
        factor = h // fh
        seg = upsample(out.logits["fine"], factor, "bilinear").sigmoid()
        emb = upsample(out.emb, factor, "nearest")
        seg_map = seg.data[0].astype(np.float32)
        emb_map = np.moveaxis(emb.data, 0, 2).astype(np.float32)
        return seg_map, emb_map
