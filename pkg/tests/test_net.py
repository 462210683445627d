"""Network contracts: output shapes and ranges, inference composition,
gradient coverage, and checkpoint round trips."""

import numpy as np
import pytest

from teamemb.losses import TeamPixelSets, total_loss
from teamemb.net import SCALES, TeamNet
from teamemb.tensor import Tensor, upsample


def rand_image(rng, size=128):
    return Tensor(rng.random((3, size, size), dtype=np.float32))


class TestForward:
    def test_scale_shapes_128(self):
        net = TeamNet(embed_dim=5, resolution=128, seed=0)
        out = net.forward(rand_image(np.random.default_rng(0)))
        assert out.logits["fine"].shape == (1, 32, 32)
        assert out.logits["mid"].shape == (1, 16, 16)
        assert out.logits["coarse"].shape == (1, 8, 8)
        assert out.emb.shape == (5, 32, 32)

    def test_seg_probabilities_in_unit_interval(self):
        net = TeamNet(seed=1)
        out = net.forward(rand_image(np.random.default_rng(1)))
        for s in SCALES:
            vals = out.seg[s].data
            assert (vals > 0).all() and (vals < 1).all()

    def test_zero_weights_neutral_outputs(self):
        net = TeamNet(embed_dim=4, resolution=16, seed=2)
        for p in net.params.values():
            p.data[:] = 0
        out = net.forward(Tensor(np.full((3, 16, 16), 0.25, np.float32)))
        for s in SCALES:
            np.testing.assert_allclose(out.seg[s].data, 0.5)
        np.testing.assert_allclose(out.emb.data, 0.0)

    def test_indivisible_input_rejected(self):
        net = TeamNet(seed=0)
        with pytest.raises(ValueError, match="divisible"):
            net.forward(Tensor(np.zeros((3, 100, 100), np.float32)))

    def test_out_of_range_values_rejected(self):
        net = TeamNet(seed=0)
        with pytest.raises(ValueError, match="0,1"):
            net.forward(Tensor(np.full((3, 16, 16), 2.0, np.float32)))

    def test_8x8_input_supported(self):
        net = TeamNet(embed_dim=2, resolution=8, seed=3)
        out = net.forward(Tensor(np.random.default_rng(3).random((3, 8, 8), dtype=np.float32)))
        assert out.logits["fine"].shape == (1, 2, 2)
        assert out.logits["mid"].shape == (1, 1, 1)
        assert out.logits["coarse"].shape == (1, 1, 1)

    def test_gradient_coverage(self):
        # perturbing any single parameter should change the loss: check that
        # nearly every parameter coordinate receives a non-zero gradient on a
        # random batch at the working resolution (after init calibration)
        rng = np.random.default_rng(4)
        net = TeamNet(embed_dim=5, resolution=128, seed=4)
        net.calibrate_init([Tensor(rng.random((3, 128, 128), dtype=np.float32))
                            for _ in range(6)])
        net.zero_grad()
        for _ in range(4):
            image = Tensor(rng.random((3, 128, 128), dtype=np.float32))
            out = net.forward(image)
            targets = {s: rng.random(out.logits[s].shape[1:]).astype(np.float32)
                       for s in SCALES}
            sets = TeamPixelSets(team1=[[0, 0], [3, 3]], team2=[[5, 5], [7, 2]])
            loss, _ = total_loss(out, targets, sets)
            loss.backward()
        covered = sum(int(np.count_nonzero(p.grad)) for p in net.parameters())
        total = sum(p.size for p in net.parameters())
        assert covered / total >= 0.99

    def test_fine_branch_zeroed_keeps_mid_coarse_finite(self):
        rng = np.random.default_rng(5)
        net = TeamNet(embed_dim=3, resolution=32, seed=5)
        for name in ("fine1", "fine2", "fuse_fine", "head_fine", "proj_mf"):
            net.params[name + ".w"].data[:] = 0
            net.params[name + ".b"].data[:] = 0
        out = net.forward(Tensor(rng.random((3, 32, 32), dtype=np.float32)))
        for s in ("mid", "coarse"):
            assert np.isfinite(out.seg[s].data).all()
            assert out.seg[s].data.std() > 0

    def test_embed_dim_bounds(self):
        with pytest.raises(ValueError):
            TeamNet(embed_dim=0)
        with pytest.raises(ValueError):
            TeamNet(embed_dim=9)


class TestInfer:
    def test_nearest_blocks_in_embeddings(self):
        net = TeamNet(seed=6)
        seg, emb = net.infer(np.random.default_rng(6).random((3, 128, 128)).astype(np.float32))
        assert emb.shape == (128, 128, 5)
        block = emb[0:4, 0:4]
        assert np.all(block == block[0, 0])

    def test_seg_strictly_inside_unit_interval(self):
        net = TeamNet(seed=7)
        seg, _ = net.infer(np.random.default_rng(7).random((3, 128, 128)).astype(np.float32))
        assert seg.shape == (128, 128)
        assert (seg > 0).all() and (seg < 1).all()

    def test_infer_equals_forward_plus_upsample(self):
        rng = np.random.default_rng(8)
        net = TeamNet(embed_dim=3, resolution=64, seed=8)
        image = Tensor(rng.random((3, 64, 64), dtype=np.float32))
        seg, emb = net.infer(image)
        out = net.forward(image)
        seg_manual = upsample(out.logits["fine"], 4, "bilinear").sigmoid().data[0]
        emb_manual = np.moveaxis(upsample(out.emb, 4, "nearest").data, 0, 2)
        np.testing.assert_allclose(seg, seg_manual, atol=1e-6)
        np.testing.assert_allclose(emb, emb_manual, atol=1e-6)

    def test_deterministic_and_smooth(self):
        rng = np.random.default_rng(9)
        net = TeamNet(seed=9)
        image = rng.random((3, 128, 128)).astype(np.float32)
        seg1, _ = net.infer(image)
        seg2, _ = net.infer(image)
        np.testing.assert_array_equal(seg1, seg2)
        bumped = np.clip(image + rng.uniform(-1, 1, image.shape).astype(np.float32) / 255, 0, 1)
        seg3, _ = net.infer(bumped)
        assert np.abs(seg3 - seg1).mean() < 0.1


class TestCheckpoint:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        net = TeamNet(embed_dim=4, resolution=64, seed=10)
        image = rng.random((3, 64, 64)).astype(np.float32)
        seg_before, emb_before = net.infer(image)
        net.save(tmp_path / "m.ckpt")
        assert (tmp_path / "m.ckpt.json").exists()
        loaded = TeamNet.load(tmp_path / "m.ckpt")
        assert loaded.embed_dim == 4 and loaded.resolution == 64
        seg_after, emb_after = loaded.infer(image)
        np.testing.assert_array_equal(seg_before, seg_after)
        np.testing.assert_array_equal(emb_before, emb_after)

    def test_state_dict_shape_check(self):
        net = TeamNet(seed=0)
        state = net.state_dict()
        state["fine1.w"] = state["fine1.w"][:, :2]
        with pytest.raises(ValueError, match="shape"):
            net.load_state_dict(state)

    def test_missing_key_rejected(self):
        net = TeamNet(seed=0)
        state = net.state_dict()
        state.pop("fine1.w")
        with pytest.raises(ValueError, match="missing"):
            net.load_state_dict(state)
