"""Pseudo-mask rasterization against a brute-force oracle, occlusion
composition, downsampling, scene generation, and augmentation geometry."""

import numpy as np
import pytest
from scipy import stats

from teamemb.color import delta_e
from teamemb.data import (AugmentParams, PlayerAnnotation, SceneConfig, apply_augment,
                          augment, compose_scene_masks, downsample_mask, generate_corpus,
                          generate_scene, jersey_palette, load_corpus, load_scene,
                          player_ellipses, rasterize_player, save_corpus, save_scene)


def fixture_player(x=30.0, y=30.0, team="A", depth=0, lean=0.0):
    torso, leg, spread = 12.0, 10.0, 3.5
    head = (x + torso * np.sin(lean), y - torso * np.cos(lean))
    return PlayerAnnotation(
        head=head, pelvis=(x, y),
        foot_left=(x - spread, y + leg), foot_right=(x + spread, y + leg),
        team=team, depth_rank=depth,
    )


def oracle_rasterize(ann, h, w):
    """Independent per-pixel point-in-ellipse scan over the full image."""
    out = np.zeros((h, w), dtype=bool)
    for part in player_ellipses(ann):
        cx, cy = part.center
        ux, uy = part.axis
        for i in range(h):
            for j in range(w):
                dx, dy = j - cx, i - cy
                along = dx * ux + dy * uy
                across = -dx * uy + dy * ux
                if (along / part.semi_major) ** 2 + (across / part.semi_minor) ** 2 <= 1.0:
                    out[i, j] = True
    return out


class TestRasterize:
    def test_vertical_player_mirror_symmetric(self):
        # center the player on the middle column of an odd-width image
        ann = fixture_player(x=32.0)
        mask = rasterize_player(ann, 65, 65)
        np.testing.assert_array_equal(mask, mask[:, ::-1])

    def test_keypoints_inside_mask(self):
        ann = fixture_player(40.0, 40.0, lean=0.15)
        mask = rasterize_player(ann, 80, 80)
        for x, y in [ann.head, ann.pelvis, ann.foot_left, ann.foot_right]:
            assert mask[int(round(y)), int(round(x))]

    def test_matches_brute_force_oracle(self):
        ann = fixture_player(20.0, 25.0, lean=-0.12)
        got = rasterize_player(ann, 48, 48)
        want = oracle_rasterize(ann, 48, 48)
        np.testing.assert_array_equal(got, want)

    def test_degenerate_body_axis_rejected(self):
        ann = PlayerAnnotation(head=(10, 10), pelvis=(10, 10), foot_left=(8, 20),
                               foot_right=(12, 20), team="A", depth_rank=0)
        with pytest.raises(ValueError, match="degenerate"):
            rasterize_player(ann, 32, 32)

    def test_clipped_at_image_bounds(self):
        ann = fixture_player(2.0, 3.0)
        mask = rasterize_player(ann, 40, 40)
        assert mask.shape == (40, 40)
        assert mask.any()


class TestCompose:
    def test_disjoint_players_keep_raw_masks(self):
        players = [fixture_player(20, 25, "A", 0), fixture_player(80, 80, "B", 1)]
        pyr = compose_scene_masks(players, 128, 128)
        for k, p in enumerate(players):
            np.testing.assert_array_equal(pyr.instances[k], rasterize_player(p, 128, 128))

    def test_full_overlap_near_player_owns_pixels(self):
        near = fixture_player(40, 40, "A", 0)
        far = fixture_player(40, 40, "B", 1)
        pyr = compose_scene_masks([near, far], 96, 96)
        assert pyr.instances[1].sum() == 0
        np.testing.assert_array_equal(pyr.instances[0], rasterize_player(near, 96, 96))

    def test_partial_overlap_set_arithmetic(self):
        near = fixture_player(40, 40, "A", 0)
        far = fixture_player(46, 42, "B", 3)
        pyr = compose_scene_masks([near, far], 96, 96)
        raw_near = rasterize_player(near, 96, 96)
        raw_far = rasterize_player(far, 96, 96)
        assert pyr.instances[1].sum() == raw_far.sum() - (raw_far & raw_near).sum()

    def test_instances_disjoint(self):
        rng = np.random.default_rng(0)
        players = [fixture_player(20 + 15 * k, 30 + rng.uniform(0, 20), "AB"[k % 2], k)
                   for k in range(5)]
        pyr = compose_scene_masks(players, 128, 128)
        assert (pyr.instances.sum(axis=0) <= 1).all()
        np.testing.assert_array_equal(pyr.team_a | pyr.team_b, pyr.player_mask)

    def test_duplicate_depth_rejected(self):
        players = [fixture_player(20, 30, "A", 1), fixture_player(60, 60, "B", 1)]
        with pytest.raises(ValueError, match="depth"):
            compose_scene_masks(players, 96, 96)


class TestDownsample:
    def test_constant_preserved(self):
        m = np.full((8, 8), 0.7, np.float32)
        np.testing.assert_allclose(downsample_mask(m, 4), 0.7, rtol=1e-6)

    def test_factor_one_identity(self):
        m = np.random.default_rng(0).random((6, 6)).astype(np.float32)
        np.testing.assert_array_equal(downsample_mask(m, 1), m)

    def test_quarter_block(self):
        m = np.array([[1, 1], [0, 0]], np.float32)
        np.testing.assert_allclose(downsample_mask(m, 2), [[0.5]])

    def test_mean_preserved(self):
        m = np.random.default_rng(1).random((32, 32)).astype(np.float32)
        for f in (2, 4, 8):
            np.testing.assert_allclose(downsample_mask(m, f).mean(), m.mean(), atol=1e-6)

    def test_indivisible_rejected(self):
        with pytest.raises(ValueError):
            downsample_mask(np.zeros((9, 9), np.float32), 4)


class TestGenerate:
    def test_deterministic(self):
        cfg = SceneConfig()
        a = generate_scene(123, cfg)
        b = generate_scene(123, cfg)
        assert np.array_equal(a.image, b.image)
        assert a.game_id == b.game_id and a.arena_id == b.arena_id
        assert all(pa.keypoints().tolist() == pb.keypoints().tolist()
                   for pa, pb in zip(a.players, b.players))

    def test_palette_respects_delta_e_min(self):
        for cfg in (SceneConfig(), SceneConfig.low_contrast()):
            for a, b in jersey_palette(cfg):
                de = delta_e(a, b)
                assert de >= cfg.delta_e_min - 1e-9
                if cfg.delta_e_max is not None:
                    assert de <= cfg.delta_e_max + 1e-9

    def test_player_count_histogram_uniform(self):
        cfg = SceneConfig()
        lo, hi = cfg.players_per_team
        counts = []
        for i in range(200):
            scene = generate_scene([11, i], cfg)
            counts.append(sum(1 for p in scene.players if p.team == "A"))
            counts.append(sum(1 for p in scene.players if p.team == "B"))
        observed = np.bincount(counts, minlength=hi + 1)[lo:hi + 1]
        expected = np.full(hi - lo + 1, len(counts) / (hi - lo + 1))
        assert stats.chisquare(observed, expected).pvalue > 0.01

    def test_keypoints_within_margin(self):
        cfg = SceneConfig()
        for i in range(20):
            scene = generate_scene([3, i], cfg)
            for p in scene.players:
                p.validate(*scene.shape)

    def test_game_and_arena_ids_in_range(self):
        cfg = SceneConfig(n_games=4, n_arenas=3)
        ids = {(s.game_id, s.arena_id) for s in generate_corpus(cfg, 40, 5)}
        for g, a in ids:
            assert int(g.replace("game", "")) < 4
            assert int(a.replace("arena", "")) < 3


class TestAugment:
    def setup_method(self):
        self.scene = generate_scene(9, SceneConfig())

    def test_double_mirror_identity(self):
        params = AugmentParams(mirror=True, scale=1.0)
        once = apply_augment(self.scene, params, 128)
        mirrored_scene = type(self.scene)(image=once.image, players=once.players,
                                          game_id="g", arena_id="a")
        twice = apply_augment(mirrored_scene, params, 128)
        np.testing.assert_array_equal(twice.image, self.scene.image)

    def test_mirror_preserves_mask_area(self):
        base = compose_scene_masks(self.scene.players, *self.scene.shape)
        out = apply_augment(self.scene, AugmentParams(mirror=True, scale=1.0), 128)
        assert out.pyramid.player_mask.sum() == base.player_mask.sum()

    def test_rotation_keeps_centered_keypoints_inside(self):
        # transform the keypoints analytically and compare against the matrix
        params = AugmentParams(angle_deg=10.0, scale=1.0)
        out = apply_augment(self.scene, params, 128)
        th = np.radians(10.0)
        c = (128 - 1) / 2.0
        for orig, moved in zip(self.scene.players, out.players):
            x, y = orig.pelvis
            ex = np.cos(th) * (x - c) - np.sin(th) * (y - c) + c
            ey = np.sin(th) * (x - c) + np.cos(th) * (y - c) + c
            np.testing.assert_allclose(moved.pelvis, (ex, ey), atol=1e-6)

    def test_keypoints_land_in_instances(self):
        rng = np.random.default_rng(5)
        hits = total = 0
        for trial in range(20):
            out = augment(self.scene, rng, 128)
            base = compose_scene_masks(self.scene.players, *self.scene.shape)
            for k, moved in enumerate(out.players):
                if not base.instances[k].any() or not out.pyramid.instances[k].any():
                    continue
                x, y = moved.pelvis
                i, j = int(round(y)), int(round(x))
                if 1 <= i < 127 and 1 <= j < 127:
                    total += 1
                    hits += out.pyramid.instances[k][i - 1:i + 2, j - 1:j + 2].any()
        assert total > 0 and hits / total >= 0.97

    def test_instances_stay_disjoint(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            out = augment(self.scene, rng, 128)
            assert (out.pyramid.instances.sum(axis=0) <= 1).all()

    def test_team_sets_disjoint_after_augment(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            out = augment(self.scene, rng, 128)
            a, b = out.pyramid.team_coords(4)
            seen = {tuple(c) for c in a}
            assert not any(tuple(c) in seen for c in b)

    def test_padding_recorded_when_scaled_down(self):
        params = AugmentParams(scale=0.7)
        params.padded = True
        params.crop_x = params.crop_y = (128 * 0.7 - 128) / 2
        out = apply_augment(self.scene, params, 128)
        assert out.image.shape == (128, 128, 3)
        assert out.params.padded


class TestSceneIO:
    def test_round_trip(self, tmp_path):
        scene = generate_scene(4, SceneConfig())
        save_scene(scene, tmp_path / "s.png", tmp_path / "s.json")
        back = load_scene(tmp_path / "s.json")
        assert np.array_equal(back.image, scene.image)
        assert back.game_id == scene.game_id and back.arena_id == scene.arena_id
        for pa, pb in zip(scene.players, back.players):
            assert pa.team == pb.team and pa.depth_rank == pb.depth_rank
            np.testing.assert_allclose(pa.keypoints(), pb.keypoints())

    def test_ppm_fallback(self, tmp_path):
        scene = generate_scene(5, SceneConfig())
        save_scene(scene, tmp_path / "s.ppm", tmp_path / "s.json")
        back = load_scene(tmp_path / "s.json")
        assert np.array_equal(back.image, scene.image)

    def test_corpus_round_trip(self, tmp_path):
        scenes = generate_corpus(SceneConfig(), 4, 1)
        save_corpus(scenes, tmp_path)
        back = load_corpus(tmp_path)
        assert len(back) == 4
        assert all(np.array_equal(a.image, b.image) for a, b in zip(scenes, back))

    def test_missing_corpus_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nope")

    def test_annotation_schema(self, tmp_path):
        import json
        scene = generate_scene(6, SceneConfig())
        save_scene(scene, tmp_path / "s.png", tmp_path / "s.json")
        doc = json.loads((tmp_path / "s.json").read_text())
        assert set(doc) == {"game_id", "arena_id", "image", "players"}
        for p in doc["players"]:
            assert set(p) == {"head", "pelvis", "foot_l", "foot_r", "team", "depth"}
            assert p["team"] in ("A", "B")
