import numpy as np
import pytest
import torch

from gradient_utils import fd_check
from scenefusion import fusion
from scenefusion.errors import ConfigError, ValidationError
from scenefusion.fusion import (
    ConvLSTMEncoder,
    DenseEncoder,
    FusionModelConfig,
    Head,
    SeqEncoder,
    build_model,
    classify_head,
    early_fuse,
    encode_modality,
    joint_fuse,
    late_fuse,
    load_checkpoint,
    parameter_shapes,
    save_checkpoint,
)

CLASSES = tuple(f"c{i}" for i in range(9))


def joint_config(**kw):
    defaults = dict(fusion="joint", text_kind="count_vect", visual_kind="imgn_feat")
    defaults.update(kw)
    return FusionModelConfig(**defaults)


class TestEarlyFuse:
    def test_interleaved_layout(self):
        np.testing.assert_array_equal(early_fuse([1, 2], [3, 4]), [1, 3, 2, 4])

    def test_shorter_is_zero_padded(self):
        np.testing.assert_array_equal(early_fuse([1], [3, 4]), [1, 3, 0, 4])

    def test_zero_text_leaves_odd_positions(self):
        v = np.array([5.0, 6.0, 7.0])
        out = early_fuse(np.zeros(3), v)
        assert not out[0::2].any()
        np.testing.assert_array_equal(out[1::2], v)

    def test_flattens_multiaxis_input(self):
        out = early_fuse(np.arange(6).reshape(2, 3), np.zeros(6))
        np.testing.assert_array_equal(out[0::2], np.arange(6))

    def test_injective_for_fixed_lengths(self):
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(200):
            t, v = rng.integers(0, 5, 3), rng.integers(0, 5, 3)
            seen.add(tuple(early_fuse(t, v)))
        # 200 random draws from a space of 15625 pairs; collisions would
        # show as far fewer distinct outputs than distinct inputs
        assert len(seen) >= 190


class TestJointFuse:
    def test_alternating_pattern(self):
        out = joint_fuse(np.ones(512), np.zeros(512))
        assert out.shape == (1024,)
        np.testing.assert_array_equal(out[0::2], 1)
        np.testing.assert_array_equal(out[1::2], 0)

    def test_zero_inputs(self):
        assert not joint_fuse(np.zeros(512), np.zeros(512)).any()

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            joint_fuse(np.zeros(512), np.zeros(100))


class TestLateFuse:
    def test_tie_breaks_to_lowest_index(self):
        p_t = np.eye(9)[0]
        p_v = np.eye(9)[1]
        aggregate, winner = late_fuse(p_t, p_v)
        np.testing.assert_array_equal(aggregate[:3], [1, 1, 0])
        assert winner == 0

    def test_uniform_inputs(self):
        aggregate, winner = late_fuse(np.full(9, 1 / 9), np.full(9, 1 / 9))
        np.testing.assert_allclose(aggregate, 2 / 9)
        assert winner == 0

    def test_arithmetic(self):
        p_t = np.array([0.6, 0.4] + [0] * 7)
        p_v = np.array([0.1, 0.8, 0.1] + [0] * 6)
        aggregate, winner = late_fuse(p_t, p_v)
        np.testing.assert_allclose(aggregate[:3], [0.7, 1.2, 0.1])
        assert winner == 1

    def test_aggregate_symmetric(self, random_prob_vector):
        for _ in range(50):
            a, b = random_prob_vector(), random_prob_vector()
            agg_ab, _ = late_fuse(a, b)
            agg_ba, _ = late_fuse(b, a)
            np.testing.assert_array_equal(agg_ab, agg_ba)


class TestConfigValidation:
    def test_early_plus_frames_rejected(self):
        with pytest.raises(ConfigError, match="frames cannot be used"):
            FusionModelConfig("early", text_kind="w2v_sum", visual_kind="frames")

    def test_single_text_needs_exactly_text(self):
        with pytest.raises(ConfigError):
            FusionModelConfig("single_text", text_kind="w2v_sum", visual_kind="imgn_feat")
        with pytest.raises(ConfigError):
            FusionModelConfig("single_text")

    def test_multimodal_needs_both_kinds(self):
        with pytest.raises(ConfigError):
            FusionModelConfig("joint", text_kind="w2v_sum")

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            FusionModelConfig("middle", text_kind="w2v_sum", visual_kind="imgn_feat")


class TestBuildModel:
    def test_same_seed_identical_parameters(self):
        a = build_model(joint_config(), 42, CLASSES)
        b = build_model(joint_config(), 42, CLASSES)
        for pa, pb in zip(a.net.parameters(), b.net.parameters()):
            torch.testing.assert_close(pa, pb, rtol=0, atol=0)

    def test_different_seed_differs(self):
        a = build_model(joint_config(), 1, CLASSES)
        b = build_model(joint_config(), 2, CLASSES)
        assert any(
            not torch.equal(pa, pb)
            for pa, pb in zip(a.net.parameters(), b.net.parameters())
        )

    def test_joint_parameter_shape_table(self):
        model = build_model(joint_config(), 0, CLASSES)
        shapes = parameter_shapes(model)
        assert shapes == {
            "text_encoder.lstm.weight_ih_l0": (2048, 1),
            "text_encoder.lstm.weight_hh_l0": (2048, 512),
            "text_encoder.lstm.bias_ih_l0": (2048,),
            "text_encoder.lstm.bias_hh_l0": (2048,),
            "visual_encoder.fc.weight": (512, 1000),
            "visual_encoder.fc.bias": (512,),
            "head.fc1.weight": (256, 1024),
            "head.fc1.bias": (256,),
            "head.fc2.weight": (128, 256),
            "head.fc2.bias": (128,),
            "head.out.weight": (9, 128),
            "head.out.bias": (9,),
        }

    def test_class_count_mismatch(self):
        with pytest.raises(ConfigError):
            build_model(joint_config(), 0, ("a", "b"))


class TestClassifyHead:
    def test_probability_simplex_output(self):
        head = Head(16, (8, 4), 9).double()
        out = classify_head(head, np.random.default_rng(0).normal(size=(5, 16)))
        assert out.shape == (5, 9)
        assert out.min() >= 0
        np.testing.assert_allclose(out.sum(axis=1), 1, atol=1e-5)

    def test_zero_parameters_give_uniform(self):
        head = Head(16, (8, 4), 9)
        for p in head.parameters():
            torch.nn.init.zeros_(p)
        out = classify_head(head, np.ones((1, 16)))
        np.testing.assert_allclose(out, 1 / 9, atol=1e-6)


class TestForward:
    def _batch(self, n, rng):
        text = rng.integers(0, 100, size=(n, 100)).astype(np.float32)
        vis = rng.random((n, 1000)).astype(np.float32)
        return text, vis

    def test_batch_of_sixteen_order_preserved(self):
        rng = np.random.default_rng(3)
        model = build_model(joint_config(), 0, CLASSES)
        text, vis = self._batch(16, rng)
        probs = fusion.forward(model, text, vis)
        assert probs.shape == (16, 9)
        perm = rng.permutation(16)
        probs_perm = fusion.forward(model, text[perm], vis[perm])
        np.testing.assert_allclose(probs[perm], probs_perm, atol=1e-6)

    def test_single_sample(self):
        model = build_model(joint_config(), 0, CLASSES)
        text, vis = self._batch(1, np.random.default_rng(4))
        probs = fusion.forward(model, text, vis)
        assert probs.shape == (1, 9)
        assert abs(probs.sum() - 1) <= 1e-5

    def test_late_forward_is_halved_aggregate(self):
        cfg = FusionModelConfig("late", text_kind="w2v_sum", visual_kind="imgn_feat")
        model = build_model(cfg, 0, CLASSES)
        rng = np.random.default_rng(5)
        text = rng.random((4, 100)).astype(np.float32)
        vis = rng.random((4, 1000)).astype(np.float32)
        probs = fusion.forward(model, text, vis)
        np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-5)
        with torch.no_grad():
            p_t, p_v = model.net.branch_probs(*fusion._net_inputs(model, text, vis))
        np.testing.assert_allclose(probs, (p_t + p_v).numpy() / 2, atol=1e-6)

    def test_joint_forward_matches_fuse_then_head(self):
        model = build_model(joint_config(), 7, CLASSES)
        rng = np.random.default_rng(6)
        text, vis = self._batch(3, rng)
        probs = fusion.forward(model, text, vis)
        g_t = encode_modality(model, "text", text)
        g_v = encode_modality(model, "visual", vis)
        for i in range(3):
            fused = joint_fuse(g_t[i], g_v[i])
            np.testing.assert_allclose(
                probs[i], classify_head(model.net.head, fused[None, :])[0], atol=1e-5
            )

    def test_encoder_outputs_differ_for_different_inputs(self):
        model = build_model(joint_config(), 0, CLASSES)
        rng = np.random.default_rng(7)
        vis = rng.random((2, 1000)).astype(np.float32)
        g = encode_modality(model, "visual", vis)
        assert g.shape == (2, 512)
        assert not np.allclose(g[0], g[1])

    def test_frames_encoder_descriptor_length(self):
        cfg = FusionModelConfig(
            "single_visual", visual_kind="frames", encoder_units=32, conv_spatial_pool=8
        )
        model = build_model(cfg, 0, CLASSES)
        frames = np.random.default_rng(8).random((2, 10, 64, 64, 3)).astype(np.float32)
        with torch.no_grad():
            desc = model.net.encoder(fusion.prep_visual("frames", frames))
        assert desc.shape == (2, 32)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        model = build_model(joint_config(), 3, CLASSES)
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == model.config
        assert loaded.classes == CLASSES
        for pa, pb in zip(model.net.parameters(), loaded.net.parameters()):
            torch.testing.assert_close(pa, pb, rtol=0, atol=0)

    def test_version_mismatch_fails_loudly(self, tmp_path):
        model = build_model(joint_config(), 3, CLASSES)
        path = tmp_path / "model.pt"
        save_checkpoint(model, path)
        payload = torch.load(path, weights_only=False)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(ConfigError, match="format version"):
            load_checkpoint(path)


class TestGradients:
    """Analytic (autograd) vs central finite differences, per block."""

    def _loss_through_ce(self, out, target=2):
        clamped = out.clamp(min=1e-12)
        return -clamped[:, target].log().sum()

    def test_head_gradients(self):
        for seed in range(5):
            torch.manual_seed(seed)
            head = Head(6, (5, 4), 9)
            x = torch.randn(3, 6, dtype=torch.float64)
            fd_check(head, lambda m: self._loss_through_ce(m(x)), seed)

    def test_dense_encoder_gradients(self):
        for seed in range(5):
            torch.manual_seed(seed)
            enc = DenseEncoder(7, 5)
            x = torch.randn(3, 7, dtype=torch.float64)
            w = torch.randn(5, dtype=torch.float64)
            fd_check(enc, lambda m: (m(x) * w).sum(), seed)

    def test_seq_encoder_gradients(self):
        for seed in range(5):
            torch.manual_seed(seed)
            enc = SeqEncoder(4, 6)
            x = torch.randn(2, 5, 4, dtype=torch.float64)
            w = torch.randn(6, dtype=torch.float64)
            fd_check(enc, lambda m: (m(x) * w).sum(), seed, n_coords=10)

    def test_convlstm_encoder_gradients(self):
        for seed in range(5):
            torch.manual_seed(seed)
            enc = ConvLSTMEncoder(3, 4, 3, spatial_pool=1)
            x = torch.randn(1, 2, 3, 6, 6, dtype=torch.float64)
            w = torch.randn(4, dtype=torch.float64)
            fd_check(enc, lambda m: (m(x) * w).sum(), seed, n_coords=10)
