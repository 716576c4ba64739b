import numpy as np
import pytest
import scipy.fft
import torch

from echo_motion.datasets import build_dataset
from echo_motion.errors import DataError
from echo_motion.metrics import zero_velocity_baseline
from echo_motion.model import (
    EchoModel,
    ModelConfig,
    dct_transform,
    echo_forward,
    idct_transform,
    sample_to_tensors,
    sinusoidal_embedding,
)


def make_config(**kw) -> ModelConfig:
    base = dict(
        seq_len=8,
        agent_dims=(15, 15),
        d_model=32,
        n_layers_sa=2,
        n_heads=4,
        k_mlp=2,
        mlp_expansion=2,
        k_refine=2,
        dropout=0.0,
    )
    base.update(kw)
    return ModelConfig(**base)


def make_model(seed=0, vocab=None, **kw) -> EchoModel:
    torch.manual_seed(seed)
    vocab = vocab if vocab is not None else {"handshake": 0, "mirror": 1, "circle": 2}
    return EchoModel(make_config(**kw), vocab)


def randomize(model: EchoModel, seed: int, scale: float = 0.2) -> EchoModel:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * scale)
    return model


def tiny_samples(n=4, frames=8, observed=4):
    return build_dataset(
        {
            "type": "synthetic",
            "kinds": ["mirror", "handshake", "circle"],
            "num_scenes": n,
            "frames": frames,
            "observed_len": observed,
            "seed": 0,
        }
    )


class TestModelConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            make_config(d_model=30, n_heads=4)

    def test_round_trip(self):
        cfg = make_config(use_dct=True)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_negative_refine(self):
        with pytest.raises(ValueError, match="k_refine"):
            make_config(k_refine=-1)


class TestPoseEncoder:
    def test_identical_frames_identical_tokens(self):
        model = make_model()
        x = torch.randn(1, 1, 15).repeat(1, 8, 1)
        e = model.encode_poses(x, 0)
        assert torch.equal(e[:, 0], e[:, 5])

    def test_output_shape(self):
        model = make_model()
        e = model.encode_poses(torch.randn(3, 8, 15), 0)
        assert e.shape == (3, 8, 32)

    def test_zero_parameters_zero_tokens(self):
        model = make_model()
        with torch.no_grad():
            for p in model.encoders[0].parameters():
                p.zero_()
        e = model.encode_poses(torch.randn(2, 8, 15), 0)
        assert torch.equal(e, torch.zeros_like(e))

    def test_width_mismatch(self):
        model = make_model()
        with pytest.raises(ValueError, match="width"):
            model.encode_poses(torch.randn(1, 8, 11), 0)


class TestSinusoidalEmbedding:
    def test_position_zero(self):
        table = sinusoidal_embedding(4, 8)
        assert np.array_equal(table[0, 0::2], np.zeros(4))
        assert np.array_equal(table[0, 1::2], np.ones(4))

    def test_range(self):
        table = sinusoidal_embedding(50, 16)
        assert np.all(table >= -1.0) and np.all(table <= 1.0)

    def test_wavelength_schedule(self):
        # independent recomputation from the closed form
        t_len, width = 12, 10
        table = sinusoidal_embedding(t_len, width)
        for pos in range(t_len):
            for d in range(width // 2):
                angle = pos / 10000 ** (2 * d / width)
                assert table[pos, 2 * d] == pytest.approx(np.sin(angle), abs=1e-12)
                assert table[pos, 2 * d + 1] == pytest.approx(np.cos(angle), abs=1e-12)

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError, match="even"):
            sinusoidal_embedding(4, 7)


class TestIntentEmbedding:
    def test_deterministic(self):
        model = make_model()
        a = model.embed_intent("handshake")
        b = model.embed_intent("handshake")
        assert torch.equal(a, b)

    def test_unknown_label(self):
        model = make_model()
        with pytest.raises(DataError, match="tango"):
            model.embed_intent("tango")

    def test_precomputed_vectors_projected(self):
        torch.manual_seed(0)
        vectors = np.random.default_rng(0).normal(size=(2, 512))
        model = EchoModel(
            make_config(), {"a": 0, "b": 1}, intent_vectors=vectors
        )
        va = model.embed_intent("a")
        assert va.shape == (32,)
        assert torch.equal(va, model.embed_intent("a"))
        assert not torch.equal(va, model.embed_intent("b"))

    def test_text_off_uses_null_token(self):
        model = make_model(use_text=False)
        idx = torch.tensor([0, 1])
        out = model.intent(idx)
        assert torch.equal(out[0], out[1])


class TestSingleMotionEncode:
    def test_shape(self):
        model = make_model()
        e = torch.randn(2, 8, 32)
        out = model.single_motion_encode(e, torch.randn(2, 32))
        assert out.shape == (2, 9, 32)

    def test_identity_at_init(self):
        model = make_model()
        e = torch.randn(1, 8, 32)
        intent = torch.randn(1, 32)
        out = model.single_motion_encode(e, intent)
        expected = torch.cat(
            [intent.unsqueeze(1), e + model.pos_embedding.to(e.dtype)], dim=1
        )
        assert torch.equal(out, expected)

    def test_permutation_sensitivity(self):
        model = randomize(make_model(), seed=3)
        e = torch.randn(1, 8, 32)
        intent = torch.randn(1, 32)
        swapped = e.clone()
        swapped[:, [0, 1]] = e[:, [1, 0]]
        out = model.single_motion_encode(e, intent)
        out_swapped = model.single_motion_encode(swapped, intent)
        assert not torch.allclose(out, out_swapped)

    def test_token_count_mismatch(self):
        model = make_model()
        with pytest.raises(ValueError, match="pose tokens"):
            model.single_motion_encode(torch.randn(1, 5, 32), torch.randn(1, 32))


class TestTemporalSmooth:
    def test_zero_layers_identity(self):
        model = make_model(k_mlp=0)
        e = torch.randn(2, 9, 32)
        assert torch.equal(model.temporal_smooth(e), e)

    def test_identity_at_init(self):
        model = make_model(k_mlp=3)
        e = torch.randn(2, 9, 32)
        assert torch.equal(model.temporal_smooth(e), e)

    def test_shape_preserved(self):
        model = randomize(make_model(k_mlp=2), seed=1)
        e = torch.randn(3, 9, 32)
        assert model.temporal_smooth(e).shape == e.shape


class TestSocialRefine:
    def test_no_iterations_unchanged(self):
        model = randomize(make_model(k_refine=0), seed=2)
        e0, e1 = torch.randn(1, 9, 32), torch.randn(1, 9, 32)
        r0, r1 = model.social_refine(e0, e1)
        assert torch.equal(r0, e0) and torch.equal(r1, e1)

    def test_identity_at_init(self):
        model = make_model(k_refine=3)
        e0, e1 = torch.randn(1, 9, 32), torch.randn(1, 9, 32)
        r0, r1 = model.social_refine(e0, e1)
        assert torch.equal(r0, e0) and torch.equal(r1, e1)

    def test_deterministic(self):
        e0, e1 = torch.randn(1, 9, 32), torch.randn(1, 9, 32)
        a = randomize(make_model(k_refine=2), seed=5).social_refine(e0, e1)
        b = randomize(make_model(k_refine=2), seed=5).social_refine(e0, e1)
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])

    def test_shape_mismatch(self):
        model = make_model()
        with pytest.raises(ValueError, match="shapes differ"):
            model.social_refine(torch.randn(1, 9, 32), torch.randn(1, 8, 32))


class TestDecodePoses:
    def test_zero_decoder_residual_on(self):
        model = make_model()
        e = torch.randn(1, 9, 32)
        x_ref = torch.randn(1, 1, 15)
        out = model.decode_poses(e, x_ref, 0)
        assert torch.equal(out, x_ref.expand(1, 8, 15))

    def test_zero_decoder_residual_off(self):
        model = make_model(use_residual_baseline=False)
        out = model.decode_poses(torch.randn(1, 9, 32), None, 0)
        assert torch.equal(out, torch.zeros(1, 8, 15))

    def test_output_length(self):
        model = randomize(make_model(), seed=4)
        out = model.decode_poses(torch.randn(2, 9, 32), torch.randn(2, 1, 15), 0)
        assert out.shape == (2, 8, 15)

    def test_missing_intent_token(self):
        model = make_model()
        with pytest.raises(ValueError, match="intent token"):
            model.decode_poses(torch.randn(1, 8, 32), torch.randn(1, 1, 15), 0)


class TestDct:
    def test_constant_sequence_dc_only(self):
        x = np.full((6, 3), 2.5)
        coef = dct_transform(x)
        assert np.allclose(coef[0], 2.5 * np.sqrt(6), atol=1e-12)
        assert np.allclose(coef[1:], 0.0, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=(rng.integers(1, 33), 4))
            assert np.allclose(idct_transform(dct_transform(x)), x, atol=1e-6)

    def test_parseval(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(16, 5))
        coef = dct_transform(x)
        assert np.isclose((coef**2).sum(), (x**2).sum(), rtol=1e-6)

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(12, 3))
        expected = scipy.fft.dct(x, type=2, axis=0, norm="ortho")
        assert np.allclose(dct_transform(x), expected, atol=1e-12)
        assert np.allclose(
            idct_transform(x), scipy.fft.idct(x, type=2, axis=0, norm="ortho"), atol=1e-12
        )


class TestEchoForward:
    def test_init_equals_zero_velocity(self):
        model = make_model().double()
        for sample in tiny_samples():
            result = echo_forward(sample, model)
            baseline = zero_velocity_baseline(sample)
            for pred, base in zip(result.predictions, baseline):
                assert np.array_equal(pred.values, base.values)

    def test_shapes(self):
        model = randomize(make_model(), seed=6)
        sample = tiny_samples(1)[0]
        result = echo_forward(sample, model)
        for pred, target in zip(result.predictions, sample.target):
            assert pred.values.shape == target.values.shape
        for e in result.e_ind + result.e_soc:
            assert e.shape == (9, 32)

    def test_dct_toggle_changes_output(self):
        sample = tiny_samples(1)[0]
        plain = randomize(make_model(use_dct=False), seed=7)
        dct = randomize(make_model(use_dct=True), seed=7)
        out_plain = echo_forward(sample, plain)
        out_dct = echo_forward(sample, dct)
        assert out_plain.predictions[0].values.shape == out_dct.predictions[0].values.shape
        assert not np.allclose(
            out_plain.predictions[0].values, out_dct.predictions[0].values
        )

    def test_translation_equivariance_at_init(self):
        model = make_model().double()
        sample = tiny_samples(1)[0]
        result = echo_forward(sample, model)

        shifted = build_dataset(
            {
                "type": "synthetic",
                "kinds": ["mirror", "handshake", "circle"],
                "num_scenes": 1,
                "frames": 8,
                "observed_len": 4,
                "seed": 0,
            }
        )[0]
        offset = np.array([100.0, -50.0, 25.0])
        from echo_motion.core_types import Motion
        from echo_motion.datasets import TrainingSample

        moved = TrainingSample(
            tuple(
                Motion(m.values + offset, m.representation, m.fps)
                for m in shifted.x_ind
            ),
            tuple(
                type(p)(p.values + offset, p.representation) for p in shifted.x_ref
            ),
            tuple(
                Motion(m.values + offset, m.representation, m.fps)
                for m in shifted.target
            ),
            shifted.intent,
            shifted.observed_len,
        )
        moved_result = echo_forward(moved, model)
        for a, b in zip(result.predictions, moved_result.predictions):
            assert np.allclose(b.values - a.values, offset, atol=1e-9)

    def test_deterministic_rebuild(self):
        sample = tiny_samples(1)[0]
        a = echo_forward(sample, make_model(seed=11))
        b = echo_forward(sample, make_model(seed=11))
        for pa, pb in zip(a.predictions, b.predictions):
            assert np.array_equal(pa.values, pb.values)

    def test_heterogeneous_agent_dims(self):
        torch.manual_seed(0)
        cfg = make_config(agent_dims=(15, 7))
        model = EchoModel(cfg, {"assembly": 0})
        x = [torch.randn(2, 8, 15), torch.randn(2, 8, 7)]
        out = model(x, torch.zeros(2, dtype=torch.long))
        assert out["pred"][0].shape == (2, 8, 15)
        assert out["pred"][1].shape == (2, 8, 7)
