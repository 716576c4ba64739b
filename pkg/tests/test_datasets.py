import numpy as np
import pytest

from echo_motion.core_types import (
    Motion,
    Representation,
    motion_bone_lengths,
    skeleton_toy5,
)
from echo_motion.datasets import (
    MIRROR_DELAY,
    build_dataset,
    load_chico_sequence,
    load_scene_file,
    pad_observation,
    protocol_window,
    save_scene_file,
    synthesize_dyadic_scene,
    window_scene,
)
from echo_motion.errors import DataError


def make_motion(values, fps=30.0):
    return Motion(np.asarray(values, dtype=np.float64), Representation.EUCLIDEAN_XYZ, fps)


class TestPadObservation:
    def test_repeats_last_pose(self):
        a = [[[0.0, 0, 0]]]
        b = [[[1.0, 2, 3]]]
        past = make_motion(np.concatenate([a, b]))
        padded = pad_observation(past, 4)
        assert padded.num_frames == 4
        assert np.array_equal(padded.values[0], np.array(a[0]))
        for t in range(1, 4):
            assert np.array_equal(padded.values[t], np.array(b[0]))

    def test_full_length_unchanged(self):
        past = make_motion(np.arange(24, dtype=float).reshape(4, 2, 3))
        assert pad_observation(past, 4) is past

    def test_prefix_equals_past(self):
        rng = np.random.default_rng(1)
        past = make_motion(rng.normal(size=(5, 3, 3)))
        padded = pad_observation(past, 9)
        assert np.array_equal(padded.values[:5], past.values)

    def test_too_long_rejected(self):
        past = make_motion(np.zeros((5, 2, 3)))
        with pytest.raises(ValueError, match="exceeds"):
            pad_observation(past, 3)


class TestSyntheticScenes:
    @pytest.mark.parametrize("kind", ["handshake", "mirror", "circle"])
    def test_deterministic(self, kind):
        a = synthesize_dyadic_scene(kind, 7, 12)
        b = synthesize_dyadic_scene(kind, 7, 12)
        for m0, m1 in zip(a.agents, b.agents):
            assert np.array_equal(m0.values, m1.values)
        assert a.intent == kind

    def test_mirror_formula(self):
        scene = synthesize_dyadic_scene("mirror", 3, 16)
        lead, follow = (a.values for a in scene.agents)
        for t in range(16):
            src = max(t - MIRROR_DELAY, 0)
            expected = lead[src].copy()
            expected[:, 0] *= -1.0
            assert np.array_equal(follow[t], expected)

    def test_handshake_roots_converge(self):
        scene = synthesize_dyadic_scene("handshake", 11, 20)
        r0 = scene.agents[0].values[:, 0]
        r1 = scene.agents[1].values[:, 0]
        dist = np.linalg.norm(r0 - r1, axis=1)
        assert np.all(np.diff(dist) < 0)

    def test_circle_half_turn(self):
        scene = synthesize_dyadic_scene("circle", 5, 10)
        center = np.array([0.0, 0.0, 900.0])
        a0 = scene.agents[0].values - center
        a1 = scene.agents[1].values - center
        rotated = a0.copy()
        rotated[..., 0] *= -1.0
        rotated[..., 1] *= -1.0
        assert np.allclose(a1, rotated, atol=1e-9)

    @pytest.mark.parametrize("kind", ["handshake", "mirror", "circle"])
    def test_bone_lengths_rigid(self, kind):
        skel = skeleton_toy5()
        scene = synthesize_dyadic_scene(kind, 2, 15, skeleton=skel)
        for agent in scene.agents:
            lengths = motion_bone_lengths(agent, skel)
            spread = lengths.max(axis=0) - lengths.min(axis=0)
            assert np.all(spread / lengths.mean(axis=0) < 1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown scene kind"):
            synthesize_dyadic_scene("tango", 0, 10)


class TestWindowScene:
    def test_padding_property(self):
        scene = synthesize_dyadic_scene("mirror", 0, 16)
        sample = window_scene(scene, 6, 12)
        for agent_idx in range(2):
            padded = sample.x_ind[agent_idx].values
            for t in range(5, 12):
                assert np.array_equal(padded[t], padded[5])
            assert np.array_equal(sample.x_ref[agent_idx].values, padded[5])
            assert np.array_equal(
                padded[:6], scene.agents[agent_idx].values[:6]
            )
            assert np.array_equal(
                sample.target[agent_idx].values, scene.agents[agent_idx].values[:12]
            )

    def test_intergen_protocol_split(self):
        assert protocol_window(0.5, 1.5, 30.0) == (15, 60)

    def test_chico_protocol_split(self):
        assert protocol_window(0.4, 1.0, 25.0) == (10, 35)
        with pytest.raises(ValueError, match="integer frame"):
            protocol_window(0.4, 1.0, 24.0)

    def test_scene_too_short(self):
        scene = synthesize_dyadic_scene("circle", 0, 10)
        with pytest.raises(ValueError, match="frames"):
            window_scene(scene, 4, 11)


class TestSceneFiles:
    def test_round_trip(self, tmp_path):
        scene = synthesize_dyadic_scene("handshake", 4, 12)
        path = tmp_path / "scene.json"
        save_scene_file(scene, path)
        loaded = load_scene_file(path)
        assert loaded.num_frames == 12
        assert loaded.intent == "handshake"
        for a, b in zip(loaded.agents, scene.agents):
            assert np.allclose(a.values, b.values)

    def test_single_agent_rejected(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text(
            '{"fps": 30, "intent": "solo", "observed_len": 2, '
            '"agents": [{"id": 0, "representation": "euclidean_xyz", '
            '"frames": [[[0,0,0]],[[1,1,1]],[[2,2,2]],[[3,3,3]]]}]}'
        )
        with pytest.raises(DataError, match="dyadic"):
            load_scene_file(path)

    def test_length_mismatch_rejected(self, tmp_path):
        path = tmp_path / "mismatch.json"
        path.write_text(
            '{"fps": 30, "intent": "x", "observed_len": 1, "agents": ['
            '{"id": 0, "representation": "euclidean_xyz", "frames": [[[0,0,0]],[[1,1,1]]]},'
            '{"id": 1, "representation": "euclidean_xyz", "frames": [[[0,0,0]]]}]}'
        )
        with pytest.raises(DataError, match="mismatched frame counts"):
            load_scene_file(path)

    def test_chico_heterogeneous_accepted(self, tmp_path):
        rng = np.random.default_rng(0)
        human = rng.normal(size=(8, 15, 3)).tolist()
        robot = rng.normal(size=(8, 7)).tolist()
        path = tmp_path / "chico.json"
        path.write_text(
            str(
                {
                    "fps": 25,
                    "intent": "assembly",
                    "observed_len": 3,
                    "agents": [
                        {"id": 0, "representation": "euclidean_xyz", "frames": human},
                        {"id": 1, "representation": "joint_angle", "frames": robot},
                    ],
                }
            ).replace("'", '"')
        )
        scene = load_chico_sequence(path)
        assert scene.agents[0].num_joints == 15
        assert scene.agents[1].num_joints == 7
        assert scene.agents[1].representation is Representation.JOINT_ANGLE

    def test_chico_missing_robot_stream(self, tmp_path):
        path = tmp_path / "no_robot.json"
        path.write_text(
            '{"fps": 25, "intent": "x", "observed_len": 1, "agents": ['
            '{"id": 0, "representation": "euclidean_xyz", "frames": [[[0,0,0]],[[1,1,1]]]},'
            '{"id": 1, "representation": "euclidean_xyz", "frames": [[[0,0,0]],[[1,1,1]]]}]}'
        )
        with pytest.raises(DataError, match="robot stream"):
            load_chico_sequence(path)

    def test_missing_fps_rejected(self, tmp_path):
        path = tmp_path / "no_fps.json"
        path.write_text('{"intent": "x", "observed_len": 1, "agents": []}')
        with pytest.raises(DataError, match="fps"):
            load_chico_sequence(path)


class TestBuildDataset:
    def test_synthetic_deterministic(self):
        spec = {
            "type": "synthetic",
            "kinds": ["mirror"],
            "num_scenes": 4,
            "frames": 12,
            "observed_len": 6,
            "seed": 3,
        }
        a = build_dataset(spec)
        b = build_dataset(spec)
        assert len(a) == 4
        for sa, sb in zip(a, b):
            for m0, m1 in zip(sa.target, sb.target):
                assert np.array_equal(m0.values, m1.values)

    def test_scene_dir(self, tmp_path):
        for i in range(3):
            save_scene_file(
                synthesize_dyadic_scene("circle", i, 12), tmp_path / f"s{i}.json"
            )
        samples = build_dataset({"type": "scene_dir", "path": str(tmp_path)})
        assert len(samples) == 3

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(DataError, match="no scene files"):
            build_dataset({"type": "scene_dir", "path": str(tmp_path)})

    def test_unknown_type(self):
        with pytest.raises(DataError, match="unknown dataset type"):
            build_dataset({"type": "video"})
