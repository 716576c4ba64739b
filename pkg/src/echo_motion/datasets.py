"""Training/evaluation sample production.

Covers the last-pose padding reformulation, a deterministic synthetic
dyadic-scene generator whose agent 1 is a rigid function of agent 0 (so
cross-agent refinement has something to learn), and loaders for
scene-export files and heterogeneous human+robot sequences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_types import (
    Motion,
    Pose,
    Representation,
    SkeletonSpec,
    SocialScene,
    resolve_skeleton,
    validate_motion,
)
from .errors import DataError

DEFAULT_FPS = 30.0

SCENE_KINDS = ("handshake", "mirror", "circle")

# Frames by which the "mirror" follower trails the lead agent.
MIRROR_DELAY = 4


@dataclass(frozen=True)
class TrainingSample:
    """One forecasting sample: padded inputs, reference poses, full targets."""

    x_ind: tuple[Motion, ...]  # per-agent padded motion, length T
    x_ref: tuple[Pose, ...]  # per-agent last observed pose
    target: tuple[Motion, ...]  # per-agent ground truth, length T
    intent: str
    observed_len: int

    def __post_init__(self):
        object.__setattr__(self, "x_ind", tuple(self.x_ind))
        object.__setattr__(self, "x_ref", tuple(self.x_ref))
        object.__setattr__(self, "target", tuple(self.target))

    @property
    def num_agents(self) -> int:
        return len(self.x_ind)

    @property
    def num_frames(self) -> int:
        return self.x_ind[0].num_frames


def pad_observation(past: Motion, total_frames: int) -> Motion:
    """Extend an observed motion to ``total_frames`` by repeating its last pose."""
    n = past.num_frames
    if n == 0:
        raise ValueError("cannot pad an empty motion")
    if n > total_frames:
        raise ValueError(f"observed length {n} exceeds target length {total_frames}")
    if n == total_frames:
        return past
    tail = np.repeat(past.values[-1:], total_frames - n, axis=0)
    return Motion(np.concatenate([past.values, tail]), past.representation, past.fps)


def window_scene(scene: SocialScene, observed_len: int, total_frames: int) -> TrainingSample:
    """Cut a scene into a training sample: pad the first ``observed_len``
    frames out to ``total_frames`` and keep the full window as the target."""
    if scene.num_frames < total_frames:
        raise ValueError(
            f"scene has {scene.num_frames} frames, need at least {total_frames}"
        )
    if not 1 <= observed_len < total_frames:
        raise ValueError(
            f"observed_len must lie in [1, {total_frames}), got {observed_len}"
        )
    x_ind, x_ref, target = [], [], []
    for agent in scene.agents:
        past = Motion(agent.values[:observed_len], agent.representation, agent.fps)
        padded = pad_observation(past, total_frames)
        x_ind.append(padded)
        x_ref.append(padded.frame(observed_len - 1))
        target.append(Motion(agent.values[:total_frames], agent.representation, agent.fps))
    return TrainingSample(tuple(x_ind), tuple(x_ref), tuple(target), scene.intent, observed_len)


def protocol_window(observed_s: float, future_s: float, fps: float) -> tuple[int, int]:
    """Convert an observed/future split in seconds to (N, T) frame counts."""
    n = observed_s * fps
    t = (observed_s + future_s) * fps
    if abs(n - round(n)) > 1e-9 or abs(t - round(t)) > 1e-9:
        raise ValueError(
            f"split {observed_s}s/{future_s}s is not an integer frame count at {fps} fps"
        )
    return int(round(n)), int(round(t))


# ---------------------------------------------------------------------------
# Synthetic dyadic scenes
#
# Agent 0 is animated by rigid forward kinematics over the skeleton tree:
# per-joint rotations follow seeded sinusoid mixtures, the root follows a
# kind-specific trajectory. Agent 1 is a rigid map of agent 0 (reflection,
# delayed reflection, or half-turn), so bone lengths stay exact and agent 1's
# future is a deterministic function of agent 0.


def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _animate_agent(
    skeleton: SkeletonSpec,
    root_path: np.ndarray,  # (T, 3)
    rng: np.random.Generator,
    num_frames: int,
) -> np.ndarray:
    """(T, J, 3) positions from seeded per-joint rotation sinusoids."""
    j = skeleton.num_joints
    axes = rng.normal(size=(j, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    amplitude = rng.uniform(0.2, 0.9, size=j)
    cycles = rng.uniform(0.5, 2.0, size=j)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=j)

    out = np.zeros((num_frames, j, 3))
    for t in range(num_frames):
        angles = amplitude * np.sin(2.0 * np.pi * cycles * t / num_frames + phase)
        rotations = np.zeros((j, 3, 3))
        for i in range(j):
            local = _rotation_about(axes[i], angles[i])
            p = skeleton.parents[i]
            rotations[i] = local if p == -1 else rotations[p] @ local
            if p == -1:
                out[t, i] = root_path[t]
            else:
                out[t, i] = out[t, p] + rotations[p] @ skeleton.rest_offsets_mm[i]
    return out


def _reflect_x(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[..., 0] *= -1.0
    return out


def synthesize_dyadic_scene(
    kind: str,
    seed: int,
    num_frames: int,
    fps: float = DEFAULT_FPS,
    skeleton: SkeletonSpec | None = None,
    observed_len: int | None = None,
) -> SocialScene:
    """Deterministically generate a two-agent scene of the given kind.

    kinds:
      - "mirror": agent 1 at frame t is agent 0 at frame t-MIRROR_DELAY
        (clamped at 0) reflected across the x=0 plane.
      - "handshake": roots approach each other along x; agent 1 is the
        synchronized reflection of agent 0.
      - "circle": agents orbit a common center half a turn apart; agent 1 is
        agent 0 rotated by pi about the center's vertical axis.
    """
    if kind not in SCENE_KINDS:
        raise ValueError(f"unknown scene kind '{kind}'; expected one of {SCENE_KINDS}")
    if skeleton is None:
        from .core_types import skeleton_toy5

        skeleton = skeleton_toy5()
    if observed_len is None:
        observed_len = max(1, num_frames // 2)

    rng = np.random.default_rng([SCENE_KINDS.index(kind), seed])
    t_axis = np.arange(num_frames, dtype=np.float64)

    if kind == "mirror":
        base = np.array([600.0, 0.0, 900.0])
        sway = np.stack(
            [
                40.0 * np.sin(2.0 * np.pi * rng.uniform(0.5, 1.5) * t_axis / num_frames + rng.uniform(0, 2 * np.pi)),
                40.0 * np.sin(2.0 * np.pi * rng.uniform(0.5, 1.5) * t_axis / num_frames + rng.uniform(0, 2 * np.pi)),
                15.0 * np.sin(2.0 * np.pi * rng.uniform(0.5, 1.5) * t_axis / num_frames + rng.uniform(0, 2 * np.pi)),
            ],
            axis=1,
        )
        agent0 = _animate_agent(skeleton, base + sway, rng, num_frames)
        source = np.maximum(t_axis.astype(int) - MIRROR_DELAY, 0)
        agent1 = _reflect_x(agent0[source])
    elif kind == "handshake":
        start_x, final_x = 800.0, 150.0
        x_path = start_x - (start_x - final_x) * t_axis / max(num_frames - 1, 1)
        root = np.stack([x_path, np.zeros(num_frames), np.full(num_frames, 900.0)], axis=1)
        agent0 = _animate_agent(skeleton, root, rng, num_frames)
        agent1 = _reflect_x(agent0)
    else:  # circle
        radius = 500.0
        center = np.array([0.0, 0.0, 900.0])
        theta = 2.0 * np.pi * rng.uniform(0.3, 0.8) * t_axis / num_frames + rng.uniform(0, 2 * np.pi)
        root = center + radius * np.stack(
            [np.cos(theta), np.sin(theta), np.zeros(num_frames)], axis=1
        )
        agent0 = _animate_agent(skeleton, root, rng, num_frames)
        half_turn = _rotation_about(np.array([0.0, 0.0, 1.0]), np.pi)
        agent1 = (agent0 - center) @ half_turn.T + center

    motions = tuple(
        Motion(vals, Representation.EUCLIDEAN_XYZ, fps) for vals in (agent0, agent1)
    )
    return SocialScene(motions, kind, observed_len)


# ---------------------------------------------------------------------------
# File loaders


def _parse_agent_entry(entry: dict, fps: float, path: Path, index: int) -> Motion:
    try:
        rep = Representation(entry.get("representation", "euclidean_xyz"))
        frames = np.array(entry["frames"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"scene file {path}: agent {index} malformed: {exc}") from exc
    if rep is Representation.JOINT_ANGLE and frames.ndim == 2:
        frames = frames[:, :, None]
    if frames.ndim != 3:
        raise DataError(
            f"scene file {path}: agent {index} frames must be (T, J, n), got {frames.shape}"
        )
    return Motion(frames, rep, fps)


def _load_scene_raw(path: str | Path) -> tuple[list[Motion], str, int, float]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse scene file {path}: {exc}") from exc
    if "fps" not in raw:
        raise DataError(f"scene file {path} has no fps field; an explicit fps is required")
    fps = float(raw["fps"])
    intent = str(raw.get("intent", ""))
    try:
        observed_len = int(raw["observed_len"])
        agent_entries = raw["agents"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"scene file {path} missing or malformed field: {exc}") from exc
    agents = [_parse_agent_entry(e, fps, path, i) for i, e in enumerate(agent_entries)]
    lengths = {a.num_frames for a in agents}
    if len(lengths) > 1:
        raise DataError(f"scene file {path}: agents have mismatched frame counts {sorted(lengths)}")
    return agents, intent, observed_len, fps


def load_scene_file(path: str | Path) -> SocialScene:
    """Load a two-human scene export (both agents euclidean, same joint set)."""
    agents, intent, observed_len, _ = _load_scene_raw(path)
    if len(agents) != 2:
        raise DataError(f"scene file {path}: scenes are dyadic, got {len(agents)} agents")
    for i, agent in enumerate(agents):
        if agent.representation is not Representation.EUCLIDEAN_XYZ:
            raise DataError(f"scene file {path}: agent {i} must be euclidean_xyz")
        problems = validate_motion(agent)
        if problems:
            raise DataError(f"scene file {path}: agent {i}: " + "; ".join(problems))
    if agents[0].num_joints != agents[1].num_joints:
        raise DataError(f"scene file {path}: agents have mismatched joint counts")
    return SocialScene(tuple(agents), intent, observed_len)


def load_chico_sequence(path: str | Path) -> SocialScene:
    """Load a human+robot collaboration sequence.

    The operator stream is euclidean, the robot stream joint angles; joint
    counts may differ (the model uses per-agent encoders for this case).
    """
    agents, intent, observed_len, _ = _load_scene_raw(path)
    if len(agents) != 2:
        raise DataError(f"sequence file {path}: expected 2 agent streams, got {len(agents)}")
    reps = [a.representation for a in agents]
    if Representation.JOINT_ANGLE not in reps:
        raise DataError(f"sequence file {path}: missing robot stream (joint_angle agent)")
    if Representation.EUCLIDEAN_XYZ not in reps:
        raise DataError(f"sequence file {path}: missing operator stream (euclidean_xyz agent)")
    for i, agent in enumerate(agents):
        problems = validate_motion(agent)
        if problems:
            raise DataError(f"sequence file {path}: agent {i}: " + "; ".join(problems))
    return SocialScene(tuple(agents), intent, observed_len)


def save_scene_file(scene: SocialScene, path: str | Path) -> None:
    payload = {
        "fps": scene.fps,
        "intent": scene.intent,
        "observed_len": scene.observed_len,
        "agents": [
            {
                "id": i,
                "representation": agent.representation.value,
                "frames": agent.values.squeeze(-1).tolist()
                if agent.representation is Representation.JOINT_ANGLE
                else agent.values.tolist(),
            }
            for i, agent in enumerate(scene.agents)
        ],
    }
    Path(path).write_text(json.dumps(payload))


# ---------------------------------------------------------------------------
# Dataset assembly for the harness


def build_dataset(spec: dict) -> list[TrainingSample]:
    """Materialize the dataset described by a config mapping.

    Synthetic: {"type": "synthetic", "kinds": [...], "num_scenes": int,
                "frames": T, "observed_len": N, "fps": f, "skeleton": name,
                "seed": s}
    Directory: {"type": "scene_dir", "path": dir, "observed_len": N optional,
                "frames": T optional, "format": "scene"|"chico"}
    """
    kind = spec.get("type")
    if kind == "synthetic":
        kinds = list(spec.get("kinds", SCENE_KINDS))
        num_scenes = int(spec.get("num_scenes", 8))
        frames = int(spec.get("frames", 12))
        observed = int(spec.get("observed_len", max(1, frames // 2)))
        fps = float(spec.get("fps", DEFAULT_FPS))
        skeleton = resolve_skeleton(spec.get("skeleton", "toy5"))
        seed = int(spec.get("seed", 0))
        samples = []
        for i in range(num_scenes):
            scene = synthesize_dyadic_scene(
                kinds[i % len(kinds)], seed + i, frames, fps, skeleton, observed
            )
            samples.append(window_scene(scene, observed, frames))
        return samples
    if kind == "scene_dir":
        root = Path(spec["path"])
        loader = load_chico_sequence if spec.get("format") == "chico" else load_scene_file
        paths = sorted(root.glob("*.json"))
        if not paths:
            raise DataError(f"no scene files (*.json) found under {root}")
        samples = []
        for p in paths:
            scene = loader(p)
            observed = int(spec.get("observed_len", scene.observed_len))
            frames = int(spec.get("frames", scene.num_frames))
            samples.append(window_scene(scene, observed, frames))
        return samples
    raise DataError(f"unknown dataset type {kind!r}; expected 'synthetic' or 'scene_dir'")
