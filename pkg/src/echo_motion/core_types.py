"""Skeleton, pose, motion, scene, and kinematic-chain data types.

Units are fixed package-wide: millimeters for positions, radians for joint
angles. All types are immutable after construction (arrays are write-locked)
and safe to share across threads.

Constructors check structural invariants (shapes, parent ordering, axis
norms). Data-quality checks that depend on context (NaN frames, fps,
joint-count agreement with a skeleton) live in ``validate_motion`` and the
file loaders, which is where malformed user data actually enters.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


class Representation(str, enum.Enum):
    EUCLIDEAN_XYZ = "euclidean_xyz"  # n=3, mm
    JOINT_ANGLE = "joint_angle"  # n=1, rad

    @property
    def width(self) -> int:
        return 3 if self is Representation.EUCLIDEAN_XYZ else 1


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SkeletonSpec:
    """Static body structure: joint names, parent tree, rest offsets in mm.

    ``parents[j]`` is the parent index of joint ``j`` (-1 for the single
    root, which sits at index 0); parents always precede children.
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    rest_offsets_mm: np.ndarray  # (J, 3)

    def __post_init__(self):
        names = tuple(self.joint_names)
        parents = tuple(int(p) for p in self.parents)
        offsets = _frozen_array(self.rest_offsets_mm)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets_mm", offsets)

        j = len(names)
        if len(parents) != j or offsets.shape != (j, 3):
            raise DataError(
                f"skeleton field sizes disagree: {j} names, {len(parents)} parents, "
                f"offsets {offsets.shape}"
            )
        roots = [i for i, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise DataError(f"skeleton must have exactly one root, found {len(roots)}")
        for i, p in enumerate(parents):
            if p != -1 and not 0 <= p < i:
                raise DataError(
                    f"joint '{names[i]}' (index {i}) has parent {p}; parents must "
                    "precede children"
                )
        lengths = np.linalg.norm(offsets, axis=1)
        for i, p in enumerate(parents):
            if p != -1 and lengths[i] <= 0.0:
                raise DataError(f"joint '{names[i]}' has non-positive rest bone length")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def root_index(self) -> int:
        return 0

    def rest_pose(self) -> "Pose":
        """Joint positions obtained by composing rest offsets down the tree."""
        positions = np.zeros((self.num_joints, 3))
        for j, p in enumerate(self.parents):
            if p == -1:
                positions[j] = self.rest_offsets_mm[j]
            else:
                positions[j] = positions[p] + self.rest_offsets_mm[j]
        return Pose(positions, Representation.EUCLIDEAN_XYZ)


@dataclass(frozen=True)
class Pose:
    """A single body configuration: (J, n) values in one representation."""

    values: np.ndarray
    representation: Representation

    def __post_init__(self):
        rep = Representation(self.representation)
        values = _frozen_array(self.values)
        if values.ndim != 2 or values.shape[1] != rep.width:
            raise DataError(
                f"{rep.value} pose must be (J, {rep.width}), got {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "representation", rep)

    @property
    def num_joints(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Motion:
    """Time-ordered poses sharing one representation: (T, J, n) plus fps."""

    values: np.ndarray
    representation: Representation
    fps: float

    def __post_init__(self):
        rep = Representation(self.representation)
        values = _frozen_array(self.values)
        if values.ndim != 3 or values.shape[2] != rep.width:
            raise DataError(
                f"{rep.value} motion must be (T, J, {rep.width}), got {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "representation", rep)
        object.__setattr__(self, "fps", float(self.fps))

    @classmethod
    def from_poses(cls, poses: list[Pose], fps: float) -> "Motion":
        if not poses:
            raise DataError("cannot build a motion from zero poses")
        rep = poses[0].representation
        if any(p.representation is not rep for p in poses):
            raise DataError("all poses in a motion must share one representation")
        return cls(np.stack([p.values for p in poses]), rep, fps)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_joints(self) -> int:
        return self.values.shape[1]

    def frame(self, t: int) -> Pose:
        return Pose(self.values[t], self.representation)


@dataclass(frozen=True)
class SocialScene:
    """A dyadic scenario: two agent motions, an intent label, and the
    index splitting observed from future frames (``observed_len`` frames
    are observed)."""

    agents: tuple[Motion, ...]
    intent: str
    observed_len: int

    def __post_init__(self):
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "observed_len", int(self.observed_len))
        if len(agents) != 2:
            raise DataError(f"scenes are dyadic: expected 2 agents, got {len(agents)}")
        t0 = agents[0].num_frames
        if any(a.num_frames != t0 for a in agents):
            raise DataError("agent motions must share the same frame count")
        if any(a.fps != agents[0].fps for a in agents):
            raise DataError("agent motions must share the same fps")
        if not 1 <= self.observed_len < t0:
            raise DataError(
                f"observed_len must lie in [1, T), got {self.observed_len} with T={t0}"
            )

    @property
    def num_frames(self) -> int:
        return self.agents[0].num_frames

    @property
    def fps(self) -> float:
        return self.agents[0].fps


@dataclass(frozen=True)
class ChainJoint:
    """One revolute joint: fixed origin transform in the parent frame, a
    unit rotation axis in the joint frame, and angle limits."""

    axis: np.ndarray  # (3,) unit
    rotation: np.ndarray  # (3, 3) origin rotation
    translation_mm: np.ndarray  # (3,) origin translation
    limits_rad: tuple[float, float]
    parent: int  # -1 for the base, else an earlier joint index

    def __post_init__(self):
        axis = _frozen_array(self.axis)
        rotation = _frozen_array(self.rotation)
        translation = _frozen_array(self.translation_mm)
        limits = (float(self.limits_rad[0]), float(self.limits_rad[1]))
        if axis.shape != (3,):
            raise DataError(f"joint axis must be a 3-vector, got {axis.shape}")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise DataError(f"joint axis must be unit-norm, got |axis|={np.linalg.norm(axis)}")
        if rotation.shape != (3, 3):
            raise DataError(f"origin rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise DataError(f"origin translation must be a 3-vector, got {translation.shape}")
        if not limits[0] < limits[1]:
            raise DataError(f"joint limits must satisfy lo < hi, got {limits}")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation_mm", translation)
        object.__setattr__(self, "limits_rad", limits)
        object.__setattr__(self, "parent", int(self.parent))


@dataclass(frozen=True)
class KinematicChain:
    """A serial or tree-structured robot: ordered revolute joints plus the
    joint indices that carry evaluation markers.

    Markers sit at joint-frame origins, so a tool tip is modeled as a child
    joint whose origin translation is the link extent.
    """

    joints: tuple[ChainJoint, ...]
    end_effectors: tuple[int, ...]

    def __post_init__(self):
        joints = tuple(self.joints)
        effectors = tuple(int(e) for e in self.end_effectors)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "end_effectors", effectors)
        if not joints:
            raise DataError("a chain needs at least one joint")
        for i, joint in enumerate(joints):
            if not -1 <= joint.parent < i:
                raise DataError(
                    f"joint {i} has parent {joint.parent}; chains must be in "
                    "topological order"
                )
        for e in effectors:
            if not 0 <= e < len(joints):
                raise DataError(f"end effector index {e} outside joint range")

    @property
    def dof(self) -> int:
        return len(self.joints)

    def limits(self) -> np.ndarray:
        """(DOF, 2) array of joint limits."""
        return np.array([j.limits_rad for j in self.joints])


# ---------------------------------------------------------------------------
# Operations


def bone_lengths(pose: Pose, skeleton: SkeletonSpec) -> np.ndarray:
    """Per-bone Euclidean lengths in mm, one per non-root joint in index order."""
    if pose.representation is not Representation.EUCLIDEAN_XYZ:
        raise ValueError(f"bone lengths need euclidean_xyz poses, got {pose.representation.value}")
    if pose.num_joints != skeleton.num_joints:
        raise ValueError(
            f"pose has {pose.num_joints} joints but skeleton has {skeleton.num_joints}"
        )
    child = [j for j, p in enumerate(skeleton.parents) if p != -1]
    parent = [skeleton.parents[j] for j in child]
    return np.linalg.norm(pose.values[child] - pose.values[parent], axis=1)


def motion_bone_lengths(motion: Motion, skeleton: SkeletonSpec) -> np.ndarray:
    """(T, J-1) bone lengths for every frame of a euclidean motion."""
    if motion.representation is not Representation.EUCLIDEAN_XYZ:
        raise ValueError("bone lengths need euclidean_xyz motions")
    if motion.num_joints != skeleton.num_joints:
        raise ValueError(
            f"motion has {motion.num_joints} joints but skeleton has {skeleton.num_joints}"
        )
    child = [j for j, p in enumerate(skeleton.parents) if p != -1]
    parent = [skeleton.parents[j] for j in child]
    return np.linalg.norm(motion.values[:, child] - motion.values[:, parent], axis=2)


def validate_motion(motion: Motion, skeleton: SkeletonSpec | None = None) -> list[str]:
    """Report data-quality problems; an empty list means the motion is valid."""
    report: list[str] = []
    bad = ~np.isfinite(motion.values)
    if bad.any():
        frames = np.unique(np.nonzero(bad)[0])
        report.append(
            "non-finite values at frame(s) " + ", ".join(str(int(f)) for f in frames)
        )
    if motion.fps <= 0:
        report.append(f"fps must be positive, got {motion.fps}")
    if skeleton is not None and motion.num_joints != skeleton.num_joints:
        report.append(
            f"joint count mismatch: motion has {motion.num_joints}, "
            f"skeleton has {skeleton.num_joints}"
        )
    return report


def _topological_reindex(names: list[str], parents: list[int], offsets: np.ndarray):
    """Reorder joints so parents precede children, keeping input order stable.

    Raises on cycles or dangling parent indices, naming an offending joint.
    """
    j = len(names)
    for i, p in enumerate(parents):
        if p != -1 and not 0 <= p < j:
            raise DataError(f"joint '{names[i]}' references unknown parent index {p}")
    order: list[int] = []
    placed = [False] * j
    remaining = j
    while remaining:
        progressed = False
        for i in range(j):
            if placed[i]:
                continue
            p = parents[i]
            if p == -1 or placed[p]:
                order.append(i)
                placed[i] = True
                remaining -= 1
                progressed = True
        if not progressed:
            stuck = next(names[i] for i in range(j) if not placed[i])
            raise DataError(
                f"parents do not form a tree in topological order: cycle involving "
                f"joint '{stuck}'"
            )
    new_index = {old: new for new, old in enumerate(order)}
    new_names = [names[i] for i in order]
    new_parents = [-1 if parents[i] == -1 else new_index[parents[i]] for i in order]
    new_offsets = offsets[order]
    return new_names, new_parents, new_offsets


def load_skeleton(path: str | Path) -> SkeletonSpec:
    """Load and validate a skeleton JSON file, re-indexing to topological order."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse skeleton file {path}: {exc}") from exc
    try:
        names = [str(n) for n in raw["joint_names"]]
        parents = [int(p) for p in raw["parents"]]
        offsets = np.array(raw["rest_offsets_mm"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"skeleton file {path} missing or malformed field: {exc}") from exc
    if offsets.ndim != 2 or offsets.shape != (len(names), 3):
        raise DataError(
            f"skeleton file {path}: rest_offsets_mm must be (J, 3) with J={len(names)}"
        )
    names, parents, offsets = _topological_reindex(names, parents, offsets)
    return SkeletonSpec(tuple(names), tuple(parents), offsets)


def save_skeleton(spec: SkeletonSpec, path: str | Path) -> None:
    payload = {
        "joint_names": list(spec.joint_names),
        "parents": list(spec.parents),
        "rest_offsets_mm": spec.rest_offsets_mm.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def load_chain(path: str | Path) -> KinematicChain:
    """Load and validate a kinematic-chain JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot parse chain file {path}: {exc}") from exc
    try:
        joint_entries = raw["joints"]
        effectors = [int(e) for e in raw.get("end_effectors", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"chain file {path} missing or malformed field: {exc}") from exc
    joints = []
    for i, entry in enumerate(joint_entries):
        try:
            kind = entry.get("type", "revolute")
            if kind != "revolute":
                raise DataError(f"chain file {path}: joint {i} has unsupported type '{kind}'")
            origin = entry.get("origin", {})
            joints.append(
                ChainJoint(
                    axis=np.array(entry["axis"], dtype=np.float64),
                    rotation=np.array(origin.get("rotation", np.eye(3).tolist()), dtype=np.float64),
                    translation_mm=np.array(
                        origin.get("translation_mm", [0.0, 0.0, 0.0]), dtype=np.float64
                    ),
                    limits_rad=tuple(entry["limits_rad"]),
                    parent=int(entry.get("parent", i - 1)),
                )
            )
        except DataError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"chain file {path}: joint {i} malformed: {exc}") from exc
    return KinematicChain(tuple(joints), tuple(effectors))


def save_chain(chain: KinematicChain, path: str | Path) -> None:
    payload = {
        "joints": [
            {
                "axis": j.axis.tolist(),
                "origin": {
                    "rotation": j.rotation.tolist(),
                    "translation_mm": j.translation_mm.tolist(),
                },
                "limits_rad": list(j.limits_rad),
                "parent": j.parent,
            }
            for j in chain.joints
        ],
        "end_effectors": list(chain.end_effectors),
    }
    Path(path).write_text(json.dumps(payload, indent=2))


# ---------------------------------------------------------------------------
# Built-in skeletons
#
# The 22-joint layout follows the common SMPL-style body tree (pelvis root,
# three spine segments, legs with feet, collar/shoulder/elbow/wrist arms).
# The source datasets never publish an authoritative ordering, so this is
# repo configuration, not ground truth; any skeleton file with the same J
# can be swapped in.

_H22_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
)
_H22_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)
_H22_OFFSETS = (
    (0, 0, 0), (90, 0, -80), (-90, 0, -80), (0, -10, 110),
    (0, 0, -380), (0, 0, -380), (0, 10, 130), (0, 0, -400),
    (0, 0, -400), (0, 10, 50), (0, 130, -60), (0, 130, -60),
    (0, -10, 90), (70, 0, 60), (-70, 0, 60), (0, 10, 110),
    (110, 0, 20), (-110, 0, 20), (260, 0, 0), (-260, 0, 0),
    (250, 0, 0), (-250, 0, 0),
)

_TOY5_NAMES = ("root", "spine", "head", "left_arm", "right_arm")
_TOY5_PARENTS = (-1, 0, 1, 1, 1)
_TOY5_OFFSETS = ((0, 0, 0), (0, 0, 250), (0, 0, 180), (160, 0, 40), (-160, 0, 40))


def skeleton_h22() -> SkeletonSpec:
    """22-joint human skeleton in this repo's documented convention."""
    return SkeletonSpec(_H22_NAMES, _H22_PARENTS, np.array(_H22_OFFSETS, dtype=np.float64))


def skeleton_toy5() -> SkeletonSpec:
    """5-joint desk-scale skeleton used by the synthetic generator and tests."""
    return SkeletonSpec(_TOY5_NAMES, _TOY5_PARENTS, np.array(_TOY5_OFFSETS, dtype=np.float64))


_BUILTIN_SKELETONS = {"h22": skeleton_h22, "toy5": skeleton_toy5}


def resolve_skeleton(spec: str | Path | SkeletonSpec) -> SkeletonSpec:
    """Accept a builtin name ('h22', 'toy5'), a file path, or a SkeletonSpec."""
    if isinstance(spec, SkeletonSpec):
        return spec
    if isinstance(spec, str) and spec in _BUILTIN_SKELETONS:
        return _BUILTIN_SKELETONS[spec]()
    return load_skeleton(spec)
