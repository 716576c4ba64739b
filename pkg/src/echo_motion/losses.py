"""The four MSE training losses and their weighted sum.

Conventions: every loss is a mean over all supervised elements, predictions
and targets carry the batch axis first and the time axis second, and norm
gradients use a zero subgradient at exactly coincident points so coincident
joints never produce NaN.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .core_types import Motion, Representation, SkeletonSpec, motion_bone_lengths
from .errors import NumericError


@dataclass(frozen=True)
class LossWeights:
    w_ind: float = 1.0
    w_soc: float = 1.0
    w_int: float = 1.0
    w_bone: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**d)


def _safe_norm(diff: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Euclidean norm with zero gradient at zero-length differences."""
    sq = (diff * diff).sum(dim=dim)
    mask = sq > 0
    safe = torch.where(mask, sq, torch.ones_like(sq))
    return torch.where(mask, torch.sqrt(safe), torch.zeros_like(sq))


def _as_points(x, name: str) -> torch.Tensor:
    """Coerce a Motion / (T, J, 3) array / tensor to a (B, T, J, 3) tensor."""
    if isinstance(x, Motion):
        if x.representation is not Representation.EUCLIDEAN_XYZ:
            raise ValueError(f"{name} must be euclidean_xyz")
        x = torch.as_tensor(x.values.copy())
    elif not isinstance(x, torch.Tensor):
        x = torch.as_tensor(np.array(x))
    if x.ndim == 3:
        x = x.unsqueeze(0)
    if x.ndim != 4 or x.shape[-1] != 3:
        raise ValueError(f"{name} must be (B, T, J, 3), got {tuple(x.shape)}")
    return x


def _as_frames(x, name: str) -> torch.Tensor:
    """Coerce a Motion / array / tensor to (B, T, W) with flattened poses."""
    if isinstance(x, Motion):
        x = torch.as_tensor(x.values.reshape(x.num_frames, -1).copy())
    elif not isinstance(x, torch.Tensor):
        x = torch.as_tensor(np.array(x))
    if x.ndim == 2:
        x = x.unsqueeze(0)
    if x.ndim == 4:
        x = x.reshape(x.shape[0], x.shape[1], -1)
    if x.ndim != 3:
        raise ValueError(f"{name} must be (B, T, W), got {tuple(x.shape)}")
    return x


def mse_frames(pred: torch.Tensor, target, supervised_from: int = 0) -> torch.Tensor:
    """Elementwise MSE over frames >= supervised_from."""
    target = _as_frames(target, "target").to(pred.dtype)
    pred = _as_frames(pred, "pred")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    diff = pred[:, supervised_from:] - target[:, supervised_from:]
    return (diff * diff).mean()


def distance_matrix(x0, x1) -> torch.Tensor:
    """(B, T, J0, J1) cross-agent joint distances in mm."""
    a = _as_points(x0, "x0")
    b = _as_points(x1, "x1").to(a.dtype)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"frame counts differ: {a.shape[1]} vs {b.shape[1]}")
    diff = a.unsqueeze(3) - b.unsqueeze(2)
    return _safe_norm(diff)


def loss_individual(
    e_hat: torch.Tensor,
    target,
    decoder: Callable[[torch.Tensor, torch.Tensor | None], torch.Tensor],
    x_ref: torch.Tensor | None,
    supervised_from: int = 0,
) -> torch.Tensor:
    """MSE between the decoded individual latent and the ground truth."""
    pred = decoder(e_hat, x_ref)
    return mse_frames(pred, target, supervised_from)


def loss_social(
    e_hat: torch.Tensor,
    target,
    decoder: Callable[[torch.Tensor, torch.Tensor | None], torch.Tensor],
    x_ref: torch.Tensor | None,
    supervised_from: int = 0,
) -> torch.Tensor:
    """Same contract as :func:`loss_individual`, applied to the social latent."""
    pred = decoder(e_hat, x_ref)
    return mse_frames(pred, target, supervised_from)


def loss_interaction(pred0, pred1, gt0, gt1, supervised_from: int = 0) -> torch.Tensor:
    """MSE between predicted and ground-truth cross-agent distance matrices."""
    dm_pred = distance_matrix(pred0, pred1)
    dm_gt = distance_matrix(gt0, gt1).to(dm_pred.dtype)
    if dm_pred.shape != dm_gt.shape:
        raise ValueError(
            f"distance matrices differ in shape: {tuple(dm_pred.shape)} vs {tuple(dm_gt.shape)}"
        )
    diff = dm_pred[:, supervised_from:] - dm_gt[:, supervised_from:]
    return (diff * diff).mean()


def bone_lengths_torch(points: torch.Tensor, skeleton: SkeletonSpec) -> torch.Tensor:
    """(B, T, J-1) per-frame bone lengths of a (B, T, J, 3) tensor."""
    child = [j for j, p in enumerate(skeleton.parents) if p != -1]
    parent = [skeleton.parents[j] for j in child]
    return _safe_norm(points[:, :, child] - points[:, :, parent])


def bone_reference_lengths(
    target: Motion, skeleton: SkeletonSpec, observed_len: int
) -> np.ndarray:
    """Per-subject reference bone lengths: the mean over observed frames."""
    return motion_bone_lengths(target, skeleton)[:observed_len].mean(axis=0)


def loss_bone(
    pred, reference_lengths, skeleton: SkeletonSpec, supervised_from: int = 0
) -> torch.Tensor:
    """MSE between predicted bone lengths and the subject's reference lengths."""
    points = _as_points(pred, "pred")
    if torch.isnan(points).any():
        raise NumericError("bone loss input contains NaN")
    if points.shape[2] != skeleton.num_joints:
        raise ValueError(
            f"prediction has {points.shape[2]} joints, skeleton has {skeleton.num_joints}"
        )
    ref = torch.as_tensor(np.asarray(reference_lengths), dtype=points.dtype)
    lengths = bone_lengths_torch(points, skeleton)[:, supervised_from:]
    diff = lengths - ref
    return (diff * diff).mean()


def total_loss(
    l_ind: Sequence[torch.Tensor],
    l_soc: Sequence[torch.Tensor],
    l_int: torch.Tensor | None,
    l_bone: Sequence[torch.Tensor | None],
    weights: LossWeights,
    agent_reps: Sequence[Representation],
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the loss suite.

    Joint-angle (robot) agents contribute only their individual and social
    terms: their bone entries are dropped and the interaction term is skipped
    whenever any agent is a robot.
    """
    if len(l_ind) != len(agent_reps) or len(l_soc) != len(agent_reps):
        raise ValueError("per-agent loss lists must match the agent count")
    euclidean = [rep is Representation.EUCLIDEAN_XYZ for rep in agent_reps]

    def agent_mean(values):
        present = [v for v in values if v is not None]
        return sum(present) / len(present) if present else None

    ind = agent_mean(list(l_ind))
    soc = agent_mean(list(l_soc))
    bone = agent_mean([v if euclidean[i] else None for i, v in enumerate(l_bone)])
    interaction = l_int if all(euclidean) else None

    total = weights.w_ind * ind + weights.w_soc * soc
    if interaction is not None:
        total = total + weights.w_int * interaction
    if bone is not None:
        total = total + weights.w_bone * bone

    breakdown = {
        "l_ind": float(ind),
        "l_soc": float(soc),
        "l_int": float(interaction) if interaction is not None else float("nan"),
        "l_bone": float(bone) if bone is not None else float("nan"),
        "total": float(total),
    }
    return total, breakdown
