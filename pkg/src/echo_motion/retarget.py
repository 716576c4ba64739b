"""Human-to-robot retargeting through one shared latent space.

Each embodiment (the human plus any number of robot chains) gets an MLP
encoder into a common latent width and an MLP decoder back out. Training
optimizes per-embodiment reconstruction, cross-domain cycle consistency,
and first/second-moment alignment of the latent distributions, so a human
pose decodes into a semantically close robot pose without paired data.

Robot decoders emit joint angles directly; outputs are clamped to limits.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import torch
from torch import nn

from .core_types import KinematicChain, Pose, Representation
from .errors import DataError, NumericError

HUMAN = "human"


@dataclass(frozen=True)
class SharedLatentConfig:
    robots: tuple[str, ...]
    d_latent: int = 16
    human_rep: str = "local_rotations"  # or "euclidean_xyz"
    w_recon: float = 1.0
    w_cycle: float = 1.0
    w_align: float = 0.1
    hidden: int = 64
    n_hidden: int = 1
    lr: float = 1e-3
    steps: int = 800
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))
        if self.d_latent <= 0:
            raise ValueError("d_latent must be positive")
        if not self.robots:
            raise ValueError("at least one robot embodiment is required")
        if self.human_rep not in ("local_rotations", "euclidean_xyz"):
            raise ValueError(f"unknown human representation '{self.human_rep}'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["robots"] = list(self.robots)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SharedLatentConfig":
        d = dict(d)
        d["robots"] = tuple(d["robots"])
        return cls(**d)


# ---------------------------------------------------------------------------
# Forward kinematics and sampling


def forward_kinematics(chain: KinematicChain, angles) -> np.ndarray:
    """Marker positions (num_end_effectors, 3) in mm for the given angles.

    Joint transforms compose in topological order: parent pose, then the
    joint's fixed origin, then the rotation about its axis. A joint's own
    rotation moves its children, not its own marker.
    """
    if isinstance(angles, Pose):
        if angles.representation is not Representation.JOINT_ANGLE:
            raise ValueError("forward kinematics needs joint_angle poses")
        values = angles.values[:, 0]
    else:
        values = np.asarray(angles, dtype=np.float64).reshape(-1)
    if values.shape[0] != chain.dof:
        raise ValueError(f"chain has {chain.dof} DOF, got {values.shape[0]} angles")

    rotations = np.zeros((chain.dof, 3, 3))
    translations = np.zeros((chain.dof, 3))
    for i, joint in enumerate(chain.joints):
        lo, hi = joint.limits_rad
        if not lo - 1e-9 <= values[i] <= hi + 1e-9:
            raise ValueError(
                f"joint {i} angle {values[i]:.6g} outside limits [{lo:.6g}, {hi:.6g}]"
            )
        spin = _axis_rotation(joint.axis, values[i])
        if joint.parent == -1:
            r_parent, t_parent = np.eye(3), np.zeros(3)
        else:
            r_parent, t_parent = rotations[joint.parent], translations[joint.parent]
        translations[i] = t_parent + r_parent @ joint.translation_mm
        rotations[i] = r_parent @ joint.rotation @ spin
    return translations[list(chain.end_effectors)]


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def sample_joint_angles(chain: KinematicChain, seed: int, count: int) -> list[Pose]:
    """Uniform within-limit joint configurations, deterministic per seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    limits = chain.limits()
    draws = rng.uniform(limits[:, 0], limits[:, 1], size=(count, chain.dof))
    return [Pose(d[:, None], Representation.JOINT_ANGLE) for d in draws]


def angles_array(poses: list[Pose]) -> np.ndarray:
    """(N, DOF) float array from a list of joint-angle poses."""
    return np.stack([p.values[:, 0] for p in poses])


# ---------------------------------------------------------------------------
# Shared-space model


class _MLP(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int, n_hidden: int):
        super().__init__()
        layers: list[nn.Module] = []
        width = in_dim
        for _ in range(n_hidden):
            layers += [nn.Linear(width, hidden), nn.GELU()]
            width = hidden
        layers.append(nn.Linear(width, out_dim))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class RetargetModel(nn.Module):
    """Per-embodiment encoders/decoders over one shared latent space.

    Inputs are standardized per embodiment (mean/std buffers fitted at
    training time) so millimeter-scale human poses and radian-scale robot
    angles train together.
    """

    def __init__(self, dims: Mapping[str, int], cfg: SharedLatentConfig):
        super().__init__()
        if HUMAN not in dims:
            raise ValueError("embodiment dims must include 'human'")
        self.cfg = cfg
        self.dims = dict(dims)
        self.embodiments = [HUMAN] + sorted(k for k in dims if k != HUMAN)
        self.encoders = nn.ModuleDict(
            {k: _MLP(dims[k], cfg.hidden, cfg.d_latent, cfg.n_hidden) for k in self.embodiments}
        )
        self.decoders = nn.ModuleDict(
            {k: _MLP(cfg.d_latent, cfg.hidden, dims[k], cfg.n_hidden) for k in self.embodiments}
        )
        for k in self.embodiments:
            self.register_buffer(f"mean_{k}", torch.zeros(dims[k]))
            self.register_buffer(f"std_{k}", torch.ones(dims[k]))
        self.limits: dict[str, np.ndarray] = {}
        self.trained = False

    def set_limits(self, chain_limits: Mapping[str, np.ndarray]) -> None:
        self.limits = {k: np.asarray(v, dtype=np.float64) for k, v in chain_limits.items()}

    def fit_standardization(self, data: Mapping[str, np.ndarray]) -> None:
        for k in self.embodiments:
            arr = np.asarray(data[k], dtype=np.float64)
            mean = arr.mean(axis=0)
            std = arr.std(axis=0)
            std[std < 1e-8] = 1.0
            getattr(self, f"mean_{k}").copy_(torch.as_tensor(mean, dtype=torch.float32))
            getattr(self, f"std_{k}").copy_(torch.as_tensor(std, dtype=torch.float32))

    def encode(self, embodiment: str, x: torch.Tensor) -> torch.Tensor:
        mean = getattr(self, f"mean_{embodiment}").to(x.dtype)
        std = getattr(self, f"std_{embodiment}").to(x.dtype)
        return self.encoders[embodiment]((x - mean) / std)

    def decode(self, embodiment: str, z: torch.Tensor) -> torch.Tensor:
        mean = getattr(self, f"mean_{embodiment}").to(z.dtype)
        std = getattr(self, f"std_{embodiment}").to(z.dtype)
        return self.decoders[embodiment](z) * std + mean


def _as_batches(data: Mapping[str, np.ndarray], embodiments) -> dict[str, torch.Tensor]:
    out = {}
    for k in embodiments:
        arr = np.asarray(data.get(k), dtype=np.float64)
        if arr.size == 0:
            raise DataError(f"empty dataset for embodiment '{k}'")
        if arr.ndim != 2:
            raise DataError(f"embodiment '{k}' data must be (N, dim), got {arr.shape}")
        out[k] = torch.as_tensor(arr, dtype=torch.float32)
    return out


def _suite_losses(
    model: RetargetModel, batch: dict[str, torch.Tensor]
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    recon = 0.0
    latents = {}
    for k in model.embodiments:
        z = model.encode(k, batch[k])
        latents[k] = z
        rec = model.decode(k, z)
        recon = recon + ((rec - batch[k]) ** 2).mean()
    recon = recon / len(model.embodiments)

    cycle = 0.0
    robots = [k for k in model.embodiments if k != HUMAN]
    for r in robots:
        z_h = latents[HUMAN]
        z_back = model.encode(r, model.decode(r, z_h))
        cycle = cycle + ((z_back - z_h) ** 2).mean()
        z_r = latents[r]
        z_back_h = model.encode(HUMAN, model.decode(HUMAN, z_r))
        cycle = cycle + ((z_back_h - z_r) ** 2).mean()
    cycle = cycle / (2 * len(robots))

    means = {k: z.mean(dim=0) for k, z in latents.items()}
    stds = {k: z.std(dim=0) for k, z in latents.items()}
    pooled_mean = sum(means.values()) / len(means)
    pooled_std = sum(stds.values()) / len(stds)
    align = sum(
        ((means[k] - pooled_mean) ** 2).mean() + ((stds[k] - pooled_std) ** 2).mean()
        for k in model.embodiments
    ) / len(model.embodiments)
    return recon, cycle, align


def train_shared_space(
    human_data: np.ndarray,
    robot_data: Mapping[str, np.ndarray],
    cfg: SharedLatentConfig,
    chains: Mapping[str, KinematicChain] | None = None,
) -> tuple[RetargetModel, list[dict]]:
    """Fit the shared space; returns the model and a per-step loss log."""
    data = {HUMAN: np.asarray(human_data, dtype=np.float64)}
    for r in cfg.robots:
        if r not in robot_data:
            raise DataError(f"no samples provided for robot '{r}'")
        data[r] = np.asarray(robot_data[r], dtype=np.float64)

    torch.manual_seed(cfg.seed)
    dims = {k: v.shape[1] for k, v in data.items()}
    model = RetargetModel(dims, cfg)
    tensors = _as_batches(data, model.embodiments)
    model.fit_standardization(data)
    if chains:
        model.set_limits({k: c.limits() for k, c in chains.items()})

    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=1e-4)
    rng = np.random.default_rng(cfg.seed)
    log: list[dict] = []
    for step in range(cfg.steps):
        batch = {}
        for k, tensor in tensors.items():
            n = tensor.shape[0]
            idx = rng.integers(0, n, size=min(cfg.batch_size, n))
            batch[k] = tensor[torch.as_tensor(idx, dtype=torch.long)]
        recon, cycle, align = _suite_losses(model, batch)
        loss = cfg.w_recon * recon + cfg.w_cycle * cycle + cfg.w_align * align
        if not torch.isfinite(loss):
            raise NumericError(
                f"retarget training diverged at step {step}: "
                f"recon={float(recon)}, cycle={float(cycle)}, align={float(align)}"
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        log.append(
            {
                "step": step,
                "recon": float(recon),
                "cycle": float(cycle),
                "align": float(align),
                "total": float(loss),
            }
        )
    model.trained = True
    return model, log


def _clamped_decode(
    model: RetargetModel, embodiment: str, z: torch.Tensor
) -> tuple[np.ndarray, int]:
    raw = model.decode(embodiment, z).detach().numpy().astype(np.float64)
    limits = model.limits.get(embodiment)
    if limits is None:
        return raw, 0
    clamped = np.clip(raw, limits[:, 0], limits[:, 1])
    n_clamped = int((clamped != raw).sum())
    return clamped, n_clamped


def retarget_pose(model: RetargetModel, human_pose, chain_id: str) -> Pose:
    """Map a human pose through the shared space to robot joint angles."""
    if not model.trained:
        raise ValueError("retarget model has not been trained")
    if chain_id not in model.embodiments:
        raise ValueError(f"unknown chain id '{chain_id}'")
    if isinstance(human_pose, Pose):
        flat = human_pose.values.reshape(-1)
    else:
        flat = np.asarray(human_pose, dtype=np.float64).reshape(-1)
    if flat.shape[0] != model.dims[HUMAN]:
        raise ValueError(
            f"human pose has width {flat.shape[0]}, model expects {model.dims[HUMAN]}"
        )
    with torch.no_grad():
        z = model.encode(HUMAN, torch.as_tensor(flat, dtype=torch.float32)[None])
        angles, _ = _clamped_decode(model, chain_id, z)
    return Pose(angles[0][:, None], Representation.JOINT_ANGLE)


def evaluate_retarget(
    model: RetargetModel, test_data: Mapping[str, np.ndarray]
) -> dict[str, dict[str, float]]:
    """Reconstruction MSE per embodiment, relative cycle error, clamp rate.

    Cycle error is normalized by the latent magnitude so that models with
    small-but-meaningless latents do not score spuriously well.
    """
    tensors = _as_batches(test_data, model.embodiments)
    report: dict[str, dict[str, float]] = {"recon_mse": {}, "cycle_error": {}, "clamp_rate": {}}
    with torch.no_grad():
        latents = {}
        for k in model.embodiments:
            z = model.encode(k, tensors[k])
            latents[k] = z
            rec = model.decode(k, z)
            report["recon_mse"][k] = float(((rec - tensors[k]) ** 2).mean())
        robots = [k for k in model.embodiments if k != HUMAN]
        for r in robots:
            z_h = latents[HUMAN]
            decoded, n_clamped = _clamped_decode(model, r, z_h)
            z_back = model.encode(r, torch.as_tensor(decoded, dtype=torch.float32))
            scale = float((z_h**2).mean()) + 1e-12
            report["cycle_error"][r] = float(((z_back - z_h) ** 2).mean()) / scale
            report["clamp_rate"][r] = (
                n_clamped / decoded.size if model.limits.get(r) is not None else 0.0
            )
    return report


def write_retarget_csv(report: dict[str, dict[str, float]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "embodiment", "value"])
        for quantity, per_emb in report.items():
            for embodiment, value in per_emb.items():
                writer.writerow([quantity, embodiment, f"{value:.10g}"])


# ---------------------------------------------------------------------------
# Toy chains for desk-scale runs


def toy_chain_3dof() -> KinematicChain:
    """Planar 3-DOF arm about z with 100/80/60 mm links, markers at the
    last two joint frames and limits just inside a full turn."""
    from .core_types import ChainJoint

    def joint(translation, parent):
        return ChainJoint(
            axis=np.array([0.0, 0.0, 1.0]),
            rotation=np.eye(3),
            translation_mm=np.array(translation, dtype=np.float64),
            limits_rad=(-3.1, 3.1),
            parent=parent,
        )

    joints = (joint([0, 0, 0], -1), joint([100, 0, 0], 0), joint([80, 0, 0], 1))
    return KinematicChain(joints, (1, 2))
