"""Evaluation metrics, the zero-velocity baseline, and batch evaluation.

All metrics are millimeter errors at a single scored frame. They use the
plain Euclidean norm; a squared variant is available behind the ``squared``
flag for comparison but the reported tables use distances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core_types import Motion, Representation
from .datasets import TrainingSample

Forecaster = Callable[[TrainingSample], Sequence[Motion]]


def _stack(motions, name: str) -> np.ndarray:
    """Coerce a list of Motions / (H, T, J, 3) array to a float array."""
    if isinstance(motions, np.ndarray):
        arr = motions
    elif isinstance(motions, Motion):
        arr = motions.values[None]
    else:
        arr = np.stack([m.values for m in motions])
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must stack to (H, T, J, 3), got {arr.shape}")
    return np.asarray(arr, dtype=np.float64)


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = _stack(pred, "pred")
    g = _stack(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return p, g


def _norm(diff: np.ndarray, squared: bool) -> np.ndarray:
    sq = (diff * diff).sum(axis=-1)
    return sq if squared else np.sqrt(sq)


def jpe(pred, gt, frame: int, squared: bool = False) -> float:
    """Mean per-joint global position error over all agents at one frame."""
    p, g = _pair(pred, gt)
    return float(_norm(p[:, frame] - g[:, frame], squared).mean())


def ajpe(pred, gt, frame: int, root_index: int = 0, squared: bool = False) -> float:
    """JPE after subtracting each body's own root position (local pose error)."""
    p, g = _pair(pred, gt)
    p = p - p[:, :, root_index : root_index + 1]
    g = g - g[:, :, root_index : root_index + 1]
    return float(_norm(p[:, frame] - g[:, frame], squared).mean())


def fde(
    pred, gt, frame: int | None = None, root_index: int = 0, squared: bool = False
) -> float:
    """Root-position error at the final (or given) frame, averaged over agents."""
    p, g = _pair(pred, gt)
    if p.shape[1] == 0:
        raise ValueError("prediction has no frames")
    t = p.shape[1] - 1 if frame is None else frame
    return float(_norm(p[:, t, root_index] - g[:, t, root_index], squared).mean())


def mpjpe(pred: Motion, gt: Motion, frame: int, squared: bool = False) -> float:
    """Single-agent mean per-joint position error at one frame."""
    return jpe([pred], [gt], frame, squared)


def zero_velocity_baseline(sample: TrainingSample) -> tuple[Motion, ...]:
    """Predict every frame as the last observed pose, per agent."""
    out = []
    for ref, proto in zip(sample.x_ref, sample.x_ind):
        values = np.repeat(ref.values[None], proto.num_frames, axis=0)
        out.append(Motion(values, proto.representation, proto.fps))
    return tuple(out)


def horizon_frame_index(horizon_s: float, fps: float, observed_len: int) -> int:
    """Map a horizon in seconds to the absolute frame index it scores."""
    offset = horizon_s * fps
    if abs(offset - round(offset)) > 1e-9:
        raise ValueError(
            f"horizon {horizon_s}s is not an integer frame offset at {fps} fps"
        )
    if round(offset) < 1:
        raise ValueError(f"horizon {horizon_s}s at {fps} fps precedes the first prediction")
    return observed_len - 1 + int(round(offset))


@dataclass
class MetricsReport:
    """Per-metric, per-horizon scalar table plus provenance metadata."""

    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, metric: str, horizon_s: float, value_mm: float) -> None:
        self.rows.append(
            {"metric": metric, "horizon_s": float(horizon_s), "value_mm": float(value_mm)}
        )

    def value(self, metric: str, horizon_s: float) -> float:
        for row in self.rows:
            if row["metric"] == metric and row["horizon_s"] == float(horizon_s):
                return row["value_mm"]
        raise KeyError(f"no row for ({metric}, {horizon_s})")

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            for key, value in self.metadata.items():
                fh.write(f"# {key}: {value}\n")
            writer = csv.DictWriter(fh, fieldnames=["metric", "horizon_s", "value_mm"])
            writer.writeheader()
            writer.writerows(self.rows)

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsReport":
        metadata: dict = {}
        rows: list[dict] = []
        with Path(path).open() as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition(":")
                    metadata[key.strip()] = value.strip()
                else:
                    lines.append(line)
        for row in csv.DictReader(lines):
            rows.append(
                {
                    "metric": row["metric"],
                    "horizon_s": float(row["horizon_s"]),
                    "value_mm": float(row["value_mm"]),
                }
            )
        return cls(rows=rows, metadata=metadata)


def evaluate_model(
    forecaster: Forecaster,
    samples: Sequence[TrainingSample],
    horizons: Sequence[float],
    root_index: int = 0,
    metric_names: Sequence[str] = ("jpe", "ajpe", "fde"),
    squared: bool = False,
    metadata: dict | None = None,
) -> MetricsReport:
    """Forecast every sample and aggregate each metric per horizon by mean.

    ``forecaster`` maps a sample to per-agent predicted motions (the model
    wrapper and the zero-velocity baseline both fit). For heterogeneous
    scenes only euclidean agents are scored; ``mpjpe`` scores the first
    euclidean agent alone.
    """
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    values: dict[tuple[str, float], list[float]] = {
        (m, float(h)): [] for m in metric_names for h in horizons
    }
    for sample in samples:
        preds = list(forecaster(sample))
        fps = sample.x_ind[0].fps
        keep = [
            i
            for i, m in enumerate(sample.target)
            if m.representation is Representation.EUCLIDEAN_XYZ
        ]
        if not keep:
            raise ValueError("no euclidean agents to score")
        pred_sel = [preds[i] for i in keep]
        gt_sel = [sample.target[i] for i in keep]
        for h in horizons:
            frame = horizon_frame_index(h, fps, sample.observed_len)
            if frame >= sample.num_frames:
                raise ValueError(
                    f"horizon {h}s maps to frame {frame} beyond the sample length "
                    f"{sample.num_frames}"
                )
            for name in metric_names:
                if name == "jpe":
                    v = jpe(pred_sel, gt_sel, frame, squared)
                elif name == "ajpe":
                    v = ajpe(pred_sel, gt_sel, frame, root_index, squared)
                elif name == "fde":
                    v = fde(pred_sel, gt_sel, frame, root_index, squared)
                elif name == "mpjpe":
                    v = mpjpe(pred_sel[0], gt_sel[0], frame, squared)
                else:
                    raise ValueError(f"unknown metric '{name}'")
                values[(name, float(h))].append(v)

    report = MetricsReport(metadata=dict(metadata or {}))
    fps0 = samples[0].x_ind[0].fps
    report.metadata.setdefault("num_samples", str(len(samples)))
    report.metadata.setdefault(
        "frame_mapping",
        "; ".join(
            f"{h}s->frame {horizon_frame_index(h, fps0, samples[0].observed_len)}"
            for h in horizons
        ),
    )
    for name in metric_names:
        for h in horizons:
            report.add(name, h, float(np.mean(values[(name, float(h))])))
    return report
