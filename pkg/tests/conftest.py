import json

import numpy as np
import pytest

from echo_motion.core_types import (
    Motion,
    Representation,
    SkeletonSpec,
    skeleton_toy5,
)


@pytest.fixture
def toy_skeleton() -> SkeletonSpec:
    return skeleton_toy5()


@pytest.fixture
def chain3_file(tmp_path):
    """Planar 3-joint arm about z with markers at the elbow and wrist frames."""
    spec = {
        "joints": [
            {
                "axis": [0, 0, 1],
                "origin": {"rotation": np.eye(3).tolist(), "translation_mm": [0, 0, 0]},
                "limits_rad": [-3.2, 3.2],
            },
            {
                "axis": [0, 0, 1],
                "origin": {"rotation": np.eye(3).tolist(), "translation_mm": [100, 0, 0]},
                "limits_rad": [-3.2, 3.2],
            },
            {
                "axis": [0, 0, 1],
                "origin": {"rotation": np.eye(3).tolist(), "translation_mm": [80, 0, 0]},
                "limits_rad": [-3.2, 3.2],
            },
        ],
        "end_effectors": [1, 2],
    }
    path = tmp_path / "arm3.json"
    path.write_text(json.dumps(spec))
    return path


def random_motion(rng, frames=6, joints=4, fps=30.0, scale=100.0) -> Motion:
    return Motion(
        rng.normal(scale=scale, size=(frames, joints, 3)),
        Representation.EUCLIDEAN_XYZ,
        fps,
    )
