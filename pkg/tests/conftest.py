import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest

from portvision.geometry import (
    CameraIntrinsics,
    PortModel,
    PortPose,
    rotation_aligning_z,
    rotation_z,
)
from portvision.synth import _normal_at


@pytest.fixture(scope="session")
def davis():
    return CameraIntrinsics.davis_default()


@pytest.fixture(scope="session")
def port():
    return PortModel()


def make_pose(inclination_deg, azimuth_deg, yaw_deg, position):
    """Camera-facing port pose from spherical normal parameters."""
    normal = _normal_at(np.radians(inclination_deg), np.radians(azimuth_deg))
    rot = rotation_aligning_z(normal) @ rotation_z(yaw_deg)
    return PortPose(rotation=rot, position=np.asarray(position, dtype=float))


@pytest.fixture(scope="session")
def facing_pose():
    return make_pose(35.0, 40.0, 17.0, [0.01, -0.02, 0.6])
