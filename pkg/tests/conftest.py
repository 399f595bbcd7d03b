import numpy as np
import pytest

from dualpose.camera import CameraIntrinsics
from dualpose.skeleton import Frame, Pose3D, default_skeleton, rest_pose


@pytest.fixture(scope="session")
def skel():
    return default_skeleton()


@pytest.fixture(scope="session")
def cam():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=500.0, cy=500.0)


def random_camera_pose(rng, skel, center=(0.0, 0.0, 3500.0), spread_mm=150.0,
                       conf=None) -> Pose3D:
    """Human-shaped pose near `center` with per-joint jitter."""
    joints = rest_pose() + np.asarray(center) + spread_mm * rng.standard_normal((skel.num_joints, 3))
    if conf is None:
        conf = np.ones(skel.num_joints)
    return Pose3D(joints=joints, conf=conf, frame=Frame.CAMERA_CENTRIC)


def random_point_pose(rng, num_joints, center=(0.0, 0.0, 3500.0), spread_mm=400.0,
                      conf=None) -> Pose3D:
    """Unstructured point cloud pose (no body prior)."""
    joints = np.asarray(center) + spread_mm * rng.standard_normal((num_joints, 3))
    if conf is None:
        conf = np.ones(num_joints)
    return Pose3D(joints=joints, conf=conf, frame=Frame.CAMERA_CENTRIC)
