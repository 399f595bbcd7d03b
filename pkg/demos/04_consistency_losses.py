"""Reprojection / multi-perspective consistency and annealed sample weights."""
import numpy as np

from dualpose import (
    CameraIntrinsics,
    SslWeightState,
    default_skeleton,
    multi_perspective_loss,
    offset_lifter,
    oracle_lifter,
    project,
    reprojection_loss,
    rotate_about_y,
    ssl_total,
    ssl_weights,
)
from dualpose.skeleton import Pose2D, pose3d_camera, rest_pose

skel = default_skeleton()
cam = CameraIntrinsics(fx=1100.0, fy=1100.0, cx=640.0, cy=360.0)
pose = pose3d_camera(rest_pose() + (0.0, 0.0, 4000.0))

# Reprojection loss grows with 2D disagreement and respects confidences.
exact = Pose2D(joints=project(pose.joints, cam), conf=np.ones(skel.num_joints))
shifted = Pose2D(joints=exact.joints + (3.0, 0.0), conf=np.ones(skel.num_joints))
print("reprojection loss, exact 2D:", reprojection_loss(pose, exact, cam))
print("reprojection loss, 3 px off:", reprojection_loss(pose, shifted, cam))

# Multi-perspective consistency: rotate, project, re-lift, compare.
angle = 0.8
rotated = rotate_about_y(pose, angle, pose.joints[skel.root_index])
perfect = oracle_lifter(rotated)
biased = offset_lifter(perfect, (25.0, 0.0, 0.0))
print("consistency with a perfect lifter:",
      multi_perspective_loss(pose, cam, angle, perfect, skel))
print("consistency with a 25 mm-biased lifter:",
      multi_perspective_loss(pose, cam, angle, biased, skel))

# Per-sample weights: low-error samples dominate early, weights even out as
# the epoch counter grows, and they always sum to 2.
errors = SslWeightState(r=1, e_rep=np.array([0.1, 2.0, 5.0]),
                        e_mp=np.array([0.2, 0.2, 4.0]))
print("epoch 1 weights:", np.round(ssl_weights(errors), 3))
late = SslWeightState(r=50, e_rep=errors.e_rep, e_mp=errors.e_mp)
print("epoch 50 weights:", np.round(ssl_weights(late), 3))
print("combined objective:", ssl_total(l_rep=0.4, l_mp=0.9, l_dis=-1.2, w=1.1))
