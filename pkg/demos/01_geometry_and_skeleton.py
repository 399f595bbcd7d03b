"""Pose containers, coordinate frames, and pinhole geometry basics."""
import numpy as np

from dualpose import (
    CameraIntrinsics,
    bone_lengths,
    default_skeleton,
    project,
    back_project,
    rotate_about_y,
    to_camera_centric,
    to_person_centric,
)
from dualpose.skeleton import pose3d_person, rest_pose

skel = default_skeleton()
print(f"skeleton: {skel.num_joints} joints, {len(skel.bones)} bones, "
      f"root = {skel.joint_names[skel.root_index]!r}")

# A person-centric body shape anchored 4 m in front of the camera.
body = pose3d_person(rest_pose())
person = to_camera_centric(body, root_position=(0.0, 0.0, 4000.0))
print("root joint (mm):", person.joints[skel.root_index])

# Splitting a camera-centric pose recovers the relative pose and the root.
centered, root = to_person_centric(person, skel)
print("round-trip residual:", float(np.max(np.abs(centered.joints - body.joints))))

# Bone lengths are rigid-motion invariants.
lengths = bone_lengths(person, skel)
spun = rotate_about_y(person, angle=1.1, pivot=person.joints[skel.root_index])
print("max bone-length drift under rotation:",
      float(np.max(np.abs(bone_lengths(spun, skel) - lengths))))

# Pinhole projection and its inverse.
cam = CameraIntrinsics(fx=1100.0, fy=1100.0, cx=640.0, cy=360.0)
uv = project(person.joints, cam)
lifted = back_project(uv, person.joints[:, 2], cam)
print("head projects to pixel:", uv[skel.joint_names.index("head")])
print("back-projection residual (mm):",
      float(np.max(np.abs(lifted - person.joints))))
