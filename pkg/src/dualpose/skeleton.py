"""Skeleton topology, pose containers, and coordinate-frame semantics.

Conventions used throughout the package:

* 3D joint positions are millimeters, 2D joint positions are pixels.
* Camera-centric poses carry absolute depth; person-centric poses are
  expressed relative to the root joint (pelvis at the origin).
* The image y axis points down, so "up" in the world is negative y.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameMismatchError

ROOT_TOLERANCE_MM = 1e-9

# COCO keypoint falloff constants, reused as the default per-joint OKS
# sigmas (truncated / padded to the skeleton's joint count).
COCO_OKS_SIGMAS = np.array(
    [0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
     0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089]
)


def default_oks_sigmas(num_joints: int) -> np.ndarray:
    """Per-joint OKS sigmas for an arbitrary joint count.

    Uses the COCO table, truncated when the skeleton is smaller and padded
    with the final entry when it is larger.
    """
    if num_joints <= len(COCO_OKS_SIGMAS):
        return COCO_OKS_SIGMAS[:num_joints].copy()
    pad = np.full(num_joints - len(COCO_OKS_SIGMAS), COCO_OKS_SIGMAS[-1])
    return np.concatenate([COCO_OKS_SIGMAS, pad])


class Frame(enum.Enum):
    """Coordinate frame of a 3D pose."""

    PERSON_CENTRIC = "person_centric"
    CAMERA_CENTRIC = "camera_centric"


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint set, bone tree, root joint, and per-joint OKS sigmas.

    ``bones`` is a list of (parent, child) joint-index pairs forming a tree
    rooted at ``root_index``.
    """

    joint_names: tuple[str, ...]
    bones: tuple[tuple[int, int], ...]
    root_index: int
    oks_sigma: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        k = len(self.joint_names)
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(
            self, "bones", tuple((int(p), int(c)) for p, c in self.bones)
        )
        if not 0 <= self.root_index < k:
            raise ValueError(f"root_index {self.root_index} outside [0, {k})")
        if len(self.bones) != k - 1:
            raise ValueError(
                f"expected {k - 1} bones for a tree over {k} joints, got {len(self.bones)}"
            )
        for p, c in self.bones:
            if not (0 <= p < k and 0 <= c < k):
                raise ValueError(f"bone ({p}, {c}) references joint outside [0, {k})")
        self._check_tree(k)
        sigma = self.oks_sigma
        if sigma is None:
            sigma = default_oks_sigmas(k)
        sigma = np.asarray(sigma, dtype=np.float64)
        if sigma.shape != (k,):
            raise ValueError(f"oks_sigma must have shape ({k},), got {sigma.shape}")
        if np.any(sigma <= 0):
            raise ValueError("all oks_sigma entries must be positive")
        object.__setattr__(self, "oks_sigma", _frozen_array(sigma))

    def _check_tree(self, k: int) -> None:
        # Connectivity from the root over undirected edges; K-1 edges plus
        # connectivity implies a tree.
        adj: list[list[int]] = [[] for _ in range(k)]
        for p, c in self.bones:
            adj[p].append(c)
            adj[c].append(p)
        seen = {self.root_index}
        stack = [self.root_index]
        while stack:
            j = stack.pop()
            for n in adj[j]:
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        if len(seen) != k:
            raise ValueError("bone graph is not connected to the root")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def bone_array(self) -> np.ndarray:
        """Bones as an (n_bones, 2) int array of (parent, child)."""
        return np.array(self.bones, dtype=np.intp)


# Default 15-joint skeleton (MuPoTS-style evaluation joints): pelvis root,
# neck, head, and left/right shoulder, elbow, wrist, hip, knee, ankle.
DEFAULT_JOINT_NAMES = (
    "pelvis", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle",
)

DEFAULT_BONES = (
    (0, 1),   # pelvis -> neck
    (1, 2),   # neck -> head
    (1, 3), (3, 4), (4, 5),      # left arm
    (1, 6), (6, 7), (7, 8),      # right arm
    (0, 9), (9, 10), (10, 11),   # left leg
    (0, 12), (12, 13), (13, 14), # right leg
)


def default_skeleton() -> SkeletonSpec:
    """The default 15-joint skeleton with COCO-derived OKS sigmas."""
    return SkeletonSpec(
        joint_names=DEFAULT_JOINT_NAMES,
        bones=DEFAULT_BONES,
        root_index=0,
    )


# Person-centric rest pose for the default skeleton (mm, y pointing down).
# Used as the reference for bone-length plausibility checks and as the base
# body shape for synthetic scenes.
DEFAULT_REST_OFFSETS_MM = np.array(
    [
        [0.0, 0.0, 0.0],        # pelvis
        [0.0, -520.0, 0.0],     # neck
        [0.0, -700.0, 0.0],     # head
        [170.0, -520.0, 0.0],   # left shoulder
        [230.0, -240.0, 0.0],   # left elbow
        [250.0, 20.0, 0.0],     # left wrist
        [-170.0, -520.0, 0.0],  # right shoulder
        [-230.0, -240.0, 0.0],  # right elbow
        [-250.0, 20.0, 0.0],    # right wrist
        [90.0, 60.0, 0.0],      # left hip
        [95.0, 480.0, 0.0],     # left knee
        [100.0, 900.0, 0.0],    # left ankle
        [-90.0, 60.0, 0.0],     # right hip
        [-95.0, 480.0, 0.0],    # right knee
        [-100.0, 900.0, 0.0],   # right ankle
    ]
)


def rest_pose(scale: float = 1.0) -> np.ndarray:
    """(K, 3) person-centric rest offsets in mm, uniformly scaled."""
    return DEFAULT_REST_OFFSETS_MM * float(scale)


def _validate_conf(conf: np.ndarray) -> None:
    if np.any(~np.isfinite(conf)) or np.any(conf < 0.0) or np.any(conf > 1.0):
        raise ValueError("confidences must be finite and within [0, 1]")


@dataclass(frozen=True)
class Pose2D:
    """K joint positions in pixels with per-joint confidences."""

    joints: np.ndarray  # (K, 2) px
    conf: np.ndarray    # (K,) in [0, 1]

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        conf = np.asarray(self.conf, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 2:
            raise ValueError(f"joints must be (K, 2), got {joints.shape}")
        if conf.shape != (joints.shape[0],):
            raise ValueError("conf must be (K,) matching joints")
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        _validate_conf(conf)
        object.__setattr__(self, "joints", _frozen_array(joints))
        object.__setattr__(self, "conf", _frozen_array(conf))

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]


@dataclass(frozen=True)
class Pose3D:
    """K joint positions in mm with per-joint confidences and a frame tag."""

    joints: np.ndarray  # (K, 3) mm
    conf: np.ndarray    # (K,) in [0, 1]
    frame: Frame

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        conf = np.asarray(self.conf, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise ValueError(f"joints must be (K, 3), got {joints.shape}")
        if conf.shape != (joints.shape[0],):
            raise ValueError("conf must be (K,) matching joints")
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        _validate_conf(conf)
        if not isinstance(self.frame, Frame):
            raise ValueError(f"frame must be a Frame enum, got {self.frame!r}")
        object.__setattr__(self, "joints", _frozen_array(joints))
        object.__setattr__(self, "conf", _frozen_array(conf))

    @property
    def num_joints(self) -> int:
        return self.joints.shape[0]

    def with_joints(self, joints: np.ndarray, frame: Frame | None = None) -> "Pose3D":
        """Copy of this pose with replaced joint positions."""
        return Pose3D(joints=joints, conf=self.conf, frame=frame or self.frame)


def pose3d_camera(joints, conf=None) -> Pose3D:
    """Convenience constructor for a camera-centric pose (conf defaults to 1)."""
    joints = np.asarray(joints, dtype=np.float64)
    if conf is None:
        conf = np.ones(joints.shape[0])
    return Pose3D(joints=joints, conf=conf, frame=Frame.CAMERA_CENTRIC)


def pose3d_person(joints, conf=None) -> Pose3D:
    """Convenience constructor for a person-centric pose (conf defaults to 1)."""
    joints = np.asarray(joints, dtype=np.float64)
    if conf is None:
        conf = np.ones(joints.shape[0])
    return Pose3D(joints=joints, conf=conf, frame=Frame.PERSON_CENTRIC)


def check_person_centric(pose: Pose3D, skel: SkeletonSpec) -> None:
    """Verify the person-centric invariant: root joint at the origin."""
    root = pose.joints[skel.root_index]
    if np.max(np.abs(root)) > ROOT_TOLERANCE_MM:
        raise ValueError(
            f"person-centric pose has non-zero root {root} (tol {ROOT_TOLERANCE_MM} mm)"
        )


def to_camera_centric(pose: Pose3D, root_position) -> Pose3D:
    """Anchor a person-centric pose at an absolute root position.

    Every joint is translated by ``root_position`` (mm); the result is tagged
    camera-centric.
    """
    if pose.frame is not Frame.PERSON_CENTRIC:
        raise FrameMismatchError("to_camera_centric expects a person-centric pose")
    root_position = np.asarray(root_position, dtype=np.float64).reshape(3)
    return Pose3D(
        joints=pose.joints + root_position,
        conf=pose.conf,
        frame=Frame.CAMERA_CENTRIC,
    )


def to_person_centric(pose: Pose3D, skel: SkeletonSpec) -> tuple[Pose3D, np.ndarray]:
    """Split a camera-centric pose into (person-centric pose, root position)."""
    if pose.frame is not Frame.CAMERA_CENTRIC:
        raise FrameMismatchError("to_person_centric expects a camera-centric pose")
    root = pose.joints[skel.root_index].copy()
    centered = Pose3D(
        joints=pose.joints - root,
        conf=pose.conf,
        frame=Frame.PERSON_CENTRIC,
    )
    return centered, root


def bone_lengths(pose: Pose3D, skel: SkeletonSpec) -> np.ndarray:
    """Euclidean length of every bone, in mm, ordered as ``skel.bones``."""
    return bone_lengths_of(pose.joints, skel)


def bone_lengths_of(joints: np.ndarray, skel: SkeletonSpec) -> np.ndarray:
    """Bone lengths for a raw (..., K, 3) joint array."""
    joints = np.asarray(joints, dtype=np.float64)
    bones = skel.bone_array
    diff = joints[..., bones[:, 1], :] - joints[..., bones[:, 0], :]
    return np.linalg.norm(diff, axis=-1)


@dataclass
class TrackSequence:
    """Time-indexed camera-centric poses for one person.

    ``frames`` maps frame index -> Pose3D; indices are kept sorted.
    """

    person_id: int | str
    frames: dict[int, Pose3D] = field(default_factory=dict)

    def __post_init__(self):
        for idx, pose in self.frames.items():
            if pose.frame is not Frame.CAMERA_CENTRIC:
                raise FrameMismatchError(
                    f"track {self.person_id} frame {idx} is not camera-centric"
                )
        self.frames = dict(sorted(self.frames.items()))

    def add(self, frame_index: int, pose: Pose3D) -> None:
        if pose.frame is not Frame.CAMERA_CENTRIC:
            raise FrameMismatchError("tracks hold camera-centric poses only")
        if self.frames and frame_index <= max(self.frames):
            if frame_index in self.frames:
                raise ValueError(f"frame {frame_index} already present")
            self.frames = dict(sorted({**self.frames, frame_index: pose}.items()))
            return
        self.frames[frame_index] = pose

    @property
    def frame_indices(self) -> list[int]:
        return list(self.frames.keys())

    def __len__(self) -> int:
        return len(self.frames)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frame_indices (T,), joints (T, K, 3), conf (T, K)) in frame order."""
        idx = np.array(self.frame_indices, dtype=np.intp)
        joints = np.stack([self.frames[i].joints for i in self.frame_indices])
        conf = np.stack([self.frames[i].conf for i in self.frame_indices])
        return idx, joints, conf

    def with_joints(self, joints: np.ndarray) -> "TrackSequence":
        """Copy of this track with replaced joint positions (same conf/indices)."""
        idx = self.frame_indices
        if joints.shape[0] != len(idx):
            raise ValueError("joint array frame count does not match track")
        frames = {
            i: self.frames[i].with_joints(joints[t])
            for t, i in enumerate(idx)
        }
        return TrackSequence(person_id=self.person_id, frames=frames)
