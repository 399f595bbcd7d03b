"""Rendering and decoding of the bottom-up map stack.

One stack holds, on a single image grid: per-joint 2D Gaussian heatmaps,
per-joint ID-tag maps (constant per person around each joint), per-joint
relative-depth maps (mm with respect to the person's root), and one root
depth map (absolute camera depth of the root joint).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, back_project, project
from .errors import OutOfGridError, SchemaError
from .skeleton import Frame, Pose2D, Pose3D, SkeletonSpec

MAGIC = b"PHMS"
FORMAT_VERSION = 1

DEFAULT_PEAK_THRESHOLD = 0.3
DEFAULT_TAG_THRESHOLD = 1.0
DEFAULT_SIGMA_PX = 2.0


@dataclass(frozen=True)
class HeatmapStack:
    """Bottom-up map stack on one (height, width) grid.

    ``joint_maps`` (K, H, W) in [0, 1]; ``tag_maps`` (K, H, W) unit-free;
    ``rel_depth_maps`` (K, H, W) mm relative to the root; ``root_depth_map``
    (H, W) mm absolute.
    """

    width: int
    height: int
    joint_maps: np.ndarray
    tag_maps: np.ndarray
    rel_depth_maps: np.ndarray
    root_depth_map: np.ndarray

    def __post_init__(self):
        k = self.joint_maps.shape[0]
        expected = (k, self.height, self.width)
        for name in ("joint_maps", "tag_maps", "rel_depth_maps"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != expected:
                raise ValueError(f"{name} must have shape {expected}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        root = np.asarray(self.root_depth_map, dtype=np.float64)
        if root.shape != (self.height, self.width):
            raise ValueError(
                f"root_depth_map must have shape {(self.height, self.width)}, got {root.shape}"
            )
        object.__setattr__(self, "root_depth_map", root)
        if np.any(self.joint_maps < 0.0) or np.any(self.joint_maps > 1.0):
            raise ValueError("joint_maps values must lie within [0, 1]")

    @property
    def num_joints(self) -> int:
        return self.joint_maps.shape[0]


def bilinear_sample(grid: np.ndarray, u: float, v: float) -> float:
    """Bilinear interpolation of a (H, W) grid at pixel (u, v).

    Sample points must satisfy 0 <= u <= W-1 and 0 <= v <= H-1.
    """
    h, w = grid.shape
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        raise OutOfGridError(f"sample ({u}, {v}) outside grid {w}x{h}")
    x0 = min(int(np.floor(u)), w - 2) if w > 1 else 0
    y0 = min(int(np.floor(v)), h - 2) if h > 1 else 0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = u - x0
    fy = v - y0
    top = grid[y0, x0] * (1.0 - fx) + grid[y0, x1] * fx
    bot = grid[y1, x0] * (1.0 - fx) + grid[y1, x1] * fx
    return float(top * (1.0 - fy) + bot * fy)


def nearest_sample(grid: np.ndarray, u: float, v: float) -> float:
    """Nearest-cell lookup of a (H, W) grid at pixel (u, v)."""
    h, w = grid.shape
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        raise OutOfGridError(f"sample ({u}, {v}) outside grid {w}x{h}")
    return float(grid[int(round(v)), int(round(u))])


_SAMPLERS = {"bilinear": bilinear_sample, "nearest": nearest_sample}


def extract_peaks(stack: HeatmapStack, theta_peak: float = DEFAULT_PEAK_THRESHOLD
                  ) -> list[list[tuple[float, float, float]]]:
    """Per-joint sub-pixel peak candidates (u, v, score).

    A peak is a cell strictly greater than its in-bounds 8-neighborhood with
    score >= theta_peak.  The integer location is refined by a 0.25 px shift
    toward the larger neighbor along each axis.  Peaks are ordered by
    descending score (ties by row-major position).

    Exact plateau ties (a Gaussian centered exactly halfway between two
    cells) have no strictly-greater cell and yield no peak; real-valued
    inputs hit this with probability zero.
    """
    if not 0.0 < theta_peak < 1.0:
        raise ValueError("theta_peak must lie in (0, 1)")
    h, w = stack.height, stack.width
    results: list[list[tuple[float, float, float]]] = []
    for k in range(stack.num_joints):
        m = stack.joint_maps[k]
        # Strictly-greater comparison against shifted copies; out-of-bounds
        # neighbors compare as -inf so border peaks survive.
        pad = np.full((h + 2, w + 2), -np.inf)
        pad[1:-1, 1:-1] = m
        center = pad[1:-1, 1:-1]
        is_peak = np.ones((h, w), dtype=bool)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                neighbor = pad[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx]
                is_peak &= center > neighbor
        is_peak &= m >= theta_peak
        ys, xs = np.nonzero(is_peak)
        peaks = []
        for y, x in zip(ys.tolist(), xs.tolist()):
            u = float(x)
            v = float(y)
            if 0 < x < w - 1:
                u += 0.25 * np.sign(m[y, x + 1] - m[y, x - 1])
            if 0 < y < h - 1:
                v += 0.25 * np.sign(m[y + 1, x] - m[y - 1, x])
            peaks.append((u, v, float(m[y, x])))
        peaks.sort(key=lambda p: (-p[2], p[1], p[0]))
        results.append(peaks)
    return results


def group_by_tags(peaks: list[list[tuple[float, float, float]]],
                  tag_maps: np.ndarray, theta_tag: float = DEFAULT_TAG_THRESHOLD,
                  sampling: str = "bilinear") -> list[Pose2D]:
    """Greedy grouping of joint peaks into persons by ID-tag proximity.

    Each peak joins the existing group whose running mean tag is nearest and
    within ``theta_tag`` (among groups still missing that joint); otherwise
    it starts a new group.  Missing joints get position (0, 0) and conf 0.
    """
    if theta_tag <= 0:
        raise ValueError("theta_tag must be positive")
    sample = _SAMPLERS[sampling]
    k = len(peaks)
    groups: list[dict] = []  # {"joints": {k: (u, v, score)}, "tag_sum", "n"}
    for joint in range(k):
        for (u, v, score) in peaks[joint]:
            tag = sample(tag_maps[joint], u, v)
            best = None
            best_dist = None
            for g in groups:
                if joint in g["joints"]:
                    continue
                dist = abs(g["tag_sum"] / g["n"] - tag)
                if dist <= theta_tag and (best_dist is None or dist < best_dist):
                    best = g
                    best_dist = dist
            if best is None:
                groups.append({"joints": {joint: (u, v, score)},
                               "tag_sum": tag, "n": 1})
            else:
                best["joints"][joint] = (u, v, score)
                best["tag_sum"] += tag
                best["n"] += 1
    poses = []
    for g in groups:
        joints = np.zeros((k, 2))
        conf = np.zeros(k)
        for joint, (u, v, score) in g["joints"].items():
            joints[joint] = (u, v)
            conf[joint] = min(max(score, 0.0), 1.0)
        poses.append(Pose2D(joints=joints, conf=conf))
    return poses


def retrieve_depths(pose2d: Pose2D, stack: HeatmapStack, skel: SkeletonSpec,
                    sampling: str = "bilinear") -> tuple[float, np.ndarray]:
    """Read (root depth, per-joint relative depths) at the pose's joints.

    The root depth map is sampled at the root joint; each relative-depth
    map is sampled at its own joint.  Raises OutOfGridError for joints
    outside the grid.
    """
    sample = _SAMPLERS[sampling]
    ru, rv = pose2d.joints[skel.root_index]
    z_root = sample(stack.root_depth_map, ru, rv)
    z_rel = np.empty(pose2d.num_joints)
    for k in range(pose2d.num_joints):
        u, v = pose2d.joints[k]
        z_rel[k] = sample(stack.rel_depth_maps[k], u, v)
    return z_root, z_rel


def render_stack(poses: list[Pose3D], cam: CameraIntrinsics, skel: SkeletonSpec,
                 width: int, height: int, sigma_px: float = DEFAULT_SIGMA_PX,
                 tags: list[float] | None = None) -> HeatmapStack:
    """Render camera-centric poses into a map stack (synthesis oracle).

    Joint maps are max-composited Gaussians at the projected joints.  Tag
    and depth values at each pixel come from whichever person's Gaussian
    dominates there, so depth reads near a peak return that person's exact
    values.  All joints must project inside the grid.
    """
    k = skel.num_joints
    n = len(poses)
    joint_maps = np.zeros((k, height, width))
    tag_maps = np.zeros((k, height, width))
    rel_maps = np.zeros((k, height, width))
    root_map = np.zeros((height, width))
    if n == 0:
        return HeatmapStack(width=width, height=height, joint_maps=joint_maps,
                            tag_maps=tag_maps, rel_depth_maps=rel_maps,
                            root_depth_map=root_map)
    if tags is None:
        tags = [float(2 * i) for i in range(n)]
    if len(tags) != n:
        raise ValueError("one tag value per pose required")

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    two_sigma_sq = 2.0 * sigma_px * sigma_px

    uv_all = []
    for pose in poses:
        if pose.frame is not Frame.CAMERA_CENTRIC:
            raise ValueError("render_stack expects camera-centric poses")
        uv = project(pose.joints, cam)
        if np.any(uv[:, 0] < 0) or np.any(uv[:, 0] > width - 1) or \
           np.any(uv[:, 1] < 0) or np.any(uv[:, 1] > height - 1):
            raise OutOfGridError("pose projects outside the heatmap grid")
        uv_all.append(uv)

    root_gauss = np.zeros((n, height, width))
    for joint in range(k):
        gauss = np.empty((n, height, width))
        for i, (pose, uv) in enumerate(zip(poses, uv_all)):
            u, v = uv[joint]
            gauss[i] = np.exp(-((xs - u) ** 2 + (ys - v) ** 2) / two_sigma_sq)
            if joint == skel.root_index:
                root_gauss[i] = gauss[i]
        winner = np.argmax(gauss, axis=0)
        joint_maps[joint] = np.max(gauss, axis=0)
        tag_vals = np.array(tags)
        rel_vals = np.array([
            pose.joints[joint, 2] - pose.joints[skel.root_index, 2]
            for pose in poses
        ])
        tag_maps[joint] = tag_vals[winner]
        rel_maps[joint] = rel_vals[winner]
    root_winner = np.argmax(root_gauss, axis=0)
    root_vals = np.array([pose.joints[skel.root_index, 2] for pose in poses])
    root_map = root_vals[root_winner]

    return HeatmapStack(width=width, height=height, joint_maps=joint_maps,
                        tag_maps=tag_maps, rel_depth_maps=rel_maps,
                        root_depth_map=root_map)


def decode_stack(stack: HeatmapStack, skel: SkeletonSpec,
                 theta_peak: float = DEFAULT_PEAK_THRESHOLD,
                 theta_tag: float = DEFAULT_TAG_THRESHOLD,
                 sampling: str = "bilinear"
                 ) -> list[tuple[Pose2D, float, np.ndarray]]:
    """Full decode: peaks -> person groups -> depth retrieval.

    Returns (pose2d, root depth, per-joint relative depths) per person.
    Persons whose root joint was not detected are dropped (their absolute
    depth is unreadable).
    """
    peaks = extract_peaks(stack, theta_peak)
    grouped = group_by_tags(peaks, stack.tag_maps, theta_tag, sampling)
    out = []
    for pose in grouped:
        if pose.conf[skel.root_index] <= 0.0:
            continue
        z_root, z_rel = retrieve_depths(pose, stack, skel, sampling)
        out.append((pose, z_root, z_rel))
    return out


def decode_poses(stack: HeatmapStack, cam: CameraIntrinsics, skel: SkeletonSpec,
                 theta_peak: float = DEFAULT_PEAK_THRESHOLD,
                 theta_tag: float = DEFAULT_TAG_THRESHOLD,
                 sampling: str = "bilinear") -> list[Pose3D]:
    """Decode a stack into camera-centric 3D poses.

    Joint depth = root depth + relative depth; each joint is back-projected
    at its own depth.  Undetected joints reuse the root depth so the lifted
    point stays finite (their confidence remains 0).
    """
    out = []
    for pose2d, z_root, z_rel in decode_stack(stack, skel, theta_peak,
                                              theta_tag, sampling):
        depths = z_root + np.where(pose2d.conf > 0.0, z_rel, 0.0)
        joints = back_project(pose2d.joints, depths, cam)
        out.append(Pose3D(joints=joints, conf=pose2d.conf,
                          frame=Frame.CAMERA_CENTRIC))
    return out


def write_stack(stack: HeatmapStack, path) -> None:
    """Serialize a stack to the binary tensor format.

    Layout: magic "PHMS", u16 version, little-endian u32 {K, width, height},
    then joint/tag/rel-depth/root-depth maps as row-major float32.
    """
    header = MAGIC + struct.pack("<H3I", FORMAT_VERSION, stack.num_joints,
                                 stack.width, stack.height)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (stack.joint_maps, stack.tag_maps, stack.rel_depth_maps,
                    stack.root_depth_map):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_stack(path) -> HeatmapStack:
    """Read a stack from the binary tensor format written by write_stack."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header_size = len(MAGIC) + struct.calcsize("<H3I")
    if len(blob) < header_size or blob[:4] != MAGIC:
        raise SchemaError(f"{path}: not a heatmap stack file (bad magic)")
    version, k, width, height = struct.unpack_from("<H3I", blob, 4)
    if version != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported version {version}")
    plane = width * height
    expected = header_size + 4 * plane * (3 * k + 1)
    if len(blob) != expected:
        raise SchemaError(
            f"{path}: truncated stack, expected {expected} bytes, got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=header_size).astype(np.float64)
    offset = 0

    def take(count):
        nonlocal offset
        chunk = data[offset:offset + count]
        offset += count
        return chunk

    joint = take(k * plane).reshape(k, height, width)
    tag = take(k * plane).reshape(k, height, width)
    rel = take(k * plane).reshape(k, height, width)
    root = take(plane).reshape(height, width)
    return HeatmapStack(width=width, height=height, joint_maps=joint,
                        tag_maps=tag, rel_depth_maps=rel, root_depth_map=root)
