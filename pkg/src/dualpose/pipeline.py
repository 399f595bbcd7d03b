"""End-to-end chain: per-frame matching, fusion, track assembly,
sequence refinement, and evaluation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MisalignedFramesError, SchemaError
from .frames_io import (
    FrameRecord,
    RunConfig,
    frames_by_index,
    poses_to_record,
    read_frames,
)
from .fusion import fuse_frame
from .matching import match_sets
from .metrics import MetricReport, evaluate_frames
from .skeleton import Pose2D, Pose3D, TrackSequence
from .tto import TraceRow, optimize


@dataclass
class PipelineResult:
    """Everything the chain produced for one input set."""

    refined_records: list[FrameRecord]
    fused_records: list[FrameRecord]
    report: MetricReport | None
    traces: dict[int | str, list[TraceRow]]


def records_to_pose_map(records: list[FrameRecord]
                         ) -> dict[int, tuple[list[Pose3D], list[int | None]]]:
    out = {}
    for idx, rec in frames_by_index(records).items():
        poses = [p.to_pose3d() for p in rec.persons]
        ids = [p.person_id for p in rec.persons]
        out[idx] = (poses, ids)
    return out


def records_to_obs_map(records: list[FrameRecord]
                        ) -> dict[int, tuple[list[Pose2D], list[int | None]]]:
    out = {}
    for idx, rec in frames_by_index(records).items():
        out[idx] = ([p.to_pose2d() for p in rec.persons],
                    [p.person_id for p in rec.persons])
    return out


def link_tracks(frames: dict[int, tuple[list[Pose3D], list[int | None]]],
                root_index: int, gate_mm: float) -> list[TrackSequence]:
    """Assemble per-person tracks from per-frame pose lists.

    Poses carrying a person_id join that identity directly.  Unlabeled poses
    are linked greedily to the nearest track root from the previous frame
    within ``gate_mm``; leftovers start new tracks.
    """
    tracks: dict[int | str, TrackSequence] = {}
    last_seen: dict[int | str, tuple[int, np.ndarray]] = {}
    next_auto = 0
    for frame_idx in sorted(frames):
        poses, ids = frames[frame_idx]
        unlabeled: list[tuple[int, Pose3D]] = []
        for pose, pid in zip(poses, ids):
            if pid is not None:
                key = pid
                if key not in tracks:
                    tracks[key] = TrackSequence(person_id=key, frames={})
                tracks[key].add(frame_idx, pose)
                last_seen[key] = (frame_idx, pose.joints[root_index])
            else:
                unlabeled.append((len(unlabeled), pose))
        if unlabeled:
            candidates = [
                (key, root) for key, (seen_at, root) in last_seen.items()
                if seen_at == frame_idx - 1 and frame_idx not in tracks[key].frames
            ]
            assigned: set[int | str] = set()
            # Globally greedy: nearest (pose, track) pairs first.
            options = []
            for slot, pose in unlabeled:
                root = pose.joints[root_index]
                for key, track_root in candidates:
                    d = float(np.linalg.norm(root - track_root))
                    if d <= gate_mm:
                        options.append((d, slot, key))
            options.sort(key=lambda item: (item[0], item[1], str(item[2])))
            placed: set[int] = set()
            for d, slot, key in options:
                if slot in placed or key in assigned:
                    continue
                pose = unlabeled[slot][1]
                tracks[key].add(frame_idx, pose)
                last_seen[key] = (frame_idx, pose.joints[root_index])
                placed.add(slot)
                assigned.add(key)
            for slot, pose in unlabeled:
                if slot in placed:
                    continue
                key = f"auto{next_auto}"
                next_auto += 1
                tracks[key] = TrackSequence(person_id=key, frames={frame_idx: pose})
                last_seen[key] = (frame_idx, pose.joints[root_index])
    return [tracks[k] for k in sorted(tracks, key=str)]


def fuse_sources(config: RunConfig,
                 td_map: dict[int, tuple[list[Pose3D], list[int | None]]],
                 bu_map: dict[int, tuple[list[Pose3D], list[int | None]]],
                 ) -> dict[int, tuple[list[Pose3D], list[int | None]]]:
    """Per-frame matching and fusion over the union of frame indices."""
    skel = config.skeleton
    fused: dict[int, tuple[list[Pose3D], list[int | None]]] = {}
    for frame_idx in sorted(set(td_map) | set(bu_map)):
        td_poses, td_ids = td_map.get(frame_idx, ([], []))
        bu_poses, bu_ids = bu_map.get(frame_idx, ([], []))
        match = match_sets(td_poses, bu_poses, config.match)
        poses = fuse_frame(match, td_poses, bu_poses, config.fusion, skel)
        ids: list[int | None] = []
        for i, j, _ in match.pairs:
            ids.append(td_ids[i] if td_ids[i] is not None else bu_ids[j])
        ids.extend(td_ids[i] for i in match.unmatched_td)
        ids.extend(bu_ids[j] for j in match.unmatched_bu)
        fused[frame_idx] = (poses, ids)
    return fused


def track_observations(track: TrackSequence,
                        obs_map: dict[int, tuple[list[Pose2D], list[int | None]]] | None,
                        ) -> dict[int, Pose2D] | None:
    """Observations aligned to one track, matched by person_id."""
    if obs_map is None:
        return None
    out: dict[int, Pose2D] = {}
    for frame_idx in track.frame_indices:
        if frame_idx not in obs_map:
            continue
        poses, ids = obs_map[frame_idx]
        for pose, pid in zip(poses, ids):
            if pid == track.person_id:
                out[frame_idx] = pose
                break
    return out or None


def run_pipeline(config: RunConfig, td_path, bu_path=None, gt_path=None,
                 obs_path=None, trace_path=None) -> PipelineResult:
    """Execute match -> fuse -> link -> refine -> evaluate on frame files.

    A missing BU file degrades to TD passthrough with a warning.  Without
    2D observations the refinement runs with the reprojection term disabled.
    Evaluation happens only when a ground-truth file is supplied.
    """
    num_joints = config.skeleton.num_joints
    td_records = read_frames(td_path, num_joints)
    if not td_records and bu_path is None:
        raise SchemaError(f"{td_path}: no frames found")
    td_map = records_to_pose_map(td_records)

    if bu_path is not None:
        bu_map = records_to_pose_map(read_frames(bu_path, num_joints))
    else:
        warnings.warn("no bottom-up input: running in TD passthrough mode")
        bu_map = {}

    obs_map = None
    if obs_path is not None:
        obs_map = records_to_obs_map(read_frames(obs_path, num_joints))

    fused = fuse_sources(config, td_map, bu_map)
    if not fused:
        raise SchemaError("inputs contain no frames")
    fused_records = [
        poses_to_record(idx, "fused", fused[idx][0], fused[idx][1])
        for idx in sorted(fused)
    ]

    tracks = link_tracks(fused, config.skeleton.root_index, config.linker_gate_mm)

    tto_cfg = config.tto
    if obs_map is None:
        # No 2D anchors: drop the reprojection term entirely.
        from .tto import TtoConfig
        tto_cfg = TtoConfig(
            windows=config.tto.windows,
            c_rep_stage1=0.0, c_rep_stage2=0.0,
            c_bone=config.tto.c_bone,
            iters_per_stage=config.tto.iters_per_stage,
            step_size=config.tto.step_size,
            two_stage=config.tto.two_stage,
        )

    max_window = max(tto_cfg.window_map().values(), default=0)
    refined_by_frame: dict[int, list[tuple[Pose3D, int | str | None]]] = {
        idx: [] for idx in fused
    }
    traces: dict[int | str, list[TraceRow]] = {}
    for track in tracks:
        if len(track) > max_window:
            obs = track_observations(track, obs_map)
            refined, state = optimize(track, obs, config.camera, tto_cfg,
                                      config.skeleton)
            traces[track.person_id] = state.trace
        else:
            refined = track  # too short to fit any trajectory window
        for frame_idx in refined.frame_indices:
            refined_by_frame[frame_idx].append(
                (refined.frames[frame_idx], refined.person_id))

    refined_records = []
    for idx in sorted(refined_by_frame):
        entries = refined_by_frame[idx]
        poses = [p for p, _ in entries]
        ids = [pid if isinstance(pid, int) else None for _, pid in entries]
        refined_records.append(poses_to_record(idx, "fused", poses, ids))

    if trace_path is not None and traces:
        write_combined_trace(traces, trace_path)

    report = None
    if gt_path is not None:
        gt_map = records_to_pose_map(read_frames(gt_path, num_joints))
        missing = sorted(set(gt_map) - set(refined_by_frame))
        if missing:
            raise MisalignedFramesError(
                f"ground truth covers frames absent from predictions: {missing[:5]}"
            )
        pred_frames = [[p for p, _ in refined_by_frame[idx]] for idx in sorted(gt_map)]
        gt_frames = [gt_map[idx][0] for idx in sorted(gt_map)]
        report = evaluate_frames(pred_frames, gt_frames, config.skeleton,
                                 config.metrics)

    return PipelineResult(
        refined_records=refined_records,
        fused_records=fused_records,
        report=report,
        traces=traces,
    )


def write_combined_trace(traces: dict[int | str, list[TraceRow]], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["track", "iteration", "stage", "l_traj", "l_rep",
                         "l_bone", "total"])
        for key in sorted(traces, key=str):
            for row in traces[key]:
                writer.writerow([key, row.iteration, row.stage, repr(row.l_traj),
                                 repr(row.l_rep), repr(row.l_bone), repr(row.total)])
