"""Per-frame preprocessing: ground split, gridding, clustering, binning.

Frames are independent; each derives its own random stream from the root
seed and its frame id, so running with one worker or many produces
byte-identical artifacts.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset_io, ground, partition
from .cluster import HdbscanParams, hdbscan
from .dataset_io import DatasetIndex
from .ground import GroundParams
from .partition import ClusterRecord, PartitionTable
from .rng import derive_seed


@dataclass
class FrameArtifacts:
    frame_id: str
    clusters: list[ClusterRecord]
    ground_cells: list[ClusterRecord]
    ground_mask: np.ndarray
    cluster_ids: np.ndarray


def preprocess_frame(
    points_path,
    frame_id: str,
    ground_params: GroundParams,
    hdbscan_params: HdbscanParams,
    seed: int,
    cell_size: float = ground.DEFAULT_CELL_SIZE,
) -> FrameArtifacts:
    """Ground/cluster split of one frame into unassigned cluster records."""
    frame = dataset_io.load_frame(points_path, frame_id)
    n = frame.n_points
    if n < 3:
        if n > 0:
            warnings.warn(f"frame {frame_id}: only {n} points, no ground fit")
        mask = np.zeros(n, dtype=bool)
    else:
        mask = ground.segment_ground(
            frame, ground_params, derive_seed(seed, "ground", frame_id)
        )

    ground_cells = []
    for cell in ground.grid_ground(frame, mask, cell_size):
        i, j = cell.cell
        ground_cells.append(
            ClusterRecord(
                frame_id=frame_id,
                local_id=f"g{i}_{j}",
                point_indices=cell.point_indices,
                n_points=int(cell.point_indices.size),
                size=partition.cluster_size(frame.xyz[cell.point_indices]),
            )
        )

    nonground = np.flatnonzero(~mask)
    min_usable = max(hdbscan_params.min_cluster_size, hdbscan_params.min_samples + 1)
    if nonground.size >= min_usable:
        labels = hdbscan(frame.xyz[nonground], hdbscan_params)
    else:
        if nonground.size:
            warnings.warn(
                f"frame {frame_id}: {nonground.size} non-ground points, "
                "too few to cluster; all noise"
            )
        labels = np.full(nonground.size, -1, dtype=np.int64)

    clusters = []
    for k in range(int(labels.max()) + 1 if labels.size else 0):
        idx = nonground[labels == k]
        clusters.append(
            ClusterRecord(
                frame_id=frame_id,
                local_id=f"c{k:05d}",
                point_indices=idx,
                n_points=int(idx.size),
                size=partition.cluster_size(frame.xyz[idx]),
            )
        )

    cluster_ids = np.full(n, -1, dtype=np.int32)
    cluster_ids[mask] = -2
    if nonground.size:
        cluster_ids[nonground] = labels.astype(np.int32)
    return FrameArtifacts(
        frame_id=frame_id,
        clusters=clusters,
        ground_cells=ground_cells,
        ground_mask=mask,
        cluster_ids=cluster_ids,
    )


def _worker(args) -> FrameArtifacts:
    points_path, frame_id, gp, hp, seed, cell_size = args
    return preprocess_frame(points_path, frame_id, gp, hp, seed, cell_size)


def preprocess_dataset(
    index: DatasetIndex,
    n_bins: int,
    ground_params: GroundParams,
    hdbscan_params: HdbscanParams,
    seed: int,
    size_cap: float = partition.DEFAULT_SIZE_CAP,
    cell_size: float = ground.DEFAULT_CELL_SIZE,
    jobs: int = 1,
    out_dir=None,
    header: dict | None = None,
) -> tuple[list[ClusterRecord], PartitionTable]:
    """Run the full preprocessing over a dataset; optionally write artifacts.

    Returns all cluster records (partition ids assigned, oversized
    clusters marked filtered) and the partition table.
    """
    tasks = [
        (str(e.points_path), e.frame_id, ground_params, hdbscan_params, seed, cell_size)
        for e in index.frames
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]

    clusters: list[ClusterRecord] = []
    ground_cells: list[ClusterRecord] = []
    for res in results:
        clusters.extend(res.clusters)
        ground_cells.extend(res.ground_cells)

    unfiltered = [r for r in clusters if r.size <= size_cap]
    stats = partition.size_statistics(unfiltered)
    table = partition.adaptive_bins(stats, n_bins, size_cap)
    records = partition.assign_partitions(clusters, ground_cells, table)

    if out_dir is not None:
        out_dir = Path(out_dir)
        sidecar_dir = out_dir / "sidecars"
        sidecar_dir.mkdir(parents=True, exist_ok=True)
        for res in results:
            dataset_io.write_ground_mask(
                sidecar_dir / f"{res.frame_id}.gmask", res.ground_mask
            )
            dataset_io.write_cluster_ids(
                sidecar_dir / f"{res.frame_id}.clu", res.cluster_ids
            )
        header = header or {}
        counts: dict[str, list[int]] = {}
        for rec in records:
            acc = counts.setdefault(rec.partition_id, [0, 0])
            acc[0] += 1
            acc[1] += rec.n_points
        summary = {
            "total_points": index.total_points,
            "partition_counts": {
                pid: {"n_clusters": c, "n_points": p}
                for pid, (c, p) in sorted(
                    counts.items(), key=lambda kv: partition.partition_sort_key(kv[0])
                )
            },
        }
        partition.write_partitions_json(
            out_dir / "partitions.json", table, summary, header
        )
        partition.write_clusters_jsonl(out_dir / "clusters.jsonl", records, header)
    return records, table
