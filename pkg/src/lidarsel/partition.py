"""Cluster sizes, per-size information statistics, and adaptive binning.

Every selectable unit is a ClusterRecord. Non-ground clusters get an
integer size (rounded sum of the bounding-box dimensions) and are grouped
into B contiguous size ranges with approximately equal accumulated
average-point-information; ground cells form their own partition and
oversized clusters are filtered out of the selectable pool.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

GROUND = "ground"
FILTERED = "filtered"

DEFAULT_SIZE_CAP = 25.0
DEFAULT_N_BINS = 3


@dataclass
class ClusterRecord:
    """One selectable unit: an object cluster or a ground grid cell."""

    frame_id: str
    local_id: str
    point_indices: np.ndarray
    n_points: int
    size: int
    partition_id: str | None = None

    @property
    def uid(self) -> tuple[str, str]:
        return (self.frame_id, self.local_id)

    @property
    def is_ground(self) -> bool:
        return self.local_id.startswith("g")


@dataclass(frozen=True)
class SizeGroupStats:
    size: int
    n_clusters: int
    n_points: int
    api: float


@dataclass(frozen=True)
class BinRange:
    partition_id: str
    size_lo: int
    size_hi: int
    api_sum: float
    n_clusters: int
    n_points: int


@dataclass(frozen=True)
class PartitionTable:
    n_bins: int
    bins: tuple[BinRange, ...]
    size_cap: float = DEFAULT_SIZE_CAP

    def partition_ids(self, include_ground: bool = True) -> list[str]:
        ids = [b.partition_id for b in self.bins]
        if include_ground:
            ids.append(GROUND)
        return ids

    def lookup(self, size: int) -> str:
        """Bin id for a size; sizes outside the observed range but within
        the cap clamp to the nearest terminal bin with a warning."""
        if size > self.size_cap:
            return FILTERED
        for b in self.bins:
            if b.size_lo <= size <= b.size_hi:
                return b.partition_id
        if size < self.bins[0].size_lo:
            warnings.warn(f"size {size} below binned range; clamping to first bin")
            return self.bins[0].partition_id
        warnings.warn(f"size {size} above binned range; clamping to last bin")
        return self.bins[-1].partition_id


def cluster_size(points: np.ndarray) -> int:
    """Rounded (half away from zero) sum of the bounding-box dimensions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 1:
        raise ValueError("cluster must contain at least one point")
    extent = pts[:, :3].max(axis=0) - pts[:, :3].min(axis=0)
    return int(math.floor(extent.sum() + 0.5))


def size_statistics(records: list[ClusterRecord]) -> dict[int, SizeGroupStats]:
    """Per-size cluster/point counts and API = n_clusters / ln(n_points).

    Groups whose accumulated point count is <= 1 have an undefined score
    (ln 1 = 0) and are dropped with a warning.
    """
    if not records:
        raise ValueError("no cluster records to aggregate")
    counts: dict[int, list[int]] = {}
    for rec in records:
        acc = counts.setdefault(rec.size, [0, 0])
        acc[0] += 1
        acc[1] += rec.n_points
    stats: dict[int, SizeGroupStats] = {}
    for size in sorted(counts):
        n_clusters, n_points = counts[size]
        if n_points <= 1:
            warnings.warn(
                f"size group {size} has {n_points} point(s); "
                "information score undefined, group excluded"
            )
            continue
        stats[size] = SizeGroupStats(
            size=size,
            n_clusters=n_clusters,
            n_points=n_points,
            api=n_clusters / math.log(n_points),
        )
    return stats


def adaptive_bins(
    stats: dict[int, SizeGroupStats],
    n_bins: int = DEFAULT_N_BINS,
    size_cap: float = DEFAULT_SIZE_CAP,
) -> PartitionTable:
    """Split the ascending size axis into n_bins contiguous ranges.

    Greedy sweep: bin i closes at the first size where the cumulative API
    reaches i/n_bins of the total, so every bin's accumulated API deviates
    from total/n_bins by less than the largest single-size API. A bin also
    closes early when exactly one size per remaining bin is left, which
    guarantees n_bins non-empty bins.
    """
    if n_bins < 1:
        raise ConfigError("number of partitions must be >= 1")
    sizes = sorted(stats)
    if len(sizes) < n_bins:
        raise ConfigError(
            f"need at least {n_bins} size groups with defined API, got {len(sizes)}"
        )
    apis = [stats[s].api for s in sizes]
    total = sum(apis)

    ranges: list[tuple[int, int]] = []
    i = 0
    prefix = 0.0
    for b in range(1, n_bins):
        first = i
        while True:
            prefix += apis[i]
            i += 1
            if prefix >= total * b / n_bins or len(sizes) - i == n_bins - b:
                break
        ranges.append((sizes[first], sizes[i - 1]))
    ranges.append((sizes[i], sizes[-1]))

    bins = []
    for b, (lo, hi) in enumerate(ranges, start=1):
        members = [stats[s] for s in sizes if lo <= s <= hi]
        bins.append(
            BinRange(
                partition_id=str(b),
                size_lo=lo,
                size_hi=hi,
                api_sum=sum(m.api for m in members),
                n_clusters=sum(m.n_clusters for m in members),
                n_points=sum(m.n_points for m in members),
            )
        )
    return PartitionTable(n_bins=n_bins, bins=tuple(bins), size_cap=size_cap)


def assign_partitions(
    clusters: list[ClusterRecord],
    ground_cells: list[ClusterRecord],
    table: PartitionTable,
) -> list[ClusterRecord]:
    """Set partition_id on every record; returns clusters + ground cells."""
    for rec in clusters:
        rec.partition_id = table.lookup(rec.size)
    for rec in ground_cells:
        rec.partition_id = GROUND
    return clusters + ground_cells


def partition_sort_key(partition_id: str) -> tuple[int, object]:
    if partition_id.isdigit():
        return (0, int(partition_id))
    return (1, partition_id)


# --- artifact serialization -------------------------------------------------

def _indices_to_ranges(indices: np.ndarray) -> list[list[int]]:
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    ranges: list[list[int]] = []
    start = prev = int(idx[0])
    for v in idx[1:]:
        v = int(v)
        if v == prev + 1:
            prev = v
            continue
        ranges.append([start, prev + 1])
        start = prev = v
    ranges.append([start, prev + 1])
    return ranges


def _ranges_to_indices(ranges: list[list[int]]) -> np.ndarray:
    parts = [np.arange(lo, hi, dtype=np.int64) for lo, hi in ranges]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)


def write_clusters_jsonl(path, records: list[ClusterRecord], header: dict) -> None:
    with open(path, "w") as handle:
        handle.write(json.dumps({"_header": header}) + "\n")
        for rec in records:
            row = {
                "frame_id": rec.frame_id,
                "local_id": rec.local_id,
                "n_points": rec.n_points,
                "size": rec.size,
                "partition_id": rec.partition_id,
                "point_ranges": _indices_to_ranges(rec.point_indices),
            }
            handle.write(json.dumps(row) + "\n")


def read_clusters_jsonl(path) -> list[ClusterRecord]:
    records = []
    with open(path) as handle:
        for line in handle:
            row = json.loads(line)
            if "_header" in row:
                continue
            records.append(
                ClusterRecord(
                    frame_id=row["frame_id"],
                    local_id=row["local_id"],
                    point_indices=_ranges_to_indices(row["point_ranges"]),
                    n_points=row["n_points"],
                    size=row["size"],
                    partition_id=row["partition_id"],
                )
            )
    return records


def write_partitions_json(path, table: PartitionTable, summary: dict, header: dict) -> None:
    doc = {
        "_header": header,
        "n_partitions": table.n_bins,
        "size_cap": table.size_cap,
        "bins": [
            {
                "partition_id": b.partition_id,
                "size_lo": b.size_lo,
                "size_hi": b.size_hi,
                "api_sum": b.api_sum,
                "n_clusters": b.n_clusters,
                "n_points": b.n_points,
            }
            for b in table.bins
        ],
    }
    doc.update(summary)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_partitions_json(path) -> PartitionTable:
    doc = json.loads(Path(path).read_text())
    try:
        bins = tuple(
            BinRange(
                partition_id=b["partition_id"],
                size_lo=b["size_lo"],
                size_hi=b["size_hi"],
                api_sum=b["api_sum"],
                n_clusters=b["n_clusters"],
                n_points=b["n_points"],
            )
            for b in doc["bins"]
        )
        return PartitionTable(
            n_bins=doc["n_partitions"], bins=bins, size_cap=doc["size_cap"]
        )
    except KeyError as exc:
        raise FormatError(f"{path}: malformed partition table ({exc})") from exc
