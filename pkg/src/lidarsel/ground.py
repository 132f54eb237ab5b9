"""Ground/non-ground split and gridding of ground points.

A vertically constrained single-plane RANSAC stands in for heavier ground
segmenters behind the same mask interface; downstream stages only need the
boolean split. Ground points are tiled into fixed-size square cells which
become the selectable units of the ground partition.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataset_io import PointCloudFrame
from .rng import generator

DEFAULT_CELL_SIZE = 10.0

# A plane is only accepted if it captures at least this fraction of points.
MIN_INLIER_FRACTION = 0.01


@dataclass(frozen=True)
class GroundParams:
    ransac_iters: int = 200
    inlier_threshold: float = 0.25
    max_plane_tilt_deg: float = 20.0


@dataclass(frozen=True)
class GroundCell:
    """One occupied grid cell of ground points.

    ``cell`` is the integer (i, j) index of the half-open square
    [size*i, size*(i+1)) x [size*j, size*(j+1)) in world x/y.
    """

    frame_id: str
    cell: tuple[int, int]
    point_indices: np.ndarray


def segment_ground(frame: PointCloudFrame, params: GroundParams, seed: int) -> np.ndarray:
    """RANSAC-fit a near-horizontal plane; return the boolean inlier mask.

    Deterministic for a given seed. If no candidate plane with an
    acceptably vertical normal covers at least MIN_INLIER_FRACTION of the
    points, the frame is assumed to lack ground: an all-false mask is
    returned with a warning.
    """
    xyz = frame.xyz.astype(np.float64)
    n = xyz.shape[0]
    if n < 3:
        raise ValueError(f"frame {frame.frame_id}: need >= 3 points, got {n}")

    rng = generator(seed)
    triples = rng.integers(0, n, size=(params.ransac_iters, 3))
    cos_tilt = np.cos(np.radians(params.max_plane_tilt_deg))

    best_count = 0
    best_plane = None  # (unit normal, anchor point)
    for a, b, c in triples:
        if a == b or b == c or a == c:
            continue
        p0, p1, p2 = xyz[a], xyz[b], xyz[c]
        normal = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal = normal / norm
        if abs(normal[2]) < cos_tilt:
            continue  # plane too steep to be ground
        dist = np.abs((xyz - p0) @ normal)
        count = int((dist <= params.inlier_threshold).sum())
        if count > best_count:
            best_count = count
            best_plane = (normal, p0)

    if best_plane is None or best_count < max(3, MIN_INLIER_FRACTION * n):
        warnings.warn(
            f"frame {frame.frame_id}: no near-horizontal plane found; "
            "treating all points as non-ground"
        )
        return np.zeros(n, dtype=bool)

    normal, p0 = best_plane
    return np.abs((xyz - p0) @ normal) <= params.inlier_threshold


def grid_ground(
    frame: PointCloudFrame, mask: np.ndarray, cell_size: float = DEFAULT_CELL_SIZE
) -> list[GroundCell]:
    """Assign each masked point to its floor(x/size), floor(y/size) cell.

    Only occupied cells are returned, ordered by (i, j) for determinism.
    """
    if mask.shape[0] != frame.n_points:
        raise ValueError("mask length does not match frame")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    xy = frame.xyz[idx, :2].astype(np.float64)
    ij = np.floor(xy / cell_size).astype(np.int64)
    order = np.lexsort((idx, ij[:, 1], ij[:, 0]))
    ij = ij[order]
    idx = idx[order]
    cells = []
    start = 0
    for k in range(1, idx.size + 1):
        if k == idx.size or ij[k, 0] != ij[start, 0] or ij[k, 1] != ij[start, 1]:
            cells.append(
                GroundCell(
                    frame_id=frame.frame_id,
                    cell=(int(ij[start, 0]), int(ij[start, 1])),
                    point_indices=idx[start:k].copy(),
                )
            )
            start = k
    return cells
