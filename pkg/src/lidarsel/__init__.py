"""Size-balanced active-learning selection engine for LiDAR scans."""

__version__ = "0.1.0"

from .cluster import HdbscanParams, hdbscan
from .dataset_io import PointCloudFrame, scan_dataset
from .ground import GroundParams, grid_ground, segment_ground
from .loop import LoopConfig, allocate_budget, run_loop
from .measures import cluster_entropy, diversity, fuse_and_rank
from .partition import adaptive_bins, cluster_size, size_statistics
from .synth import SceneSpec, default_scene_spec, generate_dataset

__all__ = [
    "HdbscanParams",
    "hdbscan",
    "PointCloudFrame",
    "scan_dataset",
    "GroundParams",
    "grid_ground",
    "segment_ground",
    "LoopConfig",
    "allocate_budget",
    "run_loop",
    "cluster_entropy",
    "diversity",
    "fuse_and_rank",
    "adaptive_bins",
    "cluster_size",
    "size_statistics",
    "SceneSpec",
    "default_scene_spec",
    "generate_dataset",
    "__version__",
]
