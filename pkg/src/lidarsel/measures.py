"""Per-cluster informativeness scores and reciprocal-rank fusion.

A cluster's entropy is the mean Shannon entropy (natural log) of its
points' predicted class distributions. Its diversity is the summed
feature-space distance from the cluster's mean feature to the mean
features of all labeled clusters in the same partition. Within each
partition, clusters are ranked separately by entropy and diversity and
ordered by the combined score 1/rank_entropy + 1/rank_diversity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Uid = tuple[str, str]


@dataclass
class ClusterScore:
    uid: Uid
    entropy: float = 0.0
    mean_feature: np.ndarray | None = None
    diversity: float = 0.0
    rank_entropy: int = 0
    rank_diversity: int = 0
    fused: float = 0.0


@dataclass(frozen=True)
class RankTable:
    partition_id: str
    ordering: tuple[Uid, ...]


def cluster_entropy(probs: np.ndarray) -> float:
    """Mean per-point entropy in nats, with 0 * ln 0 treated as 0."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ValueError("expected a non-empty (n_points, n_classes) matrix")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-terms.sum() / p.shape[0])


def cluster_mean_feature(feats: np.ndarray) -> np.ndarray:
    f = np.asarray(feats, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1:
        raise ValueError("expected a non-empty (n_points, dim) matrix")
    return f.mean(axis=0)


def diversity(mean_feature: np.ndarray, labeled_means: np.ndarray) -> float:
    """Summed Euclidean distance to all labeled mean features; 0 if none."""
    f = np.asarray(mean_feature, dtype=np.float64)
    labeled = np.asarray(labeled_means, dtype=np.float64)
    if labeled.size == 0:
        return 0.0
    labeled = labeled.reshape(labeled.shape[0], -1)
    if labeled.shape[1] != f.shape[0]:
        raise ValueError(
            f"feature dimension mismatch: {labeled.shape[1]} vs {f.shape[0]}"
        )
    return float(np.linalg.norm(labeled - f, axis=1).sum())


def _ranks(values: list[float], uids: list[Uid]) -> list[int]:
    # rank 1 = largest value; ties broken by ascending uid
    order = sorted(range(len(values)), key=lambda i: (-values[i], uids[i]))
    ranks = [0] * len(values)
    for pos, i in enumerate(order):
        ranks[i] = pos + 1
    return ranks


def fuse_and_rank(partition_id: str, scores: list[ClusterScore]) -> RankTable:
    """Populate ranks and fused scores; return the partition ordering.

    Ordering is by descending 1/rank_entropy + 1/rank_diversity, ties by
    ascending uid. Because only ranks enter the fusion, any strictly
    increasing transform of the raw scores leaves the ordering unchanged.
    """
    if not scores:
        return RankTable(partition_id, ())
    uids = [s.uid for s in scores]
    r_e = _ranks([s.entropy for s in scores], uids)
    r_d = _ranks([s.diversity for s in scores], uids)
    for s, re_, rd_ in zip(scores, r_e, r_d):
        s.rank_entropy = re_
        s.rank_diversity = rd_
        s.fused = 1.0 / re_ + 1.0 / rd_
    order = sorted(range(len(scores)), key=lambda i: (-scores[i].fused, uids[i]))
    return RankTable(partition_id, tuple(uids[i] for i in order))
