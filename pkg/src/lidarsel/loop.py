"""Active-learning protocol: budgets, warm start, iterative selection, stats.

Each phase (warm start or one selection iteration) allocates an equal
point budget to every partition, including the ground partition:
floor(percent/100 * total_points / n_partitions). Within a partition,
units are taken in order (random permutation for the warm start, fused
ranking afterwards) while consumption is strictly below the allocation,
so the final unit of a partition may overshoot by at most its own size.

Between iterations a model interface supplies fresh per-frame prediction
and feature matrices; retraining itself lives outside this package. The
interface contract is:

    refresh(iteration, labeled)  -> prepare outputs for this iteration
    predictions(frame_id)        -> (n_points, n_classes) row-stochastic
    features(frame_id)           -> (n_points, feature_dim)
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset_io, measures
from .dataset_io import DatasetIndex
from .errors import (
    ConfigError,
    ContractViolationError,
    FormatError,
    MissingModelFilesError,
)
from .measures import ClusterScore, RankTable, Uid
from .partition import (
    FILTERED,
    ClusterRecord,
    PartitionTable,
    partition_sort_key,
)
from .rng import generator


@dataclass(frozen=True)
class LoopConfig:
    x_init: float = 1.0
    x_active: float = 1.0
    iterations: int = 4
    n_partitions: int = 3
    seed: int = 0
    size_cap: float = 25.0

    def __post_init__(self):
        if self.x_init <= 0 or self.x_active <= 0:
            raise ConfigError("budget percentages must be > 0")
        if self.iterations < 0:
            raise ConfigError("iteration count must be >= 0")


@dataclass
class BudgetLedger:
    total_points: int
    allocations: dict[str, int]
    consumed: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for pid in self.allocations:
            self.consumed.setdefault(pid, 0)

    def remaining(self, pid: str) -> int:
        return self.allocations[pid] - self.consumed[pid]


@dataclass(frozen=True)
class AcquiredCluster:
    uid: Uid
    iteration: int
    n_points: int
    partition_id: str


@dataclass(frozen=True)
class LoopResult:
    history: list[dict]
    labeled: "LabeledSet"


@dataclass
class LabeledSet:
    acquired: list[AcquiredCluster] = field(default_factory=list)
    _uids: set[Uid] = field(default_factory=set)

    def __contains__(self, uid: Uid) -> bool:
        return uid in self._uids

    def __len__(self) -> int:
        return len(self.acquired)

    def add(self, record: ClusterRecord, iteration: int) -> AcquiredCluster:
        if record.uid in self._uids:
            raise ContractViolationError(f"cluster {record.uid} already labeled")
        entry = AcquiredCluster(
            uid=record.uid,
            iteration=iteration,
            n_points=record.n_points,
            partition_id=record.partition_id,
        )
        self.acquired.append(entry)
        self._uids.add(record.uid)
        return entry

    def total_points(self) -> int:
        return sum(a.n_points for a in self.acquired)

    def points_per_partition(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for a in self.acquired:
            out[a.partition_id] = out.get(a.partition_id, 0) + a.n_points
        return out


def allocate_budget(
    total_points: int, percent: float, partition_ids: list[str]
) -> BudgetLedger:
    """Equal floor-divided allocation per partition for one phase."""
    if total_points <= 0:
        raise ConfigError("dataset has no points")
    per = int(percent / 100.0 * total_points / len(partition_ids))
    if per <= 0:
        raise ConfigError(
            f"budget of {percent}% over {len(partition_ids)} partitions "
            f"allocates 0 points (dataset must be larger)"
        )
    return BudgetLedger(
        total_points=total_points,
        allocations={pid: per for pid in partition_ids},
    )


def take_while_under(
    ordered: list[ClusterRecord],
    ledger: BudgetLedger,
    partition_id: str,
    labeled: LabeledSet,
    iteration: int,
) -> list[AcquiredCluster]:
    """Walk units in order, adding each while consumption < allocation.

    The unit that crosses the allocation is still added (whole clusters
    are labeled, never split), so consumption may overshoot once by at
    most the size of the last unit. Returns the acquired entries.
    """
    taken = []
    allocation = ledger.allocations[partition_id]
    for rec in ordered:
        if ledger.consumed[partition_id] >= allocation:
            return taken
        taken.append(labeled.add(rec, iteration))
        ledger.consumed[partition_id] += rec.n_points
    if ledger.consumed[partition_id] < allocation:
        warnings.warn(
            f"partition {partition_id} exhausted at "
            f"{ledger.consumed[partition_id]}/{allocation} points"
        )
    return taken


def warm_start_select(
    pools: dict[str, list[ClusterRecord]], ledger: BudgetLedger, seed: int
) -> LabeledSet:
    """Uniform without-replacement draw per partition until its budget.

    Each partition uses its own random stream derived from (seed,
    partition id), so partitions can be processed in any order or in
    parallel without changing the result.
    """
    labeled = LabeledSet()
    for pid in sorted(ledger.allocations, key=partition_sort_key):
        pool = sorted(pools.get(pid, []), key=lambda r: r.uid)
        if not pool:
            warnings.warn(f"partition {pid} has no unlabeled clusters")
            continue
        order = generator(seed, "warmstart", pid).permutation(len(pool))
        take_while_under([pool[i] for i in order], ledger, pid, labeled, 0)
    return labeled


def active_select(
    rank_tables: dict[str, RankTable],
    records_by_uid: dict[Uid, ClusterRecord],
    ledger: BudgetLedger,
    labeled: LabeledSet,
    iteration: int,
) -> list[AcquiredCluster]:
    """Take top-ranking clusters per partition under the budget rule."""
    acquired = []
    for pid in sorted(ledger.allocations, key=partition_sort_key):
        table = rank_tables.get(pid)
        if table is None or not table.ordering:
            warnings.warn(f"partition {pid} has no unlabeled clusters")
            continue
        for uid in table.ordering:
            if uid in labeled:
                raise ContractViolationError(
                    f"rank table for {pid} contains labeled cluster {uid}"
                )
        ordered = [records_by_uid[uid] for uid in table.ordering]
        acquired.extend(take_while_under(ordered, ledger, pid, labeled, iteration))
    return acquired


def random_baseline_select(
    records: list[ClusterRecord], total_budget: int, seed: int
) -> LabeledSet:
    """Uniform random cluster sampling over the whole selectable pool.

    Comparison baseline: ignores partitions entirely, same
    while-consumption-below-budget rule against one global budget.
    """
    pool = sorted(
        (r for r in records if r.partition_id != FILTERED), key=lambda r: r.uid
    )
    labeled = LabeledSet()
    ledger = BudgetLedger(total_points=total_budget, allocations={"all": total_budget})
    order = generator(seed, "random-baseline").permutation(len(pool))
    for rec in (pool[i] for i in order):
        if ledger.consumed["all"] >= total_budget:
            break
        labeled.add(rec, 0)
        ledger.consumed["all"] += rec.n_points
    return labeled


# --- scoring -----------------------------------------------------------------

class FileModel:
    """Model interface backed by sidecar files written by an external trainer."""

    def __init__(self, index: DatasetIndex):
        self.index = index

    def refresh(self, iteration: int, labeled=None) -> None:
        missing = [
            e.frame_id
            for e in self.index.frames
            if e.preds_path is None
            or not e.preds_path.is_file()
            or e.feats_path is None
            or not e.feats_path.is_file()
        ]
        if missing:
            raise MissingModelFilesError(missing)

    def predictions(self, frame_id: str) -> np.ndarray:
        return dataset_io.load_prediction_matrix(self.index.entry(frame_id).preds_path)

    def features(self, frame_id: str) -> np.ndarray:
        return dataset_io.load_feature_matrix(self.index.entry(frame_id).feats_path)


def score_and_rank(
    records: list[ClusterRecord],
    labeled: LabeledSet,
    model,
    index: DatasetIndex,
) -> tuple[dict[str, RankTable], dict[str, list[ClusterScore]]]:
    """Entropy + diversity scores for all unlabeled units, ranked per partition.

    Labeled clusters are re-featurized with the current model outputs so
    diversity compares everything in one consistent feature space. Each
    frame's matrices are loaded exactly once.
    """
    by_frame: dict[str, list[ClusterRecord]] = {}
    for rec in records:
        if rec.partition_id == FILTERED:
            continue
        by_frame.setdefault(rec.frame_id, []).append(rec)

    unlabeled_scores: dict[str, list[ClusterScore]] = {}
    labeled_means: dict[str, list[np.ndarray]] = {}
    for entry in index.frames:
        recs = by_frame.get(entry.frame_id)
        if not recs:
            continue
        probs = model.predictions(entry.frame_id)
        feats = model.features(entry.frame_id)
        if probs.shape[0] != entry.n_points or feats.shape[0] != entry.n_points:
            raise FormatError(
                f"frame {entry.frame_id}: model outputs have "
                f"{probs.shape[0]}/{feats.shape[0]} rows, expected {entry.n_points}"
            )
        for rec in recs:
            mean_feat = measures.cluster_mean_feature(feats[rec.point_indices])
            if rec.uid in labeled:
                labeled_means.setdefault(rec.partition_id, []).append(mean_feat)
                continue
            score = ClusterScore(
                uid=rec.uid,
                entropy=measures.cluster_entropy(probs[rec.point_indices]),
                mean_feature=mean_feat,
            )
            unlabeled_scores.setdefault(rec.partition_id, []).append(score)

    tables: dict[str, RankTable] = {}
    for pid, scores in unlabeled_scores.items():
        means = labeled_means.get(pid, [])
        mat = np.array(means) if means else np.empty((0, 0))
        for s in scores:
            s.diversity = measures.diversity(s.mean_feature, mat)
        tables[pid] = measures.fuse_and_rank(pid, scores)
    return tables, unlabeled_scores


# --- class statistics --------------------------------------------------------

def class_stats(
    labeled: LabeledSet,
    records_by_uid: dict[Uid, ClusterRecord],
    labels_by_frame: dict[str, np.ndarray],
    iteration: int,
) -> dict:
    """Class report: labeled vs dataset class fractions, the
    partition-by-class matrix (column-normalized per class over the
    labeled points), and the normalized class-distribution entropy.

    Class 0 (unlabeled/noise ground truth) is excluded from the balance
    score; the class universe is every class present in the dataset.
    """
    dataset_counts: dict[int, int] = {}
    for arr in labels_by_frame.values():
        vals, counts = np.unique(arr, return_counts=True)
        for v, c in zip(vals, counts):
            dataset_counts[int(v)] = dataset_counts.get(int(v), 0) + int(c)
    classes = sorted(c for c in dataset_counts if c != 0)

    labeled_counts: dict[int, int] = {}
    matrix: dict[str, dict[int, int]] = {}
    for entry in labeled.acquired:
        rec = records_by_uid[entry.uid]
        arr = labels_by_frame[rec.frame_id][rec.point_indices]
        vals, counts = np.unique(arr, return_counts=True)
        row = matrix.setdefault(entry.partition_id, {})
        for v, c in zip(vals, counts):
            v = int(v)
            labeled_counts[v] = labeled_counts.get(v, 0) + int(c)
            row[v] = row.get(v, 0) + int(c)

    dataset_total = sum(dataset_counts.values())
    labeled_total = sum(labeled_counts.values())

    per_class = {}
    for c in classes:
        per_class[str(c)] = {
            "labeled_points": labeled_counts.get(c, 0),
            "labeled_fraction": (
                labeled_counts.get(c, 0) / labeled_total if labeled_total else 0.0
            ),
            "dataset_fraction": dataset_counts[c] / dataset_total,
        }

    norm_matrix: dict[str, dict[str, float]] = {}
    for pid in sorted(matrix, key=partition_sort_key):
        norm_matrix[pid] = {}
        for c in classes:
            total_c = labeled_counts.get(c, 0)
            norm_matrix[pid][str(c)] = (
                matrix[pid].get(c, 0) / total_c if total_c else 0.0
            )

    probs = np.array(
        [labeled_counts.get(c, 0) for c in classes], dtype=np.float64
    )
    balance = 0.0
    if probs.sum() > 0 and len(classes) > 1:
        p = probs / probs.sum()
        nonzero = p[p > 0]
        balance = float(-(nonzero * np.log(nonzero)).sum() / np.log(len(classes)))

    return {
        "iteration": iteration,
        "labeled_points": labeled_total,
        "labeled_clusters": len(labeled),
        "per_class": per_class,
        "partition_class_matrix": norm_matrix,
        "balance_score": balance,
    }


# --- the loop ----------------------------------------------------------------

def _snapshot(labeled: LabeledSet, iteration: int, total_points: int) -> dict:
    new = [a for a in labeled.acquired if a.iteration == iteration]
    return {
        "iteration": iteration,
        "acquired_clusters": len(new),
        "acquired_points": sum(a.n_points for a in new),
        "total_clusters": len(labeled),
        "total_points": labeled.total_points(),
        "labeled_fraction": labeled.total_points() / total_points,
        "points_per_partition": dict(
            sorted(labeled.points_per_partition().items(),
                   key=lambda kv: partition_sort_key(kv[0]))
        ),
    }


def write_labeled_jsonl(path, labeled: LabeledSet, iteration: int, header: dict):
    with open(path, "w") as handle:
        handle.write(json.dumps({"_header": {**header, "iteration": iteration}}) + "\n")
        for a in labeled.acquired:
            handle.write(
                json.dumps(
                    {
                        "frame_id": a.uid[0],
                        "local_id": a.uid[1],
                        "iteration": a.iteration,
                        "n_points": a.n_points,
                        "partition_id": a.partition_id,
                    }
                )
                + "\n"
            )


def read_labeled_jsonl(path, records_by_uid: dict[Uid, ClusterRecord]) -> LabeledSet:
    labeled = LabeledSet()
    with open(path) as handle:
        for line in handle:
            row = json.loads(line)
            if "_header" in row:
                continue
            rec = records_by_uid.get((row["frame_id"], row["local_id"]))
            if rec is None:
                raise FormatError(f"{path}: unknown cluster {row['frame_id']}/"
                                  f"{row['local_id']}")
            labeled.add(rec, row["iteration"])
    return labeled


def write_scores_jsonl(path, scores_by_partition, header: dict):
    with open(path, "w") as handle:
        handle.write(json.dumps({"_header": header}) + "\n")
        for pid in sorted(scores_by_partition, key=partition_sort_key):
            for s in scores_by_partition[pid]:
                handle.write(
                    json.dumps(
                        {
                            "partition_id": pid,
                            "frame_id": s.uid[0],
                            "local_id": s.uid[1],
                            "entropy": s.entropy,
                            "diversity": s.diversity,
                            "rank_entropy": s.rank_entropy,
                            "rank_diversity": s.rank_diversity,
                            "fused": s.fused,
                        }
                    )
                    + "\n"
                )


def run_loop(
    config: LoopConfig,
    index: DatasetIndex,
    records: list[ClusterRecord],
    table: PartitionTable,
    model,
    labels_by_frame: dict[str, np.ndarray] | None = None,
    out_dir=None,
    header: dict | None = None,
) -> LoopResult:
    """Warm start plus ``config.iterations`` selection rounds.

    Returns the per-phase snapshots and the final labeled set. When
    ``out_dir`` is given, the labeled set, scores, and class stats are
    written per phase; class stats require ground-truth labels and are
    skipped with a warning otherwise.
    """
    header = header or {}
    out_dir = Path(out_dir) if out_dir is not None else None
    partition_ids = table.partition_ids(include_ground=True)
    selectable = [r for r in records if r.partition_id != FILTERED]
    records_by_uid = {r.uid: r for r in selectable}

    def emit(labeled: LabeledSet, iteration: int, scores=None):
        if out_dir is None:
            return None
        write_labeled_jsonl(
            out_dir / f"labeled_iter{iteration}.jsonl", labeled, iteration, header
        )
        if scores is not None:
            write_scores_jsonl(
                out_dir / f"scores_iter{iteration}.jsonl", scores,
                {**header, "iteration": iteration},
            )
        if labels_by_frame is None:
            warnings.warn("no ground-truth labels; skipping class stats")
            return None
        stats = class_stats(labeled, records_by_uid, labels_by_frame, iteration)
        stats_doc = {"_header": header, **stats}
        (out_dir / f"stats_iter{iteration}.json").write_text(
            json.dumps(stats_doc, indent=1) + "\n"
        )
        return stats

    ledger = allocate_budget(index.total_points, config.x_init, partition_ids)
    pools: dict[str, list[ClusterRecord]] = {}
    for rec in selectable:
        pools.setdefault(rec.partition_id, []).append(rec)
    labeled = warm_start_select(pools, ledger, config.seed)
    emit(labeled, 0)
    history = [_snapshot(labeled, 0, index.total_points)]

    for k in range(1, config.iterations + 1):
        model.refresh(k, labeled)
        tables, scores = score_and_rank(selectable, labeled, model, index)
        ledger = allocate_budget(index.total_points, config.x_active, partition_ids)
        active_select(tables, records_by_uid, ledger, labeled, k)
        emit(labeled, k, scores)
        history.append(_snapshot(labeled, k, index.total_points))
    return LoopResult(history=history, labeled=labeled)
