"""Command-line entry point.

Commands are split by pipeline phase so an external trainer can refresh
model outputs between ``select`` calls:

    generate    emit a synthetic dataset from the config's scene spec
    preprocess  ground split + clustering + partition table
    warmstart   budgeted random draw per partition (iteration 0)
    select      one ranked selection iteration against model files
    simulate    self-contained closed loop against the mock model
    stats       print the class-distribution report of an iteration

Exit codes: 0 success, 2 configuration error, 3 missing model files,
4 data format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__, dataset_io, loop, pipeline, synth
from .cluster import HdbscanParams
from .errors import ConfigError, PipelineError
from .ground import DEFAULT_CELL_SIZE, GroundParams
from .loop import FileModel, LoopConfig
from .partition import DEFAULT_N_BINS, DEFAULT_SIZE_CAP, partition_sort_key
from .synth import MockModelParams, SceneSpec


@dataclass
class RunConfig:
    seed: int
    n_partitions: int
    x_init: float
    x_active: float
    iterations: int
    size_cap: float
    cell_size: float
    ground: GroundParams
    hdbscan: HdbscanParams
    manifest: Path | None
    scene: SceneSpec | None
    mock_model: dict

    @classmethod
    def load(cls, path, seed_override: int | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")

        seed = int(doc.get("seed", 0))
        if seed_override is not None:
            seed = seed_override
        try:
            ground = GroundParams(**doc.get("ground", {}))
            hdb = HdbscanParams(**doc.get("hdbscan", {}))
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

        scene = None
        if "synth" in doc:
            synth_doc = doc["synth"]
            if isinstance(synth_doc, str):  # path to a standalone scene spec
                spec_path = path.parent / synth_doc
                if not spec_path.is_file():
                    raise ConfigError(f"scene spec not found: {spec_path}")
                synth_doc = json.loads(spec_path.read_text())
            synth_doc = dict(synth_doc)
            synth_doc.setdefault("seed", seed)
            scene = SceneSpec.from_json(synth_doc)

        manifest = doc.get("manifest")
        return cls(
            seed=seed,
            n_partitions=int(doc.get("partitions", DEFAULT_N_BINS)),
            x_init=float(doc.get("x_init", 1.0)),
            x_active=float(doc.get("x_active", 1.0)),
            iterations=int(doc.get("iterations", 4)),
            size_cap=float(doc.get("size_cap", DEFAULT_SIZE_CAP)),
            cell_size=float(doc.get("cell_size", DEFAULT_CELL_SIZE)),
            ground=ground,
            hdbscan=hdb,
            manifest=(path.parent / manifest) if manifest else None,
            scene=scene,
            mock_model=doc.get("mock_model", {}),
        )

    def loop_config(self) -> LoopConfig:
        return LoopConfig(
            x_init=self.x_init,
            x_active=self.x_active,
            iterations=self.iterations,
            n_partitions=self.n_partitions,
            seed=self.seed,
            size_cap=self.size_cap,
        )

    def header(self, command: str) -> dict:
        return {"tool": "lidarsel", "version": __version__,
                "command": command, "seed": self.seed}


def _load_index(cfg: RunConfig) -> dataset_io.DatasetIndex:
    if cfg.manifest is None:
        raise ConfigError("config has no 'manifest' entry")
    if not cfg.manifest.is_file():
        raise ConfigError(f"manifest not found: {cfg.manifest}")
    return dataset_io.scan_dataset(cfg.manifest)


def _load_artifacts(out_dir: Path):
    clusters_path = out_dir / "clusters.jsonl"
    table_path = out_dir / "partitions.json"
    if not clusters_path.is_file() or not table_path.is_file():
        raise ConfigError(
            f"preprocessing artifacts missing under {out_dir}; run preprocess first"
        )
    from .partition import read_clusters_jsonl, read_partitions_json

    return read_clusters_jsonl(clusters_path), read_partitions_json(table_path)


def _load_labels(index: dataset_io.DatasetIndex) -> dict | None:
    labels = {}
    for entry in index.frames:
        if entry.labels_path is None or not entry.labels_path.is_file():
            return None
        labels[entry.frame_id] = dataset_io.load_labels(
            entry.labels_path, entry.n_points
        )
    return labels


def cmd_generate(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    if cfg.scene is None:
        raise ConfigError("config has no 'synth' scene spec")
    index = synth.generate_dataset(cfg.scene, out_dir / "dataset")
    print(f"generated {len(index.frames)} frames, {index.total_points} points "
          f"under {out_dir / 'dataset'}")
    return 0


def cmd_preprocess(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    index = _load_index(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, table = pipeline.preprocess_dataset(
        index,
        cfg.n_partitions,
        cfg.ground,
        cfg.hdbscan,
        cfg.seed,
        size_cap=cfg.size_cap,
        cell_size=cfg.cell_size,
        jobs=jobs,
        out_dir=out_dir,
        header=cfg.header("preprocess"),
    )
    print(f"{len(index.frames)} frames, {index.total_points} points, "
          f"{len(records)} selectable units")
    for b in table.bins:
        print(f"partition {b.partition_id}: sizes {b.size_lo}-{b.size_hi}, "
              f"accumulated API {b.api_sum:.3f}, {b.n_clusters} clusters, "
              f"{b.n_points} points")
    return 0


def cmd_warmstart(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    index = _load_index(cfg)
    records, table = _load_artifacts(out_dir)
    labels = _load_labels(index)
    result = loop.run_loop(
        LoopConfig(
            x_init=cfg.x_init, x_active=cfg.x_active, iterations=0,
            n_partitions=cfg.n_partitions, seed=cfg.seed, size_cap=cfg.size_cap,
        ),
        index,
        records,
        table,
        model=None,
        labels_by_frame=labels,
        out_dir=out_dir,
        header=cfg.header("warmstart"),
    )
    snap = result.history[0]
    print(f"warm start: {snap['acquired_clusters']} clusters, "
          f"{snap['acquired_points']} points "
          f"({100 * snap['labeled_fraction']:.3f}% of dataset)")
    return 0


def cmd_select(cfg: RunConfig, out_dir: Path, jobs: int, iteration: int) -> int:
    if iteration < 1:
        raise ConfigError("--iteration must be >= 1")
    index = _load_index(cfg)
    records, table = _load_artifacts(out_dir)
    previous = out_dir / f"labeled_iter{iteration - 1}.jsonl"
    if not previous.is_file():
        raise ConfigError(
            f"{previous} not found; run warmstart/select for iteration "
            f"{iteration - 1} first"
        )
    from .partition import FILTERED

    selectable = [r for r in records if r.partition_id != FILTERED]
    records_by_uid = {r.uid: r for r in selectable}
    labeled = loop.read_labeled_jsonl(previous, records_by_uid)

    model = FileModel(index)
    model.refresh(iteration, labeled)
    tables, scores = loop.score_and_rank(selectable, labeled, model, index)
    ledger = loop.allocate_budget(
        index.total_points, cfg.x_active, table.partition_ids()
    )
    acquired = loop.active_select(tables, records_by_uid, ledger, labeled, iteration)

    header = cfg.header("select")
    loop.write_labeled_jsonl(
        out_dir / f"labeled_iter{iteration}.jsonl", labeled, iteration, header
    )
    loop.write_scores_jsonl(
        out_dir / f"scores_iter{iteration}.jsonl", scores,
        {**header, "iteration": iteration},
    )
    labels = _load_labels(index)
    if labels is not None:
        stats = loop.class_stats(labeled, records_by_uid, labels, iteration)
        (out_dir / f"stats_iter{iteration}.json").write_text(
            json.dumps({"_header": header, **stats}, indent=1) + "\n"
        )
    print(f"iteration {iteration}: acquired {len(acquired)} clusters, "
          f"{sum(a.n_points for a in acquired)} points; "
          f"labeled total {labeled.total_points()} points "
          f"({100 * labeled.total_points() / index.total_points:.3f}%)")
    return 0


def cmd_simulate(cfg: RunConfig, out_dir: Path, jobs: int) -> int:
    if cfg.scene is None:
        raise ConfigError("simulate needs a 'synth' scene spec in the config")
    out_dir.mkdir(parents=True, exist_ok=True)
    index = synth.generate_dataset(cfg.scene, out_dir / "dataset")
    records, table = pipeline.preprocess_dataset(
        index,
        cfg.n_partitions,
        cfg.ground,
        cfg.hdbscan,
        cfg.seed,
        size_cap=cfg.size_cap,
        cell_size=cfg.cell_size,
        jobs=jobs,
        out_dir=out_dir,
        header=cfg.header("simulate"),
    )
    labels = _load_labels(index)
    assert labels is not None  # generate_dataset always writes labels
    mock_params = MockModelParams(
        n_classes=cfg.scene.n_classes, **cfg.mock_model
    )
    model = synth.MockModel(mock_params, labels, cfg.seed)
    result = loop.run_loop(
        cfg.loop_config(),
        index,
        records,
        table,
        model,
        labels_by_frame=labels,
        out_dir=out_dir,
        header=cfg.header("simulate"),
    )
    for snap in result.history:
        print(f"iteration {snap['iteration']}: +{snap['acquired_clusters']} clusters "
              f"+{snap['acquired_points']} points, labeled "
              f"{100 * snap['labeled_fraction']:.3f}%")
    return 0


def cmd_stats(cfg: RunConfig, out_dir: Path, jobs: int, iteration: int | None) -> int:
    if iteration is None:
        have = sorted(
            int(p.stem.replace("stats_iter", ""))
            for p in out_dir.glob("stats_iter*.json")
        )
        if not have:
            raise ConfigError(f"no stats_iter*.json under {out_dir}")
        iteration = have[-1]
    path = out_dir / f"stats_iter{iteration}.json"
    if not path.is_file():
        raise ConfigError(f"{path} not found")
    doc = json.loads(path.read_text())

    classes = sorted(doc["per_class"], key=int)
    print(f"iteration {iteration}: {doc['labeled_points']} labeled points in "
          f"{doc['labeled_clusters']} clusters, balance score "
          f"{doc['balance_score']:.4f}")
    header = ["class".ljust(10)] + [c.rjust(8) for c in classes]
    print("".join(header))
    row = ["dataset %".ljust(10)]
    for c in classes:
        row.append(f"{100 * doc['per_class'][c]['dataset_fraction']:8.2f}")
    print("".join(row))
    row = ["labeled %".ljust(10)]
    for c in classes:
        row.append(f"{100 * doc['per_class'][c]['labeled_fraction']:8.2f}")
    print("".join(row))
    matrix = doc["partition_class_matrix"]
    for pid in sorted(matrix, key=partition_sort_key):
        row = [f"part {pid}".ljust(10)]
        for c in classes:
            row.append(f"{100 * matrix[pid].get(c, 0.0):8.1f}")
        print("".join(row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarsel",
        description="Size-balanced active-learning selection for LiDAR scans",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_iteration in [
        ("generate", False),
        ("preprocess", False),
        ("warmstart", False),
        ("select", True),
        ("simulate", False),
        ("stats", False),
    ]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="artifact output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="frame-level parallel workers")
        if needs_iteration:
            p.add_argument("--iteration", type=int, required=True)
        elif name == "stats":
            p.add_argument("--iteration", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, seed_override=args.seed)
        out_dir = Path(args.out)
        if args.command == "generate":
            return cmd_generate(cfg, out_dir, args.jobs)
        if args.command == "preprocess":
            return cmd_preprocess(cfg, out_dir, args.jobs)
        if args.command == "warmstart":
            return cmd_warmstart(cfg, out_dir, args.jobs)
        if args.command == "select":
            return cmd_select(cfg, out_dir, args.jobs, args.iteration)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, args.jobs)
        if args.command == "stats":
            return cmd_stats(cfg, out_dir, args.jobs, args.iteration)
        raise ConfigError(f"unknown command {args.command}")
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
