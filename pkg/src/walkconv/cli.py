"""Command-line pipeline: build-graph, train, evaluate, inspect.

Every run writes a manifest under --out recording the fully resolved
configuration, library versions, and content hashes of all inputs, so a
run can be reproduced bit-for-bit (double precision, single worker).

Exit codes: 2 usage/configuration, 3 data/format, 4 numeric failure.
The worker count for sparse graph preprocessing comes from the
WALKCONV_WORKERS environment variable (default 1).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import platform
import re
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy

from .data import (
    Dataset,
    apply_feature_selection,
    filter_features,
    read_csv_regression,
    read_idx,
    standardize,
    take,
)
from .errors import (
    ConfigurationError,
    DataFormatError,
    DimensionError,
    NumericError,
    WalkconvError,
)
from .graph import (
    correlation_from_data,
    expected_visits,
    grid_graph,
    similarity_from_correlation,
    stationary_ratio_check,
    transition_from_similarity,
)
from .neighbors import (
    read_table,
    select_neighbors,
    sparse_neighbors_bfs,
    table_content_hash,
    write_table,
    write_table_json,
)
from .network import count_parameters, load_checkpoint, parse_architecture, save_checkpoint
from .training import TrainConfig, evaluate, seed_streams, train

__all__ = ["RunConfig", "main", "cmd_build_graph", "cmd_train", "cmd_evaluate", "cmd_inspect"]

_PACKAGE_VERSION = "0.1.0"


@dataclass
class RunConfig:
    """Fully resolved options of one CLI invocation (manifest content)."""

    command: str
    grid: str | None = None
    csv: str | None = None
    target: str | None = None
    idx_images: str | None = None
    idx_labels: str | None = None
    table: str | None = None
    checkpoint: str | None = None
    k: int = 1
    p: int = 1
    variant: str = "conv1"
    tie_break: str = "deterministic"
    tie_seed: int | None = None
    arch: str = ""
    task: str | None = None
    learning_rate: float = 0.001
    epochs: int = 40
    batch_size: int = 64
    dropout: float = 0.0
    seed: int = 0
    min_active: int = 0
    drop_constant: bool = True
    standardize: bool | None = None
    limit: int | None = None
    eval_csv: str | None = None
    eval_idx_images: str | None = None
    eval_idx_labels: str | None = None
    eval_limit: int | None = None
    node: int | None = None
    out: str | None = None
    stationary_check: bool = False
    json_table: bool = False
    as_json: bool = False
    workers: int = 1

    def validate(self):
        if self.k < 0:
            raise ConfigurationError(f"k must be >= 0, got {self.k}")
        if self.p < 1:
            raise ConfigurationError(f"p must be >= 1, got {self.p}")
        if self.grid is not None:
            banned = {
                "--csv": self.csv,
                "--idx-images": self.idx_images,
                "--target": self.target,
            }
            used = [flag for flag, val in banned.items() if val is not None]
            if used or self.variant == "conv2":
                offender = used[0] if used else "--variant conv2"
                raise ConfigurationError(
                    f"{offender} is a correlation-graph option; a --grid source has "
                    f"no feature correlations"
                )
        if (self.tie_break == "seeded") != (self.tie_seed is not None):
            raise ConfigurationError(
                "--tie-seed must be given exactly when --tie-break seeded"
            )


def _rc_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields}
    rc = RunConfig(**values)
    rc.validate()
    return rc


def _worker_count() -> int:
    raw = os.environ.get("WALKCONV_WORKERS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigurationError(
            f"WALKCONV_WORKERS must be an integer, got {raw!r}"
        ) from None
    if workers < 1:
        raise ConfigurationError(f"WALKCONV_WORKERS must be >= 1, got {workers}")
    return workers


def _hash_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, name, rc: RunConfig, wall_ms, inputs, outputs, extra=None):
    manifest = {
        "command": rc.command,
        "config": dataclasses.asdict(rc),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "walkconv": _PACKAGE_VERSION,
        },
        "input_hashes": {str(p): _hash_file(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "wall_ms": wall_ms,
    }
    manifest.update(extra or {})
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _load_dataset(rc: RunConfig, eval_side: bool = False):
    """Returns (dataset, kind, input_paths); kind is 'csv' or 'idx'."""
    if eval_side:
        csv_path, images, labels, limit = (
            rc.eval_csv, rc.eval_idx_images, rc.eval_idx_labels, rc.eval_limit,
        )
    else:
        csv_path, images, labels, limit = rc.csv, rc.idx_images, rc.idx_labels, rc.limit
    if csv_path is not None and images is not None:
        raise ConfigurationError("give either a CSV or an IDX pair, not both")
    if csv_path is not None:
        if rc.target is None:
            raise ConfigurationError("--target is required with a CSV dataset")
        data = read_csv_regression(csv_path, rc.target)
        kind, paths = "csv", [csv_path]
    elif images is not None:
        if labels is None:
            raise ConfigurationError("IDX images need matching --idx-labels")
        data = read_idx(images, labels)
        kind, paths = "idx", [images, labels]
    else:
        raise ConfigurationError("no dataset given (use --csv or --idx-images/--idx-labels)")
    if limit is not None:
        data = take(data, limit)
    return data, kind, paths


def _require_out(rc: RunConfig):
    if rc.out is None:
        raise ConfigurationError("--out directory is required")
    os.makedirs(rc.out, exist_ok=True)


def _parse_grid(spec: str):
    m = re.fullmatch(r"([0-9]+)x([0-9]+)", spec)
    if m is None:
        raise ConfigurationError(f"grid must look like 28x28, got {spec!r}")
    h, w = int(m.group(1)), int(m.group(2))
    if h < 1 or w < 1:
        raise DimensionError(f"grid dimensions must be >= 1, got {h}x{w}")
    return h, w


def cmd_build_graph(rc: RunConfig) -> int:
    _require_out(rc)
    started = time.perf_counter()
    inputs, extra = [], {}
    transition = None

    if rc.grid is not None:
        height, width = _parse_grid(rc.grid)
        graph = grid_graph(height, width)
        if rc.k >= 1:
            table = sparse_neighbors_bfs(
                graph, rc.k, rc.p, variant=rc.variant,
                tie_break=rc.tie_break, seed=rc.tie_seed, workers=rc.workers,
            )
        else:
            transition = transition_from_similarity(graph)
            visits = expected_visits(transition, rc.k)
            table = select_neighbors(
                visits, rc.p, variant=rc.variant,
                tie_break=rc.tie_break, seed=rc.tie_seed,
            )
        if rc.stationary_check and transition is None:
            transition = transition_from_similarity(graph)
    else:
        data, _, inputs = _load_dataset(rc)
        if rc.min_active > 0 or rc.drop_constant:
            data = filter_features(data, rc.min_active, rc.drop_constant)
        corr = correlation_from_data(data.features)
        graph = similarity_from_correlation(corr)
        transition = transition_from_similarity(graph)
        visits = expected_visits(transition, rc.k)
        table = select_neighbors(
            visits, rc.p, variant=rc.variant,
            corr=corr if rc.variant == "conv2" else None,
            tie_break=rc.tie_break, seed=rc.tie_seed,
        )
        extra["feature_index_map"] = data.feature_index_map.tolist()

    table_path = os.path.join(rc.out, "table.gnbt")
    write_table(table_path, table)
    outputs = [table_path]
    if rc.json_table:
        json_path = os.path.join(rc.out, "table.json")
        write_table_json(json_path, table)
        outputs.append(json_path)

    if rc.stationary_check:
        diag = stationary_ratio_check(transition, max(rc.k, 1))
        extra["stationary_check"] = {
            "converged": diag.converged,
            "iterations": diag.iterations,
            "max_deviation": diag.max_deviation,
        }

    wall_ms = (time.perf_counter() - started) * 1000.0
    extra["table_hash"] = table_content_hash(table)
    manifest = _write_manifest(
        rc.out, "build_manifest.json", rc, wall_ms, inputs, outputs, extra
    )
    print(f"nodes: {table.n_nodes}")
    print(f"p: {table.p}  k: {table.k}  variant: {table.variant}")
    print(f"padded entries: {table.pad_count()}")
    if "stationary_check" in extra:
        sc = extra["stationary_check"]
        if sc["converged"]:
            print(f"stationary check: max deviation {sc['max_deviation']:.6g}")
        else:
            print("stationary check: power iteration did not converge (chain may be periodic)")
    print(f"wall time: {wall_ms:.1f} ms")
    print(f"table: {table_path}")
    print(f"manifest: {manifest}")
    return 0


def _prepare_train_data(rc: RunConfig):
    """Load, limit, filter, and (for CSV) standardize train + eval data."""
    data, kind, inputs = _load_dataset(rc)
    if rc.min_active > 0 or rc.drop_constant:
        data = filter_features(data, rc.min_active, rc.drop_constant)
    do_standardize = rc.standardize if rc.standardize is not None else (kind == "csv")

    eval_data = None
    if rc.eval_csv is not None or rc.eval_idx_images is not None:
        eval_data, _, eval_inputs = _load_dataset(rc, eval_side=True)
        inputs = inputs + eval_inputs
        eval_data = apply_feature_selection(eval_data, data.feature_index_map)
        if do_standardize:
            eval_data = standardize(eval_data, stats_from=data)
    if do_standardize:
        data = standardize(data)
    return data, eval_data, kind, inputs, do_standardize


def cmd_train(rc: RunConfig) -> int:
    _require_out(rc)
    started = time.perf_counter()
    data, eval_data, kind, inputs, standardized = _prepare_train_data(rc)
    task = rc.task or ("regression" if kind == "csv" else "classification")

    table = None
    if rc.table is not None:
        table = read_table(rc.table)
        inputs.append(rc.table)
        if table.n_nodes != data.n_features:
            raise DimensionError(
                f"neighbor table covers {table.n_nodes} nodes but the filtered "
                f"dataset has {data.n_features} features; rebuild the table with "
                f"matching filter flags"
            )

    if task == "classification":
        n_outputs = int(np.asarray(data.targets).max()) + 1
    else:
        n_outputs = 1
    config = TrainConfig(
        learning_rate=rc.learning_rate,
        epochs=rc.epochs,
        batch_size=rc.batch_size,
        seed=rc.seed,
        dropout_rate=rc.dropout,
        task=task,
    )
    init_seq, _, _ = seed_streams(rc.seed)
    net = parse_architecture(
        rc.arch, n_nodes=data.n_features, d_input=1, n_outputs=n_outputs,
        table=table, dropout_rate=rc.dropout, task=task,
        rng=np.random.default_rng(init_seq),
    )
    n_params = count_parameters(net)
    print(f"parameters: {n_params:,}")

    log_path = os.path.join(rc.out, "history.jsonl")
    history = train(net, data, config, eval_data=eval_data, log_path=log_path)

    ckpt_path = os.path.join(rc.out, "checkpoint.npz")
    norm = data.normalization
    extra_meta = {
        "feature_index_map": data.feature_index_map.tolist(),
        "normalization": None if norm is None else {
            "kind": norm["kind"],
            "mean": np.asarray(norm["mean"]).tolist(),
            "std": np.asarray(norm["std"]).tolist(),
        },
        "data_kind": kind,
        "standardized": standardized,
    }
    save_checkpoint(ckpt_path, net, rc.seed, table, extra=extra_meta)

    wall_ms = (time.perf_counter() - started) * 1000.0
    last = history[-1]
    manifest = _write_manifest(
        rc.out, "train_manifest.json", rc, wall_ms, inputs,
        [log_path, ckpt_path],
        {"parameters": n_params, "final": last,
         "table_hash": None if table is None else table_content_hash(table)},
    )
    metric_name = "error_rate" if task == "classification" else "r_squared"
    print(f"epochs: {len(history)}  final train loss: {last['train_loss']:.6f}")
    print(f"final {metric_name}: {last['eval_metric']:.6f}")
    print(f"wall time: {wall_ms:.1f} ms")
    print(f"checkpoint: {ckpt_path}")
    print(f"log: {log_path}")
    print(f"manifest: {manifest}")
    return 0


def cmd_evaluate(rc: RunConfig) -> int:
    if rc.checkpoint is None:
        raise ConfigurationError("--checkpoint is required")
    started = time.perf_counter()
    table = None
    inputs = [rc.checkpoint]
    if rc.table is not None:
        table = read_table(rc.table)
        inputs.append(rc.table)
    net, meta = load_checkpoint(rc.checkpoint, table)

    data, _, data_inputs = _load_dataset(rc)
    inputs.extend(data_inputs)
    extra_meta = meta.get("extra", {})
    index_map = extra_meta.get("feature_index_map")
    if index_map is not None:
        data = apply_feature_selection(data, np.asarray(index_map, dtype=np.int64))
    norm = extra_meta.get("normalization")
    if norm is not None:
        mean = np.asarray(norm["mean"], dtype=np.float64)
        std = np.asarray(norm["std"], dtype=np.float64)
        data = Dataset(
            features=(data.features - mean) / std,
            targets=data.targets,
            feature_index_map=data.feature_index_map,
            normalization={"kind": norm["kind"], "mean": mean, "std": std},
        )

    metrics = evaluate(net, data)
    metrics["parameters"] = count_parameters(net)
    wall_ms = (time.perf_counter() - started) * 1000.0
    print(json.dumps(metrics, indent=2))
    if rc.out is not None:
        os.makedirs(rc.out, exist_ok=True)
        metrics_path = os.path.join(rc.out, "metrics.json")
        with open(metrics_path, "w") as fh:
            json.dump(metrics, fh, indent=2)
        _write_manifest(rc.out, "evaluate_manifest.json", rc, wall_ms,
                        inputs, [metrics_path], {"metrics": metrics})
    return 0


def cmd_inspect(rc: RunConfig) -> int:
    if rc.table is None or rc.node is None:
        raise ConfigurationError("inspect needs --table and --node")
    table = read_table(rc.table)
    node = rc.node
    if not 0 <= node < table.n_nodes:
        raise DimensionError(
            f"node {node} out of range for a {table.n_nodes}-node table"
        )
    real = table.indices[node][~table.pad_mask[node]]
    if rc.as_json:
        print(json.dumps({
            "node": node,
            "indices": table.indices[node].tolist(),
            "weights": None if table.weights is None else table.weights[node].tolist(),
            "pad_mask": table.pad_mask[node].tolist(),
            "k": table.k,
            "variant": table.variant,
        }))
        return 0
    print(list(map(int, real)))
    for j in range(table.p):
        if table.pad_mask[node, j]:
            print(f"  slot {j}: padding")
        elif table.weights is not None:
            print(f"  slot {j}: node {table.indices[node, j]} (weight {table.weights[node, j]:.6g})")
        else:
            print(f"  slot {j}: node {table.indices[node, j]}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walkconv",
        description="Random-walk graph convolution networks: preprocessing, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p, with_eval=False):
        p.add_argument("--csv", help="numeric CSV with header row")
        p.add_argument("--target", help="target column name for CSV data")
        p.add_argument("--idx-images", help="IDX image file (optionally .gz)")
        p.add_argument("--idx-labels", help="IDX label file (optionally .gz)")
        p.add_argument("--limit", type=int, help="use only the first N samples")
        if with_eval:
            p.add_argument("--eval-csv", help="held-out CSV (same target column)")
            p.add_argument("--eval-idx-images", help="held-out IDX image file")
            p.add_argument("--eval-idx-labels", help="held-out IDX label file")
            p.add_argument("--eval-limit", type=int, help="first N held-out samples")

    def add_filter_flags(p):
        p.add_argument("--min-active", type=int, default=0,
                       help="keep features with at least this many nonzero entries")
        p.add_argument("--drop-constant", action=argparse.BooleanOptionalAction,
                       default=True, help="drop zero-variance features")

    bg = sub.add_parser("build-graph", help="build and save a neighbor table")
    bg.add_argument("--grid", help="grid graph HxW (8-connected, unit weights)")
    add_dataset_flags(bg)
    add_filter_flags(bg)
    bg.add_argument("--k", type=int, default=1, help="random-walk length")
    bg.add_argument("--p", type=int, required=True, help="neighbors per node")
    bg.add_argument("--variant", choices=["conv1", "conv2"], default="conv1")
    bg.add_argument("--tie-break", choices=["deterministic", "seeded"],
                    default="deterministic")
    bg.add_argument("--tie-seed", type=int, help="seed for the seeded tie-break")
    bg.add_argument("--stationary-check", action="store_true",
                    help="report how close Q/k is to the stationary distribution")
    bg.add_argument("--json-table", action="store_true",
                    help="also write a JSON debug export of the table")
    bg.add_argument("--out", required=True, help="output directory")
    bg.set_defaults(func=cmd_build_graph)

    tr = sub.add_parser("train", help="train a network against a neighbor table")
    add_dataset_flags(tr, with_eval=True)
    add_filter_flags(tr)
    tr.add_argument("--table", help="neighbor table file from build-graph")
    tr.add_argument("--arch", default="",
                    help="hidden layers, e.g. C20 or C10-FC100 (empty = bare head)")
    tr.add_argument("--task", choices=["classification", "regression"],
                    help="default: classification for IDX data, regression for CSV")
    tr.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                    default=None, help="default: on for CSV, off for IDX")
    tr.add_argument("--epochs", type=int, default=40)
    tr.add_argument("--lr", dest="learning_rate", type=float, default=0.001)
    tr.add_argument("--batch-size", type=int, default=64)
    tr.add_argument("--dropout", type=float, default=0.0)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True, help="output directory")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--table", help="neighbor table the checkpoint was trained with")
    add_dataset_flags(ev)
    ev.add_argument("--out", help="directory for metrics.json + manifest")
    ev.set_defaults(func=cmd_evaluate)

    ins = sub.add_parser("inspect", help="print one node's neighbor listing")
    ins.add_argument("--table", required=True)
    ins.add_argument("--node", type=int, required=True)
    ins.add_argument("--json", dest="as_json", action="store_true")
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        rc = _rc_from_args(args)
        rc.workers = _worker_count()
        return args.func(rc)
    except (ConfigurationError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    except WalkconvError as exc:  # any future subclass: treat as usage
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
