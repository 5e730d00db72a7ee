"""Command-line interface: cross-validation, walk inspection, gradient
verification, ablations and hyperparameter sweeps.

Exit codes: 0 success, 1 configuration error, 2 dataset error,
3 numeric failure. Result files are written to a temporary path and
renamed on success, so failures never leave partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, model as M, training, walk
from .checkpoint import load_params
from .data import augment_degree_features, parse_tu_dataset
from .errors import ConfigError, ContractViolation, DatasetError, NumericError
from .gradcheck import model_gradcheck, random_graph

ENV_DATA_ROOT = "CTQW_DATA_ROOT"

CONFIG_DEFAULTS: dict[str, dict] = {
    "dataset": {"root": None, "name": None},
    "model": {"layers": 2, "time_steps": 4, "hidden": 64, "heads": 4,
              "dropout": 0.3, "use_qwgt": True, "use_qwgr": True},
    "train": {"epochs": 300, "lr": 0.001, "batch_size": 32, "patience": 30,
              "seed": 0, "val_fraction": 0.1},
    "output": {"dir": "results"},
}


def load_config_file(path) -> dict:
    """Parse a JSON run config, rejecting unknown sections/keys and filling
    documented defaults."""
    if path is None:
        raw = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {p} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
    resolved: dict[str, dict] = {}
    for section, defaults in CONFIG_DEFAULTS.items():
        got = raw.get(section, {})
        if not isinstance(got, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key in got:
            if key not in defaults:
                raise ConfigError(f"unknown config key {section}.{key}")
        resolved[section] = {**defaults, **got}
    for section in raw:
        if section not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
    resolved["_raw"] = raw
    return resolved


def resolve_dataset_root(args, config) -> Path:
    if getattr(args, "dataset_root", None):
        return Path(args.dataset_root)
    if config["dataset"]["root"]:
        return Path(config["dataset"]["root"])
    if os.environ.get(ENV_DATA_ROOT):
        return Path(os.environ[ENV_DATA_ROOT])
    return Path("data")


def load_dataset(root: Path, name: str):
    """Parse the TU directory and append the normalized-degree feature."""
    if not name:
        raise ConfigError("no dataset name given (config key dataset.name)")
    if not (root / name).is_dir():
        raise DatasetError(f"dataset directory not found: {root / name}")
    return augment_degree_features(parse_tu_dataset(root, name))


def build_train_config(config: dict, dataset, seed_override=None) -> training.TrainConfig:
    mc = M.ModelConfig(num_classes=dataset.num_classes,
                       feature_dim=dataset.feature_dim,
                       **config["model"])
    tc_kwargs = dict(config["train"])
    if seed_override is not None:
        tc_kwargs["seed"] = seed_override
    return training.TrainConfig(model=mc, **tc_kwargs)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp_", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def result_payload(config: dict, command: str, **extra) -> dict:
    payload = {
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in config.items() if k != "_raw"},
        "config_file": config.get("_raw", {}),
    }
    payload.update(extra)
    return payload


def write_cv_files(out_dir: Path, stem: str, payload: dict, result) -> Path:
    json_path = out_dir / f"{stem}.json"
    atomic_write(json_path, json.dumps(payload, indent=2) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["fold", "accuracy"])
    for i, acc in enumerate(result.fold_accuracies):
        writer.writerow([i, f"{acc:.6f}"])
    atomic_write(out_dir / f"{stem}.csv", buf.getvalue())
    return json_path


def _fold_payload(result) -> dict:
    return {
        "fold_accuracies": result.fold_accuracies,
        "mean": result.mean,
        "std": result.std,
        "seconds": result.seconds,
    }


def cmd_cv(args) -> int:
    config = load_config_file(args.config)
    root = resolve_dataset_root(args, config)
    dataset = load_dataset(root, args.dataset or config["dataset"]["name"])
    tc = build_train_config(config, dataset, args.seed)
    result = training.cross_validate(dataset, tc, folds=args.folds,
                                     threads=args.threads, log=_log)
    out_dir = Path(args.out or config["output"]["dir"])
    payload = result_payload(config, "cv", dataset=dataset.name,
                             train_config=tc.snapshot(), **_fold_payload(result))
    path = write_cv_files(out_dir, f"cv_{dataset.name}", payload, result)
    print(f"{dataset.name}: accuracy {result.mean:.4f} ± {result.std:.4f} "
          f"({result.seconds:.1f}s) -> {path}")
    return 0


def cmd_ablate(args) -> int:
    config = load_config_file(args.config)
    root = resolve_dataset_root(args, config)
    dataset = load_dataset(root, args.dataset or config["dataset"]["name"])
    tc = build_train_config(config, dataset, args.seed)
    result = training.run_ablation(dataset, tc, args.which, folds=args.folds,
                                   threads=args.threads, log=_log)
    out_dir = Path(args.out or config["output"]["dir"])
    payload = result_payload(config, "ablate", dataset=dataset.name,
                             ablation=args.which, train_config=tc.snapshot(),
                             **_fold_payload(result))
    path = write_cv_files(out_dir, f"ablate_{args.which}_{dataset.name}", payload, result)
    print(f"{dataset.name} [{args.which}]: accuracy {result.mean:.4f} ± "
          f"{result.std:.4f} -> {path}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config_file(args.config)
    root = resolve_dataset_root(args, config)
    dataset = load_dataset(root, args.dataset or config["dataset"]["name"])
    tc = build_train_config(config, dataset, args.seed)
    param = {"T": "time_steps", "L": "layers"}.get(args.param)
    if param is None:
        raise ConfigError(f"sweep parameter must be T or L, got {args.param!r}")
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"sweep values must be integers, got {args.values!r}") from None
    if not values:
        raise ConfigError("empty sweep value list")
    results = training.sweep(dataset, tc, {param: values}, folds=args.folds,
                             threads=args.threads, log=_log)
    out_dir = Path(args.out or config["output"]["dir"])
    rows = [["parameter", "value", "mean", "std", "seconds"]]
    for v, res in zip(values, results):
        payload = result_payload(config, "sweep", dataset=dataset.name,
                                 sweep={param: v}, train_config=tc.snapshot(),
                                 **_fold_payload(res))
        write_cv_files(out_dir, f"sweep_{args.param}{v}_{dataset.name}", payload, res)
        rows.append([param, v, f"{res.mean:.6f}", f"{res.std:.6f}", f"{res.seconds:.1f}"])
        print(f"{dataset.name} {param}={v}: {res.mean:.4f} ± {res.std:.4f}")
    buf = io.StringIO()
    csv.writer(buf).writerows(rows)
    combined = out_dir / f"sweep_{args.param}_{dataset.name}.csv"
    atomic_write(combined, buf.getvalue())
    print(f"combined sweep table -> {combined}")
    return 0


def cmd_simulate(args) -> int:
    config = load_config_file(args.config)
    root = resolve_dataset_root(args, config)
    dataset = load_dataset(root, args.dataset or config["dataset"]["name"])
    if not (0 <= args.index < len(dataset.graphs)):
        raise ConfigError(f"graph index {args.index} outside [0, {len(dataset.graphs)})")
    graph = dataset.graphs[args.index]

    if args.weights == "unit":
        ham = walk.unit_hamiltonian(graph)
    else:
        values = load_params(args.weights)
        mc = M.ModelConfig(num_classes=dataset.num_classes,
                           feature_dim=dataset.feature_dim, **config["model"])
        params = M.init_params(mc, seed=0)
        params.load_values(values)
        h0 = walk.initial_embeddings(walk.Tensor(graph.features), params.encoder)
        w = walk.edge_weights(h0, graph.edges, params.encoder)
        ham = walk.build_hamiltonian(w, graph.edges, graph.num_nodes)

    evolution = walk.simulate_ctqw(ham, args.steps)
    evolution.validate()

    out_dir = Path(args.out or config["output"]["dir"])
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t", "i", "j", "p"])
    n = graph.num_nodes
    for s, t in zip(evolution.slices, evolution.times):
        for i in range(n):
            for j in range(n):
                writer.writerow([t, i, j, repr(float(s.data[i, j]))])
    stem = f"simulate_{dataset.name}_{args.index}"
    atomic_write(out_dir / f"{stem}.csv", buf.getvalue())
    summary = result_payload(
        config, "simulate", dataset=dataset.name, graph_index=args.index,
        nodes=n, steps=args.steps, weights=args.weights,
        column_sum_max_deviation=evolution.max_column_sum_deviation(),
        symmetry_max_deviation=evolution.max_symmetry_deviation(),
    )
    atomic_write(out_dir / f"{stem}.json", json.dumps(summary, indent=2) + "\n")
    print(f"simulated {n} nodes x {args.steps} steps; column-sum dev "
          f"{summary['column_sum_max_deviation']:.2e} -> {out_dir / (stem + '.json')}")
    return 0


def cmd_gradcheck(args) -> int:
    config = load_config_file(args.config)
    mc = M.ModelConfig(num_classes=args.classes, feature_dim=args.features,
                       **config["model"])
    graph = random_graph(args.nodes, args.features, args.classes, args.seed)
    params = M.init_params(mc, args.seed)
    report = model_gradcheck(graph, params, mc, eps=args.eps,
                             rel_tol=args.threshold,
                             max_per_param=args.samples,
                             sample_seed=args.seed)
    print(f"checked {report.checked} coordinates, pass fraction "
          f"{report.pass_fraction:.4f}, worst relative error {report.worst_rel_err:.3e}")
    print("worst coordinates:")
    for r in report.worst:
        print(f"  {r.name}[{r.index}]: autodiff {r.autodiff:.6e} "
              f"numeric {r.numeric:.6e} rel {r.rel_err:.3e}")
    ok = report.passed(args.required_fraction)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _log(msg: str) -> None:
    print(msg, flush=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctqwalk",
        description="Quantum-walk graph classification: training, simulation "
                    "and diagnostics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset_opt=True):
        p.add_argument("--config", default=None, help="JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel fold workers (processes)")
        p.add_argument("--dataset-root", default=None,
                       help=f"TU dataset root (fallback env {ENV_DATA_ROOT})")
        if dataset_opt:
            p.add_argument("--dataset", default=None, help="dataset name")
        p.add_argument("--folds", type=int, default=10)

    p_cv = sub.add_parser("cv", help="10-fold cross-validation")
    common(p_cv)
    p_cv.set_defaults(func=cmd_cv)

    p_ab = sub.add_parser("ablate", help="cross-validate with one branch disabled")
    common(p_ab)
    p_ab.add_argument("--which", required=True, choices=["no_qwgt", "no_qwgr"])
    p_ab.set_defaults(func=cmd_ablate)

    p_sw = sub.add_parser("sweep", help="grid sweep over T or L")
    common(p_sw)
    p_sw.add_argument("--param", required=True, help="T (time steps) or L (layers)")
    p_sw.add_argument("--values", required=True, help="comma-separated integers")
    p_sw.set_defaults(func=cmd_sweep)

    p_sim = sub.add_parser("simulate", help="emit one graph's evolution tensor")
    common(p_sim)
    p_sim.add_argument("--index", type=int, default=0, help="graph index")
    p_sim.add_argument("--steps", type=int, default=4, help="number of time steps")
    p_sim.add_argument("--weights", default="unit",
                       help="'unit' or a parameter checkpoint path")
    p_sim.set_defaults(func=cmd_simulate)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_gc.add_argument("--config", default=None)
    p_gc.add_argument("--nodes", type=int, default=6)
    p_gc.add_argument("--features", type=int, default=4)
    p_gc.add_argument("--classes", type=int, default=2)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--eps", type=float, default=1e-5)
    p_gc.add_argument("--threshold", type=float, default=1e-4)
    p_gc.add_argument("--required-fraction", type=float, default=0.99)
    p_gc.add_argument("--samples", type=int, default=None,
                      help="max coordinates per parameter (default: all)")
    p_gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except DatasetError as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return 2
    except (NumericError, ContractViolation) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
