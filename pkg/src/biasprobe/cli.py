"""Command-line front end: generate, ablate, train, sweep, compare.

Every command writes a run manifest (resolved parameters plus a stable 64-bit
digest of them) next to its outputs. Exit codes: 0 success, 2 invalid input
or parameters, 3 runtime failure (divergence, decode errors), 4 sweep
completed but produced error records.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from .ablation import KINDS, AblationSpec, apply, sweep_levels
from .fcr import (
    ExperimentSpec,
    compare_tasks,
    plot_data,
    read_records_csv,
    run_sweep,
    sweep_trained_network,
    write_records_csv,
    write_records_json,
)
from .imagecore import DecodeError, load_image, save_image
from .rng import fnv1a64
from .tasks import (
    SHAPE_MODE,
    TEXTURE_MODE,
    SyntheticTaskSpec,
    build_task_from_dirs,
    generate_synthetic_task,
    materialize_task,
)
from .tinynn import (
    TrainConfig,
    TrainingDiverged,
    build_densenet,
    build_resnet,
    load_checkpoint,
    metrics_to_csv,
    network_from_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_ERROR_RECORDS = 4


def default_workers() -> int:
    env = os.environ.get("BIASPROBE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def manifest_digest(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return f"{fnv1a64(canonical.encode('utf-8')):016x}"


def write_manifest(out_dir: str, command: str, resolved: dict, seed: int,
                   artifacts: list[str]) -> str:
    manifest = {
        "command": command,
        "resolved": resolved,
        "digest": manifest_digest(resolved),
        "seed": seed,
        "artifacts": artifacts,
        "version": __version__,
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def cmd_generate(args) -> int:
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        print(f"error: {out} exists and is not empty (use --force)", file=sys.stderr)
        return EXIT_USAGE
    spec = SyntheticTaskSpec(mode=args.mode, classes=args.classes,
                             per_class_train=args.train_per_class,
                             per_class_val=args.val_per_class,
                             image_size=args.size, seed=args.seed)
    task = generate_synthetic_task(spec)
    os.makedirs(out, exist_ok=True)
    materialize_task(task, out)
    resolved = asdict(spec)
    resolved["out"] = os.path.abspath(out)
    path = write_manifest(out, "generate", resolved, args.seed, [os.path.abspath(out)])
    print(path)
    return EXIT_OK


def _ablate_one(src: str, dst: str, spec: AblationSpec | None) -> None:
    os.makedirs(os.path.dirname(dst), exist_ok=True)
    if spec is None:
        shutil.copyfile(src, dst)
        return
    save_image(np.clip(apply(spec, load_image(src)), 0.0, 1.0), dst)


def cmd_ablate(args) -> int:
    spec = AblationSpec(kind=args.kind,
                        window=args.grid if args.kind == "topology" else args.window,
                        range_radius=args.range_radius, edge_threshold=args.threshold,
                        seed=args.seed)
    in_root = args.in_dir
    if not os.path.isdir(in_root):
        print(f"error: input directory {in_root} not found", file=sys.stderr)
        return EXIT_USAGE
    jobs = []
    for dirpath, dirnames, files in os.walk(in_root):
        dirnames.sort()
        for name in sorted(files):
            if not name.lower().endswith(".png"):
                continue
            src = os.path.join(dirpath, name)
            rel = os.path.relpath(src, in_root)
            targeted = args.category is None or args.category in rel.split(os.sep)
            jobs.append((src, os.path.join(args.out, rel), spec if targeted else None))
    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            list(pool.map(lambda j: _ablate_one(*j), jobs))
    else:
        for j in jobs:
            _ablate_one(*j)
    resolved = {"kind": args.kind, "window": spec.window, "range_radius": spec.range_radius,
                "edge_threshold": spec.edge_threshold, "seed": spec.seed,
                "in": os.path.abspath(in_root), "out": os.path.abspath(args.out),
                "category": args.category}
    path = write_manifest(args.out, "ablate", resolved, spec.seed, [os.path.abspath(args.out)])
    print(path)
    return EXIT_OK


def _categories_of(root: str) -> list[str]:
    d = os.path.join(root, "train")
    if not os.path.isdir(d):
        raise FileNotFoundError(f"missing directory {d}")
    return sorted(e for e in os.listdir(d) if os.path.isdir(os.path.join(d, e)))


def _load_dir_task(args, target: str | None = None):
    cats = _categories_of(args.data)
    target = target or cats[0]
    return build_task_from_dirs(args.data, cats, target,
                                args.train_per_class, args.val_per_class, args.input_size)


def _train_config(args) -> TrainConfig:
    opt = args.opt or ("adam" if args.model == "resnet" else "momentum")
    return TrainConfig(optimizer=opt, learning_rate=args.lr, weight_decay=args.wd,
                       batch_size=args.batch, epochs=args.epochs, seed=args.seed)


def cmd_train(args) -> int:
    if args.batch not in (32, 64):
        print("error: --batch must be 32 or 64", file=sys.stderr)
        return EXIT_USAGE
    task = _load_dir_task(args)
    builder = build_resnet if args.model == "resnet" else build_densenet
    config = builder(len(task.categories), args.input_size)
    tc = _train_config(args)
    ckpt, metrics = train(config, task, tc, verbose=args.verbose)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.bpck")
    metrics_path = os.path.join(args.out, "metrics.csv")
    save_checkpoint(ckpt, ckpt_path)
    with open(metrics_path, "w", newline="\n") as f:
        f.write(metrics_to_csv(metrics))
    resolved = {"data": os.path.abspath(args.data), "model": args.model,
                "input_size": args.input_size, "train": asdict(tc),
                "train_per_class": args.train_per_class, "val_per_class": args.val_per_class}
    path = write_manifest(args.out, "train", resolved, tc.seed,
                          [os.path.abspath(ckpt_path), os.path.abspath(metrics_path)])
    print(path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    windows = [int(t) for t in args.windows.split(",") if t.strip()]
    base = AblationSpec(kind=args.ablation, range_radius=args.range_radius,
                        edge_threshold=args.threshold, seed=args.seed)
    ablations = tuple(sweep_levels(args.ablation, windows, base))
    experiment = None
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        args.input_size = ckpt.config.input_size
        task = _load_dir_task(args, target=args.target)
        net = network_from_checkpoint(ckpt)
        records = sweep_trained_network(net, task, task.categories.index(args.target),
                                        ablations, ckpt.config.name,
                                        ckpt.config.input_size, ckpt.rng_seed,
                                        verbose=args.verbose)
    else:
        task = _load_dir_task(args, target=args.target)
        builder = build_resnet if args.model == "resnet" else build_densenet
        config = builder(len(task.categories), args.input_size)
        experiment = ExperimentSpec(task=task, model=config, train=_train_config(args),
                                    ablations=ablations,
                                    target_category=task.categories.index(args.target),
                                    repeats=args.repeats)
        records = run_sweep(experiment, verbose=args.verbose)

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    json_path = os.path.join(args.out, "report.json")
    write_records_csv(records, csv_path)
    write_records_json(records, json_path, experiment)
    artifacts = [os.path.abspath(csv_path), os.path.abspath(json_path)]
    for value, tag in (("fcr", "fcr"), ("acc_rm", "accrm")):
        for kind, pairs in plot_data(records, value).items():
            p = os.path.join(args.out, f"plot_{kind}_{tag}.csv")
            with open(p, "w", newline="\n") as f:
                f.write("window,mean\n")
                for w, v in pairs:
                    f.write(f"{w},{v!r}\n")
            artifacts.append(os.path.abspath(p))
    resolved = {"data": os.path.abspath(args.data), "ablation": args.ablation,
                "windows": windows, "target": args.target, "seed": args.seed,
                "repeats": args.repeats, "checkpoint": args.checkpoint,
                "model": args.model, "input_size": args.input_size}
    path = write_manifest(args.out, "sweep", resolved, args.seed, artifacts)
    print(path)
    if any(r.error for r in records):
        print("warning: sweep produced error records (zero baseline accuracy)",
              file=sys.stderr)
        return EXIT_ERROR_RECORDS
    return EXIT_OK


def cmd_compare(args) -> int:
    a = read_records_csv(args.a)
    b = read_records_csv(args.b)
    report = compare_tasks(a, b)
    lines = [f"category: {report.category}  ablation: {report.ablation}",
             f"task A: {report.task_a}",
             f"task B: {report.task_b}",
             "window,mean_fcr_a,mean_fcr_b,difference,sign"]
    for row in report.rows:
        lines.append(f"{row.window},{row.mean_a!r},{row.mean_b!r},{row.difference!r},{row.sign}")
    lines.append(f"verdict: {report.verdict}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    os.makedirs(args.out, exist_ok=True)
    cmp_path = os.path.join(args.out, "comparison.txt")
    with open(cmp_path, "w", newline="\n") as f:
        f.write(text)
    resolved = {"a": os.path.abspath(args.a), "b": os.path.abspath(args.b)}
    write_manifest(args.out, "compare", resolved, 0, [os.path.abspath(cmp_path)])
    return EXIT_OK


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["resnet", "densenet"], default="resnet")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--wd", type=float, default=1e-4)
    p.add_argument("--opt", choices=["adam", "momentum"], default=None,
                   help="default: adam for resnet, momentum for densenet")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-per-class", type=int, default=300)
    p.add_argument("--val-per-class", type=int, default=50)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biasprobe",
                                description="Feature-bias probing for small CNNs")
    p.add_argument("--version", action="version", version=f"biasprobe {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="materialize a synthetic task dataset")
    g.add_argument("--mode", choices=[TEXTURE_MODE, SHAPE_MODE], required=True)
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--train-per-class", type=int, default=300)
    g.add_argument("--val-per-class", type=int, default=50)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("ablate", help="mirror a dataset directory with one feature ablated")
    a.add_argument("--kind", choices=list(KINDS), required=True)
    a.add_argument("--window", type=int, default=1)
    a.add_argument("--grid", type=int, default=1, help="grid side for topology")
    a.add_argument("--range-radius", type=float, default=0.2)
    a.add_argument("--threshold", type=float, default=0.2)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--category", default=None,
                   help="only ablate files under this category; others copied verbatim")
    a.add_argument("--workers", type=int, default=default_workers())
    a.add_argument("--in", dest="in_dir", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate)

    t = sub.add_parser("train", help="train a model on a dataset directory")
    t.add_argument("--data", required=True)
    _add_model_flags(t)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="run an FCR ablation sweep")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", default=None,
                   help="evaluate this checkpoint instead of training inline")
    s.add_argument("--ablation", choices=list(KINDS), required=True)
    s.add_argument("--windows", required=True, help="comma-separated odd sizes, e.g. 1,5,9,13")
    s.add_argument("--target", required=True, help="target category name")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--range-radius", type=float, default=0.2)
    s.add_argument("--threshold", type=float, default=0.2)
    _add_model_flags(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="compare two sweep report CSVs")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, DecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
