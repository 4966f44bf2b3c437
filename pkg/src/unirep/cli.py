"""Command-line entry point: generate, pretrain, eval, ablate, stats.

Every run directory is self-describing (full effective config + seed +
logs); report paths write figures next to their CSV/JSON output. Exit codes:
0 success, 2 config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import codebook as cb
from . import pipeline, plots
from .config import gen_spec_from, load_config, persist_config, validate_config
from .errors import ConfigError, DataError, NumericalError, ShapeError
from .synthdata import generate, known_count, load_dataset, resplit, save_dataset
from .tensors import thread_cap

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def cmd_generate(args) -> int:
    cfg = _config_from(args)
    out = args.out or "dataset"
    dataset = generate(gen_spec_from(cfg))
    save_dataset(out, dataset)
    persist_config(cfg, out)
    print(f"dataset written to {out}")
    for name, size in dataset.split_sizes().items():
        print(f"  {name}: {size}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config_from(args)
    if not os.path.isdir(args.data):
        raise DataError(f"dataset directory not found: {args.data}")
    dataset = load_dataset(args.data)
    if dataset.spec.latent_dim != cfg["model.d_latent"]:
        raise ConfigError(
            f"model.d_latent = {cfg['model.d_latent']} but dataset was generated "
            f"with latent width {dataset.spec.latent_dim}"
        )
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    result = pipeline.pretrain(cfg, dataset)
    persist_config(cfg, out)
    with open(os.path.join(out, "run_meta.json"), "w") as fh:
        json.dump({"data_dir": os.path.abspath(args.data)}, fh, indent=2, sort_keys=True)
    with open(os.path.join(out, "log.jsonl"), "w") as fh:
        for record in result.log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    pipeline.save_components(os.path.join(out, "checkpoints"), result)
    plots.training_curves(result.log, os.path.join(out, "figures", "training_curves.png"))
    final = result.log[-1]
    print(f"run written to {out}")
    print(f"  final epoch total loss {final['total']:.6f}, perplexity {final['perplexity']:.2f}")
    return EXIT_OK


def _load_run(run_dir):
    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise DataError(f"no config.json in run directory {run_dir}")
    cfg = load_config(cfg_path)
    components = pipeline.load_components(os.path.join(run_dir, "checkpoints"))
    meta_path = os.path.join(run_dir, "run_meta.json")
    data_dir = None
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            data_dir = json.load(fh).get("data_dir")
    return cfg, components, data_dir


def cmd_eval(args) -> int:
    cfg, components, data_dir = _load_run(args.run)
    if args.seed is not None:
        cfg["seed"] = args.seed
    data_dir = args.data or data_dir
    if not data_dir or not os.path.isdir(data_dir):
        raise DataError(f"dataset directory not found: {data_dir}")
    dataset = load_dataset(data_dir)
    split_name = "default"
    if args.split:
        dataset = resplit(dataset, known_count(dataset.spec.n_classes, args.split))
        split_name = args.split.replace(":", "-")

    report = pipeline.run_eval(components, dataset, args.direction, cfg)
    out = args.out or os.path.join(args.run, f"eval_{args.direction}_{split_name}")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "wb") as fh:
        fh.write(report.to_json_bytes())
    with open(os.path.join(out, "report.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.CSV_COLUMNS)
        writer.writerow(report.csv_row())

    test_known = dataset.batch("test_known")
    test_unknown = dataset.batch("test_unknown")
    source, target = report.source_modality, report.target_modality
    # the sweep reuses the probe exactly as the report trained it
    probe_train = dataset.batch("probe_train")
    head = pipeline.train_probe(
        components["encoders"][source],
        probe_train.x_a if source == "a" else probe_train.x_b,
        probe_train.labels, dataset.known_classes, source,
        epochs=cfg["probe.epochs"], lr=cfg["probe.lr"],
        features=cfg["eval.features"], book=components["book"])
    sweep_rows = pipeline.threshold_sweep(
        head, components["encoders"][target],
        test_known.x_a if target == "a" else test_known.x_b, test_known.labels,
        test_unknown.x_a if target == "a" else test_unknown.x_b,
        np.linspace(0.0, 1.0, 101),
        features=cfg["eval.features"], book=components["book"])
    with open(os.path.join(out, "threshold_sweep.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "os_star", "unk", "hos"])
        for row in sweep_rows:
            writer.writerow([f"{row[k]:.6f}" for k in ("theta", "os_star", "unk", "hos")])
    plots.threshold_sweep(sweep_rows, report.theta, os.path.join(out, "figures", "threshold_sweep.png"))
    plots.per_class_accuracy(report.per_class, os.path.join(out, "figures", "per_class.png"))

    print(f"report written to {out}")
    unk = "n/a" if report.unk is None else f"{report.unk:.2f}"
    hos = "n/a" if report.hos is None else f"{report.hos:.2f}"
    print(f"  OS* {report.os_star:.2f}  UNK {unk}  HOS {hos}  theta {report.theta:.4f}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg, components, data_dir = _load_run(args.run)
    data_dir = args.data or data_dir
    if not data_dir or not os.path.isdir(data_dir):
        raise DataError(f"dataset directory not found: {data_dir}")
    dataset = load_dataset(data_dir)
    usage = pipeline.codebook_statistics(components["encoders"], components["book"], dataset)
    rows = cb.coactivation(usage)
    out = args.out or os.path.join(args.run, "stats")
    os.makedirs(out, exist_ok=True)
    cb.write_coactivation_csv(os.path.join(out, "coactivation.csv"), rows)
    summary = {
        "perplexity": cb.perplexity(sum(usage.values())),
        "classes": pipeline.coactivation_summary(usage),
    }
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    plots.codebook_usage(rows, usage, os.path.join(out, "figures", "codebook_usage.png"))
    print(f"stats written to {out}")
    print(f"  perplexity {summary['perplexity']:.2f}  classes {summary['classes']}")
    return EXIT_OK


def _loss_cells() -> dict:
    cells = {}
    for fine, coarse, jig in ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)):
        name = "+".join(n for n, on in (("fine", fine), ("coarse", coarse), ("cujp", jig)) if on)
        cells[name] = {
            "fcmi.fine": bool(fine),
            "fcmi.coarse": bool(coarse),
            "cujp.mode": "cujp" if jig else "off",
        }
    return cells


def sweep_cells(sweep: dict) -> dict:
    """Expand a sweep spec into named config-override cells."""
    cells = {}
    if sweep.get("losses"):
        cells.update(_loss_cells())
    for mode in sweep.get("mask_modes", []):
        cells[f"mask_{mode}"] = {"fcmi.mask_mode": mode}
    for o in sweep.get("segments", []):
        cells[f"cujp{o}"] = {"cujp.segments": o, "cujp.mode": "cujp",
                             "cujp.permutations": min(24, math.factorial(o))}
    for mode in sweep.get("jigsaw", []):
        if mode == "off":
            cells["jig_off"] = {"cujp.mode": "off"}
        elif mode == "mmjp":
            cells["jig_mmjp"] = {"cujp.mode": "mmjp"}
        elif mode == "cujp":
            cells["jig_cujp"] = {"cujp.mode": "cujp"}
        else:
            raise ConfigError(f"jigsaw sweep mode must be off|mmjp|cujp, got {mode!r}")
    for size in sweep.get("codebook_sizes", []):
        cells[f"codebook{size}"] = {"codebook.size": int(size)}
    if not cells:
        raise ConfigError("sweep spec selects no cells")
    return cells


def _run_cell(base_cfg: dict, name: str, overrides: dict, seed: int, direction: str,
              cell_path: str) -> dict:
    cfg = dict(base_cfg)
    cfg.update(overrides)
    cfg["seed"] = seed
    row = {"cell": name, "seed": seed, "status": "ok", "reason": "",
           "os_star": "", "unk": "", "hos": "", "closed_set_accuracy": "", "perplexity": ""}
    try:
        cfg = validate_config(cfg)
        dataset = generate(gen_spec_from(cfg))
        result = pipeline.pretrain(cfg, dataset)
        components = {"encoders": result.encoders, "decoders": result.decoders,
                      "book": result.book, "classifier": result.classifier}
        report = pipeline.run_eval(components, dataset, direction, cfg)
        row.update({
            "os_star": f"{report.os_star:.4f}",
            "unk": "" if report.unk is None else f"{report.unk:.4f}",
            "hos": "" if report.hos is None else f"{report.hos:.4f}",
            "closed_set_accuracy": f"{report.closed_set_accuracy:.4f}",
            "perplexity": f"{report.perplexity:.4f}",
        })
    except (ConfigError, DataError) as exc:
        row["status"] = "skipped"
        row["reason"] = str(exc)
    os.makedirs(os.path.dirname(cell_path), exist_ok=True)
    with open(cell_path, "w") as fh:
        json.dump(row, fh, indent=2, sort_keys=True)
    return row


ABLATION_COLUMNS = ("cell", "seed", "status", "os_star", "unk", "hos",
                    "closed_set_accuracy", "perplexity", "reason")


def cmd_ablate(args) -> int:
    cfg = _config_from(args)
    if not os.path.exists(args.sweep):
        raise ConfigError(f"sweep spec not found: {args.sweep}")
    with open(args.sweep) as fh:
        sweep = json.load(fh)
    cells = sweep_cells(sweep)
    seeds = [int(s) for s in sweep.get("seeds", [cfg["seed"]])]
    direction = sweep.get("direction", "a2b")
    out = args.out or "ablation"
    os.makedirs(out, exist_ok=True)

    tasks = []
    for name in cells:
        for seed in seeds:
            cell_path = os.path.join(out, "cells", f"{name}__{seed}.json")
            if os.path.exists(cell_path):
                continue  # idempotent per (cell, seed)
            tasks.append((name, cells[name], seed, cell_path))

    workers = thread_cap(1)
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, cfg, n, o, s, direction, p)
                       for n, o, s, p in tasks]
            for fut in futures:
                fut.result()
    else:
        for n, o, s, p in tasks:
            _run_cell(cfg, n, o, s, direction, p)

    rows = []
    for name in cells:
        for seed in seeds:
            cell_path = os.path.join(out, "cells", f"{name}__{seed}.json")
            with open(cell_path) as fh:
                rows.append(json.load(fh))
    with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATION_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in ABLATION_COLUMNS})
    hos_by_cell = {}
    for row in rows:
        if row["status"] == "ok" and row["hos"]:
            hos_by_cell.setdefault(row["cell"], []).append(float(row["hos"]))
    if hos_by_cell:
        plots.ablation_bars(hos_by_cell, os.path.join(out, "figures", "ablation_hos.png"))
    print(f"ablation written to {out} ({len(rows)} rows, {len(cells)} cells x {len(seeds)} seeds)")
    for name, vals in hos_by_cell.items():
        print(f"  {name}: mean HOS {sum(vals) / len(vals):.2f} over {len(vals)} seeds")
    return EXIT_OK


def _config_from(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unirep",
        description="Paired-modality unified-representation training and open-set evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON config file (defaults apply otherwise)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("generate", help="write a synthetic paired dataset")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="train encoders, decoders, codebook and pretext head")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from `generate`")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="train the probe and write the open-set report")
    common(p, config=False)
    p.add_argument("--run", required=True, help="run directory from `pretrain`")
    p.add_argument("--data", help="dataset directory (defaults to the run's)")
    p.add_argument("--direction", choices=("a2b", "b2a"), default="a2b",
                   help="source-to-target modality transfer direction")
    p.add_argument("--split", choices=("1:1", "3:1"),
                   help="re-derive the known:unknown class split at this ratio")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run a sweep and aggregate one CSV")
    common(p)
    p.add_argument("--sweep", required=True, help="JSON sweep spec")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="export codebook co-activation statistics")
    common(p, config=False)
    p.add_argument("--run", required=True, help="run directory from `pretrain`")
    p.add_argument("--data", help="dataset directory (defaults to the run's)")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, ShapeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
