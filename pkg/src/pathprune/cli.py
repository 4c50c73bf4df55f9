"""Command-line interface.

Subcommands: gen, train, plan, bench, shift-encoder, shift-rl, incr, report.
Exit codes: 0 success, 2 config/usage errors, 1 runtime failures. Stochastic
subcommands require --seed (or --seeds). PPE_THREADS caps the benchmark
worker pool.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, config as config_mod, plots, rl
from .dataset import gen_dataset, load_family, load_manifest, load_scene
from .encoder import forward, image_to_input, init_model, load_model, save_model, train
from .errors import ConfigError, PathPruneError
from .grid import (
    FAMILY_KINDS,
    compute_label,
    default_families,
    generate_scene,
    make_family,
    render_scene,
)
from .masking import MaskConfig, build_region, plan_with_mask
from .planners import PLANNERS


def _parse_families(spec: str, clutter: float | None = None):
    if spec == "all":
        kinds = list(FAMILY_KINDS)
    else:
        kinds = [part.strip() for part in spec.split(",") if part.strip()]
    unknown = [k for k in kinds if k not in FAMILY_KINDS]
    if unknown:
        raise ConfigError(f"unknown families {unknown}; choose from {list(FAMILY_KINDS)}")
    families = []
    for kind in kinds:
        if kind == "uniform_clutter" and clutter is not None:
            families.append(make_family(kind, p=clutter))
        else:
            families.append(make_family(kind))
    return families


def _parse_seeds(spec: str) -> list[int]:
    try:
        return [int(part) for part in spec.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seeds must be comma-separated integers: {spec!r}") from exc


def _load_doc(args) -> dict:
    if getattr(args, "config", None):
        return config_mod.load_config(args.config)
    return {}


def cmd_gen(args) -> int:
    families = _parse_families(args.families, args.clutter)
    manifest = gen_dataset(
        families, args.count, args.seed, args.out, width=args.width, height=args.height
    )
    print(f"wrote {len(manifest.scenes)} scenes in {len(families)} families to {args.out}")
    for fam in manifest.families:
        print(f"  {fam['id']}: {fam['count']} scenes, seeds {fam['seed_start']}..{fam['seed_end']}")
    return 0


def cmd_train(args) -> int:
    doc = _load_doc(args)
    manifest = load_manifest(args.dataset)
    pairs = load_family(manifest, args.family, args.limit)
    samples = bench.training_samples(pairs)
    cfg = config_mod.train_config_from(
        doc,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        weighting=args.weighting,
        sigma=args.sigma,
        seed=args.seed,
    )
    model = init_model(config_mod.arch_from(doc), seed=cfg.seed)
    model, history = train(model, samples, cfg)
    save_model(model, args.out)
    print(
        f"trained on {len(samples)} {args.family} scenes for {len(history)} epochs; "
        f"final loss {history[-1]:.4f}" if history else "trained for 0 epochs"
    )
    print(f"checkpoint written to {args.out}")
    return 0


def _resolve_scene(args):
    if args.dataset and args.scene_id:
        manifest = load_manifest(args.dataset)
        for rec in manifest.scenes:
            if rec.scene_id == args.scene_id:
                return load_scene(manifest, rec)
        raise ConfigError(f"scene id {args.scene_id!r} not found in {args.dataset}")
    family = make_family(args.family) if args.family != "uniform_clutter" else make_family(
        "uniform_clutter", p=args.clutter if args.clutter is not None else 0.2
    )
    scene = generate_scene(family, args.scene_seed, width=args.size, height=args.size)
    return scene, compute_label(scene).mask


def cmd_plan(args) -> int:
    doc = _load_doc(args)
    scene, label_mask = _resolve_scene(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mask_cfg = config_mod.mask_config_from(doc, threshold=args.tau, dilation_radius=args.radius)
    summary: dict = {
        "scene": {"family": scene.family, "seed": scene.seed, "start": scene.start, "goal": scene.goal},
        "planner": args.planner,
    }
    probs = region = None
    paths = {}
    if args.model:
        model = load_model(args.model)
        probs = forward(model, image_to_input(render_scene(scene)))
        region = build_region(probs, scene, mask_cfg)
        outcome = plan_with_mask(scene, probs, mask_cfg, args.planner)
        paths["masked"] = outcome.result.path
        summary["masked"] = {
            "cost": outcome.result.cost,
            "expansions": outcome.masked_expansions,
            "used_fallback": outcome.used_fallback,
            "mask_size": outcome.mask_size,
            "reduction_expansions_pct": outcome.reduction_expansions,
            "full_expansions": outcome.full_expansions,
        }
        print(
            f"masked {args.planner}: cost {outcome.result.cost}, "
            f"expansions {outcome.masked_expansions} vs full {outcome.full_expansions} "
            f"({outcome.reduction_expansions:.1f}% reduction, fallback={outcome.used_fallback})"
        )
    full = PLANNERS[args.planner](scene)
    paths["full"] = full.path
    summary["full"] = {"cost": full.cost, "expansions": full.expansions}
    print(f"full {args.planner}: cost {full.cost}, expansions {full.expansions}")
    (out / "plan.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    figure = plots.save_scene_figure(scene, out / "plan.png", probs=probs, region=region, paths=paths)
    print(f"wrote {out / 'plan.json'} and {figure}")
    return 0


def cmd_bench(args) -> int:
    doc = _load_doc(args)
    manifest = load_manifest(args.dataset)
    records = manifest.by_family(args.family)
    if args.limit:
        records = records[: args.limit]
    if not records:
        raise ConfigError(f"dataset has no scenes for family {args.family!r}")
    data = [load_scene(manifest, rec) for rec in records]
    ids = [rec.scene_id for rec in records]
    model = load_model(args.model)
    mask_cfg = config_mod.mask_config_from(doc, threshold=args.tau, dilation_radius=args.radius)
    run_config = {
        "experiment": "bench",
        "dataset": str(args.dataset),
        "family": args.family,
        "scene_count": len(data),
        "model": str(args.model),
        "mask": vars(mask_cfg),
        "planner": args.planner,
        "repeats": args.repeats,
    }
    report = bench.speedup_bench(
        model, data, mask_cfg, args.planner, repeats=args.repeats, config=run_config, scene_ids=ids
    )
    csv_path = bench.write_bench_report(report, args.out, "speedup")
    print(f"benchmarked {len(report.rows)} scenes ({len(report.skipped)} skipped)")
    for key, value in report.aggregates.items():
        print(f"  {key}: {value:.3f}")
    print(f"report written to {csv_path}")
    return 0


def cmd_shift_encoder(args) -> int:
    doc = _load_doc(args)
    cfg = config_mod.train_config_from(
        doc, base=bench.SHIFT_TRAIN_DEFAULTS, epochs=args.epochs, sigma=args.sigma
    )
    summary = bench.encoder_shift_experiment(
        args.out,
        seeds=_parse_seeds(args.seeds),
        train_family=_parse_families(args.train_family)[0] if args.train_family else None,
        eval_family=_parse_families(args.eval_family)[0] if args.eval_family else None,
        train_count=args.train_count,
        eval_count=args.eval_count,
        train_cfg=cfg,
        mask_cfg=config_mod.mask_config_from(doc),
    )
    for seed, gap in zip(summary["seeds"], summary["recall_gaps"]):
        print(f"seed {seed}: recall gap {gap:.3f}")
    print(f"mean recall gap ({summary['train_family']} vs {summary['eval_family']}): "
          f"{summary['mean_recall_gap']:.3f}")
    print(f"report written to {Path(args.out) / 'shift_encoder.csv'}")
    return 0


def cmd_shift_rl(args) -> int:
    doc = _load_doc(args)
    hp = config_mod.qlearn_config_from(doc, episodes=args.episodes)
    summary = bench.rl_shift_experiment(
        args.out,
        seeds=_parse_seeds(args.seeds),
        size=args.size,
        clutter=args.clutter,
        k=args.k,
        hp=hp,
        eval_episodes=args.eval_episodes,
    )
    for row in summary["results"]:
        print(
            f"seed {row['seed']}: win rate A={row['win_rate_a']:.1f}% "
            f"B={row['win_rate_b']:.1f}% (train {row['train_time_s']:.1f}s)"
        )
    print(f"reports written to {args.out}")
    return 0


def cmd_incr(args) -> int:
    doc = _load_doc(args)
    cfg = config_mod.train_config_from(
        doc, base=bench.SHIFT_TRAIN_DEFAULTS, epochs=args.epochs, seed=args.seed
    )
    summary = bench.incremental_experiment(
        args.out,
        seed=args.seed,
        old_family=_parse_families(args.old_family)[0] if args.old_family else None,
        new_family=_parse_families(args.new_family)[0] if args.new_family else None,
        base_count=args.base_count,
        new_count=args.new_count,
        eval_count=args.eval_count,
        replay_ratio=args.replay_ratio,
        train_cfg=cfg,
    )
    print(
        f"new-family recall: {summary['recall_new_before']:.3f} -> {summary['recall_new_after']:.3f} "
        f"(scratch {summary['recall_new_scratch']:.3f})"
    )
    print(
        f"old-family recall: {summary['recall_old_before']:.3f} -> {summary['recall_old_after']:.3f}"
    )
    print(f"report written to {Path(args.out) / 'incremental.csv'}")
    return 0


def _report_summary_csv(path: Path, pairs: list[tuple[str, float]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        writer.writerows(pairs)


def cmd_report(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise ConfigError(f"report file {src} does not exist")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with src.open() as fh:
        header = next(csv.reader(fh), [])
    written: list[Path] = []

    if header == bench.BENCH_COLUMNS:
        report = bench.load_bench_report(src)
        _report_summary_csv(out / "summary.csv", sorted(report.aggregates.items()))
        written.append(out / "summary.csv")
        written.append(plots.save_reduction_histogram(report.rows, out / "reduction_hist.png"))
        written.append(plots.save_expansion_scatter(report.rows, out / "expansions_scatter.png"))
    elif header == bench.SHIFT_ENCODER_COLUMNS:
        with src.open() as fh:
            rows = list(csv.DictReader(fh))
        seeds = sorted({row["seed"] for row in rows}, key=int)
        series = {
            role: [
                float(next(r["recall"] for r in rows if r["seed"] == s and r["role"] == role))
                for s in seeds
            ]
            for role in ("train", "unseen")
        }
        gaps = [a - b for a, b in zip(series["train"], series["unseen"])]
        _report_summary_csv(
            out / "summary.csv",
            [("mean_recall_train", float(np.mean(series["train"]))),
             ("mean_recall_unseen", float(np.mean(series["unseen"]))),
             ("mean_recall_gap", float(np.mean(gaps)))],
        )
        written.append(out / "summary.csv")
        written.append(
            plots.save_grouped_bars(
                [f"seed {s}" for s in seeds], series, out / "recall_bars.png",
                "mask recall", "encoder generalization across families", ylim=(0, 1),
            )
        )
    elif header == rl.SHIFT_CSV_COLUMNS:
        with src.open() as fh:
            rows = list(csv.DictReader(fh))
        envs = [row["env_id"] for row in rows]
        series = {"win rate": [float(row["win_rate_pct"]) for row in rows]}
        _report_summary_csv(
            out / "summary.csv", [(f"win_rate_{row['env_id']}", float(row["win_rate_pct"])) for row in rows]
        )
        written.append(out / "summary.csv")
        written.append(
            plots.save_grouped_bars(
                envs, series, out / "win_rate_bars.png", "win rate (%)",
                "policy trained on A, evaluated on both", ylim=(0, 100),
            )
        )
    elif header == bench.INCREMENTAL_COLUMNS:
        with src.open() as fh:
            row = next(csv.DictReader(fh))
        labels = ["new before", "new after", "new scratch", "old before", "old after"]
        values = [
            float(row["recall_new_before"]),
            float(row["recall_new_after"]),
            float(row["recall_new_scratch"]),
            float(row["recall_old_before"]),
            float(row["recall_old_after"]),
        ]
        _report_summary_csv(out / "summary.csv", list(zip(labels, values)))
        written.append(out / "summary.csv")
        written.append(
            plots.save_grouped_bars(
                labels, {"recall": values}, out / "incremental_bars.png",
                "mask recall", "incremental fine-tuning", ylim=(0, 1),
            )
        )
    else:
        raise ConfigError(f"unrecognized report header in {src}: {header}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathprune",
        description="Learned search-space pruning for grid planners, with "
        "generalization and incremental-learning benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scene/label dataset")
    p.add_argument("--families", default="all", help="'all' or comma-separated family kinds")
    p.add_argument("--count", type=int, required=True, help="scenes per family")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=60)
    p.add_argument("--height", type=int, default=60)
    p.add_argument("--clutter", type=float, default=None, help="obstacle density for uniform_clutter")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the encoder on a dataset family")
    p.add_argument("--dataset", required=True)
    p.add_argument("--family", default="uniform_clutter", choices=FAMILY_KINDS)
    p.add_argument("--limit", type=int, default=None, help="cap the number of training scenes")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default=None)
    p.add_argument("--weighting", choices=["uniform", "gaussian"], default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="plan one scene, optionally with an encoder mask")
    p.add_argument("--dataset", default=None)
    p.add_argument("--scene-id", default=None)
    p.add_argument("--family", default="uniform_clutter", choices=FAMILY_KINDS)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--size", type=int, default=60)
    p.add_argument("--clutter", type=float, default=None)
    p.add_argument("--model", default=None, help="encoder checkpoint")
    p.add_argument("--planner", choices=["dijkstra", "astar"], default="dijkstra")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="paired full vs masked benchmark over a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, help="encoder checkpoint")
    p.add_argument("--family", default="uniform_clutter", choices=FAMILY_KINDS)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--planner", choices=["dijkstra", "astar"], default="dijkstra")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("shift-encoder", help="encoder generalization across families")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--train-family", default=None, help="defaults to dense uniform clutter")
    p.add_argument("--eval-family", default=None, help="defaults to diagonal_walls")
    p.add_argument("--train-count", type=int, default=500)
    p.add_argument("--eval-count", type=int, default=50)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift_encoder)

    p = sub.add_parser("shift-rl", help="tabular Q-learning environment shift")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--size", type=int, default=10)
    p.add_argument("--clutter", type=float, default=0.15)
    p.add_argument("--k", type=int, default=12, help="cells toggled to build env B")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--eval-episodes", type=int, default=50)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift_rl)

    p = sub.add_parser("incr", help="incremental fine-tuning with replay")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--old-family", default=None, help="defaults to dense uniform clutter")
    p.add_argument("--new-family", default=None, help="defaults to diagonal_walls")
    p.add_argument("--base-count", type=int, default=500)
    p.add_argument("--new-count", type=int, default=500)
    p.add_argument("--eval-count", type=int, default=50)
    p.add_argument("--replay-ratio", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_incr)

    p = sub.add_parser("report", help="summaries and figures from a report CSV")
    p.add_argument("--input", required=True, help="report CSV produced by bench/shift/incr")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PathPruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
