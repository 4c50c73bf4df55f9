"""End-to-end experiments: masked-planning speedup, encoder generalization
shift, DRL environment shift, and incremental fine-tuning, with CSV reports
and JSON sidecars carrying the resolved config and seeds.

Report CSVs are byte-reproducible for fixed seeds except columns whose names
end in `_s` (wall times).
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rl
from .encoder import (
    EncoderModel,
    TrainConfig,
    forward,
    image_to_input,
    init_model,
    train,
)
from .grid import GridScene, ScenarioFamily, generate_scene, make_family, perturb_scene, render_scene
from .dataset import generate_batch
from .masking import MASK_PLANNERS, MaskConfig, build_region, reduction_pct

TIME_COLUMN_SUFFIX = "_s"

# Calibrated defaults for the generalization and incremental experiments:
# dense-clutter training plus a wide distance weighting makes the learned
# masks strongly texture-specific, which is what the shift metric probes.
SHIFT_TRAIN_DEFAULTS = TrainConfig(
    epochs=8, batch_size=16, learning_rate=2e-3, weighting="gaussian", sigma=2.0, seed=0
)


def shift_train_family() -> ScenarioFamily:
    return make_family("uniform_clutter", p=0.3)

BENCH_COLUMNS = [
    "scene_id",
    "full_expansions",
    "masked_expansions",
    "full_time_s",
    "masked_time_s",
    "encoder_time_s",
    "used_fallback",
    "mask_size",
    "mask_recall",
    "mask_precision",
]


@dataclass
class BenchRow:
    scene_id: str
    full_expansions: int
    masked_expansions: int
    full_time_s: float
    masked_time_s: float
    encoder_time_s: float
    used_fallback: bool
    mask_size: int
    mask_recall: float
    mask_precision: float


@dataclass
class BenchmarkReport:
    rows: list[BenchRow]
    aggregates: dict[str, float]
    config: dict
    skipped: list[str]  # scene ids that turned out unsolvable


def region_quality(region: np.ndarray, label_mask: np.ndarray) -> tuple[float, float]:
    """(recall, precision) of a region against the true path cells; an empty
    region scores 0 for both by convention."""
    on_path = label_mask > 0
    region = region.astype(bool)
    path_cells = int(on_path.sum())
    region_cells = int(region.sum())
    hit = int((region & on_path).sum())
    recall = hit / path_cells if path_cells else 0.0
    precision = hit / region_cells if region_cells else 0.0
    return recall, precision


def mask_quality(
    model: EncoderModel,
    data: Sequence[tuple[GridScene, np.ndarray]],
    mask_cfg: MaskConfig = MaskConfig(),
) -> dict[str, float]:
    """Mean mask recall/precision of the binarized+dilated region over scenes."""
    recalls, precisions = [], []
    for scene, label_mask in data:
        probs = forward(model, image_to_input(render_scene(scene)))
        region = build_region(probs, scene, mask_cfg)
        recall, precision = region_quality(region, label_mask)
        recalls.append(recall)
        precisions.append(precision)
    return {"recall": float(np.mean(recalls)), "precision": float(np.mean(precisions))}


def compute_aggregates(rows: Sequence[BenchRow]) -> dict[str, float]:
    """Aggregate metrics, recomputable from the row data alone."""
    if not rows:
        return {}
    red_exp = [reduction_pct(r.full_expansions, r.masked_expansions) for r in rows]
    red_time = [reduction_pct(r.full_time_s, r.masked_time_s) for r in rows]
    red_e2e = [
        reduction_pct(r.full_time_s, r.masked_time_s + r.encoder_time_s) for r in rows
    ]
    return {
        "mean_reduction_expansions_pct": float(np.mean(red_exp)),
        "mean_reduction_time_planner_pct": float(np.mean(red_time)),
        "mean_reduction_time_end_to_end_pct": float(np.mean(red_e2e)),
        "fallback_rate_pct": float(100.0 * sum(r.used_fallback for r in rows) / len(rows)),
        "mask_recall": float(np.mean([r.mask_recall for r in rows])),
        "mask_precision": float(np.mean([r.mask_precision for r in rows])),
    }


def _median_time(run, repeats: int) -> tuple:
    """Run a zero-arg callable `repeats` times; (first result, median seconds)."""
    first = None
    times = []
    for i in range(repeats):
        t0 = time.perf_counter()
        result = run()
        times.append(time.perf_counter() - t0)
        if i == 0:
            first = result
    return first, statistics.median(times)


def _bench_one(args) -> tuple[BenchRow | None, str | None]:
    model, scene, label_mask, mask_cfg, planner, repeats, scene_id = args
    plan = MASK_PLANNERS[planner]

    t0 = time.perf_counter()
    probs = forward(model, image_to_input(render_scene(scene)))
    encoder_time = time.perf_counter() - t0
    region = build_region(probs, scene, mask_cfg)

    def masked_pipeline():
        restricted = plan(scene, region)
        if restricted.found:
            return restricted, restricted.expansions, False
        rerun = plan(scene, None)
        return rerun, restricted.expansions + rerun.expansions, True

    (result, masked_exp, used_fallback), masked_time = _median_time(masked_pipeline, repeats)
    full, full_time = _median_time(lambda: plan(scene, None), repeats)
    if not full.found:
        return None, scene_id
    recall, precision = region_quality(region, label_mask)
    return (
        BenchRow(
            scene_id=scene_id,
            full_expansions=full.expansions,
            masked_expansions=masked_exp,
            full_time_s=full_time,
            masked_time_s=masked_time,
            encoder_time_s=encoder_time,
            used_fallback=used_fallback,
            mask_size=int(region.sum()),
            mask_recall=recall,
            mask_precision=precision,
        ),
        None,
    )


def worker_count() -> int:
    value = os.environ.get("PPE_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def speedup_bench(
    model: EncoderModel,
    data: Sequence[tuple[GridScene, np.ndarray]],
    mask_cfg: MaskConfig = MaskConfig(),
    planner: str = "dijkstra",
    repeats: int = 3,
    config: dict | None = None,
    scene_ids: Sequence[str] | None = None,
) -> BenchmarkReport:
    """Paired full vs masked planner runs per scene. Wall times are medians of
    `repeats` back-to-back runs; unsolvable scenes are skipped and reported.

    The PPE_THREADS environment variable caps a scene-level worker pool; rows
    are merged in scene order either way.
    """
    if not data:
        raise ValueError("benchmark split must be non-empty")
    ids = list(scene_ids) if scene_ids is not None else [f"scene-{i:05d}" for i in range(len(data))]
    jobs = [
        (model, scene, label, mask_cfg, planner, repeats, ids[i])
        for i, (scene, label) in enumerate(data)
    ]
    workers = worker_count()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_bench_one, jobs, chunksize=8))
    else:
        outcomes = [_bench_one(job) for job in jobs]
    rows = [row for row, _ in outcomes if row is not None]
    skipped = [sid for _, sid in outcomes if sid is not None]
    return BenchmarkReport(rows, compute_aggregates(rows), config or {}, skipped)


# --------------------------- report persistence ------------------------- #


def write_bench_report(report: BenchmarkReport, out_dir: str | Path, stem: str = "speedup") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for r in report.rows:
            writer.writerow(
                [
                    r.scene_id,
                    r.full_expansions,
                    r.masked_expansions,
                    r.full_time_s,
                    r.masked_time_s,
                    r.encoder_time_s,
                    str(r.used_fallback).lower(),
                    r.mask_size,
                    r.mask_recall,
                    r.mask_precision,
                ]
            )
    sidecar = {
        "aggregates": report.aggregates,
        "config": report.config,
        "skipped": report.skipped,
    }
    (out / f"{stem}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return csv_path


def load_bench_report(csv_path: str | Path) -> BenchmarkReport:
    """Reload a report and recheck that the sidecar aggregates match the rows."""
    csv_path = Path(csv_path)
    rows: list[BenchRow] = []
    with csv_path.open() as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                BenchRow(
                    scene_id=rec["scene_id"],
                    full_expansions=int(rec["full_expansions"]),
                    masked_expansions=int(rec["masked_expansions"]),
                    full_time_s=float(rec["full_time_s"]),
                    masked_time_s=float(rec["masked_time_s"]),
                    encoder_time_s=float(rec["encoder_time_s"]),
                    used_fallback=rec["used_fallback"] == "true",
                    mask_size=int(rec["mask_size"]),
                    mask_recall=float(rec["mask_recall"]),
                    mask_precision=float(rec["mask_precision"]),
                )
            )
    sidecar_path = csv_path.with_suffix(".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    report = BenchmarkReport(rows, compute_aggregates(rows), sidecar.get("config", {}), sidecar.get("skipped", []))
    stored = sidecar.get("aggregates")
    if stored is not None:
        for key, value in stored.items():
            if abs(report.aggregates.get(key, float("nan")) - value) > 1e-9:
                raise ValueError(
                    f"{csv_path}: aggregate {key} does not match rows "
                    f"({value} stored, {report.aggregates.get(key)} recomputed)"
                )
    return report


def csv_without_time_columns(path: str | Path) -> list[list[str]]:
    """Rows of a report CSV with wall-time columns (suffix `_s`) removed; the
    basis for reproducibility comparisons."""
    with Path(path).open() as fh:
        table = list(csv.reader(fh))
    if not table:
        return []
    keep = [i for i, name in enumerate(table[0]) if not name.endswith(TIME_COLUMN_SUFFIX)]
    return [[row[i] for i in keep] for row in table]


# ------------------------- incremental learning ------------------------- #


@dataclass
class IncrementalResult:
    model: EncoderModel
    recall_new_before: float
    recall_new_after: float
    recall_old_before: float
    recall_old_after: float


def incremental_update(
    model: EncoderModel,
    new_samples: Sequence[tuple[np.ndarray, np.ndarray]],
    cfg: TrainConfig,
    *,
    replay_samples: Sequence[tuple[np.ndarray, np.ndarray]] = (),
    replay_ratio: float = 0.5,
    eval_new: Sequence[tuple[GridScene, np.ndarray]],
    eval_old: Sequence[tuple[GridScene, np.ndarray]],
    mask_cfg: MaskConfig = MaskConfig(),
) -> IncrementalResult:
    """Fine-tune on new-family samples mixed with a replay draw of old samples.

    replay_ratio is the fraction of the fine-tuning stream drawn from the
    replay buffer: ratio r adds round(len(new) * r / (1 - r)) old samples.
    Recall on the new family is reported before and after; recall on the old
    family tracks forgetting.
    """
    if not (0.0 <= replay_ratio < 1.0):
        raise ValueError("replay_ratio must be in [0, 1)")
    before_new = mask_quality(model, eval_new, mask_cfg)["recall"]
    before_old = mask_quality(model, eval_old, mask_cfg)["recall"]

    mixed = list(new_samples)
    n_replay = round(len(mixed) * replay_ratio / (1.0 - replay_ratio))
    if n_replay and replay_samples:
        rng = np.random.default_rng(cfg.seed)
        n_replay = min(n_replay, len(replay_samples))
        picks = rng.choice(len(replay_samples), size=n_replay, replace=False)
        mixed.extend(replay_samples[i] for i in picks)

    tuned, _ = train(model, mixed, cfg)
    after_new = mask_quality(tuned, eval_new, mask_cfg)["recall"]
    after_old = mask_quality(tuned, eval_old, mask_cfg)["recall"]
    return IncrementalResult(tuned, before_new, after_new, before_old, after_old)


# ---------------------------- experiment runs --------------------------- #


def _scene_seed(seed: int, offset: int) -> int:
    return seed * 1_000_000 + offset

EVAL_SEED_OFFSET = 900_000


def training_samples(pairs) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(image_to_input(render_scene(scene)), np.asarray(mask)) for scene, mask in pairs]


def _pairs(batch) -> list[tuple[GridScene, np.ndarray]]:
    return [(scene, label.mask) for scene, label in batch]


def speedup_experiment(
    out_dir: str | Path,
    seed: int = 1,
    train_count: int = 2000,
    eval_count: int = 200,
    family: ScenarioFamily | None = None,
    train_cfg: TrainConfig | None = None,
    mask_cfg: MaskConfig = MaskConfig(),
    planner: str = "dijkstra",
    arch=None,
) -> BenchmarkReport:
    """Train an encoder on one family, benchmark masked planning on held-out
    scenes of the same family, and write speedup.csv plus its sidecar."""
    family = family or make_family("uniform_clutter", p=0.2)
    train_cfg = train_cfg or TrainConfig(epochs=6, weighting="gaussian", sigma=1.2, seed=seed)
    train_pairs = _pairs(generate_batch(family, train_count, _scene_seed(seed, 0)))
    eval_pairs = _pairs(generate_batch(family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET)))

    model = init_model(arch, seed=train_cfg.seed)
    model, history = train(model, training_samples(train_pairs), train_cfg)
    config = {
        "experiment": "speedup",
        "seed": seed,
        "family": {"kind": family.kind, "params": dict(family.params)},
        "train_count": train_count,
        "eval_count": eval_count,
        "train": vars(train_cfg) | {"final_loss": history[-1] if history else None},
        "mask": vars(mask_cfg),
        "planner": planner,
    }
    ids = [f"{family.kind}-eval-{i:05d}" for i in range(len(eval_pairs))]
    report = speedup_bench(
        model, eval_pairs, mask_cfg, planner, config=config, scene_ids=ids
    )
    write_bench_report(report, out_dir, "speedup")
    return report


def oracle_speedup_experiment(
    out_dir: str | Path,
    seed: int = 1,
    eval_count: int = 100,
    family: ScenarioFamily | None = None,
    mask_cfg: MaskConfig = MaskConfig(dilation_radius=1),
    planner: str = "dijkstra",
) -> BenchmarkReport:
    """Upper-bound benchmark: regions built from the true labels instead of a
    model. Writes speedup_oracle.csv."""
    family = family or make_family("uniform_clutter", p=0.2)
    eval_pairs = _pairs(generate_batch(family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET)))
    rows = []
    for i, (scene, label_mask) in enumerate(eval_pairs):
        probs = np.where(label_mask > 0, 1.0 - 1e-6, 1e-6)
        region = build_region(probs, scene, mask_cfg)
        plan = MASK_PLANNERS[planner]
        restricted, masked_time = _median_time(lambda: plan(scene, region), 3)
        full, full_time = _median_time(lambda: plan(scene, None), 3)
        used_fallback = not restricted.found
        masked_exp = restricted.expansions
        if used_fallback:
            rerun = plan(scene, None)
            masked_exp += rerun.expansions
            masked_time += rerun.wall_time
        recall, precision = region_quality(region, label_mask)
        rows.append(
            BenchRow(
                scene_id=f"{family.kind}-oracle-{i:05d}",
                full_expansions=full.expansions,
                masked_expansions=masked_exp,
                full_time_s=full_time,
                masked_time_s=masked_time,
                encoder_time_s=0.0,
                used_fallback=used_fallback,
                mask_size=int(region.sum()),
                mask_recall=recall,
                mask_precision=precision,
            )
        )
    config = {
        "experiment": "speedup_oracle",
        "seed": seed,
        "family": {"kind": family.kind, "params": dict(family.params)},
        "eval_count": eval_count,
        "mask": vars(mask_cfg),
        "planner": planner,
    }
    report = BenchmarkReport(rows, compute_aggregates(rows), config, [])
    write_bench_report(report, out_dir, "speedup_oracle")
    return report


SHIFT_ENCODER_COLUMNS = ["seed", "role", "family", "recall", "precision"]


def encoder_shift_experiment(
    out_dir: str | Path,
    seeds: Sequence[int] = (1, 2, 3),
    train_family: ScenarioFamily | None = None,
    eval_family: ScenarioFamily | None = None,
    train_count: int = 500,
    eval_count: int = 50,
    train_cfg: TrainConfig | None = None,
    mask_cfg: MaskConfig = MaskConfig(),
) -> dict:
    """Train on one family per seed, measure mask recall on held-out scenes of
    the training family versus an unseen family. Writes shift_encoder.csv."""
    train_family = train_family or shift_train_family()
    eval_family = eval_family or make_family("diagonal_walls")
    base_cfg = train_cfg or SHIFT_TRAIN_DEFAULTS

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    gaps = []
    for seed in seeds:
        cfg = TrainConfig(**(vars(base_cfg) | {"seed": seed}))
        train_pairs = _pairs(generate_batch(train_family, train_count, _scene_seed(seed, 0)))
        held_out = _pairs(
            generate_batch(train_family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET))
        )
        unseen = _pairs(
            generate_batch(eval_family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET))
        )
        model = init_model(seed=cfg.seed)
        model, _ = train(model, training_samples(train_pairs), cfg)
        q_train = mask_quality(model, held_out, mask_cfg)
        q_unseen = mask_quality(model, unseen, mask_cfg)
        rows.append([seed, "train", train_family.kind, q_train["recall"], q_train["precision"]])
        rows.append([seed, "unseen", eval_family.kind, q_unseen["recall"], q_unseen["precision"]])
        gaps.append(q_train["recall"] - q_unseen["recall"])

    csv_path = out / "shift_encoder.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SHIFT_ENCODER_COLUMNS)
        writer.writerows(rows)
    summary = {
        "experiment": "shift_encoder",
        "seeds": list(seeds),
        "train_family": train_family.kind,
        "eval_family": eval_family.kind,
        "train_count": train_count,
        "eval_count": eval_count,
        "train": vars(base_cfg),
        "mask": vars(mask_cfg),
        "recall_gaps": gaps,
        "mean_recall_gap": float(np.mean(gaps)),
    }
    (out / "shift_encoder.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def rl_shift_experiment(
    out_dir: str | Path,
    seeds: Sequence[int] = (1, 2, 3),
    size: int = 10,
    clutter: float = 0.15,
    k: int = 12,
    hp: rl.QLearnConfig | None = None,
    eval_episodes: int = 50,
) -> dict:
    """Per seed: train tabular Q-learning on env A, evaluate the frozen policy
    on A and on B = A with k cells toggled. Writes shift_rl_seed<N>.csv."""
    hp = hp or rl.QLearnConfig()
    family = make_family("uniform_clutter", p=clutter)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in seeds:
        scene_a = _solvable_scene(family, seed, size)
        scene_b = perturb_scene(scene_a, k, seed + 100)
        report = rl.shift_experiment(rl.NavMDP(scene_a), rl.NavMDP(scene_b), hp, seed, eval_episodes)
        rl.write_shift_csv(report, out / f"shift_rl_seed{seed}.csv")
        results.append(
            {
                "seed": seed,
                "win_rate_a": report.rows[0].win_rate,
                "win_rate_b": report.rows[1].win_rate,
                "train_time_s": report.train_time,
            }
        )
    summary = {
        "experiment": "shift_rl",
        "seeds": list(seeds),
        "size": size,
        "clutter": clutter,
        "k": k,
        "eval_episodes": eval_episodes,
        "hyperparams": vars(hp),
        "results": results,
    }
    (out / "shift_rl.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _solvable_scene(family: ScenarioFamily, seed: int, size: int) -> GridScene:
    return generate_scene(family, seed, width=size, height=size)


INCREMENTAL_COLUMNS = [
    "seed",
    "recall_new_before",
    "recall_new_after",
    "recall_old_before",
    "recall_old_after",
    "recall_new_scratch",
]


def incremental_experiment(
    out_dir: str | Path,
    seed: int = 1,
    old_family: ScenarioFamily | None = None,
    new_family: ScenarioFamily | None = None,
    base_count: int = 500,
    new_count: int = 500,
    eval_count: int = 50,
    replay_ratio: float = 0.5,
    train_cfg: TrainConfig | None = None,
    tune_cfg: TrainConfig | None = None,
    mask_cfg: MaskConfig = MaskConfig(),
) -> dict:
    """Fine-tune an old-family model on new-family samples with replay, and
    compare against a from-scratch model trained on the same new samples.
    Writes incremental.csv."""
    old_family = old_family or shift_train_family()
    new_family = new_family or make_family("diagonal_walls")
    train_cfg = train_cfg or TrainConfig(**(vars(SHIFT_TRAIN_DEFAULTS) | {"seed": seed}))
    tune_cfg = tune_cfg or TrainConfig(**(vars(train_cfg) | {"seed": seed + 7}))

    old_train = _pairs(generate_batch(old_family, base_count, _scene_seed(seed, 0)))
    new_train = _pairs(generate_batch(new_family, new_count, _scene_seed(seed, 200_000)))
    eval_old = _pairs(generate_batch(old_family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET)))
    eval_new = _pairs(generate_batch(new_family, eval_count, _scene_seed(seed, EVAL_SEED_OFFSET)))

    old_samples = training_samples(old_train)
    new_samples = training_samples(new_train)

    base_model, _ = train(init_model(seed=train_cfg.seed), old_samples, train_cfg)
    result = incremental_update(
        base_model,
        new_samples,
        tune_cfg,
        replay_samples=old_samples,
        replay_ratio=replay_ratio,
        eval_new=eval_new,
        eval_old=eval_old,
        mask_cfg=mask_cfg,
    )
    scratch_cfg = TrainConfig(**(vars(train_cfg) | {"seed": seed + 13}))
    scratch_model, _ = train(init_model(seed=scratch_cfg.seed), new_samples, scratch_cfg)
    recall_scratch = mask_quality(scratch_model, eval_new, mask_cfg)["recall"]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "incremental.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INCREMENTAL_COLUMNS)
        writer.writerow(
            [
                seed,
                result.recall_new_before,
                result.recall_new_after,
                result.recall_old_before,
                result.recall_old_after,
                recall_scratch,
            ]
        )
    summary = {
        "experiment": "incremental",
        "seed": seed,
        "old_family": old_family.kind,
        "new_family": new_family.kind,
        "base_count": base_count,
        "new_count": new_count,
        "eval_count": eval_count,
        "replay_ratio": replay_ratio,
        "train": vars(train_cfg),
        "tune": vars(tune_cfg),
        "recall_new_before": result.recall_new_before,
        "recall_new_after": result.recall_new_after,
        "recall_old_before": result.recall_old_before,
        "recall_old_after": result.recall_old_after,
        "recall_new_scratch": recall_scratch,
    }
    (out / "incremental.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
