"""Command-line interface.

Exit codes: 0 on success, 1 on data or processing errors, 2 on usage
errors. Options can also be set through CONTACTGRASP_* environment
variables or a JSON config file (flags win over env, env over file).
"""
from __future__ import annotations

import concurrent.futures
import csv
import functools
import json
import os
import sys

import click
import numpy as np

from . import dataset as ds
from .cloud_io import read_cloud
from .config import PipelineConfig, config_hash, load_config
from .errors import ContactGraspError
from .gating import (GatingModel, extract_geometry_features, gating_select,
                     gating_train, hard_case_split, kmeans_fit,
                     normalize_success_rates, pin_categories)
from .hand import load_hand_model, position_groups
from .pipeline import (STAGES, SynthResult, default_hand, format_batch_table,
                       subsample, summarize_batch, synth_object)
from .rewards import (GoalDiff, RewardWeights, TrajectoryFrame, reward_goal,
                      trajectory_metrics, total_reward)


def _guard(fn):
    """Map library/data errors to exit code 1 with a clean message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ContactGraspError as e:
            raise click.ClickException(str(e))
        except OSError as e:
            raise click.ClickException(str(e))

    return wrapper


@click.group()
def main():
    """Contact-guided grasp synthesis and expert-selection tools."""


def _config_from(config_path, seed, jobs, **extra) -> PipelineConfig:
    overrides = {"seed": seed, "jobs": jobs}
    overrides.update(extra)
    return load_config(config_path, overrides=overrides)


@main.command()
@click.option("--cloud", "clouds", multiple=True, required=True,
              type=click.Path(exists=True), help="Object cloud file (repeatable).")
@click.option("--table", type=click.Path(exists=True), default=None,
              help="Optional tabletop cloud.")
@click.option("--hand", type=click.Path(exists=True), default=None,
              help="Hand config JSON (default: bundled five-finger hand).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None)
@click.option("--split", default="train", show_default=True)
@click.option("--category", default="", help="Category label stored on records.")
@click.option("--out", required=True, type=click.Path(), help="Output records (.jsonl).")
@click.option("--json", "as_json", is_flag=True, help="Print the summary as JSON.")
@_guard
def synth(clouds, table, hand, config_path, seed, jobs, split, category, out, as_json):
    """Synthesize grasps for object clouds and write a record file."""
    cfg = _config_from(config_path, seed, jobs, hand=hand)
    model = default_hand(cfg)

    jobs_list = [(i, path) for i, path in enumerate(clouds)]
    if cfg.jobs > 1 and len(jobs_list) > 1:
        worker = functools.partial(_synth_one, cfg=cfg, model=model,
                                   table_path=table, split=split, category=category)
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = list(ex.map(worker, jobs_list))
    else:
        results = [_synth_one(j, cfg=cfg, model=model, table_path=table,
                              split=split, category=category) for j in jobs_list]

    ds.write_records(out, [r.record for r in results])
    summary = summarize_batch(results)
    if as_json:
        click.echo(json.dumps({"config": config_hash(cfg), "stages": summary,
                               "records": len(results)}, indent=2, sort_keys=True))
    else:
        click.echo(format_batch_table(summary))
        click.echo(f"wrote {len(results)} records to {out}")
    for r in results:
        for msg in r.errors:
            click.echo(f"note [{r.record.object_id}] {msg}", err=True)
    if results and not any(all(r.success.get(s, False) for s in STAGES)
                           for r in results):
        sys.exit(1)


def _synth_one(job, cfg, model, table_path, split, category):
    idx, path = job
    object_id = os.path.splitext(os.path.basename(path))[0]
    try:
        cloud = read_cloud(path)
        table_cloud = read_cloud(table_path) if table_path else None
    except (ContactGraspError, OSError) as e:
        # One bad input must not sink the batch; record it and move on.
        res = SynthResult(record=ds.GraspRecord(object_id=object_id,
                                                category=category, split=split,
                                                cloud_ref=path))
        res.success = {s: False for s in STAGES}
        res.errors.append(f"input: {e}")
        res.record.stage_success = dict(res.success)
        return res
    return synth_object(object_id, cloud, model, cfg, table_cloud=table_cloud,
                        category=category, split=split, cloud_ref=path,
                        object_index=idx)


@main.command()
@click.option("--cloud", "clouds", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--k", type=int, default=None, help="Cluster count (default from config).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--categories", type=click.Path(exists=True), default=None,
              help="JSON mapping object id -> category.")
@click.option("--pins", type=click.Path(exists=True), default=None,
              help="JSON mapping category -> pinned cluster index.")
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@_guard
def cluster(clouds, k, config_path, seed, categories, pins, out, as_json):
    """Cluster object geometry features with deterministic k-means."""
    cfg = _config_from(config_path, seed, None)
    ids, feats = [], []
    for i, path in enumerate(clouds):
        cloud = subsample(read_cloud(path), cfg.max_points, [cfg.seed, i])
        ids.append(os.path.splitext(os.path.basename(path))[0])
        feats.append(extract_geometry_features(cloud))
    model = kmeans_fit(feats, k or cfg.k_experts, seed=cfg.seed, object_ids=ids)
    if categories and pins:
        with open(categories, "r", encoding="utf-8") as f:
            cats = json.load(f)
        with open(pins, "r", encoding="utf-8") as f:
            pin_map = json.load(f)
        model = pin_categories(model, cats, pin_map)
    body = {"k": model.k, "seed": model.seed, "inertia": model.inertia,
            "centroids": model.centroids.tolist(),
            "assignments": model.assignments,
            "wcss_trace": model.wcss_trace}
    with open(out, "w", encoding="utf-8") as f:
        json.dump(body, f, indent=2, sort_keys=True)
    if as_json:
        click.echo(json.dumps(body["assignments"], indent=2, sort_keys=True))
    else:
        click.echo(f"clustered {len(ids)} objects into k={model.k}, "
                   f"inertia {model.inertia:.6g}; model -> {out}")


@main.command("gate-train")
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="JSONL with object_id, features, success_rates per line.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--lr", type=float, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--out", required=True, type=click.Path(), help="Model JSON output.")
@click.option("--loss-csv", type=click.Path(), default=None,
              help="Write the loss trajectory as CSV (epoch,loss).")
@click.option("--json", "as_json", is_flag=True)
@_guard
def gate_train(records_path, config_path, lr, epochs, out, loss_csv, as_json):
    """Train the expert gate on per-object success distributions."""
    cfg = _config_from(config_path, None, None,
                       gate_lr=lr, gate_epochs=epochs)
    feats, rates = [], []
    with open(records_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                body = json.loads(line)
                feats.append(body["features"])
                rates.append(body["success_rates"])
            except (json.JSONDecodeError, KeyError) as e:
                raise click.ClickException(
                    f"{records_path}:{lineno}: bad score record ({e})")
    x = np.asarray(feats, dtype=float)
    p = normalize_success_rates(np.asarray(rates, dtype=float))
    model = gating_train(x, p, lr=cfg.gate_lr, epochs=cfg.gate_epochs)
    body = {"weights": model.weights.tolist(), "bias": model.bias.tolist(),
            "feature_mean": model.feature_mean.tolist(),
            "feature_scale": model.feature_scale.tolist(),
            "final_loss": model.loss_trajectory[-1]}
    with open(out, "w", encoding="utf-8") as f:
        json.dump(body, f, indent=2, sort_keys=True)
    if loss_csv:
        with open(loss_csv, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "loss"])
            for i, v in enumerate(model.loss_trajectory):
                w.writerow([i, repr(v)])
    hard = hard_case_split(np.asarray(rates, dtype=float), cfg.hard_case_threshold)
    summary = {"records": len(x), "final_loss": model.loss_trajectory[-1],
               "hard_cases": int(len(hard))}
    click.echo(json.dumps(summary, indent=2, sort_keys=True) if as_json
               else f"trained gate on {len(x)} records, final loss "
                    f"{model.loss_trajectory[-1]:.6g} ({len(hard)} hard cases)")


def _load_gate(path) -> GatingModel:
    with open(path, "r", encoding="utf-8") as f:
        body = json.load(f)
    return GatingModel(weights=np.asarray(body["weights"], dtype=float),
                       bias=np.asarray(body["bias"], dtype=float),
                       feature_mean=np.asarray(body["feature_mean"], dtype=float),
                       feature_scale=np.asarray(body["feature_scale"], dtype=float))


@main.command("gate-select")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--cloud", type=click.Path(exists=True), default=None,
              help="Object cloud to route.")
@click.option("--features-json", type=click.Path(exists=True), default=None,
              help="Precomputed feature vector (JSON list) instead of a cloud.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@_guard
def gate_select(model_path, cloud, features_json, config_path, as_json):
    """Pick the expert for an object."""
    if (cloud is None) == (features_json is None):
        raise click.UsageError("give exactly one of --cloud or --features-json")
    gate = _load_gate(model_path)
    if cloud:
        cfg = _config_from(config_path, None, None)
        feats = extract_geometry_features(
            subsample(read_cloud(cloud), cfg.max_points, [cfg.seed, 0])).vector
    else:
        with open(features_json, "r", encoding="utf-8") as f:
            feats = np.asarray(json.load(f), dtype=float)
    expert = gating_select(gate, feats)
    proba = gate.predict_proba(feats)[0]
    if as_json:
        click.echo(json.dumps({"expert": expert, "proba": proba.tolist()},
                              sort_keys=True))
    else:
        click.echo(str(expert))


@main.command("reward-eval")
@click.option("--trajectory", required=True, type=click.Path(exists=True),
              help="JSONL rollout frames (see docs/record_schema.md).")
@click.option("--hand", type=click.Path(exists=True), default=None)
@click.option("--target", nargs=3, type=float, default=(0.0, 0.0, 0.2),
              show_default=True, help="Object target position.")
@click.option("--arm-joints", default="", help="Comma-separated arm joint indices.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None,
              help="Per-frame reward CSV output.")
@click.option("--json", "as_json", is_flag=True)
@_guard
def reward_eval(trajectory, hand, target, arm_joints, config_path, out, as_json):
    """Score a rollout: per-frame shaped rewards and trajectory metrics."""
    cfg = _config_from(config_path, None, None, hand=hand)
    model = default_hand(cfg)
    groups = position_groups(model)
    chains = model.chains
    weights = RewardWeights(lambda_reach=cfg.lambda_reach, lambda_lift=cfg.lambda_lift)

    frames, diffs = [], []
    with open(trajectory, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                b = json.loads(line)
                frames.append(TrajectoryFrame(
                    q=np.asarray(b["q"], dtype=float),
                    qd=np.asarray(b["qd"], dtype=float),
                    wrist_rotation=np.asarray(b["wrist_R"], dtype=float),
                    wrist_translation=np.asarray(b["wrist_t"], dtype=float),
                    object_pos=np.asarray(b["object_pos"], dtype=float),
                    fingertips=np.asarray(b["fingertips"], dtype=float)))
                g = b.get("goal", {})
                diffs.append(GoalDiff(
                    pos=np.asarray(g.get("pos", [0, 0, 0]), dtype=float),
                    rot=np.asarray(g.get("rot", [0, 0, 0]), dtype=float),
                    joints=np.asarray(g.get("joints", np.zeros(model.n_joints)),
                                      dtype=float)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise click.ClickException(f"{trajectory}:{lineno}: bad frame ({e})")

    target = np.asarray(target, dtype=float)
    rows = []
    prev_dist = None
    for frame, diff in zip(frames, diffs):
        total, parts = total_reward(frame, diff, target, chains, groups,
                                    weights, prev_obj_target_dist=prev_dist)
        prev_dist = float(np.linalg.norm(frame.object_pos - target))
        rows.append({"total": total, **parts})
    arm = [int(s) for s in arm_joints.split(",") if s.strip() != ""]
    hand_joints = list(range(model.n_joints))
    metrics = trajectory_metrics(frames, arm, hand_joints, groups)

    if out:
        with open(out, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            cols = ["frame", "total", "goal", "reach", "lift", "move",
                    "smooth", "consistency"]
            w.writerow(cols)
            for i, row in enumerate(rows):
                w.writerow([i] + [repr(row[c]) for c in cols[1:]])
    body = {"frames": len(frames), "metrics": metrics,
            "mean_total": float(np.mean([r["total"] for r in rows])) if rows else 0.0}
    click.echo(json.dumps(body, indent=2, sort_keys=True) if as_json else
               f"{len(frames)} frames: arm_osc={metrics['arm_osc']} "
               f"hand_osc={metrics['hand_osc']} fdc={metrics['fdc']:.4f}")


@main.group()
def dataset():
    """Record-file utilities."""


@dataset.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@_guard
def stats(records_path, as_json):
    """Split/category counts and cross-split duplicate check."""
    recs = ds.read_records(records_path)
    body = ds.dataset_stats(recs)
    if as_json:
        click.echo(json.dumps(body, indent=2, sort_keys=True))
        return
    click.echo(f"total records: {body['total']}")
    for split, n in sorted(body["splits"].items()):
        click.echo(f"  split {split}: {n}")
    click.echo(f"  categories: {len(body['categories'])}")
    if body["cross_split_duplicates"]:
        click.echo(f"  WARNING cross-split duplicates: "
                   f"{', '.join(body['cross_split_duplicates'])}")


@dataset.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True))
@click.option("--cloud-root", default=".", show_default=True)
@click.option("--hand", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--strict", is_flag=True, help="Fail on the first bad record.")
@click.option("--json", "as_json", is_flag=True)
@_guard
def validate(records_path, cloud_root, hand, config_path, strict, as_json):
    """Re-check record invariants against clouds and the hand model."""
    cfg = _config_from(config_path, None, None, hand=hand)
    model = default_hand(cfg)
    recs = ds.read_records(records_path)
    reports = ds.validate_records(recs, model=model, cloud_root=cloud_root,
                                  eps_surf=cfg.eps_surf,
                                  penetration_tol=cfg.penetration_tol,
                                  strict=strict)
    bad = [r for r in reports if not r["ok"]]
    if as_json:
        click.echo(json.dumps({"checked": len(reports), "failed": len(bad),
                               "reports": reports}, indent=2, sort_keys=True))
    else:
        click.echo(f"checked {len(reports)} records, {len(bad)} with issues")
        for r in bad:
            for issue in r["issues"]:
                click.echo(f"  {r['object_id']}: {issue}")
    if bad:
        sys.exit(1)


@main.command()
@click.option("--csv", "csv_paths", multiple=True, required=True,
              type=click.Path(exists=True), help="Input CSV (repeatable).")
@click.option("--x", "x_col", default="epoch", show_default=True)
@click.option("--y", "y_col", default="loss", show_default=True)
@click.option("--title", default="", help="Chart title.")
@click.option("--out", required=True, type=click.Path(), help="SVG output path.")
@_guard
def report(csv_paths, x_col, y_col, title, out):
    """Render CSV columns (e.g. gate loss trajectories) as an SVG chart."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for path in csv_paths:
        xs, ys = [], []
        with open(path, "r", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or x_col not in reader.fieldnames \
                    or y_col not in reader.fieldnames:
                raise click.ClickException(
                    f"{path}: needs columns {x_col!r} and {y_col!r}")
            for row in reader:
                xs.append(float(row[x_col]))
                ys.append(float(row[y_col]))
        label = os.path.splitext(os.path.basename(path))[0]
        ax.plot(xs, ys, label=label)
    ax.set_xlabel(x_col)
    ax.set_ylabel(y_col)
    if title:
        ax.set_title(title)
    if len(csv_paths) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, format="svg")
    plt.close(fig)
    click.echo(f"wrote {out}")


def run():
    main(auto_envvar_prefix="CONTACTGRASP")


if __name__ == "__main__":
    run()
