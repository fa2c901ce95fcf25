"""End-to-end grasp synthesis for one object: contacts, wrist, joints.

Stage boundaries (and their timings) follow the synthesis flow: contact
generation on the canonicalized cloud, retargeting onto the hand, and
collision refinement with the PD proxy. Wall-clock timings never enter
the output records, so record files are reproducible byte for byte.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import PipelineConfig, config_hash
from .contacts import (ContactParams, ContactSet, GraspStrategy, check_force_closure,
                       generate_contacts, refine_contacts, select_strategy)
from .dataset import GraspRecord, contacts_to_list, pose_to_dict
from .errors import ContactGraspError, NoGraspSurface
from .geometry import PointCloud, canonicalize, compute_pca, detect_cylindricality
from .hand import HandModel, load_hand_model, bundled_hand_path
from .refine import GraspPose, RefineConfig, derive_pregrasp, simulate_refinement
from .retarget import (RetargetConfig, compute_wrist_frame, extract_topology,
                       solve_retarget, transform_contacts_to_wrist)

STAGES = ("contact", "retarget", "refine")


@dataclass
class SynthResult:
    record: GraspRecord
    timings: dict[str, float] = field(default_factory=dict)
    success: dict[str, bool] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)


def contact_params(config: PipelineConfig) -> ContactParams:
    return ContactParams(
        eps_surf=config.eps_surf, n_slices=config.n_slices, d_min=config.d_min,
        r_nbr=config.r_nbr, friction=config.friction,
        n_cone_samples=config.n_cone_samples,
        alignment_threshold_deg=config.alignment_threshold_deg,
        finger_span=config.finger_span, refine_max_iters=config.refine_contact_iters)


def refine_config(config: PipelineConfig) -> RefineConfig:
    return RefineConfig(
        kp=config.kp, kd=config.kd, dt=config.sim_dt,
        max_steps=config.sim_max_steps, freeze_force=config.freeze_force,
        stiffness=config.stiffness, fingertip_radius=config.fingertip_radius,
        penetration_tol=config.penetration_tol)


def default_hand(config: PipelineConfig) -> HandModel:
    return load_hand_model(config.hand or bundled_hand_path("five_finger_16dof"))


def subsample(cloud: PointCloud, max_points: int, seed_key) -> PointCloud:
    """Deterministic downsample preserving input order."""
    n = len(cloud)
    if n <= max_points:
        return cloud
    rng = np.random.default_rng(seed_key)
    idx = np.sort(rng.choice(n, size=max_points, replace=False))
    normals = cloud.normals[idx] if cloud.normals is not None else None
    return PointCloud(points=cloud.points[idx], normals=normals)


def synth_object(object_id: str, cloud: PointCloud, model: HandModel,
                 config: PipelineConfig, table_cloud: PointCloud | None = None,
                 category: str = "", split: str = "train", cloud_ref: str = "",
                 object_index: int = 0) -> SynthResult:
    """Run the full synthesis flow on one object cloud."""
    res = SynthResult(record=GraspRecord(object_id=object_id, category=category,
                                         split=split, cloud_ref=cloud_ref))
    rec = res.record
    rec.provenance = {"stages": list(STAGES), "config": config_hash(config),
                      "seed": config.seed}

    cloud = subsample(cloud, config.max_points, [config.seed, object_index])
    if table_cloud is not None:
        table_cloud = subsample(table_cloud, config.max_points,
                                [config.seed, object_index, 1])

    # Strategy comes from the configured cloud; the default is the object
    # itself, "table" uses the whole tabletop scene when one is supplied.
    if config.strategy_cloud == "table" and table_cloud is not None:
        scene = PointCloud(np.vstack([cloud.points, table_cloud.points]))
        strategy_axes = compute_pca(scene)
    else:
        strategy_axes = compute_pca(cloud)
    strategy = select_strategy(strategy_axes, config.alignment_threshold_deg)

    axes = compute_pca(cloud)
    cylindrical = detect_cylindricality(axes.variances, config.cylinder_ratio_threshold)
    # Side grasps keep the object upright: restrict to a yaw like the
    # rotation-symmetric case instead of laying the object down.
    restrict = cylindrical or strategy is GraspStrategy.HORIZONTAL
    pose, canon = canonicalize(cloud, axes, cylindrical=restrict)

    rec.strategy = strategy.value
    rec.cylindrical = bool(cylindrical)
    rec.canonical_rotation = pose.rotation.tolist()
    rec.canonical_centroid = pose.centroid.tolist()

    params = contact_params(config)
    centroid = canon.centroid
    torque_scale = float(np.max(np.linalg.norm(canon.points - centroid, axis=1)))

    contacts: ContactSet | None = None
    quality = 0.0
    t0 = time.perf_counter()
    try:
        raw = generate_contacts(canon, strategy, params)
        contacts, report = refine_contacts(raw, canon, friction=config.friction,
                                           params=params, centroid=centroid,
                                           torque_scale=torque_scale)
        quality = report.quality
        res.success["contact"] = True
    except NoGraspSurface as e:
        res.errors.append(f"contact: {e}")
        res.success["contact"] = False
        if e.best_contacts is not None:
            contacts = e.best_contacts
            quality = e.best_report.quality if e.best_report else 0.0
    except ContactGraspError as e:
        res.errors.append(f"contact: {e}")
        res.success["contact"] = False
    res.timings["contact"] = time.perf_counter() - t0

    rec.quality = float(quality)
    if contacts is None:
        res.success.setdefault("retarget", False)
        res.success.setdefault("refine", False)
        rec.stage_success = dict(res.success)
        return res
    rec.contacts = contacts_to_list(contacts)

    t0 = time.perf_counter()
    try:
        topo = extract_topology(contacts, object_centroid=centroid)
        frame = compute_wrist_frame(topo, model.middle_finger_length,
                                    y_offset=config.y_offset,
                                    roll_deg=config.roll_deg,
                                    pitch_deg=config.pitch_deg)
        local = transform_contacts_to_wrist(contacts, frame)
        rcfg = RetargetConfig(alpha=config.alpha, beta=config.beta,
                              max_iters=config.retarget_max_iters,
                              tol=config.retarget_tol)
        # A static grasp is a short hold: pick the best basin by pure fit
        # quality (a short capped multi-start), then re-solve with the
        # previous estimate until the pose stops moving, so the smoothing
        # term stops fighting the fit.
        explore = replace(rcfg, beta=0.0, max_iters=25, random_restarts=6,
                          target_residual=0.5 * config.retarget_success_residual)
        sol = solve_retarget(model, local, q_prev=model.midrange(), config=explore)
        polish = replace(rcfg, restart_blends=(), random_restarts=0)
        for _ in range(config.retarget_passes - 1):
            nxt = solve_retarget(model, local, q_prev=sol.q, config=polish)
            moved = float(np.linalg.norm(nxt.q - sol.q))
            sol = nxt
            if moved < 1e-6:
                break
        res.success["retarget"] = bool(
            sol.contact_residual < config.retarget_success_residual)
    except ContactGraspError as e:
        res.errors.append(f"retarget: {e}")
        res.success["retarget"] = False
        sol = None
        frame = None
        topo = None
    res.timings["retarget"] = time.perf_counter() - t0

    if sol is None:
        res.success.setdefault("refine", False)
        rec.stage_success = dict(res.success)
        return res

    t0 = time.perf_counter()
    sim_cloud = canon
    if table_cloud is not None and config.include_table_in_refine:
        tpts = (table_cloud.points - pose.centroid) @ pose.rotation.T
        sim_cloud = PointCloud(np.vstack([canon.points, tpts]))
    # Close from an open hand: curl joints start at their lower limit so
    # fingers sweep onto the surface instead of spawning inside it;
    # abduction (z-axis) joints keep the solved lateral placement.
    q_start = sol.q.copy()
    curl = np.abs(model.axes[:, 2]) < 0.5
    q_start[curl] = model.lower[curl]
    start_pose = GraspPose(rotation=frame.rotation, translation=frame.origin,
                           q=q_start)
    sim = simulate_refinement(model, sim_cloud, start_pose, sol.q,
                              refine_config(config))
    res.success["refine"] = bool(sim.converged
                                 and sim.final_penetration <= config.penetration_tol)
    if not sim.converged:
        res.errors.append("refine: velocities did not settle within the step budget")

    approach = -topo.n_palm
    pregrasp = derive_pregrasp(sim.final_pose, model, approach,
                               offset=config.pregrasp_offset)
    res.timings["refine"] = time.perf_counter() - t0

    rec.grasp = pose_to_dict(sim.final_pose)
    rec.pregrasp = pose_to_dict(pregrasp)
    rec.approach = approach.tolist()
    rec.pregrasp_offset = config.pregrasp_offset
    rec.stage_success = dict(res.success)
    return res


def summarize_batch(results: list[SynthResult]) -> dict:
    """Per-stage success rates and timing stats over a batch."""
    out = {}
    for stage in STAGES:
        oks = [r.success.get(stage, False) for r in results]
        times = [r.timings[stage] for r in results if stage in r.timings]
        out[stage] = {
            "success_rate": float(np.mean(oks)) if oks else 0.0,
            "time_mean": float(np.mean(times)) if times else 0.0,
            "time_std": float(np.std(times)) if times else 0.0,
        }
    return out


def format_batch_table(summary: dict) -> str:
    """Plain-text table: one column per stage, SR and per-object time."""
    stages = list(summary.keys())
    widths = [max(len(s), 16) for s in stages]
    head = "metric".ljust(12) + "  " + "  ".join(
        s.ljust(w) for s, w in zip(stages, widths))
    sr = "SR (%)".ljust(12) + "  " + "  ".join(
        f"{100.0 * summary[s]['success_rate']:.2f}".ljust(w)
        for s, w in zip(stages, widths))
    tt = "T/Obj (s)".ljust(12) + "  " + "  ".join(
        f"{summary[s]['time_mean']:.3f} +/- {summary[s]['time_std']:.3f}".ljust(w)
        for s, w in zip(stages, widths))
    return "\n".join([head, sr, tt])
