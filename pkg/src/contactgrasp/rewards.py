"""Reward shaping terms and trajectory diagnostics for grasp policies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TooShort


@dataclass
class TrajectoryFrame:
    q: np.ndarray                  # actuated joint positions
    qd: np.ndarray                 # actuated joint velocities
    wrist_rotation: np.ndarray     # (3,3) world-from-wrist
    wrist_translation: np.ndarray  # (3,)
    object_pos: np.ndarray         # (3,) world
    fingertips: np.ndarray         # (F,3) wrist frame


@dataclass
class GoalDiff:
    """Difference between the current state and the grasp goal."""

    pos: np.ndarray     # wrist position error (3,)
    rot: np.ndarray     # wrist orientation error, axis-angle vector (3,)
    joints: np.ndarray  # per-joint angle error


@dataclass
class RewardWeights:
    goal: float = 1.0
    reach: float = 1.0
    lift: float = 1.0
    move: float = 1.0
    smooth: float = -0.01        # penalties carry their sign in the weight
    consistency: float = -0.1
    w_pos: float = 1.0           # inner goal-term weights
    w_rot: float = 0.5
    w_joint: float = 0.1
    w_per_finger: float = 0.5
    lambda_reach: float = 5.0
    lambda_lift: float = 5.0


def reward_goal(diff: GoalDiff, finger_chains: list[list[int]],
                weights: RewardWeights | None = None) -> float:
    """Negative weighted goal distance, plus a worst-finger joint penalty."""
    w = weights or RewardWeights()
    per_finger = max(float(np.sum(np.abs(diff.joints[chain])))
                     for chain in finger_chains) if finger_chains else 0.0
    return float(-(w.w_pos * np.linalg.norm(diff.pos)
                   + w.w_rot * np.linalg.norm(diff.rot)
                   + w.w_joint * np.sum(np.abs(diff.joints)))
                 - w.w_per_finger * per_finger)


def reward_proximity(distance: float, lam: float = 5.0) -> float:
    """exp(-lam * d): 1 at contact, decaying with distance. d must be >= 0."""
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    return float(np.exp(-lam * distance))


def reward_smooth(qd: np.ndarray) -> float:
    """Sum of squared joint velocities (penalized via a negative weight)."""
    qd = np.asarray(qd, dtype=float)
    return float(np.sum(qd * qd))


def reward_consistency(qd: np.ndarray, groups: list[list[int]]) -> float:
    """Disagreement of motion direction inside same-position finger groups.

    For each group, the population variance of sign(velocity); sign(0)
    counts as 0. Groups moving in lockstep score 0, an even split scores
    1 for that group. The group scores are summed.
    """
    qd = np.asarray(qd, dtype=float)
    total = 0.0
    for g in groups:
        s = np.sign(qd[list(g)])
        total += float(np.mean((s - s.mean()) ** 2))
    return total


def total_reward(frame: TrajectoryFrame, diff: GoalDiff, p_target: np.ndarray,
                 finger_chains: list[list[int]], groups: list[list[int]],
                 weights: RewardWeights | None = None,
                 prev_obj_target_dist: float | None = None
                 ) -> tuple[float, dict[str, float]]:
    """Weighted sum of the six shaping terms.

    Returns (total, breakdown); the breakdown holds the raw term values,
    so the weight-scaled breakdown sums to the total exactly and rescaling
    the weights leaves the breakdown untouched. The move term is the
    per-step progress of the object toward the target and needs the
    previous step's distance (0 contribution on the first frame).
    """
    w = weights or RewardWeights()
    tips_world = frame.fingertips @ frame.wrist_rotation.T + frame.wrist_translation
    hand_obj = float(np.linalg.norm(tips_world.mean(axis=0) - frame.object_pos))
    obj_target = float(np.linalg.norm(frame.object_pos - np.asarray(p_target, dtype=float)))

    breakdown = {
        "goal": reward_goal(diff, finger_chains, w),
        "reach": reward_proximity(hand_obj, w.lambda_reach),
        "lift": reward_proximity(obj_target, w.lambda_lift),
        "move": (0.0 if prev_obj_target_dist is None
                 else prev_obj_target_dist - obj_target),
        "smooth": reward_smooth(frame.qd),
        "consistency": reward_consistency(frame.qd, groups),
    }
    total = (w.goal * breakdown["goal"] + w.reach * breakdown["reach"]
             + w.lift * breakdown["lift"] + w.move * breakdown["move"]
             + w.smooth * breakdown["smooth"]
             + w.consistency * breakdown["consistency"])
    return float(total), breakdown


def success_check(p_obj=None, p_target=None, delta: float = 0.05, *,
                  height_trace=None, height_gain: float = 0.2,
                  hold_steps: int = 200) -> bool:
    """Grasp success test.

    Default mode: the object sits strictly within delta of the target.
    Experiment mode (height_trace given): the height gain must stay at or
    above height_gain for hold_steps consecutive frames.
    """
    if height_trace is not None:
        run = 0
        for h in np.asarray(height_trace, dtype=float):
            run = run + 1 if h >= height_gain else 0
            if run >= hold_steps:
                return True
        return False
    if p_obj is None or p_target is None:
        raise ValueError("need object and target positions (or a height trace)")
    d = np.linalg.norm(np.asarray(p_obj, dtype=float) - np.asarray(p_target, dtype=float))
    return bool(d < delta)


def _velocities(frames) -> np.ndarray:
    rows = [f.qd if isinstance(f, TrajectoryFrame) else np.asarray(f, dtype=float)
            for f in frames]
    return np.vstack([r[None, :] for r in rows])


def trajectory_metrics(frames, arm_joints: list[int], hand_joints: list[int],
                       groups: list[list[int]]) -> dict[str, float]:
    """Oscillation counts and finger-direction consistency for a rollout.

    arm_osc / hand_osc count velocity sign reversals (consecutive frames
    with strictly opposite nonzero signs) summed over the given joint
    sets; fdc is the negated sum of the per-frame consistency score.
    Raises TooShort for fewer than 2 frames.
    """
    v = _velocities(frames)
    if len(v) < 2:
        raise TooShort(f"need at least 2 frames, got {len(v)}")
    s = np.sign(v)
    flips = (s[1:] * s[:-1]) < 0

    def osc(joints):
        return int(flips[:, list(joints)].sum()) if len(joints) else 0

    fdc = -float(sum(reward_consistency(row, groups) for row in v))
    return {"arm_osc": osc(arm_joints), "hand_osc": osc(hand_joints), "fdc": fdc}
