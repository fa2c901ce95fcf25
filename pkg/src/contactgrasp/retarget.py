"""Map object-frame contacts onto hand joints.

Builds a palm-aligned wrist frame over the contact set, expresses the
contacts in that frame, and solves a box-constrained least-squares fit of
the fingertip forward kinematics to the contact targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contacts import Contact, ContactSet
from .errors import DegenerateContacts, InvalidContacts, NonFinite
from .geometry import rot_x, rot_y
from .hand import HandModel, clamp_to_limits, fingertip_jacobian, forward_kinematics


@dataclass
class GraspTopology:
    """Palm-frame directions derived from a contact layout.

    d_palm: wrist-to-middle-finger direction (grasp forward axis).
    u_palm: middle-to-little direction, orthogonal to d_palm.
    n_palm: contact-plane normal, pointing away from the object.
    center: mean contact position.
    All three directions are unit and mutually orthogonal, right-handed.
    """

    d_palm: np.ndarray
    u_palm: np.ndarray
    n_palm: np.ndarray
    center: np.ndarray


@dataclass
class WristFrame:
    rotation: np.ndarray      # world-from-wrist
    origin: np.ndarray        # wrist position, world
    palm_origin: np.ndarray
    center: np.ndarray        # contact centroid the frame was built over


@dataclass
class RetargetConfig:
    alpha: float = 1.0        # target scale applied to contact vectors
    beta: float = 0.05        # pull toward the previous joint vector
    max_iters: int = 200
    tol: float = 1e-8
    target_residual: float = 1e-10  # restart trigger for the multi-start loop
    restart_blends: tuple = (0.25, 0.75, 0.1, 0.9)
    random_restarts: int = 8        # seeded, so solves stay reproducible
    restart_seed: int = 0


@dataclass
class RetargetSolution:
    q: np.ndarray
    objective: float
    contact_residual: float   # max fingertip-to-target distance, meters
    converged: bool
    n_iters: int
    objective_trace: list[float] = field(default_factory=list)


def extract_topology(contacts: ContactSet,
                     object_centroid: np.ndarray | None = None) -> GraspTopology:
    """Fit the palm plane and in-plane directions to a 5-contact layout.

    The plane normal is the least-variance direction of the contact
    positions, signed away from the object centroid. Raises
    DegenerateContacts for collinear contacts or coincident middle/little
    anchors, which leave a direction undefined.
    """
    p = contacts.positions()
    center = p.mean(axis=0)
    q = p - center
    u, s, vt = np.linalg.svd(q, full_matrices=False)
    if s[1] <= 1e-9 * max(s[0], 1e-30):
        raise DegenerateContacts("contacts are collinear; palm plane undefined")
    n = vt[2]
    if object_centroid is None:
        object_centroid = center
    ref = center - np.asarray(object_centroid, dtype=float)
    if np.linalg.norm(ref) > 1e-9 and n @ ref < 0:
        n = -n
    elif np.linalg.norm(ref) <= 1e-9 and n[2] < 0:
        n = -n  # centroid coincides with the contact center: default to up

    mid = contacts.by_finger("middle").position - center
    d = mid - (mid @ n) * n
    if np.linalg.norm(d) < 1e-9:
        raise DegenerateContacts("middle contact sits on the frame center")
    d = d / np.linalg.norm(d)

    lit = contacts.by_finger("little").position - contacts.by_finger("middle").position
    u_vec = lit - (lit @ n) * n - (lit @ d) * d
    if np.linalg.norm(u_vec) < 1e-9:
        raise DegenerateContacts("little contact gives no lateral direction")
    u_vec = u_vec / np.linalg.norm(u_vec)
    if np.dot(np.cross(d, u_vec), n) < 0:
        u_vec = -u_vec  # enforce right-handedness of (d, u, n)
    return GraspTopology(d_palm=d, u_palm=u_vec, n_palm=n, center=center)


def compute_wrist_frame(topology: GraspTopology, middle_finger_length: float,
                        y_offset: float = 0.03, roll_deg: float = 10.0,
                        pitch_deg: float = 20.0) -> WristFrame:
    """Wrist pose over the contacts.

    The palm origin floats three quarters of the middle-finger length
    above the contact centroid (world z). The wrist orientation starts
    from the palm axes (x=d, y=u, z=n) and tilts by the fixed roll about
    its local x, then pitch about its local y. The wrist origin then
    shifts y_offset along the tilted lateral axis.
    """
    r_base = np.column_stack([topology.d_palm, topology.u_palm, topology.n_palm])
    r_wrist = r_base @ rot_x(np.radians(roll_deg)) @ rot_y(np.radians(pitch_deg))
    palm = topology.center + np.array([0.0, 0.0, 0.75 * middle_finger_length])
    origin = palm + y_offset * (r_wrist @ np.array([0.0, 1.0, 0.0]))
    return WristFrame(rotation=r_wrist, origin=origin,
                      palm_origin=palm, center=topology.center.copy())


def transform_contacts_to_wrist(contacts: ContactSet, frame: WristFrame) -> ContactSet:
    """Re-express contact positions and normals in the wrist frame."""
    rt = frame.rotation.T
    out = []
    for c in contacts.contacts:
        out.append(Contact(c.finger, rt @ (c.position - frame.origin), rt @ c.normal))
    return ContactSet(out)


def _targets_array(model: HandModel, targets) -> np.ndarray:
    if isinstance(targets, ContactSet):
        targets = {c.finger: c.position for c in targets.contacts}
    if isinstance(targets, dict):
        missing = [lbl for lbl in model.finger_order if lbl not in targets]
        if missing:
            raise InvalidContacts(f"targets missing fingers {missing}")
        arr = np.array([targets[lbl] for lbl in model.finger_order], dtype=float)
    else:
        arr = np.asarray(targets, dtype=float)
    if arr.shape != (model.n_fingers, 3):
        raise InvalidContacts(f"targets must be ({model.n_fingers}, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("targets contain non-finite values")
    return arr


def solve_retarget(model: HandModel, targets, q_prev: np.ndarray | None = None,
                   config: RetargetConfig | None = None) -> RetargetSolution:
    """Fit joints so fingertips reach the (wrist-frame) contact targets.

    Minimizes sum_i ||alpha*v_i - f_i(q)||^2 + beta*||q - q_prev||^2 inside
    the joint box, by damped Gauss-Newton with projection and backtracking,
    so the objective never increases along the accepted iterates. A few
    deterministic restarts kick in when the first descent stalls short of
    target_residual.
    """
    config = config or RetargetConfig()
    v = _targets_array(model, targets)
    if q_prev is None:
        q_prev = model.midrange()
    q_prev = clamp_to_limits(model, q_prev)

    starts = [q_prev]
    for b in config.restart_blends:
        starts.append(model.lower + b * (model.upper - model.lower))
    if config.random_restarts > 0:
        rng = np.random.default_rng(config.restart_seed)
        span = model.upper - model.lower
        starts.extend(model.lower + rng.random((config.random_restarts,
                                                model.n_joints)) * span)

    best: RetargetSolution | None = None
    for x0 in starts:
        sol = _descend(model, v, q_prev, x0, config)
        if best is None or sol.objective < best.objective:
            best = sol
        if best.contact_residual < config.target_residual:
            break
    return best


def _objective(model, v, q, q_prev, alpha, beta):
    tips = forward_kinematics(model, q)
    diff = alpha * v - tips
    return float(np.sum(diff * diff) + beta * np.sum((q - q_prev) ** 2)), diff


def _descend(model: HandModel, v: np.ndarray, q_prev: np.ndarray,
             x0: np.ndarray, config: RetargetConfig) -> RetargetSolution:
    alpha, beta = config.alpha, config.beta
    sqrt_beta = np.sqrt(beta)
    q = clamp_to_limits(model, x0)
    fval, diff = _objective(model, v, q, q_prev, alpha, beta)
    if not np.isfinite(fval):
        raise NonFinite("retarget objective is not finite")
    trace = [fval]
    lam = 1e-6
    converged = False
    it = 0
    stalls = 0
    nj = model.n_joints
    for it in range(1, config.max_iters + 1):
        jac = fingertip_jacobian(model, q)            # (F,3,J)
        jr = jac.reshape(-1, nj)                      # d(tips)/dq stacked
        grad = -2.0 * jr.T @ diff.reshape(-1) + 2.0 * beta * (q - q_prev)
        # Projected-gradient stationarity test.
        pg = q - clamp_to_limits(model, q - grad)
        if np.linalg.norm(pg) < config.tol:
            converged = True
            break
        h = jr.T @ jr + beta * np.eye(nj)
        accepted = False
        for _ in range(8):
            try:
                delta = np.linalg.solve(h + lam * np.eye(nj), -0.5 * grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            step = 1.0
            for _ in range(12):
                qc = clamp_to_limits(model, q + step * delta)
                fc, dc = _objective(model, v, qc, q_prev, alpha, beta)
                if fc < fval - 1e-18:
                    q, fval, diff = qc, fc, dc
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                lam = max(lam * 0.3, 1e-10)
                break
            lam *= 10.0
        if not np.isfinite(fval):
            raise NonFinite("retarget objective is not finite")
        trace.append(fval)
        if not accepted:
            break
        # Relative-progress stall cutoff: stop crawling on flat valleys
        # (targets out of reach) without disturbing true convergence.
        if trace[-2] - fval < 1e-9 * max(fval, 1e-30):
            stalls += 1
            if stalls >= 2:
                break
        else:
            stalls = 0
    tips = forward_kinematics(model, q)
    resid = float(np.max(np.linalg.norm(alpha * v - tips, axis=1)))
    return RetargetSolution(q=q, objective=fval, contact_residual=resid,
                            converged=converged, n_iters=it, objective_trace=trace)
