"""Contact layout on canonicalized clouds, plus force-closure analysis.

The layout rule places four fingers on one side of the object and the
thumb on the opposing side: the cloud is sliced along a spread direction,
each finger takes the extremal surface point of its slice along the
opposition direction, and the thumb takes the extremal point on the far
side, near the center of the finger group. Closure is then scored in
wrench space and locally improved over neighboring surface points.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import DegenerateCloud, InvalidContacts, NoGraspSurface
from .geometry import PointCloud, PrincipalAxes, slice_cloud

FINGER_LABELS = ("thumb", "index", "middle", "ring", "little")


class GraspStrategy(enum.Enum):
    HORIZONTAL = "horizontal"   # object stands upright, approach from the side
    VERTICAL = "vertical"       # object lies flat, approach from above


@dataclass
class Contact:
    finger: str
    position: np.ndarray   # (3,) meters
    normal: np.ndarray     # (3,) outward unit


@dataclass
class ContactSet:
    contacts: list[Contact]

    def __post_init__(self):
        for c in self.contacts:
            c.position = np.asarray(c.position, dtype=float)
            c.normal = np.asarray(c.normal, dtype=float)

    def validate(self, cloud: PointCloud | None = None, eps_surf: float = 0.005):
        labels = [c.finger for c in self.contacts]
        if sorted(labels) != sorted(FINGER_LABELS):
            raise InvalidContacts(f"need the 5 finger labels exactly once, got {labels}")
        for c in self.contacts:
            if not np.all(np.isfinite(c.position)):
                raise InvalidContacts(f"{c.finger}: non-finite position")
            if abs(np.linalg.norm(c.normal) - 1.0) > 1e-6:
                raise InvalidContacts(f"{c.finger}: normal is not unit length")
        if cloud is not None:
            tree = cKDTree(cloud.points)
            d, _ = tree.query(self.positions())
            worst = float(np.max(d))
            if worst > eps_surf:
                raise InvalidContacts(f"contact {worst:.4f} m off the surface (> {eps_surf})")

    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.contacts])

    def normals(self) -> np.ndarray:
        return np.array([c.normal for c in self.contacts])

    def by_finger(self, finger: str) -> Contact:
        for c in self.contacts:
            if c.finger == finger:
                return c
        raise InvalidContacts(f"no contact labeled {finger!r}")


@dataclass
class ForceClosureReport:
    closed: bool
    quality: float          # largest origin-centered ball radius in the wrench hull
    wrenches: np.ndarray    # (K,6) sampled cone-edge wrenches


@dataclass
class ContactParams:
    """Tunables for contact generation and refinement. Units: meters."""

    eps_surf: float = 0.005
    n_slices: int = 8
    d_min: float = 0.008            # minimum pairwise contact spacing
    r_nbr: float = 0.010            # refinement neighborhood radius
    friction: float = 0.5
    n_cone_samples: int = 8
    alignment_threshold_deg: float = 30.0
    finger_span: float = 0.072      # total spread of the four fingers
    extremum_band: float = 0.004    # depth of the extremal surface band
    tie_frac: float = 0.05          # extent tie tolerance when picking axes
    min_opposition: float = 0.003   # minimum extent across the grasp
    normal_k: int = 16
    max_candidates: int = 6         # neighbor moves tried per finger per sweep
    refine_max_iters: int = 2


def select_strategy(axes: PrincipalAxes, threshold_deg: float = 30.0) -> GraspStrategy:
    """Side grasp when the dominant axis stands near vertical, else top-down.

    The axis is treated as a line, so its sign never changes the outcome,
    and scaling the cloud leaves the choice untouched.
    """
    a = axes.axes[0]
    cos_t = abs(a[2]) / np.linalg.norm(a)
    angle = np.degrees(np.arccos(np.clip(cos_t, -1.0, 1.0)))
    return GraspStrategy.HORIZONTAL if angle <= threshold_deg else GraspStrategy.VERTICAL


def estimate_normals(cloud: PointCloud, indices: np.ndarray,
                     k: int = 16) -> np.ndarray:
    """Outward unit normals at the given points by local plane fits.

    Each normal is the smallest-variance direction of the k-neighborhood,
    oriented away from the cloud centroid. When a point sits even with the
    centroid the sign falls back to +z, then +x, then +y. Cloud-supplied
    normals win over estimation.
    """
    indices = np.atleast_1d(indices)
    if cloud.normals is not None:
        return cloud.normals[indices].copy()
    pts = cloud.points
    k = min(k, len(pts))
    tree = cKDTree(pts)
    _, nbr = tree.query(pts[indices], k=k)
    nbr = np.atleast_2d(nbr)
    centroid = cloud.centroid
    out = np.empty((len(indices), 3))
    for row, idx in enumerate(indices):
        local = pts[nbr[row]]
        local = local - local.mean(axis=0)
        cov = local.T @ local
        w, v = np.linalg.eigh(cov)
        n = v[:, 0]
        ref = pts[idx] - centroid
        s = float(n @ ref)
        if abs(s) < 1e-9:
            for comp in (2, 0, 1):
                if abs(n[comp]) > 1e-9:
                    s = n[comp]
                    break
        if s < 0:
            n = -n
        out[row] = n
    return out


def _pick_axes(extents: np.ndarray, strategy: GraspStrategy,
               params: ContactParams) -> tuple[int, int]:
    """Return (opposition axis, spread axis) as coordinate indices.

    Opposition runs across the thinner horizontal dimension (ties go to x,
    which matters for rotation-symmetric shapes). For a side grasp of an
    upright object the fingers spread along the other horizontal axis;
    for a top-down grasp they spread along whichever remaining dimension
    is longest (ties prefer z).
    """
    ex, ey = extents[0], extents[1]
    if abs(ex - ey) <= params.tie_frac * max(ex, ey, 1e-12):
        o_axis = 0
    else:
        o_axis = 0 if ex < ey else 1
    if strategy is GraspStrategy.HORIZONTAL:
        s_axis = 1 - o_axis
    else:
        # Spread stays horizontal unless the object is clearly taller than
        # wide (e.g. a rod held along its length).
        other = 1 - o_axis
        s_axis = 2 if extents[2] > extents[other] * (1.0 + params.tie_frac) else other
    return o_axis, s_axis


def generate_contacts(cloud: PointCloud, strategy: GraspStrategy,
                      params: ContactParams | None = None) -> ContactSet:
    """Five-contact opposition layout on a canonicalized cloud.

    Raises NoGraspSurface when the object offers no opposing surface pair:
    too little extent across the grasp, no far-side point for the thumb,
    or thumb and finger normals that do not oppose (e.g. a bare plane).
    """
    params = params or ContactParams()
    pts = cloud.points
    if len(pts) < 5:
        raise DegenerateCloud(f"need at least 5 points, got {len(pts)}")
    extents = cloud.extents
    o_axis, s_axis = _pick_axes(extents, strategy, params)
    t_axis = 3 - o_axis - s_axis

    if extents[o_axis] < params.min_opposition:
        raise NoGraspSurface(
            f"extent {extents[o_axis]:.4f} m across the grasp axis is below "
            f"{params.min_opposition} m")

    o = pts[:, o_axis]
    s = pts[:, s_axis]
    t = pts[:, t_axis]

    # Spread band: drop outlier slices, then center a hand-sized window.
    support = slice_cloud(cloud, np.eye(3)[s_axis], params.n_slices)
    min_pts = max(3, len(pts) // (params.n_slices * 20))
    populated = [sl for sl in support if len(sl) >= min_pts] or support
    s_lo = min(s[sl].min() for sl in populated)
    s_hi = max(s[sl].max() for sl in populated)
    span = min(s_hi - s_lo, params.finger_span)
    mid = 0.5 * (s_lo + s_hi)
    band_lo = mid - 0.5 * span
    width = span / 4.0

    band_depth = max(params.extremum_band, 0.1 * extents[o_axis])
    finger_idx: list[int] = []
    for kslot in range(4):
        lo = band_lo + kslot * width
        hi = lo + width
        cand = np.flatnonzero((s >= lo - 1e-12) & (s <= hi + 1e-12))
        if len(cand) == 0:
            order = np.argsort(np.abs(s - (lo + hi) / 2.0), kind="stable")
            cand = order[: min(32, len(order))]
        o_top = o[cand].max()
        band = cand[o[cand] >= o_top - band_depth]
        target_s = 0.5 * (lo + hi)
        # Fingertips reach down from above, so favor the upper part of the
        # surface when the free axis is height; otherwise stay centered.
        if t_axis == 2:
            target_t = float(np.quantile(t[band], 0.8))
        else:
            target_t = float(np.median(t))
        cost = np.hypot(s[band] - target_s, t[band] - target_t)
        finger_idx.append(int(band[int(np.argmin(cost))]))

    f_pos = pts[finger_idx]
    # Thumb: far side of the opposition axis, near the finger group center.
    cand = np.flatnonzero((s >= band_lo - width) & (s <= band_lo + span + width))
    if len(cand) == 0:
        cand = np.arange(len(pts))
    o_bot = o[cand].min()
    band = cand[o[cand] <= o_bot + band_depth]
    cost = np.hypot(s[band] - f_pos[:, s_axis].mean(), t[band] - f_pos[:, t_axis].mean())
    thumb_i = int(band[int(np.argmin(cost))])

    if o[thumb_i] >= min(o[i] for i in finger_idx):
        raise NoGraspSurface("thumb candidate is not on the opposing side")

    # Assign index..little along z cross (thumb-to-finger direction), so the
    # right-handed palm frame built on these contacts has its lateral axis
    # running middle-to-little like the hand it will be fitted to.
    sgn = float(np.cross([0.0, 0.0, 1.0], np.eye(3)[o_axis])[s_axis]) or 1.0
    finger_idx.sort(key=lambda i: (sgn * s[i], i))
    all_idx = np.array([thumb_i] + finger_idx)
    normals = estimate_normals(cloud, all_idx, k=params.normal_k)
    if float(normals[0] @ normals[1:].mean(axis=0)) >= 0.0:
        raise NoGraspSurface("thumb and finger surface normals do not oppose")

    contacts = [Contact("thumb", pts[thumb_i], normals[0])]
    for lbl, i, n in zip(FINGER_LABELS[1:], finger_idx, normals[1:]):
        contacts.append(Contact(lbl, pts[i], n))
    cs = ContactSet(contacts)
    cs.validate(cloud=cloud, eps_surf=params.eps_surf)
    return cs


def _cone_edges(normal: np.ndarray, friction: float, m: int) -> np.ndarray:
    """Unit-normal-component edge forces of the friction cone at a contact."""
    n = normal / np.linalg.norm(normal)
    press = -n  # grasp forces push into the surface
    if friction <= 0.0:
        return press[None, :]
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t1 = a - (a @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    ang = 2.0 * np.pi * np.arange(m) / m
    return press[None, :] + friction * (np.cos(ang)[:, None] * t1 + np.sin(ang)[:, None] * t2)


def grasp_wrenches(contacts: ContactSet, friction: float = 0.5,
                   n_cone_samples: int = 8, centroid: np.ndarray | None = None,
                   torque_scale: float | None = None) -> np.ndarray:
    """Sampled cone-edge wrenches (K,6): force, then torque about the centroid.

    Torques are divided by the largest contact radius so both halves live
    on comparable scales. Callers with the full object available should
    pass its centroid and max radius; by default the contact set supplies
    both.
    """
    p = contacts.positions()
    nrm = contacts.normals()
    bad = np.linalg.norm(nrm, axis=1) < 1e-12
    if np.any(bad):
        raise InvalidContacts(
            f"zero normal on {contacts.contacts[int(np.argmax(bad))].finger}")
    c = p.mean(axis=0) if centroid is None else np.asarray(centroid, dtype=float)
    rho = torque_scale
    if rho is None:
        rho = float(np.max(np.linalg.norm(p - c, axis=1)))
    rho = max(rho, 1e-9)
    ws = []
    for i in range(len(p)):
        f = _cone_edges(nrm[i], friction, n_cone_samples)
        tau = np.cross(np.broadcast_to(p[i] - c, f.shape), f) / rho
        ws.append(np.hstack([f, tau]))
    return np.concatenate(ws, axis=0)


def check_force_closure(contacts: ContactSet, friction: float = 0.5,
                        n_cone_samples: int = 8,
                        centroid: np.ndarray | None = None,
                        torque_scale: float | None = None) -> ForceClosureReport:
    """Wrench-space closure test.

    The grasp is closed when the origin sits strictly inside the convex
    hull of the sampled wrenches, taken within the subspace the wrenches
    actually span (a grasp is not penalized for directions no sampled
    wrench excites). Quality is the distance from the origin to the hull
    boundary in that subspace, zero whenever the test fails.
    """
    w = grasp_wrenches(contacts, friction, n_cone_samples, centroid, torque_scale)
    closed, quality = _origin_in_hull(w)
    return ForceClosureReport(closed=closed, quality=quality, wrenches=w)


def _origin_in_hull(w: np.ndarray) -> tuple[bool, float]:
    scale = float(np.max(np.abs(w))) if len(w) else 0.0
    if scale <= 0.0 or len(w) < 2:
        return False, 0.0
    m0 = w.mean(axis=0)
    u, s, vt = np.linalg.svd(w - m0, full_matrices=False)
    keep = s > 1e-9 * max(s[0], 1e-30)
    basis = vt[keep]
    d = basis.shape[0]
    if d == 0:
        return False, 0.0
    # The origin must lie in the affine span at all.
    off = m0 - basis.T @ (basis @ m0)
    if np.linalg.norm(off) > 1e-9 * scale:
        return False, 0.0
    y = w @ basis.T
    if d == 1:
        lo, hi = float(y.min()), float(y.max())
        if lo < 0.0 < hi:
            return True, min(-lo, hi)
        return False, 0.0
    try:
        hull = ConvexHull(y)
    except QhullError:
        try:
            hull = ConvexHull(y, qhull_options="QJ")
        except QhullError:
            return False, 0.0
    margin = float(np.min(-hull.equations[:, -1]))
    if margin > 1e-12:
        return True, margin
    return False, 0.0


def refine_contacts(contacts: ContactSet, cloud: PointCloud,
                    friction: float = 0.5, max_iters: int | None = None,
                    params: ContactParams | None = None,
                    centroid: np.ndarray | None = None,
                    torque_scale: float | None = None) -> tuple[ContactSet, ForceClosureReport]:
    """Greedy local search over nearby surface points to improve closure.

    One finger moves at a time to the neighbor that raises hull quality
    the most; spacing below d_min and breaking the finger order along the
    spread direction are rejected. Quality never decreases. Raises
    NoGraspSurface (carrying the best attempt) when no visited layout
    achieves closure.
    """
    params = params or ContactParams()
    if max_iters is None:
        max_iters = params.refine_max_iters
    pts = cloud.points
    tree = cKDTree(pts)
    if centroid is None:
        centroid = cloud.centroid
    if torque_scale is None:
        torque_scale = float(np.max(np.linalg.norm(pts - centroid, axis=1)))

    def closure(cs: ContactSet) -> ForceClosureReport:
        return check_force_closure(cs, friction, params.n_cone_samples,
                                   centroid=centroid, torque_scale=torque_scale)

    # Spread direction from the four finger contacts, fixed for the search.
    f_pos = np.array([contacts.by_finger(l).position for l in FINGER_LABELS[1:]])
    spread = f_pos - f_pos.mean(axis=0)
    _, _, vt = np.linalg.svd(spread, full_matrices=False)
    s_dir = vt[0]
    if s_dir @ (f_pos[-1] - f_pos[0]) < 0:
        s_dir = -s_dir
    ordered = np.ptp(f_pos @ s_dir) > 1e-9

    def feasible(positions: np.ndarray) -> bool:
        dd = np.linalg.norm(positions[:, None] - positions[None, :], axis=2)
        if np.any(dd[np.triu_indices(5, 1)] < params.d_min):
            return False
        if ordered:
            proj = positions[1:] @ s_dir
            if np.any(np.diff(proj) < 0.0):
                return False
        return True

    # One candidate pool per finger: nearest cloud points inside r_nbr.
    pools = []
    for c in [contacts.by_finger(l) for l in FINGER_LABELS]:
        idx = tree.query_ball_point(c.position, params.r_nbr)
        idx = sorted(idx, key=lambda i: (np.linalg.norm(pts[i] - c.position), i))
        pools.append(idx[: params.max_candidates])
    pool_norms = {}
    flat = sorted({i for pool in pools for i in pool})
    if flat:
        est = estimate_normals(cloud, np.asarray(flat), k=params.normal_k)
        pool_norms = {i: est[r] for r, i in enumerate(flat)}

    cur = ContactSet([replace(contacts.by_finger(l)) for l in FINGER_LABELS])
    cur_rep = closure(cur)
    best, best_rep = cur, cur_rep
    for _ in range(max_iters):
        improved = False
        for fi, label in enumerate(FINGER_LABELS):
            base_pos = cur.positions()
            champion = None
            for i in pools[fi]:
                trial_pos = base_pos.copy()
                trial_pos[fi] = pts[i]
                if np.allclose(pts[i], base_pos[fi]) or not feasible(trial_pos):
                    continue
                trial = ContactSet([replace(c) for c in cur.contacts])
                trial.contacts[fi].position = pts[i].copy()
                trial.contacts[fi].normal = pool_norms[i].copy()
                rep = closure(trial)
                if rep.quality > cur_rep.quality + 1e-12 and (
                        champion is None or rep.quality > champion[1].quality):
                    champion = (trial, rep)
            if champion is not None:
                cur, cur_rep = champion
                improved = True
        if cur_rep.quality > best_rep.quality:
            best, best_rep = cur, cur_rep
        if not improved:
            break
    if not best_rep.closed:
        raise NoGraspSurface("no contact layout achieved force closure",
                             best_contacts=best, best_report=best_rep)
    return best, best_rep
