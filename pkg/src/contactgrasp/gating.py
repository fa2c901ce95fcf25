"""Geometry features, shape clustering, and the expert gating network.

Objects are summarized by a 10-dim geometry descriptor, grouped with
deterministic k-means, and a softmax-linear gate is trained to predict
per-expert success distributions from the descriptor by KL divergence.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import ConfigError, InvalidK, NonFinite
from .geometry import PointCloud, compute_pca

FEATURE_NAMES = (
    "extent_major", "extent_mid", "extent_minor",
    "var_ratio_21", "var_ratio_31",
    "elongation", "flatness", "sphericity",
    "hull_volume", "max_radius",
)


@dataclass
class GeometryFeatures:
    vector: np.ndarray  # (10,) in FEATURE_NAMES order

    def __getitem__(self, name: str) -> float:
        return float(self.vector[FEATURE_NAMES.index(name)])


def extract_geometry_features(cloud: PointCloud) -> GeometryFeatures:
    """10-dim shape descriptor, invariant to rigid motion of the cloud.

    Extents are measured along the principal axes and sorted descending;
    variance ratios and the three shape indices (elongation, flatness,
    sphericity) live in [0, 1]; the last two entries are the convex hull
    volume and the max distance from the centroid.
    """
    axes = compute_pca(cloud)
    proj = (cloud.points - axes.centroid) @ axes.axes.T
    extents = np.sort(proj.max(axis=0) - proj.min(axis=0))[::-1]
    v = axes.variances
    r21 = v[1] / v[0]
    r31 = v[2] / v[0]
    a, b, c = np.sqrt(v)
    elongation = 1.0 - b / a
    flatness = 1.0 - (c / b if b > 0 else 1.0)
    sphericity = c / a
    try:
        volume = float(ConvexHull(cloud.points).volume)
    except QhullError:
        volume = 0.0
    max_radius = float(np.max(np.linalg.norm(cloud.points - axes.centroid, axis=1)))
    vec = np.array([extents[0], extents[1], extents[2], r21, r31,
                    elongation, flatness, sphericity, volume, max_radius])
    if not np.all(np.isfinite(vec)):
        raise NonFinite("geometry features are not finite")
    return GeometryFeatures(vector=vec)


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        x = features
    else:
        x = np.array([f.vector if isinstance(f, GeometryFeatures) else f
                      for f in features], dtype=float)
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray            # (k, D)
    assignments: dict                # object id -> cluster index
    inertia: float                   # final within-cluster sum of squares
    seed: int
    wcss_trace: list[float] = field(default_factory=list)

    def assign(self, features) -> np.ndarray:
        x = _as_matrix(features)
        d = np.linalg.norm(x[:, None, :] - self.centroids[None], axis=2)
        return np.argmin(d, axis=1)


def _wcss(x, centroids, labels):
    return float(np.sum((x - centroids[labels]) ** 2))


def kmeans_fit(features, k: int, seed: int = 0, max_iters: int = 100,
               object_ids=None) -> ClusterModel:
    """Deterministic k-means++ seeding followed by Lloyd iterations.

    Empty clusters are re-seeded from the point farthest from its current
    centroid, which cannot raise the objective; the within-cluster sum of
    squares is asserted non-increasing every iteration.
    """
    x = _as_matrix(features)
    n = len(x)
    if not isinstance(k, (int, np.integer)) or k < 1 or k > n:
        raise InvalidK(f"k must be in [1, {n}], got {k}")
    if object_ids is None:
        object_ids = list(range(n))
    rng = np.random.default_rng(seed)

    # k-means++ seeding.
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c] = x[rng.integers(n)]
        else:
            centroids[c] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centroids[c]) ** 2, axis=1))

    labels = np.zeros(n, dtype=int)
    trace: list[float] = []
    prev = np.inf
    for _ in range(max_iters):
        dist = np.linalg.norm(x[:, None, :] - centroids[None], axis=2)
        labels = np.argmin(dist, axis=1)
        for c in range(k):
            if not np.any(labels == c):
                far = int(np.argmax(np.linalg.norm(x - centroids[labels], axis=1)))
                centroids[c] = x[far]
                labels[far] = c
        cur = _wcss(x, centroids, labels)
        assert cur <= prev + 1e-9, "k-means objective increased"
        trace.append(cur)
        new_centroids = centroids.copy()
        for c in range(k):
            members = labels == c
            if np.any(members):
                new_centroids[c] = x[members].mean(axis=0)
        if np.allclose(new_centroids, centroids) and cur == prev:
            break
        centroids = new_centroids
        prev = cur
    inertia = _wcss(x, centroids, labels)
    assignments = {oid: int(lbl) for oid, lbl in zip(object_ids, labels)}
    return ClusterModel(k=k, centroids=centroids, assignments=assignments,
                        inertia=inertia, seed=seed, wcss_trace=trace)


def pin_categories(model: ClusterModel, categories: dict,
                   pins: dict) -> ClusterModel:
    """Override cluster assignment for whole dataset categories.

    categories maps object id -> category label, pins maps category label
    -> cluster index. Objects without a pinned category keep their
    k-means assignment.
    """
    assignments = dict(model.assignments)
    for oid, cat in categories.items():
        if cat in pins:
            c = int(pins[cat])
            if not 0 <= c < model.k:
                raise InvalidK(f"pinned cluster {c} out of range for k={model.k}")
            assignments[oid] = c
    return ClusterModel(k=model.k, centroids=model.centroids.copy(),
                        assignments=assignments, inertia=model.inertia,
                        seed=model.seed, wcss_trace=list(model.wcss_trace))


def curriculum_schedule(model: ClusterModel, features, stage: int,
                        central_fraction: float = 0.3,
                        object_ids=None) -> dict[int, list]:
    """Training-object schedule per expert for the three curriculum stages.

    Stage 1: each expert sees only the most central fraction of its own
    cluster (nearest to the centroid, ties broken by object id). Stage 2:
    the full cluster. Stage 3: every object, for generalization.
    """
    if stage not in (1, 2, 3):
        raise ConfigError("stage", f"must be 1, 2 or 3, got {stage}")
    if not 0.0 < central_fraction <= 1.0:
        raise ConfigError("central_fraction", f"must be in (0, 1], got {central_fraction}")
    x = _as_matrix(features)
    if object_ids is None:
        object_ids = list(model.assignments.keys())
    if len(object_ids) != len(x):
        raise ConfigError("object_ids", "length must match features")
    out: dict[int, list] = {}
    for c in range(model.k):
        members = [(i, oid) for i, oid in enumerate(object_ids)
                   if model.assignments[oid] == c]
        if stage == 3:
            out[c] = list(object_ids)
            continue
        if stage == 2:
            out[c] = [oid for _, oid in members]
            continue
        dists = [(np.linalg.norm(x[i] - model.centroids[c]), oid) for i, oid in members]
        dists.sort(key=lambda t: (t[0], str(t[1])))
        take = int(np.ceil(central_fraction * len(dists))) if dists else 0
        out[c] = [oid for _, oid in dists[:take]]
    return out


@dataclass
class GatingModel:
    weights: np.ndarray              # (D, k)
    bias: np.ndarray                 # (k,)
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    loss_trajectory: list[float] = field(default_factory=list)

    def predict_proba(self, features) -> np.ndarray:
        x = (_as_matrix(features) - self.feature_mean) / self.feature_scale
        logits = x @ self.weights + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)


def normalize_success_rates(rates: np.ndarray) -> np.ndarray:
    """Per-row normalization into distributions; all-zero rows go uniform."""
    r = np.asarray(rates, dtype=float)
    if np.any(r < 0):
        raise ConfigError("success_rates", "must be non-negative")
    s = r.sum(axis=1, keepdims=True)
    out = np.where(s > 0, r / np.where(s > 0, s, 1.0), 1.0 / r.shape[1])
    return out


def kl_loss(p: np.ndarray, p_hat: np.ndarray) -> float:
    """Mean KL divergence from predictions to targets, target side first."""
    p = np.asarray(p, dtype=float)
    p_hat = np.clip(np.asarray(p_hat, dtype=float), 1e-300, None)
    terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(p_hat)), 0.0)
    return float(terms.sum(axis=1).mean())


def gating_train(features, targets, lr: float = 0.5, epochs: int = 2000,
                 init_weights: np.ndarray | None = None,
                 init_bias: np.ndarray | None = None,
                 standardize: bool = True) -> GatingModel:
    """Full-batch gradient descent on the KL objective.

    Targets must be row-stochastic (use normalize_success_rates for raw
    success counts). The loss trajectory starts with the initial loss,
    then one entry per epoch. Raises NonFinite if training diverges.
    """
    x = _as_matrix(features)
    p = np.asarray(targets, dtype=float)
    if p.ndim != 2 or len(p) != len(x):
        raise ConfigError("targets", f"must be (N, k) matching features, got {p.shape}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise ConfigError("targets", "rows must be distributions summing to 1")
    n, d = x.shape
    k = p.shape[1]
    if standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        mean = np.zeros(d)
        scale = np.ones(d)
    xs = (x - mean) / scale
    w = np.zeros((d, k)) if init_weights is None else np.array(init_weights, dtype=float)
    b = np.zeros(k) if init_bias is None else np.array(init_bias, dtype=float)

    def proba(xm):
        logits = xm @ w + b
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    trajectory = [kl_loss(p, proba(xs))]
    for _ in range(epochs):
        p_hat = proba(xs)
        g = (p_hat - p) / n
        w = w - lr * (xs.T @ g)
        b = b - lr * g.sum(axis=0)
        loss = kl_loss(p, proba(xs))
        if not np.isfinite(loss):
            raise NonFinite("gating loss diverged")
        trajectory.append(loss)
    return GatingModel(weights=w, bias=b, feature_mean=mean, feature_scale=scale,
                       loss_trajectory=trajectory)


def gating_select(model: GatingModel, features) -> int:
    """Expert with the highest predicted probability; ties -> lowest index."""
    proba = model.predict_proba(features)
    return int(np.argmax(proba[0]))


def hard_case_split(success_rates: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Indices of objects whose two best expert success rates both miss.

    With a single expert only that rate is checked.
    """
    r = np.asarray(success_rates, dtype=float)
    if r.ndim != 2:
        raise ConfigError("success_rates", "must be 2-D (objects x experts)")
    top = np.sort(r, axis=1)[:, ::-1]
    best_two = top[:, : min(2, r.shape[1])]
    return np.flatnonzero(np.all(best_two < threshold, axis=1))
