"""K-Means++ clustering over sentence/dialogue vectors, plus 2-D PCA.

Cluster IDs double as the agent's discrete actions, so `fit` must always
return exactly k centroids: empty clusters are repaired by reseeding them
to the point currently farthest from its assigned centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embeddings import WordEmbeddingTable, embed_sentence, tokenize

__all__ = [
    "ClusterModel",
    "euclidean",
    "kmeanspp_seed",
    "fit",
    "assign",
    "assign_many",
    "dialogue_vector",
    "pca_project",
    "save_cluster_model",
    "load_cluster_model",
]


@dataclass(eq=False)
class ClusterModel:
    """k centroids over dim-dimensional vectors; inertia as of fit time."""

    k: int
    dim: int
    centroids: np.ndarray  # (k, dim)
    inertia: float

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.centroids.shape != (self.k, self.dim):
            raise ValueError(
                f"centroids shape {self.centroids.shape} != ({self.k}, {self.dim})"
            )
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("non-finite centroid")


def euclidean(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at 0 against fp noise."""
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeanspp_seed(points, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each next centroid is a data point drawn with
    probability proportional to its squared distance to the nearest chosen one.
    Falls back to a uniform draw when all remaining distances are zero
    (duplicate points)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds number of points n={n}")
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def _assign_and_repair(points: np.ndarray, centroids: np.ndarray):
    """Nearest-centroid labels with empty clusters reseeded to far points.

    Returns (labels, centroids, inertia); centroids is mutated only on repair.
    """
    n, k = points.shape[0], centroids.shape[0]
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        centroids = centroids.copy()
        d_own = d2[np.arange(n), labels].copy()
        for j in np.flatnonzero(counts == 0):
            p = int(np.argmax(d_own))
            centroids[j] = points[p]
            labels[p] = j
            d_own[p] = 0.0
        inertia = float(
            np.sum((points - centroids[labels]) ** 2)
        )
    else:
        inertia = float(d2[np.arange(n), labels].sum())
    return labels, centroids, inertia


def _lloyd_once(points, k, rng, max_iters, tol):
    centroids = kmeanspp_seed(points, k, rng)
    history: list[float] = []
    for _ in range(max_iters):
        labels, centroids, inertia = _assign_and_repair(points, centroids)
        if history:
            # Lloyd monotonicity, with a hair of float slack.
            assert inertia <= history[-1] + 1e-9 + 1e-12 * abs(history[-1]), (
                f"inertia increased: {history[-1]} -> {inertia}"
            )
        history.append(inertia)
        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = points[labels == j].mean(axis=0)
        movement = float(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1)).max())
        centroids = new_centroids
        if movement < tol:
            break
    # Final pass so the stored labels/inertia match the stored centroids.
    labels, centroids, inertia = _assign_and_repair(points, centroids)
    if history:
        assert inertia <= history[-1] + 1e-9 + 1e-12 * abs(history[-1])
    history.append(inertia)
    return centroids, inertia, history


def fit(
    points,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 10,
) -> ClusterModel:
    """Best of `restarts` K-Means++ seeded Lloyd runs (lowest inertia wins).

    A single K-Means++ init lands in a suboptimal basin a noticeable
    fraction of the time even on tiny instances; ten restarts make the
    near-optimality failure rate negligible at these scales.  The winning
    run's inertia history (one value per assignment pass, asserted
    non-increasing every iteration) is kept on the returned model as
    `inertia_history` for inspection.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    best = None
    for _ in range(restarts):
        centroids, inertia, history = _lloyd_once(points, k, rng, max_iters, tol)
        if best is None or inertia < best[1]:
            best = (centroids, inertia, history)
    centroids, inertia, history = best
    model = ClusterModel(k=k, dim=points.shape[1], centroids=centroids, inertia=inertia)
    model.inertia_history = history  # diagnostic, not part of the dataclass
    return model


def assign(model: ClusterModel, x) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"vector shape {x.shape} != ({model.dim},)")
    d2 = np.sum((model.centroids - x) ** 2, axis=1)
    return int(np.argmin(d2))


def assign_many(model: ClusterModel, X) -> np.ndarray:
    """Vectorized `assign` over the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"points shape {X.shape} incompatible with dim {model.dim}")
    return np.argmin(_sq_dists(X, model.centroids), axis=1)


def dialogue_vector(dialogue, table: WordEmbeddingTable) -> np.ndarray:
    """Mean of the sentence vectors of every turn in the dialogue."""
    turns = getattr(dialogue, "turns", dialogue)
    if len(turns) == 0:
        raise ValueError("empty dialogue has no vector")
    vecs = np.stack(
        [embed_sentence(tokenize(t.text), table).values for t in turns]
    )
    return vecs.mean(axis=0)


def pca_project(points, out_dim: int = 2) -> np.ndarray:
    """Project mean-centered points onto the top principal axes.

    Eigenvectors are ordered by descending eigenvalue; each is sign-fixed so
    its first nonzero component is positive, making the projection unique.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n, dim = X.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 points, got {n}")
    if out_dim > dim:
        raise ValueError(f"out_dim {out_dim} exceeds input dim {dim}")
    Xc = X - X.mean(axis=0)
    cov = (Xc.T @ Xc) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:out_dim]
    V = eigvecs[:, order]
    for j in range(V.shape[1]):
        col = V[:, j]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12)
        if nonzero.size and col[nonzero[0]] < 0:
            V[:, j] = -col
    return Xc @ V


def save_cluster_model(model: ClusterModel, path: str, extra: dict | None = None) -> None:
    """Write the versioned JSON cluster-model file."""
    obj = {
        "version": 1,
        "k": model.k,
        "dim": model.dim,
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "inertia": float(model.inertia),
    }
    if extra:
        obj.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_cluster_model(path: str) -> ClusterModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("version") != 1:
        raise ValueError(f"unsupported cluster model version: {obj.get('version')!r}")
    model = ClusterModel(
        k=int(obj["k"]),
        dim=int(obj["dim"]),
        centroids=np.asarray(obj["centroids"], dtype=np.float64),
        inertia=float(obj.get("inertia", float("nan"))),
    )
    return model
