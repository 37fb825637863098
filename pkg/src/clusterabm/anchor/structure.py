"""Stage 1: structural embedding and spectral coarse clustering."""

from __future__ import annotations

import numpy as np
from sklearn.cluster import KMeans

from .. import rng as _rng
from ..core import InteractionGraph
from .types import ClusterAssignment, StructuralEmbedding, canonical_labels

__all__ = ["structural_embed", "coarse_cluster", "knn_affinity"]


def _row_normalize(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    return np.divide(M, norms, out=np.zeros_like(M), where=norms > 0)


def structural_embed(graph: InteractionGraph, X, L: int = 2, d_H: int = 16, seed: int = 0) -> StructuralEmbedding:
    """Untrained mean-neighbourhood aggregation followed by a seeded projection.

    Each round concatenates an agent's current representation with the mean
    over its adjacency neighbours (zero for isolated agents). The result is
    projected to ``d_H`` dimensions with a fixed Gaussian matrix and
    L2-normalised row-wise.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != graph.n:
        raise ValueError(f"attribute matrix must be ({graph.n}, d_X), got {X.shape}")
    if L < 1 or d_H < 1:
        raise ValueError("L and d_H must be >= 1")
    A = graph.adjacency
    deg = graph.degree.astype(float)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    h = X
    for _ in range(L):
        nbr = (A @ h) * inv[:, None]
        h = np.hstack([h, nbr])
    R = _rng.generator(seed, 201).standard_normal((h.shape[1], d_H)) / np.sqrt(d_H)
    return StructuralEmbedding(H=_row_normalize(h @ R), layers=L)


def knn_affinity(Y: np.ndarray, k: int) -> np.ndarray:
    """Symmetric k-nearest-neighbour affinity over cosine similarity.

    Similarities are mapped to ``[0, 1]`` via ``(1 + cos) / 2``.
    """
    U = _row_normalize(Y)
    S = U @ U.T
    n = len(Y)
    W = np.zeros((n, n))
    masked = S.copy()
    np.fill_diagonal(masked, -np.inf)
    # stable sort so ties resolve by agent id
    idx = np.argsort(-masked, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    W[rows, idx.ravel()] = (1.0 + S[rows, idx.ravel()]) / 2.0
    return np.maximum(W, W.T)


def coarse_cluster(
    Y,
    K_coarse: int,
    graph: InteractionGraph | None = None,
    seed: int = 0,
    graph_weight: float = 1.0,
) -> ClusterAssignment:
    """Spectral clustering of ``Y`` with the symmetric normalised Laplacian.

    The affinity is a cosine kNN graph over ``Y`` (``k = min(10, n - 1)``),
    plus ``graph_weight`` times the binary adjacency when a graph is given.
    Eigenvectors of the ``K_coarse`` smallest eigenvalues are row-normalised
    and grouped with seeded k-means.
    """
    Y = np.asarray(Y, dtype=float)
    n = len(Y)
    if not 2 <= K_coarse <= n:
        raise ValueError(f"K_coarse must be in [2, {n}], got {K_coarse}")
    if K_coarse == n:
        return ClusterAssignment(labels=np.arange(n))
    if np.allclose(Y, Y[0]):
        raise ValueError("degenerate input: all rows of Y are identical")
    W = knn_affinity(Y, min(10, n - 1))
    if graph is not None and graph_weight > 0:
        W = W + graph_weight * graph.adjacency.toarray()
    d = W.sum(axis=1)
    dinv = np.divide(1.0, np.sqrt(d), out=np.zeros_like(d), where=d > 0)
    L_sym = np.eye(n) - dinv[:, None] * W * dinv[None, :]
    _, vecs = np.linalg.eigh(L_sym)
    emb = _row_normalize(vecs[:, :K_coarse])
    km = KMeans(n_clusters=K_coarse, n_init=10, random_state=seed % (2**32))
    labels = km.fit_predict(emb)
    return ClusterAssignment(labels=canonical_labels(labels))
