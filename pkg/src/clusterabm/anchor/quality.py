"""Cluster quality monitoring: modularity, silhouette, motif coherence."""

from __future__ import annotations

import numpy as np
from sklearn.metrics import silhouette_score

from ..core import InteractionGraph
from .types import ClusterQualityReport

__all__ = ["modularity", "silhouette", "motif_coherence", "quality"]


def modularity(labels, graph: InteractionGraph) -> float:
    """Newman-Girvan ``Q = sum_c (e_c / m - (d_c / 2m)^2)`` on the binary adjacency."""
    labels = np.asarray(labels)
    A = graph.adjacency
    m = A.sum() / 2.0
    if m == 0:
        return 0.0
    coo = A.tocoo()
    K = int(labels.max()) + 1
    same = labels[coo.row] == labels[coo.col]
    e = np.bincount(labels[coo.row][same], minlength=K) / 2.0
    d = np.bincount(labels, weights=graph.degree.astype(float), minlength=K)
    return float(np.sum(e / m - (d / (2 * m)) ** 2))


def silhouette(Z, labels) -> tuple[float, bool]:
    """Mean silhouette on ``Z``; ``(0.0, True)`` when it is undefined."""
    Z = np.asarray(Z, float)
    labels = np.asarray(labels)
    K = len(np.unique(labels))
    if K < 2 or K >= len(labels) or np.allclose(Z, Z[0]):
        return 0.0, True
    return float(silhouette_score(Z, labels, metric="euclidean")), False


def motif_coherence(P, labels) -> float:
    """Mean within-cluster pairwise cosine of motif profiles, mapped to ``[0, 1]``.

    Singleton clusters count as fully coherent.
    """
    P = np.asarray(P, float)
    labels = np.asarray(labels)
    norms = np.linalg.norm(P, axis=1, keepdims=True)
    U = np.divide(P, norms, out=np.zeros_like(P), where=norms > 0)
    scores = []
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        if len(idx) < 2:
            scores.append(1.0)
            continue
        C = U[idx] @ U[idx].T
        iu = np.triu_indices(len(idx), 1)
        scores.append((float(np.mean(C[iu])) + 1.0) / 2.0)
    return float(np.mean(scores))


def quality(assignment, graph: InteractionGraph, Z, P) -> ClusterQualityReport:
    labels = getattr(assignment, "labels", assignment)
    sil, degenerate = silhouette(Z, labels)
    return ClusterQualityReport(
        modularity=modularity(labels, graph),
        silhouette=sil,
        motif_coherence=motif_coherence(P, labels),
        silhouette_degenerate=degenerate,
    )
