"""Stage 3/4: hybrid representation and average-linkage clustering."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .types import ClusterAssignment, canonical_labels

__all__ = ["fuse_embeddings", "fuse_and_cluster", "linkage_trace", "check_mixture", "mixture_grid"]


def check_mixture(mixture, tol: float = 1e-9) -> tuple[float, float, float]:
    a, b, g = (float(x) for x in mixture)
    if min(a, b, g) < 0 or abs(a + b + g - 1.0) > tol:
        raise ValueError(f"mixture {mixture} is not on the simplex")
    return a, b, g


def _pad(M: np.ndarray, width: int) -> np.ndarray:
    if M.shape[1] == width:
        return M
    out = np.zeros((M.shape[0], width))
    out[:, : M.shape[1]] = M
    return out


def fuse_embeddings(H, f, P, mixture) -> np.ndarray:
    """``Z = alpha H + beta f + gamma P`` after zero-padding to a common width.

    ``f`` is L2-normalised row-wise first so that its scale matches ``H``.
    """
    a, b, g = check_mixture(mixture)
    H, P = np.asarray(H, float), np.asarray(P, float)
    f = np.asarray(f, float)
    nf = np.linalg.norm(f, axis=1, keepdims=True)
    f = np.divide(f, nf, out=np.zeros_like(f), where=nf > 0)
    width = max(H.shape[1], f.shape[1], P.shape[1])
    return a * _pad(H, width) + b * _pad(f, width) + g * _pad(P, width)


def linkage_trace(Z) -> np.ndarray:
    """Average-linkage merge table over Euclidean distance (scipy format)."""
    return linkage(np.asarray(Z, float), method="average", metric="euclidean")


def fuse_and_cluster(H, f, P, mixture, K_final: int | None = None, cutoff: float | None = None) -> ClusterAssignment:
    """Agglomerative clustering of the fused representation.

    Exactly one of ``K_final`` (number of clusters) or ``cutoff`` (cophenetic
    distance threshold) must be given.
    """
    Z = fuse_embeddings(H, f, P, mixture)
    n = len(Z)
    if (K_final is None) == (cutoff is None):
        raise ValueError("give exactly one of K_final or cutoff")
    if K_final is not None and not 1 <= K_final <= n:
        raise ValueError(f"K_final must be in [1, {n}]")
    if n == 1:
        return ClusterAssignment(labels=np.zeros(1, dtype=np.int64))
    tree = linkage_trace(Z)
    if K_final is not None:
        raw = fcluster(tree, t=K_final, criterion="maxclust")
    else:
        raw = fcluster(tree, t=cutoff, criterion="distance")
    return ClusterAssignment(labels=canonical_labels(raw))


def mixture_grid(step: float = 0.25):
    """All simplex points on a regular grid with spacing ``step``."""
    m = int(round(1 / step))
    for i, j in itertools.product(range(m + 1), repeat=2):
        if i + j <= m:
            yield (i / m, j / m, (m - i - j) / m)
