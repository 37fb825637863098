from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StructuralEmbedding",
    "MotifProfile",
    "DominantProfile",
    "AnchorJudgment",
    "RefinedRepresentation",
    "ClusterAssignment",
    "ClusterQualityReport",
    "canonical_labels",
]


def canonical_labels(labels) -> np.ndarray:
    """Relabel to ``0..K-1`` in order of first appearance by agent id."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


@dataclass(frozen=True)
class StructuralEmbedding:
    H: np.ndarray
    layers: int

    @property
    def width(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class MotifProfile:
    P: np.ndarray
    descriptors: tuple[str, ...]
    centroids: np.ndarray

    def __post_init__(self):
        if self.P.shape[1] < 2:
            raise ValueError("need at least 2 motifs")
        if not np.all(np.isfinite(self.P)):
            raise ValueError("motif profile has non-finite entries")

    @property
    def n_motifs(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True)
class DominantProfile:
    D: np.ndarray

    @classmethod
    def from_assignment(cls, labels, P) -> "DominantProfile":
        labels = np.asarray(labels)
        K = int(labels.max()) + 1
        D = np.zeros((K, P.shape[1]))
        for k in range(K):
            members = labels == k
            if not members.any():
                raise ValueError(f"cluster {k} is empty")
            D[k] = P[members].mean(axis=0)
        return cls(D=D)


@dataclass(frozen=True)
class AnchorJudgment:
    """Soft compatibility judgments; ``q[j, i]`` is agent ``j`` against anchor ``i``."""

    q: np.ndarray
    fallback: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.q < 0) or np.any(self.q > 1):
            raise ValueError("judgments must lie in [0, 1]")


@dataclass(frozen=True)
class RefinedRepresentation:
    f: np.ndarray
    W: np.ndarray
    tau: float
    lambda_align: float
    loss_history: tuple[float, ...] = ()
    mixture: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    anchors: tuple[int, ...] = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        K = int(labels.max()) + 1 if len(labels) else 0
        counts = np.bincount(labels, minlength=K)
        if np.any(counts == 0):
            raise ValueError("every cluster must be non-empty")
        if self.anchors:
            if len(self.anchors) != K:
                raise ValueError("one anchor per cluster required")
            for k, a in enumerate(self.anchors):
                if labels[a] != k:
                    raise ValueError(f"anchor {a} is not a member of cluster {k}")

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


@dataclass(frozen=True)
class ClusterQualityReport:
    modularity: float
    silhouette: float
    motif_coherence: float
    silhouette_degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "modularity": self.modularity,
            "silhouette": self.silhouette,
            "motif_coherence": self.motif_coherence,
            "silhouette_degenerate": self.silhouette_degenerate,
        }
