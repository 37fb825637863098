"""Stage 4: motif-guided boundary reassignment and merge/split control."""

from __future__ import annotations

import logging

import numpy as np
from scipy.cluster.hierarchy import DisjointSet
from scipy.special import softmax
from sklearn.cluster import KMeans

from ..core import InteractionGraph
from .types import ClusterAssignment, DominantProfile, canonical_labels

__all__ = [
    "boundary_agents",
    "pull_scores",
    "boundary_reassign",
    "js_divergence",
    "profile_entropy",
    "profile_distribution",
    "merge_split",
]

log = logging.getLogger(__name__)


def _labels(assignment) -> np.ndarray:
    return np.asarray(getattr(assignment, "labels", assignment), dtype=np.int64)


def boundary_agents(labels, Z, boundary_fraction: float = 0.1) -> np.ndarray:
    """Agents whose two nearest cluster centroids in ``Z`` are nearly equidistant.

    An agent is on the boundary when ``(d2 - d1) / d2 < boundary_fraction``
    with ``d1 <= d2`` the two smallest centroid distances.
    """
    if not 0 < boundary_fraction <= 1:
        raise ValueError("boundary_fraction must lie in (0, 1]")
    labels = np.asarray(labels)
    Z = np.asarray(Z, float)
    K = int(labels.max()) + 1
    if K < 2:
        return np.zeros(len(labels), dtype=bool)
    C = np.vstack([Z[labels == k].mean(axis=0) for k in range(K)])
    dist = np.linalg.norm(Z[:, None, :] - C[None, :, :], axis=2)
    two = np.sort(dist, axis=1)[:, :2]
    d1, d2 = two[:, 0], two[:, 1]
    margin = np.divide(d2 - d1, d2, out=np.zeros_like(d2), where=d2 > 0)
    return margin < boundary_fraction


def pull_scores(labels, P, D, graph: InteractionGraph) -> np.ndarray:
    """``pull[j, i] = cos(P_j, D_i) * conn(j, C_i)``, shape ``(n, K)``.

    ``conn(j, C_i)`` is the fraction of ``j``'s adjacency neighbours in
    cluster ``i``; isolated agents have zero pull everywhere.
    """
    labels = np.asarray(labels)
    P = np.asarray(P, float)
    D = getattr(D, "D", D)
    K = D.shape[0]
    onehot = np.zeros((len(labels), K))
    onehot[np.arange(len(labels)), labels] = 1.0
    counts = np.asarray(graph.adjacency @ onehot)
    deg = graph.degree.astype(float)
    conn = np.divide(counts, deg[:, None], out=np.zeros_like(counts), where=deg[:, None] > 0)
    pn = np.linalg.norm(P, axis=1, keepdims=True)
    dn = np.linalg.norm(D, axis=1, keepdims=True)
    Pu = np.divide(P, pn, out=np.zeros_like(P), where=pn > 0)
    Du = np.divide(D, dn, out=np.zeros_like(D), where=dn > 0)
    return (Pu @ Du.T) * conn


def boundary_reassign(
    assignment,
    P,
    D,
    graph: InteractionGraph,
    boundary_fraction: float = 0.1,
    Z=None,
) -> ClusterAssignment:
    """Move boundary agents to the cluster with the highest pull.

    Boundary detection uses ``Z`` (defaults to ``P``). Pulls are computed
    once from the incoming labels; moves are applied in agent-id order and a
    move that would empty its source cluster is skipped. Ties keep the
    current label. Anchors are not carried over.
    """
    labels = _labels(assignment).copy()
    if D is None:
        D = DominantProfile.from_assignment(labels, P)
    Z = P if Z is None else Z
    boundary = boundary_agents(labels, Z, boundary_fraction)
    pull = pull_scores(labels, P, D, graph)
    sizes = np.bincount(labels, minlength=pull.shape[1])
    for j in np.flatnonzero(boundary):
        cur = labels[j]
        best = int(np.argmax(pull[j]))
        if pull[j, best] <= pull[j, cur]:
            continue
        if sizes[cur] <= 1:
            log.info("skipped moving agent %d: cluster %d would become empty", j, cur)
            continue
        sizes[cur] -= 1
        sizes[best] += 1
        labels[j] = best
    return ClusterAssignment(labels=labels)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits between two distributions."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def profile_entropy(d) -> float:
    """Shannon entropy in bits of ``|d|`` after L1 normalisation."""
    a = np.abs(np.asarray(d, float))
    s = a.sum()
    if s == 0:
        return float(np.log2(len(a)))
    p = a / s
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def profile_distribution(row, temperature: float = 0.1) -> np.ndarray:
    """Signed profile as a distribution: ``softmax([d, -d] / temperature)``.

    Keeping both signs stops mirror-image regimes from looking identical,
    and the temperature spreads profiles whose entries are all well below 1.
    """
    row = np.asarray(row, float)
    return softmax(np.concatenate([row, -row]) / temperature)


def _dominant(labels, P, K) -> np.ndarray:
    return np.vstack([P[labels == k].mean(axis=0) for k in range(K)])


def merge_split(
    assignment,
    P,
    D=None,
    theta_merge: float = 0.05,
    theta_split: float | None = None,
    seed: int = 0,
    temperature: float = 0.1,
) -> ClusterAssignment:
    """One merge pass and one split pass.

    Merging takes the transitive closure of all cluster pairs whose dominant
    profiles (see ``profile_distribution``) have JS divergence below
    ``theta_merge``; the smallest id in a component wins. Splitting applies
    2-means to clusters whose dominant-profile entropy exceeds
    ``theta_split`` (default ``0.9 * log2(K_m)``). A split is kept only if
    both halves are non-empty, have entropy at most ``theta_split`` and sit
    at least ``theta_merge`` from each other and from every other cluster,
    which makes an immediate re-run a no-op.
    """
    if theta_merge < 0:
        raise ValueError("theta_merge must be >= 0")
    P = np.asarray(P, float)
    labels = _labels(assignment).copy()
    K_m = P.shape[1]
    if theta_split is None:
        theta_split = 0.9 * np.log2(K_m)
    if theta_split < 0:
        raise ValueError("theta_split must be >= 0")
    K = int(labels.max()) + 1

    def _d(row):
        return profile_distribution(row, temperature)

    Dm = _dominant(labels, P, K) if D is None else np.asarray(getattr(D, "D", D), float)
    dists = [_d(r) for r in Dm]
    sizes = np.bincount(labels, minlength=K).astype(float)

    # merge pass: closure over the pairwise JS graph
    ds = DisjointSet(range(K))
    changed = True
    while changed:
        changed = False
        groups = sorted({min(ds.subset(k)) for k in range(K)})
        if len(groups) < 2:
            break
        prof = {}
        for g in groups:
            ms = sorted(ds.subset(g))
            prof[g] = dists[g] if len(ms) == 1 else _d(np.average(Dm[ms], axis=0, weights=sizes[ms]))
        for a_i, a in enumerate(groups):
            for b in groups[a_i + 1 :]:
                if ds.connected(a, b):
                    continue
                if js_divergence(prof[a], prof[b]) < theta_merge:
                    ds.merge(a, b)
                    changed = True
    root = np.array([min(ds.subset(k)) for k in range(K)])
    labels = canonical_labels(root[labels])
    merged_from = {int(k) for k in range(K) if len(ds.subset(k)) > 1}

    # split pass
    K = int(labels.max()) + 1
    current = [_d(P[labels == k].mean(axis=0)) for k in range(K)]
    next_label = K
    for k in range(K):
        idx = np.flatnonzero(labels == k)
        if len(idx) < 2:
            continue
        if profile_entropy(P[idx].mean(axis=0)) <= theta_split:
            continue
        sub = P[idx]
        if np.allclose(sub, sub[0]):
            continue
        halves = KMeans(n_clusters=2, n_init=10, random_state=seed % (2**32)).fit_predict(sub)
        if halves.min() == halves.max():
            continue
        A, B = idx[halves == 0], idx[halves == 1]
        pa, pb = P[A].mean(axis=0), P[B].mean(axis=0)
        if max(profile_entropy(pa), profile_entropy(pb)) > theta_split:
            continue
        da, db = _d(pa), _d(pb)
        if js_divergence(da, db) < theta_merge:
            continue
        others = [current[o] for o in range(len(current)) if o != k]
        if any(js_divergence(x, o) < theta_merge for x in (da, db) for o in others):
            continue
        labels[B] = next_label
        current[k] = da
        current.append(db)
        next_label += 1
    if merged_from:
        log.debug("merged clusters %s", sorted(merged_from))
    return ClusterAssignment(labels=canonical_labels(labels))
