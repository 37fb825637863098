"""Cluster-level regime context: state composition, exogenous and neighbour summaries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..core import InteractionGraph

__all__ = [
    "ClusterContext",
    "ClusterGraph",
    "cluster_graph",
    "trailing_mean",
    "assemble_context",
    "assemble_contexts",
]

TRAILING_DAYS = 7


@dataclass(frozen=True)
class ClusterContext:
    """Regime summary for one cluster at one day.

    ``psi`` maps series name to ``(value_t, trailing 7-day mean)``;
    ``psi_nbr`` holds the edge-weighted mean composition of adjacent
    clusters and the fraction of member edge endpoints leaving the cluster.
    """

    cluster_id: int
    t: int
    phi: np.ndarray
    psi: Mapping[str, tuple[float, float]]
    psi_nbr_phi: np.ndarray
    psi_nbr_edge_fraction: float
    size: int
    neighbor_ids: tuple[int, ...] = ()
    states: tuple[str, ...] = field(default=())

    def __post_init__(self):
        phi = np.asarray(self.phi, float)
        if np.any(phi < -1e-12) or np.any(phi > 1 + 1e-12) or abs(phi.sum() - 1.0) > 1e-9:
            raise ValueError(f"phi must be a distribution, got {phi}")
        for name, (v, m) in self.psi.items():
            if not (np.isfinite(v) and np.isfinite(m)):
                raise ValueError(f"exogenous summary {name!r} is not finite")

    def phi_of(self, state: str) -> float:
        return float(self.phi[self.states.index(state)])

    def nbr_phi_of(self, state: str) -> float:
        return float(self.psi_nbr_phi[self.states.index(state)])

    @property
    def exogenous_change(self) -> float:
        """Sum over series of ``|value_t - trailing mean|``."""
        return float(sum(abs(v - m) for v, m in self.psi.values()))

    @property
    def phi_entropy(self) -> float:
        p = self.phi[self.phi > 0]
        return float(-np.sum(p * np.log(p)))


@dataclass(frozen=True)
class ClusterGraph:
    """Inter-cluster edge counts ``E[k, l]`` and member endpoint totals."""

    E: np.ndarray
    endpoints: np.ndarray

    @property
    def K(self) -> int:
        return self.E.shape[0]


def cluster_graph(graph: InteractionGraph, labels) -> ClusterGraph:
    labels = np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) + 1
    coo = graph.adjacency.tocoo()
    E = np.zeros((K, K))
    # each undirected edge appears twice in the symmetric adjacency
    np.add.at(E, (labels[coo.row], labels[coo.col]), 1.0)
    np.fill_diagonal(E, np.diag(E) / 2.0)
    endpoints = np.bincount(labels, weights=graph.degree.astype(float), minlength=K)
    return ClusterGraph(E=E, endpoints=endpoints)


def trailing_mean(values, t: int, window: int = TRAILING_DAYS) -> float:
    """Mean over ``[t - window + 1, t]``, padding with the first value before day 0."""
    values = np.asarray(values, float)
    lo = t - window + 1
    if lo >= 0:
        return float(values[lo : t + 1].mean())
    pad = -lo
    return float((pad * values[0] + values[: t + 1].sum()) / window)


def _phi_matrix(labels, states, n_states, K) -> np.ndarray:
    counts = np.zeros((K, n_states))
    np.add.at(counts, (labels, states), 1.0)
    sizes = counts.sum(axis=1, keepdims=True)
    if np.any(sizes == 0):
        raise ValueError("empty cluster")
    return counts / sizes


def assemble_contexts(
    labels,
    states,
    state_labels: Sequence[str],
    exogenous: np.ndarray,
    exo_names: Sequence[str],
    cgraph: ClusterGraph,
    t: int,
) -> list[ClusterContext]:
    """Contexts for every cluster at day ``t`` (vectorised over clusters).

    ``exogenous`` is ``(T, n_series)``; only rows ``<= t`` are read.
    """
    labels = np.asarray(labels, dtype=np.int64)
    states = np.asarray(states, dtype=np.int64)
    K = cgraph.K
    n_states = len(state_labels)
    exogenous = np.asarray(exogenous, float).reshape(len(exogenous), -1) if len(exo_names) else np.zeros((t + 1, 0))
    if len(exo_names) and not 0 <= t < len(exogenous):
        raise ValueError(f"day {t} outside the scenario span")
    phi = _phi_matrix(labels, states, n_states, K)
    sizes = np.bincount(labels, minlength=K)
    psi = {
        name: (float(exogenous[t, c]), trailing_mean(exogenous[: t + 1, c], t))
        for c, name in enumerate(exo_names)
    }
    out = []
    for k in range(K):
        w = cgraph.E[k].copy()
        w[k] = 0.0
        cross = w.sum()
        nbr_phi = (w @ phi) / cross if cross > 0 else np.zeros(n_states)
        frac = cross / cgraph.endpoints[k] if cgraph.endpoints[k] > 0 else 0.0
        out.append(
            ClusterContext(
                cluster_id=k,
                t=t,
                phi=phi[k],
                psi=psi,
                psi_nbr_phi=nbr_phi,
                psi_nbr_edge_fraction=float(frac),
                size=int(sizes[k]),
                neighbor_ids=tuple(int(x) for x in np.flatnonzero(w > 0)),
                states=tuple(state_labels),
            )
        )
    return out


def assemble_context(
    members,
    states,
    state_labels: Sequence[str],
    exogenous: np.ndarray,
    exo_names: Sequence[str],
    graph: InteractionGraph,
    labels,
    t: int,
) -> ClusterContext:
    """Context for the cluster containing ``members`` (single-cluster form)."""
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        raise ValueError("empty cluster")
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels[members[0]])
    if np.any(labels[members] != k):
        raise ValueError("members span more than one cluster")
    ctxs = assemble_contexts(labels, states, state_labels, exogenous, exo_names, cluster_graph(graph, labels), t)
    return ctxs[k]
