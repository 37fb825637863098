"""Entity-level modulation of cluster hazards."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..core import AgentProfile, InteractionGraph, StateSpace
from .memory import AgentMemory

__all__ = [
    "M_NBR_BOUNDS",
    "EntityHazard",
    "driver_fractions",
    "cluster_mean_fractions",
    "neighborhood_multipliers",
    "modulate",
    "modulate_batch",
]

log = logging.getLogger(__name__)

M_NBR_BOUNDS = (0.1, 10.0)
_warned_missing: set = set()


@dataclass(frozen=True)
class EntityHazard:
    """Individual hazards over the outgoing transitions of ``state``."""

    state: int
    transitions: tuple[int, ...]
    hazards: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.hazards, float)
        if np.any(~np.isfinite(h)) or np.any(h < 0) or np.any(h > 1):
            raise ValueError("entity hazards must be finite and lie in [0, 1]")


def driver_fractions(graph: InteractionGraph, states, state_space: StateSpace, nbr_counts=None) -> np.ndarray:
    """Fraction of each agent's neighbours in the driver states, per transition.

    Returns an ``(n, n_transitions)`` array; columns of transitions that are
    not contact-driven are zero.
    """
    states = np.asarray(states, dtype=np.int64)
    if nbr_counts is None:
        onehot = np.zeros((graph.n, state_space.n_states))
        onehot[np.arange(graph.n), states] = 1.0
        nbr_counts = np.asarray(graph.adjacency @ onehot)
    deg = nbr_counts.sum(axis=1)
    safe = np.where(deg > 0, deg, 1.0)
    out = np.zeros((graph.n, state_space.n_transitions))
    for k, tr in enumerate(state_space.transitions):
        drivers = state_space.contact_driven.get(tr)
        if drivers:
            idx = [state_space.index(s) for s in drivers]
            out[:, k] = nbr_counts[:, idx].sum(axis=1) / safe
    return out


def cluster_mean_fractions(frac, states, labels, state_space: StateSpace, K: int) -> np.ndarray:
    """Mean driver fraction over each cluster's at-risk members, ``(K, n_transitions)``."""
    states = np.asarray(states, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    origin = state_space.origin_of
    out = np.zeros((K, state_space.n_transitions))
    for k, tr in enumerate(state_space.transitions):
        if not state_space.contact_driven.get(tr):
            continue
        risk = states == origin[k]
        tot = np.bincount(labels[risk], weights=frac[risk, k], minlength=K)
        cnt = np.bincount(labels[risk], minlength=K)
        out[:, k] = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
    return out


def _multiplier(f, mean):
    f = np.asarray(f, float)
    mean = np.asarray(mean, float)
    ratio = np.where(mean > 0, f / np.where(mean > 0, mean, 1.0), 0.0)
    m = np.clip(ratio, *M_NBR_BOUNDS)
    return np.where(f > 0, m, 0.0)


def neighborhood_multipliers(frac, labels, cluster_means, state_space: StateSpace) -> np.ndarray:
    """``m_nbr`` per agent and transition: own/cluster-mean driver fraction, clamped.

    Agents with no driver neighbours get 0; non-contact transitions get 1.
    """
    labels = np.asarray(labels, dtype=np.int64)
    out = np.ones_like(frac)
    for k, tr in enumerate(state_space.transitions):
        if state_space.contact_driven.get(tr):
            out[:, k] = _multiplier(frac[:, k], cluster_means[labels, k])
    return out


def modulate_batch(lam, modifiers, m_nbr, streak, outgoing_mask, delta: float = 0.0) -> np.ndarray:
    """Vectorised entity hazards ``clamp(lam * m_profile * m_nbr * (1 - delta)^streak, 0, 1)``.

    All arrays are ``(n, n_transitions)`` except ``streak`` (``(n,)``);
    columns outside ``outgoing_mask`` are zeroed.
    """
    damp = (1.0 - delta) ** np.asarray(streak, float)
    h = lam * modifiers * m_nbr * damp[:, None]
    h = np.clip(h, 0.0, 1.0)
    return np.where(outgoing_mask, h, 0.0)


def modulate(
    lam_k,
    profile: AgentProfile,
    memory: AgentMemory | None,
    neighbor_counts,
    cluster_mean_fraction,
    state_space: StateSpace,
    state: int,
    delta: float = 0.0,
) -> EntityHazard:
    """Individual hazards of one agent in ``state``.

    Parameters
    ----------
    lam_k : ndarray, shape (n_transitions,)
        Fused hazards of the agent's cluster.
    neighbor_counts : ndarray, shape (n_states,)
        Neighbour counts per state.
    cluster_mean_fraction : ndarray, shape (n_transitions,)
        Cluster mean driver fraction over at-risk members.
    """
    lam_k = np.asarray(lam_k, float)
    idx = tuple(state_space.outgoing(int(state)))
    labels = state_space.transition_labels()
    counts = np.asarray(neighbor_counts, float)
    deg = counts.sum()
    streak = memory.stay_streak(int(state)) if memory is not None else 0
    damp = (1.0 - delta) ** float(streak)
    out = np.zeros(len(idx))
    for j, k in enumerate(idx):
        mod = profile.susceptibility_modifiers.get(labels[k])
        if mod is None:
            key = (profile.id, labels[k])
            if key not in _warned_missing:
                _warned_missing.add(key)
                log.warning("agent %d has no modifier for %s; using 1", profile.id, labels[k])
            mod = 1.0
        drivers = state_space.contact_driven.get(state_space.transitions[k])
        m = 1.0
        if drivers:
            f = sum(counts[state_space.index(s)] for s in drivers) / deg if deg > 0 else 0.0
            m = float(_multiplier(f, cluster_mean_fraction[k]))
        out[j] = min(max(lam_k[k] * mod * m * damp, 0.0), 1.0)
    return EntityHazard(state=int(state), transitions=idx, hazards=out)
