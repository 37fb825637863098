"""Stage 2: diagnostic probes, behavioural motifs, anchors and judgments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
from sklearn.cluster import KMeans

from ..core import Population
from .types import DominantProfile, MotifProfile

__all__ = [
    "ProbeScenario",
    "RESPONSE_DIMENSIONS",
    "BehaviorBackend",
    "OracleBehaviorBackend",
    "default_probes",
    "run_diagnostic_scenarios",
    "extract_motifs",
    "select_anchors",
    "anchor_judgment",
    "oracle_judgments",
    "JUDGMENT_KAPPA",
]

log = logging.getLogger(__name__)

RESPONSE_DIMENSIONS = ("contact_reduction", "isolation_intensity", "compliance")
JUDGMENT_KAPPA = 4.0

# per-context weight on each response dimension
_CONTEXT_WEIGHTS = {
    "home": (0.3, 0.7, 0.2),
    "work": (0.6, 0.3, 1.0),
    "community": (1.0, 1.0, 0.5),
}


@dataclass(frozen=True)
class ProbeScenario:
    name: str
    context: str = "community"
    params: Mapping[str, float] = field(default_factory=dict)


def default_probes() -> list[ProbeScenario]:
    """Nine probes: three contexts crossed with calm / announcement / lockdown."""
    regimes = {
        "calm": {"perceived_risk": 0.2, "stringency": 0.1},
        "announcement": {"perceived_risk": 0.6, "stringency": 0.5},
        "lockdown": {"perceived_risk": 0.9, "stringency": 0.9},
    }
    return [
        ProbeScenario(name=f"{ctx}_{reg}", context=ctx, params=p)
        for reg, p in regimes.items()
        for ctx in ("home", "work", "community")
    ]


class BehaviorBackend(Protocol):
    def respond(self, population: Population, scenario: ProbeScenario) -> np.ndarray:
        """``(n, len(RESPONSE_DIMENSIONS))`` responses in ``[-1, 1]``."""


class OracleBehaviorBackend:
    """Deterministic rule table mapping traits and probe context to responses.

    ``contact_reduction`` depends on ``risk_aversion``, ``isolation_intensity``
    on ``sociability`` and ``compliance`` on the ``compliance`` trait; each is
    scaled by context weights and squashed with ``tanh``. Agents whose
    susceptibility modifiers are all zero never respond.
    """

    def __init__(self, gain: float = 3.0):
        self.gain = gain

    def respond(self, population: Population, scenario: ProbeScenario) -> np.ndarray:
        n = population.n

        def trait(name):
            if name in population.attribute_names:
                return population.attribute(name)
            return np.full(n, 0.5)

        risk = scenario.params.get("perceived_risk", 0.5)
        stringency = scenario.params.get("stringency", 0.5)
        wc, wi, wp = _CONTEXT_WEIGHTS.get(scenario.context, (1.0, 1.0, 1.0))
        g = self.gain
        contact = np.tanh(g * wc * ((trait("risk_aversion") - 0.5) + 0.5 * (risk - 0.5)))
        isolation = np.tanh(g * wi * ((0.5 - trait("sociability")) + 0.5 * (risk - 0.5)))
        comply = np.tanh(g * wp * ((trait("compliance") - 0.5) + 0.5 * (stringency - 0.5)))
        out = np.column_stack([contact, isolation, comply])
        responsive = np.any(population.modifiers > 0, axis=1) if population.modifiers.size else np.ones(n, bool)
        out[~responsive] = 0.0
        return out


def run_diagnostic_scenarios(population: Population, scenarios: Sequence[ProbeScenario], backend=None) -> np.ndarray:
    """Collect per-agent, per-probe response vectors, shape ``(n, S, R)``."""
    if not scenarios:
        raise ValueError("at least one diagnostic scenario is required")
    backend = backend or OracleBehaviorBackend()
    blocks = []
    for sc in scenarios:
        r = np.asarray(backend.respond(population, sc), dtype=float)
        if r.shape[0] != population.n:
            raise RuntimeError(f"backend answered {r.shape[0]} of {population.n} agents for {sc.name!r}")
        blocks.append(np.clip(r, -1.0, 1.0))
    return np.stack(blocks, axis=1)


def _describe(centroid: np.ndarray) -> str:
    order = np.argsort(-np.abs(centroid), kind="stable")[:2]
    parts = [("+" if centroid[k] >= 0 else "-") + RESPONSE_DIMENSIONS[k] for k in order if k < len(RESPONSE_DIMENSIONS)]
    return "/".join(parts) if parts else "null"


def extract_motifs(responses: np.ndarray, K_m: int, seed: int = 0) -> MotifProfile:
    """Cluster pooled responses into ``K_m`` motifs and profile each agent.

    ``P[j, k]`` is the mean projection of agent ``j``'s responses onto the
    unit direction of centroid ``k``, signed by the sign of the centroid's
    largest-magnitude coordinate and divided by ``sqrt(R)`` so it lies in
    ``[-1, 1]``.
    """
    n, S, R = responses.shape
    if K_m < 2:
        raise ValueError("K_m must be >= 2")
    pooled = responses.reshape(n * S, R)
    distinct = len(np.unique(np.round(pooled, 12), axis=0))
    if distinct < K_m:
        raise ValueError(f"only {distinct} distinct responses for K_m={K_m} motifs")
    km = KMeans(n_clusters=K_m, n_init=10, random_state=seed % (2**32)).fit(pooled)
    C = km.cluster_centers_
    # order motifs deterministically by centroid coordinates
    order = np.lexsort(C.T[::-1])
    C = C[order]
    norms = np.linalg.norm(C, axis=1)
    dirs = np.divide(C, norms[:, None], out=np.zeros_like(C), where=norms[:, None] > 1e-12)
    dominant = np.argmax(np.abs(C), axis=1)
    signs = np.where(C[np.arange(K_m), dominant] >= 0, 1.0, -1.0)
    proj = np.einsum("nsr,kr->nk", responses, dirs) / S
    P = np.clip(signs[None, :] * proj / np.sqrt(R), -1.0, 1.0)
    return MotifProfile(P=P, descriptors=tuple(_describe(c) for c in C), centroids=C)


def select_anchors(labels, P: np.ndarray, D: DominantProfile | None = None) -> tuple[int, ...]:
    """Per cluster, the member closest to the dominant profile (lowest id on ties)."""
    labels = np.asarray(labels)
    if D is None:
        D = DominantProfile.from_assignment(labels, P)
    anchors = []
    for k in range(D.D.shape[0]):
        members = np.flatnonzero(labels == k)
        if len(members) == 0:
            raise ValueError(f"cluster {k} is empty")
        dist = np.linalg.norm(P[members] - D.D[k], axis=1)
        anchors.append(int(members[np.argmin(dist)]))
    return tuple(anchors)


def _cos(a, b) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def anchor_judgment(anchor_profile, agent_profile, context_summaries=None, backend=None) -> float:
    """Regime-compatibility judgment in ``[0, 1]``.

    The rule oracle returns ``logistic(4 * cos(P_anchor, P_agent))``. A remote
    backend must expose ``judge(anchor_profile, agent_profile, context)``; its
    value is clamped to ``[0, 1]`` and replaced by the oracle value on failure.
    """
    a = np.asarray(anchor_profile, dtype=float)
    b = np.asarray(agent_profile, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("profiles must be finite")
    oracle = 1.0 / (1.0 + np.exp(-JUDGMENT_KAPPA * _cos(a, b)))
    if backend is None:
        return float(oracle)
    try:
        value = float(backend.judge(a, b, context_summaries))
    except Exception as exc:  # fallback contract: log and use the oracle value
        log.warning("anchor judgment fell back to oracle: %s", exc)
        return float(oracle)
    return float(min(max(value, 0.0), 1.0))


def oracle_judgments(P: np.ndarray, anchors: Sequence[int]) -> np.ndarray:
    """Vectorised oracle judgments, shape ``(n, K)``."""
    norms = np.linalg.norm(P, axis=1)
    U = np.divide(P, norms[:, None], out=np.zeros_like(P), where=norms[:, None] > 0)
    cos = U @ U[list(anchors)].T
    return 1.0 / (1.0 + np.exp(-JUDGMENT_KAPPA * cos))
