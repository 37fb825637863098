"""Simulation state, hazard pathways and the synchronous step."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import rng as _rng
from ..core import InteractionGraph, Population, StateSpace
from ..fusion import FUSION_MODES, fuse_mode
from ..neural import FeatureManifest, HazardRegressor, assemble_features, predict_hazards
from ..symbolic.context import ClusterContext, cluster_graph, assemble_contexts
from ..symbolic.cost import CostLedger
from ..symbolic.oracle import RuleTable, SymbolicHazardEstimate, oracle_hazards
from ..symbolic.remote import AgentTeamConfig, ClientConfig, RemoteFlags, remote_hazards_batch
from .memory import AgentMemory
from .modulate import (
    cluster_mean_fractions,
    driver_fractions,
    modulate,
    modulate_batch,
    neighborhood_multipliers,
)
from .sampler import SAMPLERS, sample_competing, sample_transition

__all__ = [
    "PATHWAYS",
    "World",
    "NeuralPathway",
    "RemoteSetup",
    "PathwayConfig",
    "ClusterHazards",
    "StepRecord",
    "SimulationRun",
    "make_world",
    "phi_matrix",
    "cluster_stats",
    "strip_regime",
    "cluster_hazards",
    "agent_hazards",
    "step",
    "simulate",
]

PATHWAYS = ("oracle", "remote", "neural", "fused")


def phi_matrix(states, labels, n_states: int, K: int) -> np.ndarray:
    """State composition ``(K, n_states)`` of every cluster."""
    counts = np.zeros((K, n_states))
    np.add.at(counts, (np.asarray(labels, dtype=np.int64), np.asarray(states, dtype=np.int64)), 1.0)
    return counts / np.maximum(counts.sum(axis=1, keepdims=True), 1.0)


def cluster_stats(graph: InteractionGraph, labels, embedding=None, K: int | None = None):
    """Per-cluster degree statistics ``(K, 4)`` and mean embedding ``(K, d_H)``."""
    labels = np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) + 1 if K is None else K
    deg = graph.degree.astype(float)
    stats = np.zeros((K, 4))
    d_H = 0 if embedding is None else np.asarray(embedding).shape[1]
    emb = np.zeros((K, d_H))
    for k in range(K):
        m = labels == k
        d = deg[m]
        stats[k] = [d.mean(), d.std(), d.min(), d.max()]
        if d_H:
            emb[k] = np.asarray(embedding)[m].mean(axis=0)
    return stats, emb


@dataclass
class World:
    """Everything the step reads: static structure plus the state at day ``t``.

    ``phi_history`` maps day to the ``(K, n_states)`` composition and holds
    every day the neural pathway may need.
    """

    state_space: StateSpace
    graph: InteractionGraph
    population: Population
    labels: np.ndarray
    exogenous: np.ndarray
    exo_names: tuple[str, ...]
    states: np.ndarray
    t: int
    memories: list = field(default_factory=list)
    phi_history: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list, repr=False)
    cgraph: object = None

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1


def make_world(
    state_space, graph, population, labels, exogenous, exo_names, states, t: int, memory_k: int = 7, phi_history=None, profiles=None
) -> World:
    labels = np.asarray(labels, dtype=np.int64)
    states = np.asarray(states, dtype=np.int64).copy()
    exogenous = np.asarray(exogenous, float).reshape(len(exogenous), -1)
    K = int(labels.max()) + 1
    if np.any(np.bincount(labels, minlength=K) == 0):
        raise ValueError("cluster labels must be dense (no empty clusters)")
    hist = dict(phi_history or {})
    hist[t] = phi_matrix(states, labels, state_space.n_states, K)
    if profiles is None:
        profiles = [population.profile(i, state_space) for i in range(graph.n)]
    return World(
        state_space=state_space,
        graph=graph,
        population=population,
        labels=labels,
        exogenous=exogenous,
        exo_names=tuple(exo_names),
        states=states,
        t=int(t),
        memories=[AgentMemory(memory_k) for _ in range(graph.n)],
        phi_history=hist,
        profiles=profiles,
        cgraph=cluster_graph(graph, labels),
    )


@dataclass
class NeuralPathway:
    """A fitted regressor with the per-cluster constants its features need."""

    model: HazardRegressor
    manifest: FeatureManifest
    degree_stats: np.ndarray
    cluster_embedding: np.ndarray

    def predict(self, phi_history: dict, exogenous: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
        lo = t - self.manifest.window + 1
        if any(d not in phi_history for d in range(lo, t + 1)):
            raise ValueError(f"neural features for day {t} need compositions from day {lo}")
        hist = np.stack([phi_history[d] for d in range(lo, t + 1)])
        X = assemble_features(hist, exogenous[lo : t + 1], self.manifest.window - 1, self.degree_stats,
                              self.cluster_embedding, self.manifest)
        return predict_hazards(self.model, X)


@dataclass
class RemoteSetup:
    config: ClientConfig
    transport: object = None
    templates: dict | None = None
    sleep: object = time.sleep
    flags: RemoteFlags = field(default_factory=RemoteFlags)


@dataclass(frozen=True)
class PathwayConfig:
    """How cluster hazards are produced and realised.

    ``pathway`` selects the hazard source: ``oracle`` or ``remote`` alone,
    ``neural`` alone, or ``fused`` (symbolic from ``symbolic_backend`` plus
    neural, combined under ``fusion_mode``).
    """

    pathway: str = "oracle"
    rules: RuleTable | None = None
    symbolic_backend: str = "oracle"
    fusion_mode: str = "default_reciprocal"
    neural: NeuralPathway | None = None
    calibrator: object = None
    remote: RemoteSetup | None = None
    team: AgentTeamConfig | None = None
    ledger: CostLedger | None = None
    sampler: str = "exponential"
    delta: float = 0.0
    realization: str = "agent"
    seed: int = 0
    replicate: int = 0
    stream: int = _rng.STREAM_SAMPLER

    def __post_init__(self):
        if self.pathway not in PATHWAYS:
            raise ValueError(f"unknown pathway {self.pathway!r}")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.realization not in ("agent", "vectorized"):
            raise ValueError(f"unknown realization {self.realization!r}")
        if self.symbolic_backend not in ("oracle", "remote"):
            raise ValueError(f"unknown symbolic backend {self.symbolic_backend!r}")
        if not 0 <= self.delta < 1:
            raise ValueError("memory damping must lie in [0, 1)")

    @property
    def needs_symbolic(self) -> bool:
        return self.pathway in ("oracle", "remote") or (self.pathway == "fused" and self.fusion_mode != "neural_only")

    @property
    def needs_neural(self) -> bool:
        return self.pathway == "neural" or (self.pathway == "fused" and self.fusion_mode != "symbolic_only")


@dataclass(frozen=True)
class ClusterHazards:
    """Per-cluster hazards ``(K, n_transitions)`` and their fusion components."""

    lam: np.ndarray
    lam_sym: np.ndarray
    u_sym: np.ndarray
    lam_neu: np.ndarray
    u_neu: np.ndarray
    c_sym: np.ndarray
    c_neu: np.ndarray
    contexts: tuple = ()

    @property
    def w_sym(self) -> np.ndarray:
        tot = self.c_sym + self.c_neu
        return np.where(tot > 0, self.c_sym / np.where(tot > 0, tot, 1.0), np.nan)


def strip_regime(ctx: ClusterContext) -> ClusterContext:
    """Context without the regime-summary inputs (exogenous and neighbour terms)."""
    return replace(
        ctx,
        psi={k: (0.0, 0.0) for k in ctx.psi},
        psi_nbr_phi=np.zeros_like(np.asarray(ctx.psi_nbr_phi, float)),
        psi_nbr_edge_fraction=0.0,
    )


def _contexts(world: World, team: AgentTeamConfig | None) -> list[ClusterContext]:
    ss = world.state_space
    ctxs = assemble_contexts(world.labels, world.states, ss.states, world.exogenous, world.exo_names, world.cgraph, world.t)
    if team is not None and not team.meta:
        ctxs = [strip_regime(c) for c in ctxs]
    return ctxs


def _symbolic(world: World, ctxs, config: PathwayConfig) -> list[SymbolicHazardEstimate]:
    ss = world.state_space
    team = config.team or AgentTeamConfig.default(ss)
    if config.rules is None:
        raise ValueError("the symbolic pathway needs a rule table")
    use_remote = config.pathway == "remote" or (config.pathway == "fused" and config.symbolic_backend == "remote")
    if use_remote:
        if config.remote is None:
            raise ValueError("remote pathway needs a RemoteSetup")
        r = config.remote
        return remote_hazards_batch(ctxs, ss, config.rules, team, r.config, r.transport, config.ledger, r.templates, r.sleep, r.flags)
    out = [oracle_hazards(c, config.rules, ss) for c in ctxs]
    if config.ledger is not None:
        # one logical call per agent in the team, as the remote backend would make
        for c in ctxs:
            if team.meta:
                config.ledger.record(world.t, "meta", 0, 0)
            for _ in team.state_agents:
                config.ledger.record(world.t, "state", 0, 0)
    return out


def cluster_hazards(world: World, config: PathwayConfig) -> ClusterHazards:
    """Cluster-level hazards for day ``world.t`` under the configured pathway."""
    ss = world.state_space
    K, T = world.K, ss.n_transitions
    ctxs = _contexts(world, config.team)
    zeros = np.zeros((K, T))
    lam_sym = u_sym = lam_neu = u_neu = zeros
    if config.needs_symbolic:
        est = _symbolic(world, ctxs, config)
        lam_sym = np.vstack([e.hazards for e in est])
        u_sym = np.vstack([e.uncertainty for e in est])
    if config.needs_neural:
        if config.neural is None:
            raise ValueError("the neural pathway needs a fitted NeuralPathway")
        lam_neu, u_neu = config.neural.predict(world.phi_history, world.exogenous, world.t)
    if config.pathway in ("oracle", "remote"):
        mode = "symbolic_only"
    elif config.pathway == "neural":
        mode = "neural_only"
    else:
        mode = config.fusion_mode
    stats = np.array([[c.phi_entropy, c.exogenous_change] for c in ctxs])
    ctx_stats = np.repeat(stats[:, None, :], T, axis=1)
    fused = fuse_mode(mode, lam_sym, u_sym, lam_neu, u_neu, calibrator=config.calibrator, context_stats=ctx_stats)
    return ClusterHazards(
        lam=np.asarray(fused.lam),
        lam_sym=lam_sym,
        u_sym=u_sym,
        lam_neu=lam_neu,
        u_neu=u_neu,
        c_sym=np.asarray(fused.c_sym),
        c_neu=np.asarray(fused.c_neu),
        contexts=tuple(ctxs),
    )


def _neighborhood(world: World):
    ss = world.state_space
    onehot = np.zeros((world.n, ss.n_states))
    onehot[np.arange(world.n), world.states] = 1.0
    counts = np.asarray(world.graph.adjacency @ onehot)
    frac = driver_fractions(world.graph, world.states, ss, counts)
    means = cluster_mean_fractions(frac, world.states, world.labels, ss, world.K)
    return counts, frac, means


def _outgoing_mask(ss: StateSpace, states) -> np.ndarray:
    return ss.origin_of[None, :] == np.asarray(states, dtype=np.int64)[:, None]


def agent_hazards(world: World, lam: np.ndarray, states=None, delta: float = 0.0, neighborhood=None) -> np.ndarray:
    """Modulated hazards ``(n, n_transitions)`` of every agent as if in ``states``.

    ``states`` defaults to the current states; passing window-start states
    gives the hazards of each agent's origin state for event-time forecasts.
    """
    ss = world.state_space
    counts, frac, means = neighborhood if neighborhood is not None else _neighborhood(world)
    cur = world.states if states is None else np.asarray(states, dtype=np.int64)
    m_nbr = neighborhood_multipliers(frac, world.labels, means, ss)
    streak = np.array([m.stay_streak(int(s)) if s == c else 0 for m, s, c in zip(world.memories, cur, world.states)])
    return modulate_batch(lam[world.labels], world.population.modifiers, m_nbr, streak, _outgoing_mask(ss, cur), delta)


@dataclass(frozen=True)
class StepRecord:
    t: int
    hazards: ClusterHazards
    events: tuple
    seconds: float


def step(
    world: World, config: PathwayConfig, order: Sequence[int] | None = None, hazards: ClusterHazards | None = None
) -> tuple[World, StepRecord]:
    """Advance one day synchronously; returns the world at ``t + 1``.

    Every agent reads the frozen day-``t`` state vector. ``order`` only
    changes the iteration order of the per-agent loop, never the result.
    ``hazards`` may carry cluster hazards already computed for this day.
    Memories are appended in place.
    """
    t0 = time.perf_counter()
    ss = world.state_space
    t = world.t
    hz = hazards
    if hz is None:
        try:
            hz = cluster_hazards(world, config)
        except Exception as exc:
            raise RuntimeError(f"hazard pathway failed on day {t}: {exc}") from exc
    frozen = world.states.copy()
    counts, frac, means = _neighborhood(world)
    u = _rng.uniforms(config.seed, t, np.arange(world.n), config.stream, config.replicate)
    new = frozen.copy()
    targets = ss.target_of
    if config.realization == "vectorized":
        h = agent_hazards(world, hz.lam, delta=config.delta, neighborhood=(counts, frac, means))
        pick = sample_competing(h, u, config.sampler)
        moved = pick >= 0
        new[moved] = targets[pick[moved]]
    else:
        agents = range(world.n) if order is None else order
        lam_agent = hz.lam[world.labels]
        mean_agent = means[world.labels]
        for i in agents:
            s = int(frozen[i])
            eh = modulate(lam_agent[i], world.profiles[i], world.memories[i], counts[i], mean_agent[i], ss, s, config.delta)
            if not eh.transitions:
                continue
            j = sample_transition(eh.hazards, u[i], config.sampler)
            if j >= 0:
                new[i] = targets[eh.transitions[j]]
    # the infectious-neighbour digest uses the first contact-driven transition
    contact_cols = [k for k, tr in enumerate(ss.transitions) if ss.contact_driven.get(tr)]
    nbr = frac[:, contact_cols[0]] if contact_cols else np.zeros(world.n)
    for i in range(world.n):
        world.memories[i].append(t, frozen[i], nbr[i], new[i] != frozen[i])
    moved_idx = np.flatnonzero(new != frozen)
    events = tuple((t + 1, int(i), ss.states[frozen[i]], ss.states[new[i]]) for i in moved_idx)
    hist = dict(world.phi_history)
    hist[t + 1] = phi_matrix(new, world.labels, ss.n_states, world.K)
    nxt = replace(world, states=new, t=t + 1, phi_history=hist)
    return nxt, StepRecord(t=t, hazards=hz, events=events, seconds=time.perf_counter() - t0)


@dataclass
class SimulationRun:
    """Trajectories ``(n, days)``, per-day cluster hazards and the event log."""

    trajectories: np.ndarray
    hazards: list
    events: list
    start: int
    seconds: list

    @property
    def days(self) -> int:
        return self.trajectories.shape[1]


def simulate(world: World, days: int, config: PathwayConfig) -> tuple[World, SimulationRun]:
    """Run ``days`` steps from ``world``; trajectories include the start day."""
    traj = [world.states.copy()]
    hazards, events, secs = [], [], []
    start = world.t
    for _ in range(days):
        world, rec = step(world, config)
        traj.append(world.states.copy())
        hazards.append(rec.hazards)
        events.extend(rec.events)
        secs.append(rec.seconds)
    return world, SimulationRun(np.column_stack(traj), hazards, events, start, secs)
