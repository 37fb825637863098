"""Population, state machine, interaction graph and scenario configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import rng as _rng

__all__ = [
    "StateSpace",
    "InteractionGraph",
    "AgentProfile",
    "Population",
    "ExogenousSeries",
    "ScenarioConfig",
    "build_graph",
    "neighbor_state_counts",
    "neighbor_state_count_matrix",
    "initialize_states",
    "minority_counts",
    "scale_counts",
    "synthetic_contact_layers",
    "SEIRD",
]


@dataclass(frozen=True)
class StateSpace:
    """Latent states and admissible transitions.

    ``contact_driven`` maps a transition to the neighbour states that drive it
    (for example ``("S", "E") -> ("I",)``).
    """

    states: tuple[str, ...]
    transitions: tuple[tuple[str, str], ...]
    contact_driven: Mapping[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(tuple(t) for t in self.transitions))
        object.__setattr__(
            self,
            "contact_driven",
            {tuple(k): tuple(v) for k, v in dict(self.contact_driven).items()},
        )
        if len(self.states) < 2:
            raise ValueError("a state space needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate state labels")
        if not self.transitions:
            raise ValueError("a state space needs at least 1 transition")
        if len(set(self.transitions)) != len(self.transitions):
            raise ValueError("duplicate transitions")
        for s, t in self.transitions:
            if s not in self.states or t not in self.states:
                raise ValueError(f"transition {s}->{t} references an unknown state")
            if s == t:
                raise ValueError(f"self-transition {s}->{t} is not allowed")
        for tr, drivers in self.contact_driven.items():
            if tr not in self.transitions:
                raise ValueError(f"contact-driven flag on unknown transition {tr}")
            for d in drivers:
                if d not in self.states:
                    raise ValueError(f"unknown driver state {d}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    @property
    def terminal_states(self) -> tuple[str, ...]:
        origins = {s for s, _ in self.transitions}
        return tuple(s for s in self.states if s not in origins)

    @property
    def origin_states(self) -> tuple[str, ...]:
        origins = {s for s, _ in self.transitions}
        return tuple(s for s in self.states if s in origins)

    def index(self, state: str) -> int:
        return self.states.index(state)

    def transition_index(self, transition) -> int:
        if isinstance(transition, str):
            transition = tuple(transition.split("->"))
        return self.transitions.index(tuple(transition))

    def outgoing(self, state) -> list[int]:
        """Transition indices leaving ``state`` (label or index)."""
        if not isinstance(state, str):
            state = self.states[int(state)]
        return [k for k, (s, _) in enumerate(self.transitions) if s == state]

    def transition_labels(self) -> list[str]:
        return [f"{s}->{t}" for s, t in self.transitions]

    @property
    def origin_of(self) -> np.ndarray:
        """Origin-state index of every transition."""
        return np.array([self.index(s) for s, _ in self.transitions], dtype=np.int64)

    @property
    def target_of(self) -> np.ndarray:
        return np.array([self.index(t) for _, t in self.transitions], dtype=np.int64)

    def is_terminal(self, state) -> bool:
        if not isinstance(state, str):
            state = self.states[int(state)]
        return state in self.terminal_states


SEIRD = StateSpace(
    states=("S", "E", "I", "R", "D"),
    transitions=(("S", "E"), ("E", "I"), ("I", "R"), ("I", "D"), ("R", "S")),
    contact_driven={("S", "E"): ("I",)},
)


@dataclass(frozen=True)
class InteractionGraph:
    """Multi-layer undirected graph over ``n`` agents.

    ``layers`` holds merged edge arrays ``(i, j, w)`` with ``i < j``;
    ``adjacency`` is the binary symmetric union of all layers.
    """

    n: int
    layers: Mapping[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    adjacency: sp.csr_matrix

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    def neighbors(self, agent: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[agent] : a.indptr[agent + 1]]

    def edge_list(self) -> list[tuple[str, int, int, float]]:
        rows = []
        for name in sorted(self.layers):
            i, j, w = self.layers[name]
            rows.extend((name, int(a), int(b), float(c)) for a, b, c in zip(i, j, w))
        return rows


def build_graph(n: int, layer_edges: Mapping[str, Iterable[Sequence]]) -> InteractionGraph:
    """Merge named edge lists into an :class:`InteractionGraph`.

    Each edge is ``(i, j)`` or ``(i, j, weight)``; weight defaults to 1.
    Duplicate edges in a layer (either orientation) are merged with summed
    weights.
    """
    if n < 1:
        raise ValueError("n must be positive")
    layers = {}
    rows, cols = [], []
    for name, edges in layer_edges.items():
        merged: dict[tuple[int, int], float] = {}
        for e in edges:
            i, j = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) in layer {name!r} out of range for n={n}")
            if i == j:
                raise ValueError(f"self-loop on agent {i} in layer {name!r}")
            if not math.isfinite(w) or w < 0:
                raise ValueError(f"edge ({i}, {j}) in layer {name!r} has invalid weight {w}")
            key = (min(i, j), max(i, j))
            merged[key] = merged.get(key, 0.0) + w
        keys = sorted(merged)
        ii = np.array([k[0] for k in keys], dtype=np.int64)
        jj = np.array([k[1] for k in keys], dtype=np.int64)
        ww = np.array([merged[k] for k in keys], dtype=np.float64)
        layers[name] = (ii, jj, ww)
        rows.append(ii)
        cols.append(jj)
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = c = np.zeros(0, dtype=np.int64)
    a = sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n)).tocsr()
    a = a + a.T
    a.data[:] = 1.0
    a.sum_duplicates()
    a.data[:] = 1.0
    a.sort_indices()
    return InteractionGraph(n=n, layers=layers, adjacency=a.tocsr())


def neighbor_state_counts(graph: InteractionGraph, states, agent: int, state_space: StateSpace | None = None):
    """Counts of each state among the adjacency neighbours of ``agent``.

    ``states`` holds per-agent state indices (or labels). Returns a dict keyed
    by label when ``state_space`` is given, otherwise by state index.
    """
    states = np.asarray(states)
    if len(states) != graph.n:
        raise ValueError("state vector length does not match graph size")
    if not 0 <= agent < graph.n:
        raise ValueError(f"bad agent id {agent}")
    nb = states[graph.neighbors(agent)]
    if state_space is None:
        values, counts = np.unique(nb, return_counts=True)
        return {v.item(): int(c) for v, c in zip(values, counts)}
    if nb.dtype.kind in "US" or nb.dtype == object:
        nb = np.array([state_space.index(s) for s in nb], dtype=np.int64)
    counts = np.bincount(nb.astype(np.int64), minlength=state_space.n_states)
    return {s: int(counts[k]) for k, s in enumerate(state_space.states)}


def neighbor_state_count_matrix(graph: InteractionGraph, states: np.ndarray, n_states: int) -> np.ndarray:
    """``(n, n_states)`` matrix of neighbour state counts for every agent."""
    onehot = np.zeros((graph.n, n_states))
    onehot[np.arange(graph.n), states] = 1.0
    return np.asarray(graph.adjacency @ onehot)


@dataclass(frozen=True)
class AgentProfile:
    id: int
    attributes: Mapping[str, float]
    susceptibility_modifiers: Mapping[str, float]

    def __post_init__(self):
        for k, v in self.susceptibility_modifiers.items():
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"agent {self.id}: modifier {k}={v} must be finite and >= 0")


@dataclass(frozen=True)
class Population:
    """Column-oriented view of all agent profiles.

    ``attributes`` is ``(n, d_X)``; ``modifiers`` is ``(n, n_transitions)``
    aligned with the state space's transition order.
    """

    attribute_names: tuple[str, ...]
    attributes: np.ndarray
    modifiers: np.ndarray

    @property
    def n(self) -> int:
        return self.attributes.shape[0]

    def __post_init__(self):
        if not np.all(np.isfinite(self.modifiers)) or np.any(self.modifiers < 0):
            raise ValueError("susceptibility modifiers must be finite and >= 0")
        if not np.all(np.isfinite(self.attributes)):
            raise ValueError("attributes must be finite")

    def attribute(self, name: str) -> np.ndarray:
        return self.attributes[:, self.attribute_names.index(name)]

    def profile(self, agent: int, state_space: StateSpace) -> AgentProfile:
        return AgentProfile(
            id=agent,
            attributes={k: float(v) for k, v in zip(self.attribute_names, self.attributes[agent])},
            susceptibility_modifiers={
                lab: float(m) for lab, m in zip(state_space.transition_labels(), self.modifiers[agent])
            },
        )

    @classmethod
    def from_profiles(cls, profiles: Sequence[AgentProfile], state_space: StateSpace):
        ids = [p.id for p in profiles]
        if sorted(ids) != list(range(len(profiles))):
            raise ValueError("agent ids must be unique and dense in [0, n)")
        profiles = sorted(profiles, key=lambda p: p.id)
        names = tuple(sorted({k for p in profiles for k in p.attributes}))
        attrs = np.array([[p.attributes.get(k, 0.0) for k in names] for p in profiles], dtype=float)
        labels = state_space.transition_labels()
        mods = np.array(
            [[p.susceptibility_modifiers.get(lab, 1.0) for lab in labels] for p in profiles], dtype=float
        )
        return cls(attribute_names=names, attributes=attrs.reshape(len(profiles), len(names)), modifiers=mods)

    @classmethod
    def homogeneous(cls, n: int, n_transitions: int):
        return cls(attribute_names=(), attributes=np.zeros((n, 0)), modifiers=np.ones((n, n_transitions)))


@dataclass(frozen=True)
class ExogenousSeries:
    name: str
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"exogenous series {self.name!r} has non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScenarioConfig:
    domain: str
    state_space: StateSpace
    horizon: int
    initial_counts: Mapping[str, int]
    exogenous: tuple[ExogenousSeries, ...] = ()
    seed: int = 0
    generator_hazards: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "exogenous", tuple(self.exogenous))
        for s in self.initial_counts:
            if s not in self.state_space.states:
                raise ValueError(f"initial count for unknown state {s!r}")
        if any(int(c) < 0 for c in self.initial_counts.values()):
            raise ValueError("initial counts must be non-negative")
        for series in self.exogenous:
            if len(series.values) != self.horizon:
                raise ValueError(
                    f"exogenous series {series.name!r} has length {len(series.values)}, expected {self.horizon}"
                )
        if self.generator_hazards is not None:
            g = np.asarray(self.generator_hazards)
            if np.any(g < 0) or np.any(g > 1):
                raise ValueError("generator hazards must lie in [0, 1]")

    @property
    def n(self) -> int:
        return int(sum(int(c) for c in self.initial_counts.values()))

    def exogenous_matrix(self) -> np.ndarray:
        """``(T, n_series)`` array of exogenous values."""
        if not self.exogenous:
            return np.zeros((self.horizon, 0))
        return np.column_stack([s.values for s in self.exogenous])

    @property
    def exogenous_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.exogenous)


def initialize_states(config: ScenarioConfig, rng=None, n: int | None = None) -> np.ndarray:
    """Per-agent state indices with exact multiplicities, seeded shuffle.

    ``rng`` may be a numpy Generator; by default one is derived from the
    scenario seed.
    """
    total = config.n
    if n is not None and n != total:
        raise ValueError(f"initial counts sum to {total}, expected n={n}")
    if rng is None:
        rng = _rng.generator(config.seed, _rng.STREAM_INIT)
    ss = config.state_space
    vec = np.concatenate(
        [np.full(int(config.initial_counts.get(s, 0)), k, dtype=np.int64) for k, s in enumerate(ss.states)]
    )
    return vec[rng.permutation(total)]


def minority_counts(n: int, majority: str, fractions: Mapping[str, float]) -> dict[str, int]:
    """Counts for minority-state initialisation; fractional counts round up.

    >>> minority_counts(250, "Unaware", {"Interested": 0.01})
    {'Unaware': 247, 'Interested': 3}
    """
    counts = {majority: 0}
    used = 0
    for state, frac in fractions.items():
        c = int(math.ceil(frac * n - 1e-9))
        counts[state] = c
        used += c
    if used > n:
        raise ValueError("minority fractions exceed the population")
    counts[majority] = n - used
    return counts


def scale_counts(reference: Mapping[str, int], n: int, majority: str) -> dict[str, int]:
    """Rescale a reference count table to ``n`` agents (minorities round up)."""
    ref_total = sum(reference.values())
    fractions = {s: c / ref_total for s, c in reference.items() if s != majority and c > 0}
    return minority_counts(n, majority, fractions)


def synthetic_contact_layers(
    n: int,
    seed: int,
    mean_degree: float = 8.2,
    household_sizes=(2, 5),
    workplace_size: int = 20,
    workplace_k: int = 4,
    rewire: float = 0.1,
) -> dict[str, list[tuple[int, int, float]]]:
    """Household / workplace / community edge lists targeting ``mean_degree``.

    Households are disjoint cliques, workplaces are rewired ring lattices
    (small-world), and the community layer is a sparse random graph whose
    density absorbs the remaining degree budget.
    """
    g = _rng.generator(seed, 101)
    order = g.permutation(n)
    household, workplace, community = [], [], []

    pos = 0
    hh_deg = 0.0
    while pos < n:
        size = int(g.integers(household_sizes[0], household_sizes[1] + 1))
        members = order[pos : pos + size]
        pos += size
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                household.append((int(members[a]), int(members[b]), 1.0))
    hh_deg = 2 * len(household) / n

    order = g.permutation(n)
    k = workplace_k
    for start in range(0, n, workplace_size):
        members = order[start : start + workplace_size]
        m = len(members)
        if m <= k:
            for a in range(m):
                for b in range(a + 1, m):
                    workplace.append((int(members[a]), int(members[b]), 0.5))
            continue
        for a in range(m):
            for step in range(1, k // 2 + 1):
                b = (a + step) % m
                if g.random() < rewire:
                    b = int(g.integers(m))
                    if b == a:
                        continue
                workplace.append((int(members[a]), int(members[b]), 0.5))
    wp_deg = 2 * len(workplace) / n

    remaining = max(mean_degree - hh_deg - wp_deg, 0.0)
    p = remaining / max(n - 1, 1)
    n_pairs = n * (n - 1) // 2
    n_edges = int(g.binomial(n_pairs, min(p, 1.0)))
    seen = set()
    while len(seen) < n_edges:
        a, b = (int(x) for x in g.integers(0, n, size=2))
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        community.append((key[0], key[1], 0.2))
    return {"household": household, "workplace": workplace, "community": community}
