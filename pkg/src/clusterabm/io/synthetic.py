"""Synthetic scenarios whose truth is produced by the rule oracle and the sampler."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import rng as _rng
from ..anchor.pipeline import standardize_columns
from ..anchor.structure import structural_embed
from ..core import ExogenousSeries, InteractionGraph, Population, ScenarioConfig, StateSpace, SEIRD, build_graph
from ..engine.rolling import ScenarioData
from ..engine.world import PathwayConfig, make_world, simulate
from ..symbolic.oracle import attention_rules, market_rules, seird_rules
from .ingest import REGIME_K, k_day_returns, label_index_regimes

__all__ = [
    "TEMPLATES",
    "MARKET",
    "ATTENTION",
    "TRAIT_NAMES",
    "ARCHETYPES",
    "planted_graph",
    "planted_population",
    "planted_regime_instance",
    "generate_synthetic_scenario",
    "seird_shock",
    "market_regimes",
    "attention_lifecycle",
]

TEMPLATES = ("seird_shock", "market_regimes", "attention_lifecycle")

MARKET = StateSpace(
    states=("Bearish", "Bullish", "Neutral"),
    transitions=(
        ("Bearish", "Bullish"), ("Bearish", "Neutral"), ("Neutral", "Bullish"),
        ("Neutral", "Bearish"), ("Bullish", "Neutral"), ("Bullish", "Bearish"),
    ),
)

ATTENTION = StateSpace(
    states=("Unaware", "Interested", "Fatigued"),
    transitions=(("Unaware", "Interested"), ("Interested", "Fatigued"), ("Fatigued", "Unaware")),
    contact_driven={("Unaware", "Interested"): ("Interested",)},
)

TRAIT_NAMES = ("risk_aversion", "sociability", "compliance")
# cautious / middle / exposed behavioural archetypes
ARCHETYPES = np.array([[0.9, 0.2, 0.9], [0.5, 0.5, 0.5], [0.1, 0.9, 0.2]])


def _planted_labels(n: int, k: int) -> np.ndarray:
    return np.minimum(np.arange(n) * k // n, k - 1).astype(np.int64)


def planted_graph(labels, seed: int, deg_in: float = 6.0, deg_out: float = 2.0) -> InteractionGraph:
    """Stochastic block graph with expected within/between-group degrees."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    g = _rng.generator(seed, 111)
    sizes = np.bincount(labels)
    same = labels[:, None] == labels[None, :]
    p_in = deg_in / np.maximum(sizes[labels] - 1, 1)
    p_out = deg_out / np.maximum(n - sizes[labels], 1)
    p = np.where(same, p_in[:, None], p_out[:, None])
    draw = g.random((n, n)) < p
    i, j = np.nonzero(np.triu(draw, 1))
    return build_graph(n, {"contact": list(zip(i.tolist(), j.tolist()))})


def planted_population(labels, seed: int, n_transitions: int, noise: float = 0.08, modifiers=None):
    """Traits from the group archetype plus noise; age and sex are uninformative."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    g = _rng.generator(seed, 112)
    age = g.uniform(18, 80, n)
    sex = g.integers(0, 2, n).astype(float)
    traits = np.clip(ARCHETYPES[labels % len(ARCHETYPES)] + g.normal(0, noise, (n, 3)), 0, 1)
    mods = np.ones((n, n_transitions)) if modifiers is None else modifiers(age, g)
    pop = Population(("age", "sex") + TRAIT_NAMES, np.column_stack([age, sex, traits]), mods)
    return pop, np.column_stack([age, sex])


def planted_regime_instance(n: int = 120, k: int = 3, seed: int = 0):
    """Graph, observable attributes, population and labels of a planted-regime instance."""
    labels = _planted_labels(n, k)
    graph = planted_graph(labels, seed)
    pop, X = planted_population(labels, seed, SEIRD.n_transitions)
    return graph, X, pop, labels


def _embedding(graph, X, seed: int, d_H: int = 16) -> np.ndarray:
    return structural_embed(graph, standardize_columns(X), L=2, d_H=d_H, seed=seed).H


def _run_truth(state_space, graph, pop, labels, exo, names, init, rules, T, seed):
    world = make_world(state_space, graph, pop, labels, exo, names, init, 0)
    cfg = PathwayConfig(pathway="oracle", rules=rules, seed=seed, realization="vectorized", stream=_rng.STREAM_TRUTH)
    _, run = simulate(world, T - 1, cfg)
    gen = np.stack([h.lam for h in run.hazards]) if run.hazards else None
    return run.trajectories, gen


def _initial(state_space, counts: dict, seed: int) -> np.ndarray:
    g = _rng.generator(seed, _rng.STREAM_INIT)
    vec = np.concatenate([np.full(int(counts.get(s, 0)), k, dtype=np.int64) for k, s in enumerate(state_space.states)])
    return vec[g.permutation(len(vec))]


def seird_shock(
    n: int = 200,
    T: int = 60,
    seed: int = 0,
    shock_day: int = 40,
    shock_multiplier: float = 0.2,
    group_scale=(1.6, 1.0, 0.6),
    initial=None,
    deg_in: float = 6.0,
    deg_out: float = 2.0,
):
    """Epidemic with a policy step at ``shock_day`` and group-specific transmission.

    Stringency jumps from 0 to ``1 - shock_multiplier`` so the generator's
    S->E hazard is multiplied by ``shock_multiplier`` from that day. Groups
    transmit at ``group_scale`` times the base rate; the symbolic prior
    shipped with the scenario does not know these scales.
    """
    k = len(group_scale)
    labels = _planted_labels(n, k)
    graph = planted_graph(labels, seed, deg_in, deg_out)

    def mods(age, g):
        m = np.ones((n, SEIRD.n_transitions))
        m[:, SEIRD.transition_index("S->E")] = np.clip(g.normal(1.0, 0.15, n), 0.5, 1.5)
        m[:, SEIRD.transition_index("I->D")] = 0.5 + (age - 18) / 62
        return m

    pop, X = planted_population(labels, seed, SEIRD.n_transitions, modifiers=mods)
    stringency = np.where(np.arange(T) >= shock_day, 1.0 - shock_multiplier, 0.0)
    exo = stringency[:, None]
    names = ("stringency",)
    if initial is None:
        seeds = max(2, int(round(0.02 * n)))
        initial = {"S": n - 2 * seeds, "E": seeds, "I": seeds}
    init = _initial(SEIRD, initial, seed)
    prior = seird_rules()
    generator = prior.scaled("S->E", {i: float(s) for i, s in enumerate(group_scale)})
    truth, gen = _run_truth(SEIRD, graph, pop, labels, exo, names, init, generator, T, seed)
    config = ScenarioConfig(
        domain="seird_shock", state_space=SEIRD, horizon=T, initial_counts=dict(initial),
        exogenous=(ExogenousSeries("stringency", stringency, "fraction"),), seed=seed, generator_hazards=gen,
    )
    data = ScenarioData(
        domain="seird_shock", state_space=SEIRD, graph=graph, population=pop, labels=labels, exogenous=exo,
        exo_names=names, truth=truth, rules=prior, generator_rules=generator, embedding=_embedding(graph, X, seed),
        seed=seed, meta={"shock_day": shock_day, "shock_multiplier": shock_multiplier, "group_scale": list(group_scale),
                         "planted_labels": labels.tolist(), "X": X.tolist()},
    )
    return config, data


def market_regimes(n: int = 200, T: int = 83, seed: int = 0, stickiness: float = 0.95, k: int = 3):
    """Sentiment driven by a three-regime hidden-Markov index series."""
    g = _rng.generator(seed, 121)
    mu = {0: -0.004, 1: 0.004, 2: 0.0}
    sd = {0: 0.012, 1: 0.008, 2: 0.005}
    lag = REGIME_K - 1
    regime = np.zeros(T + lag, dtype=np.int64)
    regime[0] = 2
    for t in range(1, T + lag):
        if g.random() < stickiness:
            regime[t] = regime[t - 1]
        else:
            regime[t] = g.choice([r for r in range(3) if r != regime[t - 1]])
    ret = np.array([g.normal(mu[r], sd[r]) for r in regime])
    full = 100.0 * np.cumprod(1.0 + ret)
    # the k-day return is observable from the first scenario day on
    five = k_day_returns(full, REGIME_K)[lag:]
    regimes = label_index_regimes(full, REGIME_K)[0][lag:]
    index = full[lag:]
    labels = _planted_labels(n, k)
    graph = planted_graph(labels, seed)
    pop, X = planted_population(labels, seed, MARKET.n_transitions)
    exo = five[:, None]
    names = ("index_return",)
    share = {"Bearish": 0.2, "Bullish": 0.2}
    counts = {"Neutral": n - 2 * int(0.2 * n), "Bearish": int(0.2 * n), "Bullish": int(0.2 * n)}
    init = _initial(MARKET, counts, seed)
    rules = market_rules()
    truth, gen = _run_truth(MARKET, graph, pop, labels, exo, names, init, rules, T, seed)
    config = ScenarioConfig(
        domain="market_regimes", state_space=MARKET, horizon=T, initial_counts=counts,
        exogenous=(ExogenousSeries("index_return", five, "fraction"),), seed=seed, generator_hazards=gen,
    )
    data = ScenarioData(
        domain="market_regimes", state_space=MARKET, graph=graph, population=pop, labels=labels, exogenous=exo,
        exo_names=names, truth=truth, rules=rules, generator_rules=rules, embedding=_embedding(graph, X, seed), seed=seed,
        meta={"index": index.tolist(), "regimes": regimes, "initial_share": share, "X": X.tolist()},
    )
    return config, data


def attention_lifecycle(
    n: int = 200, T: int = 60, seed: int = 0, fatigue_onset: int = 30, spikes=(12, 24), k: int = 3
):
    """S-shaped attention index rising until ``fatigue_onset``, then decaying, with spikes."""
    days = np.arange(T)
    rise = 1.0 / (1.0 + np.exp(-(days - fatigue_onset / 2) / (fatigue_onset / 8)))
    decay = np.where(days > fatigue_onset, np.exp(-(days - fatigue_onset) / 10.0), 1.0)
    att = rise * decay
    for s in spikes:
        if 0 <= s < T:
            att[s] += 0.5
    att = (att - att.min()) / (att.max() - att.min())
    labels = _planted_labels(n, k)
    graph = planted_graph(labels, seed)
    pop, X = planted_population(labels, seed, ATTENTION.n_transitions)
    exo = att[:, None]
    names = ("attention",)
    seeds = max(2, int(round(0.01 * n)))
    counts = {"Unaware": n - seeds, "Interested": seeds}
    init = _initial(ATTENTION, counts, seed)
    rules = attention_rules()
    truth, gen = _run_truth(ATTENTION, graph, pop, labels, exo, names, init, rules, T, seed)
    ever = np.maximum.accumulate(truth != ATTENTION.index("Unaware"), axis=1)
    config = ScenarioConfig(
        domain="attention_lifecycle", state_space=ATTENTION, horizon=T, initial_counts=counts,
        exogenous=(ExogenousSeries("attention", att, "index"),), seed=seed, generator_hazards=gen,
    )
    data = ScenarioData(
        domain="attention_lifecycle", state_space=ATTENTION, graph=graph, population=pop, labels=labels,
        exogenous=exo, exo_names=names, truth=truth, rules=rules, generator_rules=rules,
        embedding=_embedding(graph, X, seed), seed=seed,
        meta={"fatigue_onset": fatigue_onset, "spikes": list(spikes), "cumulative_interested": ever.mean(axis=0).tolist(),
              "X": X.tolist()},
    )
    return config, data


def generate_synthetic_scenario(template: str, n: int = 200, T: int = 60, seed: int = 0, **kwargs):
    """Dispatch to one of :data:`TEMPLATES`; returns ``(ScenarioConfig, ScenarioData)``."""
    if template == "seird_shock":
        return seird_shock(n=n, T=T, seed=seed, **kwargs)
    if template == "market_regimes":
        return market_regimes(n=n, T=T, seed=seed, **kwargs)
    if template == "attention_lifecycle":
        return attention_lifecycle(n=n, T=T, seed=seed, **kwargs)
    raise ValueError(f"unknown template {template!r}; expected one of {TEMPLATES}")
