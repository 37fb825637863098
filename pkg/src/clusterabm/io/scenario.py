"""Saving and loading complete scenarios (configuration, graph, population, truth)."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from ..anchor.pipeline import standardize_columns
from ..anchor.structure import structural_embed
from ..core import ScenarioConfig, initialize_states
from ..engine.rolling import ScenarioData
from ..engine.world import PathwayConfig, make_world, simulate
from ..symbolic.oracle import attention_rules, market_rules, seird_rules
from . import artifacts as _art
from .synthetic import generate_synthetic_scenario

__all__ = ["SCENARIO_FILES", "rules_for_domain", "save_scenario", "load_scenario"]

SCENARIO_FILES = {
    "edges": "edges.csv",
    "exogenous": "exogenous.csv",
    "attributes": "attributes.csv",
    "modifiers": "modifiers.csv",
    "truth": "truth.csv",
    "planted_clusters": "planted_clusters.csv",
}


def rules_for_domain(domain: str):
    """Symbolic prior rule table for a domain label."""
    d = domain.lower()
    if d.startswith("seird") or d.startswith("epi"):
        return seird_rules()
    if d.startswith("market") or d.startswith("fin"):
        return market_rules()
    if d.startswith("attention") or d.startswith("social"):
        return attention_rules()
    raise ValueError(f"no rule table for domain {domain!r}")


def save_scenario(out_dir, config: ScenarioConfig, data: ScenarioData, template: dict | None = None) -> list[str]:
    """Write the scenario file and its tables; returns the written file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = dict(SCENARIO_FILES)
    if "planted_labels" not in data.meta:
        files.pop("planted_clusters")
    _art.write_edges(out / files["edges"], data.graph)
    _art.write_exogenous(out / files["exogenous"], data.exogenous, data.exo_names)
    pop = data.population
    _art.write_matrix(out / files["attributes"], pop.attributes, pop.attribute_names)
    _art.write_matrix(out / files["modifiers"], pop.modifiers, data.state_space.transition_labels())
    _art.write_trajectories(out / files["truth"], data.truth, data.state_space)
    if "planted_clusters" in files:
        _art.write_clusters(out / files["planted_clusters"], data.meta["planted_labels"])
    _art.write_scenario_toml(out / "scenario.toml", config, files, template=template)
    return ["scenario.toml", *files.values()]


def _embedding(graph, attrs, seed: int) -> np.ndarray:
    X = attrs if attrs.shape[1] else graph.degree[:, None].astype(float)
    return structural_embed(graph, standardize_columns(X), L=2, d_H=16, seed=seed).H


def load_scenario(path, clusters=None) -> tuple[ScenarioConfig, ScenarioData]:
    """Rebuild a scenario from ``scenario.toml``.

    Template scenarios are regenerated from their recorded parameters and
    checked against the stored truth file. Other scenarios are assembled
    from their tables; if no truth file is given, truth is produced by the
    domain rule table and the sampler from the seeded initial states.
    ``clusters`` optionally names a ``clusters.csv`` overriding the labels.
    """
    doc = _art.read_scenario_toml(path)
    files = doc["files"]
    seed = doc["seed"]["value"]
    tmpl = doc.get("template")
    if tmpl is not None:
        config, data = generate_synthetic_scenario(
            tmpl["name"], n=int(tmpl["n"]), T=int(tmpl["T"]), seed=seed, **dict(tmpl.get("params", {}))
        )
        if "truth" in files and Path(files["truth"]).is_file():
            stored, _ = _art.read_trajectories(files["truth"], data.state_space)
            if not np.array_equal(stored, data.truth):
                raise ValueError("stored truth does not match the regenerated template scenario")
    else:
        config, graph, exo, names = _art.scenario_config_from_doc(doc)
        ss = config.state_space
        pop, attrs = _art.population_from_files(files, config.n, ss)
        rules = rules_for_domain(config.domain)
        labels = np.zeros(config.n, dtype=np.int64)
        if "truth" in files and Path(files["truth"]).is_file():
            truth, _ = _art.read_trajectories(files["truth"], ss)
            source = "file"
        else:
            init = initialize_states(config)
            world = make_world(ss, graph, pop, labels, exo, names, init, 0)
            _, run = simulate(world, config.horizon - 1, PathwayConfig(pathway="oracle", rules=rules, seed=seed,
                                                                       realization="vectorized"))
            truth, source = run.trajectories, "oracle"
        data = ScenarioData(
            domain=config.domain, state_space=ss, graph=graph, population=pop, labels=labels, exogenous=exo,
            exo_names=names, truth=truth, rules=rules, generator_rules=None, embedding=_embedding(graph, attrs, seed),
            seed=seed, meta={"truth_source": source, "X": attrs.tolist()},
        )
    if clusters is not None:
        labels = _art.read_clusters(clusters)
        if len(labels) != data.n:
            raise ValueError(f"cluster file has {len(labels)} agents, scenario has {data.n}")
        data = replace(data, labels=labels)
    return config, data
