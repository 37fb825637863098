"""Scenario files, run artifacts and run manifests.

All writers are deterministic: rows are emitted in a fixed order, floats
use ``repr`` precision and JSON keys are sorted, so two runs with the same
inputs and seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from ..core import ExogenousSeries, InteractionGraph, Population, ScenarioConfig, StateSpace, build_graph

__all__ = [
    "ARTIFACTS",
    "DEFAULT_START",
    "to_jsonable",
    "write_json",
    "read_json",
    "config_hash",
    "file_digest",
    "directory_digest",
    "RunManifest",
    "write_edges",
    "read_edges",
    "write_exogenous",
    "read_exogenous",
    "write_matrix",
    "read_matrix",
    "write_trajectories",
    "read_trajectories",
    "write_events",
    "read_events",
    "write_hazard_trace",
    "write_clusters",
    "read_clusters",
    "write_motifs",
    "write_reliability_bins",
    "write_regime_trace",
    "state_space_to_dict",
    "state_space_from_dict",
    "write_scenario_toml",
    "read_scenario_toml",
]

DEFAULT_START = "2020-01-01"

# file name -> producing command, documented in docs/artifacts.md
ARTIFACTS = {
    "scenario.toml": "generate",
    "edges.csv": "generate",
    "exogenous.csv": "generate",
    "attributes.csv": "generate",
    "modifiers.csv": "generate",
    "truth.csv": "generate",
    "clusters.csv": "cluster",
    "motifs.csv": "cluster",
    "quality.json": "cluster",
    "trajectories.csv": "simulate",
    "events.csv": "simulate",
    "hazard_trace.csv": "simulate",
    "forecasts.json": "simulate",
    "metrics.json": "evaluate",
    "reliability_bins.csv": "evaluate",
    "regime_trace.csv": "evaluate",
    "cost.json": "cost-report",
    "manifest.json": "all",
}


# ---------------------------------------------------------------- JSON


def to_jsonable(obj):
    """Recursively convert numpy containers and scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def directory_digest(root) -> dict[str, str]:
    """Relative path -> SHA-256 for every file under ``root``."""
    root = Path(root)
    return {str(p.relative_to(root)): file_digest(p) for p in sorted(root.rglob("*")) if p.is_file()}


def _version() -> str:
    from .. import __version__

    return __version__


@dataclass
class RunManifest:
    """Everything needed to reproduce a run from its inputs.

    Wall-clock timing is recorded only when ``timing`` is set, since it is
    the one field that differs between otherwise identical runs.
    """

    command: str
    config: dict
    seeds: dict
    backend: str = "oracle"
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    timing: dict | None = None

    def as_dict(self) -> dict:
        out = {
            "command": self.command,
            "config": to_jsonable(self.config),
            "config_hash": config_hash(self.config),
            "seeds": to_jsonable(self.seeds),
            "backend": self.backend,
            "software_version": _version(),
            "inputs": to_jsonable(self.inputs),
            "outputs": sorted(self.outputs),
            "flags": to_jsonable(self.flags),
            "cost": to_jsonable(self.cost),
        }
        if self.timing is not None:
            out["timing"] = to_jsonable(self.timing)
        return out

    def write(self, directory) -> Path:
        return write_json(Path(directory) / "manifest.json", self.as_dict())


# ---------------------------------------------------------------- CSV helpers


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return "" if x is None else str(x)


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    return path


def _read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_edges(path, graph: InteractionGraph) -> Path:
    """``layer,i,j,weight`` with ``i < j``."""
    return _write_rows(path, ["layer", "i", "j", "weight"], graph.edge_list())


def read_edges(path, n: int) -> InteractionGraph:
    layers: dict[str, list] = {}
    for r in _read_rows(path):
        layers.setdefault(r["layer"], []).append((int(r["i"]), int(r["j"]), float(r["weight"])))
    return build_graph(n, layers)


def _date(start: str, day: int) -> str:
    return (dt.date.fromisoformat(start) + dt.timedelta(days=int(day))).isoformat()


def write_exogenous(path, exogenous, names, start: str = DEFAULT_START) -> Path:
    """``date,name,value`` at daily resolution."""
    exo = np.asarray(exogenous, float).reshape(len(exogenous), -1)
    rows = [(_date(start, t), nm, exo[t, c]) for t in range(len(exo)) for c, nm in enumerate(names)]
    return _write_rows(path, ["date", "name", "value"], rows)


def read_exogenous(path, T: int, start: str = DEFAULT_START) -> tuple[np.ndarray, tuple[str, ...]]:
    rows = _read_rows(path)
    names = tuple(dict.fromkeys(r["name"] for r in rows))
    out = np.full((T, len(names)), np.nan)
    s0 = dt.date.fromisoformat(start)
    for r in rows:
        t = (dt.date.fromisoformat(r["date"]) - s0).days
        if not 0 <= t < T:
            raise ValueError(f"exogenous date {r['date']} outside the scenario span")
        out[t, names.index(r["name"])] = float(r["value"])
    if np.isnan(out).any():
        raise ValueError("exogenous series has missing days")
    return out, names


def write_matrix(path, M, columns, index_name: str = "agent_id") -> Path:
    M = np.asarray(M, float).reshape(len(M), -1)
    return _write_rows(path, [index_name, *columns], ([i, *row] for i, row in enumerate(M)))


def read_matrix(path, index_name: str = "agent_id") -> tuple[np.ndarray, tuple[str, ...]]:
    rows = _read_rows(path)
    if not rows:
        return np.zeros((0, 0)), ()
    cols = tuple(k for k in rows[0] if k != index_name)
    ids = [int(r[index_name]) for r in rows]
    if ids != list(range(len(rows))):
        raise ValueError(f"{index_name} must be dense and ordered")
    return np.array([[float(r[c]) for c in cols] for r in rows]).reshape(len(rows), len(cols)), cols


def write_trajectories(path, trajectories, state_space: StateSpace, start_day: int = 0) -> Path:
    """Long format ``day, agent_id, state`` sorted by day then agent."""
    traj = np.asarray(trajectories, dtype=np.int64)
    n, days = traj.shape
    st = state_space.states
    return _write_rows(
        path, ["day", "agent_id", "state"],
        ((start_day + d, i, st[traj[i, d]]) for d in range(days) for i in range(n)),
    )


def read_trajectories(path, state_space: StateSpace) -> tuple[np.ndarray, int]:
    """Inverse of :func:`write_trajectories`; returns ``(matrix, start_day)``."""
    rows = _read_rows(path)
    day = np.array([int(r["day"]) for r in rows])
    agent = np.array([int(r["agent_id"]) for r in rows])
    state = np.array([state_space.index(r["state"]) for r in rows], dtype=np.int64)
    start = int(day.min())
    out = np.full((agent.max() + 1, day.max() - start + 1), -1, dtype=np.int64)
    out[agent, day - start] = state
    if (out < 0).any():
        raise ValueError("trajectory file is missing (day, agent) cells")
    return out, start


def write_events(path, events, state_space: StateSpace) -> Path:
    """``day, agent_id, from, to`` sorted by (day, agent).

    ``day`` is the first day in the new state; states may be names or indices.
    """
    st = state_space.states

    def idx(s):
        return state_space.index(s) if isinstance(s, str) else int(s)

    rows = sorted((int(d), int(a), idx(f), idx(t)) for d, a, f, t in events)
    return _write_rows(path, ["day", "agent_id", "from", "to"], ((d, a, st[f], st[t]) for d, a, f, t in rows))


def read_events(path, state_space: StateSpace) -> list[tuple[int, int, int, int]]:
    return [
        (int(r["day"]), int(r["agent_id"]), state_space.index(r["from"]), state_space.index(r["to"]))
        for r in _read_rows(path)
    ]


def write_hazard_trace(path, rows, columns) -> Path:
    return _write_rows(path, list(columns), rows)


def write_clusters(path, labels, anchors=()) -> Path:
    anchors = set(int(a) for a in anchors)
    return _write_rows(
        path, ["agent_id", "cluster_id", "anchor_flag"],
        ((i, int(c), int(i in anchors)) for i, c in enumerate(np.asarray(labels))),
    )


def read_clusters(path) -> np.ndarray:
    rows = _read_rows(path)
    if [int(r["agent_id"]) for r in rows] != list(range(len(rows))):
        raise ValueError("agent_id must be dense and ordered")
    return np.array([int(r["cluster_id"]) for r in rows], dtype=np.int64)


def write_motifs(path, P) -> Path:
    P = np.asarray(P, float)
    return write_matrix(path, P, [f"m_{k + 1}" for k in range(P.shape[1])])


def write_reliability_bins(path, table) -> Path:
    cols = ["bin", "lo", "hi", "count", "confidence", "accuracy"]
    return _write_rows(path, cols, ([row.get(c) for c in cols] for row in table))


def write_regime_trace(path, trace, moving_average, realized=None) -> Path:
    trace = np.asarray(trace, float).reshape(len(trace), -1)
    ma = np.asarray(moving_average, float).reshape(len(trace), -1)
    S = trace.shape[1]
    header = ["day", *[f"p_{s}" for s in range(S)], *[f"ma_{s}" for s in range(S)]]
    rows = []
    for d in range(len(trace)):
        row = [d, *trace[d], *ma[d]]
        if realized is not None:
            row.append(realized[d])
        rows.append(row)
    if realized is not None:
        header.append("realized")
    return _write_rows(path, header, rows)


# ---------------------------------------------------------------- scenario TOML


def state_space_to_dict(ss: StateSpace) -> dict:
    return {
        "states": {"names": list(ss.states)},
        "transitions": {
            "pairs": [[a, b] for a, b in ss.transitions],
            "contact": {f"{a}->{b}": list(v) for (a, b), v in sorted(ss.contact_driven.items())},
        },
    }


def state_space_from_dict(doc: dict) -> StateSpace:
    contact = {}
    for lab, drivers in doc.get("transitions", {}).get("contact", {}).items():
        a, b = lab.split("->")
        contact[(a.strip(), b.strip())] = tuple(drivers)
    return StateSpace(
        states=tuple(doc["states"]["names"]),
        transitions=tuple(tuple(p) for p in doc["transitions"]["pairs"]),
        contact_driven=contact,
    )


def write_scenario_toml(path, config: ScenarioConfig, files: dict, template: dict | None = None, start: str = DEFAULT_START) -> Path:
    """Scenario file with sections states, transitions, layers, init, exogenous and seed."""
    doc = {"domain": config.domain, "horizon": int(config.horizon), "n": int(config.n)}
    doc.update(state_space_to_dict(config.state_space))
    doc["layers"] = {"edges": files["edges"]}
    doc["init"] = {k: int(v) for k, v in config.initial_counts.items()}
    doc["exogenous"] = {"file": files["exogenous"], "start": start, "names": list(config.exogenous_names)}
    # TOML integers are signed 64-bit; larger seeds are kept as decimal text
    doc["seed"] = {"value": int(config.seed) if int(config.seed) < 2**63 else str(int(config.seed))}
    doc["files"] = {k: v for k, v in sorted(files.items()) if k not in ("edges", "exogenous")}
    if template is not None:
        doc["template"] = to_jsonable(template)
    path = Path(path)
    path.write_bytes(tomli_w.dumps(doc).encode())
    return path


def read_scenario_toml(path) -> dict:
    """Parsed scenario document with file references resolved against its directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file {path} not found")
    doc = tomllib.loads(path.read_text(encoding="utf-8"))
    for key in ("states", "transitions", "layers", "init", "exogenous", "seed"):
        if key not in doc:
            raise ValueError(f"scenario file lacks section [{key}]")
    base = path.parent
    doc["layers"]["edges"] = str(base / doc["layers"]["edges"])
    doc["exogenous"]["file"] = str(base / doc["exogenous"]["file"])
    doc["files"] = {k: str(base / v) for k, v in doc.get("files", {}).items()}
    doc["seed"]["value"] = int(doc["seed"]["value"])
    return doc


def scenario_config_from_doc(doc: dict) -> tuple[ScenarioConfig, InteractionGraph, np.ndarray, tuple[str, ...]]:
    ss = state_space_from_dict(doc)
    T = int(doc["horizon"])
    exo, names = read_exogenous(doc["exogenous"]["file"], T, doc["exogenous"].get("start", DEFAULT_START))
    config = ScenarioConfig(
        domain=doc["domain"], state_space=ss, horizon=T, initial_counts=dict(doc["init"]),
        exogenous=tuple(ExogenousSeries(nm, exo[:, c]) for c, nm in enumerate(names)), seed=doc["seed"]["value"],
    )
    graph = read_edges(doc["layers"]["edges"], config.n)
    return config, graph, exo, names


def population_from_files(files: dict, n: int, ss: StateSpace) -> tuple[Population, np.ndarray]:
    """Population from ``attributes.csv`` and ``modifiers.csv`` (either optional)."""
    if "attributes" in files:
        attrs, names = read_matrix(files["attributes"])
    else:
        attrs, names = np.zeros((n, 0)), ()
    if "modifiers" in files:
        mods, cols = read_matrix(files["modifiers"])
        if tuple(cols) != tuple(ss.transition_labels()):
            raise ValueError("modifier columns must follow the transition order")
    else:
        mods = np.ones((n, ss.n_transitions))
    return Population(attribute_names=tuple(names), attributes=attrs, modifiers=mods), attrs


__all__ += ["scenario_config_from_doc", "population_from_files"]
